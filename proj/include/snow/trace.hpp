#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "snow/ids.hpp"
#include "snow/sim.hpp"

namespace snow {

/// One line of a call trace:
///   t=<sim-ms> dir=<from>-><to> kind=<offer|answer|ice|bye|media-action> detail=<...>
struct TraceRecord {
    SimTime t_ms = 0;
    PeerId from;
    PeerId to;
    std::string kind;
    std::string detail;

    std::string format() const {
        char tbuf[32];
        std::snprintf(tbuf, sizeof(tbuf), "%.3f", t_ms);
        return "t=" + std::string(tbuf) + " dir=" + from.value + "->" + to.value + " kind=" + kind +
               " detail=" + detail;
    }
};

class Trace {
public:
    void add(SimTime t, const PeerId& from, const PeerId& to, std::string kind, std::string detail) {
        records_.push_back(TraceRecord{t, from, to, std::move(kind), std::move(detail)});
    }

    const std::vector<TraceRecord>& records() const { return records_; }

    std::string to_text() const {
        std::string out;
        for (const auto& r : records_) {
            out += r.format();
            out += '\n';
        }
        return out;
    }

private:
    std::vector<TraceRecord> records_;
};

}  // namespace snow
