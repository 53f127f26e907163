#pragma once

#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "snow/ids.hpp"
#include "snow/sim.hpp"

namespace snow {

enum class CpuWork { encode, compose, decode };

inline const char* to_string(CpuWork w) {
    switch (w) {
        case CpuWork::encode: return "encode";
        case CpuWork::compose: return "compose";
        case CpuWork::decode: return "decode";
    }
    return "?";
}

/// Per-second demand accounting for one peer. Utilization is
/// demanded/capacity and may exceed 1 under overload.
struct CpuLedger {
    struct Window {
        double encode = 0;
        double compose = 0;
        double decode = 0;
        double total() const { return encode + compose + decode; }
    };

    double capacity = 0;
    std::map<std::int64_t, Window> per_second;  // second index -> demanded work

    void charge(SimTime now, CpuWork kind, double work) {
        auto& w = per_second[static_cast<std::int64_t>(now / 1000.0)];
        switch (kind) {
            case CpuWork::encode: w.encode += work; break;
            case CpuWork::compose: w.compose += work; break;
            case CpuWork::decode: w.decode += work; break;
        }
    }

    double utilization(std::int64_t second) const {
        auto it = per_second.find(second);
        if (it == per_second.end() || capacity <= 0) return 0.0;
        return it->second.total() / capacity;
    }

    /// Longest run of consecutive seconds with utilization above the
    /// threshold, in seconds.
    double longest_overload_run(double threshold) const {
        double best = 0, run = 0;
        std::int64_t prev_over = INT64_MIN;
        for (const auto& [sec, w] : per_second) {
            bool over = capacity > 0 && w.total() / capacity > threshold;
            if (!over) continue;
            run = (sec == prev_over + 1) ? run + 1 : 1;
            prev_over = sec;
            if (run > best) best = run;
        }
        return best;
    }
};

/// Single-server CPU model for one peer. Two priority classes: sender-side
/// work (encode, compose) preempts queued receive-side work (decode), the
/// way capture pipelines get real-time priority over rendering. Service is
/// non-preemptive; a busy decode job can delay the next encode by at most
/// its own service time. Sustained overload therefore shows up as a growing
/// decode backlog while outbound frames stay roughly on cadence.
///
/// Sender-side jobs carry the capture timestamp; a frame whose encode would
/// start more than `drop_after_ms` past capture is dropped at the sender.
class CpuScheduler {
public:
    using Completion = std::function<void(SimTime done_at)>;
    using DropNotify = std::function<void()>;

    CpuScheduler(SimEngine& engine, PeerId peer, double capacity, double drop_after_ms)
        : engine_(engine), peer_(std::move(peer)), drop_after_ms_(drop_after_ms) {
        ledger_.capacity = capacity;
    }

    const CpuLedger& ledger() const { return ledger_; }
    double capacity() const { return ledger_.capacity; }

    /// Sender-side (high priority, droppable once stale).
    void submit_send(CpuWork kind, double work, SimTime capture_ts, Completion on_done,
                     DropNotify on_drop = nullptr) {
        ledger_.charge(engine_.now(), kind, work);
        hi_.push_back(Job{kind, work, capture_ts, true, std::move(on_done), std::move(on_drop)});
        kick();
    }

    /// Receive-side (low priority, never dropped by the scheduler).
    void submit_receive(CpuWork kind, double work, Completion on_done) {
        ledger_.charge(engine_.now(), kind, work);
        lo_.push_back(Job{kind, work, 0, false, std::move(on_done), nullptr});
        kick();
    }

    std::size_t backlog() const { return hi_.size() + lo_.size(); }
    std::uint64_t sender_drops() const { return sender_drops_; }

private:
    struct Job {
        CpuWork kind;
        double work;
        SimTime capture_ts;
        bool droppable;
        Completion on_done;
        DropNotify on_drop;
    };

    void kick() {
        if (busy_) return;
        start_next();
    }

    void start_next() {
        while (true) {
            Job job;
            if (!hi_.empty()) {
                job = std::move(hi_.front());
                hi_.pop_front();
            } else if (!lo_.empty()) {
                job = std::move(lo_.front());
                lo_.pop_front();
            } else {
                busy_ = false;
                return;
            }
            if (job.droppable && drop_after_ms_ > 0 &&
                engine_.now() - job.capture_ts > drop_after_ms_) {
                sender_drops_++;
                if (job.on_drop) job.on_drop();
                continue;  // shed the stale frame, try the next job
            }
            busy_ = true;
            double service_ms = job.work / ledger_.capacity * 1000.0;
            engine_.schedule_after(service_ms, [this, done = std::move(job.on_done)] {
                if (done) done(engine_.now());
                start_next();
            });
            return;
        }
    }

    SimEngine& engine_;
    PeerId peer_;
    double drop_after_ms_;
    CpuLedger ledger_;
    std::deque<Job> hi_;
    std::deque<Job> lo_;
    bool busy_ = false;
    std::uint64_t sender_drops_ = 0;
};

}  // namespace snow
