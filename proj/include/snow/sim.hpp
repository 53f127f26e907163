#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

namespace snow {

/// Simulated time in milliseconds. Decoupled from wall time.
using SimTime = double;

struct SimLogRecord {
    SimTime time_ms = 0;
    std::uint64_t ordinal = 0;
    std::string actor;
    std::string action;
    std::string detail;
};

/// Single-threaded discrete-event engine. Events run in strict
/// (time, ordinal) order; the ordinal is assigned at scheduling time so
/// same-time events execute in the order they were scheduled.
class SimEngine {
public:
    using Action = std::function<void()>;

    SimTime now() const { return now_; }

    void schedule_at(SimTime t, Action action) {
        if (t < now_) {
            throw std::invalid_argument("SimEngine: cannot schedule event in the past (t=" +
                                        std::to_string(t) + " now=" + std::to_string(now_) + ")");
        }
        queue_.push(Event{t, next_ordinal_++, std::move(action)});
    }

    void schedule_after(SimTime delay, Action action) { schedule_at(now_ + delay, std::move(action)); }

    bool empty() const { return queue_.empty(); }
    std::size_t pending() const { return queue_.size(); }

    /// Executes the next event. Returns false when the queue is empty
    /// (simulation end).
    bool step() {
        if (queue_.empty()) return false;
        Event ev = std::move(const_cast<Event&>(queue_.top()));
        queue_.pop();
        now_ = ev.time;
        ev.action();
        return true;
    }

    void run_all() {
        while (step()) {
        }
    }

    /// Runs events with time <= t, then advances the clock to exactly t.
    void run_until(SimTime t) {
        while (!queue_.empty() && queue_.top().time <= t) step();
        if (t > now_) now_ = t;
    }

    /// Runs until `done()` or the horizon. Returns true if done() held.
    bool run_while(const std::function<bool()>& done, SimTime horizon) {
        while (!done()) {
            if (queue_.empty() || queue_.top().time > horizon) {
                if (now_ < horizon) now_ = horizon;
                return done();
            }
            step();
        }
        return true;
    }

    void log(std::string actor, std::string action, std::string detail = {}) {
        if (!logging_) return;
        log_.push_back(SimLogRecord{now_, next_log_ordinal_++, std::move(actor), std::move(action), std::move(detail)});
    }

    void set_logging(bool on) { logging_ = on; }
    const std::vector<SimLogRecord>& event_log() const { return log_; }

    /// Debug dump: CSV `time_ms,ordinal,actor,action,detail`.
    std::string dump_log_csv() const;

private:
    struct Event {
        SimTime time;
        std::uint64_t ordinal;
        Action action;
        bool operator>(const Event& o) const {
            if (time != o.time) return time > o.time;
            return ordinal > o.ordinal;
        }
    };

    std::priority_queue<Event, std::vector<Event>, std::greater<Event>> queue_;
    SimTime now_ = 0;
    std::uint64_t next_ordinal_ = 0;
    std::uint64_t next_log_ordinal_ = 0;
    bool logging_ = false;
    std::vector<SimLogRecord> log_;
};

}  // namespace snow
