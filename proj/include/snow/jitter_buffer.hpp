#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>

#include "snow/media.hpp"
#include "snow/sim.hpp"

namespace snow {

/// Interarrival jitter recurrence: J' = J + (|D| - J)/16 with
/// D = (arrival_now - arrival_prev) - (capture_now - capture_prev).
/// Units follow the inputs (this project feeds milliseconds).
inline double jitter_update(double jitter, SimTime arrival_prev, SimTime capture_prev,
                            SimTime arrival_now, SimTime capture_now) {
    double d = (arrival_now - arrival_prev) - (capture_now - capture_prev);
    return jitter + (std::abs(d) - jitter) / 16.0;
}

/// Adaptive playout target: 4x the smoothed jitter estimate, clamped to
/// [20, 500] ms, re-evaluated once per second by the owner.
inline double adapt_target_delay(double jitter_estimate_ms) {
    double target = 4.0 * jitter_estimate_ms;
    if (target < 20.0) target = 20.0;
    if (target > 500.0) target = 500.0;
    return target;
}

struct JitterBufferConfig {
    double initial_target_ms = 20.0;
};

/// Receive-side playout queue for one track.
///
/// Discipline: the buffer keeps a transit floor (minimum observed
/// arrival - capture). A packet's playout deadline is
///     max(arrival, capture + transit_floor + target)
/// so a packet that arrives along the fastest path observed so far sits in
/// the buffer for exactly `target`. Emission is strictly rtp_seq ordered;
/// a sequence number still missing when a later packet's deadline fires is
/// counted lost, as is a packet that arrives behind the playout point.
class JitterBuffer {
public:
    using EmitFn = std::function<void(const MediaPacket&, SimTime arrival, SimTime playout)>;
    using LossFn = std::function<void(std::uint64_t rtp_seq)>;

    JitterBuffer(SimEngine& engine, JitterBufferConfig cfg = {})
        : engine_(engine), target_delay_ms_(cfg.initial_target_ms) {}

    void set_emit(EmitFn fn) { emit_ = std::move(fn); }
    void set_loss(LossFn fn) { on_loss_ = std::move(fn); }

    double target_delay_ms() const { return target_delay_ms_; }
    void set_target_delay_ms(double t) { target_delay_ms_ = t; }
    double transit_floor_ms() const { return transit_floor_; }

    double cumulative_buffer_delay_s() const { return cumulative_delay_ms_ / 1000.0; }
    std::uint64_t emitted_count() const { return emitted_; }
    std::uint64_t lost_count() const { return late_lost_ + gap_lost_; }
    std::uint64_t late_lost_count() const { return late_lost_; }  // arrived behind the playout point
    std::uint64_t gap_lost_count() const { return gap_lost_; }    // never arrived by deadline
    std::size_t queued() const { return pending_.size(); }

    void on_packet(const MediaPacket& pkt, SimTime arrival) {
        double transit = arrival - pkt.capture_ts;
        if (!have_floor_ || transit < transit_floor_) {
            transit_floor_ = transit;
            have_floor_ = true;
        }
        if (pkt.rtp_seq < next_seq_) {
            // Behind the playout point: too late to play.
            ++late_lost_;
            if (on_loss_) on_loss_(pkt.rtp_seq);
            return;
        }
        SimTime deadline = pkt.capture_ts + transit_floor_ + target_delay_ms_;
        if (deadline < arrival) deadline = arrival;
        pending_.emplace(pkt.rtp_seq, Entry{pkt, arrival, deadline});
        engine_.schedule_at(deadline, [this, seq = pkt.rtp_seq] { on_deadline(seq); });
    }

private:
    struct Entry {
        MediaPacket pkt;
        SimTime arrival;
        SimTime deadline;
    };

    void on_deadline(std::uint64_t seq) {
        auto it = pending_.find(seq);
        if (it == pending_.end()) return;  // already emitted by an earlier deadline
        if (it->second.deadline > engine_.now()) return;

        // Everything missing before this packet has now missed its chance.
        while (next_seq_ < seq) {
            if (auto p = pending_.find(next_seq_); p != pending_.end()) {
                emit_entry(p->second);
                pending_.erase(p);
            } else {
                ++gap_lost_;
                if (on_loss_) on_loss_(next_seq_);
            }
            ++next_seq_;
        }
        emit_entry(it->second);
        pending_.erase(it);
        ++next_seq_;

        // Emit any directly following packets whose deadline already passed.
        while (true) {
            auto p = pending_.find(next_seq_);
            if (p == pending_.end() || p->second.deadline > engine_.now()) break;
            emit_entry(p->second);
            pending_.erase(p);
            ++next_seq_;
        }
    }

    void emit_entry(const Entry& e) {
        SimTime playout = engine_.now();
        cumulative_delay_ms_ += playout - e.arrival;
        ++emitted_;
        if (emit_) emit_(e.pkt, e.arrival, playout);
    }

    SimEngine& engine_;
    double target_delay_ms_;
    double transit_floor_ = 0;
    bool have_floor_ = false;
    std::map<std::uint64_t, Entry> pending_;
    std::uint64_t next_seq_ = 0;
    double cumulative_delay_ms_ = 0;
    std::uint64_t emitted_ = 0;
    std::uint64_t late_lost_ = 0;
    std::uint64_t gap_lost_ = 0;
    EmitFn emit_;
    LossFn on_loss_;
};

}  // namespace snow
