#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "snow/bus.hpp"
#include "snow/cpu.hpp"
#include "snow/ids.hpp"
#include "snow/jitter_buffer.hpp"
#include "snow/media.hpp"
#include "snow/merge.hpp"
#include "snow/net.hpp"
#include "snow/sdp.hpp"
#include "snow/sim.hpp"
#include "snow/stats.hpp"
#include "snow/topology.hpp"
#include "snow/trace.hpp"

namespace snow {

/// Executes one multi-party call: the chosen establishment procedure as a
/// deterministic state machine over the in-sim signaling bus, plus the full
/// media plane (capture, encode, transmit, jitter buffer, decode, render)
/// with per-peer CPU accounting.
class CallRuntime {
public:
    struct Config {
        MediaConstants media;
        double start_delay_ms = 100;        // lets registrations settle before the first offer
        double establish_timeout_ms = 30000;
        double offer_stagger_ms = 1.0;      // gap between sequentially issued offers
        bool audio_excludes_self = false;   // merge-owner option: per-consumer audio mix minus self
        bool record_trace = true;
        bool record_media_trace = false;    // per-packet event log, sizeable
    };

    struct Obligation {
        std::string attribute;  // x-snow-* attribute that created it
        PeerId holder;
        std::string value;
        int discharged = 0;
    };

    struct ConnectionInfo {
        ConnectionId id;
        ConnPhase phase = ConnPhase::idle;
        SimTime offered_ts = -1;
        SimTime answered_ts = -1;
        SimTime caller_connected_ts = -1;
        SimTime callee_connected_ts = -1;
        SimTime closed_ts = -1;
        double setup_duration_ms = -1;  // offer sent -> caller connected
    };

    struct PipelineStats {
        ConnectionId conn;
        TrackId track;
        TrackKind kind = TrackKind::video;
        PeerId origin;
        InboundTrackStats stats;
        std::vector<StatsSample> samples;
        std::vector<PeerId> last_render_composition;
        std::uint64_t packets_sent = 0;  // matching sender-side counter
        std::uint64_t network_dropped = 0;
        std::uint64_t jb_late_lost = 0;
        std::uint64_t jb_gap_lost = 0;
        std::uint64_t jb_queued = 0;
        std::uint64_t jb_emitted = 0;
        std::uint64_t sender_dropped_frames = 0;
    };

    CallRuntime(SimEngine& engine, Network& network, InSimBus& bus, CallPlan plan, Config config);
    ~CallRuntime();

    CallRuntime(const CallRuntime&) = delete;
    CallRuntime& operator=(const CallRuntime&) = delete;

    /// Registers peers, runs the establishment procedure, and drives the
    /// engine until every media path of the model carries media (or abort).
    struct EstablishResult {
        bool ok = false;
        std::string error;
    };
    EstablishResult establish();

    /// Schedules the procedure without driving the engine (tests step time
    /// themselves via run_for).
    void start();

    /// Drives the simulation for `ms` more simulated milliseconds.
    void run_for(SimTime ms);

    /// Begins teardown for `leaver`; the call continues only when the
    /// initiator is still present and at least two parties remain.
    void hangup(const PeerId& leaver);

    /// Adds a participant to an established MCUMULTI call.
    void add_party(const PeerId& newcomer);

    ConnectionCensus census() const;
    const Trace& trace() const;
    const StreamTable& streams() const;

    bool established() const;
    bool aborted() const;
    const std::string& abort_reason() const;
    bool call_active() const;

    SimTime first_offer_ts() const;
    std::optional<SimTime> all_media_flowing_ts() const;
    /// Longest single-connection setup (offer -> caller connected) in ms.
    double max_connection_setup_ms() const;

    std::vector<ConnectionInfo> connections() const;
    std::vector<Obligation> obligations() const;

    const CpuLedger& cpu_ledger(const PeerId& peer) const;
    std::uint64_t sender_drops(const PeerId& peer) const;

    /// Union of what `peer` currently sees across rendered inbound tracks.
    Composition received_composition(const PeerId& peer, TrackKind kind) const;
    /// Inbound pipelines of one peer (tests inspect track counts and stats).
    std::vector<PipelineStats> inbound_pipelines(const PeerId& peer) const;

    /// Remote view stream a peer holds for a given origin, if any.
    std::optional<StreamId> remote_view_of(const PeerId& holder, const PeerId& origin) const;
    StreamId local_stream_of(const PeerId& peer) const;

    std::vector<PeerId> active_parties() const;

    /// Capture-to-render latency mean for a peer's video over [from, to) s.
    std::optional<double> mean_capture_to_render_ms(const PeerId& peer, double from_s,
                                                    double to_s) const;

    /// Per-peer media event log as CSV
    /// `time_ms,peer,track,event,rtp_seq,residency_ms` (requires
    /// Config::record_media_trace).
    std::string media_trace_csv() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace snow
