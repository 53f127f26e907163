#pragma once

#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "snow/ids.hpp"
#include "snow/rng.hpp"
#include "snow/sim.hpp"

namespace snow {

/// Access-link parameters of one peer (or the relay).
struct LinkModel {
    double base_latency_ms = 10.0;
    double jitter_stddev_ms = 0.0;  // truncated normal, samples clamped at 0
    double loss_prob = 0.0;         // Bernoulli per hop, media only
    double bandwidth_kbps = 100000.0;
};

enum class NatClass { open, punchable, symmetric };

inline const char* to_string(NatClass n) {
    switch (n) {
        case NatClass::open: return "open";
        case NatClass::punchable: return "punchable";
        case NatClass::symmetric: return "symmetric";
    }
    return "?";
}

struct PeerProfile {
    PeerId peer;
    NatClass nat = NatClass::open;
    LinkModel link;
    double cpu_capacity = 100.0;  // work units per simulated second, > 0
};

struct RelayNode {
    LinkModel link;
};

enum class RouteKind { direct, relayed };

struct Route {
    RouteKind kind = RouteKind::direct;
};

/// Direct iff neither endpoint sits behind a symmetric NAT; otherwise the
/// stream goes through the relay.
inline Route route_select(const PeerProfile& a, const PeerProfile& b) {
    if (a.nat == NatClass::symmetric || b.nat == NatClass::symmetric) {
        return Route{RouteKind::relayed};
    }
    return Route{RouteKind::direct};
}

struct IceOutcome {
    double duration_ms = 0;
    Route route;
};

/// One sampled one-way transit between two profiles on the given route.
double sample_one_way(const PeerProfile& from, const PeerProfile& to,
                      const std::optional<RelayNode>& relay, const Route& route, RngStream& rng);

inline constexpr double kGatherDelayMinMs = 50.0;
inline constexpr double kGatherDelayMaxMs = 200.0;
inline constexpr int kIceRoundTripsDirect = 2;
inline constexpr int kIceRoundTripsRelayed = 4;

/// Connectivity-negotiation duration for one fresh connection:
/// both endpoints' candidate gathering plus k round trips on the selected
/// path (k=2 direct, k=4 relayed). Deterministic given the stream.
IceOutcome ice_negotiate(const PeerProfile& a, const PeerProfile& b,
                         const std::optional<RelayNode>& relay, RngStream& rng);

/// Simulated network: per-peer full-duplex access links with FIFO
/// serialization, per-hop latency jitter and Bernoulli loss. Signaling
/// travels on ordered (TCP-like) channels and is never dropped; media is
/// unordered and lossy.
class Network {
public:
    Network(SimEngine& engine, const RngRegistry& rng) : engine_(engine), rng_(rng) {}

    void add_peer(const PeerProfile& profile) { profiles_[profile.peer] = profile; }
    void set_relay(const RelayNode& relay) { relay_ = relay; }

    const PeerProfile& profile(const PeerId& p) const {
        auto it = profiles_.find(p);
        if (it == profiles_.end()) throw std::invalid_argument("unknown peer: " + p.value);
        return it->second;
    }
    bool has_peer(const PeerId& p) const { return profiles_.count(p) > 0; }
    const std::optional<RelayNode>& relay() const { return relay_; }

    Route route_between(const PeerId& a, const PeerId& b) const {
        return route_select(profile(a), profile(b));
    }

    /// Expected one-way latency (no jitter), used for derived assertions.
    double mean_path_latency_ms(const PeerId& a, const PeerId& b) const {
        Route r = route_between(a, b);
        double lat = profile(a).link.base_latency_ms + profile(b).link.base_latency_ms;
        if (r.kind == RouteKind::relayed && relay_) lat += 2.0 * relay_->link.base_latency_ms;
        return lat;
    }

    /// One sampled one-way transit on the media path a->b.
    double sample_path_latency_ms(const PeerId& a, const PeerId& b) {
        Route r = route_between(a, b);
        double lat = sample_hop_latency(profile(a).link, lane_rng(a, "up")) +
                     sample_hop_latency(profile(b).link, lane_rng(b, "down"));
        if (r.kind == RouteKind::relayed && relay_) {
            auto& rr = lane_rng(PeerId{"__relay"}, "hop");
            lat += sample_hop_latency(relay_->link, rr) + sample_hop_latency(relay_->link, rr);
        }
        return lat;
    }

    /// Reliable ordered delivery (signaling). Latency is sampled per message
    /// but arrivals never reorder within one (from, to) channel.
    void send_signal(const PeerId& from, const PeerId& to, std::size_t bytes,
                     std::function<void()> on_delivery) {
        double transit = sample_hop_latency(profile(from).link, lane_rng(from, "sig-up")) +
                         sample_hop_latency(profile(to).link, lane_rng(to, "sig-down"));
        transit += serialize_ms(profile(from).link, bytes) + serialize_ms(profile(to).link, bytes);
        SimTime arrival = engine_.now() + transit;
        SimTime& last = ordered_arrival_[{from, to}];
        if (arrival < last) arrival = last;
        last = arrival;
        engine_.schedule_at(arrival, std::move(on_delivery));
    }

    struct MediaDelivery {
        bool delivered = false;
        SimTime arrival = 0;
    };

    /// Unordered lossy delivery (media packets). `on_delivery` runs only for
    /// packets that survive every hop; drops are reported to `on_drop` when
    /// set (used by conservation tests). Packets sharing a nonzero
    /// `burst_id` (one frame's packetization) see one latency draw per hop:
    /// a burst rides the same queue state, so it spreads by serialization
    /// alone while the jitter plays out between bursts.
    void send_media(const PeerId& from, const PeerId& to, std::size_t bytes,
                    std::function<void()> on_delivery, std::function<void()> on_drop = nullptr,
                    std::uint64_t burst_id = 0) {
        Route r = route_between(from, to);
        struct Hop {
            const LinkModel* link;
            PeerId owner;
            const char* lane;
        };
        std::vector<Hop> hops;
        hops.push_back({&profile(from).link, from, "up"});
        if (r.kind == RouteKind::relayed && relay_) {
            hops.push_back({&relay_->link, PeerId{"__relay"}, "in"});
            hops.push_back({&relay_->link, PeerId{"__relay"}, "out"});
        }
        hops.push_back({&profile(to).link, to, "down"});

        SimTime t = engine_.now();
        for (const Hop& h : hops) {
            auto& loss = lane_rng(h.owner, std::string(h.lane) + "-loss");
            if (loss.bernoulli(h.link->loss_prob)) {
                if (on_drop) engine_.schedule_at(t, std::move(on_drop));
                return;
            }
            // FIFO serialization on the lane, then propagation.
            SimTime& busy = lane_busy_[{h.owner, h.lane}];
            SimTime start = t > busy ? t : busy;
            double tx = serialize_ms(*h.link, bytes);
            busy = start + tx;
            t = busy + hop_latency(*h.link, h.owner, h.lane, burst_id);
        }
        engine_.schedule_at(t, std::move(on_delivery));
    }

    RngStream& named_rng(const std::string& label) {
        auto it = named_rngs_.find(label);
        if (it == named_rngs_.end()) {
            it = named_rngs_.emplace(label, rng_.stream(label)).first;
        }
        return it->second;
    }

private:
    static double serialize_ms(const LinkModel& link, std::size_t bytes) {
        if (link.bandwidth_kbps <= 0) return 0.0;
        return static_cast<double>(bytes) * 8.0 / link.bandwidth_kbps;
    }

    static double sample_hop_latency(const LinkModel& link, RngStream& rng) {
        if (link.jitter_stddev_ms <= 0.0) return link.base_latency_ms;
        return rng.normal_nonneg(link.base_latency_ms, link.jitter_stddev_ms);
    }

    RngStream& lane_rng(const PeerId& owner, const std::string& lane) {
        return named_rng("net:" + owner.value + ":" + lane);
    }

    double hop_latency(const LinkModel& link, const PeerId& owner, const std::string& lane,
                       std::uint64_t burst_id) {
        if (burst_id == 0) return sample_hop_latency(link, lane_rng(owner, lane));
        auto& cache = burst_cache_[{owner, lane}];
        if (cache.id != burst_id) {
            cache.id = burst_id;
            cache.draw = sample_hop_latency(link, lane_rng(owner, lane));
        }
        return cache.draw;
    }

    struct BurstDraw {
        std::uint64_t id = 0;
        double draw = 0;
    };

    SimEngine& engine_;
    RngRegistry rng_;
    std::map<PeerId, PeerProfile> profiles_;
    std::optional<RelayNode> relay_;
    std::map<std::pair<PeerId, std::string>, SimTime> lane_busy_;
    std::map<std::pair<PeerId, std::string>, BurstDraw> burst_cache_;
    std::map<std::pair<PeerId, PeerId>, SimTime> ordered_arrival_;
    std::map<std::string, RngStream> named_rngs_;
};

}  // namespace snow
