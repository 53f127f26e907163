#include "snow/net.hpp"

#include <sstream>

#include "snow/sim.hpp"

namespace snow {

IceOutcome ice_negotiate(const PeerProfile& a, const PeerProfile& b,
                         const std::optional<RelayNode>& relay, RngStream& rng) {
    IceOutcome out;
    out.route = route_select(a, b);

    double gather_a = rng.uniform(kGatherDelayMinMs, kGatherDelayMaxMs);
    double gather_b = rng.uniform(kGatherDelayMinMs, kGatherDelayMaxMs);
    out.duration_ms = gather_a + gather_b;

    int round_trips = out.route.kind == RouteKind::direct ? kIceRoundTripsDirect : kIceRoundTripsRelayed;
    for (int i = 0; i < round_trips; ++i) {
        double one_way = sample_one_way(a, b, relay, out.route, rng);
        double back = sample_one_way(b, a, relay, out.route, rng);
        out.duration_ms += one_way + back;
    }
    return out;
}

double sample_one_way(const PeerProfile& from, const PeerProfile& to,
                      const std::optional<RelayNode>& relay, const Route& route, RngStream& rng) {
    auto hop = [&rng](const LinkModel& link) {
        if (link.jitter_stddev_ms <= 0.0) return link.base_latency_ms;
        return rng.normal_nonneg(link.base_latency_ms, link.jitter_stddev_ms);
    };
    double lat = hop(from.link) + hop(to.link);
    if (route.kind == RouteKind::relayed && relay) {
        lat += hop(relay->link) + hop(relay->link);
    }
    return lat;
}

std::string SimEngine::dump_log_csv() const {
    std::ostringstream os;
    os << "time_ms,ordinal,actor,action,detail\n";
    for (const auto& r : log_) {
        os << r.time_ms << ',' << r.ordinal << ',' << r.actor << ',' << r.action << ',' << r.detail << '\n';
    }
    return os.str();
}

}  // namespace snow
