#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "snow/ids.hpp"
#include "snow/sim.hpp"

namespace snow {

enum class TopologyModel { MESH, SFU, MCU, MCUTWO, MCUMULTI };

inline const char* to_string(TopologyModel m) {
    switch (m) {
        case TopologyModel::MESH: return "MESH";
        case TopologyModel::SFU: return "SFU";
        case TopologyModel::MCU: return "MCU";
        case TopologyModel::MCUTWO: return "MCUTWO";
        case TopologyModel::MCUMULTI: return "MCUMULTI";
    }
    return "?";
}

std::optional<TopologyModel> topology_from_string(const std::string& s);

inline constexpr int kMaxParties = 9;

/// Which model a call uses and who participates. `others` is ordered:
/// second party first, the patient/constrained party last.
struct CallPlan {
    CallId call_id;
    TopologyModel model = TopologyModel::MESH;
    PeerId initiator;
    std::vector<PeerId> others;

    struct FaultInjection {
        bool omit_expect_call = false;  // makes the mesh third-party offer arrive unannounced
    };
    FaultInjection faults;

    std::size_t party_count() const { return others.size() + 1; }

    /// Arity rules: MESH/SFU/MCU/MCUTWO take exactly 3 parties,
    /// MCUMULTI 3..9.
    void validate() const {
        if (initiator.empty()) throw std::invalid_argument("call plan: initiator missing");
        for (const auto& o : others) {
            if (o == initiator) throw std::invalid_argument("call plan: initiator listed in others");
        }
        for (std::size_t i = 0; i < others.size(); ++i) {
            for (std::size_t j = i + 1; j < others.size(); ++j) {
                if (others[i] == others[j]) {
                    throw std::invalid_argument("call plan: duplicate participant " + others[i].value);
                }
            }
        }
        std::size_t n = party_count();
        if (model == TopologyModel::MCUMULTI) {
            if (n < 3 || n > kMaxParties) {
                throw std::invalid_argument(std::string(to_string(model)) + " requires 3.." +
                                            std::to_string(kMaxParties) + " parties, got " +
                                            std::to_string(n));
            }
        } else if (n != 3) {
            throw std::invalid_argument(std::string(to_string(model)) +
                                        " requires exactly 3 parties, got " + std::to_string(n));
        }
    }
};

enum class ConnPhase { idle, offered, answered, ice, connected, closed };

inline const char* to_string(ConnPhase p) {
    switch (p) {
        case ConnPhase::idle: return "idle";
        case ConnPhase::offered: return "offered";
        case ConnPhase::answered: return "answered";
        case ConnPhase::ice: return "ice";
        case ConnPhase::connected: return "connected";
        case ConnPhase::closed: return "closed";
    }
    return "?";
}

/// Structural counters used by the scalability assertions.
struct ConnectionCensus {
    int total_connections = 0;
    std::map<PeerId, int> connections_per_peer;
    std::map<PeerId, int> video_encodes_per_peer;  // (attached video stream x connection) pairs
    std::map<PeerId, int> merges_per_peer;

    int connections_of(const PeerId& p) const {
        auto it = connections_per_peer.find(p);
        return it == connections_per_peer.end() ? 0 : it->second;
    }
    int video_encodes_of(const PeerId& p) const {
        auto it = video_encodes_per_peer.find(p);
        return it == video_encodes_per_peer.end() ? 0 : it->second;
    }
    int merges_of(const PeerId& p) const {
        auto it = merges_per_peer.find(p);
        return it == merges_per_peer.end() ? 0 : it->second;
    }
};

}  // namespace snow
