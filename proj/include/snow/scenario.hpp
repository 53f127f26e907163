#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "snow/media.hpp"
#include "snow/net.hpp"
#include "snow/stats.hpp"
#include "snow/topology.hpp"

namespace snow {

/// Everything one experiment needs: peers, links, roster, models, windows,
/// seeds, media constants and flag thresholds. Validation reports the
/// offending field by path.
struct ScenarioConfig {
    std::string name = "scenario";

    struct Peer {
        PeerId id;
        NatClass nat = NatClass::open;
        LinkModel link;
        double cpu_capacity = 100.0;
    };
    std::vector<Peer> peers;
    std::optional<LinkModel> relay;

    std::vector<TopologyModel> models;
    PeerId initiator;
    std::vector<PeerId> others;  // second party first, constrained party last

    double warmup_s = 10.0;
    double measure_s = 30.0;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

    MediaConstants media;
    QualitativeThresholds thresholds;
    bool audio_excludes_self = false;
    bool record_media_trace = false;  // per-packet event CSVs alongside results

    void validate() const;  // throws std::invalid_argument with a field path

    const Peer& peer(const PeerId& id) const;
    PeerId constrained_peer() const { return others.empty() ? initiator : others.back(); }

    std::string to_json() const;
    static ScenarioConfig from_json(const std::string& text);

    /// FNV-1a hash of the canonical JSON form; stamped into every artifact.
    std::uint64_t config_hash() const;
};

/// The calibrated three-party desk scenario: a strong initiator and second
/// peer on jittery Wi-Fi-like links, a weak constrained peer on a clean
/// Ethernet-like link, relay unused.
ScenarioConfig reference_3party();

}  // namespace snow
