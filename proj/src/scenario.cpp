#include "snow/scenario.hpp"

#include <json.hpp>

#include "snow/rng.hpp"

namespace snow {

using nlohmann::json;

namespace {

NatClass nat_from_string(const std::string& s, const std::string& path) {
    if (s == "open") return NatClass::open;
    if (s == "punchable") return NatClass::punchable;
    if (s == "symmetric") return NatClass::symmetric;
    throw std::invalid_argument(path + ": unknown NAT class '" + s + "'");
}

json link_to_json(const LinkModel& l) {
    return json{{"base_latency_ms", l.base_latency_ms},
                {"jitter_stddev_ms", l.jitter_stddev_ms},
                {"loss_prob", l.loss_prob},
                {"bandwidth_kbps", l.bandwidth_kbps}};
}

LinkModel link_from_json(const json& j, const std::string& path) {
    LinkModel l;
    try {
        l.base_latency_ms = j.at("base_latency_ms").get<double>();
        l.jitter_stddev_ms = j.at("jitter_stddev_ms").get<double>();
        l.loss_prob = j.at("loss_prob").get<double>();
        l.bandwidth_kbps = j.at("bandwidth_kbps").get<double>();
    } catch (const json::exception& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
    return l;
}

}  // namespace

void ScenarioConfig::validate() const {
    if (peers.empty()) throw std::invalid_argument("peers: must not be empty");
    for (std::size_t i = 0; i < peers.size(); ++i) {
        const auto& p = peers[i];
        std::string path = "peers[" + std::to_string(i) + "]";
        if (p.id.empty()) throw std::invalid_argument(path + ".id: must not be empty");
        if (p.cpu_capacity <= 0) {
            throw std::invalid_argument(path + ".cpu_capacity: must be > 0");
        }
        if (p.link.loss_prob < 0 || p.link.loss_prob > 1) {
            throw std::invalid_argument(path + ".link.loss_prob: must be in [0,1]");
        }
        if (p.link.base_latency_ms < 0) {
            throw std::invalid_argument(path + ".link.base_latency_ms: must be >= 0");
        }
        for (std::size_t k = 0; k < i; ++k) {
            if (peers[k].id == p.id) throw std::invalid_argument(path + ".id: duplicate peer id");
        }
    }
    auto known = [&](const PeerId& id) {
        for (const auto& p : peers) {
            if (p.id == id) return true;
        }
        return false;
    };
    if (!known(initiator)) throw std::invalid_argument("roster.initiator: unknown peer");
    for (std::size_t i = 0; i < others.size(); ++i) {
        if (!known(others[i])) {
            throw std::invalid_argument("roster.others[" + std::to_string(i) + "]: unknown peer");
        }
    }
    if (models.empty()) throw std::invalid_argument("models: must not be empty");
    for (std::size_t i = 0; i < models.size(); ++i) {
        CallPlan plan;
        plan.call_id = CallId{"arity-check"};
        plan.model = models[i];
        plan.initiator = initiator;
        plan.others = others;
        try {
            plan.validate();
        } catch (const std::exception& e) {
            throw std::invalid_argument("models[" + std::to_string(i) + "]: " + e.what());
        }
    }
    if (warmup_s < 0) throw std::invalid_argument("warmup_s: must be >= 0");
    if (measure_s <= 0) throw std::invalid_argument("measure_s: must be > 0");
    if (seeds.empty()) throw std::invalid_argument("seeds: must not be empty");
    if (media.video_fps <= 0) throw std::invalid_argument("media.video_fps: must be > 0");
    if (media.packet_bytes == 0) throw std::invalid_argument("media.packet_bytes: must be > 0");
    bool any_symmetric = false;
    for (const auto& p : peers) {
        if (p.nat == NatClass::symmetric) any_symmetric = true;
    }
    if (any_symmetric && !relay) {
        throw std::invalid_argument("relay: required when any peer is behind a symmetric NAT");
    }
}

const ScenarioConfig::Peer& ScenarioConfig::peer(const PeerId& id) const {
    for (const auto& p : peers) {
        if (p.id == id) return p;
    }
    throw std::invalid_argument("unknown peer: " + id.value);
}

std::string ScenarioConfig::to_json() const {
    json j;
    j["name"] = name;
    j["peers"] = json::array();
    for (const auto& p : peers) {
        j["peers"].push_back(json{{"id", p.id.value},
                                  {"nat", to_string(p.nat)},
                                  {"link", link_to_json(p.link)},
                                  {"cpu_capacity", p.cpu_capacity}});
    }
    if (relay) j["relay"] = json{{"link", link_to_json(*relay)}};
    j["models"] = json::array();
    for (auto m : models) j["models"].push_back(to_string(m));
    j["roster"] = json{{"initiator", initiator.value}, {"others", json::array()}};
    for (const auto& o : others) j["roster"]["others"].push_back(o.value);
    j["durations"] = json{{"warmup_s", warmup_s}, {"measure_s", measure_s}};
    j["seeds"] = seeds;
    j["media"] = json{{"video_fps", media.video_fps},
                      {"video_frame_bytes", media.video_frame_bytes},
                      {"video_extra_source_bytes", media.video_extra_source_bytes},
                      {"packet_bytes", media.packet_bytes},
                      {"audio_packets_per_s", media.audio_packets_per_s},
                      {"audio_packet_bytes", media.audio_packet_bytes},
                      {"cost_video_encode", media.cost_video_encode},
                      {"cost_video_encode_extra_source", media.cost_video_encode_extra_source},
                      {"cost_video_decode", media.cost_video_decode},
                      {"cost_compose_per_source", media.cost_compose_per_source},
                      {"cost_audio", media.cost_audio}};
    j["thresholds"] = json{{"delays_capture_to_render_ms", thresholds.delays_capture_to_render_ms},
                           {"high_cpu_utilization", thresholds.high_cpu_utilization},
                           {"high_cpu_sustain_s", thresholds.high_cpu_sustain_s},
                           {"slow_connect_ratio", thresholds.slow_connect_ratio}};
    j["audio_excludes_self"] = audio_excludes_self;
    j["media_trace"] = record_media_trace;
    return j.dump(2) + "\n";
}

ScenarioConfig ScenarioConfig::from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw std::invalid_argument("config: invalid JSON");
    ScenarioConfig cfg;
    try {
        cfg.name = j.value("name", "scenario");
        if (!j.contains("peers") || !j["peers"].is_array()) {
            throw std::invalid_argument("peers: missing or not an array");
        }
        for (std::size_t i = 0; i < j["peers"].size(); ++i) {
            const auto& pj = j["peers"][i];
            std::string path = "peers[" + std::to_string(i) + "]";
            Peer p;
            p.id = PeerId{pj.at("id").get<std::string>()};
            p.nat = nat_from_string(pj.value("nat", "open"), path + ".nat");
            p.link = link_from_json(pj.at("link"), path + ".link");
            p.cpu_capacity = pj.at("cpu_capacity").get<double>();
            cfg.peers.push_back(std::move(p));
        }
        if (j.contains("relay")) cfg.relay = link_from_json(j["relay"].at("link"), "relay.link");
        if (!j.contains("models")) throw std::invalid_argument("models: missing");
        for (std::size_t i = 0; i < j["models"].size(); ++i) {
            auto m = topology_from_string(j["models"][i].get<std::string>());
            if (!m) {
                throw std::invalid_argument("models[" + std::to_string(i) + "]: unknown model '" +
                                            j["models"][i].get<std::string>() + "'");
            }
            cfg.models.push_back(*m);
        }
        cfg.initiator = PeerId{j.at("roster").at("initiator").get<std::string>()};
        for (const auto& o : j.at("roster").at("others")) {
            cfg.others.push_back(PeerId{o.get<std::string>()});
        }
        cfg.warmup_s = j.at("durations").at("warmup_s").get<double>();
        cfg.measure_s = j.at("durations").at("measure_s").get<double>();
        cfg.seeds.clear();
        for (const auto& s : j.at("seeds")) cfg.seeds.push_back(s.get<std::uint64_t>());
        if (j.contains("media")) {
            const auto& mj = j["media"];
            cfg.media.video_fps = mj.value("video_fps", cfg.media.video_fps);
            cfg.media.video_frame_bytes = mj.value("video_frame_bytes", cfg.media.video_frame_bytes);
            cfg.media.video_extra_source_bytes =
                mj.value("video_extra_source_bytes", cfg.media.video_extra_source_bytes);
            cfg.media.packet_bytes = mj.value("packet_bytes", cfg.media.packet_bytes);
            cfg.media.audio_packets_per_s =
                mj.value("audio_packets_per_s", cfg.media.audio_packets_per_s);
            cfg.media.audio_packet_bytes =
                mj.value("audio_packet_bytes", cfg.media.audio_packet_bytes);
            cfg.media.cost_video_encode = mj.value("cost_video_encode", cfg.media.cost_video_encode);
            cfg.media.cost_video_encode_extra_source =
                mj.value("cost_video_encode_extra_source", cfg.media.cost_video_encode_extra_source);
            cfg.media.cost_video_decode = mj.value("cost_video_decode", cfg.media.cost_video_decode);
            cfg.media.cost_compose_per_source =
                mj.value("cost_compose_per_source", cfg.media.cost_compose_per_source);
            cfg.media.cost_audio = mj.value("cost_audio", cfg.media.cost_audio);
        }
        if (j.contains("thresholds")) {
            const auto& tj = j["thresholds"];
            cfg.thresholds.delays_capture_to_render_ms =
                tj.value("delays_capture_to_render_ms", cfg.thresholds.delays_capture_to_render_ms);
            cfg.thresholds.high_cpu_utilization =
                tj.value("high_cpu_utilization", cfg.thresholds.high_cpu_utilization);
            cfg.thresholds.high_cpu_sustain_s =
                tj.value("high_cpu_sustain_s", cfg.thresholds.high_cpu_sustain_s);
            cfg.thresholds.slow_connect_ratio =
                tj.value("slow_connect_ratio", cfg.thresholds.slow_connect_ratio);
        }
        cfg.audio_excludes_self = j.value("audio_excludes_self", false);
        cfg.record_media_trace = j.value("media_trace", false);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::uint64_t ScenarioConfig::config_hash() const { return fnv1a64(to_json()); }

ScenarioConfig reference_3party() {
    ScenarioConfig cfg;
    cfg.name = "reference-3party";

    ScenarioConfig::Peer initiator;
    initiator.id = PeerId{"mbp2022"};
    initiator.link = LinkModel{20.0, 4.0, 0.002, 100000.0};
    initiator.cpu_capacity = 400.0;

    ScenarioConfig::Peer second;
    second.id = PeerId{"mbp2016"};
    second.link = LinkModel{20.0, 4.0, 0.002, 100000.0};
    second.cpu_capacity = 300.0;

    ScenarioConfig::Peer constrained;
    constrained.id = PeerId{"nuc"};
    constrained.link = LinkModel{5.0, 0.5, 0.0005, 300000.0};
    constrained.cpu_capacity = 80.0;

    cfg.peers = {initiator, second, constrained};
    cfg.relay = LinkModel{10.0, 1.0, 0.0005, 1000000.0};
    cfg.models = {TopologyModel::MESH, TopologyModel::SFU, TopologyModel::MCU,
                  TopologyModel::MCUTWO, TopologyModel::MCUMULTI};
    cfg.initiator = initiator.id;
    cfg.others = {second.id, constrained.id};
    cfg.warmup_s = 10.0;
    cfg.measure_s = 30.0;
    cfg.seeds = {1, 2, 3, 4, 5};
    return cfg;
}

}  // namespace snow
