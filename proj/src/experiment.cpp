#include "snow/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "snow/bus.hpp"
#include "snow/call.hpp"
#include "snow/rng.hpp"

namespace snow {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::uint64_t run_master_seed(const ScenarioConfig& cfg, TopologyModel model, std::uint64_t seed) {
    // Independent deterministic stream per (scenario, model, seed).
    std::uint64_t h = cfg.config_hash();
    h ^= fnv1a64(to_string(model));
    std::uint64_t s = h ^ (seed * 0x9e3779b97f4a7c15ull);
    return splitmix64(s);
}

/// Per-peer view: cumulative counters pooled across the peer's video
/// pipelines, aligned on the shared per-second sampling clock.
std::map<PeerId, std::vector<StatsSample>> pool_video_samples(const CallRuntime& call,
                                                              const std::vector<PeerId>& peers) {
    std::map<PeerId, std::vector<StatsSample>> out;
    for (const auto& peer : peers) {
        std::map<double, StatsSample> by_t;
        std::map<double, int> jitter_n;
        for (const auto& pipe : call.inbound_pipelines(peer)) {
            if (pipe.kind != TrackKind::video) continue;
            for (const auto& s : pipe.samples) {
                StatsSample& agg = by_t[s.t_ms];
                agg.t_ms = s.t_ms;
                agg.packets_lost += s.packets_lost;
                agg.jitter_ms += s.jitter_ms;  // averaged below
                agg.jitter_buffer_delay_s += s.jitter_buffer_delay_s;
                agg.jb_emitted += s.jb_emitted;
                agg.total_inter_frame_delay_s += s.total_inter_frame_delay_s;
                agg.frames_rendered += s.frames_rendered;
                agg.capture_to_render_s += s.capture_to_render_s;
                jitter_n[s.t_ms]++;
            }
        }
        std::vector<StatsSample> seq;
        for (auto& [t, s] : by_t) {
            int n = jitter_n[t];
            if (n > 1) s.jitter_ms /= n;
            seq.push_back(s);
        }
        out[peer] = std::move(seq);
    }
    return out;
}

}  // namespace

RunResult run_single(const ScenarioConfig& config, TopologyModel model, std::uint64_t seed,
                     bool with_trace) {
    SimEngine engine;
    RngRegistry rng(run_master_seed(config, model, seed));
    Network network(engine, rng);
    for (const auto& p : config.peers) {
        PeerProfile prof;
        prof.peer = p.id;
        prof.nat = p.nat;
        prof.link = p.link;
        prof.cpu_capacity = p.cpu_capacity;
        network.add_peer(prof);
    }
    if (config.relay) network.set_relay(RelayNode{*config.relay});
    InSimBus bus(engine, network);

    CallPlan plan;
    plan.call_id = CallId{config.name + "-" + to_string(model) + "-s" + std::to_string(seed)};
    plan.model = model;
    plan.initiator = config.initiator;
    plan.others = config.others;

    CallRuntime::Config ccfg;
    ccfg.media = config.media;
    ccfg.audio_excludes_self = config.audio_excludes_self;
    ccfg.record_trace = with_trace;
    ccfg.record_media_trace = config.record_media_trace;

    CallRuntime call(engine, network, bus, plan, ccfg);
    auto est = call.establish();
    if (!est.ok) {
        throw std::runtime_error("establishment failed for " + std::string(to_string(model)) +
                                 " seed " + std::to_string(seed) + ": " + est.error);
    }

    double horizon_ms = (config.warmup_s + config.measure_s) * 1000.0 + 1500.0;
    if (engine.now() < horizon_ms) call.run_for(horizon_ms - engine.now());

    RunResult run;
    run.model = model;
    run.seed = seed;
    run.first_offer_ms = call.first_offer_ts();
    run.all_media_ms = call.all_media_flowing_ts().value_or(0);
    run.max_setup_ms = call.max_connection_setup_ms();
    if (with_trace) run.trace_text = call.trace().to_text();
    if (config.record_media_trace) run.media_trace_text = call.media_trace_csv();

    std::vector<PeerId> parties;
    parties.push_back(config.initiator);
    for (const auto& o : config.others) parties.push_back(o);
    auto pooled = pool_video_samples(call, parties);
    for (const auto& peer : parties) {
        for (Metric m : all_metrics()) {
            run.peer_stats[peer][m] =
                window_summarize(pooled.at(peer), m, config.warmup_s, config.measure_s);
        }
    }

    // Qualitative flags.
    const auto& th = config.thresholds;
    auto c2r = call.mean_capture_to_render_ms(config.constrained_peer(), config.warmup_s,
                                              config.warmup_s + config.measure_s);
    run.delays_value_ms = c2r.value_or(0);
    run.flags.delays = c2r && *c2r > th.delays_capture_to_render_ms;
    for (const auto& peer : parties) {
        if (call.cpu_ledger(peer).longest_overload_run(th.high_cpu_utilization) >=
            th.high_cpu_sustain_s) {
            run.flags.high_cpu = true;
            if (run.high_cpu_peer.empty()) run.high_cpu_peer = peer;
        }
        const CpuLedger& ledger = call.cpu_ledger(peer);
        double sum = 0;
        int n = 0;
        for (std::int64_t s = static_cast<std::int64_t>(config.warmup_s);
             s < static_cast<std::int64_t>(config.warmup_s + config.measure_s); ++s) {
            sum += ledger.utilization(s);
            n++;
        }
        run.mean_utilization[peer] = n > 0 ? sum / n : 0.0;
    }
    double setup = run.max_setup_ms;
    double window = run.all_media_ms - run.first_offer_ms;
    run.slow_connect_value = setup > 0 ? window / setup : 0;
    run.flags.slow_connect = setup > 0 && window >= th.slow_connect_ratio * setup;
    return run;
}

ExperimentResult run_experiment(const ScenarioConfig& config) {
    config.validate();
    ExperimentResult result;
    result.config = config;

    for (TopologyModel model : config.models) {
        int yes_delays = 0, yes_cpu = 0, yes_slow = 0;
        for (std::uint64_t seed : config.seeds) {
            RunResult run = run_single(config, model, seed);
            yes_delays += run.flags.delays ? 1 : 0;
            yes_cpu += run.flags.high_cpu ? 1 : 0;
            yes_slow += run.flags.slow_connect ? 1 : 0;
            result.runs.push_back(std::move(run));
        }
        int n = static_cast<int>(config.seeds.size());
        QualitativeFlags agg;
        agg.delays = 2 * yes_delays > n;
        agg.high_cpu = 2 * yes_cpu > n;
        agg.slow_connect = 2 * yes_slow > n;
        result.scenario_flags[model] = agg;
    }

    // Model-level values: average the per-peer window means over peers and seeds.
    for (TopologyModel model : config.models) {
        for (Metric m : all_metrics()) {
            double sum = 0;
            int n = 0;
            for (const auto& run : result.runs) {
                if (run.model != model) continue;
                for (const auto& [peer, stats] : run.peer_stats) {
                    sum += stats.at(m).mean;
                    n++;
                }
            }
            result.model_values[model][m] = n > 0 ? sum / n : 0.0;
        }
    }

    bool has_mesh = result.model_values.count(TopologyModel::MESH) > 0;
    if (has_mesh && config.models.size() > 1) {
        result.improvements_available = true;
        for (TopologyModel model : config.models) {
            if (model == TopologyModel::MESH) continue;
            for (Metric m : all_metrics()) {
                double mesh = result.model_values[TopologyModel::MESH][m];
                double val = result.model_values[model][m];
                if (mesh != 0.0) {
                    result.improvements[model][m] = improvement(mesh, val);
                }
            }
        }
    }
    return result;
}

void write_artifacts(const ExperimentResult& result, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const auto& cfg = result.config;
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(cfg.config_hash()));
    std::string header = "# scenario=" + cfg.name + " config_hash=" + hash + "\n";

    {
        std::ofstream f(fs::path(out_dir) / "results.csv", std::ios::binary);
        f << header << "model,seed,peer,metric,mean,stddev\n";
        for (const auto& run : result.runs) {
            std::vector<PeerId> parties{cfg.initiator};
            for (const auto& o : cfg.others) parties.push_back(o);
            for (const auto& peer : parties) {
                auto it = run.peer_stats.find(peer);
                if (it == run.peer_stats.end()) continue;
                for (Metric m : all_metrics()) {
                    const WindowStat& w = it->second.at(m);
                    f << to_string(run.model) << ',' << run.seed << ',' << peer.value << ','
                      << to_string(m) << ',' << fmt(w.mean) << ',' << fmt(w.stddev) << '\n';
                }
            }
        }
    }
    {
        std::ofstream f(fs::path(out_dir) / "improvement.csv", std::ios::binary);
        f << header << "model,metric,improvement\n";
        for (TopologyModel model : cfg.models) {
            auto it = result.improvements.find(model);
            if (it == result.improvements.end()) continue;
            for (Metric m : all_metrics()) {
                f << to_string(model) << ',' << to_string(m) << ',' << fmt(it->second.at(m)) << '\n';
            }
        }
    }
    {
        std::ofstream f(fs::path(out_dir) / "flags.csv", std::ios::binary);
        f << header << "model,delays,high_cpu,slow_connect\n";
        for (TopologyModel model : cfg.models) {
            const auto& fl = result.scenario_flags.at(model);
            f << to_string(model) << ',' << (fl.delays ? "YES" : "NO") << ','
              << (fl.high_cpu ? "YES" : "NO") << ',' << (fl.slow_connect ? "YES" : "NO") << '\n';
        }
    }
    {
        std::ofstream f(fs::path(out_dir) / "timing.csv", std::ios::binary);
        f << header << "model,seed,first_offer_ms,all_media_ms,max_setup_ms,slow_connect_value\n";
        for (const auto& run : result.runs) {
            f << to_string(run.model) << ',' << run.seed << ',' << fmt(run.first_offer_ms) << ','
              << fmt(run.all_media_ms) << ',' << fmt(run.max_setup_ms) << ','
              << fmt(run.slow_connect_value) << '\n';
        }
    }
    for (const auto& run : result.runs) {
        if (run.trace_text.empty()) continue;
        std::string name = "trace-" + std::string(to_string(run.model)) + "-seed" +
                           std::to_string(run.seed) + ".trace";
        std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
        f << header << run.trace_text;
    }
    for (const auto& run : result.runs) {
        if (run.media_trace_text.empty()) continue;
        std::string name = "media-trace-" + std::string(to_string(run.model)) + "-seed" +
                           std::to_string(run.seed) + ".csv";
        std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
        f << header << run.media_trace_text;
    }
}

std::vector<ResultRow> load_results_csv(const std::string& out_dir) {
    std::ifstream f(fs::path(out_dir) / "results.csv");
    if (!f) throw std::runtime_error("no results.csv in " + out_dir);
    std::vector<ResultRow> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("model,", 0) == 0) continue;
        std::istringstream is(line);
        ResultRow r;
        std::string seed, mean, stddev;
        std::getline(is, r.model, ',');
        std::getline(is, seed, ',');
        std::getline(is, r.peer, ',');
        std::getline(is, r.metric, ',');
        std::getline(is, mean, ',');
        std::getline(is, stddev, ',');
        r.seed = std::stoull(seed);
        r.mean = std::stod(mean);
        r.stddev = std::stod(stddev);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::map<std::string, QualitativeFlags> load_flags_csv(const std::string& out_dir) {
    std::ifstream f(fs::path(out_dir) / "flags.csv");
    if (!f) throw std::runtime_error("no flags.csv in " + out_dir);
    std::map<std::string, QualitativeFlags> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("model,", 0) == 0) continue;
        std::istringstream is(line);
        std::string model, d, c, s;
        std::getline(is, model, ',');
        std::getline(is, d, ',');
        std::getline(is, c, ',');
        std::getline(is, s, ',');
        out[model] = QualitativeFlags{d == "YES", c == "YES", s == "YES"};
    }
    return out;
}

std::string TrendReport::to_text() const {
    std::string out;
    for (const auto& l : lines) {
        out += "[" + l.status + "] " + l.name;
        if (!l.detail.empty()) out += " -- " + l.detail;
        out += "\n";
    }
    return out;
}

namespace {

TrendReport evaluate_trends(const std::vector<TopologyModel>& models,
                            const std::map<TopologyModel, std::map<Metric, double>>& model_values,
                            const std::map<TopologyModel, std::map<Metric, double>>& improvements,
                            const std::map<TopologyModel, QualitativeFlags>& flags,
                            bool zero_jitter) {
    TrendReport report;
    auto add = [&](const std::string& name, const std::string& status, const std::string& detail) {
        report.lines.push_back({name, status, detail});
        if (status == "FAIL") report.all_pass = false;
    };

    auto have = [&](TopologyModel m) {
        return std::find(models.begin(), models.end(), m) != models.end();
    };
    bool all_five = have(TopologyModel::MESH) && have(TopologyModel::SFU) &&
                    have(TopologyModel::MCU) && have(TopologyModel::MCUTWO) &&
                    have(TopologyModel::MCUMULTI);
    if (!all_five) {
        add("trend-evaluation", "SKIP", "needs all five models in the scenario");
        return report;
    }

    const std::vector<TopologyModel> non_mesh{TopologyModel::SFU, TopologyModel::MCU,
                                              TopologyModel::MCUTWO, TopologyModel::MCUMULTI};
    // (a) jitter and jitterBufferDelay improve over MESH for every model.
    for (Metric m : {Metric::jitter, Metric::jitterBufferDelay}) {
        std::string name = std::string("improvement>0:") + to_string(m);
        if (m == Metric::jitter && zero_jitter) {
            add(name, "SKIP", "links have zero jitter; metric not evaluable");
            continue;
        }
        bool pass = true;
        std::string detail;
        for (TopologyModel model : non_mesh) {
            double imp = improvements.at(model).at(m);
            detail += std::string(to_string(model)) + "=" + fmt(imp) + " ";
            if (!(imp > 0)) pass = false;
        }
        add(name, pass ? "PASS" : "FAIL", detail);
    }
    // (b) MCUTWO loses strictly fewest packets of all five models.
    {
        double best = model_values.at(TopologyModel::MCUTWO).at(Metric::packetsLost);
        bool pass = true;
        std::string detail = "MCUTWO=" + fmt(best) + " ";
        for (TopologyModel model :
             {TopologyModel::MESH, TopologyModel::SFU, TopologyModel::MCU, TopologyModel::MCUMULTI}) {
            double v = model_values.at(model).at(Metric::packetsLost);
            detail += std::string(to_string(model)) + "=" + fmt(v) + " ";
            if (!(best < v)) pass = false;
        }
        add("packetsLost:MCUTWO-strictly-lowest", pass ? "PASS" : "FAIL", detail);
    }
    // (c) SFU and MCU render smoother than MESH, MCUTWO and MCUMULTI.
    {
        double sfu = model_values.at(TopologyModel::SFU).at(Metric::totalInterFrameDelay);
        double mcu = model_values.at(TopologyModel::MCU).at(Metric::totalInterFrameDelay);
        bool pass = true;
        std::string detail = "SFU=" + fmt(sfu) + " MCU=" + fmt(mcu) + " ";
        for (TopologyModel model :
             {TopologyModel::MESH, TopologyModel::MCUTWO, TopologyModel::MCUMULTI}) {
            double v = model_values.at(model).at(Metric::totalInterFrameDelay);
            detail += std::string(to_string(model)) + "=" + fmt(v) + " ";
            if (!(sfu < v && mcu < v)) pass = false;
        }
        add("totalInterFrameDelay:SFU,MCU-lowest", pass ? "PASS" : "FAIL", detail);
    }
    // Qualitative matrix.
    {
        const std::map<TopologyModel, QualitativeFlags> expected{
            {TopologyModel::MESH, {true, true, false}},
            {TopologyModel::SFU, {false, false, true}},
            {TopologyModel::MCU, {false, false, true}},
            {TopologyModel::MCUTWO, {false, true, false}},
            {TopologyModel::MCUMULTI, {false, false, false}},
        };
        for (const auto& [model, exp] : expected) {
            const auto& got = flags.at(model);
            std::string name = std::string("flags:") + to_string(model);
            auto yn = [](bool b) { return b ? "YES" : "NO"; };
            std::string detail = std::string("delays=") + yn(got.delays) +
                                 " high_cpu=" + yn(got.high_cpu) +
                                 " slow_connect=" + yn(got.slow_connect);
            add(name, got == exp ? "PASS" : "FAIL", detail);
        }
    }
    return report;
}

}  // namespace

TrendReport check_trends(const ExperimentResult& result) {
    bool zero_jitter = true;
    for (const auto& p : result.config.peers) {
        if (p.link.jitter_stddev_ms > 0) zero_jitter = false;
    }
    return evaluate_trends(result.config.models, result.model_values, result.improvements,
                           result.scenario_flags, zero_jitter);
}

TrendReport check_trends_from_dir(const std::string& out_dir) {
    auto rows = load_results_csv(out_dir);
    auto flag_rows = load_flags_csv(out_dir);
    if (rows.empty()) throw std::runtime_error("results.csv has no data rows");

    std::vector<TopologyModel> models;
    std::map<TopologyModel, std::map<Metric, double>> sums;
    std::map<TopologyModel, std::map<Metric, int>> counts;
    for (const auto& r : rows) {
        auto model = topology_from_string(r.model);
        if (!model) continue;
        if (std::find(models.begin(), models.end(), *model) == models.end()) {
            models.push_back(*model);
        }
        for (Metric m : all_metrics()) {
            if (r.metric == to_string(m)) {
                sums[*model][m] += r.mean;
                counts[*model][m]++;
            }
        }
    }
    std::map<TopologyModel, std::map<Metric, double>> model_values;
    for (const auto& [model, per_metric] : sums) {
        for (const auto& [metric, sum] : per_metric) {
            model_values[model][metric] = sum / counts[model][metric];
        }
    }
    std::map<TopologyModel, std::map<Metric, double>> improvements;
    auto mesh_it = model_values.find(TopologyModel::MESH);
    if (mesh_it != model_values.end()) {
        for (const auto& [model, per_metric] : model_values) {
            if (model == TopologyModel::MESH) continue;
            for (const auto& [metric, value] : per_metric) {
                double mesh = mesh_it->second.at(metric);
                if (mesh != 0.0) improvements[model][metric] = improvement(mesh, value);
            }
        }
    }
    std::map<TopologyModel, QualitativeFlags> flags;
    for (const auto& [name, f] : flag_rows) {
        if (auto model = topology_from_string(name)) flags[*model] = f;
    }
    bool zero_jitter = true;
    for (const auto& [model, per_metric] : model_values) {
        auto it = per_metric.find(Metric::jitter);
        if (it != per_metric.end() && it->second > 1e-12) zero_jitter = false;
    }
    return evaluate_trends(models, model_values, improvements, flags, zero_jitter);
}

}  // namespace snow
