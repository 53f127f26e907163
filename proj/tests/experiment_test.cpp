#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "snow/experiment.hpp"
#include "snow/scenario.hpp"
#include "snow/svg_plot.hpp"

using namespace snow;

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

ScenarioConfig quick_config() {
    ScenarioConfig cfg = reference_3party();
    cfg.warmup_s = 2.0;
    cfg.measure_s = 5.0;
    cfg.seeds = {1};
    return cfg;
}

}  // namespace

TEST_CASE("scenario config round-trips through JSON") {
    ScenarioConfig cfg = reference_3party();
    ScenarioConfig back = ScenarioConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
    CHECK(back.config_hash() == cfg.config_hash());
}

TEST_CASE("shipped reference config matches the built-in scenario") {
    fs::path path = fs::path(SNOW_GOLDEN_DIR).parent_path().parent_path() / "configs" /
                    "reference-3party.json";
    std::string text = slurp(path);
    REQUIRE_MESSAGE(!text.empty(), "missing ", path.string());
    CHECK(text == reference_3party().to_json());
}

TEST_CASE("config validation reports the offending field path") {
    ScenarioConfig cfg = reference_3party();
    cfg.peers[2].cpu_capacity = 0;
    try {
        cfg.validate();
        FAIL("expected validation to throw");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("peers[2].cpu_capacity") != std::string::npos);
    }

    ScenarioConfig arity = reference_3party();
    arity.others.pop_back();
    CHECK_THROWS_AS(arity.validate(), std::invalid_argument);

    ScenarioConfig nat = reference_3party();
    nat.peers[1].nat = NatClass::symmetric;
    nat.relay.reset();
    CHECK_THROWS_AS(nat.validate(), std::invalid_argument);

    CHECK_THROWS_AS(ScenarioConfig::from_json("{not json"), std::invalid_argument);
    CHECK_THROWS_AS(ScenarioConfig::from_json("{\"peers\":[]}"), std::invalid_argument);
}

TEST_CASE("a MESH-only run yields no improvement table") {
    ScenarioConfig cfg = quick_config();
    cfg.models = {TopologyModel::MESH};
    ExperimentResult result = run_experiment(cfg);
    CHECK_FALSE(result.improvements_available);
    CHECK(result.improvements.empty());

    fs::path out = fs::temp_directory_path() / "snow-mesh-only";
    fs::remove_all(out);
    write_artifacts(result, out.string());
    // Header only: nothing to compare against MESH.
    std::string imp = slurp(out / "improvement.csv");
    CHECK(imp.find("MESH") == std::string::npos);
    CHECK(imp.find("model,metric,improvement") != std::string::npos);
}

TEST_CASE("check skips the jitter trend on zero-jitter links") {
    ScenarioConfig cfg = quick_config();
    for (auto& p : cfg.peers) p.link.jitter_stddev_ms = 0.0;
    ExperimentResult result = run_experiment(cfg);
    TrendReport report = check_trends(result);
    bool skipped = false;
    for (const auto& l : report.lines) {
        if (l.name == "improvement>0:jitter") {
            CHECK(l.status == "SKIP");
            skipped = true;
        }
    }
    CHECK(skipped);
}

TEST_CASE("check evaluates artifacts re-read from a directory") {
    ScenarioConfig cfg = quick_config();
    ExperimentResult result = run_experiment(cfg);
    fs::path out = fs::temp_directory_path() / "snow-check-dir";
    fs::remove_all(out);
    write_artifacts(result, out.string());

    TrendReport from_dir = check_trends_from_dir(out.string());
    TrendReport direct = check_trends(result);
    REQUIRE(from_dir.lines.size() == direct.lines.size());
    for (std::size_t i = 0; i < direct.lines.size(); ++i) {
        CHECK(from_dir.lines[i].name == direct.lines[i].name);
        CHECK(from_dir.lines[i].status == direct.lines[i].status);
    }
}

TEST_CASE("plots: empty directory errors, regeneration is idempotent") {
    fs::path empty = fs::temp_directory_path() / "snow-empty";
    fs::remove_all(empty);
    fs::create_directories(empty);
    CHECK_THROWS(load_results_csv(empty.string()));
    CHECK_THROWS(render_plots({}, {}, empty.string()));

    ScenarioConfig cfg = quick_config();
    ExperimentResult result = run_experiment(cfg);
    fs::path out = fs::temp_directory_path() / "snow-plots";
    fs::remove_all(out);
    write_artifacts(result, out.string());
    auto rows = load_results_csv(out.string());
    std::vector<std::string> peers{"mbp2022", "mbp2016", "nuc"};
    auto files1 = render_plots(rows, peers, out.string());
    REQUIRE(files1.size() == 4);  // one figure per metric
    std::map<std::string, std::string> first;
    for (const auto& f : files1) first[f] = slurp(f);
    auto files2 = render_plots(rows, peers, out.string());
    for (const auto& f : files2) CHECK(first[f] == slurp(f));

    // One point per (run, peer) per model, initiator first in each triple.
    std::string svg = first.begin()->second;
    std::size_t circles = 0, pos = 0;
    while ((pos = svg.find("<circle", pos)) != std::string::npos) {
        circles++;
        pos += 7;
    }
    CHECK(circles == cfg.models.size() * cfg.seeds.size() * 3);
}

TEST_CASE("results.csv carries one row per (model, seed, peer, metric)") {
    ScenarioConfig cfg = quick_config();
    cfg.models = {TopologyModel::MESH, TopologyModel::MCUTWO};
    cfg.seeds = {1, 2};
    ExperimentResult result = run_experiment(cfg);
    fs::path out = fs::temp_directory_path() / "snow-rows";
    fs::remove_all(out);
    write_artifacts(result, out.string());
    auto rows = load_results_csv(out.string());
    CHECK(rows.size() == 2u * 2u * 3u * 4u);
    // Header names the scenario and config hash.
    std::string head = slurp(out / "results.csv").substr(0, 80);
    CHECK(head.find("config_hash=") != std::string::npos);
    // Improvement table: one row per non-mesh model per metric.
    std::string imp = slurp(out / "improvement.csv");
    std::size_t imp_rows = 0, pos = 0;
    while ((pos = imp.find("MCUTWO,", pos)) != std::string::npos) {
        imp_rows++;
        pos += 7;
    }
    CHECK(imp_rows == 4);
}

TEST_CASE("media trace artifacts appear when enabled") {
    ScenarioConfig cfg = quick_config();
    cfg.models = {TopologyModel::MCUTWO};
    cfg.record_media_trace = true;
    ExperimentResult result = run_experiment(cfg);
    fs::path out = fs::temp_directory_path() / "snow-mediatrace";
    fs::remove_all(out);
    write_artifacts(result, out.string());
    std::string text = slurp(out / "media-trace-MCUTWO-seed1.csv");
    CHECK(text.find("time_ms,peer,track,event,rtp_seq,residency_ms") != std::string::npos);
    CHECK(text.find(",sent,") != std::string::npos);
    CHECK(text.find(",recv,") != std::string::npos);
    CHECK(text.find(",played,") != std::string::npos);
}

TEST_CASE("reference scenario calibration guard: per-peer utilization bands") {
    // Mean demand over capacity across the measure window, seed 1. These
    // bands localize calibration drift before the comparative criteria fire.
    struct Band {
        TopologyModel model;
        const char* peer;
        double lo, hi;
    };
    const Band bands[] = {
        {TopologyModel::MESH, "nuc", 1.05, 1.25},
        {TopologyModel::MESH, "mbp2022", 0.10, 0.35},
        {TopologyModel::SFU, "nuc", 0.60, 0.85},
        {TopologyModel::SFU, "mbp2022", 0.25, 0.50},
        {TopologyModel::MCU, "mbp2022", 0.55, 0.78},
        {TopologyModel::MCU, "nuc", 0.40, 0.70},
        {TopologyModel::MCUTWO, "mbp2022", 0.905, 0.995},
        {TopologyModel::MCUMULTI, "mbp2022", 0.70, 0.88},
        {TopologyModel::MCUMULTI, "nuc", 0.40, 0.70},
    };
    ScenarioConfig cfg = reference_3party();
    cfg.warmup_s = 3.0;
    cfg.measure_s = 10.0;
    std::map<TopologyModel, RunResult> runs;
    for (auto model : cfg.models) runs.emplace(model, run_single(cfg, model, 1, false));
    for (const auto& b : bands) {
        double u = runs.at(b.model).mean_utilization.at(PeerId{b.peer});
        CAPTURE(to_string(b.model));
        CAPTURE(b.peer);
        CHECK(u >= b.lo);
        CHECK(u <= b.hi);
    }
    for (auto model : cfg.models) {
        bool cpu_flag = runs.at(model).flags.high_cpu;
        if (model == TopologyModel::MESH || model == TopologyModel::MCUTWO) {
            CHECK_MESSAGE(cpu_flag, to_string(model), " should trip the CPU flag");
        } else {
            CHECK_MESSAGE(!cpu_flag, to_string(model), " should stay under the CPU flag");
        }
    }
}
