#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "snow/scenario.hpp"
#include "snow/stats.hpp"
#include "snow/topology.hpp"

namespace snow {

/// One (model, seed) simulation outcome.
struct RunResult {
    TopologyModel model = TopologyModel::MESH;
    std::uint64_t seed = 0;
    std::map<PeerId, std::map<Metric, WindowStat>> peer_stats;  // video tracks only
    QualitativeFlags flags;
    PeerId high_cpu_peer;  // first peer that tripped the CPU flag, if any
    double first_offer_ms = 0;
    double all_media_ms = 0;
    double max_setup_ms = 0;
    double slow_connect_value = 0;  // all-media time over longest single setup
    double delays_value_ms = 0;     // constrained peer capture->render mean
    std::map<PeerId, double> mean_utilization;  // demanded/capacity over the measure window
    std::string trace_text;
    std::string media_trace_text;
};

struct ExperimentResult {
    ScenarioConfig config;
    std::vector<RunResult> runs;  // model-major, seed-minor
    std::map<TopologyModel, std::map<Metric, double>> model_values;
    std::map<TopologyModel, std::map<Metric, double>> improvements;  // vs MESH, absent for MESH
    std::map<TopologyModel, QualitativeFlags> scenario_flags;        // per-seed majority
    bool improvements_available = false;  // false when MESH is the only model
};

/// Runs every model x seed combination serially and deterministically.
ExperimentResult run_experiment(const ScenarioConfig& config);

/// Runs a single (model, seed) simulation.
RunResult run_single(const ScenarioConfig& config, TopologyModel model, std::uint64_t seed,
                     bool with_trace = true);

/// Writes results.csv, improvement.csv, flags.csv, timing.csv and the
/// per-run signal traces into `out_dir` (created if needed).
void write_artifacts(const ExperimentResult& result, const std::string& out_dir);

/// Rows of results.csv, used by `plot` and `check` when re-reading a dir.
struct ResultRow {
    std::string model;
    std::uint64_t seed = 0;
    std::string peer;
    std::string metric;
    double mean = 0;
    double stddev = 0;
};
std::vector<ResultRow> load_results_csv(const std::string& out_dir);
std::map<std::string, QualitativeFlags> load_flags_csv(const std::string& out_dir);

struct TrendReport {
    struct Line {
        std::string name;
        std::string status;  // PASS | FAIL | SKIP
        std::string detail;
    };
    std::vector<Line> lines;
    bool all_pass = true;

    std::string to_text() const;
};

/// Evaluates the comparative trends and the qualitative matrix.
TrendReport check_trends(const ExperimentResult& result);

/// Same evaluation against artifacts previously written to `out_dir`
/// (results.csv + flags.csv).
TrendReport check_trends_from_dir(const std::string& out_dir);

}  // namespace snow
