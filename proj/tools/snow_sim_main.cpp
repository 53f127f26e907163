#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "snow/experiment.hpp"
#include "snow/scenario.hpp"
#include "snow/server.hpp"
#include "snow/svg_plot.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvariantFailure = 1;
constexpr int kExitConfigError = 2;

snow::SignalingServer* g_server = nullptr;

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::invalid_argument("cannot read config file: " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
    std::vector<std::uint64_t> seeds;
    std::istringstream is(csv);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        if (!tok.empty()) seeds.push_back(std::stoull(tok));
    }
    return seeds;
}

int cmd_run(const std::string& config_path, const std::string& out_dir, const std::string& seeds) {
    snow::ScenarioConfig cfg;
    try {
        cfg = snow::ScenarioConfig::from_json(read_file(config_path));
        if (!seeds.empty()) {
            cfg.seeds = parse_seeds(seeds);
            cfg.validate();
        }
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    }

    try {
        snow::ExperimentResult result = snow::run_experiment(cfg);
        snow::write_artifacts(result, out_dir);
        std::cout << "scenario " << cfg.name << ": " << result.runs.size() << " runs ("
                  << cfg.models.size() << " models x " << cfg.seeds.size() << " seeds) -> " << out_dir
                  << "\n";
        if (!result.improvements_available) {
            std::cout << "warning: improvement table empty (nothing to compare against MESH)\n";
        }
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << "\n";
        return kExitInvariantFailure;
    }
}

int cmd_plot(const std::string& out_dir) {
    try {
        auto rows = snow::load_results_csv(out_dir);
        if (rows.empty()) {
            std::cerr << "no result rows in " << out_dir << "\n";
            return kExitInvariantFailure;
        }
        // Peer order: first appearance in the CSV is roster order.
        std::vector<std::string> peer_order;
        for (const auto& r : rows) {
            if (std::find(peer_order.begin(), peer_order.end(), r.peer) == peer_order.end()) {
                peer_order.push_back(r.peer);
            }
        }
        auto files = snow::render_plots(rows, peer_order, out_dir);
        for (const auto& f : files) std::cout << "wrote " << f << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "plot failed: " << e.what() << "\n";
        return kExitInvariantFailure;
    }
}

int cmd_check(const std::string& config_path, const std::string& out_dir) {
    try {
        snow::TrendReport report;
        if (!config_path.empty()) {
            // Re-run deterministically and refresh the artifacts.
            snow::ScenarioConfig cfg;
            try {
                cfg = snow::ScenarioConfig::from_json(read_file(config_path));
            } catch (const std::exception& e) {
                std::cerr << "config error: " << e.what() << "\n";
                return kExitConfigError;
            }
            snow::ExperimentResult result = snow::run_experiment(cfg);
            if (!out_dir.empty()) snow::write_artifacts(result, out_dir);
            report = snow::check_trends(result);
        } else {
            report = snow::check_trends_from_dir(out_dir);
        }
        std::cout << report.to_text();
        return report.all_pass ? kExitOk : kExitInvariantFailure;
    } catch (const std::exception& e) {
        std::cerr << "check failed: " << e.what() << "\n";
        return kExitInvariantFailure;
    }
}

int cmd_serve(const std::string& listen, int max_rooms, const std::string& log_path) {
    snow::SignalingServer::Options opts;
    auto colon = listen.rfind(':');
    if (colon == std::string::npos) {
        std::cerr << "config error: --listen expects <addr:port>\n";
        return kExitConfigError;
    }
    opts.listen_addr = listen.substr(0, colon);
    try {
        opts.port = static_cast<std::uint16_t>(std::stoi(listen.substr(colon + 1)));
    } catch (const std::exception&) {
        std::cerr << "config error: bad port in --listen\n";
        return kExitConfigError;
    }
    opts.max_rooms = max_rooms;
    opts.log_path = log_path;

    try {
        snow::SignalingServer server(opts);
        std::uint16_t port = server.start();
        std::cout << "signaling server listening on " << opts.listen_addr << ":" << port << "\n";
        g_server = &server;
        std::signal(SIGINT, [](int) {
            if (g_server) g_server->stop();
        });
        std::signal(SIGTERM, [](int) {
            if (g_server) g_server->stop();
        });
        server.run();
        g_server = nullptr;
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "server failed: " << e.what() << "\n";
        return kExitInvariantFailure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"snow-sim: serverless n-party call topology simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir, seeds, listen = "127.0.0.1:9460", log_path;
    int max_rooms = 256;

    auto* run = app.add_subcommand("run", "simulate every model x seed and emit CSV artifacts");
    run->add_option("--config", config_path, "scenario config JSON")->required();
    run->add_option("--out", out_dir, "output directory")->required();
    run->add_option("--seeds", seeds, "comma-separated seed override");

    auto* plot = app.add_subcommand("plot", "render per-metric SVG figures from results.csv");
    plot->add_option("--out", out_dir, "directory holding results.csv")->required();

    auto* check = app.add_subcommand("check", "evaluate comparative trends and the flags matrix");
    check->add_option("--out", out_dir, "directory holding results.csv and flags.csv")->required();
    check->add_option("--config", config_path, "re-simulate from this config instead of reading CSVs");

    auto* serve = app.add_subcommand("serve-signaling", "run the standalone signaling server");
    serve->add_option("--listen", listen, "addr:port to bind (default 127.0.0.1:9460)");
    serve->add_option("--max-rooms", max_rooms, "maximum concurrent rooms");
    serve->add_option("--log", log_path, "append log to this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    if (run->parsed()) return cmd_run(config_path, out_dir, seeds);
    if (plot->parsed()) return cmd_plot(out_dir);
    if (check->parsed()) return cmd_check(config_path, out_dir);
    if (serve->parsed()) return cmd_serve(listen, max_rooms, log_path);
    return kExitConfigError;
}
