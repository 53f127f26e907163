#include "snow/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

namespace snow {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

std::vector<std::string> render_plots(const std::vector<ResultRow>& rows,
                                      const std::vector<std::string>& peer_order,
                                      const std::string& out_dir) {
    if (rows.empty()) throw std::runtime_error("render_plots: no result rows");
    fs::create_directories(out_dir);

    std::set<std::string> metrics;
    std::vector<std::string> models;  // first-appearance order
    std::set<std::uint64_t> seed_set;
    for (const auto& r : rows) {
        metrics.insert(r.metric);
        if (std::find(models.begin(), models.end(), r.model) == models.end()) {
            models.push_back(r.model);
        }
        seed_set.insert(r.seed);
    }
    std::vector<std::uint64_t> seeds(seed_set.begin(), seed_set.end());

    const double width = 860, height = 420;
    const double ml = 70, mr = 20, mt = 30, mb = 50;

    std::vector<std::string> written;
    for (const auto& metric : metrics) {
        // Point order per model: seeds ascending, peers in roster order.
        std::map<std::string, std::vector<double>> series;
        for (const auto& model : models) {
            for (std::uint64_t seed : seeds) {
                for (const auto& peer : peer_order) {
                    for (const auto& r : rows) {
                        if (r.model == model && r.seed == seed && r.peer == peer &&
                            r.metric == metric) {
                            series[model].push_back(r.mean);
                        }
                    }
                }
            }
        }
        double lo = 0, hi = 0;
        bool first = true;
        for (const auto& [model, values] : series) {
            for (double v : values) {
                if (first || v < lo) lo = v;
                if (first || v > hi) hi = v;
                first = false;
            }
        }
        if (hi <= lo) hi = lo + 1;
        double pad = (hi - lo) * 0.15;
        lo -= pad;
        hi += pad;

        std::size_t npoints = 0;
        for (const auto& [model, values] : series) npoints = std::max(npoints, values.size());
        auto sx = [&](std::size_t i) {
            return ml + (width - ml - mr) * (npoints > 1 ? double(i) / double(npoints - 1) : 0.5);
        };
        auto sy = [&](double v) { return height - mb - (height - mt - mb) * (v - lo) / (hi - lo); };

        std::string svg;
        svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
               num(height) + "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\">\n";
        svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        svg += "<text x=\"" + num(width / 2) + "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
               metric + "</text>\n";
        // Axes.
        svg += "<line x1=\"" + num(ml) + "\" y1=\"" + num(height - mb) + "\" x2=\"" + num(width - mr) +
               "\" y2=\"" + num(height - mb) + "\" stroke=\"black\"/>\n";
        svg += "<line x1=\"" + num(ml) + "\" y1=\"" + num(mt) + "\" x2=\"" + num(ml) + "\" y2=\"" +
               num(height - mb) + "\" stroke=\"black\"/>\n";
        for (int g = 0; g <= 4; ++g) {
            double v = lo + (hi - lo) * g / 4.0;
            svg += "<text x=\"" + num(ml - 6) + "\" y=\"" + num(sy(v) + 4) +
                   "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" + num(v) +
                   "</text>\n";
        }
        svg += "<text x=\"" + num(width / 2) + "\" y=\"" + num(height - 12) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">run x peer "
               "(initiator first, constrained last per run)</text>\n";

        int ci = 0;
        double legend_y = mt + 6;
        for (const auto& model : models) {
            const auto& values = series[model];
            if (values.empty()) continue;
            const char* color = kColors[ci % 6];
            double mean = 0;
            for (double v : values) mean += v;
            mean /= double(values.size());
            double ss = 0;
            for (double v : values) ss += (v - mean) * (v - mean);
            double sd = values.size() > 1 ? std::sqrt(ss / double(values.size() - 1)) : 0.0;

            // Half-stddev band around the model mean.
            svg += "<rect x=\"" + num(ml) + "\" y=\"" + num(sy(mean + 0.5 * sd)) + "\" width=\"" +
                   num(width - ml - mr) + "\" height=\"" +
                   num(std::max(1.0, sy(mean - 0.5 * sd) - sy(mean + 0.5 * sd))) + "\" fill=\"" +
                   color + "\" opacity=\"0.10\"/>\n";

            std::string points;
            for (std::size_t i = 0; i < values.size(); ++i) {
                double x = sx(i), y = sy(values[i]);
                points += (i ? " " : "") + num(x) + "," + num(y);
                svg += "<circle cx=\"" + num(x) + "\" cy=\"" + num(y) + "\" r=\"3\" fill=\"" + color +
                       "\"/>\n";
            }
            svg += "<polyline points=\"" + points + "\" fill=\"none\" stroke=\"" + color +
                   "\" stroke-width=\"1\" opacity=\"0.6\"/>\n";
            svg += "<text x=\"" + num(width - mr - 140) + "\" y=\"" + num(legend_y) +
                   "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" + color + "\">" + model +
                   " (mean " + num(mean) + ")</text>\n";
            legend_y += 14;
            ci++;
        }
        svg += "</svg>\n";

        std::string file = (fs::path(out_dir) / (metric + ".svg")).string();
        std::ofstream f(file, std::ios::binary);
        f << svg;
        written.push_back(file);
    }
    return written;
}

}  // namespace snow
