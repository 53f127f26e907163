#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "snow/ids.hpp"
#include "snow/sim.hpp"

namespace snow {

/// Cumulative inbound counters for one (receiver, track), in the spirit of
/// the inbound-rtp stats report. Cumulative fields are monotone
/// nondecreasing; the per-second sampler snapshots them for windowing.
struct InboundTrackStats {
    PeerId receiver;
    TrackId track;
    bool video = true;

    std::uint64_t packets_lost = 0;
    double jitter_ms = 0;                       // smoothed estimate
    double jitter_buffer_delay_s = 0;           // cumulative residency
    std::uint64_t jb_emitted = 0;
    double total_inter_frame_delay_s = 0;       // cumulative inter-render gaps
    std::uint64_t frames_rendered = 0;
    double capture_to_render_s = 0;             // cumulative, for the delays flag
    std::uint64_t packets_received = 0;

    std::optional<SimTime> last_render_ts;
};

/// One per-second snapshot of the cumulative counters above.
struct StatsSample {
    SimTime t_ms = 0;
    std::uint64_t packets_lost = 0;
    double jitter_ms = 0;
    double jitter_buffer_delay_s = 0;
    std::uint64_t jb_emitted = 0;
    double total_inter_frame_delay_s = 0;
    std::uint64_t frames_rendered = 0;
    double capture_to_render_s = 0;
};

enum class Metric { packetsLost, jitter, jitterBufferDelay, totalInterFrameDelay };

inline const char* to_string(Metric m) {
    switch (m) {
        case Metric::packetsLost: return "packetsLost";
        case Metric::jitter: return "jitter";
        case Metric::jitterBufferDelay: return "jitterBufferDelay";
        case Metric::totalInterFrameDelay: return "totalInterFrameDelay";
    }
    return "?";
}

inline const std::vector<Metric>& all_metrics() {
    static const std::vector<Metric> metrics{Metric::packetsLost, Metric::jitter,
                                             Metric::jitterBufferDelay, Metric::totalInterFrameDelay};
    return metrics;
}

struct WindowStat {
    double mean = 0;
    double stddev = 0;
    std::size_t n = 0;
};

/// Summarizes one metric's per-second samples over the measurement window
/// [warmup, warmup + measure). Instantaneous metrics (jitter) average raw
/// samples; cumulative counters are differenced per second, and the delay
/// accumulators are normalized per event (residency per emitted packet,
/// interval per rendered frame) so values compare across frame rates.
/// packetsLost is reported as a per-second loss count.
WindowStat window_summarize(const std::vector<StatsSample>& samples, Metric metric,
                            double warmup_s, double measure_s);

/// Improvement of `model_value` over `mesh_value` for a lower-is-better
/// metric: (mesh - metric) / mesh. Positive means the model did better.
inline double improvement(double mesh_value, double model_value) {
    if (mesh_value == 0.0) {
        throw std::domain_error("improvement undefined: mesh value is zero");
    }
    return (mesh_value - model_value) / mesh_value;
}

/// The three qualitative degradation verdicts for one run.
struct QualitativeFlags {
    bool delays = false;
    bool high_cpu = false;
    bool slow_connect = false;

    bool operator==(const QualitativeFlags&) const = default;
};

struct QualitativeThresholds {
    double delays_capture_to_render_ms = 350.0;
    double high_cpu_utilization = 0.9;
    double high_cpu_sustain_s = 5.0;
    double slow_connect_ratio = 1.8;
};

namespace stats_detail {
inline WindowStat mean_stddev(const std::vector<double>& xs) {
    WindowStat out;
    out.n = xs.size();
    if (xs.empty()) return out;
    double sum = 0;
    for (double x : xs) sum += x;
    out.mean = sum / static_cast<double>(xs.size());
    double ss = 0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.stddev = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
    return out;
}
}  // namespace stats_detail

}  // namespace snow
