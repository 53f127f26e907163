#include "snow/stats.hpp"

namespace snow {

WindowStat window_summarize(const std::vector<StatsSample>& samples, Metric metric,
                            double warmup_s, double measure_s) {
    if (warmup_s < 0 || measure_s <= 0) {
        throw std::invalid_argument("window_summarize: warmup must be >= 0 and measure > 0");
    }
    const double w0 = warmup_s * 1000.0;
    const double w1 = (warmup_s + measure_s) * 1000.0;
    if (samples.empty() || samples.back().t_ms < w1 - 0.5) {
        throw std::invalid_argument("window_summarize: run shorter than warmup + measure");
    }

    std::vector<double> values;
    const StatsSample* prev = nullptr;
    for (const auto& s : samples) {
        // The sample at the window edge is the differencing baseline.
        if (s.t_ms <= w0 + 0.5) {
            prev = &s;
            continue;
        }
        if (s.t_ms > w1 + 0.5) break;
        if (prev != nullptr) {
            switch (metric) {
                case Metric::jitter:
                    values.push_back(s.jitter_ms / 1000.0);
                    break;
                case Metric::packetsLost:
                    values.push_back(static_cast<double>(s.packets_lost - prev->packets_lost));
                    break;
                case Metric::jitterBufferDelay: {
                    std::uint64_t emitted = s.jb_emitted - prev->jb_emitted;
                    if (emitted > 0) {
                        values.push_back((s.jitter_buffer_delay_s - prev->jitter_buffer_delay_s) /
                                         static_cast<double>(emitted));
                    }
                    break;
                }
                case Metric::totalInterFrameDelay: {
                    std::uint64_t rendered = s.frames_rendered - prev->frames_rendered;
                    if (rendered > 0) {
                        values.push_back((s.total_inter_frame_delay_s - prev->total_inter_frame_delay_s) /
                                         static_cast<double>(rendered));
                    }
                    break;
                }
            }
        }
        prev = &s;
    }
    return stats_detail::mean_stddev(values);
}

}  // namespace snow
