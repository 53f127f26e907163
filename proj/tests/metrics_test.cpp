#include <doctest.h>

#include <cmath>
#include <vector>

#include "snow/jitter_buffer.hpp"
#include "snow/rng.hpp"
#include "snow/stats.hpp"

using namespace snow;

TEST_CASE("jitter decays by 15/16 per packet under constant transit") {
    double j = 8.0;
    // D = 0 when interarrival equals capture spacing.
    for (int i = 0; i < 5; ++i) {
        double next = jitter_update(j, 100.0 + i * 20.0, i * 20.0, 120.0 + i * 20.0, 20.0 + i * 20.0);
        CHECK(next == doctest::Approx(j * 15.0 / 16.0).epsilon(1e-12));
        j = next;
    }
}

TEST_CASE("first 16 ms deviation from J=0 gives J=1 ms") {
    // Packets 20 ms apart at capture; the second arrives 16 ms later than
    // its spacing: D = 16, J' = 0 + (16 - 0)/16 = 1.
    double j = jitter_update(0.0, 100.0, 0.0, 136.0, 20.0);
    CHECK(j == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("jitter over ten thousand random arrivals equals a brute-force fold") {
    RngStream rng(555, 8);
    for (int trial = 0; trial < 3; ++trial) {
        std::vector<double> captures, arrivals;
        double t = 0;
        for (int i = 0; i < 10000; ++i) {
            t += 20.0;
            captures.push_back(t);
            arrivals.push_back(t + 15.0 + rng.normal_nonneg(5.0, 5.0));
        }
        // Implementation path.
        double j = 0.0;
        for (std::size_t i = 1; i < captures.size(); ++i) {
            j = jitter_update(j, arrivals[i - 1], captures[i - 1], arrivals[i], captures[i]);
        }
        // Independent fold on transit differences.
        double oracle = 0.0;
        for (std::size_t i = 1; i < captures.size(); ++i) {
            double d = (arrivals[i] - captures[i]) - (arrivals[i - 1] - captures[i - 1]);
            oracle += (std::abs(d) - oracle) / 16.0;
        }
        CHECK(std::abs(j - oracle) < 1e-9);
    }
}

namespace {

std::vector<StatsSample> synthetic_samples(int seconds,
                                           const std::function<void(int, StatsSample&)>& fill) {
    std::vector<StatsSample> out;
    StatsSample s;
    for (int t = 0; t <= seconds; ++t) {
        s.t_ms = t * 1000.0;
        fill(t, s);
        out.push_back(s);
    }
    return out;
}

}  // namespace

TEST_CASE("window_summarize: constant samples have zero stddev") {
    auto samples = synthetic_samples(20, [](int, StatsSample& s) { s.jitter_ms = 7.5; });
    auto w = window_summarize(samples, Metric::jitter, 5.0, 10.0);
    CHECK(w.mean == doctest::Approx(0.0075));  // reported in seconds
    CHECK(w.stddev == doctest::Approx(0.0));
    CHECK(w.n > 0);
}

TEST_CASE("warmup excludes the startup transient") {
    auto samples = synthetic_samples(30, [](int t, StatsSample& s) {
        s.jitter_ms = t < 5 ? 500.0 : 10.0;  // startup spike
    });
    auto w = window_summarize(samples, Metric::jitter, 10.0, 15.0);
    CHECK(w.mean == doctest::Approx(0.010));
    CHECK(w.stddev == doctest::Approx(0.0));
}

TEST_CASE("cumulative metrics difference across the window") {
    // packetsLost climbs 3 per second before the window and 5 inside it.
    auto samples = synthetic_samples(30, [](int t, StatsSample& s) {
        s.packets_lost = static_cast<std::uint64_t>(t <= 10 ? 3 * t : 30 + 5 * (t - 10));
        s.jitter_buffer_delay_s = 0.040 * t;  // 40 ms residency per emitted frame
        s.jb_emitted = static_cast<std::uint64_t>(t);
        s.total_inter_frame_delay_s = 0.0667 * t;
        s.frames_rendered = static_cast<std::uint64_t>(t);
    });
    auto lost = window_summarize(samples, Metric::packetsLost, 10.0, 15.0);
    CHECK(lost.mean == doctest::Approx(5.0));
    auto jbd = window_summarize(samples, Metric::jitterBufferDelay, 10.0, 15.0);
    CHECK(jbd.mean == doctest::Approx(0.040));
    auto ifd = window_summarize(samples, Metric::totalInterFrameDelay, 10.0, 15.0);
    CHECK(ifd.mean == doctest::Approx(0.0667));
}

TEST_CASE("window_summarize rejects a run shorter than warmup+measure") {
    auto samples = synthetic_samples(10, [](int, StatsSample&) {});
    CHECK_THROWS_AS(window_summarize(samples, Metric::jitter, 10.0, 30.0), std::invalid_argument);
    CHECK_THROWS_AS(window_summarize(samples, Metric::jitter, -1.0, 5.0), std::invalid_argument);
    CHECK_THROWS_AS(window_summarize(samples, Metric::jitter, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("improvement: identical values give exactly zero") {
    CHECK(improvement(3.75, 3.75) == 0.0);
}

TEST_CASE("improvement reproduces the published synthetic pairs to 1e-12") {
    CHECK(std::abs(improvement(1.0, 0.28) - 0.72) < 1e-12);
    CHECK(std::abs(improvement(1.0, 1.35) - (-0.35)) < 1e-12);
}

TEST_CASE("improvement of a zero baseline is an error") {
    CHECK_THROWS_AS(improvement(0.0, 1.0), std::domain_error);
}

TEST_CASE("improvement is invariant under common positive rescaling") {
    RngStream rng(9, 9);
    for (int i = 0; i < 1000; ++i) {
        double mesh = 0.1 + rng.next_double() * 10;
        double value = 0.1 + rng.next_double() * 10;
        double scale = 0.001 + rng.next_double() * 1000;
        double base = improvement(mesh, value);
        double scaled = improvement(mesh * scale, value * scale);
        CHECK(std::abs(base - scaled) < 1e-9);
    }
}

TEST_CASE("sign convention: lower is better means positive improvement") {
    RngStream rng(10, 10);
    for (int i = 0; i < 1000; ++i) {
        double mesh = 0.1 + rng.next_double() * 10;
        double value = 0.1 + rng.next_double() * 10;
        if (value < mesh) {
            CHECK(improvement(mesh, value) > 0);
        } else if (value > mesh) {
            CHECK(improvement(mesh, value) < 0);
        }
    }
}
