#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "snow/cpu.hpp"
#include "snow/jitter_buffer.hpp"
#include "snow/net.hpp"
#include "snow/rng.hpp"
#include "snow/sim.hpp"

using namespace snow;

TEST_CASE("cpu below capacity: jobs finish after exactly their service time") {
    SimEngine eng;
    CpuScheduler cpu(eng, PeerId{"p"}, 100.0, 133.0);
    std::vector<SimTime> done;
    // Demand 50 units against capacity 100: no queueing between jobs.
    for (int i = 0; i < 10; ++i) {
        double at = i * 100.0;
        eng.schedule_at(at, [&cpu, &done, at] {
            cpu.submit_send(CpuWork::encode, 5.0, at, [&done](SimTime t) { done.push_back(t); });
        });
    }
    eng.run_all();
    REQUIRE(done.size() == 10);
    for (int i = 0; i < 10; ++i) {
        CHECK(done[i] == doctest::Approx(i * 100.0 + 50.0));  // 5 units / 100 per s = 50 ms
    }
    CHECK(cpu.sender_drops() == 0);
}

TEST_CASE("cpu overload: latency climbs and sender-side drops begin") {
    SimEngine eng;
    // Capacity 100 u/s, droppable encodes arriving at 200 u/s: the queue
    // grows at 1 extra second of work every second; a job enqueued at time t
    // starts roughly t milliseconds late. Drops start once that lateness
    // passes the two-frame budget.
    CpuScheduler cpu(eng, PeerId{"p"}, 100.0, 133.0);
    std::map<int, SimTime> started;
    int drops_before_ms = -1;
    for (int i = 0; i < 100; ++i) {
        double at = i * 10.0;  // 2.0 units every 10 ms = 200 u/s
        eng.schedule_at(at, [&, i, at] {
            cpu.submit_send(
                CpuWork::encode, 2.0, at, [&, i, at](SimTime t) { started[i] = t - at; },
                [&, at] {
                    if (drops_before_ms < 0) drops_before_ms = static_cast<int>(at);
                });
        });
    }
    eng.run_all();
    CHECK(cpu.sender_drops() > 0);
    // The first drop lands once queue delay crosses 133 ms: with delay(t)
    // growing at ~1 ms per ms, that is near t = 133 ms plus one service time.
    CHECK(drops_before_ms >= 120);
    CHECK(drops_before_ms <= 200);
    // Utilization reflects demand, not capacity.
    CHECK(cpu.ledger().utilization(0) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("decode starves behind sender-side work under overload") {
    SimEngine eng;
    CpuScheduler cpu(eng, PeerId{"p"}, 100.0, 1e9);
    // Sender work consumes 80 u/s, decode needs 40 u/s: total 120 > 100.
    std::vector<SimTime> decode_latency;
    for (int i = 0; i < 200; ++i) {
        double at = i * 10.0;
        eng.schedule_at(at, [&, at] {
            cpu.submit_send(CpuWork::encode, 0.8, at, [](SimTime) {});
            cpu.submit_receive(CpuWork::decode, 0.4, [&, at](SimTime t) {
                decode_latency.push_back(t - at);
            });
        });
    }
    eng.run_all();
    REQUIRE(decode_latency.size() == 200);
    // Early decodes are nearly on time; late ones lag by a growing backlog.
    CHECK(decode_latency.front() < 50.0);
    CHECK(decode_latency.back() > 300.0);
}

TEST_CASE("sustained overload detector") {
    CpuLedger ledger;
    ledger.capacity = 100.0;
    for (int s = 0; s < 10; ++s) ledger.charge(s * 1000.0, CpuWork::encode, s >= 3 ? 95.0 : 50.0);
    CHECK(ledger.longest_overload_run(0.9) == doctest::Approx(7.0));
    CHECK(ledger.longest_overload_run(0.99) == doctest::Approx(0.0));
}

// ---- jitter buffer ----

namespace {

struct JbHarness {
    SimEngine eng;
    JitterBuffer jb{eng};
    std::vector<std::pair<std::uint64_t, SimTime>> emitted;  // (seq, playout)
    std::vector<std::uint64_t> lost;

    JbHarness() {
        jb.set_emit([this](const MediaPacket& p, SimTime, SimTime playout) {
            emitted.push_back({p.rtp_seq, playout});
        });
        jb.set_loss([this](std::uint64_t s) { lost.push_back(s); });
    }

    MediaPacket packet(std::uint64_t seq, SimTime capture) {
        MediaPacket p;
        p.rtp_seq = seq;
        p.capture_ts = capture;
        p.size_bytes = 1200;
        return p;
    }

    void arrive(std::uint64_t seq, SimTime capture, SimTime arrival) {
        eng.schedule_at(arrival, [this, seq, capture] {
            jb.on_packet(packet(seq, capture), eng.now());
        });
    }
};

}  // namespace

TEST_CASE("ten frames at forty milliseconds residency accumulate 0.4 s") {
    JbHarness h;
    h.jb.set_target_delay_ms(40.0);
    for (int i = 0; i < 10; ++i) {
        // Constant transit 10: the transit floor equals every transit, so
        // each packet sits in the buffer for exactly the target.
        h.arrive(i, i * 66.0, i * 66.0 + 10.0);
    }
    h.eng.run_all();
    CHECK(h.jb.emitted_count() == 10);
    CHECK(h.jb.cumulative_buffer_delay_s() == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(h.lost.empty());
}

TEST_CASE("zero-jitter link: residency equals the target exactly") {
    JbHarness h;
    h.jb.set_target_delay_ms(20.0);
    for (int i = 0; i < 50; ++i) h.arrive(i, i * 20.0, i * 20.0 + 7.5);
    h.eng.run_all();
    REQUIRE(h.emitted.size() == 50);
    for (std::size_t i = 0; i < h.emitted.size(); ++i) {
        CHECK(h.emitted[i].second - (i * 20.0 + 7.5) == doctest::Approx(20.0));
    }
}

TEST_CASE("playout emission order is rtp_seq order, gap-free except losses") {
    JbHarness h;
    h.jb.set_target_delay_ms(30.0);
    RngStream rng(808, 4);
    const int n = 500;
    for (int i = 0; i < n; ++i) {
        if (rng.bernoulli(0.05)) continue;  // network drop
        double transit = 10.0 + rng.normal_nonneg(3.0, 3.0);
        h.arrive(i, i * 20.0, i * 20.0 + transit);
    }
    h.eng.run_all();
    std::uint64_t prev = 0;
    bool first = true;
    std::vector<std::uint64_t> seen;
    for (const auto& [seq, playout] : h.emitted) {
        if (!first) CHECK(seq > prev);
        prev = seq;
        first = false;
        seen.push_back(seq);
    }
    // Emitted plus declared-lost covers a contiguous prefix.
    std::vector<std::uint64_t> all = seen;
    all.insert(all.end(), h.lost.begin(), h.lost.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
}

TEST_CASE("late packet behind the playout point counts lost") {
    JbHarness h;
    h.jb.set_target_delay_ms(20.0);
    h.arrive(0, 0.0, 10.0);
    h.arrive(1, 20.0, 30.0);
    h.arrive(2, 40.0, 50.0);
    // Packet 1 is about to be emitted at 50; deliver a duplicate... instead
    // deliver seq 0 again far too late.
    h.arrive(0, 0.0, 500.0);
    h.eng.run_all();
    CHECK(h.jb.late_lost_count() == 1);
    CHECK(h.jb.emitted_count() == 3);
}

namespace {

/// Independent replay of the queue discipline over an arrival log:
/// chronological sweep that recomputes deadlines with the running transit
/// floor, then drains strictly in sequence order at deadlines.
struct OracleResult {
    double cumulative_delay_ms = 0;
    std::vector<std::uint64_t> emitted;
    std::vector<std::uint64_t> lost;
};

OracleResult oracle_replay(std::vector<std::tuple<std::uint64_t, double, double>> log,
                           double target) {
    // log entries: (seq, capture, arrival), processed in arrival order.
    std::sort(log.begin(), log.end(),
              [](const auto& a, const auto& b) { return std::get<2>(a) < std::get<2>(b); });
    struct Entry {
        double arrival, deadline;
    };
    std::map<std::uint64_t, Entry> pending;
    OracleResult out;
    double floor = 0;
    bool have_floor = false;
    std::uint64_t next_seq = 0;

    // Event sweep: process arrivals and deadline expiries in time order.
    struct Ev {
        double t;
        int kind;  // 0 arrival processed inline; 1 deadline
        std::uint64_t seq;
    };
    std::vector<Ev> deadlines;
    std::size_t li = 0;
    auto fire_deadline = [&](std::uint64_t seq, double now) {
        auto it = pending.find(seq);
        if (it == pending.end() || it->second.deadline > now) return;
        while (next_seq < seq) {
            auto p = pending.find(next_seq);
            if (p != pending.end()) {
                out.cumulative_delay_ms += now - p->second.arrival;
                out.emitted.push_back(next_seq);
                pending.erase(p);
            } else {
                out.lost.push_back(next_seq);
            }
            ++next_seq;
        }
        out.cumulative_delay_ms += now - it->second.arrival;
        out.emitted.push_back(seq);
        pending.erase(it);
        ++next_seq;
        while (true) {
            auto p = pending.find(next_seq);
            if (p == pending.end() || p->second.deadline > now) break;
            out.cumulative_delay_ms += now - p->second.arrival;
            out.emitted.push_back(next_seq);
            pending.erase(p);
            ++next_seq;
        }
    };

    while (li < log.size() || !deadlines.empty()) {
        double next_arrival = li < log.size() ? std::get<2>(log[li]) : 1e300;
        double next_deadline = 1e300;
        std::size_t di = 0;
        for (std::size_t i = 0; i < deadlines.size(); ++i) {
            if (deadlines[i].t < next_deadline) {
                next_deadline = deadlines[i].t;
                di = i;
            }
        }
        if (next_arrival <= next_deadline) {
            auto [seq, capture, arrival] = log[li++];
            double transit = arrival - capture;
            if (!have_floor || transit < floor) {
                floor = transit;
                have_floor = true;
            }
            if (seq < next_seq) {
                out.lost.push_back(seq);  // behind the playout point
                continue;
            }
            double deadline = std::max(arrival, capture + floor + target);
            pending[seq] = Entry{arrival, deadline};
            deadlines.push_back(Ev{deadline, 1, seq});
        } else {
            Ev ev = deadlines[di];
            deadlines.erase(deadlines.begin() + static_cast<long>(di));
            fire_deadline(ev.seq, ev.t);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("random trace: buffer matches an independent replay exactly") {
    RngStream rng(424242, 6);
    for (int trial = 0; trial < 20; ++trial) {
        JbHarness h;
        double target = 25.0 + 5.0 * trial;
        h.jb.set_target_delay_ms(target);
        std::vector<std::tuple<std::uint64_t, double, double>> log;
        const int n = 400;
        for (int i = 0; i < n; ++i) {
            if (rng.bernoulli(0.04)) continue;
            double capture = i * 20.0;
            double arrival = capture + 8.0 + rng.normal_nonneg(4.0, 4.0);
            log.push_back({static_cast<std::uint64_t>(i), capture, arrival});
            h.arrive(static_cast<std::uint64_t>(i), capture, arrival);
        }
        h.eng.run_all();
        OracleResult oracle = oracle_replay(log, target);

        std::vector<std::uint64_t> emitted_seqs;
        double cumulative = 0;
        for (const auto& [seq, playout] : h.emitted) emitted_seqs.push_back(seq);
        cumulative = h.jb.cumulative_buffer_delay_s() * 1000.0;

        CHECK(emitted_seqs == oracle.emitted);
        CHECK(cumulative == doctest::Approx(oracle.cumulative_delay_ms).epsilon(1e-12));
        CHECK(h.jb.lost_count() == oracle.lost.size());
    }
}

TEST_CASE("adaptive target: clamps and formula") {
    CHECK(adapt_target_delay(5.0) == 20.0);    // floor
    CHECK(adapt_target_delay(30.0) == 120.0);  // 4x
    CHECK(adapt_target_delay(500.0) == 500.0); // cap
    CHECK(adapt_target_delay(0.0) == 20.0);
}

TEST_CASE("adaptive target follows a jitter step within a second") {
    // The jitter estimate converges geometrically (1/16 per frame); at 50
    // frames per second the estimate crosses most of a step well inside 1 s,
    // and the 1 Hz adapter applies it on the next tick.
    double j = 2.0;
    int frames_to_converge = 0;
    while (std::abs(30.0 - j) > 4.0) {
        j = j + (30.0 - j) / 16.0;  // |D| jumps to 30 ms
        frames_to_converge++;
    }
    CHECK(frames_to_converge <= 50);
    CHECK(adapt_target_delay(j) > 100.0);
}

TEST_CASE("conservation across a lossy link and the buffer") {
    SimEngine eng;
    RngRegistry reg(31337);
    Network net(eng, reg);
    PeerProfile a;
    a.peer = PeerId{"a"};
    a.link = LinkModel{10.0, 3.0, 0.01, 100000.0};
    PeerProfile b;
    b.peer = PeerId{"b"};
    b.link = LinkModel{10.0, 3.0, 0.01, 100000.0};
    net.add_peer(a);
    net.add_peer(b);

    JitterBuffer jb(eng);
    jb.set_target_delay_ms(30.0);
    std::uint64_t sent = 0, net_dropped = 0, arrivals = 0;
    for (int i = 0; i < 5000; ++i) {
        MediaPacket pkt;
        pkt.rtp_seq = static_cast<std::uint64_t>(i);
        pkt.capture_ts = i * 20.0;
        pkt.size_bytes = 1200;
        sent++;
        eng.schedule_at(i * 20.0, [&net, &jb, &eng, &net_dropped, &arrivals, pkt] {
            net.send_media(
                PeerId{"a"}, PeerId{"b"}, pkt.size_bytes,
                [&jb, &eng, &arrivals, pkt] {
                    arrivals++;
                    jb.on_packet(pkt, eng.now());
                },
                [&net_dropped] { net_dropped++; });
        });
    }
    eng.run_all();
    CHECK(sent == arrivals + net_dropped);
    CHECK(arrivals == jb.emitted_count() + jb.late_lost_count() + jb.queued());
    // Gap losses only ever account for packets the network actually dropped.
    CHECK(jb.gap_lost_count() <= net_dropped);
}
