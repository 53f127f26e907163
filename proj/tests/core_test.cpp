#include <doctest.h>

#include <algorithm>

#include "snow/merge.hpp"
#include "snow/rng.hpp"

using namespace snow;

namespace {

MediaStream& make_local(StreamTable& t, const std::string& peer) {
    PeerId p{peer};
    MediaStream& s = t.create_local_stream(p, StreamId{"local-" + peer});
    s.add_track(Track{TrackId{peer + "-v"}, TrackKind::video, p, "cam"});
    s.add_track(Track{TrackId{peer + "-a"}, TrackKind::audio, p, "mic"});
    return s;
}

}  // namespace

TEST_CASE("layout ladder: full, side-by-side, 2x2, 3x3") {
    CHECK(LayoutPolicy::rule_for(0) == LayoutPolicy::Rule::full);
    CHECK(LayoutPolicy::rule_for(1) == LayoutPolicy::Rule::full);
    CHECK(LayoutPolicy::rule_for(2) == LayoutPolicy::Rule::side_by_side);
    CHECK(LayoutPolicy::rule_for(3) == LayoutPolicy::Rule::grid2x2);
    CHECK(LayoutPolicy::rule_for(4) == LayoutPolicy::Rule::grid2x2);
    CHECK(LayoutPolicy::rule_for(5) == LayoutPolicy::Rule::grid3x3);
    CHECK(LayoutPolicy::rule_for(9) == LayoutPolicy::Rule::grid3x3);
    CHECK_THROWS_AS(LayoutPolicy::rule_for(10), std::invalid_argument);
}

TEST_CASE("every source gets exactly one cell, in insertion order") {
    for (std::size_t n = 0; n <= 9; ++n) {
        auto cells = LayoutPolicy::cells_for(n);
        CHECK(cells.size() == n);
        // Cells are distinct.
        for (std::size_t i = 0; i < cells.size(); ++i) {
            for (std::size_t j = i + 1; j < cells.size(); ++j) {
                CHECK(cells[i] != cells[j]);
            }
        }
    }
    auto cells = LayoutPolicy::cells_for(3);
    CHECK(cells[0] == LayoutPolicy::Cell{0, 0});
    CHECK(cells[1] == LayoutPolicy::Cell{0, 1});
    CHECK(cells[2] == LayoutPolicy::Cell{1, 0});
}

TEST_CASE("merge_create: empty merge with a shareable output stream") {
    StreamTable t;
    MergedStream& m = t.merge_create(PeerId{"A"}, 15.0, 0.0);
    CHECK(m.video_sources.empty());
    CHECK(m.audio_sources.empty());
    CHECK(t.has(m.out_stream));
    const MediaStream& out = t.get(m.out_stream);
    REQUIRE(out.tracks.size() == 2);
    CHECK(out.tracks[0].origin == PeerId{"A"});
    // Empty merge shows an empty composition, not an error.
    CHECK(t.composition_of(m.out_stream, 0.0).empty());
}

TEST_CASE("merge_create rejects a non-positive frame rate") {
    StreamTable t;
    CHECK_THROWS_AS(t.merge_create(PeerId{"A"}, 0.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(t.merge_create(PeerId{"A"}, -5.0, 0.0), std::invalid_argument);
}

TEST_CASE("merge_add appends sources and re-evaluates the layout") {
    StreamTable t;
    auto& a = make_local(t, "A");
    auto& b = make_local(t, "B");
    auto& c = make_local(t, "C");
    MergedStream& m = t.merge_create(PeerId{"A"}, 15.0, 0.0);

    t.merge_add(m, a, 1.0);
    CHECK(m.layout_rule() == LayoutPolicy::Rule::full);
    t.merge_add(m, b, 2.0);
    CHECK(m.layout_rule() == LayoutPolicy::Rule::side_by_side);
    t.merge_add(m, c, 3.0);
    CHECK(m.layout_rule() == LayoutPolicy::Rule::grid2x2);

    CHECK(m.video_sources.size() == 3);
    CHECK(m.video_sources[0].origin == PeerId{"A"});
    CHECK(m.video_sources[1].origin == PeerId{"B"});
    CHECK(m.video_sources[2].origin == PeerId{"C"});

    auto comp = t.composition_of(m.out_stream, 3.0);
    CHECK(comp.size() == 6);  // 3 origins x {audio, video}
    CHECK(comp.count({PeerId{"B"}, TrackKind::video}) == 1);
}

TEST_CASE("sharing the output before any source is added still works") {
    StreamTable t;
    auto& b = make_local(t, "B");
    MergedStream& m = t.merge_create(PeerId{"A"}, 15.0, 0.0);
    // A consumer holding out_stream at t=1 sees nothing yet.
    CHECK(t.composition_of(m.out_stream, 1.0).empty());
    t.merge_add(m, b, 5.0);
    // The same stream id now reflects the source.
    CHECK(t.composition_of(m.out_stream, 5.0).count({PeerId{"B"}, TrackKind::video}) == 1);
    CHECK(t.composition_of(m.out_stream, 1.0).empty());  // history preserved
}

TEST_CASE("adding the same origin twice is rejected") {
    StreamTable t;
    auto& b = make_local(t, "B");
    MergedStream& m = t.merge_create(PeerId{"A"}, 15.0, 0.0);
    t.merge_add(m, b, 1.0);
    CHECK_THROWS_AS(t.merge_add(m, b, 2.0), std::invalid_argument);
}

TEST_CASE("merge_remove prunes an origin; unknown origins warn and no-op") {
    StreamTable t;
    auto& a = make_local(t, "A");
    auto& b = make_local(t, "B");
    auto& c = make_local(t, "C");
    MergedStream& m = t.merge_create(PeerId{"A"}, 15.0, 0.0);
    t.merge_add(m, a, 1.0);
    t.merge_add(m, b, 2.0);
    t.merge_add(m, c, 3.0);

    auto res = t.merge_remove(m, PeerId{"B"}, 4.0);
    CHECK(res.removed);
    CHECK(m.video_sources.size() == 2);
    CHECK(m.layout_rule() == LayoutPolicy::Rule::side_by_side);
    CHECK(t.composition_of(m.out_stream, 4.0).count({PeerId{"B"}, TrackKind::video}) == 0);

    auto unknown = t.merge_remove(m, PeerId{"Z"}, 5.0);
    CHECK_FALSE(unknown.removed);
    CHECK_FALSE(unknown.warning.empty());
    CHECK(m.video_sources.size() == 2);
}

TEST_CASE("removing the last source leaves a valid, empty output") {
    StreamTable t;
    auto& a = make_local(t, "A");
    MergedStream& m = t.merge_create(PeerId{"A"}, 15.0, 0.0);
    t.merge_add(m, a, 1.0);
    t.merge_remove(m, PeerId{"A"}, 2.0);
    CHECK(m.video_sources.empty());
    CHECK(t.has(m.out_stream));
    CHECK(t.composition_of(m.out_stream, 3.0).empty());
    // Consumers keep receiving composition-of-zero frames on the same stream.
    CHECK(t.get(m.out_stream).tracks.size() == 2);
}

TEST_CASE("out_stream identity never changes across add/remove") {
    StreamTable t;
    auto& a = make_local(t, "A");
    auto& b = make_local(t, "B");
    MergedStream& m = t.merge_create(PeerId{"A"}, 15.0, 0.0);
    StreamId before = m.out_stream;
    t.merge_add(m, a, 1.0);
    t.merge_add(m, b, 2.0);
    t.merge_remove(m, PeerId{"A"}, 3.0);
    CHECK(m.out_stream == before);
}

TEST_CASE("composition_of: local stream is its own tracks") {
    StreamTable t;
    auto& a = make_local(t, "A");
    auto comp = t.composition_of(a.id, 100.0);
    CHECK(comp.size() == 2);
    CHECK(comp.count({PeerId{"A"}, TrackKind::video}) == 1);
    CHECK(comp.count({PeerId{"A"}, TrackKind::audio}) == 1);
}

TEST_CASE("composition_of: remote view is the sender delayed by path latency") {
    StreamTable t;
    auto& a = make_local(t, "A");
    MergedStream& m = t.merge_create(PeerId{"A"}, 15.0, 0.0);
    t.merge_add(m, a, 100.0);

    ConnectionId conn{PeerId{"A"}, PeerId{"B"}, 0};
    MediaStream& view = t.create_remote_view(StreamId{"rv-B"}, conn, m.out_stream, 40.0);
    view.add_track(Track{TrackId{"m-v"}, TrackKind::video, PeerId{"A"}, "remote"});

    // Before the source reaches the view (path latency 40), nothing shows.
    CHECK(t.composition_of(view.id, 120.0).empty());
    CHECK(t.composition_of(view.id, 140.0).count({PeerId{"A"}, TrackKind::video}) == 1);
}

TEST_CASE("composition_of is monotone under merge_add") {
    StreamTable t;
    RngStream rng(77, 3);
    std::vector<std::string> names{"A", "B", "C", "D", "E", "F"};
    for (const auto& n : names) make_local(t, n);
    MergedStream& m = t.merge_create(PeerId{"A"}, 15.0, 0.0);

    Composition prev;
    double now = 1.0;
    for (const auto& n : names) {
        if (rng.bernoulli(0.3)) continue;
        t.merge_add(m, t.get(StreamId{"local-" + n}), now);
        auto comp = t.composition_of(m.out_stream, now);
        for (const auto& e : prev) CHECK(comp.count(e) == 1);
        prev = comp;
        now += 1.0;
    }
}

TEST_CASE("unknown stream queries are an error") {
    StreamTable t;
    CHECK_THROWS_AS(t.composition_of(StreamId{"nope"}, 0.0), std::invalid_argument);
}

TEST_CASE("a stream holds at most one track per (origin, kind)") {
    StreamTable t;
    auto& a = make_local(t, "A");
    CHECK_THROWS_AS(a.add_track(Track{TrackId{"A-v2"}, TrackKind::video, PeerId{"A"}, "dup"}),
                    std::invalid_argument);
    // A different origin is fine.
    a.add_track(Track{TrackId{"B-v"}, TrackKind::video, PeerId{"B"}, "ok"});
    CHECK(a.tracks.size() == 3);
}
