#include "snow/merge.hpp"

#include <algorithm>
#include <stdexcept>

namespace snow {

LayoutPolicy::Rule LayoutPolicy::rule_for(std::size_t sources) {
    if (sources <= 1) return Rule::full;
    if (sources == 2) return Rule::side_by_side;
    if (sources <= 4) return Rule::grid2x2;
    if (sources <= 9) return Rule::grid3x3;
    throw std::invalid_argument("layout supports at most 9 sources, got " + std::to_string(sources));
}

std::vector<LayoutPolicy::Cell> LayoutPolicy::cells_for(std::size_t sources) {
    Rule rule = rule_for(sources);
    int cols = 1;
    switch (rule) {
        case Rule::full: cols = 1; break;
        case Rule::side_by_side: cols = 2; break;
        case Rule::grid2x2: cols = 2; break;
        case Rule::grid3x3: cols = 3; break;
    }
    std::vector<Cell> cells;
    cells.reserve(sources);
    for (std::size_t i = 0; i < sources; ++i) {
        cells.push_back(Cell{static_cast<int>(i) / cols, static_cast<int>(i) % cols});
    }
    return cells;
}

const char* to_string(LayoutPolicy::Rule r) {
    switch (r) {
        case LayoutPolicy::Rule::full: return "full";
        case LayoutPolicy::Rule::side_by_side: return "side_by_side";
        case LayoutPolicy::Rule::grid2x2: return "grid2x2";
        case LayoutPolicy::Rule::grid3x3: return "grid3x3";
    }
    return "?";
}

std::vector<PeerId> MergedStream::source_origins_at(SimTime at) const {
    std::vector<PeerId> origins;
    for (const auto& [origin, stream] : sources_at(at)) origins.push_back(origin);
    return origins;
}

std::map<PeerId, StreamId> MergedStream::sources_at(SimTime at) const {
    std::map<PeerId, StreamId> active;
    for (const auto& h : history) {
        if (h.at > at) break;
        if (h.added) {
            active[h.origin] = h.stream;
        } else {
            active.erase(h.origin);
        }
    }
    return active;
}

bool MergedStream::has_origin(const PeerId& origin) const {
    for (const auto& s : video_sources) {
        if (s.origin == origin) return true;
    }
    for (const auto& s : audio_sources) {
        if (s.origin == origin) return true;
    }
    return false;
}

MediaStream& StreamTable::create_local_stream(const PeerId& owner, const StreamId& id) {
    auto [it, inserted] = streams_.try_emplace(id);
    if (!inserted) throw std::invalid_argument("stream already exists: " + id.value);
    it->second.id = id;
    it->second.provenance = LocalProvenance{};
    (void)owner;
    return it->second;
}

MediaStream& StreamTable::create_remote_view(const StreamId& id, const ConnectionId& conn,
                                             const StreamId& sender_stream, double path_latency_ms) {
    auto [it, inserted] = streams_.try_emplace(id);
    if (!inserted) throw std::invalid_argument("stream already exists: " + id.value);
    it->second.id = id;
    it->second.provenance = RemoteProvenance{conn, sender_stream, path_latency_ms};
    return it->second;
}

MediaStream& StreamTable::get(const StreamId& id) {
    auto it = streams_.find(id);
    if (it == streams_.end()) throw std::invalid_argument("unknown stream: " + id.value);
    return it->second;
}

const MediaStream& StreamTable::get(const StreamId& id) const {
    auto it = streams_.find(id);
    if (it == streams_.end()) throw std::invalid_argument("unknown stream: " + id.value);
    return it->second;
}

MergedStream& StreamTable::merge_create(const PeerId& owner, double fps, SimTime now) {
    if (fps <= 0) throw std::invalid_argument("merge output fps must be > 0");
    MergeId id{"merge-" + owner.value + "-" + std::to_string(next_merge_++)};
    MergedStream m;
    m.merge_id = id;
    m.owner = owner;
    m.output_fps = fps;
    m.out_stream = StreamId{id.value + "-out"};

    MediaStream& out = streams_[m.out_stream];
    out.id = m.out_stream;
    out.provenance = MergedProvenance{id};
    out.add_track(Track{TrackId{m.out_stream.value + "-v"}, TrackKind::video, owner, "merged-video"});
    out.add_track(Track{TrackId{m.out_stream.value + "-a"}, TrackKind::audio, owner, "merged-audio"});

    (void)now;
    auto [it, _] = merges_.emplace(id, std::move(m));
    return it->second;
}

void StreamTable::merge_add(MergedStream& m, const MediaStream& source, SimTime now) {
    if (source.tracks.empty()) throw std::invalid_argument("cannot merge an empty stream");
    for (const Track& t : source.tracks) {
        const auto& list = t.kind == TrackKind::video ? m.video_sources : m.audio_sources;
        for (const auto& s : list) {
            if (s.origin == t.origin) {
                throw std::invalid_argument("merge " + m.merge_id.value + " already has a " +
                                            std::string(to_string(t.kind)) + " source from " +
                                            t.origin.value);
            }
        }
    }
    for (const Track& t : source.tracks) {
        auto& list = t.kind == TrackKind::video ? m.video_sources : m.audio_sources;
        list.push_back(MergedStream::Source{t.id, t.origin, source.id});
    }
    m.history.push_back({now, source.tracks.front().origin, source.id, true});
}

StreamTable::RemoveResult StreamTable::merge_remove(MergedStream& m, const PeerId& origin, SimTime now) {
    RemoveResult res;
    auto prune = [&](std::vector<MergedStream::Source>& list) {
        auto before = list.size();
        list.erase(std::remove_if(list.begin(), list.end(),
                                  [&](const MergedStream::Source& s) { return s.origin == origin; }),
                   list.end());
        return list.size() != before;
    };
    bool removed_v = prune(m.video_sources);
    bool removed_a = prune(m.audio_sources);
    res.removed = removed_v || removed_a;
    if (res.removed) {
        m.history.push_back({now, origin, StreamId{}, false});
    } else {
        res.warning = "merge " + m.merge_id.value + " has no source from " + origin.value;
    }
    return res;
}

MergedStream& StreamTable::merge(const MergeId& id) {
    auto it = merges_.find(id);
    if (it == merges_.end()) throw std::invalid_argument("unknown merge: " + id.value);
    return it->second;
}

const MergedStream& StreamTable::merge(const MergeId& id) const {
    auto it = merges_.find(id);
    if (it == merges_.end()) throw std::invalid_argument("unknown merge: " + id.value);
    return it->second;
}

const MergedStream* StreamTable::merge_of_stream(const StreamId& id) const {
    auto it = streams_.find(id);
    if (it == streams_.end()) return nullptr;
    if (const auto* mp = std::get_if<MergedProvenance>(&it->second.provenance)) {
        return &merge(mp->merge);
    }
    return nullptr;
}

Composition StreamTable::composition_of(const StreamId& stream, SimTime at) const {
    const MediaStream& s = get(stream);
    Composition out;
    if (std::holds_alternative<LocalProvenance>(s.provenance)) {
        for (const Track& t : s.tracks) out.insert({t.origin, t.kind});
        return out;
    }
    if (const auto* rp = std::get_if<RemoteProvenance>(&s.provenance)) {
        SimTime then = at - rp->path_latency_ms;
        if (then < 0) return out;
        return composition_of(rp->sender_stream, then);
    }
    const auto* mp = std::get_if<MergedProvenance>(&s.provenance);
    const MergedStream& m = merge(mp->merge);
    // Transitive: each active source contributes whatever its own stream shows.
    for (const auto& [origin, source_stream] : m.sources_at(at)) {
        for (const auto& e : composition_of(source_stream, at)) out.insert(e);
    }
    return out;
}

std::vector<MergeId> StreamTable::merges_owned_by(const PeerId& owner) const {
    std::vector<MergeId> out;
    for (const auto& [id, m] : merges_) {
        if (m.owner == owner) out.push_back(id);
    }
    return out;
}

}  // namespace snow
