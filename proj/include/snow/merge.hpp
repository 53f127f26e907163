#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "snow/ids.hpp"
#include "snow/media.hpp"

namespace snow {

/// Fixed layout ladder by source count: 1 fills the frame, 2 sit side by
/// side, 3-4 use a 2x2 grid, 5-9 a 3x3 grid, always in insertion order.
struct LayoutPolicy {
    enum class Rule { full, side_by_side, grid2x2, grid3x3 };

    struct Cell {
        int row = 0;
        int col = 0;
        auto operator<=>(const Cell&) const = default;
    };

    static Rule rule_for(std::size_t sources);
    static std::vector<Cell> cells_for(std::size_t sources);
};

const char* to_string(LayoutPolicy::Rule r);

/// A live composition of source tracks. The output stream identity never
/// changes as sources come and go, so consumers keep playing the same
/// stream without renegotiation.
struct MergedStream {
    struct Source {
        TrackId track;
        PeerId origin;
        StreamId stream;
    };

    MergeId merge_id;
    PeerId owner;
    std::vector<Source> video_sources;  // insertion order
    std::vector<Source> audio_sources;
    double output_fps = 15.0;
    StreamId out_stream;
    bool audio_excludes_self = false;  // per-consumer audio mix that drops the listener's own audio

    // Add/remove history so composition can be queried at any past time.
    struct HistoryEntry {
        SimTime at;
        PeerId origin;
        StreamId stream;  // empty on removals
        bool added;
    };
    std::vector<HistoryEntry> history;

    /// Active (origin -> source stream) map at time `at`.
    std::map<PeerId, StreamId> sources_at(SimTime at) const;

    LayoutPolicy::Rule layout_rule() const { return LayoutPolicy::rule_for(video_sources.size()); }
    std::vector<LayoutPolicy::Cell> layout_cells() const {
        return LayoutPolicy::cells_for(video_sources.size());
    }

    std::vector<PeerId> source_origins_at(SimTime at) const;
    bool has_origin(const PeerId& origin) const;
};

/// Owns every stream and merge of one simulation and answers
/// composition queries.
class StreamTable {
public:
    MediaStream& create_local_stream(const PeerId& owner, const StreamId& id);
    MediaStream& create_remote_view(const StreamId& id, const ConnectionId& conn,
                                    const StreamId& sender_stream, double path_latency_ms);
    MediaStream& get(const StreamId& id);
    const MediaStream& get(const StreamId& id) const;
    bool has(const StreamId& id) const { return streams_.count(id) > 0; }

    /// Creates an empty merge whose output stream is immediately shareable.
    MergedStream& merge_create(const PeerId& owner, double fps, SimTime now);

    /// Appends the stream's tracks as sources. Rejects a second source with
    /// the same (origin, kind) — that indicates a call-model bug upstream.
    void merge_add(MergedStream& m, const MediaStream& source, SimTime now);

    struct RemoveResult {
        bool removed = false;
        std::string warning;
    };
    /// Removes every source from `origin`. Unknown origins are a warning,
    /// not an error, so teardown paths can be idempotent.
    RemoveResult merge_remove(MergedStream& m, const PeerId& origin, SimTime now);

    MergedStream& merge(const MergeId& id);
    const MergedStream& merge(const MergeId& id) const;
    const MergedStream* merge_of_stream(const StreamId& id) const;

    /// What a viewer of `stream` sees at time `at`: the transitive union of
    /// origins for merges, the sender's delayed composition for remote views.
    Composition composition_of(const StreamId& stream, SimTime at) const;

    std::vector<MergeId> merges_owned_by(const PeerId& owner) const;

private:
    std::map<StreamId, MediaStream> streams_;
    std::map<MergeId, MergedStream> merges_;
    int next_merge_ = 0;
    int next_stream_ = 0;
};

}  // namespace snow
