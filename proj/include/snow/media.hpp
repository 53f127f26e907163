#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "snow/ids.hpp"
#include "snow/sim.hpp"

namespace snow {

enum class TrackKind { audio, video };

inline const char* to_string(TrackKind k) { return k == TrackKind::audio ? "audio" : "video"; }

struct Track {
    TrackId id;
    TrackKind kind = TrackKind::video;
    PeerId origin;
    std::string synthetic_label;  // used by tests to verify composition contents
};

/// One (origin, kind) element of what a viewer would see on a stream.
struct CompositionEntry {
    PeerId origin;
    TrackKind kind = TrackKind::video;
    auto operator<=>(const CompositionEntry&) const = default;
};

using Composition = std::set<CompositionEntry>;

struct LocalProvenance {};
struct RemoteProvenance {
    ConnectionId connection;
    StreamId sender_stream;     // the stream as known at the sending side
    double path_latency_ms = 0;  // mean one-way latency, for delayed queries
};
struct MergedProvenance {
    MergeId merge;
};

using Provenance = std::variant<LocalProvenance, RemoteProvenance, MergedProvenance>;

struct MediaStream {
    StreamId id;
    std::vector<Track> tracks;  // insertion order preserved
    Provenance provenance = LocalProvenance{};

    /// At most one audio and one video track per origin peer.
    void add_track(const Track& t) {
        for (const auto& existing : tracks) {
            if (existing.origin == t.origin && existing.kind == t.kind) {
                throw std::invalid_argument("stream " + id.value + " already has a " +
                                            std::string(to_string(t.kind)) + " track from " +
                                            t.origin.value);
            }
        }
        tracks.push_back(t);
    }

    const Track* find_track(TrackKind kind, const PeerId& origin) const {
        for (const auto& t : tracks) {
            if (t.kind == kind && t.origin == origin) return &t;
        }
        return nullptr;
    }
};

/// Video frame / audio chunk metadata. No pixel or sample data is carried:
/// a frame is (timestamp, composition set, size), which is all the
/// evaluation needs.
struct FrameInfo {
    TrackId track;
    std::uint64_t frame_seq = 0;
    SimTime capture_ts = 0;         // timestamp of this sender's media clock
    SimTime origin_capture_ts = 0;  // oldest constituent capture (movement-to-render latency)
    std::size_t size_bytes = 0;
    std::shared_ptr<const std::vector<PeerId>> composition;  // sorted origins
};

struct MediaPacket {
    TrackId track;
    std::uint64_t rtp_seq = 0;  // strictly increasing per (connection, track)
    std::uint64_t frame_seq = 0;
    int packet_index = 0;
    int packets_in_frame = 1;
    SimTime capture_ts = 0;
    SimTime origin_capture_ts = 0;
    std::size_t size_bytes = 0;
    std::shared_ptr<const std::vector<PeerId>> composition;
};

struct MediaConstants {
    double video_fps = 15.0;
    std::size_t video_frame_bytes = 30000;
    std::size_t video_extra_source_bytes = 10000;  // per extra source in a composed frame
    std::size_t packet_bytes = 1200;
    double audio_packets_per_s = 50.0;
    std::size_t audio_packet_bytes = 160;

    // CPU work units.
    double cost_video_encode = 2.0;
    double cost_video_encode_extra_source = 0.5;
    double cost_video_decode = 1.0;
    double cost_compose_per_source = 4.5;
    double cost_audio = 0.01;

    double frame_interval_ms() const { return 1000.0 / video_fps; }
    double audio_interval_ms() const { return 1000.0 / audio_packets_per_s; }

    std::size_t composed_frame_bytes(std::size_t sources) const {
        if (sources == 0) return video_frame_bytes;
        return video_frame_bytes + video_extra_source_bytes * (sources - 1);
    }

    double video_encode_cost(std::size_t sources) const {
        if (sources <= 1) return cost_video_encode;
        return cost_video_encode + cost_video_encode_extra_source * static_cast<double>(sources - 1);
    }

    int packets_for(std::size_t frame_bytes) const {
        return static_cast<int>((frame_bytes + packet_bytes - 1) / packet_bytes);
    }
};

}  // namespace snow
