#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>

namespace snow {

namespace detail {
template <class Tag>
struct StringId {
    std::string value;

    StringId() = default;
    explicit StringId(std::string v) : value(std::move(v)) {}

    bool empty() const { return value.empty(); }
    const std::string& str() const { return value; }

    auto operator<=>(const StringId&) const = default;
};
}  // namespace detail

using PeerId = detail::StringId<struct PeerTag>;
using CallId = detail::StringId<struct CallTag>;
using RoomId = detail::StringId<struct RoomTag>;
using StreamId = detail::StringId<struct StreamTag>;
using TrackId = detail::StringId<struct TrackTag>;
using MergeId = detail::StringId<struct MergeTag>;

/// Identifies one connection between an ordered (caller, callee) pair.
/// The sequence number distinguishes repeat connections between the same
/// pair, e.g. the one-way re-share leg some call models open.
struct ConnectionId {
    PeerId caller;
    PeerId callee;
    int seq = 0;

    auto operator<=>(const ConnectionId&) const = default;

    std::string str() const {
        return caller.value + "->" + callee.value + "#" + std::to_string(seq);
    }
};

}  // namespace snow

template <class Tag>
struct std::hash<snow::detail::StringId<Tag>> {
    std::size_t operator()(const snow::detail::StringId<Tag>& id) const noexcept {
        return std::hash<std::string>{}(id.value);
    }
};
