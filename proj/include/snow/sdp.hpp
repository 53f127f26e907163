#pragma once

#include <map>
#include <string>
#include <vector>

#include "snow/ids.hpp"
#include "snow/media.hpp"

namespace snow {

// Registered coordination attributes (wire-visible, exact strings).
inline constexpr const char* kAttrExpectCall = "x-snow-expect-call";
inline constexpr const char* kAttrCallParty = "x-snow-call-party";
inline constexpr const char* kAttrModel = "x-snow-model";
inline constexpr const char* kAttrNoReturnMedia = "x-snow-no-return-media";

enum class SdpKind { offer, answer };

struct MediaLine {
    TrackKind kind = TrackKind::video;
    TrackId track;
    PeerId origin;
    auto operator<=>(const MediaLine&) const = default;
};

/// Simplified session description: the media lines mirror exactly the
/// tracks attached to the connection when it was created, plus coordination
/// attributes.
struct SessionDescription {
    SdpKind kind = SdpKind::offer;
    PeerId from;
    PeerId to;
    std::vector<MediaLine> media_lines;
    std::map<std::string, std::string> attributes;

    bool has_attribute(const std::string& name) const { return attributes.count(name) > 0; }
    std::string attribute(const std::string& name) const {
        auto it = attributes.find(name);
        return it == attributes.end() ? std::string{} : it->second;
    }

    bool operator==(const SessionDescription&) const = default;
};

}  // namespace snow
