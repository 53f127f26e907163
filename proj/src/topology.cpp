#include "snow/topology.hpp"

namespace snow {

std::optional<TopologyModel> topology_from_string(const std::string& s) {
    if (s == "MESH") return TopologyModel::MESH;
    if (s == "SFU") return TopologyModel::SFU;
    if (s == "MCU") return TopologyModel::MCU;
    if (s == "MCUTWO") return TopologyModel::MCUTWO;
    if (s == "MCUMULTI") return TopologyModel::MCUMULTI;
    return std::nullopt;
}

}  // namespace snow
