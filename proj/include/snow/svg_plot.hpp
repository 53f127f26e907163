#pragma once

#include <string>
#include <vector>

#include "snow/experiment.hpp"

namespace snow {

/// Renders one SVG per metric from results.csv rows: a point series per
/// model (per run: initiator first, constrained peer last) with a band of
/// half a standard deviation around the model mean. Returns the files
/// written. Regeneration is byte-identical.
std::vector<std::string> render_plots(const std::vector<ResultRow>& rows,
                                      const std::vector<std::string>& peer_order,
                                      const std::string& out_dir);

}  // namespace snow
