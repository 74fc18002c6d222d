#pragma once

#include "tod/train/fit.hpp"

#include <string>
#include <vector>

namespace tod::tools {

// Recall@1 (solid) and MRR (dashed) per epoch for the dev set and every
// monitor, as a standalone SVG document.
std::string history_svg(const std::vector<train::EpochRecord>& history, const std::string& title);

}  // namespace tod::tools
