#pragma once

#include <string>
#include <vector>

#include "diformer/matching.hpp"
#include "diformer/supervision.hpp"

namespace diformer {

// Minimal RGB PNG writer (stored-deflate zlib stream, no external deps).
void write_png(const std::string &path, int width, int height,
               const std::vector<unsigned char> &rgb);

// N × t_m mask heatmap, one row band per slot, dark-to-bright by value.
void plot_mask_heatmap(const std::string &path, const std::vector<double> &masks, int n, int t_m,
                       int cell = 4);

// Per-speaker timeline strips. When `reference` is non-empty, its strips are
// drawn above the primary set for visual comparison, aligned in time.
void plot_timeline(const std::string &path, const std::vector<SpeechSegment> &segments,
                   double total_duration, const std::vector<SpeechSegment> &reference = {},
                   int width = 800);

} // namespace diformer
