#pragma once

#include <filesystem>

#include "lcmlai/types.hpp"

namespace lcmlai {

/// Plain-text grid: a "rows cols" header line, then one line per row with
/// values printed to 17 significant digits.
void write_matrix(const std::filesystem::path& path, const MatrixXd& m);
MatrixXd read_matrix(const std::filesystem::path& path);

/// Binary PPM heatmap, `cell` pixels per entry. Colours run blue (negative)
/// through white (zero) to red (positive), scaled by the largest magnitude.
void write_heatmap(const std::filesystem::path& path, const MatrixXd& m, int cell = 16);

}  // namespace lcmlai
