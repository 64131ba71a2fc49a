#pragma once

#include <filesystem>

#include "json.hpp"

#include "cy/grid.hpp"

namespace cy {

nlohmann::json grid_to_json(const PeriodicGrid& grid);
PeriodicGrid grid_from_json(const nlohmann::json& j);

/// Writes `<stem>.bin` (little-endian float64, row-major) and the `<stem>.json`
/// sidecar {dim, points_per_axis, lengths, normalized}.
void write_field(const ScalarField& field, const std::filesystem::path& stem);
ScalarField read_field(const std::filesystem::path& bin, const std::filesystem::path& sidecar);
ScalarField read_field(const std::filesystem::path& stem);

/// One value per line under a "value" header; only for 1D and 2D grids.
ScalarField read_csv_field(const std::filesystem::path& csv, const PeriodicGrid& grid);

}  // namespace cy
