#include "cy/field_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cy/error.hpp"

namespace cy {

namespace fs = std::filesystem;

namespace {

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
  return r;
}

fs::path with_suffix(const fs::path& stem, const char* ext) {
  fs::path p = stem;
  p += ext;
  return p;
}

}  // namespace

nlohmann::json grid_to_json(const PeriodicGrid& grid) {
  return {{"dim", grid.dim()},
          {"points_per_axis", grid.points_per_axis()},
          {"lengths", grid.lengths()},
          {"normalized", grid.normalized()}};
}

PeriodicGrid grid_from_json(const nlohmann::json& j) {
  try {
    const int dim = j.at("dim").get<int>();
    auto pts = j.at("points_per_axis").get<std::vector<int>>();
    auto len = j.at("lengths").get<std::vector<double>>();
    if (static_cast<int>(pts.size()) != dim || static_cast<int>(len.size()) != dim)
      throw Error(ErrorKind::ConfigError, "sidecar dim disagrees with axis arrays");
    return PeriodicGrid(std::move(pts), std::move(len), j.value("normalized", true));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("grid sidecar: ") + e.what());
  }
}

void write_field(const ScalarField& field, const fs::path& stem) {
  {
    std::ofstream out(with_suffix(stem, ".bin"), std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + with_suffix(stem, ".bin").string());
    for (double v : field.values()) {
      const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
      out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
  }
  std::ofstream side(with_suffix(stem, ".json"));
  if (!side) throw Error(ErrorKind::IoError, "cannot write " + with_suffix(stem, ".json").string());
  side << grid_to_json(field.grid()).dump(2) << '\n';
}

ScalarField read_field(const fs::path& bin, const fs::path& sidecar) {
  std::ifstream side(sidecar);
  if (!side) throw Error(ErrorKind::IoError, "cannot open " + sidecar.string());
  nlohmann::json j;
  try {
    side >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, sidecar.string() + ": " + e.what());
  }
  const PeriodicGrid grid = grid_from_json(j);

  std::ifstream in(bin, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + bin.string());
  std::vector<double> values(grid.size());
  for (double& v : values) {
    std::uint64_t bits = 0;
    if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits))
      throw Error(ErrorKind::IoError, bin.string() + ": truncated field data");
    v = std::bit_cast<double>(to_little_endian(bits));
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw Error(ErrorKind::IoError, bin.string() + ": trailing bytes after field data");
  return ScalarField(grid, std::move(values));
}

ScalarField read_field(const fs::path& stem) {
  return read_field(with_suffix(stem, ".bin"), with_suffix(stem, ".json"));
}

ScalarField read_csv_field(const fs::path& csv, const PeriodicGrid& grid) {
  if (grid.dim() > 2) throw Error(ErrorKind::ConfigError, "CSV import supports 1D and 2D grids only");
  std::ifstream in(csv);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + csv.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::ConfigError, csv.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "value") throw Error(ErrorKind::ConfigError, csv.string() + ": header must be \"value\"");
  std::vector<double> values;
  values.reserve(grid.size());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream is(line);
    double v = 0.0;
    if (!(is >> v)) {
      throw Error(ErrorKind::ConfigError, csv.string() + ": line " + std::to_string(lineno) + " is not a number");
    }
    values.push_back(v);
  }
  if (values.size() != grid.size())
    throw Error(ErrorKind::ConfigError, csv.string() + ": expected " + std::to_string(grid.size()) +
                                            " values, found " + std::to_string(values.size()));
  return ScalarField(grid, std::move(values));
}

}  // namespace cy
