#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "firelgcp/grid.hpp"
#include "firelgcp/kriging.hpp"
#include "firelgcp/mesh.hpp"
#include "firelgcp/model.hpp"
#include "firelgcp/variogram.hpp"

namespace firelgcp::io {

namespace fs = std::filesystem;

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

/// Minimal CSV table: header plus rows of raw fields. No quoting.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // source line of each row

  /// Index of a column; throws ConfigError naming the file when absent.
  std::size_t column(const std::string& name) const;
  std::string source;
};

CsvTable read_csv(const fs::path& path);
double parse_double(const std::string& s, const std::string& context);
long parse_long(const std::string& s, const std::string& context);

/// Headered text raster (ncols, nrows, xllcorner, yllcorner, cellsize,
/// NODATA_value) with the northern row first.
FineRaster read_ascii_raster(const fs::path& path);
void write_ascii_raster(const fs::path& path, const FineRaster& raster);
/// Columnar x,y,value raster of cell centres on a regular lattice.
FineRaster read_raster_csv(const fs::path& path);
/// Either format, by extension (.csv or anything else).
FineRaster read_raster(const fs::path& path);

/// Grid mask: headered raster with nonzero values for active cells.
GridSpec read_grid(const fs::path& path);
void write_grid(const fs::path& path, const GridSpec& grid);

/// static.csv (cell_id, names...) and dynamic.csv (cell_id, month_index,
/// names...). standardization.csv is read when present.
CovariateTable read_covariates(const fs::path& dir);
void write_covariates(const fs::path& dir, const CovariateTable& table);

/// station_id, x_km, y_km, month_index, variable, value. Missing months may
/// be absent or carry NA.
StationData read_stations(const fs::path& path, const std::string& variable);
void write_stations(const fs::path& path, const StationData& data);

/// cell_id, month_index, count[, exposure, n_aggregated].
std::vector<CountRecord> read_counts(const fs::path& path, double default_exposure = 4.0);
void write_counts(const fs::path& path, const std::vector<CountRecord>& records, bool with_exposure);

/// key = value lines, '#' comments. Duplicate keys are rejected.
using KeyValues = std::map<std::string, std::string>;
KeyValues read_key_values(const fs::path& path);
/// Throws ConfigError naming the first key that is not in `allowed`.
void reject_unknown_keys(const KeyValues& kv, const std::vector<std::string>& allowed, const std::string& what);
void write_key_values(const fs::path& path, const std::vector<std::pair<std::string, std::string>>& kv);

VariogramModel read_variogram_model(const fs::path& path);
void write_variogram_model(const fs::path& path, const VariogramModel& model, const std::string& variable,
                           double objective);

std::vector<VariogramBin> read_empirical_variogram(const fs::path& path);
void write_empirical_variogram(const fs::path& path, const std::vector<VariogramBin>& bins);

void write_mesh(const fs::path& vertices_csv, const fs::path& triangles_csv, const Mesh& mesh);
Mesh read_mesh(const fs::path& vertices_csv, const fs::path& triangles_csv);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const fs::path& path);

void ensure_directory(const fs::path& dir);

}  // namespace firelgcp::io
