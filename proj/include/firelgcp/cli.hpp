#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "firelgcp/grid.hpp"
#include "firelgcp/laplace.hpp"
#include "firelgcp/mesh.hpp"
#include "firelgcp/model.hpp"
#include "firelgcp/simulate.hpp"

namespace firelgcp::cli {

namespace fs = std::filesystem;

/// Runs one verb. Returns 0 on success, 2 for invalid input or
/// configuration, 3 for numerical failures, 1 otherwise. Errors are reported
/// as one JSON line on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

/// Settings read from a model configuration file.
struct ModelConfig {
  ModelVariant variant = ModelVariant::ar1_yearly;
  PriorSpec priors;
  HyperParams init;
  MeshOptions mesh;
  NewtonOptions newton;
  int budget = 400;
  int restarts = 3;
  std::uint64_t seed = 1;
  double default_exposure = 4.0;
};

/// Parses and validates a key-value model configuration. Unknown keys and
/// invalid values raise ConfigError naming the key.
ModelConfig read_model_config(const fs::path& path);
ModelConfig model_config_from_keys(const std::map<std::string, std::string>& kv, const std::string& source);

/// Parses a simulation configuration file.
SimConfig read_sim_config(const fs::path& path);

void write_fit_result(const fs::path& dir, const FitResult& fit, const LatentModel& model, const ModelConfig& config);

struct RenderedRaster {
  int month = 0;
  fs::path path;
};

/// One headered text raster per month named <prefix>_<year>-<month>.asc.
/// Inactive cells and cells without a value carry the nodata sentinel.
std::vector<RenderedRaster> render_rasters(const std::vector<int>& cell_ids, const std::vector<int>& months,
                                           const std::vector<double>& values, const GridSpec& grid,
                                           const std::vector<int>& requested_months, int start_year,
                                           const fs::path& out_dir, const std::string& prefix);

}  // namespace firelgcp::cli
