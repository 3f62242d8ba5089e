#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "firelgcp/model.hpp"
#include "firelgcp/simulate.hpp"

namespace firelgcp::fixtures {

/// Small simulated data set: 5 x 6 cells, `years` years, one smooth static and
/// one white-noise dynamic covariate.
inline SimDataset small_dataset(ModelVariant variant, int years = 3, std::uint64_t seed = 5,
                                std::vector<double> seasonal = std::vector<double>(12, 0.0)) {
  SimConfig c;
  c.n_rows = 5;
  c.n_cols = 6;
  c.years = years;
  c.variant = variant;
  c.include_time = true;
  c.beta = {-1.5, 0.2, 0.4, -0.3};
  c.covariates = {{"elev", CovariateKind::smooth_field, false, 0.0, 6.0},
                  {"temp", CovariateKind::white_noise, true, 0.0, 0.0}};
  c.hyper = {8.0, 0.8, 0.6, 4.0};
  c.mesh = {3.0, 8.0, 6.0};
  c.seasonal = std::move(seasonal);
  c.seed = seed;
  c.seed_set = true;
  return simulate_dataset(c);
}

inline LatentModel model_for(const SimDataset& d, ModelVariant variant, const PriorSpec& priors = {}) {
  CovariateTable cov = d.covariates;
  cov.standardize();
  return LatentModel::build(d.records, cov, d.grid, has_spatial(variant) ? d.mesh : nullptr, variant, priors);
}

}  // namespace firelgcp::fixtures
