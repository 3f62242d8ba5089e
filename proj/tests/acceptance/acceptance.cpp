// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "firelgcp/cli.hpp"
#include "firelgcp/io.hpp"
#include "firelgcp/kriging.hpp"
#include "firelgcp/laplace.hpp"
#include "firelgcp/mesh.hpp"
#include "firelgcp/model.hpp"
#include "firelgcp/rng.hpp"
#include "firelgcp/simulate.hpp"
#include "firelgcp/spde.hpp"
#include "firelgcp/variogram.hpp"

using namespace firelgcp;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

double rel_err(double value, double truth) { return std::fabs(value - truth) / std::fabs(truth); }

void note(const std::string& s) { std::cerr << "  " << s << std::endl; }

// ---------------------------------------------------------------- 1
Outcome variogram_round_trip() {
  const auto t0 = Clock::now();
  const auto truth = VariogramModel::separable({0.562, 60.0, 0.438}, {0.562, 5.33, 0.438}, 0.019);
  const auto init = VariogramModel::separable({0.5, 30.0, 0.5}, {0.5, 3.0, 0.5}, 0.03);
  CounterRng place(101);
  std::vector<Point2> stations;
  for (int s = 0; s < 17; ++s) stations.push_back({250.0 * place.uniform(), 150.0 * place.uniform()});
  int good = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const StationData data = simulate_stations(truth, stations, 282, 1.5, seed, "PRCP");
    const auto table = empirical_variogram(data, default_space_edges(data), 12);
    VariogramModel fitted = init;
    try {
      fitted = fit_variogram(table, VariogramKind::separable, init).model;
    } catch (const VariogramFitError& e) {
      fitted = e.best().model;
    }
    const double es = rel_err(fitted.sill(), 0.019);
    const double er = rel_err(fitted.spatial().range, 60.0);
    const double et = rel_err(fitted.temporal().range, 5.33);
    const bool ok = es <= 0.25 && er <= 0.25 && et <= 0.25;
    good += ok;
    note("seed " + std::to_string(seed) + ": sill " + fmt(fitted.sill()) + " spatial range " +
         fmt(fitted.spatial().range) + " temporal range " + fmt(fitted.temporal().range) + (ok ? "" : "  (miss)"));
  }
  const double secs = seconds_since(t0);
  return {good >= 8 && secs < 60.0, std::to_string(good) + "/10 seeds within 25%, " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 2
Outcome kriging_exactness() {
  const auto model = VariogramModel::product_sum({46.29, 60.0, 0.0}, {99.98, 3.97, 0.0}, 1.49e-8);
  CounterRng place(202);
  std::vector<Point2> stations;
  for (int s = 0; s < 17; ++s) stations.push_back({250.0 * place.uniform(), 150.0 * place.uniform()});
  const StationData data = simulate_stations(model, stations, 24, 14.0, 5, "TAVG");
  std::vector<SpaceTimeObservation> obs;
  for (const auto& st : data.stations)
    for (int m = 1; m <= 12; ++m) obs.push_back({st.location, m, st.values[static_cast<std::size_t>(m - 1)]});
  const OrdinaryKrigingSystem system(model, obs);
  double worst_value = 0.0, worst_sum = 0.0;
  for (const auto& o : obs) {
    const auto sol = system.solve(o.location, o.month);
    worst_value = std::max(worst_value, std::fabs(sol.prediction - o.value));
    worst_sum = std::max(worst_sum, std::fabs(sol.weights.sum() - 1.0));
  }
  CounterRng targets(203);
  for (int k = 0; k < 50; ++k) {
    const auto sol = system.solve({250.0 * targets.uniform(), 150.0 * targets.uniform()},
                                  1 + static_cast<int>(targets.below(14)));
    worst_sum = std::max(worst_sum, std::fabs(sol.weights.sum() - 1.0));
  }
  return {worst_value < 1e-8 && worst_sum <= 1e-10 && system.jitter() == 0.0,
          "max |prediction - observation| " + fmt(worst_value, 3) + ", max |sum w - 1| " + fmt(worst_sum, 3)};
}

// ---------------------------------------------------------------- 3
Outcome spde_fidelity() {
  const auto t0 = Clock::now();
  const double range = 20.0;
  const GridSpec grid = GridSpec::full(0.0, 0.0, 2.0, 50, 50);  // 100 x 100 km
  const Mesh mesh = build_mesh(grid, {2.0, 10.0, 40.0});
  const FemMatrices fem = fem_matrices(mesh);
  const SparseMatrix q = matern_precision({range, 1.0}, fem);
  const Eigen::MatrixXd samples = sample_gmrf(q, 2000, 303);

  std::vector<double> distances;
  for (double d = 2.0; d <= 40.0 + 1e-9; d += 2.0) distances.push_back(d);
  std::vector<Point2> points;
  std::vector<std::pair<int, int>> pair_index;  // (center point, distance index)
  std::vector<int> partner;
  const std::vector<Point2> centres{{50, 50}, {45, 45}, {55, 45}, {45, 55}, {55, 55}};
  for (const auto& c : centres) {
    const int ci = static_cast<int>(points.size());
    points.push_back(c);
    for (std::size_t k = 0; k < distances.size(); ++k)
      for (int dir = 0; dir < 8; ++dir) {
        const double a = dir * M_PI / 4.0 + 0.1;
        partner.push_back(static_cast<int>(points.size()));
        pair_index.push_back({ci, static_cast<int>(k)});
        points.push_back({c.x + distances[k] * std::cos(a), c.y + distances[k] * std::sin(a)});
      }
  }
  const Eigen::MatrixXd values = projector(mesh, points) * samples;
  Eigen::MatrixXd centred = values.colwise() - values.rowwise().mean();
  const Eigen::VectorXd norms = centred.rowwise().norm();
  std::vector<double> sum(distances.size(), 0.0);
  std::vector<int> count(distances.size(), 0);
  for (std::size_t p = 0; p < partner.size(); ++p) {
    const int a = pair_index[p].first, b = partner[p];
    const double r = centred.row(a).dot(centred.row(b)) / (norms[a] * norms[b]);
    sum[static_cast<std::size_t>(pair_index[p].second)] += r;
    ++count[static_cast<std::size_t>(pair_index[p].second)];
  }
  double max_dev = 0.0, at_range = 0.0;
  for (std::size_t k = 0; k < distances.size(); ++k) {
    const double emp = sum[k] / count[k];
    const double exact = matern_correlation(distances[k], range);
    max_dev = std::max(max_dev, std::fabs(emp - exact));
    if (std::fabs(distances[k] - range) < 1e-9) at_range = emp;
    note("d=" + fmt(distances[k], 3) + " empirical " + fmt(emp) + " analytic " + fmt(exact));
  }
  const double secs = seconds_since(t0);
  return {std::fabs(at_range - 0.10) <= 0.04 && max_dev <= 0.05 && secs < 120.0,
          "correlation at range " + fmt(at_range) + " (analytic " + fmt(matern_correlation(range, range)) +
              "), max curve error " + fmt(max_dev, 3) + ", " + std::to_string(mesh.vertex_count()) + " nodes, " +
              fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 4
double poisson_loglik(const std::vector<CountRecord>& rs, double eta) {
  CustomModelSpec s;
  const auto n = static_cast<Eigen::Index>(rs.size());
  s.response.resize(n);
  s.weight.resize(n);
  s.fixed_design = Eigen::MatrixXd::Ones(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    s.response[i] = static_cast<double>(rs[static_cast<std::size_t>(i)].count);
    s.weight[i] = rs[static_cast<std::size_t>(i)].exposure;
  }
  return LatentModel::custom(s).log_likelihood(Eigen::VectorXd::Constant(1, eta)).value;
}

Outcome subsampling_equivalence() {
  CounterRng r(404);
  std::vector<CountRecord> constructed;
  for (int cell = 0; cell < 8; ++cell)
    for (int m = 1; m <= 36; ++m) {
      const double u = r.uniform();
      constructed.push_back({cell, m, u < 0.8 ? 0 : static_cast<long>(r.below(4)), 4.0, 1});
    }
  const auto reduced = subsample_zero_months(constructed, 7);
  // compare cell-year by cell-year
  auto cell_year = [](const std::vector<CountRecord>& rs, int cell, int year) {
    std::vector<CountRecord> out;
    for (const auto& x : rs)
      if (x.cell_id == cell && (x.month - 1) / 12 == year) out.push_back(x);
    return out;
  };
  double worst = 0.0;
  for (int cell = 0; cell < 8; ++cell)
    for (int year = 0; year < 3; ++year) {
      const auto a = cell_year(constructed, cell, year), b = cell_year(reduced, cell, year);
      for (double eta : {-4.0, -1.5, 0.0, 0.7})
        worst = std::max(worst, std::fabs(poisson_loglik(a, eta) - poisson_loglik(b, eta)));
    }

  SimConfig c;
  c.n_rows = c.n_cols = 30;
  c.years = 24;
  c.variant = ModelVariant::shared_spatial;
  c.hyper = {20.0, 1.0, 0.0, 4.0};
  c.beta = {0.0, 0.4};
  c.covariates = {{"elev", CovariateKind::smooth_field, false, 0.0, 15.0}};
  c.mesh = {5.0, 15.0, 20.0};
  c.seed = 44;
  c.seed_set = true;
  const SimDataset base = simulate_dataset(c);
  c.beta[0] += intercept_shift_for_zero_fraction(base.truth.eta, c.exposure, 0.995);
  const SimDataset d = simulate_dataset(c);
  const auto zeros = std::count_if(d.records.begin(), d.records.end(), [](const CountRecord& x) { return x.count == 0; });
  const double zero_fraction = static_cast<double>(zeros) / static_cast<double>(d.records.size());
  const auto sub = subsample_zero_months(d.records, 8);
  const double factor = static_cast<double>(d.records.size()) / static_cast<double>(sub.size());
  return {worst <= 1e-12 && zero_fraction >= 0.99 && factor >= 10.0 && factor <= 12.0,
          "max |loglik difference| " + fmt(worst, 3) + "; zeros " + fmt(100.0 * zero_fraction, 4) + "%, " +
              std::to_string(d.records.size()) + " -> " + std::to_string(sub.size()) + " records (factor " +
              fmt(factor) + ")"};
}

// ---------------------------------------------------------------- 5
LatentModel poisson_toy(const std::vector<double>& counts, const std::vector<double>& exposure, int p,
                        std::uint64_t seed, double precision) {
  CounterRng r(seed);
  const auto n = static_cast<Eigen::Index>(counts.size());
  CustomModelSpec s;
  s.response = Eigen::Map<const Eigen::VectorXd>(counts.data(), n);
  s.weight = Eigen::Map<const Eigen::VectorXd>(exposure.data(), n);
  s.fixed_design.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    s.fixed_design(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) s.fixed_design(i, j) = 0.5 * r.normal();
  }
  s.priors.fixed_effect_precision = precision;
  return LatentModel::custom(s);
}

LatentModel gaussian_toy(int n, int p, std::uint64_t seed, bool with_levels) {
  CounterRng r(seed);
  CustomModelSpec s;
  s.family = Family::gaussian;
  s.response.resize(n);
  s.weight = Eigen::VectorXd::Constant(n, 2.5);
  s.fixed_design.resize(n, p);
  for (int i = 0; i < n; ++i) {
    s.fixed_design(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) s.fixed_design(i, j) = r.normal();
    s.response[i] = 0.5 + r.normal();
    if (with_levels) s.level.push_back(i % 6);
  }
  if (with_levels) s.n_levels = 6;
  return LatentModel::custom(s);
}

double exact_gaussian_marginal(const LatentModel& m, const Eigen::VectorXd& theta) {
  const Eigen::MatrixXd a = m.design();
  const Eigen::MatrixXd cov = a * Eigen::MatrixXd(m.prior_precision(theta)).inverse() * a.transpose() +
                              Eigen::MatrixXd(m.weight().cwiseInverse().asDiagonal());
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::VectorXd y = m.response();
  const double ld = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * y.dot(llt.solve(y)) - 0.5 * ld - 0.5 * static_cast<double>(y.size()) * std::log(2.0 * M_PI);
}

Outcome laplace_accuracy() {
  double worst_rel = 0.0;
  const LatentModel m1 = poisson_toy({0, 2, 1, 5, 0, 3}, {4, 4, 4, 8, 4, 4}, 1, 3, 0.5);
  const auto q1 = brute_force_posterior(m1, {Eigen::VectorXd()}, {{-6.0, 4.0, 4001}});
  worst_rel = std::max(worst_rel, rel_err(log_marginal_laplace(m1, Eigen::VectorXd()), q1.log_marginal[0]));
  const LatentModel m1b = poisson_toy({7, 3, 9, 4}, {4, 4, 4, 4}, 1, 9, 0.1);
  const auto q1b = brute_force_posterior(m1b, {Eigen::VectorXd()}, {{-4.0, 4.0, 4001}});
  worst_rel = std::max(worst_rel, rel_err(log_marginal_laplace(m1b, Eigen::VectorXd()), q1b.log_marginal[0]));
  const LatentModel m2 = poisson_toy({0, 2, 1, 5, 0, 3, 1, 0}, {4, 4, 4, 8, 4, 4, 4, 12}, 2, 5, 0.5);
  const auto q2 = brute_force_posterior(m2, {Eigen::VectorXd()}, {{-6.0, 4.0, 401}, {-6.0, 6.0, 401}});
  worst_rel = std::max(worst_rel, rel_err(log_marginal_laplace(m2, Eigen::VectorXd()), q2.log_marginal[0]));

  double worst_gauss = 0.0;
  for (bool levels : {false, true})
    for (std::uint64_t seed : {4u, 12u}) {
      const LatentModel g = gaussian_toy(30, 3, seed, levels);
      const Eigen::VectorXd theta = levels ? Eigen::VectorXd::Constant(1, std::log(2.0)) : Eigen::VectorXd();
      worst_gauss = std::max(worst_gauss, std::fabs(log_marginal_laplace(g, theta) - exact_gaussian_marginal(g, theta)));
    }
  return {worst_rel <= 0.005 && worst_gauss <= 1e-10,
          "Poisson toys max relative error " + fmt(worst_rel, 3) + ", Gaussian toys max |error| " + fmt(worst_gauss, 3)};
}

// ---------------------------------------------------------------- 6
SimDataset small_dataset(ModelVariant variant, int n, int years, std::uint64_t seed,
                         std::vector<double> seasonal = std::vector<double>(12, 0.0)) {
  SimConfig c;
  c.n_rows = c.n_cols = n;
  c.years = years;
  c.variant = variant;
  c.include_time = true;
  c.beta = {-1.5, 0.2, 0.4, -0.3};
  c.covariates = {{"elev", CovariateKind::smooth_field, false, 0.0, 6.0},
                  {"temp", CovariateKind::white_noise, true, 0.0, 0.0}};
  c.hyper = {8.0, 0.8, 0.6, 4.0};
  c.seasonal = std::move(seasonal);
  c.mesh = {3.0, 8.0, 6.0};
  c.seed = seed;
  c.seed_set = true;
  return simulate_dataset(c);
}

LatentModel model_for(const SimDataset& d, ModelVariant variant, const std::vector<CountRecord>& records,
                      const PriorSpec& priors = {}) {
  CovariateTable cov = d.covariates;
  cov.standardize();
  return LatentModel::build(records, cov, d.grid, has_spatial(variant) ? d.mesh : nullptr, variant, priors);
}

Outcome derivative_checks() {
  const SimDataset d = small_dataset(ModelVariant::ar1_yearly, 5, 2, 5);
  const LatentModel m = model_for(d, ModelVariant::ar1_yearly, d.records);
  const Eigen::VectorXd theta = m.theta_layout().encode({8.0, 0.8, 0.6, 4.0});
  const Eigen::Index n = m.layout().dim();
  auto f = [&](const Eigen::VectorXd& x) { return m.log_likelihood(x).value + m.log_prior_latent(x, theta); };
  CounterRng r(606);
  double worst_g = 0.0, worst_h = 0.0;
  const double eps = 1e-5;
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) x[i] = 0.3 * r.normal();
    const Eigen::VectorXd g = latent_gradient(m, x, theta);
    const Eigen::MatrixXd h = Eigen::MatrixXd(latent_negative_hessian(m, x, theta));
    for (int k = 0; k < 5; ++k) {
      const auto i = static_cast<Eigen::Index>(r.below(static_cast<std::uint64_t>(n)));
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += eps;
      xm[i] -= eps;
      const double fd = (f(xp) - f(xm)) / (2.0 * eps);
      worst_g = std::max(worst_g, std::fabs(fd - g[i]) / std::max(1.0, std::fabs(g[i])));
      const Eigen::VectorXd col = -(latent_gradient(m, xp, theta) - latent_gradient(m, xm, theta)) / (2.0 * eps);
      worst_h = std::max(worst_h, (col - h.col(i)).cwiseAbs().maxCoeff() / std::max(1.0, h.col(i).cwiseAbs().maxCoeff()));
    }
  }
  return {worst_g < 1e-6 && worst_h < 1e-6,
          "20 points: max gradient error " + fmt(worst_g, 3) + ", max Hessian error " + fmt(worst_h, 3)};
}

// ---------------------------------------------------------------- 7
Outcome desk_scale_recovery() {
  int good = 0;
  double slowest = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto t0 = Clock::now();
    SimConfig c;
    c.n_rows = c.n_cols = 30;
    c.years = 24;
    c.variant = ModelVariant::ar1_yearly;
    c.hyper = {20.0, 1.36, 0.89, 4.0};
    c.beta = {-3.0, 0.4};
    c.covariates = {{"elev", CovariateKind::smooth_field, false, 0.0, 15.0}};
    c.seasonal = two_peak_seasonal(7, 3, 1.0);
    c.mesh = {5.0, 15.0, 20.0};
    c.seed = seed;
    c.seed_set = true;
    const SimDataset d = simulate_dataset(c);
    const auto records = subsample_zero_months(d.records, seed);
    PriorSpec priors;
    priors.range0 = 20.0;
    CovariateTable cov = d.covariates;
    cov.standardize();
    const auto mesh = std::make_shared<const Mesh>(build_mesh(d.grid, c.mesh));
    const LatentModel m = LatentModel::build(records, cov, d.grid, mesh, ModelVariant::ar1_yearly, priors);
    FitOptions o;
    o.standard_errors = false;
    const FitResult f = fit(m, m.theta_layout().encode({30.0, 1.0, 0.5, 4.0}), o);
    const HyperParams h = m.hyper_from_theta(f.theta_hat);
    const bool ok = rel_err(h.range, 20.0) <= 0.25 && rel_err(h.sd, 1.36) <= 0.25 && std::fabs(h.rho - 0.89) <= 0.1;
    good += ok;
    const double secs = seconds_since(t0);
    slowest = std::max(slowest, secs);
    note("seed " + std::to_string(seed) + ": range " + fmt(h.range) + " sd " + fmt(h.sd) + " rho " + fmt(h.rho) +
         ", " + std::to_string(f.diagnostics.outer_evaluations) + " evaluations, " + fmt(secs, 3) + " s" +
         (ok ? "" : "  (miss)"));
  }
  return {good >= 8 && slowest < 1800.0,
          std::to_string(good) + "/10 seeds recovered, slowest fit " + fmt(slowest, 4) + " s"};
}

// ---------------------------------------------------------------- 8
Outcome model_ranking() {
  SimConfig c;
  c.n_rows = c.n_cols = 15;
  c.years = 6;
  c.variant = ModelVariant::ar1_yearly;
  c.hyper = {10.0, 1.36, 0.89, 4.0};
  c.beta = {-2.0, 0.4};
  c.covariates = {{"elev", CovariateKind::smooth_field, false, 0.0, 10.0}};
  c.seasonal = two_peak_seasonal(7, 3, 1.0);
  c.mesh = {3.0, 10.0, 12.0};
  c.seed = 808;
  c.seed_set = true;
  const SimDataset d = simulate_dataset(c);
  const auto records = subsample_zero_months(d.records, 3);
  PriorSpec priors;
  priors.range0 = 10.0;
  std::vector<double> lm;
  for (ModelVariant v : {ModelVariant::ar1_yearly, ModelVariant::independent_yearly, ModelVariant::fixed_only}) {
    const LatentModel m = model_for(d, v, records, priors);
    const FitResult f = fit(m, m.theta_layout().encode({15.0, 1.0, 0.5, 4.0}));
    lm.push_back(f.log_marginal);
    note(to_string(v) + ": log marginal " + fmt(f.log_marginal, 8));
  }
  return {lm[0] > lm[1] && lm[1] > lm[2],
          "AR1 " + fmt(lm[0], 7) + " > INDEPENDENT " + fmt(lm[1], 7) + " > FIXED " + fmt(lm[2], 7)};
}

// ---------------------------------------------------------------- 9
Outcome fixed_effect_coverage() {
  int covered = 0, total = 0;
  for (std::uint64_t rep = 1; rep <= 20; ++rep) {
    SimConfig c;
    c.n_rows = c.n_cols = 10;
    c.years = 3;
    c.variant = ModelVariant::fixed_only;
    c.include_time = true;
    c.beta = {-1.0, 0.3, 0.5, -0.4};
    c.covariates = {{"elev", CovariateKind::smooth_field, false, 0.0, 6.0},
                    {"temp", CovariateKind::white_noise, true, 0.0, 0.0}};
    c.seasonal = two_peak_seasonal(7, 3, 0.6);
    c.seed = 900 + rep;
    c.seed_set = true;
    const SimDataset d = simulate_dataset(c);
    // fit on the raw covariates so the coefficients are on the generative scale
    const LatentModel m = LatentModel::build(d.records, d.covariates, d.grid, nullptr, ModelVariant::fixed_only, {});
    const FitResult f = fit(m, m.theta_layout().encode({}));
    for (std::size_t j = 0; j < f.fixed_effects.size(); ++j) {
      const auto& fe = f.fixed_effects[j];
      const auto it = std::find(d.truth.beta_names.begin(), d.truth.beta_names.end(), fe.name);
      if (it == d.truth.beta_names.end()) continue;
      const double b = d.truth.beta[static_cast<std::size_t>(it - d.truth.beta_names.begin())];
      ++total;
      covered += (fe.lower <= b && b <= fe.upper);
    }
  }
  const double rate = total ? static_cast<double>(covered) / total : 0.0;
  return {total == 80 && rate >= 0.9,
          std::to_string(covered) + "/" + std::to_string(total) + " intervals cover (" + fmt(100.0 * rate, 3) + "%)"};
}

// ---------------------------------------------------------------- 10
std::pair<int, int> two_highest_peaks(const std::vector<OddsRatio>& curve) {
  const int n = static_cast<int>(curve.size());
  std::vector<std::pair<double, int>> peaks;
  for (int i = 0; i < n; ++i) {
    const double v = curve[static_cast<std::size_t>(i)].ratio;
    if (v > curve[static_cast<std::size_t>((i + n - 1) % n)].ratio && v > curve[static_cast<std::size_t>((i + 1) % n)].ratio)
      peaks.push_back({v, curve[static_cast<std::size_t>(i)].month});
  }
  std::sort(peaks.rbegin(), peaks.rend());
  return {peaks.size() > 0 ? peaks[0].second : -1, peaks.size() > 1 ? peaks[1].second : -1};
}

Outcome seasonal_peaks() {
  int good = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const SimDataset d = small_dataset(ModelVariant::shared_spatial, 10, 4, 1000 + seed, two_peak_seasonal(7, 3, 1.0));
    const auto records = subsample_zero_months(d.records, seed);
    const LatentModel m = model_for(d, ModelVariant::shared_spatial, records);
    FitOptions o;
    o.standard_errors = false;
    const FitResult f = fit(m, m.theta_layout().encode({8.0, 1.0, 0.5, 4.0}), o);
    const auto [first, second] = two_highest_peaks(seasonal_odds_ratio(f, m, 1));
    const bool ok = first == 7 && second == 3;
    good += ok;
    note("seed " + std::to_string(seed) + ": peaks at months " + std::to_string(first) + " and " +
         std::to_string(second) + (ok ? "" : "  (miss)"));
  }
  return {good >= 8, std::to_string(good) + "/10 seeds identify months 7 and 3"};
}

// ---------------------------------------------------------------- 11
struct DirGuard {
  fs::path saved = fs::current_path();
  ~DirGuard() { fs::current_path(saved); }
};

int run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

std::vector<std::string> split_words(const std::string& line) {
  std::istringstream s(line);
  std::vector<std::string> w;
  for (std::string t; s >> t;) w.push_back(t);
  return w;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::string> pipeline_output_dirs(const std::vector<std::vector<std::string>>& steps) {
  std::vector<std::string> out;
  for (const auto& s : steps)
    for (std::size_t i = 0; i + 1 < s.size(); ++i)
      if (s[i] == "--out") out.push_back(s[i + 1]);
  return out;
}

Outcome golden_pipeline() {
  const fs::path fixture = fs::path(FIRELGCP_TEST_DATA) / "golden";
  const fs::path work = fs::temp_directory_path() / "firelgcp_golden";
  fs::remove_all(work);
  std::vector<std::vector<std::string>> steps;
  {
    std::ifstream f(fixture / "pipeline.txt");
    for (std::string line; std::getline(f, line);)
      if (!line.empty()) steps.push_back(split_words(line));
  }
  const auto dirs = pipeline_output_dirs(steps);
  DirGuard guard;

  // two independent single-threaded runs
  for (const char* name : {"a", "b"}) {
    fs::create_directories(work / name);
    fs::copy(fixture, work / name / "in", fs::copy_options::recursive);
    fs::current_path(work / name);
    for (const auto& s : steps) {
      std::vector<std::string> args{"--quiet", "--threads", "1"};
      args.insert(args.end(), s.begin(), s.end());
      if (run_cli(args) != 0) return {false, std::string("run ") + name + " failed at '" + s.front() + "'"};
    }
    fs::current_path(guard.saved);
  }
  int files = 0, differing = 0;
  for (const auto& dir : dirs)
    for (const auto& e : fs::recursive_directory_iterator(work / "a" / dir)) {
      if (!e.is_regular_file()) continue;
      ++files;
      const fs::path rel = fs::relative(e.path(), work / "a");
      if (slurp(e.path()) != slurp(work / "b" / rel)) {
        ++differing;
        note("differs: " + rel.string());
      }
    }

  // replay every step from the arguments recorded in its manifest
  fs::create_directories(work / "c");
  fs::copy(fixture, work / "c" / "in", fs::copy_options::recursive);
  fs::current_path(work / "c");
  int replay_mismatch = 0;
  for (const auto& dir : dirs) {
    const json manifest = json::parse(slurp(work / "a" / dir / "manifest.json"));
    for (const auto& in : manifest.at("inputs"))
      if (io::sha256_file(in.at("path").get<std::string>()) != in.at("sha256").get<std::string>()) {
        ++replay_mismatch;
        note("replay input digest differs: " + in.at("path").get<std::string>());
      }
    if (run_cli(manifest.at("args").get<std::vector<std::string>>()) != 0) {
      fs::current_path(guard.saved);
      return {false, "replay from " + dir + "/manifest.json failed"};
    }
    for (const auto& o : manifest.at("outputs"))
      if (io::sha256_file(o.at("path").get<std::string>()) != o.at("sha256").get<std::string>()) {
        ++replay_mismatch;
        note("replay output digest differs: " + o.at("path").get<std::string>());
      }
  }
  fs::current_path(guard.saved);

  // committed hyperparameter table
  const io::CsvTable expected = io::read_csv(fixture / "expected_hyperparameters.csv");
  const io::CsvTable got = io::read_csv(work / "a" / "fit" / "hyperparameters.csv");
  double worst = 0.0;
  bool same_shape = expected.rows.size() == got.rows.size();
  for (std::size_t i = 0; same_shape && i < got.rows.size(); ++i) {
    same_shape = expected.rows[i][0] == got.rows[i][0];
    for (std::size_t j = 1; j < got.rows[i].size(); ++j) {
      const double e = io::parse_double(expected.rows[i][j], "expected"), g = io::parse_double(got.rows[i][j], "got");
      worst = std::max(worst, std::fabs(g - e) / std::max(1.0, std::fabs(e)));
    }
  }
  int rasters = 0;
  for (const auto& e : fs::directory_iterator(work / "a" / "maps")) rasters += e.path().extension() == ".asc";
  return {differing == 0 && replay_mismatch == 0 && same_shape && worst <= 1e-6 && rasters == 12,
          std::to_string(files) + " files identical across runs: " + (differing == 0 ? "yes" : "no") +
              ", manifest replay mismatches " + std::to_string(replay_mismatch) +
              ", max deviation from committed hyperparameters " + fmt(worst, 3) + ", " + std::to_string(rasters) +
              " rasters"};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "variogram round trip", variogram_round_trip},
      {2, "kriging exactness", kriging_exactness},
      {3, "SPDE fidelity", spde_fidelity},
      {4, "subsampling equivalence", subsampling_equivalence},
      {5, "Laplace accuracy", laplace_accuracy},
      {6, "gradient and Hessian checks", derivative_checks},
      {7, "desk-scale simulate-recover", desk_scale_recovery},
      {8, "model ranking", model_ranking},
      {9, "fixed-effect coverage", fixed_effect_coverage},
      {10, "seasonal two-peak identification", seasonal_peaks},
      {11, "golden end-to-end pipeline", golden_pipeline},
  };
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail << " ["
              << fmt(seconds_since(t0), 4) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
