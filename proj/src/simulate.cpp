#include "firelgcp/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "firelgcp/error.hpp"
#include "firelgcp/rng.hpp"
#include "firelgcp/spde.hpp"

namespace firelgcp {

namespace {

constexpr double kMaxEta = 30.0;

std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) { return mix64(seed ^ mix64(tag + 0x5157)); }

}  // namespace

Eigen::MatrixXd sample_gmrf(const SparseMatrix& precision, int n_samples, std::uint64_t seed) {
  if (n_samples < 0) throw ConfigError("sample_gmrf: n_samples must be >= 0");
  SparseCholesky chol(precision);
  const Eigen::Index n = precision.rows();
  Eigen::MatrixXd out(n, n_samples);
  const CounterRng root(seed);
  Eigen::VectorXd z(n);
  for (int s = 0; s < n_samples; ++s) {
    CounterRng rng = root.split(static_cast<std::uint64_t>(s));
    for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
    out.col(s) = chol.sample_transform(z);
  }
  return out;
}

void SimConfig::validate() const {
  if (!seed_set) throw ConfigError("simulation: seed is mandatory");
  if (n_rows < 1 || n_cols < 1) throw ConfigError("simulation: grid must have >= 1 row and column");
  if (!(cell_size > 0.0)) throw ConfigError("simulation: cell_size must be > 0");
  if (years < 1) throw ConfigError("simulation: years must be >= 1");
  if (months_per_year != 12) throw ConfigError("simulation: months_per_year must be 12");
  if (!(exposure > 0.0)) throw ConfigError("simulation: exposure must be > 0");
  if (seasonal.size() != 12) throw ConfigError("simulation: seasonal effect needs 12 values");
  const double sum = std::accumulate(seasonal.begin(), seasonal.end(), 0.0);
  if (std::fabs(sum) > 1e-8) throw ConfigError("simulation: seasonal effect must sum to 0");
  std::size_t n_static = 0, n_dynamic = 0;
  for (const auto& g : covariates) {
    if (g.name.empty() || g.name == CovariateTable::kTimeName)
      throw ConfigError("simulation: invalid covariate name '" + g.name + "'");
    if (g.kind == CovariateKind::smooth_field && !(g.range > 0.0))
      throw ConfigError("simulation: smooth covariate range must be > 0");
    (g.dynamic ? n_dynamic : n_static)++;
  }
  const std::size_t expected = 1 + (include_time ? 1 : 0) + n_static + n_dynamic;
  if (beta.size() != expected)
    throw ConfigError("simulation: beta needs " + std::to_string(expected) + " values, got " +
                      std::to_string(beta.size()));
  for (double b : beta)
    if (!std::isfinite(b)) throw ConfigError("simulation: beta must be finite");
  if (has_spatial(variant)) {
    MaternHyper{hyper.range, hyper.sd}.validate();
    if (variant == ModelVariant::ar1_yearly && !(std::fabs(hyper.rho) < 1.0))
      throw ConfigError("simulation: rho must satisfy |rho| < 1");
  }
}

SimDataset simulate_dataset(const SimConfig& config) {
  config.validate();
  SimDataset ds;
  ds.grid = GridSpec::full(config.origin.x, config.origin.y, config.cell_size, config.n_rows, config.n_cols);
  const std::vector<int> cells = ds.grid.active_cells();
  const int n_cells = static_cast<int>(cells.size());
  const int n_months = config.month_count();

  bool need_mesh = has_spatial(config.variant);
  for (const auto& g : config.covariates) need_mesh = need_mesh || g.kind == CovariateKind::smooth_field;
  SparseMatrix cell_projector;
  FemMatrices fem;
  if (need_mesh) {
    ds.mesh = std::make_shared<const Mesh>(build_mesh(ds.grid, config.mesh));
    fem = fem_matrices(*ds.mesh);
    std::vector<Point2> centers;
    for (int id : cells) centers.push_back(ds.grid.cell_center(id));
    cell_projector = projector(*ds.mesh, centers);
  }

  // covariates
  ds.covariates = CovariateTable(cells, 1, n_months);
  if (config.include_time) ds.covariates.add_time_covariate();
  auto generate = [&](const CovariateGenerator& g, std::size_t index, int columns) {
    Eigen::MatrixXd v(n_cells, columns);
    const std::uint64_t s = derive(config.seed, 100 + index);
    switch (g.kind) {
      case CovariateKind::constant: v.setConstant(g.value); break;
      case CovariateKind::white_noise: {
        const CounterRng root(s);
        for (int c = 0; c < n_cells; ++c) {
          CounterRng rng = root.split(static_cast<std::uint64_t>(c));
          for (int m = 0; m < columns; ++m) v(c, m) = rng.normal();
        }
        break;
      }
      case CovariateKind::smooth_field: {
        const SparseMatrix q = matern_precision({g.range, 1.0}, fem);
        v = cell_projector * sample_gmrf(q, columns, s);
        break;
      }
    }
    return v;
  };
  std::vector<std::string> static_names, dynamic_names;
  for (std::size_t j = 0; j < config.covariates.size(); ++j) {
    const auto& g = config.covariates[j];
    if (g.dynamic) continue;
    const Eigen::MatrixXd v = generate(g, j, 1);
    ds.covariates.add_static(g.name, std::vector<double>(v.data(), v.data() + v.size()));
    static_names.push_back(g.name);
  }
  for (std::size_t j = 0; j < config.covariates.size(); ++j) {
    const auto& g = config.covariates[j];
    if (!g.dynamic) continue;
    ds.covariates.add_dynamic(g.name, generate(g, j, n_months));
    dynamic_names.push_back(g.name);
  }

  // spatial effect
  SimTruth& truth = ds.truth;
  truth.beta = config.beta;
  truth.seasonal = config.seasonal;
  truth.hyper = config.hyper;
  truth.variant = config.variant;
  truth.beta_names.emplace_back("intercept");
  if (config.include_time) truth.beta_names.emplace_back(CovariateTable::kTimeName);
  for (const auto& n : static_names) truth.beta_names.push_back(n);
  for (const auto& n : dynamic_names) truth.beta_names.push_back(n);
  int blocks = 0;
  switch (config.variant) {
    case ModelVariant::fixed_only: blocks = 0; break;
    case ModelVariant::shared_spatial: blocks = 1; break;
    case ModelVariant::independent_yearly:
    case ModelVariant::ar1_yearly: blocks = config.years; break;
  }
  if (blocks > 0) {
    const SparseMatrix qs = matern_precision({config.hyper.range, config.hyper.sd}, fem);
    const Eigen::MatrixXd innov = sample_gmrf(qs, blocks, derive(config.seed, 1));
    truth.mesh_field = innov;
    if (config.variant == ModelVariant::ar1_yearly) {
      const double rho = config.hyper.rho;
      const double c = std::sqrt(1.0 - rho * rho);
      for (int y = 1; y < blocks; ++y) truth.mesh_field.col(y) = rho * truth.mesh_field.col(y - 1) + c * innov.col(y);
    }
    truth.spatial = cell_projector * truth.mesh_field;
  } else {
    truth.spatial = Eigen::MatrixXd::Zero(n_cells, 0);
  }

  // linear predictor and counts
  const auto& dnames = ds.covariates.dynamic_names();
  const auto col_of = [&](const std::string& name) {
    return static_cast<int>(std::find(dnames.begin(), dnames.end(), name) - dnames.begin());
  };
  const int time_col = config.include_time ? col_of(CovariateTable::kTimeName) : -1;
  std::vector<int> dyn_cols;
  for (const auto& n : dynamic_names) dyn_cols.push_back(col_of(n));

  ds.records.reserve(static_cast<std::size_t>(n_cells) * static_cast<std::size_t>(n_months));
  truth.eta.resize(static_cast<Eigen::Index>(n_cells) * n_months);
  const CounterRng count_root(derive(config.seed, 2));
  for (int c = 0; c < n_cells; ++c) {
    for (int m = 1; m <= n_months; ++m) {
      const auto row = ds.covariates.dynamic_row(cells[static_cast<std::size_t>(c)], m);
      std::size_t b = 0;
      double eta = config.beta[b++];
      if (time_col >= 0) eta += config.beta[b++] * ds.covariates.dynamic_values()(row, time_col);
      for (std::size_t j = 0; j < static_names.size(); ++j)
        eta += config.beta[b++] * ds.covariates.static_values()(c, static_cast<Eigen::Index>(j));
      for (int dc : dyn_cols) eta += config.beta[b++] * ds.covariates.dynamic_values()(row, dc);
      eta += config.seasonal[static_cast<std::size_t>(calendar_month(m) - 1)];
      if (blocks == 1) eta += truth.spatial(c, 0);
      if (blocks > 1) eta += truth.spatial(c, year_index(m));
      if (eta > kMaxEta)
        throw DomainError("simulation: linear predictor " + std::to_string(eta) +
                          " exceeds 30; lower the intercept or rescale the effects");
      const Eigen::Index k = static_cast<Eigen::Index>(c) * n_months + (m - 1);
      truth.eta[k] = eta;
      CounterRng rng = count_root.split(static_cast<std::uint64_t>(k));
      CountRecord r;
      r.cell_id = cells[static_cast<std::size_t>(c)];
      r.month = m;
      r.exposure = config.exposure;
      r.count = static_cast<long>(rng.poisson(config.exposure * std::exp(eta)));
      ds.records.push_back(r);
    }
  }
  return ds;
}

std::vector<double> two_peak_seasonal(int first_peak, int second_peak, double amplitude) {
  if (first_peak < 1 || first_peak > 12 || second_peak < 1 || second_peak > 12)
    throw ConfigError("seasonal peaks must be calendar months 1..12");
  int gap = std::abs(first_peak - second_peak);
  gap = std::min(gap, 12 - gap);
  if (gap < 3) throw ConfigError("seasonal peaks must be at least 3 months apart");
  auto bump = [](int m, int p) {
    int d = std::abs(m - p);
    d = std::min(d, 12 - d);
    return std::exp(-0.5 * d * d);
  };
  std::vector<double> f(12);
  for (int m = 1; m <= 12; ++m) f[static_cast<std::size_t>(m - 1)] = amplitude * (bump(m, first_peak) + 0.6 * bump(m, second_peak));
  const double mean = std::accumulate(f.begin(), f.end(), 0.0) / 12.0;
  for (double& v : f) v -= mean;
  return f;
}

double intercept_shift_for_zero_fraction(const Eigen::VectorXd& eta, double exposure, double zero_fraction) {
  if (!(zero_fraction > 0.0 && zero_fraction < 1.0)) throw ConfigError("zero fraction must be in (0, 1)");
  if (eta.size() == 0) throw ConfigError("zero fraction calibration needs a non-empty predictor");
  auto fraction = [&](double s) { return (-exposure * (eta.array() + s).exp()).exp().mean(); };
  double lo = -60.0, hi = 30.0;
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (fraction(mid) > zero_fraction)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

StationData simulate_stations(const VariogramModel& model, const std::vector<Point2>& locations, int months,
                              double mean, std::uint64_t seed, const std::string& variable) {
  const auto ns = static_cast<Eigen::Index>(locations.size());
  if (ns < 2 || months < 2) throw ConfigError("simulate_stations: need >= 2 stations and >= 2 months");
  const auto& sp = model.spatial();
  const auto& tp = model.temporal();
  Eigen::MatrixXd cs(ns, ns), ct(months, months);
  for (Eigen::Index i = 0; i < ns; ++i)
    for (Eigen::Index j = 0; j < ns; ++j) {
      const double h = std::hypot(locations[static_cast<std::size_t>(i)].x - locations[static_cast<std::size_t>(j)].x,
                                  locations[static_cast<std::size_t>(i)].y - locations[static_cast<std::size_t>(j)].y);
      cs(i, j) = sp.total_sill() - sp(i == j ? 0.0 : std::max(h, 1e-12));
    }
  for (int i = 0; i < months; ++i)
    for (int j = 0; j < months; ++j) ct(i, j) = tp.total_sill() - tp(std::abs(i - j));
  auto chol = [](Eigen::MatrixXd m, const char* what) {
    const double jitter = 1e-10 * m.diagonal().maxCoeff();
    m.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) throw NumericalError(std::string("simulate_stations: ") + what + " covariance not PD");
    return Eigen::MatrixXd(llt.matrixL());
  };
  const Eigen::MatrixXd ls = chol(cs, "spatial");
  const Eigen::MatrixXd lt = chol(ct, "temporal");
  CounterRng rng(seed);
  auto normals = [&](Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd z(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) z(i, j) = rng.normal();
    return z;
  };
  Eigen::MatrixXd x;
  if (model.kind() == VariogramKind::separable) {
    // components have unit total sill, so cs and ct are correlations
    x = std::sqrt(model.sill()) * ls * normals(ns, months) * lt.transpose();
  } else {
    x = std::sqrt(model.k()) * ls * normals(ns, months) * lt.transpose();
    const Eigen::VectorXd s = ls * normals(ns, 1);
    const Eigen::VectorXd t = lt * normals(months, 1);
    x.colwise() += s;
    x.rowwise() += t.transpose();
  }
  StationData data;
  data.variable = variable;
  data.first_month = 1;
  for (Eigen::Index i = 0; i < ns; ++i) {
    StationSeries st;
    st.station_id = "S" + std::to_string(i + 1);
    st.location = locations[static_cast<std::size_t>(i)];
    st.values.resize(static_cast<std::size_t>(months));
    for (int m = 0; m < months; ++m) st.values[static_cast<std::size_t>(m)] = mean + x(i, m);
    data.stations.push_back(std::move(st));
  }
  return data;
}

namespace {

std::vector<double> trapezoid_weights(const LatentAxis& a) {
  std::vector<double> w(static_cast<std::size_t>(a.points), (a.upper - a.lower) / (a.points - 1));
  w.front() *= 0.5;
  w.back() *= 0.5;
  return w;
}

void check_axes(const std::vector<LatentAxis>& axes) {
  double nodes = 1.0;
  for (const auto& a : axes) {
    if (a.points < 2 || !(a.upper > a.lower)) throw ConfigError("latent grid axis needs >= 2 points and upper > lower");
    nodes *= a.points;
  }
  if (nodes > 2.0e7) throw ConfigError("latent grid too large for direct quadrature");
}

}  // namespace

double integrate_grid(const std::vector<double>& values, const std::vector<LatentAxis>& axes) {
  check_axes(axes);
  std::vector<std::vector<double>> w;
  for (const auto& a : axes) w.push_back(trapezoid_weights(a));
  std::vector<int> idx(axes.size(), 0);
  double total = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    double wk = 1.0;
    for (std::size_t d = 0; d < axes.size(); ++d) wk *= w[d][static_cast<std::size_t>(idx[d])];
    total += wk * values[k];
    for (int d = static_cast<int>(axes.size()) - 1; d >= 0; --d) {
      if (++idx[static_cast<std::size_t>(d)] < axes[static_cast<std::size_t>(d)].points) break;
      idx[static_cast<std::size_t>(d)] = 0;
    }
  }
  return total;
}

BruteForcePosterior brute_force_posterior(const LatentModel& model, const std::vector<Eigen::VectorXd>& thetas,
                                          const std::vector<LatentAxis>& axes) {
  const int dim = model.layout().dim();
  if (dim > 3) throw ConfigError("brute-force posterior supports latent dimension <= 3, got " + std::to_string(dim));
  if (static_cast<int>(axes.size()) != dim) throw ConfigError("brute-force posterior: one axis per latent coordinate");
  if (thetas.empty()) throw ConfigError("brute-force posterior: no theta values");
  check_axes(axes);
  std::vector<std::vector<double>> w;
  std::size_t nodes = 1;
  for (const auto& a : axes) {
    w.push_back(trapezoid_weights(a));
    nodes *= static_cast<std::size_t>(a.points);
  }

  BruteForcePosterior out;
  out.thetas = thetas;
  out.axes = axes;
  for (const auto& theta : thetas) {
    const Eigen::MatrixXd q = Eigen::MatrixXd(model.prior_precision(theta));
    const double log_norm = 0.5 * model.prior_log_determinant(theta) - 0.5 * dim * std::log(2.0 * M_PI);
    std::vector<double> logf(nodes), logw(nodes);
    std::vector<int> idx(axes.size(), 0);
    Eigen::VectorXd x(dim);
    double max_term = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < nodes; ++k) {
      double wk = 1.0;
      for (int d = 0; d < dim; ++d) {
        const auto& a = axes[static_cast<std::size_t>(d)];
        const int i = idx[static_cast<std::size_t>(d)];
        x[d] = a.lower + (a.upper - a.lower) * i / (a.points - 1);
        wk *= w[static_cast<std::size_t>(d)][static_cast<std::size_t>(i)];
      }
      logf[k] = model.log_likelihood(x).value + log_norm - 0.5 * x.dot(q * x);
      logw[k] = std::log(wk);
      max_term = std::max(max_term, logf[k] + logw[k]);
      for (int d = dim - 1; d >= 0; --d) {
        if (++idx[static_cast<std::size_t>(d)] < axes[static_cast<std::size_t>(d)].points) break;
        idx[static_cast<std::size_t>(d)] = 0;
      }
    }
    double s = 0.0;
    for (std::size_t k = 0; k < nodes; ++k) s += std::exp(logf[k] + logw[k] - max_term);
    const double log_marginal = max_term + std::log(s);
    out.log_marginal.push_back(log_marginal);
    std::vector<double> density(nodes);
    for (std::size_t k = 0; k < nodes; ++k) density[k] = std::exp(logf[k] - log_marginal);
    out.latent_density.push_back(std::move(density));
  }
  std::vector<double> lp(thetas.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < thetas.size(); ++t) {
    lp[t] = out.log_marginal[t] + log_prior_hyper(thetas[t], model.theta_layout(), model.priors());
    mx = std::max(mx, lp[t]);
  }
  double total = 0.0;
  for (double v : lp) total += std::exp(v - mx);
  for (double v : lp) out.theta_posterior.push_back(std::exp(v - mx) / total);
  return out;
}

}  // namespace firelgcp
