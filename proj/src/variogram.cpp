#include "firelgcp/variogram.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <unsupported/Eigen/LevenbergMarquardt>
#include <unsupported/Eigen/NumericalDiff>

#include "firelgcp/optim.hpp"
#include "firelgcp/rng.hpp"

namespace firelgcp {

void StationData::validate() const {
  if (stations.size() < 2) throw ConfigError("stations: at least 2 stations are required");
  const auto months = stations.front().values.size();
  if (months < 2) throw ConfigError("stations: at least 2 months are required");
  std::set<std::pair<double, double>> seen;
  for (const auto& s : stations) {
    if (s.values.size() != months) throw ConfigError("stations: series lengths differ (" + s.station_id + ")");
    if (!seen.emplace(s.location.x, s.location.y).second)
      throw ConfigError("stations: duplicate location for station " + s.station_id);
  }
}

double StationData::max_distance() const {
  double d = 0.0;
  for (std::size_t i = 0; i < stations.size(); ++i)
    for (std::size_t j = i + 1; j < stations.size(); ++j)
      d = std::max(d, std::hypot(stations[i].location.x - stations[j].location.x,
                                 stations[i].location.y - stations[j].location.y));
  return d;
}

double ExponentialComponent::operator()(double lag) const {
  if (lag <= 0.0) return 0.0;
  return nugget + sill * (1.0 - std::exp(-lag / range));
}

void ExponentialComponent::validate(const char* what) const {
  if (!(sill > 0.0) || !std::isfinite(sill)) throw ConfigError(std::string(what) + ": sill must be > 0");
  if (!(range > 0.0) || !std::isfinite(range)) throw ConfigError(std::string(what) + ": range must be > 0");
  if (!(nugget >= 0.0) || !std::isfinite(nugget)) throw ConfigError(std::string(what) + ": nugget must be >= 0");
}

std::string to_string(VariogramKind kind) { return kind == VariogramKind::separable ? "separable" : "product_sum"; }

VariogramKind variogram_kind_from_string(const std::string& s) {
  if (s == "separable") return VariogramKind::separable;
  if (s == "product_sum" || s == "productsum" || s == "product-sum") return VariogramKind::product_sum;
  throw ConfigError("unknown variogram kind '" + s + "'");
}

VariogramModel VariogramModel::product_sum(ExponentialComponent spatial, ExponentialComponent temporal, double k) {
  spatial.validate("spatial component");
  temporal.validate("temporal component");
  const double kmax = 1.0 / std::max(spatial.total_sill(), temporal.total_sill());
  if (!(k > 0.0) || k > kmax * (1.0 + 1e-12)) throw ConfigError("product_sum: k must satisfy 0 < k <= 1/max(sill_s, sill_t)");
  VariogramModel m;
  m.kind_ = VariogramKind::product_sum;
  m.spatial_ = spatial;
  m.temporal_ = temporal;
  m.k_ = k;
  return m;
}

VariogramModel VariogramModel::separable(ExponentialComponent spatial, ExponentialComponent temporal, double sill) {
  spatial.validate("spatial component");
  temporal.validate("temporal component");
  if (std::fabs(spatial.total_sill() - 1.0) > 1e-9 || std::fabs(temporal.total_sill() - 1.0) > 1e-9)
    throw ConfigError("separable: components must have nugget + sill = 1");
  if (!(sill > 0.0) || !std::isfinite(sill)) throw ConfigError("separable: overall sill must be > 0");
  VariogramModel m;
  m.kind_ = VariogramKind::separable;
  m.spatial_ = spatial;
  m.temporal_ = temporal;
  m.sill_ = sill;
  return m;
}

double VariogramModel::operator()(double h, double u) const {
  const double gs = spatial_(h);
  const double gt = temporal_(u);
  if (kind_ == VariogramKind::product_sum)
    return (k_ * temporal_.total_sill() + 1.0) * gs + (k_ * spatial_.total_sill() + 1.0) * gt - k_ * gs * gt;
  return sill_ * (gs + gt - gs * gt);
}

double VariogramModel::limit() const {
  if (kind_ == VariogramKind::product_sum) {
    const double ss = spatial_.total_sill();
    const double st = temporal_.total_sill();
    return ss + st + k_ * ss * st;
  }
  return sill_;
}

std::vector<double> default_space_edges(const StationData& data, int n_bins) {
  const double hmax = 0.5 * data.max_distance();
  std::vector<double> edges(static_cast<std::size_t>(n_bins) + 1);
  for (int i = 0; i <= n_bins; ++i) edges[static_cast<std::size_t>(i)] = hmax * i / n_bins;
  return edges;
}

std::vector<VariogramBin> empirical_variogram(const StationData& data, const std::vector<double>& space_edges,
                                              int max_time_lag) {
  data.validate();
  if (space_edges.size() < 2 || !std::is_sorted(space_edges.begin(), space_edges.end()))
    throw ConfigError("empirical_variogram: need >= 2 increasing distance edges");
  if (max_time_lag < 0) throw ConfigError("empirical_variogram: max_time_lag must be >= 0");
  bool any_value = false;
  for (const auto& s : data.stations)
    for (double v : s.values) any_value = any_value || std::isfinite(v);
  if (!any_value) throw ConfigError("empirical_variogram: variable '" + data.variable + "' is entirely missing");

  const auto n_classes = space_edges.size();  // class 0 + (edges - 1) distance classes
  const auto n_lags = static_cast<std::size_t>(max_time_lag) + 1;
  std::vector<double> sum(n_classes * n_lags, 0.0), dist_sum(n_classes * n_lags, 0.0);
  std::vector<long> count(n_classes * n_lags, 0);
  const int months = data.month_count();

  auto accumulate = [&](std::size_t cls, int u, double d, const std::vector<double>& a, const std::vector<double>& b,
                        bool symmetric) {
    const std::size_t slot = cls * n_lags + static_cast<std::size_t>(u);
    for (int t = 0; t + u < months; ++t) {
      const double x = a[static_cast<std::size_t>(t)];
      const double y = b[static_cast<std::size_t>(t + u)];
      if (std::isfinite(x) && std::isfinite(y)) {
        sum[slot] += 0.5 * (x - y) * (x - y);
        dist_sum[slot] += d;
        ++count[slot];
      }
      if (symmetric) {
        const double x2 = b[static_cast<std::size_t>(t)];
        const double y2 = a[static_cast<std::size_t>(t + u)];
        if (std::isfinite(x2) && std::isfinite(y2)) {
          sum[slot] += 0.5 * (x2 - y2) * (x2 - y2);
          dist_sum[slot] += d;
          ++count[slot];
        }
      }
    }
  };

  for (std::size_t i = 0; i < data.stations.size(); ++i) {
    const auto& si = data.stations[i];
    for (int u = 1; u <= max_time_lag; ++u) accumulate(0, u, 0.0, si.values, si.values, false);
    for (std::size_t j = i + 1; j < data.stations.size(); ++j) {
      const auto& sj = data.stations[j];
      const double d = std::hypot(si.location.x - sj.location.x, si.location.y - sj.location.y);
      if (d < space_edges.front() || d > space_edges.back()) continue;
      auto it = std::upper_bound(space_edges.begin(), space_edges.end(), d);
      std::size_t cls = static_cast<std::size_t>(it - space_edges.begin());
      cls = std::min(cls, n_classes - 1);  // d == last edge goes to the last class
      if (cls == 0) cls = 1;
      for (int u = 0; u <= max_time_lag; ++u) accumulate(cls, u, d, si.values, sj.values, u > 0);
    }
  }

  std::vector<VariogramBin> table;
  for (std::size_t cls = 0; cls < n_classes; ++cls)
    for (std::size_t u = 0; u < n_lags; ++u) {
      const std::size_t slot = cls * n_lags + u;
      if (count[slot] == 0) continue;
      table.push_back({dist_sum[slot] / count[slot], static_cast<int>(cls), static_cast<int>(u),
                       sum[slot] / count[slot], count[slot]});
    }
  return table;
}

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

// Unconstrained coordinates <-> valid models.
struct Codec {
  VariogramKind kind;
  std::optional<double> fixed_k;

  Eigen::VectorXd encode(const VariogramModel& m) const {
    const auto& s = m.spatial();
    const auto& t = m.temporal();
    if (kind == VariogramKind::product_sum) {
      const double nug_floor_s = 1e-6 * s.total_sill();
      const double nug_floor_t = 1e-6 * t.total_sill();
      const double kmax = 1.0 / std::max(s.total_sill(), t.total_sill());
      const double frac = std::clamp(m.k() / kmax, 1e-9, 1.0 - 1e-9);
      Eigen::VectorXd x(7);
      x << std::log(s.sill), std::log(s.range), std::log(std::max(s.nugget, nug_floor_s)), std::log(t.sill),
          std::log(t.range), std::log(std::max(t.nugget, nug_floor_t)), logit(frac);
      return x;
    }
    Eigen::VectorXd x(5);
    x << logit(std::clamp(s.nugget, 1e-6, 1.0 - 1e-6)), std::log(s.range),
        logit(std::clamp(t.nugget, 1e-6, 1.0 - 1e-6)), std::log(t.range), std::log(m.sill());
    return x;
  }

  VariogramModel decode(const Eigen::VectorXd& x) const {
    if (kind == VariogramKind::product_sum) {
      ExponentialComponent s{std::exp(x[0]), std::exp(x[1]), std::exp(x[2])};
      ExponentialComponent t{std::exp(x[3]), std::exp(x[4]), std::exp(x[5])};
      const double kmax = 1.0 / std::max(s.total_sill(), t.total_sill());
      return VariogramModel::product_sum(s, t, fixed_k ? *fixed_k : kmax * logistic(x[6]));
    }
    const double ns = logistic(x[0]);
    const double nt = logistic(x[2]);
    return VariogramModel::separable({1.0 - ns, std::exp(x[1]), ns}, {1.0 - nt, std::exp(x[3]), nt}, std::exp(x[4]));
  }

  std::vector<int> spatial_indices() const {
    return kind == VariogramKind::product_sum ? std::vector<int>{0, 1, 2, 6} : std::vector<int>{0, 1};
  }
  std::vector<int> temporal_indices() const {
    return kind == VariogramKind::product_sum ? std::vector<int>{3, 4, 5, 6} : std::vector<int>{2, 3};
  }
};

double weighted_sse(const std::vector<VariogramBin>& table, const VariogramModel& m) {
  double s = 0.0;
  for (const auto& b : table) {
    const double r = b.gamma - m(b.h, static_cast<double>(b.u));
    s += static_cast<double>(b.n_pairs) * r * r;
  }
  return s;
}

}  // namespace

VariogramFit fit_variogram(const std::vector<VariogramBin>& empirical, VariogramKind kind, const VariogramModel& init,
                           const VariogramFitOptions& options) {
  if (empirical.empty()) throw ConfigError("fit_variogram: empirical table is empty");
  if (init.kind() != kind) throw ConfigError("fit_variogram: initial model kind does not match requested kind");

  const bool has_time = std::any_of(empirical.begin(), empirical.end(), [](const auto& b) { return b.u > 0; });
  const bool has_space = std::any_of(empirical.begin(), empirical.end(), [](const auto& b) { return b.h > 0.0; });
  Codec codec{kind, std::nullopt};
  if (kind == VariogramKind::product_sum && (!has_time || !has_space)) codec.fixed_k = init.k();
  const Eigen::VectorXd x_init = codec.encode(init);

  std::vector<bool> pinned(static_cast<std::size_t>(x_init.size()), false);
  if (!has_time)
    for (int i : codec.temporal_indices()) pinned[static_cast<std::size_t>(i)] = true;
  if (!has_space)
    for (int i : codec.spatial_indices()) pinned[static_cast<std::size_t>(i)] = true;
  std::vector<int> free;
  for (int i = 0; i < x_init.size(); ++i)
    if (!pinned[static_cast<std::size_t>(i)]) free.push_back(i);
  if (free.empty()) throw ConfigError("fit_variogram: no parameter is identifiable from the table");

  double scale = 0.0;
  for (const auto& b : empirical) scale += static_cast<double>(b.n_pairs) * b.gamma * b.gamma;
  if (!(scale > 0.0)) {
    scale = 0.0;
    for (const auto& b : empirical) scale += static_cast<double>(b.n_pairs);
  }

  auto expand = [&](const Eigen::VectorXd& z) {
    Eigen::VectorXd x = x_init;
    for (std::size_t i = 0; i < free.size(); ++i) x[free[i]] = z[static_cast<Eigen::Index>(i)];
    return x;
  };
  auto objective = [&](const Eigen::VectorXd& z) {
    const Eigen::VectorXd x = expand(z);
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 40.0) return std::numeric_limits<double>::infinity();
    try {
      return weighted_sse(empirical, codec.decode(x)) / scale;
    } catch (const ConfigError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  Eigen::VectorXd z0(static_cast<Eigen::Index>(free.size()));
  for (std::size_t i = 0; i < free.size(); ++i) z0[static_cast<Eigen::Index>(i)] = x_init[free[i]];

  NelderMeadOptions nm;
  nm.f_tolerance = options.tolerance;
  nm.initial_step = 0.5;
  CounterRng rng(options.seed, 0x7661726f);

  Eigen::VectorXd best_z = z0;
  double best_f = objective(z0);
  int total_evals = 1;
  bool converged = false;
  std::ostringstream trace;
  for (int r = 0; r < std::max(1, options.restarts) && total_evals < options.max_evaluations; ++r) {
    Eigen::VectorXd z = z0;
    if (r > 0)
      for (Eigen::Index i = 0; i < z.size(); ++i) z[i] += 0.5 * rng.normal();
    double f = objective(z);
    bool run_converged = false;
    // restart from the incumbent until a fresh simplex stops improving
    for (int cycle = 0; cycle < 20 && total_evals < options.max_evaluations; ++cycle) {
      nm.max_evaluations = options.max_evaluations - total_evals;
      nm.initial_step = cycle == 0 ? 0.5 : 0.05;
      const auto res = nelder_mead(objective, z, nm);
      total_evals += res.evaluations;
      const double improvement = f - res.value;
      z = res.x;
      f = res.value;
      run_converged = res.converged;
      if (res.converged && improvement <= options.tolerance * (1.0 + std::fabs(f))) break;
    }
    trace << "restart " << r << ": objective=" << f * scale << " converged=" << run_converged << '\n';
    if (f <= best_f) {
      best_f = f;
      best_z = z;
    }
    converged = converged || run_converged;
  }

  // Levenberg-Marquardt polish of the simplex result
  {
    struct Residuals : Eigen::DenseFunctor<double> {
      const std::vector<VariogramBin>* table;
      const Codec* codec;
      std::function<Eigen::VectorXd(const Eigen::VectorXd&)> expand;
      double scale;
      Residuals(int inputs, int values) : Eigen::DenseFunctor<double>(inputs, values) {}
      int operator()(const Eigen::VectorXd& z, Eigen::VectorXd& r) const {
        const Eigen::VectorXd x = expand(z);
        if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 40.0) return -1;
        try {
          const VariogramModel m = codec->decode(x);
          for (std::size_t i = 0; i < table->size(); ++i) {
            const auto& b = (*table)[i];
            r[static_cast<Eigen::Index>(i)] =
                std::sqrt(static_cast<double>(b.n_pairs) / scale) * (b.gamma - m(b.h, static_cast<double>(b.u)));
          }
        } catch (const ConfigError&) {
          return -1;
        }
        return 0;
      }
    };
    if (empirical.size() >= free.size()) {
      Residuals res(static_cast<int>(free.size()), static_cast<int>(empirical.size()));
      res.table = &empirical;
      res.codec = &codec;
      res.expand = expand;
      res.scale = scale;
      Eigen::NumericalDiff<Residuals, Eigen::Central> diff(res);
      Eigen::LevenbergMarquardt<Eigen::NumericalDiff<Residuals, Eigen::Central>> lm(diff);
      lm.setMaxfev(200 * static_cast<int>(free.size()));
      Eigen::VectorXd z = best_z;
      lm.minimize(z);
      total_evals += static_cast<int>(lm.nfev());
      const double f = objective(z);
      if (f < best_f) {
        best_f = f;
        best_z = z;
      }
    }
  }

  VariogramFit fit{codec.decode(expand(best_z)), best_f * scale, total_evals, converged};
  if (!converged) throw VariogramFitError("fit_variogram: optimizer did not converge", fit, trace.str());
  return fit;
}

}  // namespace firelgcp
