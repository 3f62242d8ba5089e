#include "firelgcp/kriging.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "firelgcp/parallel.hpp"

namespace firelgcp {

namespace {
constexpr double kMinRcond = 1e-14;

double distance(const Point2& a, const Point2& b) { return std::hypot(a.x - b.x, a.y - b.y); }
}  // namespace

OrdinaryKrigingSystem::OrdinaryKrigingSystem(const VariogramModel& model, std::vector<SpaceTimeObservation> observations)
    : model_(model), obs_(std::move(observations)) {
  const auto n = static_cast<Eigen::Index>(obs_.size());
  if (n == 0) throw ConfigError("kriging: no observations in the neighborhood");
  Eigen::MatrixXd k(n + 1, n + 1);
  values_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    values_[i] = obs_[static_cast<std::size_t>(i)].value;
    for (Eigen::Index j = 0; j <= i; ++j) {
      const auto& a = obs_[static_cast<std::size_t>(i)];
      const auto& b = obs_[static_cast<std::size_t>(j)];
      k(i, j) = k(j, i) = model_.covariance(distance(a.location, b.location), std::abs(a.month - b.month));
    }
    k(i, n) = k(n, i) = 1.0;
  }
  k(n, n) = 0.0;
  lu_.compute(k);
  if (lu_.rcond() < kMinRcond) {
    jitter_ = 1e-10 * model_.limit();
    k.topLeftCorner(n, n).diagonal().array() += jitter_;
    lu_.compute(k);
    if (lu_.rcond() < kMinRcond)
      throw NumericalError("kriging: singular kriging matrix after jitter",
                           "observations=" + std::to_string(n) + " rcond=" + std::to_string(lu_.rcond()));
  }
}

OrdinaryKrigingSystem::Solution OrdinaryKrigingSystem::solve(const Point2& target, int month) const {
  const auto n = static_cast<Eigen::Index>(obs_.size());
  Eigen::VectorXd rhs(n + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = obs_[static_cast<std::size_t>(i)];
    rhs[i] = model_.covariance(distance(o.location, target), std::abs(o.month - month));
  }
  rhs[n] = 1.0;
  const Eigen::VectorXd sol = lu_.solve(rhs);
  Solution s;
  s.weights = sol.head(n);
  s.lagrange = sol[n];
  s.prediction = s.weights.dot(values_);
  const double c0 = model_.limit();
  s.variance = c0 - s.weights.dot(rhs.head(n)) - s.lagrange;
  if (s.variance < 0.0 && s.variance > -1e-8 * c0) s.variance = 0.0;
  return s;
}

KrigingResult krige(const VariogramModel& model, const StationData& data, const std::vector<Point2>& targets,
                    const std::vector<int>& months, const KrigingOptions& options) {
  data.validate();
  if (options.time_window < 0) throw ConfigError("kriging: time_window must be >= 0");
  KrigingResult out;
  out.months = months;
  out.prediction.resize(static_cast<Eigen::Index>(targets.size()), static_cast<Eigen::Index>(months.size()));
  out.variance.resizeLike(out.prediction);
  const int n_months = data.month_count();

  parallel_for(months.size(), options.threads, [&](std::size_t mi) {
    const int month = months[mi];
    std::vector<SpaceTimeObservation> obs;
    for (int t = std::max(data.first_month, month - options.time_window);
         t <= std::min(data.first_month + n_months - 1, month + options.time_window); ++t)
      for (const auto& s : data.stations) {
        const double v = s.values[static_cast<std::size_t>(t - data.first_month)];
        if (std::isfinite(v)) obs.push_back({s.location, t, v});
      }
    if (obs.empty())
      throw ConfigError("kriging: month " + std::to_string(month) + " has no observations within the time window");
    const OrdinaryKrigingSystem system(model, std::move(obs));
    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
      const auto sol = system.solve(targets[ti], month);
      out.prediction(static_cast<Eigen::Index>(ti), static_cast<Eigen::Index>(mi)) = sol.prediction;
      out.variance(static_cast<Eigen::Index>(ti), static_cast<Eigen::Index>(mi)) = sol.variance;
    }
  });
  return out;
}

void square_back_transform(KrigingResult& result) { result.prediction = result.prediction.array().square().matrix(); }

}  // namespace firelgcp
