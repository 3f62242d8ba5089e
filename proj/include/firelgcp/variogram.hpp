#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "firelgcp/error.hpp"
#include "firelgcp/grid.hpp"

namespace firelgcp {

/// Monthly series at one weather station. values[k] belongs to month index
/// first_month + k of the enclosing StationData; NaN marks a missing month.
struct StationSeries {
  std::string station_id;
  Point2 location;  // km
  std::vector<double> values;
};

struct StationData {
  std::string variable;
  int first_month = 1;
  std::vector<StationSeries> stations;

  int month_count() const { return stations.empty() ? 0 : static_cast<int>(stations.front().values.size()); }
  /// Throws ConfigError unless >= 2 stations with distinct locations and
  /// equally long series of >= 2 months.
  void validate() const;
  double max_distance() const;
};

/// Exponential variogram nugget + sill * (1 - exp(-lag / range)) for lag > 0,
/// and 0 at lag 0. `sill` is the partial sill.
struct ExponentialComponent {
  double sill = 1.0;
  double range = 1.0;
  double nugget = 0.0;

  double total_sill() const { return nugget + sill; }
  double operator()(double lag) const;
  void validate(const char* what) const;
};

enum class VariogramKind { separable, product_sum };

std::string to_string(VariogramKind kind);
VariogramKind variogram_kind_from_string(const std::string& s);

/// Space-time variogram, validated on construction.
///  product_sum: g = (k s_t + 1) g_s(h) + (k s_s + 1) g_t(u) - k g_s(h) g_t(u)
///  separable:   g = sill * (g_s(h) + g_t(u) - g_s(h) g_t(u)) with unit-sill components
class VariogramModel {
 public:
  static VariogramModel product_sum(ExponentialComponent spatial, ExponentialComponent temporal, double k);
  static VariogramModel separable(ExponentialComponent spatial, ExponentialComponent temporal, double sill);

  VariogramKind kind() const { return kind_; }
  const ExponentialComponent& spatial() const { return spatial_; }
  const ExponentialComponent& temporal() const { return temporal_; }
  double k() const { return k_; }
  double sill() const { return sill_; }

  double operator()(double h, double u) const;
  /// Limit of the variogram as h, u -> infinity.
  double limit() const;
  /// Covariance limit() - gamma(h, u).
  double covariance(double h, double u) const { return limit() - (*this)(h, u); }

 private:
  VariogramModel() = default;
  VariogramKind kind_ = VariogramKind::separable;
  ExponentialComponent spatial_;
  ExponentialComponent temporal_;
  double k_ = 0.0;
  double sill_ = 1.0;
};

struct VariogramBin {
  double h = 0.0;   // mean pair distance in the bin (km)
  int h_bin = 0;    // 0 = same station, k >= 1 = k-th distance class
  int u = 0;        // time lag (months)
  double gamma = 0.0;
  long n_pairs = 0;
};

/// 10 equal-width distance classes up to half the maximum station distance.
std::vector<double> default_space_edges(const StationData& data, int n_bins = 10);

/// Semivariances 0.5 (z_i - z_j)^2 averaged over station-month pairs grouped
/// by distance class and absolute time lag 0..max_time_lag. Same-station
/// pairs form class 0; distances beyond the last edge are ignored. Empty
/// bins are omitted.
std::vector<VariogramBin> empirical_variogram(const StationData& data, const std::vector<double>& space_edges,
                                              int max_time_lag = 12);

struct VariogramFitOptions {
  int restarts = 5;
  double tolerance = 1e-8;
  int max_evaluations = 20000;
  std::uint64_t seed = 17;
};

struct VariogramFit {
  VariogramModel model;
  double objective = 0.0;  // sum n_pairs (gamma_hat - gamma)^2
  int evaluations = 0;
  bool converged = false;
};

/// Raised when the optimizer does not converge; carries the best iterate.
class VariogramFitError : public NumericalError {
 public:
  VariogramFitError(const std::string& what, VariogramFit best, std::string diagnostics)
      : NumericalError(what, std::move(diagnostics)), best_(std::move(best)) {}
  const VariogramFit& best() const { return best_; }

 private:
  VariogramFit best_;
};

/// n_pairs-weighted least squares fit. If the table has no positive time lags
/// the temporal component (and k) stay at their initial values; likewise the
/// spatial component when there are no positive distances.
VariogramFit fit_variogram(const std::vector<VariogramBin>& empirical, VariogramKind kind,
                           const VariogramModel& init, const VariogramFitOptions& options = {});

}  // namespace firelgcp
