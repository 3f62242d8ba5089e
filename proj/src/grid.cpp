#include "firelgcp/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "firelgcp/error.hpp"

namespace firelgcp {

GridSpec GridSpec::full(double origin_x, double origin_y, double cell_size, int n_rows, int n_cols) {
  GridSpec g;
  g.origin_x = origin_x;
  g.origin_y = origin_y;
  g.cell_size = cell_size;
  g.n_rows = n_rows;
  g.n_cols = n_cols;
  g.active.assign(static_cast<std::size_t>(n_rows) * n_cols, true);
  g.validate();
  return g;
}

void GridSpec::validate() const {
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw ConfigError("grid: cell_size must be > 0");
  if (n_rows < 1 || n_cols < 1) throw ConfigError("grid: n_rows and n_cols must be >= 1");
  if (!active.empty() && active.size() != static_cast<std::size_t>(n_rows) * n_cols)
    throw ConfigError("grid: active mask size does not match n_rows * n_cols");
}

bool GridSpec::is_active(int cell_id) const {
  if (cell_id < 0 || cell_id >= cell_count()) return false;
  return active.empty() || active[static_cast<std::size_t>(cell_id)];
}

std::vector<int> GridSpec::active_cells() const {
  std::vector<int> cells;
  for (int id = 0; id < cell_count(); ++id)
    if (is_active(id)) cells.push_back(id);
  return cells;
}

Point2 GridSpec::cell_center(int cell_id) const {
  const int row = cell_id / n_cols;
  const int col = cell_id % n_cols;
  return {origin_x + (col + 0.5) * cell_size, origin_y + (row + 0.5) * cell_size};
}

std::array<Point2, 2> GridSpec::active_extent() const {
  Point2 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  Point2 hi{-lo.x, -lo.y};
  for (int id : active_cells()) {
    const int row = id / n_cols;
    const int col = id % n_cols;
    lo.x = std::min(lo.x, origin_x + col * cell_size);
    lo.y = std::min(lo.y, origin_y + row * cell_size);
    hi.x = std::max(hi.x, origin_x + (col + 1) * cell_size);
    hi.y = std::max(hi.y, origin_y + (row + 1) * cell_size);
  }
  if (!std::isfinite(lo.x)) throw ConfigError("grid: no active cells");
  return {lo, hi};
}

namespace {
// Integer k with |value - k| tiny relative to the scale, or throw.
long aligned_index(double value, const char* what) {
  const double r = std::round(value);
  if (std::fabs(value - r) > 1e-6) throw ConfigError(std::string("aggregate: raster not aligned with grid (") + what + ")");
  return static_cast<long>(r);
}
}  // namespace

CellStats aggregate_mean_sd(const FineRaster& raster, const GridSpec& grid) {
  grid.validate();
  if (!(raster.resolution > 0.0)) throw ConfigError("aggregate: raster resolution must be > 0");
  const long per_side = aligned_index(grid.cell_size / raster.resolution, "resolution does not divide cell_size");
  if (per_side < 1) throw ConfigError("aggregate: raster resolution coarser than grid cells");
  const long row0 = aligned_index((grid.origin_y - raster.origin_y) / raster.resolution, "y origin");
  const long col0 = aligned_index((grid.origin_x - raster.origin_x) / raster.resolution, "x origin");

  CellStats out;
  for (int id : grid.active_cells()) {
    const int row = id / grid.n_cols;
    const int col = id % grid.n_cols;
    const long r_begin = row0 + row * per_side;
    const long c_begin = col0 + col * per_side;
    if (r_begin < 0 || c_begin < 0 || r_begin + per_side > raster.values.rows() ||
        c_begin + per_side > raster.values.cols())
      throw ConfigError("aggregate: raster does not cover active cell " + std::to_string(id));
    double sum = 0.0;
    int count = 0;
    for (long r = r_begin; r < r_begin + per_side; ++r)
      for (long c = c_begin; c < c_begin + per_side; ++c) {
        const double v = raster.values(r, c);
        if (raster.is_missing(v)) continue;
        sum += v;
        ++count;
      }
    out.cell_ids.push_back(id);
    out.pixel_count.push_back(count);
    if (count == 0) {
      out.missing_cells.push_back(id);
      out.mean.push_back(std::numeric_limits<double>::quiet_NaN());
      out.sd.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const double mean = sum / count;
    double ss = 0.0;
    for (long r = r_begin; r < r_begin + per_side; ++r)
      for (long c = c_begin; c < c_begin + per_side; ++c) {
        const double v = raster.values(r, c);
        if (!raster.is_missing(v)) ss += (v - mean) * (v - mean);
      }
    out.mean.push_back(mean);
    out.sd.push_back(std::sqrt(ss / count));
  }
  return out;
}

CellValues interface_covariate(const CellValues& a, const CellValues& b) {
  if (a.cell_ids != b.cell_ids || a.values.size() != a.cell_ids.size() || b.values.size() != b.cell_ids.size())
    throw ConfigError("interface_covariate: inputs are defined on different cell sets");
  CellValues out{a.cell_ids, std::vector<double>(a.values.size())};
  for (std::size_t i = 0; i < a.values.size(); ++i) out.values[i] = a.values[i] * b.values[i];
  return out;
}

AnomalyResult monthly_anomalies(const Eigen::MatrixXd& values, int first_month, int months_per_year) {
  if (months_per_year != 12) throw ConfigError("monthly_anomalies: only 12 months per year are supported");
  if (values.size() == 0) throw ConfigError("monthly_anomalies: empty input");
  if (!values.allFinite()) throw ConfigError("monthly_anomalies: input contains missing values");
  std::array<double, 12> sums{};
  std::array<long, 12> counts{};
  for (Eigen::Index t = 0; t < values.cols(); ++t) {
    const int m = calendar_month(first_month + static_cast<int>(t)) - 1;
    sums[m] += values.col(t).sum();
    counts[m] += values.rows();
  }
  AnomalyResult out;
  for (int m = 0; m < 12; ++m)
    out.monthly_means[m] = counts[m] > 0 ? sums[m] / counts[m] : std::numeric_limits<double>::quiet_NaN();
  out.anomalies = values;
  for (Eigen::Index t = 0; t < values.cols(); ++t)
    out.anomalies.col(t).array() -= out.monthly_means[calendar_month(first_month + static_cast<int>(t)) - 1];
  return out;
}

Eigen::MatrixXd sqrt_transform(const Eigen::MatrixXd& values) {
  if ((values.array() < 0.0).any()) throw DomainError("sqrt_transform: negative input");
  return values.array().sqrt().matrix();
}

CovariateTable::CovariateTable(std::vector<int> cell_ids, int first_month, int last_month)
    : cell_ids_(std::move(cell_ids)), first_month_(first_month), last_month_(last_month) {
  if (last_month < first_month) throw ConfigError("CovariateTable: last_month < first_month");
  for (std::size_t i = 0; i < cell_ids_.size(); ++i) {
    if (!index_.emplace(cell_ids_[i], static_cast<int>(i)).second)
      throw ConfigError("CovariateTable: duplicate cell id " + std::to_string(cell_ids_[i]));
  }
  static_.resize(static_cast<Eigen::Index>(cell_ids_.size()), 0);
  dynamic_.resize(static_cast<Eigen::Index>(cell_ids_.size()) * month_count(), 0);
}

int CovariateTable::cell_index(int cell_id) const {
  const auto it = index_.find(cell_id);
  if (it == index_.end()) throw ConfigError("covariates: unknown cell id " + std::to_string(cell_id));
  return it->second;
}

void CovariateTable::add_static(const std::string& name, const std::vector<double>& values) {
  if (values.size() != cell_ids_.size()) throw ConfigError("covariates: static column '" + name + "' has wrong length");
  if (std::find(static_names_.begin(), static_names_.end(), name) != static_names_.end())
    throw ConfigError("covariates: duplicate static column '" + name + "'");
  static_.conservativeResize(Eigen::NoChange, static_.cols() + 1);
  static_.col(static_.cols() - 1) = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  static_names_.push_back(name);
}

void CovariateTable::add_dynamic(const std::string& name, const Eigen::MatrixXd& values) {
  if (values.rows() != static_cast<Eigen::Index>(cell_ids_.size()) || values.cols() != month_count())
    throw ConfigError("covariates: dynamic column '" + name + "' must be cells x months");
  if (std::find(dynamic_names_.begin(), dynamic_names_.end(), name) != dynamic_names_.end())
    throw ConfigError("covariates: duplicate dynamic column '" + name + "'");
  dynamic_.conservativeResize(Eigen::NoChange, dynamic_.cols() + 1);
  const auto col = dynamic_.cols() - 1;
  const int t_count = month_count();
  for (Eigen::Index c = 0; c < values.rows(); ++c)
    for (int t = 0; t < t_count; ++t) dynamic_(c * t_count + t, col) = values(c, t);
  dynamic_names_.push_back(name);
}

void CovariateTable::add_time_covariate() {
  Eigen::MatrixXd t(static_cast<Eigen::Index>(cell_ids_.size()), month_count());
  const double span = std::max(1, last_month_ - first_month_);
  for (int k = 0; k < month_count(); ++k) t.col(k).setConstant(k / span);
  add_dynamic(kTimeName, t);
}

Eigen::Index CovariateTable::dynamic_row(int cell_id, int month) const {
  if (month < first_month_ || month > last_month_)
    throw ConfigError("covariates: month " + std::to_string(month) + " outside table range");
  return static_cast<Eigen::Index>(cell_index(cell_id)) * month_count() + (month - first_month_);
}

double CovariateTable::dynamic_value(int cell_id, int month, int column) const {
  return dynamic_(dynamic_row(cell_id, month), column);
}

void CovariateTable::validate() const {
  for (Eigen::Index j = 0; j < static_.cols(); ++j)
    if (!static_.col(j).allFinite()) throw ConfigError("covariates: missing values in static column '" + static_names_[j] + "'");
  for (Eigen::Index j = 0; j < dynamic_.cols(); ++j)
    if (!dynamic_.col(j).allFinite()) throw ConfigError("covariates: missing values in dynamic column '" + dynamic_names_[j] + "'");
}

namespace {
Standardization standardize_column(Eigen::Ref<Eigen::VectorXd> col, const std::string& name) {
  const auto n = col.size();
  if (n < 2) throw ConfigError("covariates: cannot standardize '" + name + "' with fewer than 2 values");
  const double mean = col.mean();
  const double var = (col.array() - mean).square().sum() / static_cast<double>(n - 1);
  const double sd = std::sqrt(var);
  if (!(sd > 1e-12 * (1.0 + std::fabs(mean)))) throw ConfigError("covariates: column '" + name + "' is constant");
  col = ((col.array() - mean) / sd).matrix();
  // second pass removes the rounding residue of the first
  const double residual = col.mean();
  col.array() -= residual;
  return {mean + residual * sd, sd};
}
}  // namespace

void CovariateTable::standardize() {
  validate();
  standardization_.clear();
  for (Eigen::Index j = 0; j < static_.cols(); ++j)
    standardization_[static_names_[j]] = standardize_column(static_.col(j), static_names_[j]);
  for (Eigen::Index j = 0; j < dynamic_.cols(); ++j) {
    if (dynamic_names_[j] == kTimeName) continue;
    standardization_[dynamic_names_[j]] = standardize_column(dynamic_.col(j), dynamic_names_[j]);
  }
}

}  // namespace firelgcp
