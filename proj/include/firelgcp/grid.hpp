#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace firelgcp {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Coarse analysis grid. Cells are indexed row-major from the origin
/// (row 0 is the southernmost row): cell_id = row * n_cols + col.
struct GridSpec {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double cell_size = 2.0;  // km
  int n_rows = 1;
  int n_cols = 1;
  std::vector<bool> active;  // size n_rows * n_cols; empty means all active

  static GridSpec full(double origin_x, double origin_y, double cell_size, int n_rows, int n_cols);

  void validate() const;
  int cell_count() const { return n_rows * n_cols; }
  bool is_active(int cell_id) const;
  std::vector<int> active_cells() const;
  Point2 cell_center(int cell_id) const;
  double cell_area() const { return cell_size * cell_size; }
  /// Bounding box (min, max) of the active cells.
  std::array<Point2, 2> active_extent() const;
};

/// Fine-resolution raster, row 0 southernmost, same convention as GridSpec.
struct FineRaster {
  Eigen::MatrixXd values;  // n_rows x n_cols
  double origin_x = 0.0;
  double origin_y = 0.0;
  double resolution = 0.2;  // km
  std::string variable_name;
  double missing_code = -9999.0;

  bool is_missing(double v) const { return !std::isfinite(v) || v == missing_code; }
};

struct CellStats {
  std::vector<int> cell_ids;
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<int> pixel_count;
  /// Active cells whose pixels are all missing; their mean/sd are NaN.
  std::vector<int> missing_cells;
};

/// Per-active-cell mean and population standard deviation of the fine pixels
/// inside each cell, ignoring missing pixels.
CellStats aggregate_mean_sd(const FineRaster& raster, const GridSpec& grid);

struct CellValues {
  std::vector<int> cell_ids;
  std::vector<double> values;
};

/// Elementwise product on raw (unstandardized) scales.
CellValues interface_covariate(const CellValues& a, const CellValues& b);

struct AnomalyResult {
  Eigen::MatrixXd anomalies;          // cells x months
  std::array<double, 12> monthly_means{};  // index 0 = January
};

/// `values` is cells x months, column t holding month index first_month + t.
/// Month index 1 is January. Subtracts the mean over all cells and years of
/// each calendar month.
AnomalyResult monthly_anomalies(const Eigen::MatrixXd& values, int first_month = 1, int months_per_year = 12);

/// Elementwise square root; throws DomainError on negative input.
Eigen::MatrixXd sqrt_transform(const Eigen::MatrixXd& values);

struct Standardization {
  double mean = 0.0;
  double sd = 1.0;
};

/// Static (per active cell) and dynamic (per active cell and month) covariates.
/// Dynamic row index is cell_index * month_count() + (month - first_month).
class CovariateTable {
 public:
  static constexpr const char* kTimeName = "time";

  CovariateTable() = default;
  CovariateTable(std::vector<int> cell_ids, int first_month, int last_month);

  const std::vector<int>& cell_ids() const { return cell_ids_; }
  int first_month() const { return first_month_; }
  int last_month() const { return last_month_; }
  int month_count() const { return last_month_ - first_month_ + 1; }
  int cell_index(int cell_id) const;
  bool has_cell(int cell_id) const { return index_.count(cell_id) > 0; }

  void add_static(const std::string& name, const std::vector<double>& values);
  /// values: cells x months
  void add_dynamic(const std::string& name, const Eigen::MatrixXd& values);
  /// Adds the normalized time (t - t_min) / (t_max - t_min) as dynamic covariate "time".
  void add_time_covariate();

  const std::vector<std::string>& static_names() const { return static_names_; }
  const std::vector<std::string>& dynamic_names() const { return dynamic_names_; }
  const Eigen::MatrixXd& static_values() const { return static_; }
  const Eigen::MatrixXd& dynamic_values() const { return dynamic_; }
  double static_value(int cell_id, int column) const { return static_(cell_index(cell_id), column); }
  double dynamic_value(int cell_id, int month, int column) const;
  Eigen::Index dynamic_row(int cell_id, int month) const;

  /// Centers and scales every covariate except "time" to sample mean 0 and
  /// sample standard deviation 1. Throws on missing values or constant columns.
  void standardize();
  const std::map<std::string, Standardization>& standardization() const { return standardization_; }
  void set_standardization(std::map<std::string, Standardization> s) { standardization_ = std::move(s); }
  /// Throws ConfigError if any value is non-finite.
  void validate() const;

 private:
  std::vector<int> cell_ids_;
  std::map<int, int> index_;
  int first_month_ = 1;
  int last_month_ = 1;
  std::vector<std::string> static_names_;
  std::vector<std::string> dynamic_names_;
  Eigen::MatrixXd static_;
  Eigen::MatrixXd dynamic_;
  std::map<std::string, Standardization> standardization_;
};

inline int calendar_month(int month_index) { return (month_index - 1) % 12 + 1; }
/// Zero-based year offset of a month index (month 1 -> year 0).
inline int year_index(int month_index) { return (month_index - 1) / 12; }

}  // namespace firelgcp
