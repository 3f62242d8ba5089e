#include "firelgcp/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "firelgcp/error.hpp"

namespace firelgcp::io {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(trim(field));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
  return out;
}

bool is_na(const std::string& s) { return s.empty() || s == "NA" || s == "NaN" || s == "nan"; }

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ConfigError(source + ": missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(const fs::path& path) {
  auto in = open_in(path);
  CsvTable t;
  t.source = path.string();
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (t.header.empty()) {
      t.header = split(s, ',');
      continue;
    }
    auto fields = split(s, ',');
    if (fields.size() != t.header.size())
      throw ConfigError(t.source + ":" + std::to_string(n) + ": expected " + std::to_string(t.header.size()) +
                        " fields, got " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(n);
  }
  if (t.header.empty()) throw ConfigError(t.source + ": empty file");
  return t;
}

double parse_double(const std::string& s, const std::string& context) {
  if (is_na(s)) return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError(context + ": cannot parse '" + s + "' as a number");
  return v;
}

long parse_long(const std::string& s, const std::string& context) {
  long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError(context + ": cannot parse '" + s + "' as an integer");
  return v;
}

FineRaster read_ascii_raster(const fs::path& path) {
  auto in = open_in(path);
  std::map<std::string, double> head;
  std::string key;
  const std::string where = path.string();
  for (int i = 0; i < 6; ++i) {
    std::string value;
    if (!(in >> key >> value)) throw ConfigError(where + ": truncated raster header");
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    head[key] = parse_double(value, where);
  }
  for (const char* k : {"ncols", "nrows", "cellsize", "nodata_value"})
    if (!head.count(k)) throw ConfigError(where + ": raster header lacks '" + std::string(k) + "'");
  const bool corner = head.count("xllcorner") && head.count("yllcorner");
  const bool center = head.count("xllcenter") && head.count("yllcenter");
  if (!corner && !center) throw ConfigError(where + ": raster header lacks the lower-left coordinates");
  FineRaster r;
  const int nc = static_cast<int>(head["ncols"]);
  const int nr = static_cast<int>(head["nrows"]);
  if (nc < 1 || nr < 1) throw ConfigError(where + ": raster must have positive dimensions");
  r.resolution = head["cellsize"];
  if (!(r.resolution > 0.0)) throw ConfigError(where + ": cellsize must be > 0");
  r.origin_x = corner ? head["xllcorner"] : head["xllcenter"] - 0.5 * r.resolution;
  r.origin_y = corner ? head["yllcorner"] : head["yllcenter"] - 0.5 * r.resolution;
  r.missing_code = head["nodata_value"];
  r.variable_name = path.stem().string();
  r.values.resize(nr, nc);
  std::string tok;
  for (int row = nr - 1; row >= 0; --row)
    for (int col = 0; col < nc; ++col) {
      if (!(in >> tok)) throw ConfigError(where + ": raster has fewer values than ncols * nrows");
      r.values(row, col) = parse_double(tok, where);
    }
  if (in >> tok) throw ConfigError(where + ": raster has more values than ncols * nrows");
  return r;
}

void write_ascii_raster(const fs::path& path, const FineRaster& r) {
  auto out = open_out(path);
  out << "ncols " << r.values.cols() << "\nnrows " << r.values.rows() << "\nxllcorner " << format_double(r.origin_x)
      << "\nyllcorner " << format_double(r.origin_y) << "\ncellsize " << format_double(r.resolution)
      << "\nNODATA_value " << format_double(r.missing_code) << "\n";
  for (Eigen::Index row = r.values.rows() - 1; row >= 0; --row) {
    for (Eigen::Index col = 0; col < r.values.cols(); ++col) {
      const double v = r.values(row, col);
      out << (col ? " " : "") << format_double(std::isfinite(v) ? v : r.missing_code);
    }
    out << "\n";
  }
}

FineRaster read_raster_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const auto cx = t.column("x"), cy = t.column("y"), cv = t.column("value");
  if (t.rows.empty()) throw ConfigError(t.source + ": no raster values");
  std::set<double> xs, ys;
  std::vector<std::array<double, 3>> pts;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::string ctx = t.source + ":" + std::to_string(t.line_numbers[i]);
    const double x = parse_double(t.rows[i][cx], ctx), y = parse_double(t.rows[i][cy], ctx);
    if (!std::isfinite(x) || !std::isfinite(y)) throw ConfigError(ctx + ": coordinates must be finite");
    xs.insert(x);
    ys.insert(y);
    pts.push_back({x, y, parse_double(t.rows[i][cv], ctx)});
  }
  auto spacing = [&](const std::set<double>& s) {
    double d = std::numeric_limits<double>::infinity();
    for (auto it = std::next(s.begin()); it != s.end(); ++it) d = std::min(d, *it - *std::prev(it));
    return d;
  };
  double res = std::min(spacing(xs), spacing(ys));
  if (!std::isfinite(res)) throw ConfigError(t.source + ": cannot infer the raster resolution from one point");
  FineRaster r;
  r.resolution = res;
  r.origin_x = *xs.begin() - 0.5 * res;
  r.origin_y = *ys.begin() - 0.5 * res;
  r.variable_name = path.stem().string();
  const int nc = static_cast<int>(std::lround((*xs.rbegin() - *xs.begin()) / res)) + 1;
  const int nr = static_cast<int>(std::lround((*ys.rbegin() - *ys.begin()) / res)) + 1;
  r.values = Eigen::MatrixXd::Constant(nr, nc, std::numeric_limits<double>::quiet_NaN());
  for (const auto& p : pts) {
    const double fc = (p[0] - *xs.begin()) / res, fr = (p[1] - *ys.begin()) / res;
    const long c = std::lround(fc), rr = std::lround(fr);
    if (std::fabs(fc - c) > 1e-6 || std::fabs(fr - rr) > 1e-6)
      throw ConfigError(t.source + ": points do not lie on a regular lattice");
    r.values(rr, c) = p[2];
  }
  return r;
}

FineRaster read_raster(const fs::path& path) {
  return path.extension() == ".csv" ? read_raster_csv(path) : read_ascii_raster(path);
}

GridSpec read_grid(const fs::path& path) {
  const FineRaster r = read_ascii_raster(path);
  GridSpec g;
  g.origin_x = r.origin_x;
  g.origin_y = r.origin_y;
  g.cell_size = r.resolution;
  g.n_rows = static_cast<int>(r.values.rows());
  g.n_cols = static_cast<int>(r.values.cols());
  g.active.assign(static_cast<std::size_t>(g.cell_count()), false);
  for (int row = 0; row < g.n_rows; ++row)
    for (int col = 0; col < g.n_cols; ++col) {
      const double v = r.values(row, col);
      g.active[static_cast<std::size_t>(row * g.n_cols + col)] = !r.is_missing(v) && v != 0.0;
    }
  g.validate();
  return g;
}

void write_grid(const fs::path& path, const GridSpec& grid) {
  FineRaster r;
  r.origin_x = grid.origin_x;
  r.origin_y = grid.origin_y;
  r.resolution = grid.cell_size;
  r.missing_code = -9999.0;
  r.values.resize(grid.n_rows, grid.n_cols);
  for (int row = 0; row < grid.n_rows; ++row)
    for (int col = 0; col < grid.n_cols; ++col) r.values(row, col) = grid.is_active(row * grid.n_cols + col) ? 1 : 0;
  write_ascii_raster(path, r);
}

CovariateTable read_covariates(const fs::path& dir) {
  const fs::path static_path = dir / "static.csv", dynamic_path = dir / "dynamic.csv";
  if (!fs::exists(dynamic_path)) throw ConfigError("covariate directory '" + dir.string() + "' lacks dynamic.csv");
  const CsvTable dyn = read_csv(dynamic_path);
  const auto c_cell = dyn.column("cell_id"), c_month = dyn.column("month_index");
  std::set<int> cell_set;
  int first = std::numeric_limits<int>::max(), last = std::numeric_limits<int>::min();
  for (std::size_t i = 0; i < dyn.rows.size(); ++i) {
    const std::string ctx = dyn.source + ":" + std::to_string(dyn.line_numbers[i]);
    cell_set.insert(static_cast<int>(parse_long(dyn.rows[i][c_cell], ctx)));
    const int m = static_cast<int>(parse_long(dyn.rows[i][c_month], ctx));
    first = std::min(first, m);
    last = std::max(last, m);
  }
  if (cell_set.empty()) throw ConfigError(dyn.source + ": no rows");
  std::vector<int> cells(cell_set.begin(), cell_set.end());
  CovariateTable table(cells, first, last);
  const long expected = static_cast<long>(cells.size()) * (last - first + 1);
  if (static_cast<long>(dyn.rows.size()) != expected)
    throw ConfigError(dyn.source + ": expected one row per (cell, month): " + std::to_string(expected) + " rows, got " +
                      std::to_string(dyn.rows.size()));
  for (std::size_t j = 0; j < dyn.header.size(); ++j) {
    if (j == c_cell || j == c_month) continue;
    Eigen::MatrixXd v = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(cells.size()), last - first + 1,
                                                  std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < dyn.rows.size(); ++i) {
      const std::string ctx = dyn.source + ":" + std::to_string(dyn.line_numbers[i]);
      const int ci = table.cell_index(static_cast<int>(parse_long(dyn.rows[i][c_cell], ctx)));
      const int m = static_cast<int>(parse_long(dyn.rows[i][c_month], ctx));
      v(ci, m - first) = parse_double(dyn.rows[i][j], ctx);
    }
    table.add_dynamic(dyn.header[j], v);
  }
  if (fs::exists(static_path)) {
    const CsvTable st = read_csv(static_path);
    const auto s_cell = st.column("cell_id");
    std::map<int, std::size_t> row_of;
    for (std::size_t i = 0; i < st.rows.size(); ++i) {
      const int id = static_cast<int>(parse_long(st.rows[i][s_cell], st.source));
      if (!row_of.emplace(id, i).second) throw ConfigError(st.source + ": duplicate cell_id " + std::to_string(id));
    }
    for (std::size_t j = 0; j < st.header.size(); ++j) {
      if (j == s_cell) continue;
      std::vector<double> v;
      for (int id : cells) {
        const auto it = row_of.find(id);
        if (it == row_of.end()) throw ConfigError(st.source + ": no static covariates for cell " + std::to_string(id));
        v.push_back(parse_double(st.rows[it->second][j], st.source));
      }
      table.add_static(st.header[j], v);
    }
  }
  const fs::path std_path = dir / "standardization.csv";
  if (fs::exists(std_path)) {
    const CsvTable s = read_csv(std_path);
    const auto cn = s.column("name"), cm = s.column("mean"), cs = s.column("sd");
    std::map<std::string, Standardization> m;
    for (const auto& row : s.rows) m[row[cn]] = {parse_double(row[cm], s.source), parse_double(row[cs], s.source)};
    table.set_standardization(std::move(m));
  }
  table.validate();
  return table;
}

void write_covariates(const fs::path& dir, const CovariateTable& table) {
  ensure_directory(dir);
  {
    auto out = open_out(dir / "static.csv");
    out << "cell_id";
    for (const auto& n : table.static_names()) out << "," << n;
    out << "\n";
    for (std::size_t c = 0; c < table.cell_ids().size(); ++c) {
      out << table.cell_ids()[c];
      for (Eigen::Index j = 0; j < table.static_values().cols(); ++j)
        out << "," << format_double(table.static_values()(static_cast<Eigen::Index>(c), j));
      out << "\n";
    }
  }
  {
    auto out = open_out(dir / "dynamic.csv");
    out << "cell_id,month_index";
    for (const auto& n : table.dynamic_names()) out << "," << n;
    out << "\n";
    for (int id : table.cell_ids())
      for (int m = table.first_month(); m <= table.last_month(); ++m) {
        out << id << "," << m;
        const auto row = table.dynamic_row(id, m);
        for (Eigen::Index j = 0; j < table.dynamic_values().cols(); ++j)
          out << "," << format_double(table.dynamic_values()(row, j));
        out << "\n";
      }
  }
  if (!table.standardization().empty()) {
    auto out = open_out(dir / "standardization.csv");
    out << "name,mean,sd\n";
    for (const auto& [name, s] : table.standardization())
      out << name << "," << format_double(s.mean) << "," << format_double(s.sd) << "\n";
  }
}

StationData read_stations(const fs::path& path, const std::string& variable) {
  const CsvTable t = read_csv(path);
  const auto ci = t.column("station_id"), cx = t.column("x_km"), cy = t.column("y_km"), cm = t.column("month_index"),
             cvar = t.column("variable"), cv = t.column("value");
  struct Station {
    Point2 loc;
    std::map<int, double> values;
  };
  std::map<std::string, Station> stations;
  int first = std::numeric_limits<int>::max(), last = std::numeric_limits<int>::min();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    if (r[cvar] != variable) continue;
    const std::string ctx = t.source + ":" + std::to_string(t.line_numbers[i]);
    const Point2 loc{parse_double(r[cx], ctx), parse_double(r[cy], ctx)};
    auto [it, inserted] = stations.try_emplace(r[ci], Station{loc, {}});
    if (!inserted && (it->second.loc.x != loc.x || it->second.loc.y != loc.y))
      throw ConfigError(ctx + ": station '" + r[ci] + "' changes location");
    const int m = static_cast<int>(parse_long(r[cm], ctx));
    if (!it->second.values.emplace(m, parse_double(r[cv], ctx)).second)
      throw ConfigError(ctx + ": duplicate month for station '" + r[ci] + "'");
    first = std::min(first, m);
    last = std::max(last, m);
  }
  if (stations.empty()) throw ConfigError(t.source + ": no rows for variable '" + variable + "'");
  StationData data;
  data.variable = variable;
  data.first_month = first;
  for (const auto& [id, s] : stations) {
    StationSeries series;
    series.station_id = id;
    series.location = s.loc;
    series.values.assign(static_cast<std::size_t>(last - first + 1), std::numeric_limits<double>::quiet_NaN());
    for (const auto& [m, v] : s.values) series.values[static_cast<std::size_t>(m - first)] = v;
    data.stations.push_back(std::move(series));
  }
  data.validate();
  return data;
}

void write_stations(const fs::path& path, const StationData& data) {
  auto out = open_out(path);
  out << "station_id,x_km,y_km,month_index,variable,value\n";
  for (const auto& s : data.stations)
    for (std::size_t k = 0; k < s.values.size(); ++k) {
      if (std::isnan(s.values[k])) continue;
      out << s.station_id << "," << format_double(s.location.x) << "," << format_double(s.location.y) << ","
          << data.first_month + static_cast<int>(k) << "," << data.variable << "," << format_double(s.values[k]) << "\n";
    }
}

std::vector<CountRecord> read_counts(const fs::path& path, double default_exposure) {
  const CsvTable t = read_csv(path);
  const auto cc = t.column("cell_id"), cm = t.column("month_index"), cn = t.column("count");
  const auto has = [&](const char* n) { return std::find(t.header.begin(), t.header.end(), n) != t.header.end(); };
  const bool with_exposure = has("exposure");
  const bool with_agg = has("n_aggregated");
  std::vector<CountRecord> out;
  out.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::string ctx = t.source + ":" + std::to_string(t.line_numbers[i]);
    CountRecord r;
    r.cell_id = static_cast<int>(parse_long(t.rows[i][cc], ctx));
    r.month = static_cast<int>(parse_long(t.rows[i][cm], ctx));
    r.count = parse_long(t.rows[i][cn], ctx);
    if (r.count < 0) throw ConfigError(ctx + ": negative count");
    r.exposure = with_exposure ? parse_double(t.rows[i][t.column("exposure")], ctx) : default_exposure;
    r.n_aggregated = with_agg ? static_cast<int>(parse_long(t.rows[i][t.column("n_aggregated")], ctx)) : 1;
    if (!(r.exposure > 0.0)) throw ConfigError(ctx + ": exposure must be > 0");
    out.push_back(r);
  }
  return out;
}

void write_counts(const fs::path& path, const std::vector<CountRecord>& records, bool with_exposure) {
  auto out = open_out(path);
  out << (with_exposure ? "cell_id,month_index,count,exposure,n_aggregated\n" : "cell_id,month_index,count\n");
  for (const auto& r : records) {
    out << r.cell_id << "," << r.month << "," << r.count;
    if (with_exposure) out << "," << format_double(r.exposure) << "," << r.n_aggregated;
    out << "\n";
  }
}

KeyValues read_key_values(const fs::path& path) {
  auto in = open_in(path);
  KeyValues kv;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    const std::string s = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": expected 'key = value'");
    const std::string key = trim(s.substr(0, eq));
    if (key.empty()) throw ConfigError(path.string() + ":" + std::to_string(n) + ": empty key");
    if (!kv.emplace(key, trim(s.substr(eq + 1))).second)
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": duplicate key '" + key + "'");
  }
  return kv;
}

void reject_unknown_keys(const KeyValues& kv, const std::vector<std::string>& allowed, const std::string& what) {
  for (const auto& [k, v] : kv)
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw ConfigError(what + ": unknown key '" + k + "'");
}

void write_key_values(const fs::path& path, const std::vector<std::pair<std::string, std::string>>& kv) {
  auto out = open_out(path);
  for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
}

VariogramModel read_variogram_model(const fs::path& path) {
  const KeyValues kv = read_key_values(path);
  reject_unknown_keys(kv,
                      {"kind", "variable", "spatial_sill", "spatial_range", "spatial_nugget", "temporal_sill",
                       "temporal_range", "temporal_nugget", "k", "sill", "objective"},
                      path.string());
  auto get = [&](const std::string& k) {
    const auto it = kv.find(k);
    if (it == kv.end()) throw ConfigError(path.string() + ": missing key '" + k + "'");
    return parse_double(it->second, path.string() + ": " + k);
  };
  const auto kind_it = kv.find("kind");
  if (kind_it == kv.end()) throw ConfigError(path.string() + ": missing key 'kind'");
  const ExponentialComponent s{get("spatial_sill"), get("spatial_range"), get("spatial_nugget")};
  const ExponentialComponent t{get("temporal_sill"), get("temporal_range"), get("temporal_nugget")};
  if (variogram_kind_from_string(kind_it->second) == VariogramKind::product_sum)
    return VariogramModel::product_sum(s, t, get("k"));
  return VariogramModel::separable(s, t, get("sill"));
}

void write_variogram_model(const fs::path& path, const VariogramModel& m, const std::string& variable,
                           double objective) {
  std::vector<std::pair<std::string, std::string>> kv{
      {"kind", to_string(m.kind())},
      {"variable", variable},
      {"spatial_sill", format_double(m.spatial().sill)},
      {"spatial_range", format_double(m.spatial().range)},
      {"spatial_nugget", format_double(m.spatial().nugget)},
      {"temporal_sill", format_double(m.temporal().sill)},
      {"temporal_range", format_double(m.temporal().range)},
      {"temporal_nugget", format_double(m.temporal().nugget)}};
  if (m.kind() == VariogramKind::product_sum)
    kv.emplace_back("k", format_double(m.k()));
  else
    kv.emplace_back("sill", format_double(m.sill()));
  if (std::isfinite(objective)) kv.emplace_back("objective", format_double(objective));
  write_key_values(path, kv);
}

std::vector<VariogramBin> read_empirical_variogram(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const auto ch = t.column("h"), cb = t.column("h_bin"), cu = t.column("u"), cg = t.column("gamma"),
             cn = t.column("n_pairs");
  std::vector<VariogramBin> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::string ctx = t.source + ":" + std::to_string(t.line_numbers[i]);
    const auto& r = t.rows[i];
    out.push_back({parse_double(r[ch], ctx), static_cast<int>(parse_long(r[cb], ctx)),
                   static_cast<int>(parse_long(r[cu], ctx)), parse_double(r[cg], ctx), parse_long(r[cn], ctx)});
  }
  return out;
}

void write_empirical_variogram(const fs::path& path, const std::vector<VariogramBin>& bins) {
  auto out = open_out(path);
  out << "h_bin,h,u,gamma,n_pairs\n";
  for (const auto& b : bins)
    out << b.h_bin << "," << format_double(b.h) << "," << b.u << "," << format_double(b.gamma) << "," << b.n_pairs
        << "\n";
}

void write_mesh(const fs::path& vertices_csv, const fs::path& triangles_csv, const Mesh& mesh) {
  {
    auto out = open_out(vertices_csv);
    out << "vertex,x_km,y_km\n";
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
      out << i << "," << format_double(mesh.vertices[i].x) << "," << format_double(mesh.vertices[i].y) << "\n";
  }
  auto out = open_out(triangles_csv);
  out << "triangle,v0,v1,v2\n";
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
    out << t << "," << mesh.triangles[t][0] << "," << mesh.triangles[t][1] << "," << mesh.triangles[t][2] << "\n";
}

Mesh read_mesh(const fs::path& vertices_csv, const fs::path& triangles_csv) {
  const CsvTable v = read_csv(vertices_csv);
  const CsvTable t = read_csv(triangles_csv);
  Mesh m;
  const auto cx = v.column("x_km"), cy = v.column("y_km");
  for (const auto& r : v.rows) m.vertices.push_back({parse_double(r[cx], v.source), parse_double(r[cy], v.source)});
  const auto a = t.column("v0"), b = t.column("v1"), c = t.column("v2");
  for (const auto& r : t.rows)
    m.triangles.push_back({static_cast<int>(parse_long(r[a], t.source)), static_cast<int>(parse_long(r[b], t.source)),
                           static_cast<int>(parse_long(r[c], t.source))});
  for (const auto& tri : m.triangles)
    for (int k : tri)
      if (k < 0 || k >= static_cast<int>(m.vertices.size())) throw ConfigError(t.source + ": vertex index out of range");
  m.validate();
  return m;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "' for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create directory '" + dir.string() + "': " + ec.message());
}

}  // namespace firelgcp::io
