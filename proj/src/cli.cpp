#include "firelgcp/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "firelgcp/error.hpp"
#include "firelgcp/io.hpp"
#include "firelgcp/kriging.hpp"
#include "firelgcp/variogram.hpp"
#include "firelgcp/version.hpp"

namespace firelgcp::cli {

using json = nlohmann::ordered_json;
using io::format_double;

namespace {

// ---------------------------------------------------------------- parsing

double to_double(const std::string& v, const std::string& key) { return io::parse_double(v, "key '" + key + "'"); }

long to_long(const std::string& v, const std::string& key) { return io::parse_long(v, "key '" + key + "'"); }

bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<double> to_doubles(const std::string& v, const std::string& key) {
  std::vector<double> out;
  for (const auto& s : split_list(v, ',')) out.push_back(to_double(s, key));
  return out;
}

/// "1-12,15" -> {1..12, 15}
std::vector<int> parse_months(const std::string& spec) {
  std::set<int> months;
  for (const auto& part : split_list(spec, ',')) {
    const auto dash = part.find('-', 1);
    if (dash == std::string::npos) {
      months.insert(static_cast<int>(io::parse_long(part, "months")));
      continue;
    }
    const int a = static_cast<int>(io::parse_long(part.substr(0, dash), "months"));
    const int b = static_cast<int>(io::parse_long(part.substr(dash + 1), "months"));
    if (b < a) throw ConfigError("months: empty range '" + part + "'");
    for (int m = a; m <= b; ++m) months.insert(m);
  }
  if (months.empty() || *months.begin() < 1) throw ConfigError("months: expected month indices >= 1");
  return {months.begin(), months.end()};
}

// ---------------------------------------------------------------- run context

struct RunContext {
  std::vector<std::string> args;
  fs::path out_dir = ".";
  std::uint64_t seed = 1;
  bool seed_given = false;
  int threads = 1;
  fs::path config_path;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  std::ostream* log = &std::cerr;
  bool quiet = false;

  void input(const fs::path& p) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file()) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) inputs.push_back(f);
    } else {
      inputs.push_back(p);
    }
  }
  fs::path output(const std::string& name) {
    const fs::path p = out_dir / name;
    outputs.push_back(p);
    return p;
  }
  void info(const std::string& verb, const std::string& msg) const {
    if (!quiet) *log << "level=info verb=" << verb << " msg=\"" << msg << "\"\n";
  }
};

void write_manifest(const RunContext& ctx, const std::string& verb) {
  json m;
  m["tool"] = "firelgcp";
  m["version"] = kVersion;
  m["verb"] = verb;
  m["args"] = ctx.args;
  m["seed"] = ctx.seed;
  m["threads"] = ctx.threads;
  if (!ctx.config_path.empty()) {
    std::ifstream in(ctx.config_path);
    std::stringstream text;
    text << in.rdbuf();
    m["config"] = {{"path", ctx.config_path.string()}, {"text", text.str()}};
  }
  json inputs = json::array();
  for (const auto& p : ctx.inputs) inputs.push_back({{"path", p.string()}, {"sha256", io::sha256_file(p)}});
  m["inputs"] = inputs;
  json outputs = json::array();
  std::set<std::string> seen;
  for (const auto& p : ctx.outputs) {
    if (!seen.insert(p.string()).second || !fs::exists(p)) continue;
    outputs.push_back({{"path", p.string()}, {"sha256", io::sha256_file(p)}});
  }
  m["outputs"] = outputs;
  std::ofstream out(ctx.out_dir / "manifest.json", std::ios::binary);
  out << m.dump(2) << "\n";
}

// ---------------------------------------------------------------- verbs

struct AggregateArgs {
  std::string grid, rasters;
  bool with_sd = false;
};

void verb_aggregate(RunContext& ctx, const AggregateArgs& a) {
  const GridSpec grid = io::read_grid(a.grid);
  ctx.input(a.grid);
  ctx.input(a.rasters);
  const io::CsvTable list = io::read_csv(a.rasters);
  const auto cvar = list.column("variable"), cmonth = list.column("month_index"), cpath = list.column("path");
  const fs::path base = fs::path(a.rasters).parent_path();
  const std::vector<int> cells = grid.active_cells();

  std::vector<std::string> static_names;
  std::vector<std::vector<double>> static_values;
  std::map<std::string, std::map<int, std::vector<double>>> dynamic;  // variable -> month -> values
  std::ofstream stats(ctx.output("cell_stats.csv"), std::ios::binary);
  stats << "variable,month_index,cell_id,mean,sd,pixel_count\n";
  for (std::size_t i = 0; i < list.rows.size(); ++i) {
    const auto& row = list.rows[i];
    const fs::path path = base / row[cpath];
    ctx.input(path);
    const FineRaster raster = io::read_raster(path);
    const CellStats s = aggregate_mean_sd(raster, grid);
    std::vector<double> mean(cells.size());
    for (std::size_t k = 0; k < s.cell_ids.size(); ++k) {
      const auto pos = std::lower_bound(cells.begin(), cells.end(), s.cell_ids[k]) - cells.begin();
      mean[static_cast<std::size_t>(pos)] = s.mean[k];
      stats << row[cvar] << "," << row[cmonth] << "," << s.cell_ids[k] << "," << format_double(s.mean[k]) << ","
            << format_double(s.sd[k]) << "," << s.pixel_count[k] << "\n";
    }
    if (row[cmonth].empty() || row[cmonth] == "NA") {
      static_names.push_back(row[cvar]);
      static_values.push_back(mean);
      if (a.with_sd) {
        static_names.push_back(row[cvar] + "_sd");
        std::vector<double> sd(cells.size());
        for (std::size_t k = 0; k < s.cell_ids.size(); ++k)
          sd[static_cast<std::size_t>(std::lower_bound(cells.begin(), cells.end(), s.cell_ids[k]) - cells.begin())] = s.sd[k];
        static_values.push_back(sd);
      }
    } else {
      const int m = static_cast<int>(io::parse_long(row[cmonth], list.source));
      if (!dynamic[row[cvar]].emplace(m, mean).second)
        throw ConfigError(list.source + ": duplicate raster for " + row[cvar] + " month " + row[cmonth]);
    }
    if (!s.missing_cells.empty())
      ctx.info("aggregate", path.string() + ": " + std::to_string(s.missing_cells.size()) + " cells without data");
  }
  stats.close();
  {
    std::ofstream out(ctx.output("static.csv"), std::ios::binary);
    out << "cell_id";
    for (const auto& n : static_names) out << "," << n;
    out << "\n";
    for (std::size_t c = 0; c < cells.size(); ++c) {
      out << cells[c];
      for (const auto& v : static_values) out << "," << format_double(v[c]);
      out << "\n";
    }
  }
  if (!dynamic.empty()) {
    std::set<int> months;
    for (const auto& [name, by_month] : dynamic)
      for (const auto& [m, v] : by_month) months.insert(m);
    const int first = *months.begin(), last = *months.rbegin();
    for (const auto& [name, by_month] : dynamic)
      if (static_cast<int>(by_month.size()) != last - first + 1)
        throw ConfigError("aggregate: variable '" + name + "' does not cover months " + std::to_string(first) + "-" +
                          std::to_string(last));
    std::ofstream out(ctx.output("dynamic.csv"), std::ios::binary);
    out << "cell_id,month_index";
    for (const auto& [name, by_month] : dynamic) out << "," << name;
    out << "\n";
    for (std::size_t c = 0; c < cells.size(); ++c)
      for (int m = first; m <= last; ++m) {
        out << cells[c] << "," << m;
        for (const auto& [name, by_month] : dynamic) out << "," << format_double(by_month.at(m)[c]);
        out << "\n";
      }
  }
  ctx.info("aggregate", std::to_string(list.rows.size()) + " rasters over " + std::to_string(cells.size()) + " cells");
}

struct AnomalyArgs {
  std::string covariates;
  std::vector<std::string> add_dynamic;
  std::string anomaly, sqrt_vars, months;
  bool no_time = false, no_standardize = false;
};

CovariateTable load_covariates_loose(RunContext& ctx, const AnomalyArgs& a) {
  const fs::path dir = a.covariates;
  ctx.input(dir);
  if (fs::exists(dir / "dynamic.csv")) return io::read_covariates(dir);
  if (a.months.empty()) throw ConfigError("anomalies: no dynamic.csv in '" + dir.string() + "'; pass --months");
  const auto months = parse_months(a.months);
  const io::CsvTable st = io::read_csv(dir / "static.csv");
  const auto cc = st.column("cell_id");
  std::vector<int> cells;
  for (const auto& r : st.rows) cells.push_back(static_cast<int>(io::parse_long(r[cc], st.source)));
  CovariateTable t(cells, months.front(), months.back());
  for (std::size_t j = 0; j < st.header.size(); ++j) {
    if (j == cc) continue;
    std::vector<double> v;
    for (const auto& r : st.rows) v.push_back(io::parse_double(r[j], st.source));
    t.add_static(st.header[j], v);
  }
  return t;
}

void verb_anomalies(RunContext& ctx, const AnomalyArgs& a) {
  CovariateTable in = load_covariates_loose(ctx, a);
  // rebuild so that transformed columns keep their names
  CovariateTable out(in.cell_ids(), in.first_month(), in.last_month());
  for (std::size_t j = 0; j < in.static_names().size(); ++j) {
    const Eigen::VectorXd col = in.static_values().col(static_cast<Eigen::Index>(j));
    out.add_static(in.static_names()[j], std::vector<double>(col.data(), col.data() + col.size()));
  }
  std::map<std::string, Eigen::MatrixXd> dyn;
  std::vector<std::string> order;
  auto as_matrix = [&](const CovariateTable& t, std::size_t j) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(t.cell_ids().size()), t.month_count());
    for (std::size_t c = 0; c < t.cell_ids().size(); ++c)
      for (int k = 0; k < t.month_count(); ++k)
        m(static_cast<Eigen::Index>(c), k) =
            t.dynamic_values()(t.dynamic_row(t.cell_ids()[c], t.first_month() + k), static_cast<Eigen::Index>(j));
    return m;
  };
  for (std::size_t j = 0; j < in.dynamic_names().size(); ++j) {
    if (in.dynamic_names()[j] == CovariateTable::kTimeName) continue;
    order.push_back(in.dynamic_names()[j]);
    dyn[order.back()] = as_matrix(in, j);
  }
  for (const auto& extra : a.add_dynamic) {
    ctx.input(extra);
    const io::CsvTable t = io::read_csv(extra);
    const auto cc = t.column("cell_id"), cm = t.column("month_index");
    for (std::size_t j = 0; j < t.header.size(); ++j) {
      if (j == cc || j == cm) continue;
      Eigen::MatrixXd m = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(in.cell_ids().size()), in.month_count(),
                                                    std::numeric_limits<double>::quiet_NaN());
      for (const auto& r : t.rows) {
        const int id = static_cast<int>(io::parse_long(r[cc], t.source));
        const int month = static_cast<int>(io::parse_long(r[cm], t.source));
        if (!in.has_cell(id) || month < in.first_month() || month > in.last_month()) continue;
        m(in.cell_index(id), month - in.first_month()) = io::parse_double(r[j], t.source);
      }
      if (!m.allFinite())
        throw ConfigError(extra + ": column '" + t.header[j] + "' does not cover every cell and month");
      if (dyn.count(t.header[j])) throw ConfigError("anomalies: duplicate dynamic column '" + t.header[j] + "'");
      order.push_back(t.header[j]);
      dyn[t.header[j]] = m;
    }
  }
  const auto sqrt_vars = split_list(a.sqrt_vars, ',');
  const auto anomaly_vars = split_list(a.anomaly, ',');
  for (const auto& v : sqrt_vars) {
    if (!dyn.count(v)) throw ConfigError("anomalies: unknown dynamic variable '" + v + "' in --sqrt");
    dyn[v] = sqrt_transform(dyn[v]);
  }
  json means;
  for (const auto& v : anomaly_vars) {
    if (!dyn.count(v)) throw ConfigError("anomalies: unknown dynamic variable '" + v + "' in --anomaly");
    AnomalyResult r = monthly_anomalies(dyn[v], in.first_month());
    dyn[v] = r.anomalies;
    means[v] = std::vector<double>(r.monthly_means.begin(), r.monthly_means.end());
  }
  if (!a.no_time) out.add_time_covariate();
  for (const auto& name : order) out.add_dynamic(name, dyn[name]);
  if (!a.no_standardize) out.standardize();
  out.validate();
  io::write_covariates(ctx.out_dir, out);
  ctx.outputs.push_back(ctx.out_dir / "static.csv");
  ctx.outputs.push_back(ctx.out_dir / "dynamic.csv");
  if (!out.standardization().empty()) ctx.outputs.push_back(ctx.out_dir / "standardization.csv");
  if (!anomaly_vars.empty()) {
    std::ofstream f(ctx.output("monthly_means.csv"), std::ios::binary);
    f << "variable,calendar_month,mean\n";
    for (const auto& v : anomaly_vars)
      for (int m = 0; m < 12; ++m) f << v << "," << m + 1 << "," << format_double(means[v][static_cast<std::size_t>(m)].get<double>()) << "\n";
  }
  ctx.info("anomalies", std::to_string(order.size()) + " dynamic and " + std::to_string(out.static_names().size()) +
                            " static covariates written");
}

struct VariogramArgs {
  std::string stations, variable = "PRCP", empirical, kind = "separable", init;
  int bins = 10, max_lag = 12;
  bool sqrt = false;
};

StationData load_stations(RunContext& ctx, const std::string& path, const std::string& variable, bool take_sqrt) {
  ctx.input(path);
  StationData d = io::read_stations(path, variable);
  if (take_sqrt)
    for (auto& s : d.stations)
      for (double& v : s.values) {
        if (std::isnan(v)) continue;
        if (v < 0.0) throw DomainError("station '" + s.station_id + "': negative value under --sqrt");
        v = std::sqrt(v);
      }
  return d;
}

void verb_variogram_estimate(RunContext& ctx, const VariogramArgs& a) {
  const StationData d = load_stations(ctx, a.stations, a.variable, a.sqrt);
  const auto bins = empirical_variogram(d, default_space_edges(d, a.bins), a.max_lag);
  io::write_empirical_variogram(ctx.output("empirical_variogram.csv"), bins);
  ctx.info("variogram", std::to_string(bins.size()) + " bins");
}

VariogramModel default_initial_model(const std::vector<VariogramBin>& bins, VariogramKind kind) {
  double gmax = 0.0, hmax = 0.0;
  for (const auto& b : bins) {
    gmax = std::max(gmax, b.gamma);
    hmax = std::max(hmax, b.h);
  }
  if (!(gmax > 0.0)) throw ConfigError("variogram fit: empirical variogram is identically zero");
  const double hr = hmax > 0.0 ? hmax / 3.0 : 1.0;
  if (kind == VariogramKind::separable)
    return VariogramModel::separable({0.9, hr, 0.1}, {0.9, 2.0, 0.1}, gmax);
  const double half = 0.5 * gmax;
  return VariogramModel::product_sum({0.9 * half, hr, 0.1 * half}, {0.9 * half, 2.0, 0.1 * half}, 0.5 / half);
}

void verb_variogram_fit(RunContext& ctx, const VariogramArgs& a) {
  ctx.input(a.empirical);
  const auto bins = io::read_empirical_variogram(a.empirical);
  const VariogramKind kind = variogram_kind_from_string(a.kind);
  VariogramModel init = default_initial_model(bins, kind);
  if (!a.init.empty()) {
    ctx.input(a.init);
    init = io::read_variogram_model(a.init);
  }
  VariogramFitOptions opt;
  opt.seed = ctx.seed;
  const VariogramFit f = fit_variogram(bins, kind, init, opt);
  io::write_variogram_model(ctx.output("variogram_model.txt"), f.model, a.variable, f.objective);
  ctx.info("variogram", "fit objective " + format_double(f.objective));
}

struct KrigeArgs {
  std::string stations, variable = "PRCP", model, targets, grid, months;
  int window = 6;
  bool sqrt = false, back_transform = false;
};

void verb_krige(RunContext& ctx, const KrigeArgs& a) {
  const StationData d = load_stations(ctx, a.stations, a.variable, a.sqrt);
  ctx.input(a.model);
  const VariogramModel model = io::read_variogram_model(a.model);
  std::vector<std::string> ids;
  std::vector<Point2> pts;
  if (!a.grid.empty() == !a.targets.empty()) throw ConfigError("krige: pass exactly one of --targets and --grid");
  if (!a.grid.empty()) {
    ctx.input(a.grid);
    const GridSpec g = io::read_grid(a.grid);
    for (int id : g.active_cells()) {
      ids.push_back(std::to_string(id));
      pts.push_back(g.cell_center(id));
    }
  } else {
    ctx.input(a.targets);
    const io::CsvTable t = io::read_csv(a.targets);
    const auto ci = t.column("target_id"), cx = t.column("x_km"), cy = t.column("y_km");
    for (const auto& r : t.rows) {
      ids.push_back(r[ci]);
      pts.push_back({io::parse_double(r[cx], t.source), io::parse_double(r[cy], t.source)});
    }
  }
  std::vector<int> months;
  if (a.months.empty()) {
    for (int m = 0; m < d.month_count(); ++m) months.push_back(d.first_month + m);
  } else {
    months = parse_months(a.months);
  }
  KrigingOptions opt;
  opt.time_window = a.window;
  opt.threads = ctx.threads;
  KrigingResult r = krige(model, d, pts, months, opt);
  if (a.back_transform) square_back_transform(r);
  {
    std::ofstream out(ctx.output("kriged.csv"), std::ios::binary);
    out << "target_id,month_index,prediction,variance\n";
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t k = 0; k < months.size(); ++k)
        out << ids[i] << "," << months[k] << "," << format_double(r.prediction(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)))
            << "," << format_double(r.variance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k))) << "\n";
  }
  if (!a.grid.empty()) {
    std::ofstream out(ctx.output("kriged_covariate.csv"), std::ios::binary);
    out << "cell_id,month_index," << a.variable << "\n";
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t k = 0; k < months.size(); ++k)
        out << ids[i] << "," << months[k] << ","
            << format_double(r.prediction(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k))) << "\n";
  }
  ctx.info("krige", std::to_string(ids.size()) + " targets x " + std::to_string(months.size()) + " months");
}

struct SubsampleArgs {
  std::string counts;
  double exposure = 4.0;
};

void verb_subsample(RunContext& ctx, const SubsampleArgs& a) {
  ctx.input(a.counts);
  const auto records = io::read_counts(a.counts, a.exposure);
  const auto sub = subsample_zero_months(records, ctx.seed);
  io::write_counts(ctx.output("counts_subsampled.csv"), sub, true);
  long total = 0;
  for (const auto& r : records) total += r.count;
  std::ostringstream msg;
  msg << records.size() << " -> " << sub.size() << " records, total count " << total;
  ctx.info("subsample", msg.str());
}

struct SimulateArgs {
  std::string config;
};

void write_fine_rasters(RunContext& ctx, const SimDataset& ds, int factor) {
  const fs::path dir = ctx.out_dir / "rasters";
  io::ensure_directory(dir);
  std::ofstream list(ctx.output("rasters.csv"), std::ios::binary);
  list << "variable,month_index,path\n";
  const GridSpec& g = ds.grid;
  auto write = [&](const std::string& name, const std::string& file, auto value_of) {
    FineRaster r;
    r.origin_x = g.origin_x;
    r.origin_y = g.origin_y;
    r.resolution = g.cell_size / factor;
    r.values.resize(g.n_rows * factor, g.n_cols * factor);
    for (int row = 0; row < g.n_rows * factor; ++row)
      for (int col = 0; col < g.n_cols * factor; ++col) {
        const int id = (row / factor) * g.n_cols + col / factor;
        r.values(row, col) = g.is_active(id) ? value_of(id) : r.missing_code;
      }
    io::write_ascii_raster(dir / file, r);
    ctx.outputs.push_back(dir / file);
    (void)name;
  };
  const CovariateTable& t = ds.covariates;
  for (std::size_t j = 0; j < t.static_names().size(); ++j) {
    const std::string file = t.static_names()[j] + ".asc";
    write(t.static_names()[j], file, [&](int id) { return t.static_value(id, static_cast<int>(j)); });
    list << t.static_names()[j] << ",," << "rasters/" << file << "\n";
  }
  for (std::size_t j = 0; j < t.dynamic_names().size(); ++j) {
    if (t.dynamic_names()[j] == CovariateTable::kTimeName) continue;
    for (int m = t.first_month(); m <= t.last_month(); ++m) {
      std::ostringstream file;
      file << t.dynamic_names()[j] << "_" << std::setw(4) << std::setfill('0') << m << ".asc";
      write(t.dynamic_names()[j], file.str(), [&](int id) { return t.dynamic_value(id, m, static_cast<int>(j)); });
      list << t.dynamic_names()[j] << "," << m << ",rasters/" << file.str() << "\n";
    }
  }
}

void verb_simulate(RunContext& ctx) {
  if (ctx.config_path.empty()) throw ConfigError("simulate: --config <simulation config> is required");
  ctx.input(ctx.config_path);
  SimConfig cfg = read_sim_config(ctx.config_path);
  if (ctx.seed_given) {
    cfg.seed = ctx.seed;
    cfg.seed_set = true;
  }
  const io::KeyValues kv = io::read_key_values(ctx.config_path);
  double zero_fraction = 0.0;
  if (kv.count("zero_fraction")) zero_fraction = to_double(kv.at("zero_fraction"), "zero_fraction");
  int fine_factor = kv.count("fine_factor") ? static_cast<int>(to_long(kv.at("fine_factor"), "fine_factor")) : 0;
  if (fine_factor < 0) throw ConfigError("key 'fine_factor': must be >= 0");
  SimDataset ds = simulate_dataset(cfg);
  if (zero_fraction > 0.0) {
    const double shift = intercept_shift_for_zero_fraction(ds.truth.eta, cfg.exposure, zero_fraction);
    cfg.beta[0] += shift;
    ds = simulate_dataset(cfg);
  }
  io::write_grid(ctx.output("grid.asc"), ds.grid);
  io::write_counts(ctx.output("counts.csv"), ds.records, false);
  io::write_covariates(ctx.out_dir / "covariates", ds.covariates);
  ctx.outputs.push_back(ctx.out_dir / "covariates" / "static.csv");
  ctx.outputs.push_back(ctx.out_dir / "covariates" / "dynamic.csv");
  long total = 0, zeros = 0;
  for (const auto& r : ds.records) {
    total += r.count;
    zeros += r.count == 0;
  }
  json truth;
  truth["variant"] = to_string(cfg.variant);
  truth["seed"] = cfg.seed;
  json beta;
  for (std::size_t i = 0; i < ds.truth.beta.size(); ++i) beta[ds.truth.beta_names[i]] = ds.truth.beta[i];
  truth["beta"] = beta;
  truth["seasonal"] = ds.truth.seasonal;
  truth["range"] = cfg.hyper.range;
  truth["sd"] = cfg.hyper.sd;
  truth["rho"] = cfg.hyper.rho;
  truth["records"] = ds.records.size();
  truth["total_count"] = total;
  truth["zero_fraction"] = static_cast<double>(zeros) / static_cast<double>(ds.records.size());
  {
    std::ofstream f(ctx.output("truth.json"), std::ios::binary);
    f << truth.dump(2) << "\n";
  }
  if (ds.truth.spatial.cols() > 0) {
    std::ofstream f(ctx.output("truth_spatial.csv"), std::ios::binary);
    f << "cell_id,block,value\n";
    const auto cells = ds.grid.active_cells();
    for (std::size_t c = 0; c < cells.size(); ++c)
      for (Eigen::Index b = 0; b < ds.truth.spatial.cols(); ++b)
        f << cells[c] << "," << b << "," << format_double(ds.truth.spatial(static_cast<Eigen::Index>(c), b)) << "\n";
  }
  if (ds.mesh) io::write_mesh(ctx.output("mesh_vertices.csv"), ctx.output("mesh_triangles.csv"), *ds.mesh);
  if (fine_factor > 0) write_fine_rasters(ctx, ds, fine_factor);
  std::ostringstream msg;
  msg << ds.records.size() << " records, total count " << total << ", zero fraction "
      << static_cast<double>(zeros) / static_cast<double>(ds.records.size());
  ctx.info("simulate", msg.str());
}

struct FitArgs {
  std::string model_config, counts, covariates, grid, variant, fit_dir, months, field = "mean";
  int budget = -1;
  int reference_month = 6;
};

struct Assembled {
  ModelConfig cfg;
  GridSpec grid;
  CovariateTable covariates;
  std::vector<CountRecord> records;
  std::shared_ptr<const Mesh> mesh;
  std::optional<LatentModel> model;
};

Assembled assemble(RunContext& ctx, const FitArgs& a, const fs::path& fallback_config) {
  Assembled s;
  fs::path cfg_path = a.model_config;
  if (cfg_path.empty() && !fallback_config.empty() && fs::exists(fallback_config)) cfg_path = fallback_config;
  if (!cfg_path.empty()) {
    ctx.input(cfg_path);
    s.cfg = read_model_config(cfg_path);
  }
  if (!a.variant.empty()) s.cfg.variant = variant_from_string(a.variant);
  if (ctx.seed_given) s.cfg.seed = ctx.seed;
  if (a.budget >= 0) {
    if (a.budget < 1) throw ConfigError("--budget must be >= 1");
    s.cfg.budget = a.budget;
  }
  for (const auto* p : {&a.counts, &a.covariates, &a.grid})
    if (p->empty()) throw ConfigError("--counts, --covariates and --grid are required");
  s.grid = io::read_grid(a.grid);
  ctx.input(a.grid);
  s.covariates = io::read_covariates(a.covariates);
  ctx.input(a.covariates);
  s.records = io::read_counts(a.counts, s.cfg.default_exposure);
  ctx.input(a.counts);
  if (has_spatial(s.cfg.variant)) s.mesh = std::make_shared<const Mesh>(build_mesh(s.grid, s.cfg.mesh));
  s.model.emplace(LatentModel::build(s.records, s.covariates, s.grid, s.mesh, s.cfg.variant, s.cfg.priors));
  return s;
}

std::string model_config_text(const ModelConfig& c) {
  std::ostringstream o;
  o << "variant = " << to_string(c.variant) << "\n"
    << "seed = " << c.seed << "\n"
    << "budget = " << c.budget << "\n"
    << "restarts = " << c.restarts << "\n"
    << "default_exposure = " << format_double(c.default_exposure) << "\n"
    << "fixed_effect_precision = " << format_double(c.priors.fixed_effect_precision) << "\n"
    << "range0 = " << format_double(c.priors.range0) << "\n"
    << "range_prob = " << format_double(c.priors.range_prob) << "\n"
    << "sd0 = " << format_double(c.priors.sd0) << "\n"
    << "sd_prob = " << format_double(c.priors.sd_prob) << "\n"
    << "seasonal_var0 = " << format_double(c.priors.seasonal_var0) << "\n"
    << "seasonal_prob = " << format_double(c.priors.seasonal_prob) << "\n"
    << "rho0 = " << format_double(c.priors.rho0) << "\n"
    << "rho_prob = " << format_double(c.priors.rho_prob) << "\n"
    << "init_range = " << format_double(c.init.range) << "\n"
    << "init_sd = " << format_double(c.init.sd) << "\n"
    << "init_rho = " << format_double(c.init.rho) << "\n"
    << "init_seasonal_precision = " << format_double(c.init.seasonal_precision) << "\n"
    << "mesh_max_edge_inner = " << format_double(c.mesh.max_edge_inner) << "\n"
    << "mesh_max_edge_outer = " << format_double(c.mesh.max_edge_outer) << "\n"
    << "mesh_margin = " << format_double(c.mesh.margin) << "\n"
    << "newton_max_iterations = " << c.newton.max_iterations << "\n"
    << "newton_gradient_tolerance = " << format_double(c.newton.gradient_tolerance) << "\n"
    << "newton_step_tolerance = " << format_double(c.newton.step_tolerance) << "\n";
  return o.str();
}

void write_numerical_diagnostics(const RunContext& ctx, const NumericalError& e) {
  io::ensure_directory(ctx.out_dir);
  std::ofstream f(ctx.out_dir / "diagnostics.txt", std::ios::binary);
  f << e.what() << "\n" << e.diagnostics() << "\n";
}

void verb_fit(RunContext& ctx, const FitArgs& a) {
  Assembled s = assemble(ctx, a, {});
  const LatentModel& model = *s.model;
  FitOptions opt;
  opt.budget = s.cfg.budget;
  opt.restarts = s.cfg.restarts;
  opt.newton = s.cfg.newton;
  ctx.info("fit", "variant " + to_string(s.cfg.variant) + ", " + std::to_string(model.record_count()) +
                      " records, latent dimension " + std::to_string(model.layout().dim()));
  const Eigen::VectorXd theta0 = model.theta_layout().encode(s.cfg.init);
  const FitResult fit = firelgcp::fit(model, theta0, opt);
  {
    std::ofstream f(ctx.output("model_config.txt"), std::ios::binary);
    f << model_config_text(s.cfg);
  }
  write_fit_result(ctx.out_dir, fit, model, s.cfg);
  for (const char* n : {"hyperparameters.csv", "fixed_effects.csv", "latent.csv", "seasonal_odds_ratio.csv",
                        "run_metadata.json"})
    ctx.outputs.push_back(ctx.out_dir / n);
  if (s.mesh) io::write_mesh(ctx.output("mesh_vertices.csv"), ctx.output("mesh_triangles.csv"), *s.mesh);
  ctx.info("fit", "log marginal " + format_double(fit.log_marginal) + ", " +
                      std::to_string(fit.diagnostics.outer_evaluations) + " evaluations, " + fit.diagnostics.message);
}

Eigen::VectorXd read_theta(const fs::path& fit_dir, const LatentModel& model) {
  const io::CsvTable t = io::read_csv(fit_dir / "hyperparameters.csv");
  const auto cn = t.column("parameter"), ct = t.column("theta");
  const auto names = model.theta_layout().names();
  if (t.rows.size() != names.size())
    throw ConfigError(t.source + ": hyperparameters do not match the model variant");
  Eigen::VectorXd theta(static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (t.rows[i][cn] != names[i]) throw ConfigError(t.source + ": expected parameter '" + names[i] + "'");
    theta[static_cast<Eigen::Index>(i)] = io::parse_double(t.rows[i][ct], t.source);
  }
  return theta;
}

void verb_predict(RunContext& ctx, const FitArgs& a) {
  if (a.fit_dir.empty()) throw ConfigError("predict: --fit <fit output directory> is required");
  const fs::path fit_dir = a.fit_dir;
  FitArgs args = a;
  if (args.variant.empty()) {
    std::ifstream meta(fit_dir / "run_metadata.json");
    if (!meta) throw ConfigError("predict: cannot read run_metadata.json in '" + fit_dir.string() + "'");
    args.variant = json::parse(meta).at("variant").get<std::string>();
  }
  Assembled s = assemble(ctx, args, fit_dir / "model_config.txt");
  ctx.input(fit_dir / "hyperparameters.csv");
  const LatentModel& model = *s.model;
  const Eigen::VectorXd theta = read_theta(fit_dir, model);
  const FitResult fit = summarize_at(model, theta, s.cfg.newton);
  std::vector<int> months;
  if (a.months.empty()) {
    for (int m = s.covariates.first_month(); m <= s.covariates.last_month(); ++m) months.push_back(m);
  } else {
    months = parse_months(a.months);
  }
  std::vector<std::pair<int, int>> targets;
  for (int id : s.covariates.cell_ids())
    for (int m : months) targets.emplace_back(id, m);
  const IntensityPrediction p = predict_intensity(fit, model, targets);
  std::ofstream out(ctx.output("predictions.csv"), std::ios::binary);
  out << "cell_id,month_index,mean,sd\n";
  for (std::size_t i = 0; i < targets.size(); ++i)
    out << targets[i].first << "," << targets[i].second << "," << format_double(p.mean[static_cast<Eigen::Index>(i)])
        << "," << format_double(p.sd[static_cast<Eigen::Index>(i)]) << "\n";
  ctx.info("predict", std::to_string(targets.size()) + " cell-months");
}

struct RenderArgs {
  std::string predictions, grid, months, field = "mean", prefix = "log_intensity";
  int start_year = 1995;
};

void verb_render(RunContext& ctx, const RenderArgs& a) {
  ctx.input(a.predictions);
  ctx.input(a.grid);
  const GridSpec grid = io::read_grid(a.grid);
  const io::CsvTable t = io::read_csv(a.predictions);
  const auto cc = t.column("cell_id"), cm = t.column("month_index"), cv = t.column(a.field);
  std::vector<int> cells, months;
  std::vector<double> values;
  for (const auto& r : t.rows) {
    cells.push_back(static_cast<int>(io::parse_long(r[cc], t.source)));
    months.push_back(static_cast<int>(io::parse_long(r[cm], t.source)));
    values.push_back(io::parse_double(r[cv], t.source));
  }
  std::vector<int> requested;
  if (a.months.empty()) {
    const std::set<int> all(months.begin(), months.end());
    requested.assign(all.begin(), all.end());
  } else {
    requested = parse_months(a.months);
  }
  const auto files = render_rasters(cells, months, values, grid, requested, a.start_year, ctx.out_dir,
                                    a.prefix + "_" + a.field);
  for (const auto& f : files) ctx.outputs.push_back(f.path);
  ctx.info("render", std::to_string(files.size()) + " rasters");
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string(flag) + " is required");
}

void check_required(const std::string& verb, const AggregateArgs& ag, const AnomalyArgs& an, const VariogramArgs& va,
                    bool estimate, const KrigeArgs& kr, const SubsampleArgs& sb, const FitArgs& fa, const FitArgs& pr,
                    const RenderArgs& re) {
  if (verb == "aggregate") {
    require(ag.grid, "--grid");
    require(ag.rasters, "--rasters");
  } else if (verb == "anomalies") {
    require(an.covariates, "--covariates");
  } else if (verb == "variogram") {
    require(estimate ? va.stations : va.empirical, estimate ? "--stations" : "--empirical");
  } else if (verb == "krige") {
    require(kr.stations, "--stations");
    require(kr.model, "--model");
  } else if (verb == "subsample") {
    require(sb.counts, "--counts");
  } else if (verb == "fit" || verb == "predict") {
    const FitArgs& f = verb == "fit" ? fa : pr;
    if (verb == "predict") require(f.fit_dir, "--fit");
    require(f.counts, "--counts");
    require(f.covariates, "--covariates");
    require(f.grid, "--grid");
  } else if (verb == "render") {
    require(re.predictions, "--predictions");
    require(re.grid, "--grid");
  }
}

void apply_config_defaults(CLI::App* sub, const io::KeyValues& kv, const std::string& source) {
  for (const auto& [key, value] : kv) {
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (!opt) throw ConfigError(source + ": unknown key '" + key + "' for this verb");
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

}  // namespace

// ---------------------------------------------------------------- configs

ModelConfig model_config_from_keys(const io::KeyValues& kv, const std::string& source) {
  io::reject_unknown_keys(
      kv,
      {"variant", "seed", "budget", "restarts", "default_exposure", "fixed_effect_precision", "range0", "range_prob",
       "sd0", "sd_prob", "seasonal_var0", "seasonal_prob", "rho0", "rho_prob", "init_range", "init_sd", "init_rho",
       "init_seasonal_precision", "mesh_max_edge_inner", "mesh_max_edge_outer", "mesh_margin",
       "newton_max_iterations", "newton_gradient_tolerance", "newton_step_tolerance"},
      source);
  ModelConfig c;
  auto num = [&](const char* key, double& target) {
    if (const auto it = kv.find(key); it != kv.end()) target = to_double(it->second, key);
  };
  if (const auto it = kv.find("variant"); it != kv.end()) c.variant = variant_from_string(it->second);
  if (const auto it = kv.find("seed"); it != kv.end()) c.seed = static_cast<std::uint64_t>(to_long(it->second, "seed"));
  if (const auto it = kv.find("budget"); it != kv.end()) c.budget = static_cast<int>(to_long(it->second, "budget"));
  if (const auto it = kv.find("restarts"); it != kv.end()) c.restarts = static_cast<int>(to_long(it->second, "restarts"));
  if (const auto it = kv.find("newton_max_iterations"); it != kv.end())
    c.newton.max_iterations = static_cast<int>(to_long(it->second, "newton_max_iterations"));
  num("default_exposure", c.default_exposure);
  num("fixed_effect_precision", c.priors.fixed_effect_precision);
  num("range0", c.priors.range0);
  num("range_prob", c.priors.range_prob);
  num("sd0", c.priors.sd0);
  num("sd_prob", c.priors.sd_prob);
  num("seasonal_var0", c.priors.seasonal_var0);
  num("seasonal_prob", c.priors.seasonal_prob);
  num("rho0", c.priors.rho0);
  num("rho_prob", c.priors.rho_prob);
  num("init_range", c.init.range);
  num("init_sd", c.init.sd);
  num("init_rho", c.init.rho);
  num("init_seasonal_precision", c.init.seasonal_precision);
  num("mesh_max_edge_inner", c.mesh.max_edge_inner);
  num("mesh_max_edge_outer", c.mesh.max_edge_outer);
  num("mesh_margin", c.mesh.margin);
  num("newton_gradient_tolerance", c.newton.gradient_tolerance);
  num("newton_step_tolerance", c.newton.step_tolerance);

  auto positive = [&](double v, const char* key) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(source + ": key '" + std::string(key) + "' must be > 0");
  };
  if (c.budget < 1) throw ConfigError(source + ": key 'budget' must be >= 1");
  if (c.restarts < 0) throw ConfigError(source + ": key 'restarts' must be >= 0");
  if (c.newton.max_iterations < 1) throw ConfigError(source + ": key 'newton_max_iterations' must be >= 1");
  positive(c.default_exposure, "default_exposure");
  positive(c.init.range, "init_range");
  positive(c.init.sd, "init_sd");
  positive(c.init.seasonal_precision, "init_seasonal_precision");
  if (!(std::fabs(c.init.rho) < 1.0)) throw ConfigError(source + ": key 'init_rho' must satisfy |rho| < 1");
  positive(c.mesh.max_edge_inner, "mesh_max_edge_inner");
  positive(c.mesh.max_edge_outer, "mesh_max_edge_outer");
  if (!(c.mesh.margin >= 0.0)) throw ConfigError(source + ": key 'mesh_margin' must be >= 0");
  positive(c.newton.gradient_tolerance, "newton_gradient_tolerance");
  positive(c.newton.step_tolerance, "newton_step_tolerance");
  try {
    c.priors.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return c;
}

ModelConfig read_model_config(const fs::path& path) {
  return model_config_from_keys(io::read_key_values(path), path.string());
}

SimConfig read_sim_config(const fs::path& path) {
  const io::KeyValues kv = io::read_key_values(path);
  const std::string src = path.string();
  io::reject_unknown_keys(kv,
                          {"n_rows", "n_cols", "cell_size", "origin_x", "origin_y", "years", "beta", "include_time",
                           "seasonal", "variant", "range", "sd", "rho", "seed", "covariates", "mesh_max_edge_inner",
                           "mesh_max_edge_outer", "mesh_margin", "exposure", "zero_fraction", "fine_factor"},
                          src);
  SimConfig c;
  auto num = [&](const char* key, double& target) {
    if (const auto it = kv.find(key); it != kv.end()) target = to_double(it->second, key);
  };
  auto integer = [&](const char* key, int& target) {
    if (const auto it = kv.find(key); it != kv.end()) target = static_cast<int>(to_long(it->second, key));
  };
  integer("n_rows", c.n_rows);
  integer("n_cols", c.n_cols);
  integer("years", c.years);
  num("cell_size", c.cell_size);
  num("origin_x", c.origin.x);
  num("origin_y", c.origin.y);
  num("range", c.hyper.range);
  num("sd", c.hyper.sd);
  num("rho", c.hyper.rho);
  num("exposure", c.exposure);
  num("mesh_max_edge_inner", c.mesh.max_edge_inner);
  num("mesh_max_edge_outer", c.mesh.max_edge_outer);
  num("mesh_margin", c.mesh.margin);
  if (const auto it = kv.find("beta"); it != kv.end()) c.beta = to_doubles(it->second, "beta");
  if (const auto it = kv.find("include_time"); it != kv.end()) c.include_time = to_bool(it->second, "include_time");
  if (const auto it = kv.find("variant"); it != kv.end()) c.variant = variant_from_string(it->second);
  if (const auto it = kv.find("seed"); it != kv.end()) {
    c.seed = static_cast<std::uint64_t>(to_long(it->second, "seed"));
    c.seed_set = true;
  }
  if (const auto it = kv.find("seasonal"); it != kv.end()) {
    const std::string& v = it->second;
    if (v.rfind("two_peak", 0) == 0) {
      // two_peak:<month>:<month>:<amplitude>
      const auto parts = split_list(v, ':');
      if (parts.size() != 4) throw ConfigError(src + ": key 'seasonal': expected two_peak:<m1>:<m2>:<amplitude>");
      c.seasonal = two_peak_seasonal(static_cast<int>(to_long(parts[1], "seasonal")),
                                     static_cast<int>(to_long(parts[2], "seasonal")), to_double(parts[3], "seasonal"));
    } else {
      c.seasonal = to_doubles(v, "seasonal");
    }
  }
  if (const auto it = kv.find("covariates"); it != kv.end()) {
    // name:static|dynamic:white|smooth|constant[:parameter]; ...
    for (const auto& item : split_list(it->second, ';')) {
      const auto parts = split_list(item, ':');
      if (parts.size() < 3 || parts.size() > 4)
        throw ConfigError(src + ": key 'covariates': malformed entry '" + item + "'");
      CovariateGenerator g;
      g.name = parts[0];
      if (parts[1] == "static")
        g.dynamic = false;
      else if (parts[1] == "dynamic")
        g.dynamic = true;
      else
        throw ConfigError(src + ": key 'covariates': expected static or dynamic in '" + item + "'");
      if (parts[2] == "white") {
        g.kind = CovariateKind::white_noise;
      } else if (parts[2] == "smooth") {
        g.kind = CovariateKind::smooth_field;
        if (parts.size() == 4) g.range = to_double(parts[3], "covariates");
      } else if (parts[2] == "constant") {
        g.kind = CovariateKind::constant;
        if (parts.size() == 4) g.value = to_double(parts[3], "covariates");
      } else {
        throw ConfigError(src + ": key 'covariates': unknown generator '" + parts[2] + "'");
      }
      c.covariates.push_back(g);
    }
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(src + ": " + e.what());
  }
  return c;
}

// ---------------------------------------------------------------- outputs

void write_fit_result(const fs::path& dir, const FitResult& fit, const LatentModel& model, const ModelConfig& config) {
  io::ensure_directory(dir);
  {
    std::ofstream f(dir / "hyperparameters.csv", std::ios::binary);
    f << "parameter,theta,theta_se,estimate,se,ci_low,ci_high\n";
    for (const auto& h : fit.hyper)
      f << h.name << "," << format_double(h.theta) << "," << format_double(h.theta_se) << "," << format_double(h.value)
        << "," << format_double(h.se) << "," << format_double(h.lower) << "," << format_double(h.upper) << "\n";
  }
  {
    std::ofstream f(dir / "fixed_effects.csv", std::ios::binary);
    f << "name,estimate,sd,ci_low,ci_high,significant\n";
    for (const auto& e : fit.fixed_effects)
      f << e.name << "," << format_double(e.mean) << "," << format_double(e.sd) << "," << format_double(e.lower) << ","
        << format_double(e.upper) << "," << (e.significant ? "true" : "false") << "\n";
  }
  {
    std::ofstream f(dir / "latent.csv", std::ios::binary);
    f << "index,block,mean,sd\n";
    const auto& L = model.layout();
    for (Eigen::Index i = 0; i < fit.latent_mean.size(); ++i) {
      const char* block = i < L.n_fixed ? "fixed" : (i < L.spatial_offset() ? "seasonal" : "spatial");
      f << i << "," << block << "," << format_double(fit.latent_mean[i]) << "," << format_double(fit.latent_sd[i]) << "\n";
    }
  }
  if (model.seasonal()) {
    std::ofstream f(dir / "seasonal_odds_ratio.csv", std::ios::binary);
    f << "month,odds_ratio,ci_low,ci_high\n";
    for (const auto& o : seasonal_odds_ratio(fit, model, 6))
      f << o.month << "," << format_double(o.ratio) << "," << format_double(o.lower) << "," << format_double(o.upper)
        << "\n";
  }
  json meta;
  meta["variant"] = to_string(fit.variant);
  meta["records"] = model.record_count();
  meta["total_count"] = model.response().sum();
  meta["latent_dimension"] = model.layout().dim();
  meta["mesh_vertices"] = model.layout().n_mesh;
  meta["years"] = model.layout().n_years;
  meta["theta_names"] = fit.theta_names;
  meta["theta_hat"] = std::vector<double>(fit.theta_hat.data(), fit.theta_hat.data() + fit.theta_hat.size());
  meta["log_marginal"] = fit.log_marginal;
  meta["log_marginal_at_mode"] = fit.log_marginal_at_mode;
  meta["log_posterior_mode"] = fit.log_posterior_mode;
  meta["diagnostics"] = {{"converged", fit.diagnostics.converged},
                         {"outer_evaluations", fit.diagnostics.outer_evaluations},
                         {"newton_iterations", fit.diagnostics.newton_iterations},
                         {"inner_gradient_max", fit.diagnostics.gradient_norm},
                         {"hyper_hessian_positive", fit.diagnostics.hessian_positive},
                         {"message", fit.diagnostics.message}};
  meta["seed"] = config.seed;
  meta["budget"] = config.budget;
  std::ofstream f(dir / "run_metadata.json", std::ios::binary);
  f << meta.dump(2) << "\n";
}

std::vector<RenderedRaster> render_rasters(const std::vector<int>& cell_ids, const std::vector<int>& months,
                                           const std::vector<double>& values, const GridSpec& grid,
                                           const std::vector<int>& requested_months, int start_year,
                                           const fs::path& out_dir, const std::string& prefix) {
  if (cell_ids.size() != months.size() || cell_ids.size() != values.size())
    throw ConfigError("render: cell, month and value columns differ in length");
  grid.validate();
  const std::set<int> available(months.begin(), months.end());
  for (int m : requested_months)
    if (!available.count(m)) throw ConfigError("render: unknown month " + std::to_string(m));
  io::ensure_directory(out_dir);
  std::vector<RenderedRaster> out;
  for (int m : requested_months) {
    FineRaster r;
    r.origin_x = grid.origin_x;
    r.origin_y = grid.origin_y;
    r.resolution = grid.cell_size;
    r.missing_code = -9999.0;
    r.values = Eigen::MatrixXd::Constant(grid.n_rows, grid.n_cols, r.missing_code);
    for (std::size_t i = 0; i < cell_ids.size(); ++i) {
      if (months[i] != m) continue;
      const int id = cell_ids[i];
      if (id < 0 || id >= grid.cell_count()) throw ConfigError("render: cell " + std::to_string(id) + " outside grid");
      if (grid.is_active(id) && std::isfinite(values[i])) r.values(id / grid.n_cols, id % grid.n_cols) = values[i];
    }
    std::ostringstream name;
    name << prefix << "_" << start_year + year_index(m) << "-" << std::setw(2) << std::setfill('0') << calendar_month(m)
         << ".asc";
    const fs::path path = out_dir / name.str();
    io::write_ascii_raster(path, r);
    out.push_back({m, path});
  }
  return out;
}

// ---------------------------------------------------------------- entry

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunContext ctx;
  ctx.args = args;
  ctx.log = &err;
  std::string verb;
  CLI::App app{"Wildfire occurrence modelling with log-Gaussian Cox processes", "firelgcp"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config, out_dir = ".";
  std::uint64_t seed = 1;
  app.add_option("--config", config, "Key-value configuration file");
  auto* seed_opt = app.add_option("--seed", seed, "Random seed");
  app.add_option("--threads", ctx.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "Output directory");
  app.add_flag("--quiet", ctx.quiet, "Suppress log lines");
  app.set_version_flag("--version", std::string(kVersion));

  AggregateArgs ag;
  auto* s_ag = app.add_subcommand("aggregate", "Fine rasters to grid-cell means and standard deviations");
  s_ag->add_option("--grid", ag.grid, "Grid mask raster");
  s_ag->add_option("--rasters", ag.rasters, "CSV list: variable,month_index,path");
  s_ag->add_flag("--with-sd", ag.with_sd, "Add <variable>_sd static columns");

  AnomalyArgs an;
  auto* s_an = app.add_subcommand("anomalies", "Anomalies, transforms, time trend and standardization");
  s_an->add_option("--covariates", an.covariates, "Covariate directory");
  s_an->add_option("--add-dynamic", an.add_dynamic, "Extra dynamic CSV (cell_id,month_index,...)");
  s_an->add_option("--anomaly", an.anomaly, "Comma-separated dynamic variables to convert to monthly anomalies");
  s_an->add_option("--sqrt", an.sqrt_vars, "Comma-separated dynamic variables to square-root first");
  s_an->add_option("--months", an.months, "Month range when there is no dynamic.csv, e.g. 1-288");
  s_an->add_flag("--no-time", an.no_time, "Do not add the time covariate");
  s_an->add_flag("--no-standardize", an.no_standardize, "Keep covariates on their original scale");

  VariogramArgs va;
  auto* s_va = app.add_subcommand("variogram", "Space-time variograms");
  s_va->require_subcommand(1);
  auto* s_ve = s_va->add_subcommand("estimate", "Empirical space-time variogram");
  s_ve->add_option("--stations", va.stations, "Station CSV");
  s_ve->add_option("--variable", va.variable, "Variable name");
  s_ve->add_option("--bins", va.bins, "Distance classes")->check(CLI::PositiveNumber);
  s_ve->add_option("--max-lag", va.max_lag, "Largest time lag (months)")->check(CLI::NonNegativeNumber);
  s_ve->add_flag("--sqrt", va.sqrt, "Square-root the values first");
  auto* s_vf = s_va->add_subcommand("fit", "Weighted least squares variogram fit");
  s_vf->add_option("--empirical", va.empirical, "Empirical variogram CSV");
  s_vf->add_option("--kind", va.kind, "separable or product_sum");
  s_vf->add_option("--init", va.init, "Initial model file");
  s_vf->add_option("--variable", va.variable, "Variable name recorded in the model file");

  KrigeArgs kr;
  auto* s_kr = app.add_subcommand("krige", "Ordinary space-time kriging");
  s_kr->add_option("--stations", kr.stations, "Station CSV");
  s_kr->add_option("--variable", kr.variable, "Variable name");
  s_kr->add_option("--model", kr.model, "Variogram model file");
  s_kr->add_option("--targets", kr.targets, "Targets CSV: target_id,x_km,y_km");
  s_kr->add_option("--grid", kr.grid, "Grid mask; targets are the active cell centres");
  s_kr->add_option("--months", kr.months, "Months to predict, e.g. 1-12");
  s_kr->add_option("--window", kr.window, "Time window (months)")->check(CLI::NonNegativeNumber);
  s_kr->add_flag("--sqrt", kr.sqrt, "Krige square roots of the values");
  s_kr->add_flag("--back-transform", kr.back_transform, "Square the predictions");

  SubsampleArgs sb;
  auto* s_sb = app.add_subcommand("subsample", "Aggregate zero-count months per cell and year");
  s_sb->add_option("--counts", sb.counts, "Count CSV");
  s_sb->add_option("--exposure", sb.exposure, "Exposure of records without one");

  auto* s_si = app.add_subcommand("simulate", "Synthetic dataset from a simulation configuration (--config)");

  FitArgs fa;
  auto* s_fi = app.add_subcommand("fit", "Empirical-Bayes Laplace fit");
  s_fi->add_option("--model-config", fa.model_config, "Model configuration file");
  s_fi->add_option("--counts", fa.counts, "Count CSV");
  s_fi->add_option("--covariates", fa.covariates, "Covariate directory");
  s_fi->add_option("--grid", fa.grid, "Grid mask raster");
  s_fi->add_option("--variant", fa.variant, "FIXED_ONLY, SHARED_SPATIAL, INDEPENDENT_YEARLY or AR1_YEARLY");
  s_fi->add_option("--budget", fa.budget, "Outer evaluation budget");

  FitArgs pr;
  auto* s_pr = app.add_subcommand("predict", "Posterior log-intensity per cell and month");
  s_pr->add_option("--fit", pr.fit_dir, "Fit output directory");
  s_pr->add_option("--model-config", pr.model_config, "Model configuration (default: the fit's copy)");
  s_pr->add_option("--counts", pr.counts, "Count CSV used for the fit");
  s_pr->add_option("--covariates", pr.covariates, "Covariate directory");
  s_pr->add_option("--grid", pr.grid, "Grid mask raster");
  s_pr->add_option("--months", pr.months, "Months to predict, e.g. 265-276");

  RenderArgs re;
  auto* s_re = app.add_subcommand("render", "Headered text rasters from predictions");
  s_re->add_option("--predictions", re.predictions, "Predictions CSV");
  s_re->add_option("--grid", re.grid, "Grid mask raster");
  s_re->add_option("--field", re.field, "Column to render (mean or sd)");
  s_re->add_option("--months", re.months, "Months to render");
  s_re->add_option("--start-year", re.start_year, "Calendar year of month index 1");
  s_re->add_option("--prefix", re.prefix, "File name prefix");

  auto error_line = [&](int code, const std::string& kind, const std::string& message, const std::string& diag) {
    json e{{"status", "error"}, {"exit_code", code}, {"kind", kind}, {"verb", verb}, {"message", message}};
    if (!diag.empty()) e["diagnostics"] = diag;
    err << e.dump() << "\n";
    return code;
  };

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    for (auto* s : app.get_subcommands()) verb = s->get_name();
    ctx.out_dir = out_dir;
    ctx.seed = seed;
    ctx.seed_given = seed_opt->count() > 0;
    if (!config.empty()) {
      ctx.config_path = config;
      if (verb != "simulate") {
        CLI::App* active = app.get_subcommands().front();
        if (verb == "variogram") active = active->get_subcommands().front();
        apply_config_defaults(active, io::read_key_values(config), config);
      }
    }
    check_required(verb, ag, an, va, s_ve->parsed(), kr, sb, fa, pr, re);
    io::ensure_directory(ctx.out_dir);
    if (verb == "aggregate") {
      verb_aggregate(ctx, ag);
    } else if (verb == "anomalies") {
      verb_anomalies(ctx, an);
    } else if (verb == "variogram") {
      if (s_ve->parsed()) {
        verb = "variogram estimate";
        verb_variogram_estimate(ctx, va);
      } else {
        verb = "variogram fit";
        verb_variogram_fit(ctx, va);
      }
    } else if (verb == "krige") {
      verb_krige(ctx, kr);
    } else if (verb == "subsample") {
      verb_subsample(ctx, sb);
    } else if (verb == "simulate") {
      verb_simulate(ctx);
    } else if (verb == "fit") {
      try {
        verb_fit(ctx, fa);
      } catch (const NumericalError& e) {
        write_numerical_diagnostics(ctx, e);
        throw;
      }
    } else if (verb == "predict") {
      verb_predict(ctx, pr);
    } else if (verb == "render") {
      verb_render(ctx, re);
    }
    (void)s_si;
    write_manifest(ctx, verb);
    out << json{{"status", "ok"}, {"verb", verb}, {"manifest", (ctx.out_dir / "manifest.json").string()}}.dump()
        << "\n";
    return 0;
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    return error_line(2, "usage", e.what(), "");
  } catch (const ConfigError& e) {
    return error_line(2, "config", e.what(), "");
  } catch (const DomainError& e) {
    return error_line(2, "domain", e.what(), "");
  } catch (const NumericalError& e) {
    const fs::path diag = ctx.out_dir / "diagnostics.txt";
    return error_line(3, "numerical", e.what(), fs::exists(diag) ? diag.string() : e.diagnostics());
  } catch (const std::exception& e) {
    return error_line(1, "internal", e.what(), "");
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace firelgcp::cli
