#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <iostream>
#include <memory>

#include "firelgcp/cli.hpp"
#include "firelgcp/error.hpp"
#include "firelgcp/kriging.hpp"
#include "firelgcp/laplace.hpp"
#include "firelgcp/mesh.hpp"
#include "firelgcp/model.hpp"
#include "firelgcp/simulate.hpp"
#include "firelgcp/spde.hpp"
#include "firelgcp/variogram.hpp"

namespace py = pybind11;
using namespace firelgcp;

namespace {

// Builds the LGCP model for a simulated dataset, standardizing a copy of its covariates.
std::shared_ptr<LatentModel> model_from_dataset(const SimDataset& d, ModelVariant variant, const PriorSpec& priors) {
  CovariateTable cov = d.covariates;
  cov.standardize();
  return std::make_shared<LatentModel>(
      LatentModel::build(d.records, cov, d.grid, has_spatial(variant) ? d.mesh : nullptr, variant, priors));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Log-Gaussian Cox process fire occurrence models";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);

  py::class_<Point2>(m, "Point2")
      .def(py::init([](double x, double y) { return Point2{x, y}; }), py::arg("x"), py::arg("y"))
      .def_readwrite("x", &Point2::x)
      .def_readwrite("y", &Point2::y)
      .def("__repr__", [](const Point2& p) { return "Point2(" + std::to_string(p.x) + ", " + std::to_string(p.y) + ")"; });

  py::class_<GridSpec>(m, "GridSpec")
      .def_static("full", &GridSpec::full, py::arg("origin_x"), py::arg("origin_y"), py::arg("cell_size"),
                  py::arg("n_rows"), py::arg("n_cols"))
      .def_readwrite("origin_x", &GridSpec::origin_x)
      .def_readwrite("origin_y", &GridSpec::origin_y)
      .def_readwrite("cell_size", &GridSpec::cell_size)
      .def_readwrite("n_rows", &GridSpec::n_rows)
      .def_readwrite("n_cols", &GridSpec::n_cols)
      .def_readwrite("active", &GridSpec::active)
      .def("active_cells", &GridSpec::active_cells)
      .def("cell_center", &GridSpec::cell_center);

  // variograms and kriging
  py::class_<ExponentialComponent>(m, "ExponentialComponent")
      .def(py::init([](double sill, double range, double nugget) { return ExponentialComponent{sill, range, nugget}; }),
           py::arg("sill"), py::arg("range"), py::arg("nugget") = 0.0)
      .def_readwrite("sill", &ExponentialComponent::sill)
      .def_readwrite("range", &ExponentialComponent::range)
      .def_readwrite("nugget", &ExponentialComponent::nugget)
      .def("__call__", &ExponentialComponent::operator());

  py::enum_<VariogramKind>(m, "VariogramKind")
      .value("SEPARABLE", VariogramKind::separable)
      .value("PRODUCT_SUM", VariogramKind::product_sum);

  py::class_<VariogramModel>(m, "VariogramModel")
      .def_static("product_sum", &VariogramModel::product_sum, py::arg("spatial"), py::arg("temporal"), py::arg("k"))
      .def_static("separable", &VariogramModel::separable, py::arg("spatial"), py::arg("temporal"), py::arg("sill"))
      .def_property_readonly("kind", &VariogramModel::kind)
      .def_property_readonly("spatial", &VariogramModel::spatial)
      .def_property_readonly("temporal", &VariogramModel::temporal)
      .def_property_readonly("k", &VariogramModel::k)
      .def_property_readonly("sill", &VariogramModel::sill)
      .def("limit", &VariogramModel::limit)
      .def("covariance", &VariogramModel::covariance)
      .def("__call__", &VariogramModel::operator(), py::arg("h"), py::arg("u"));

  py::class_<StationSeries>(m, "StationSeries")
      .def(py::init([](std::string id, Point2 loc, std::vector<double> values) {
             return StationSeries{std::move(id), loc, std::move(values)};
           }),
           py::arg("station_id"), py::arg("location"), py::arg("values"))
      .def_readwrite("station_id", &StationSeries::station_id)
      .def_readwrite("location", &StationSeries::location)
      .def_readwrite("values", &StationSeries::values);

  py::class_<StationData>(m, "StationData")
      .def(py::init<>())
      .def_readwrite("variable", &StationData::variable)
      .def_readwrite("first_month", &StationData::first_month)
      .def_readwrite("stations", &StationData::stations)
      .def("month_count", &StationData::month_count)
      .def("max_distance", &StationData::max_distance);

  py::class_<VariogramBin>(m, "VariogramBin")
      .def_readonly("h", &VariogramBin::h)
      .def_readonly("h_bin", &VariogramBin::h_bin)
      .def_readonly("u", &VariogramBin::u)
      .def_readonly("gamma", &VariogramBin::gamma)
      .def_readonly("n_pairs", &VariogramBin::n_pairs);

  py::class_<VariogramFit>(m, "VariogramFit")
      .def_readonly("model", &VariogramFit::model)
      .def_readonly("objective", &VariogramFit::objective)
      .def_readonly("evaluations", &VariogramFit::evaluations)
      .def_readonly("converged", &VariogramFit::converged);

  m.def("default_space_edges", &default_space_edges, py::arg("data"), py::arg("n_bins") = 10);
  m.def("empirical_variogram", &empirical_variogram, py::arg("data"), py::arg("space_edges"),
        py::arg("max_time_lag") = 12);
  m.def(
      "fit_variogram",
      [](const std::vector<VariogramBin>& table, VariogramKind kind, const VariogramModel& init, int restarts) {
        VariogramFitOptions o;
        o.restarts = restarts;
        return fit_variogram(table, kind, init, o);
      },
      py::arg("empirical"), py::arg("kind"), py::arg("init"), py::arg("restarts") = 5);
  m.def("simulate_stations", &simulate_stations, py::arg("model"), py::arg("locations"), py::arg("months"),
        py::arg("mean"), py::arg("seed"), py::arg("variable") = "SIM");

  py::class_<KrigingResult>(m, "KrigingResult")
      .def_readonly("months", &KrigingResult::months)
      .def_readonly("prediction", &KrigingResult::prediction)
      .def_readonly("variance", &KrigingResult::variance);
  m.def(
      "krige",
      [](const VariogramModel& model, const StationData& data, const std::vector<Point2>& targets,
         const std::vector<int>& months, int time_window) {
        KrigingOptions o;
        o.time_window = time_window;
        return krige(model, data, targets, months, o);
      },
      py::arg("model"), py::arg("data"), py::arg("targets"), py::arg("months"), py::arg("time_window") = 6);

  // mesh and SPDE
  py::class_<MeshOptions>(m, "MeshOptions")
      .def(py::init([](double inner, double outer, double margin) { return MeshOptions{inner, outer, margin}; }),
           py::arg("max_edge_inner") = 12.5, py::arg("max_edge_outer") = 25.0, py::arg("margin") = 75.0)
      .def_readwrite("max_edge_inner", &MeshOptions::max_edge_inner)
      .def_readwrite("max_edge_outer", &MeshOptions::max_edge_outer)
      .def_readwrite("margin", &MeshOptions::margin);

  py::class_<Mesh, std::shared_ptr<Mesh>>(m, "Mesh")
      .def_readonly("vertices", &Mesh::vertices)
      .def_readonly("triangles", &Mesh::triangles)
      .def("vertex_count", &Mesh::vertex_count)
      .def("total_area", &Mesh::total_area)
      .def("max_edge_length", &Mesh::max_edge_length);

  m.def("build_mesh", &build_mesh, py::arg("grid"), py::arg("options"));
  m.def("matern_correlation", &matern_correlation, py::arg("distance"), py::arg("range"));

  // counts and models
  py::class_<CountRecord>(m, "CountRecord")
      .def(py::init([](int cell, int month, long count, double exposure, int n) {
             return CountRecord{cell, month, count, exposure, n};
           }),
           py::arg("cell_id"), py::arg("month"), py::arg("count"), py::arg("exposure") = 4.0,
           py::arg("n_aggregated") = 1)
      .def_readwrite("cell_id", &CountRecord::cell_id)
      .def_readwrite("month", &CountRecord::month)
      .def_readwrite("count", &CountRecord::count)
      .def_readwrite("exposure", &CountRecord::exposure)
      .def_readwrite("n_aggregated", &CountRecord::n_aggregated);
  m.def("subsample_zero_months", &subsample_zero_months, py::arg("records"), py::arg("seed"));

  py::enum_<ModelVariant>(m, "ModelVariant")
      .value("FIXED_ONLY", ModelVariant::fixed_only)
      .value("SHARED_SPATIAL", ModelVariant::shared_spatial)
      .value("INDEPENDENT_YEARLY", ModelVariant::independent_yearly)
      .value("AR1_YEARLY", ModelVariant::ar1_yearly);

  py::class_<HyperParams>(m, "HyperParams")
      .def(py::init([](double range, double sd, double rho, double seasonal_precision) {
             return HyperParams{range, sd, rho, seasonal_precision};
           }),
           py::arg("range") = 50.0, py::arg("sd") = 1.0, py::arg("rho") = 0.5, py::arg("seasonal_precision") = 4.0)
      .def_readwrite("range", &HyperParams::range)
      .def_readwrite("sd", &HyperParams::sd)
      .def_readwrite("rho", &HyperParams::rho)
      .def_readwrite("seasonal_precision", &HyperParams::seasonal_precision);

  py::class_<PriorSpec>(m, "PriorSpec")
      .def(py::init<>())
      .def_readwrite("fixed_effect_precision", &PriorSpec::fixed_effect_precision)
      .def_readwrite("range0", &PriorSpec::range0)
      .def_readwrite("range_prob", &PriorSpec::range_prob)
      .def_readwrite("sd0", &PriorSpec::sd0)
      .def_readwrite("sd_prob", &PriorSpec::sd_prob)
      .def_readwrite("seasonal_var0", &PriorSpec::seasonal_var0)
      .def_readwrite("seasonal_prob", &PriorSpec::seasonal_prob)
      .def_readwrite("rho0", &PriorSpec::rho0)
      .def_readwrite("rho_prob", &PriorSpec::rho_prob);

  py::enum_<CovariateKind>(m, "CovariateKind")
      .value("WHITE_NOISE", CovariateKind::white_noise)
      .value("SMOOTH_FIELD", CovariateKind::smooth_field)
      .value("CONSTANT", CovariateKind::constant);

  py::class_<CovariateGenerator>(m, "CovariateGenerator")
      .def(py::init([](std::string name, CovariateKind kind, bool dynamic, double value, double range) {
             return CovariateGenerator{std::move(name), kind, dynamic, value, range};
           }),
           py::arg("name"), py::arg("kind"), py::arg("dynamic") = false, py::arg("value") = 0.0,
           py::arg("range") = 20.0);

  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init<>())
      .def_readwrite("n_rows", &SimConfig::n_rows)
      .def_readwrite("n_cols", &SimConfig::n_cols)
      .def_readwrite("cell_size", &SimConfig::cell_size)
      .def_readwrite("years", &SimConfig::years)
      .def_readwrite("beta", &SimConfig::beta)
      .def_readwrite("include_time", &SimConfig::include_time)
      .def_readwrite("seasonal", &SimConfig::seasonal)
      .def_readwrite("variant", &SimConfig::variant)
      .def_readwrite("hyper", &SimConfig::hyper)
      .def_property(
          "seed", [](const SimConfig& c) { return c.seed; },
          [](SimConfig& c, std::uint64_t s) {
            c.seed = s;
            c.seed_set = true;
          })
      .def_readwrite("covariates", &SimConfig::covariates)
      .def_readwrite("mesh", &SimConfig::mesh)
      .def_readwrite("exposure", &SimConfig::exposure);

  py::class_<SimTruth>(m, "SimTruth")
      .def_readonly("beta_names", &SimTruth::beta_names)
      .def_readonly("beta", &SimTruth::beta)
      .def_readonly("seasonal", &SimTruth::seasonal)
      .def_readonly("hyper", &SimTruth::hyper)
      .def_readonly("spatial", &SimTruth::spatial)
      .def_readonly("eta", &SimTruth::eta);

  py::class_<SimDataset>(m, "SimDataset")
      .def_readonly("grid", &SimDataset::grid)
      .def_readonly("records", &SimDataset::records)
      .def_property_readonly("mesh", [](const SimDataset& d) { return d.mesh ? *d.mesh : Mesh{}; })
      .def_readonly("truth", &SimDataset::truth);

  m.def("simulate_dataset", &simulate_dataset, py::arg("config"));
  m.def("two_peak_seasonal", &two_peak_seasonal, py::arg("first_peak"), py::arg("second_peak"),
        py::arg("amplitude"));

  py::class_<LatentModel, std::shared_ptr<LatentModel>>(m, "LatentModel")
      .def_property_readonly("fixed_names", &LatentModel::fixed_names)
      .def_property_readonly("dimension", [](const LatentModel& lm) { return lm.layout().dim(); })
      .def_property_readonly("theta_names", [](const LatentModel& lm) { return lm.theta_layout().names(); })
      .def("record_count", &LatentModel::record_count)
      .def("encode", [](const LatentModel& lm, const HyperParams& h) { return lm.theta_layout().encode(h); })
      .def("decode", &LatentModel::hyper_from_theta);

  m.def("model_from_dataset", &model_from_dataset, py::arg("dataset"), py::arg("variant"),
        py::arg("priors") = PriorSpec{});

  m.def(
      "log_marginal_laplace",
      [](const LatentModel& lm, const HyperParams& h) {
        return log_marginal_laplace(lm, lm.theta_layout().encode(h));
      },
      py::arg("model"), py::arg("hyper"));

  py::class_<HyperEstimate>(m, "HyperEstimate")
      .def_readonly("name", &HyperEstimate::name)
      .def_readonly("theta", &HyperEstimate::theta)
      .def_readonly("value", &HyperEstimate::value)
      .def_readonly("se", &HyperEstimate::se)
      .def_readonly("lower", &HyperEstimate::lower)
      .def_readonly("upper", &HyperEstimate::upper);

  py::class_<FixedEffectSummary>(m, "FixedEffectSummary")
      .def_readonly("name", &FixedEffectSummary::name)
      .def_readonly("mean", &FixedEffectSummary::mean)
      .def_readonly("sd", &FixedEffectSummary::sd)
      .def_readonly("lower", &FixedEffectSummary::lower)
      .def_readonly("upper", &FixedEffectSummary::upper);

  py::class_<FitDiagnostics>(m, "FitDiagnostics")
      .def_readonly("outer_evaluations", &FitDiagnostics::outer_evaluations)
      .def_readonly("converged", &FitDiagnostics::converged)
      .def_readonly("hessian_positive", &FitDiagnostics::hessian_positive)
      .def_readonly("message", &FitDiagnostics::message);

  py::class_<OddsRatio>(m, "OddsRatio")
      .def_readonly("month", &OddsRatio::month)
      .def_readonly("ratio", &OddsRatio::ratio)
      .def_readonly("lower", &OddsRatio::lower)
      .def_readonly("upper", &OddsRatio::upper);

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("theta_hat", &FitResult::theta_hat)
      .def_readonly("hyper", &FitResult::hyper)
      .def_readonly("fixed_effects", &FitResult::fixed_effects)
      .def_readonly("latent_mean", &FitResult::latent_mean)
      .def_readonly("latent_sd", &FitResult::latent_sd)
      .def_readonly("log_marginal", &FitResult::log_marginal)
      .def_readonly("log_marginal_at_mode", &FitResult::log_marginal_at_mode)
      .def_readonly("diagnostics", &FitResult::diagnostics);

  m.def(
      "fit",
      [](const LatentModel& lm, const HyperParams& init, int budget, bool standard_errors) {
        FitOptions o;
        o.budget = budget;
        o.standard_errors = standard_errors;
        return fit(lm, lm.theta_layout().encode(init), o);
      },
      py::arg("model"), py::arg("init") = HyperParams{}, py::arg("budget") = 400, py::arg("standard_errors") = true);
  m.def("seasonal_odds_ratio", &seasonal_odds_ratio, py::arg("fit"), py::arg("model"), py::arg("reference_month"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        py::gil_scoped_release release;
        return cli::run(args, std::cout, std::cerr);
      },
      py::arg("args"), "Runs one command-line verb in-process and returns its exit code.");
}
