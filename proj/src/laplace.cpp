#include "firelgcp/laplace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "firelgcp/error.hpp"
#include "firelgcp/optim.hpp"

namespace firelgcp {

namespace {

constexpr double kZ95 = 1.959963984540054;

double objective_value(const LatentModel& model, const Eigen::VectorXd& x, const SparseMatrix& q, double* lik_out,
                       double* quad_out) {
  const double lik = model.log_likelihood(x).value;
  const double quad = x.dot(q * x);
  if (lik_out) *lik_out = lik;
  if (quad_out) *quad_out = quad;
  return lik - 0.5 * quad;
}

SparseMatrix curvature(const LatentModel& model, const Eigen::VectorXd& neg_hessian_eta) {
  return model.design_transpose() * neg_hessian_eta.asDiagonal() * model.design();
}

}  // namespace

Eigen::VectorXd latent_gradient(const LatentModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& theta) {
  const SparseMatrix q = model.prior_precision(theta);
  return model.log_likelihood_gradient(x) - q * x;
}

SparseMatrix latent_negative_hessian(const LatentModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& theta) {
  const SparseMatrix q = model.prior_precision(theta);
  const LikelihoodEval lik = model.log_likelihood(x);
  SparseMatrix h = q + curvature(model, lik.neg_hessian);
  h.makeCompressed();
  return h;
}

InnerResult inner_mode(const LatentModel& model, const Eigen::VectorXd& theta, const NewtonOptions& options,
                       const Eigen::VectorXd* start) {
  const SparseMatrix q = model.prior_precision(theta);
  const Eigen::Index n = q.rows();
  InnerResult r;
  r.mode = (start && start->size() == n && start->allFinite()) ? *start : Eigen::VectorXd::Zero(n);
  r.chol = std::make_shared<SparseCholesky>();

  double psi = objective_value(model, r.mode, q, nullptr, nullptr);
  if (!std::isfinite(psi)) {
    r.mode.setZero();
    psi = objective_value(model, r.mode, q, nullptr, nullptr);
  }
  r.objective_trace.push_back(psi);
  bool converged = false;
  for (int it = 0; it < options.max_iterations; ++it) {
    const Eigen::VectorXd eta = model.design() * r.mode;
    const LikelihoodEval lik = model.log_likelihood_eta(eta);
    const Eigen::VectorXd g = model.design_transpose() * lik.gradient - q * r.mode;
    r.gradient_norm = g.lpNorm<Eigen::Infinity>();
    if (r.gradient_norm < options.gradient_tolerance) {
      converged = true;
      break;
    }
    SparseMatrix h = q + curvature(model, lik.neg_hessian);
    r.chol->factorize(h);
    const Eigen::VectorXd delta = r.chol->solve(g);
    double t = 1.0;
    Eigen::VectorXd candidate = r.mode + delta;
    double psi_new = objective_value(model, candidate, q, nullptr, nullptr);
    int halvings = 0;
    while (!(psi_new >= psi) && halvings < options.max_halvings) {
      t *= 0.5;
      candidate = r.mode + t * delta;
      psi_new = objective_value(model, candidate, q, nullptr, nullptr);
      ++halvings;
    }
    ++r.iterations;
    if (!(psi_new >= psi)) {
      // no ascent along the Newton direction: at the optimum to working precision
      converged = (t * delta.norm() < options.step_tolerance) || r.gradient_norm < 1e3 * options.gradient_tolerance;
      break;
    }
    r.mode = candidate;
    psi = psi_new;
    r.objective_trace.push_back(psi);
    if (t * delta.norm() < options.step_tolerance) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    std::ostringstream trace;
    trace << "iterations=" << r.iterations << " gradient_max=" << r.gradient_norm << " objective_trace=";
    for (std::size_t k = 0; k < r.objective_trace.size(); ++k) trace << (k ? "," : "") << r.objective_trace[k];
    throw NumericalError("inner Newton iteration did not converge", trace.str());
  }
  const LikelihoodEval lik = model.log_likelihood(r.mode);
  r.log_likelihood = lik.value;
  r.quadratic = r.mode.dot(q * r.mode);
  r.hessian = q + curvature(model, lik.neg_hessian);
  r.hessian.makeCompressed();
  r.chol->factorize(r.hessian);
  r.log_det_hessian = r.chol->log_determinant();
  r.log_det_prior = model.prior_log_determinant(theta);
  r.gradient_norm = (model.design_transpose() * lik.gradient - q * r.mode).lpNorm<Eigen::Infinity>();
  return r;
}

double log_marginal_laplace(const LatentModel& model, const Eigen::VectorXd& theta, const NewtonOptions& options,
                            const Eigen::VectorXd* start, InnerResult* inner) {
  InnerResult r = inner_mode(model, theta, options, start);
  const double value = r.log_likelihood - 0.5 * r.quadratic + 0.5 * r.log_det_prior - 0.5 * r.log_det_hessian;
  if (inner) *inner = std::move(r);
  return value;
}

GaussianApproximation::GaussianApproximation(InnerResult inner) : inner_(std::move(inner)) {
  if (!inner_.chol) throw ConfigError("Gaussian approximation requires a factorized Hessian");
  selected_ = std::make_unique<SelectedInverse>(*inner_.chol);
  variance_ = selected_->diagonal();
}

double GaussianApproximation::covariance(int i, int j) const {
  if (auto v = selected_->entry(i, j)) return *v;
  Eigen::VectorXd e = Eigen::VectorXd::Zero(inner_.mode.size());
  e[j] = 1.0;
  return inner_.chol->solve(e)[i];
}

Eigen::VectorXd GaussianApproximation::linear_combination_variance(const SparseMatrix& rows) const {
  using RowMajor = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;
  const RowMajor a = rows;
  Eigen::VectorXd out(a.rows());
  std::vector<std::pair<int, double>> nz;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    nz.clear();
    for (RowMajor::InnerIterator it(a, r); it; ++it) nz.emplace_back(static_cast<int>(it.col()), it.value());
    double v = 0.0;
    bool complete = true;
    for (std::size_t p = 0; p < nz.size() && complete; ++p) {
      v += nz[p].second * nz[p].second * variance_[nz[p].first];
      for (std::size_t s = p + 1; s < nz.size(); ++s) {
        const auto c = selected_->entry(nz[p].first, nz[s].first);
        if (!c) {
          complete = false;
          break;
        }
        v += 2.0 * nz[p].second * nz[s].second * *c;
      }
    }
    if (!complete) {
      Eigen::VectorXd dense = Eigen::VectorXd::Zero(inner_.mode.size());
      for (const auto& [c, val] : nz) dense[c] = val;
      v = dense.dot(inner_.chol->solve(dense));
    }
    out[r] = std::max(v, 0.0);
  }
  return out;
}

namespace {

void fill_latent_summaries(FitResult& out, const LatentModel& model, InnerResult inner) {
  auto approx = std::make_shared<GaussianApproximation>(std::move(inner));
  out.latent_mean = approx->mean();
  out.latent_sd = approx->variance().cwiseMax(0.0).cwiseSqrt();
  out.diagnostics.newton_iterations = approx->inner().iterations;
  out.diagnostics.gradient_norm = approx->inner().gradient_norm;
  out.fixed_effects.clear();
  for (int j = 0; j < model.layout().n_fixed; ++j) {
    FixedEffectSummary s;
    s.name = j < static_cast<int>(model.fixed_names().size()) ? model.fixed_names()[static_cast<std::size_t>(j)]
                                                                : "beta" + std::to_string(j);
    s.mean = out.latent_mean[j];
    s.sd = out.latent_sd[j];
    s.lower = s.mean - kZ95 * s.sd;
    s.upper = s.mean + kZ95 * s.sd;
    s.significant = s.lower > 0.0 || s.upper < 0.0;
    out.fixed_effects.push_back(s);
  }
  out.approximation = std::move(approx);
}

void fill_hyper(FitResult& out, const ThetaLayout& layout) {
  out.theta_names = layout.names();
  out.hyper.clear();
  for (Eigen::Index i = 0; i < out.theta_hat.size(); ++i) {
    HyperEstimate h;
    h.name = out.theta_names[static_cast<std::size_t>(i)];
    h.theta = out.theta_hat[i];
    const double var = out.theta_covariance.size() ? out.theta_covariance(i, i) : 0.0;
    h.theta_se = var > 0.0 ? std::sqrt(var) : 0.0;
    const bool is_rho = h.name == "rho";
    auto map = [is_rho](double t) { return is_rho ? std::tanh(t) : std::exp(t); };
    h.value = map(h.theta);
    h.se = (is_rho ? 1.0 - h.value * h.value : h.value) * h.theta_se;
    h.lower = map(h.theta - kZ95 * h.theta_se);
    h.upper = map(h.theta + kZ95 * h.theta_se);
    out.hyper.push_back(h);
  }
}

}  // namespace

FitResult summarize_at(const LatentModel& model, const Eigen::VectorXd& theta, const NewtonOptions& newton) {
  FitResult out;
  out.variant = model.layout().variant;
  out.theta_hat = theta;
  out.theta_covariance = Eigen::MatrixXd::Zero(theta.size(), theta.size());
  InnerResult inner;
  out.log_marginal_at_mode = log_marginal_laplace(model, theta, newton, nullptr, &inner);
  out.log_posterior_mode = out.log_marginal_at_mode + log_prior_hyper(theta, model.theta_layout(), model.priors());
  out.log_marginal = out.log_marginal_at_mode;
  out.diagnostics.converged = true;
  fill_hyper(out, model.theta_layout());
  fill_latent_summaries(out, model, std::move(inner));
  return out;
}

FitResult fit(const LatentModel& model, const Eigen::VectorXd& theta_init, const FitOptions& options) {
  const ThetaLayout& layout = model.theta_layout();
  if (theta_init.size() != layout.size()) throw ConfigError("fit: initial theta has wrong dimension");
  if (!theta_init.allFinite()) throw ConfigError("fit: initial theta must be finite");
  if (options.budget < 1) throw ConfigError("fit: budget must be >= 1");
  if (!std::isfinite(log_prior_hyper(theta_init, layout, model.priors())))
    throw ConfigError("fit: initial hyperparameters outside the prior support");

  Eigen::VectorXd warm = Eigen::VectorXd::Zero(model.layout().dim());
  Eigen::VectorXd best_mode = warm;
  double best_value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  auto objective = [&](const Eigen::VectorXd& theta) -> double {
    ++evaluations;
    if ((theta.array().abs() > 25.0).any()) return std::numeric_limits<double>::infinity();
    const double lp = log_prior_hyper(theta, layout, model.priors());
    if (!std::isfinite(lp)) return std::numeric_limits<double>::infinity();
    try {
      InnerResult inner;
      const double lm = log_marginal_laplace(model, theta, options.newton, &warm, &inner);
      const double value = -(lm + lp);
      if (!std::isfinite(value)) return std::numeric_limits<double>::infinity();
      warm = inner.mode;
      if (value < best_value) {
        best_value = value;
        best_mode = inner.mode;
      }
      return value;
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    } catch (const DomainError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  FitResult out;
  out.variant = model.layout().variant;
  Eigen::VectorXd theta = theta_init;
  bool converged = false;
  if (layout.size() == 0) {
    objective(theta);
    converged = true;
  } else {
    double previous = std::numeric_limits<double>::infinity();
    double step = options.initial_step;
    for (int cycle = 0; cycle <= options.restarts && evaluations < options.budget; ++cycle) {
      NelderMeadOptions nm;
      nm.max_evaluations = options.budget - evaluations;
      nm.f_tolerance = options.f_tolerance;
      nm.x_tolerance = 1e-6;
      nm.initial_step = step;
      const NelderMeadResult r = nelder_mead(objective, theta, nm);
      if (r.value <= previous) theta = r.x;
      const double improvement = previous - r.value;
      previous = std::min(previous, r.value);
      converged = r.converged;
      if (r.converged && improvement < 10.0 * options.f_tolerance) break;
      step = std::max(0.5 * step, 0.05);
    }
  }
  if (!std::isfinite(best_value)) throw NumericalError("fit: no hyperparameter value gave a finite log marginal");

  out.theta_hat = theta;
  out.diagnostics.outer_evaluations = evaluations;
  out.diagnostics.converged = converged;
  out.diagnostics.message = converged ? "converged" : "evaluation budget exhausted before convergence";

  InnerResult inner;
  warm = best_mode;
  out.log_marginal_at_mode = log_marginal_laplace(model, theta, options.newton, &best_mode, &inner);
  out.log_posterior_mode = out.log_marginal_at_mode + log_prior_hyper(theta, layout, model.priors());

  const auto d = theta.size();
  out.theta_covariance = Eigen::MatrixXd::Zero(d, d);
  out.log_marginal = out.log_posterior_mode;
  if (d > 0 && options.standard_errors) {
    auto neg = [&](const Eigen::VectorXd& t) {
      const double v = objective(t);
      return std::isfinite(v) ? v : std::numeric_limits<double>::quiet_NaN();
    };
    const Eigen::MatrixXd hess = finite_difference_hessian(neg, theta, options.hessian_step);
    const Eigen::MatrixXd sym = 0.5 * (hess + hess.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(sym);
    if (sym.allFinite() && llt.info() == Eigen::Success) {
      out.diagnostics.hessian_positive = true;
      out.theta_covariance = llt.solve(Eigen::MatrixXd::Identity(d, d));
      const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
      out.log_marginal = out.log_posterior_mode + 0.5 * static_cast<double>(d) * std::log(2.0 * M_PI) - 0.5 * log_det;
    } else {
      out.diagnostics.message += "; hyperparameter Hessian not positive definite";
    }
  }
  fill_hyper(out, layout);
  fill_latent_summaries(out, model, std::move(inner));
  return out;
}

IntensityPrediction predict_rows(const GaussianApproximation& approx, const SparseMatrix& rows) {
  IntensityPrediction p;
  p.mean = rows * approx.mean();
  p.sd = approx.linear_combination_variance(rows).cwiseSqrt();
  return p;
}

IntensityPrediction predict_intensity(const FitResult& fit, const LatentModel& model,
                                      const std::vector<std::pair<int, int>>& targets) {
  const SparseMatrix rows = model.design_rows(targets);
  std::shared_ptr<const GaussianApproximation> approx = fit.approximation;
  if (!approx) approx = summarize_at(model, fit.theta_hat).approximation;
  if (approx->mean().size() != model.layout().dim()) throw ConfigError("predict: fit does not match the model");
  IntensityPrediction p = predict_rows(*approx, rows);
  p.targets = targets;
  return p;
}

std::vector<OddsRatio> seasonal_odds_ratio(const FitResult& fit, const LatentModel& model, int reference_month) {
  const CyclicRw1* rw = model.seasonal();
  if (!rw || model.layout().n_seasonal == 0) throw ConfigError("seasonal odds ratio: model has no seasonal block");
  if (reference_month < 1 || reference_month > rw->levels)
    throw ConfigError("seasonal odds ratio: reference month out of range");
  std::shared_ptr<const GaussianApproximation> approx = fit.approximation;
  if (!approx) approx = summarize_at(model, fit.theta_hat).approximation;
  const int off = model.layout().seasonal_offset();
  const int k = model.layout().n_seasonal;
  Eigen::MatrixXd cov(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j <= i; ++j) cov(i, j) = cov(j, i) = approx->covariance(off + i, off + j);
  const Eigen::VectorXd u = approx->mean().segment(off, k);
  std::vector<OddsRatio> out;
  for (int m = 1; m <= rw->levels; ++m) {
    OddsRatio o;
    o.month = m;
    if (m == reference_month) {
      out.push_back(o);
      continue;
    }
    const Eigen::RowVectorXd diff = rw->basis.row(m - 1) - rw->basis.row(reference_month - 1);
    const double mean = diff.dot(u);
    const double sd = std::sqrt(std::max(0.0, (diff * cov * diff.transpose())(0, 0)));
    o.ratio = std::exp(mean);
    o.lower = std::exp(mean - kZ95 * sd);
    o.upper = std::exp(mean + kZ95 * sd);
    out.push_back(o);
  }
  return out;
}

}  // namespace firelgcp
