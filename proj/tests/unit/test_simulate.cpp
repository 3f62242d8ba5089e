#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "firelgcp/error.hpp"
#include "firelgcp/simulate.hpp"
#include "firelgcp/spde.hpp"
#include "fixtures.hpp"

using namespace firelgcp;

namespace {

SimConfig plain(double beta0, std::uint64_t seed) {
  SimConfig c;
  c.n_rows = 10;
  c.n_cols = 10;
  c.years = 2;
  c.beta = {beta0};
  c.seed = seed;
  c.seed_set = true;
  return c;
}

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& s) {
  const Eigen::MatrixXd centred = s.colwise() - s.rowwise().mean();
  return centred * centred.transpose() / static_cast<double>(s.cols() - 1);
}

}  // namespace

TEST(SampleGmrf, IdentityGivesStandardNormals) {
  SparseMatrix q(3, 3);
  q.setIdentity();
  const Eigen::MatrixXd s = sample_gmrf(q, 2000, 1);
  const Eigen::MatrixXd c = sample_covariance(s);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(c(i, i), 1.0, 0.05);
  EXPECT_LT(s.rowwise().mean().cwiseAbs().maxCoeff(), 0.1);
}

TEST(SampleGmrf, TwoByTwoCovariance) {
  Eigen::Matrix2d q;
  q << 2, -1, -1, 2;
  const Eigen::MatrixXd c = sample_covariance(sample_gmrf(sparse_from_dense(q), 2000, 2));
  EXPECT_NEAR(c(0, 0), 2.0 / 3.0, 0.05);
  EXPECT_NEAR(c(1, 1), 2.0 / 3.0, 0.05);
  EXPECT_NEAR(c(0, 1), 1.0 / 3.0, 0.05);
}

TEST(SampleGmrf, ReproducibleAndColumnwiseStreams) {
  Eigen::Matrix2d q;
  q << 2, -1, -1, 2;
  const Eigen::MatrixXd a = sample_gmrf(sparse_from_dense(q), 10, 3);
  const Eigen::MatrixXd b = sample_gmrf(sparse_from_dense(q), 4, 3);
  EXPECT_EQ(a.leftCols(4), b);
}

TEST(SampleGmrf, Ar1KroneckerLagOneCorrelation) {
  const GridSpec g = GridSpec::full(0, 0, 2.0, 5, 5);
  const Mesh m = build_mesh(g, {3.0, 6.0, 5.0});
  const SparseMatrix qs = matern_precision({8.0, 1.0}, fem_matrices(m));
  const double rho = 0.7;
  const int years = 3;
  const Eigen::MatrixXd s = sample_gmrf(kronecker(ar1_precision(rho, years), qs), 2000, 4);
  const auto nm = static_cast<Eigen::Index>(m.vertex_count());
  Eigen::MatrixXd avg(years, s.cols());
  for (int y = 0; y < years; ++y) avg.row(y) = s.middleRows(y * nm, nm).colwise().mean();
  const Eigen::MatrixXd c = sample_covariance(avg);
  EXPECT_NEAR(c(0, 1) / std::sqrt(c(0, 0) * c(1, 1)), rho, 0.1);
  EXPECT_NEAR(c(1, 2) / std::sqrt(c(1, 1) * c(2, 2)), rho, 0.1);
}

TEST(Simulate, VeryNegativeInterceptGivesNoEvents) {
  const SimDataset d = simulate_dataset(plain(-40.0, 1));
  EXPECT_EQ(d.records.size(), 100u * 24u);
  for (const auto& r : d.records) EXPECT_EQ(r.count, 0);
}

TEST(Simulate, ZeroPredictorMeanCountIsExposure) {
  const SimDataset d = simulate_dataset(plain(0.0, 2));
  const int n = static_cast<int>(d.records.size());
  std::vector<int> hist(11, 0);
  double sum = 0.0;
  for (const auto& r : d.records) {
    sum += static_cast<double>(r.count);
    ++hist[static_cast<std::size_t>(std::min<long>(r.count, 10))];
  }
  EXPECT_NEAR(sum / n, 4.0, 4.0 * std::sqrt(4.0 / n));
  // chi-square goodness of fit against Poisson(4), classes 0..9 and 10+
  double chi2 = 0.0, tail = 1.0, pk = std::exp(-4.0);
  for (int k = 0; k < 10; ++k) {
    const double e = n * pk;
    chi2 += (hist[static_cast<std::size_t>(k)] - e) * (hist[static_cast<std::size_t>(k)] - e) / e;
    tail -= pk;
    pk *= 4.0 / (k + 1);
  }
  chi2 += (hist[10] - n * tail) * (hist[10] - n * tail) / (n * tail);
  EXPECT_LT(chi2, 23.21);  // 0.99 quantile, 10 degrees of freedom
}

TEST(Simulate, CalibratedSparsity) {
  SimConfig c = plain(0.0, 3);
  c.n_rows = c.n_cols = 30;
  c.years = 10;
  c.covariates = {{"elev", CovariateKind::white_noise, false, 0.0, 0.0}};
  c.beta = {0.0, 0.5};
  const SimDataset base = simulate_dataset(c);
  const double shift = intercept_shift_for_zero_fraction(base.truth.eta, 4.0, 0.995);
  c.beta[0] += shift;
  const SimDataset d = simulate_dataset(c);
  const double zeros = static_cast<double>(std::count_if(d.records.begin(), d.records.end(),
                                                         [](const CountRecord& r) { return r.count == 0; }));
  EXPECT_GE(zeros / static_cast<double>(d.records.size()), 0.99);
}

TEST(Simulate, ReproducibleAndSeedSensitive) {
  const SimDataset a = fixtures::small_dataset(ModelVariant::ar1_yearly, 2, 7);
  const SimDataset b = fixtures::small_dataset(ModelVariant::ar1_yearly, 2, 7);
  const SimDataset c = fixtures::small_dataset(ModelVariant::ar1_yearly, 2, 8);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) EXPECT_EQ(a.records[i].count, b.records[i].count);
  EXPECT_EQ(a.truth.eta, b.truth.eta);
  EXPECT_NE(a.truth.eta, c.truth.eta);
}

TEST(Simulate, TruthIsConsistentWithPredictor) {
  const SimDataset d = fixtures::small_dataset(ModelVariant::independent_yearly, 2, 9);
  ASSERT_EQ(d.truth.spatial.cols(), 2);
  ASSERT_EQ(static_cast<std::size_t>(d.truth.eta.size()), d.records.size());
  // eta = X beta + f(month) + W(cell, year) with raw covariates
  const auto& cov = d.covariates;
  for (std::size_t i = 0; i < d.records.size(); i += 13) {
    const auto& r = d.records[i];
    double eta = d.truth.beta[0];
    std::size_t j = 1;
    eta += d.truth.beta[j++] * cov.dynamic_value(r.cell_id, r.month, 0);  // time
    eta += d.truth.beta[j++] * cov.static_value(r.cell_id, 0);
    eta += d.truth.beta[j++] * cov.dynamic_value(r.cell_id, r.month, 1);
    eta += d.truth.seasonal[static_cast<std::size_t>(calendar_month(r.month) - 1)];
    eta += d.truth.spatial(cov.cell_index(r.cell_id), year_index(r.month));
    EXPECT_NEAR(eta, d.truth.eta[static_cast<Eigen::Index>(i)], 1e-10);
  }
}

TEST(Simulate, OverflowAndMissingSeedRejected) {
  SimConfig c = plain(31.0, 1);
  EXPECT_THROW(simulate_dataset(c), DomainError);
  c = plain(0.0, 1);
  c.seed_set = false;
  EXPECT_THROW(simulate_dataset(c), ConfigError);
  c = plain(0.0, 1);
  c.beta = {0.0, 1.0};
  EXPECT_THROW(simulate_dataset(c), ConfigError);
}

TEST(Simulate, SubsampleRoundTripPreservesTotal) {
  const SimDataset d = fixtures::small_dataset(ModelVariant::shared_spatial, 3, 12);
  const auto sub = subsample_zero_months(d.records, 1);
  long before = 0, after = 0;
  for (const auto& r : d.records) before += r.count;
  for (const auto& r : sub) after += r.count;
  EXPECT_EQ(before, after);
}

TEST(TwoPeak, ShapeAndCentering) {
  const auto f = two_peak_seasonal(7, 3, 1.0);
  ASSERT_EQ(f.size(), 12u);
  EXPECT_NEAR(std::accumulate(f.begin(), f.end(), 0.0), 0.0, 1e-12);
  EXPECT_EQ(std::max_element(f.begin(), f.end()) - f.begin(), 6);
  EXPECT_GT(f[2], f[1]);
  EXPECT_GT(f[2], f[3]);
  EXPECT_GT(f[6], f[2]);
  EXPECT_THROW(two_peak_seasonal(7, 8, 1.0), ConfigError);
}

TEST(BruteForce, NormalizesAndMatchesConjugateCase) {
  CustomModelSpec s;
  s.family = Family::gaussian;
  s.response = Eigen::Vector3d(0.4, 1.1, 0.7);
  s.weight = Eigen::Vector3d(2.0, 2.0, 2.0);
  s.fixed_design = Eigen::MatrixXd::Ones(3, 1);
  s.priors.fixed_effect_precision = 0.5;
  const LatentModel m = LatentModel::custom(s);
  const auto b = brute_force_posterior(m, {Eigen::VectorXd()}, {{-8.0, 8.0, 4001}});
  EXPECT_NEAR(integrate_grid(b.latent_density[0], b.axes), 1.0, 1e-8);
  EXPECT_NEAR(b.theta_posterior[0], 1.0, 1e-15);
  // y ~ N(0, W^-1 + 1 1' / 0.5)
  Eigen::Matrix3d cov = Eigen::Matrix3d::Constant(2.0);
  cov.diagonal().array() += 0.5;
  const Eigen::LLT<Eigen::Matrix3d> llt(cov);
  const Eigen::Vector3d y = s.response;
  const double exact = -0.5 * y.dot(llt.solve(y)) - std::log(llt.matrixL().toDenseMatrix().diagonal().prod()) -
                       1.5 * std::log(2.0 * M_PI);
  EXPECT_NEAR(b.log_marginal[0], exact, 1e-6);
}

TEST(BruteForce, RefusesLargeModels) {
  CustomModelSpec s;
  s.response = Eigen::VectorXd::Zero(2);
  s.weight = Eigen::VectorXd::Ones(2);
  s.fixed_design = Eigen::MatrixXd::Ones(2, 4);
  const LatentModel m = LatentModel::custom(s);
  EXPECT_THROW(brute_force_posterior(m, {Eigen::VectorXd()}, std::vector<LatentAxis>(4)), ConfigError);
}

TEST(Stations, SimulatedSeriesShape) {
  const auto model = VariogramModel::separable({0.562, 60.0, 0.438}, {0.8, 3.0, 0.2}, 0.019);
  const StationData d = simulate_stations(model, {{0, 0}, {30, 10}, {50, 60}}, 24, 1.0, 5);
  EXPECT_EQ(d.stations.size(), 3u);
  EXPECT_EQ(d.month_count(), 24);
  EXPECT_NO_THROW(d.validate());
}
