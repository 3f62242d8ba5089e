#include <gtest/gtest.h>

#include <cmath>

#include "firelgcp/error.hpp"
#include "firelgcp/kriging.hpp"
#include "firelgcp/rng.hpp"

using namespace firelgcp;

namespace {

VariogramModel no_nugget() { return VariogramModel::product_sum({3.0, 25.0, 0.0}, {2.0, 3.0, 0.0}, 0.1); }

StationData noisy_stations(std::uint64_t seed, int stations, int months) {
  CounterRng r(seed);
  StationData d;
  d.variable = "X";
  for (int s = 0; s < stations; ++s) {
    StationSeries st{"S" + std::to_string(s), {100.0 * r.uniform(), 100.0 * r.uniform()}, {}};
    for (int t = 0; t < months; ++t) st.values.push_back(10.0 + r.normal());
    d.stations.push_back(st);
  }
  return d;
}

}  // namespace

TEST(Kriging, ExactAtDataPointWithoutNugget) {
  const StationData d = noisy_stations(1, 6, 10);
  const auto& st = d.stations[2];
  const KrigingResult r = krige(no_nugget(), d, {st.location}, {5});
  EXPECT_NEAR(r.prediction(0, 0), st.values[4], 1e-8);
  EXPECT_NEAR(r.variance(0, 0), 0.0, 1e-8);
}

TEST(Kriging, ConstantDataGivesConstant) {
  StationData d = noisy_stations(2, 5, 8);
  for (auto& s : d.stations) std::fill(s.values.begin(), s.values.end(), 4.5);
  const KrigingResult r = krige(no_nugget(), d, {{10, 10}, {55, 20}, {300, 300}}, {1, 4, 8});
  EXPECT_LT((r.prediction.array() - 4.5).abs().maxCoeff(), 1e-10);
}

TEST(Kriging, WeightsSumToOneAndVarianceNonnegative) {
  const StationData d = noisy_stations(3, 7, 12);
  std::vector<SpaceTimeObservation> obs;
  for (int t = 1; t <= 12; ++t)
    for (const auto& s : d.stations) obs.push_back({s.location, t, s.values[static_cast<std::size_t>(t - 1)]});
  const auto model = VariogramModel::product_sum({3.0, 25.0, 0.4}, {2.0, 3.0, 0.1}, 0.1);
  const OrdinaryKrigingSystem sys(model, obs);
  CounterRng r(4);
  for (int k = 0; k < 20; ++k) {
    const auto sol = sys.solve({120.0 * r.uniform() - 10.0, 120.0 * r.uniform() - 10.0}, 1 + static_cast<int>(r.below(14)));
    EXPECT_NEAR(sol.weights.sum(), 1.0, 1e-10);
    EXPECT_GE(sol.variance, 0.0);
  }
}

TEST(Kriging, OneDimensionalWeightsMatchDenseOracle) {
  // three stations on a line, one month, exponential covariance C(h) = s e^{-h/r}
  const double s = 2.0, range = 10.0;
  const auto model = VariogramModel::separable({1.0, range, 0.0}, {1.0, 5.0, 0.0}, s);
  const std::vector<double> xs{0.0, 4.0, 13.0};
  std::vector<SpaceTimeObservation> obs;
  for (std::size_t i = 0; i < xs.size(); ++i) obs.push_back({{xs[i], 0.0}, 1, static_cast<double>(i)});
  const OrdinaryKrigingSystem sys(model, obs);
  const double x0 = 7.0;
  const auto sol = sys.solve({x0, 0.0}, 1);

  Eigen::Matrix4d k;
  Eigen::Vector4d rhs;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) k(i, j) = s * std::exp(-std::fabs(xs[static_cast<std::size_t>(i)] - xs[static_cast<std::size_t>(j)]) / range);
    k(i, 3) = k(3, i) = 1.0;
    rhs[i] = s * std::exp(-std::fabs(xs[static_cast<std::size_t>(i)] - x0) / range);
  }
  k(3, 3) = 0.0;
  rhs[3] = 1.0;
  const Eigen::Vector4d w = k.fullPivLu().solve(rhs);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(sol.weights[i], w[i], 1e-10);
  EXPECT_NEAR(sol.lagrange, w[3], 1e-10);
}

TEST(Kriging, MissingValuesDropped) {
  StationData d = noisy_stations(5, 4, 6);
  d.stations[1].values[2] = std::nan("");
  const KrigingResult r = krige(no_nugget(), d, {d.stations[1].location}, {3});
  EXPECT_TRUE(std::isfinite(r.prediction(0, 0)));
  EXPECT_GT(r.variance(0, 0), 0.0);
}

TEST(Kriging, MonthWithoutObservationsRejected) {
  StationData d = noisy_stations(6, 3, 30);
  for (auto& s : d.stations)
    for (int t = 0; t < 30; ++t)
      if (t < 20) s.values[static_cast<std::size_t>(t)] = std::nan("");
  KrigingOptions o;
  o.time_window = 2;
  EXPECT_THROW(krige(no_nugget(), d, {{0, 0}}, {5}, o), ConfigError);
}

TEST(Kriging, SquareBackTransformIsNonnegative) {
  KrigingResult r;
  r.prediction = Eigen::MatrixXd(1, 3);
  r.prediction << -0.5, 0.0, 2.0;
  r.variance = Eigen::MatrixXd::Ones(1, 3);
  square_back_transform(r);
  EXPECT_DOUBLE_EQ(r.prediction(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(r.prediction(0, 2), 4.0);
  EXPECT_GE(r.prediction.minCoeff(), 0.0);
}
