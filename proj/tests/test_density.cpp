#include "mmi/density.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace mmi;
using namespace mmi::density;

namespace {

double normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

// I(Y; C) for two equiprobable unit-variance Gaussians at -sep/2 and +sep/2,
// by trapezoidal integration.
double gaussian_pair_mi(double sep) {
  const double lo = -sep / 2.0 - 12.0, hi = sep / 2.0 + 12.0;
  const int n = 200000;
  const double h = (hi - lo) / n;
  double total = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double y = lo + h * i;
    const double p1 = normal_pdf(y, -sep / 2.0, 1.0), p2 = normal_pdf(y, sep / 2.0, 1.0);
    const double p = 0.5 * (p1 + p2);
    double term = 0.0;
    if (p1 > 0.0) term += 0.5 * p1 * std::log(p1 / p);
    if (p2 > 0.0) term += 0.5 * p2 * std::log(p2 / p);
    total += (i == 0 || i == n ? 0.5 : 1.0) * term;
  }
  return total * h;
}

dataset::LabeledFeatures gaussian_pair(double sep, int per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  dataset::LabeledFeatures f;
  f.x.resize(2 * per_class, 1);
  for (int i = 0; i < 2 * per_class; ++i) {
    const int label = i < per_class ? 1 : 2;
    f.x(i, 0) = (label == 1 ? -sep / 2.0 : sep / 2.0) + d(rng);
    f.labels.push_back(label);
  }
  return f;
}

double naive_logpdf(const KdeModel& m, const Vector& y) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < m.centers.rows(); ++i) {
    double k = 1.0;
    for (Eigen::Index j = 0; j < m.centers.cols(); ++j) k *= normal_pdf(y[j], m.centers(i, j), m.bandwidth[j]);
    sum += k;
  }
  return std::log(sum / static_cast<double>(m.centers.rows()));
}

}  // namespace

TEST(Silverman, OneDimensionUnitStd) {
  Matrix s(100, 1);
  for (int i = 0; i < 100; ++i) s(i, 0) = i % 2 == 0 ? 1.0 : -1.0;
  // sample std of the alternating +-1 column
  const double sd = std::sqrt(100.0 / 99.0);
  const Vector bw = silverman_bandwidth(s);
  EXPECT_NEAR(bw[0], sd * std::pow(4.0 / 300.0, 0.2), 1e-12);
  EXPECT_NEAR(bw[0] / sd, 0.4216, 1e-4);
}

TEST(Silverman, TwoDimensionsScaleWithStd) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d;
  Matrix s(100, 2);
  for (int i = 0; i < 100; ++i) {
    s(i, 0) = d(rng);
    s(i, 1) = 2.0 * d(rng);
  }
  const Vector bw = silverman_bandwidth(s);
  const double factor = std::pow(4.0 / 400.0, 1.0 / 6.0);
  EXPECT_NEAR(factor, 0.4642, 1e-4);
  for (int j = 0; j < 2; ++j) {
    const Vector c = s.col(j).array() - s.col(j).mean();
    const double sd = std::sqrt(c.squaredNorm() / 99.0);
    EXPECT_NEAR(bw[j], sd * factor, 1e-12);
  }
}

TEST(Silverman, ConstantDimensionFloor) {
  Matrix s(10, 3);
  for (int i = 0; i < 10; ++i) {
    s(i, 0) = i;
    s(i, 1) = 5.0;
    s(i, 2) = 2.0 * i;
  }
  const Vector bw = silverman_bandwidth(s);
  const double s0 = std::sqrt(((s.col(0).array() - 4.5).square().sum()) / 9.0);
  EXPECT_NEAR(bw[1], 1e-3 * 1.5 * s0, 1e-12);
  EXPECT_GT(bw[1], 0.0);
  const Vector all_constant = silverman_bandwidth(Matrix::Constant(10, 2, 3.0));
  EXPECT_DOUBLE_EQ(all_constant[0], 1e-3);
  EXPECT_DOUBLE_EQ(all_constant[1], 1e-3);
}

TEST(KdeLogpdf, Examples) {
  KdeModel single{Matrix::Zero(1, 1), Vector::Ones(1)};
  EXPECT_NEAR(kde_logpdf(single, Vector::Zero(1)), -0.918938533204673, 1e-12);
  KdeModel pair{Matrix(2, 1), Vector::Ones(1)};
  pair.centers << -1.0, 1.0;
  EXPECT_NEAR(kde_logpdf(pair, Vector::Zero(1)), std::log(normal_pdf(1.0, 0.0, 1.0)), 1e-12);
  EXPECT_NEAR(kde_logpdf(pair, Vector::Zero(1)), -1.4189, 1e-4);
  const double far = kde_logpdf(single, Vector::Constant(1, 100.0));
  EXPECT_TRUE(std::isfinite(far));
  EXPECT_NEAR(far, -0.918938533204673 - 5000.0, 1e-9);
  EXPECT_THROW(kde_logpdf(single, Vector::Zero(2)), InvalidArgument);
}

TEST(KdeLogpdf, MatchesNaiveSum) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> d;
  std::uniform_real_distribution<double> u(0.3, 2.0);
  for (int rep = 0; rep < 20; ++rep) {
    const int m = 1 + rep * 5, dims = 1 + rep % 4;
    KdeModel model{Matrix(m, dims), Vector(dims)};
    for (Eigen::Index i = 0; i < model.centers.size(); ++i) model.centers.data()[i] = d(rng);
    for (int j = 0; j < dims; ++j) model.bandwidth[j] = u(rng);
    Vector y(dims);
    for (int j = 0; j < dims; ++j) y[j] = d(rng);
    const double naive = naive_logpdf(model, y);
    EXPECT_NEAR(kde_logpdf(model, y), naive, 1e-10 * std::abs(naive));
  }
}

TEST(KdeLogpdf, ExcludingDropsOneCenter) {
  KdeModel model{Matrix(3, 1), Vector::Ones(1)};
  model.centers << -1.0, 0.5, 2.0;
  KdeModel reduced{Matrix(2, 1), Vector::Ones(1)};
  reduced.centers << -1.0, 2.0;
  const Vector y = Vector::Constant(1, 0.3);
  EXPECT_NEAR(kde_logpdf_excluding(model, y, 1), kde_logpdf(reduced, y), 1e-12);
  EXPECT_DOUBLE_EQ(kde_logpdf_excluding(model, y, -1), kde_logpdf(model, y));
}

TEST(KdeLogpdf, GradientMatchesFiniteDifference) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d;
  KdeModel model{Matrix(15, 3), Vector(3)};
  for (Eigen::Index i = 0; i < model.centers.size(); ++i) model.centers.data()[i] = d(rng);
  model.bandwidth << 0.5, 0.8, 1.2;
  for (int rep = 0; rep < 10; ++rep) {
    Vector y(3);
    for (int j = 0; j < 3; ++j) y[j] = d(rng);
    for (Eigen::Index skip : {Eigen::Index{-1}, Eigen::Index{4}}) {
      const Vector g = kde_logpdf_gradient(model, y, skip);
      for (int j = 0; j < 3; ++j) {
        Vector a = y, b = y;
        const double h = 1e-6;
        a[j] += h;
        b[j] -= h;
        const double fd = (kde_logpdf_excluding(model, a, skip) - kde_logpdf_excluding(model, b, skip)) / (2 * h);
        EXPECT_NEAR(g[j], fd, 1e-6 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST(StochasticMi, SymmetricPointIsZero) {
  const std::vector<double> lp{std::log(0.5), std::log(0.5)};
  const std::vector<double> ll{-2.3, -2.3};
  EXPECT_NEAR(stochastic_mi_from_loglik(lp, ll), 0.0, 1e-12);
}

TEST(StochasticMi, DeepInOneClassApproachesLog2) {
  const std::vector<double> lp{std::log(0.5), std::log(0.5)};
  const std::vector<double> ll{-1.0, -900.0};
  EXPECT_NEAR(stochastic_mi_from_loglik(lp, ll), std::log(2.0), 1e-12);

  ClassDensities cd;
  cd.labels = {1, 2};
  cd.priors = {0.5, 0.5};
  cd.models = {KdeModel{Matrix::Constant(1, 1, -10.0), Vector::Ones(1)},
               KdeModel{Matrix::Constant(1, 1, 10.0), Vector::Ones(1)}};
  EXPECT_NEAR(stochastic_mi(Vector::Constant(1, -10.0), cd), std::log(2.0), 1e-9);
}

TEST(StochasticMi, SingleClassIsZero) {
  const std::vector<double> lp{0.0};
  for (double l : {-5.0, 0.0, 3.0}) {
    const std::vector<double> ll{l};
    EXPECT_NEAR(stochastic_mi_from_loglik(lp, ll), 0.0, 1e-12);
  }
}

TEST(StochasticMi, PermutationSymmetric) {
  const std::vector<double> lp{std::log(0.2), std::log(0.3), std::log(0.5)};
  const std::vector<double> ll{-1.5, -0.2, -3.0};
  const double base = stochastic_mi_from_loglik(lp, ll);
  std::vector<int> idx{0, 1, 2};
  while (std::next_permutation(idx.begin(), idx.end())) {
    std::vector<double> p2, l2;
    for (int i : idx) {
      p2.push_back(lp[static_cast<std::size_t>(i)]);
      l2.push_back(ll[static_cast<std::size_t>(i)]);
    }
    EXPECT_NEAR(stochastic_mi_from_loglik(p2, l2), base, 1e-12);
  }
}

TEST(StochasticMi, MatchesLinearDomainFormula) {
  const std::vector<double> lp{std::log(0.25), std::log(0.75)};
  const std::vector<double> ll{-0.7, -1.9};
  const double p1 = std::exp(ll[0]), p2 = std::exp(ll[1]);
  const double mix = 0.25 * p1 + 0.75 * p2;
  const double expected = -std::log(mix) + (0.25 * p1 / mix) * ll[0] + (0.75 * p2 / mix) * ll[1];
  EXPECT_NEAR(stochastic_mi_from_loglik(lp, ll), expected, 1e-12);
}

TEST(AverageMi, IdenticalDistributionNull) {
  const auto f = gaussian_pair(0.0, 500, 4);
  EXPECT_LE(std::abs(average_mi(f)), 0.05);
}

TEST(AverageMi, ShuffledLabelNull) {
  auto f = gaussian_pair(4.0, 500, 5);
  std::mt19937_64 rng(6);
  std::shuffle(f.labels.begin(), f.labels.end(), rng);
  EXPECT_LE(std::abs(average_mi(f)), 0.08);
}

TEST(AverageMi, QuadratureOracle) {
  for (double sep : {0.0, 1.0, 2.0, 4.0, 10.0, 20.0}) {
    const auto f = gaussian_pair(sep, 500, 7 + static_cast<std::uint64_t>(sep));
    const double oracle = gaussian_pair_mi(sep);
    EXPECT_NEAR(average_mi(f), oracle, 0.05) << "separation " << sep;
  }
  EXPECT_NEAR(gaussian_pair_mi(20.0), std::log(2.0), 1e-9);
  EXPECT_NEAR(gaussian_pair_mi(0.0), 0.0, 1e-12);
}

TEST(AverageMi, LeaveOneOutNeedsTwoPerClass) {
  Matrix x(3, 1);
  x << 0.0, 1.0, 2.0;
  const std::vector<int> labels{1, 1, 2};
  EXPECT_THROW(average_mi(x, labels), InvalidArgument);
  EXPECT_NO_THROW(average_mi(x, labels, HeldOut::off));
  const std::vector<int> one_class{1, 1, 1};
  EXPECT_THROW(average_mi(x, one_class), InvalidArgument);
}

TEST(AverageMi, ParallelMatchesSerialExactly) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> d;
  Matrix x(300, 3);
  std::vector<int> labels;
  for (int i = 0; i < 300; ++i) {
    labels.push_back(1 + i % 3);
    for (int j = 0; j < 3; ++j) x(i, j) = d(rng) + (j == 0 ? labels.back() : 0.0);
  }
  for (auto mode : {HeldOut::off, HeldOut::leave_one_out})
    EXPECT_EQ(average_mi(x, labels, mode), average_mi_serial(x, labels, mode));
}

TEST(LabelEntropy, Examples) {
  EXPECT_NEAR(label_entropy(std::vector<double>{0.5, 0.5}), std::log(2.0), 1e-12);
  EXPECT_NEAR(label_entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}), std::log(4.0), 1e-12);
  EXPECT_EQ(label_entropy(std::vector<double>{1.0, 0.0}), 0.0);
}

TEST(ErrorBounds, Examples) {
  const std::vector<double> uniform{0.5, 0.5};
  const auto zero = error_bounds(0.0, uniform);
  EXPECT_NEAR(zero.upper, std::log(2.0) / 2.0, 1e-12);
  EXPECT_NEAR(zero.upper, 0.3466, 1e-4);
  EXPECT_EQ(zero.lower, 0.0);
  const auto perfect = error_bounds(std::log(2.0), uniform);
  EXPECT_NEAR(perfect.upper, 0.0, 1e-12);
  EXPECT_EQ(perfect.lower, 0.0);
  const auto partial = error_bounds(0.2, uniform);
  EXPECT_NEAR(partial.upper, 0.2466, 1e-4);
  EXPECT_EQ(partial.lower, 0.0);
}

TEST(ErrorBounds, UpperNeverBelowLowerForBinaryPriors) {
  for (double p1 : {0.5, 0.3, 0.1, 0.01}) {
    const std::vector<double> p{p1, 1.0 - p1};
    for (double mi = -0.5; mi < 2.0; mi += 0.01) {
      const auto b = error_bounds(mi, p);
      EXPECT_GE(b.upper, b.lower);
      EXPECT_GE(b.lower, 0.0);
      EXPECT_LE(b.upper, 1.0);
    }
  }
}

TEST(EmpiricalPriors, SortedLabelOrder) {
  const std::vector<int> labels{3, 1, 1, 3, 3, 2};
  const auto p = empirical_priors(labels);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_DOUBLE_EQ(p[0], 2.0 / 6.0);
  EXPECT_DOUBLE_EQ(p[1], 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(p[2], 3.0 / 6.0);
}
