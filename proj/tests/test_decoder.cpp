#include "mmi/decoder.hpp"
#include "mmi/harness.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

using namespace mmi;
using namespace mmi::decoder;

namespace {

struct Binary {
  Matrix x;
  std::vector<int> labels;
};

Binary two_gaussians(int n_plus, int n_minus, double mean_plus, double mean_minus, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Binary b{Matrix(n_plus + n_minus, 1), {}};
  for (int i = 0; i < n_plus + n_minus; ++i) {
    const bool plus = i < n_plus;
    b.x(i, 0) = (plus ? mean_plus : mean_minus) + d(rng);
    b.labels.push_back(plus ? 1 : -1);
  }
  return b;
}

double accuracy(const BinaryKdeClassifier& clf, const Binary& test) {
  int hits = 0;
  for (Eigen::Index i = 0; i < test.x.rows(); ++i)
    hits += classify_binary(clf, test.x.row(i).transpose()).label == test.labels[static_cast<std::size_t>(i)];
  return static_cast<double>(hits) / static_cast<double>(test.x.rows());
}

double naive_log_kde(const density::KdeModel& m, double y) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < m.centers.rows(); ++i) {
    const double z = (y - m.centers(i, 0)) / m.bandwidth[0];
    s += std::exp(-0.5 * z * z) / (m.bandwidth[0] * std::sqrt(2.0 * std::numbers::pi));
  }
  return std::log(s / static_cast<double>(m.centers.rows()));
}

HierarchicalDecoder manual_decoder(const std::vector<int>& order, const std::vector<double>& p_plus) {
  HierarchicalDecoder dec;
  dec.hierarchy.order = order;
  dec.class_priors.assign(order.size(), 1.0 / static_cast<double>(order.size()));
  for (double p : p_plus) {
    LevelModel level;
    level.p_plus = p;
    dec.levels.push_back(level);
  }
  return dec;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = i;
  return r;
}

}  // namespace

TEST(BinaryKde, SeparatedGaussians) {
  const auto train = two_gaussians(200, 200, 5.0, -5.0, 1);
  const auto test = two_gaussians(500, 500, 5.0, -5.0, 2);
  EXPECT_GE(accuracy(fit_binary_kde(train.x, train.labels), test), 0.99);
}

TEST(BinaryKde, IdenticalDistributionsAtChance) {
  const auto train = two_gaussians(500, 500, 0.0, 0.0, 3);
  const auto test = two_gaussians(2000, 2000, 0.0, 0.0, 4);
  EXPECT_NEAR(accuracy(fit_binary_kde(train.x, train.labels), test), 0.5, 0.05);
}

TEST(BinaryKde, PriorsAndPreconditions) {
  const auto train = two_gaussians(30, 70, 1.0, -1.0, 5);
  EXPECT_DOUBLE_EQ(fit_binary_kde(train.x, train.labels, true).prior_plus, 0.5);
  EXPECT_DOUBLE_EQ(fit_binary_kde(train.x, train.labels, false).prior_plus, 0.3);
  const std::vector<int> one_class(100, 1);
  EXPECT_THROW(fit_binary_kde(train.x, one_class), InvalidArgument);
}

TEST(ClassifyBinary, DominantLikelihoodAndTie) {
  BinaryKdeClassifier clf;
  clf.plus = {Matrix::Constant(1, 1, 2.0), Vector::Ones(1)};
  clf.minus = {Matrix::Constant(1, 1, -2.0), Vector::Ones(1)};
  EXPECT_EQ(classify_binary(clf, Vector::Constant(1, 2.0)).label, 1);
  EXPECT_EQ(classify_binary(clf, Vector::Constant(1, -1.0)).label, -1);
  EXPECT_EQ(classify_binary(clf, Vector::Constant(1, 0.0)).label, 1);
  EXPECT_THROW(classify_binary(clf, Vector::Zero(2)), InvalidArgument);
}

TEST(ClassifyBinary, SkewedPriorsMatchGridOracle) {
  const auto train = two_gaussians(180, 20, 1.0, -1.0, 6);
  const auto skewed = fit_binary_kde(train.x, train.labels, false);
  const auto uniform = fit_binary_kde(train.x, train.labels, true);
  EXPECT_NEAR(skewed.prior_plus, 0.9, 1e-12);
  double boundary_skewed = 0.0, boundary_uniform = 0.0;
  for (double y = -4.0; y <= 4.0; y += 0.01) {
    const double lp = naive_log_kde(skewed.plus, y), lm = naive_log_kde(skewed.minus, y);
    const double a = std::log(0.9) + lp, b = std::log(0.1) + lm;
    const double norm = std::max(a, b) + std::log(std::exp(a - std::max(a, b)) + std::exp(b - std::max(a, b)));
    const auto dec = classify_binary(skewed, Vector::Constant(1, y));
    EXPECT_EQ(dec.label, a >= b ? 1 : -1) << y;
    EXPECT_NEAR(dec.log_post_plus, a - norm, 1e-9) << y;
    EXPECT_NEAR(dec.log_post_minus, b - norm, 1e-9) << y;
    if (dec.label == -1) boundary_skewed = y;
    if (classify_binary(uniform, Vector::Constant(1, y)).label == -1) boundary_uniform = y;
  }
  // the last -1 decision moves toward the rare class
  EXPECT_LT(boundary_skewed, boundary_uniform);
}

TEST(TransitionPriors, Examples) {
  const auto h = dataset::Hierarchy::identity(4);
  const std::vector<double> uniform(4, 0.25);
  const auto p = transition_priors(h, uniform);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_NEAR(p[0], 1.0 / 4.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[2], 1.0 / 2.0, 1e-15);
  const std::vector<double> two{0.35, 0.65};
  EXPECT_NEAR(transition_priors(dataset::Hierarchy::identity(2), two)[0], 0.35, 1e-15);
  const std::vector<double> skew{0.7, 0.1, 0.1, 0.1};
  const auto q = transition_priors(h, skew);
  EXPECT_NEAR(q[0], 0.7, 1e-15);
  EXPECT_NEAR(q[1], 1.0 / 3.0, 1e-12);
  const std::vector<double> dead{1.0, 0.0, 0.0, 0.0};
  EXPECT_THROW(transition_priors(h, dead), InvalidArgument);
}

TEST(PathScores, EnumerationOracle) {
  const std::vector<int> order{3, 1, 4, 2};
  const std::vector<double> p{0.25, 1.0 / 3.0, 0.5};
  const auto dec = manual_decoder(order, p);
  const std::vector<double> lp{-1.2, -0.4, -2.5}, lm{-0.9, -3.1, -0.2};
  const auto r = decode_scores(dec, lp, lm);
  // path of the class at position k: -1 through levels < k, then +1 at k
  for (int k = 0; k < 4; ++k) {
    double s = 0.0;
    for (int l = 0; l < k; ++l) s += lm[static_cast<std::size_t>(l)] + std::log(1.0 - p[static_cast<std::size_t>(l)]);
    if (k < 3) s += lp[static_cast<std::size_t>(k)] + std::log(p[static_cast<std::size_t>(k)]);
    EXPECT_NEAR(r.scores[static_cast<std::size_t>(order[static_cast<std::size_t>(k)] - 1)], s, 1e-10);
  }
  // the first class only sees level 1
  auto lp2 = lp, lm2 = lm;
  lp2[1] += 5.0;
  lm2[2] -= 7.0;
  EXPECT_EQ(decode_scores(dec, lp2, lm2).scores[2], r.scores[2]);
  int best = 0;
  for (int c = 1; c < 4; ++c)
    if (r.scores[static_cast<std::size_t>(c)] > r.scores[static_cast<std::size_t>(best)]) best = c;
  EXPECT_EQ(r.label, best + 1);
}

TEST(PathScores, SharedLevelShift) {
  const auto dec = manual_decoder({1, 2, 3, 4}, {0.25, 1.0 / 3.0, 0.5});
  const std::vector<double> lp{-1.0, -2.0, -0.5}, lm{-0.7, -1.4, -2.2};
  const auto base = decode_scores(dec, lp, lm);
  for (std::size_t level = 0; level < 3; ++level) {
    auto a = lp, b = lm;
    a[level] += 3.5;
    b[level] += 3.5;
    const auto shifted = decode_scores(dec, a, b);
    for (std::size_t c = 0; c < 4; ++c)
      EXPECT_NEAR(shifted.scores[c] - base.scores[c], c >= level ? 3.5 : 0.0, 1e-12);
  }
}

TEST(PathScores, PriorMassesPartition) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int classes = 2; classes <= 6; ++classes) {
    std::vector<double> priors;
    double total = 0.0;
    for (int c = 0; c < classes; ++c) total += priors.emplace_back(u(rng));
    for (double& p : priors) p /= total;
    const auto h = dataset::Hierarchy::identity(classes);
    const auto p = transition_priors(h, priors);
    const std::vector<double> zero(static_cast<std::size_t>(classes - 1), 0.0);
    const auto s = path_scores(zero, zero, p);
    double mass = 0.0;
    for (int c = 0; c < classes; ++c) {
      EXPECT_NEAR(std::exp(s[static_cast<std::size_t>(c)]), priors[static_cast<std::size_t>(c)], 1e-12);
      mass += std::exp(s[static_cast<std::size_t>(c)]);
    }
    EXPECT_NEAR(mass, 1.0, 1e-12);
  }
}

TEST(PathScores, TiesGoToEarlierClass) {
  const auto dec = manual_decoder({2, 1}, {0.5});
  const std::vector<double> lp{-1.0}, lm{-1.0};
  EXPECT_EQ(decode_scores(dec, lp, lm).label, 2);
}

TEST(Hierarchical, TwoClassesEqualBinaryClassifier) {
  const auto data = two_gaussians(80, 80, 1.0, -1.0, 8);
  dataset::LabeledFeatures f;
  f.x = data.x;
  for (int l : data.labels) f.labels.push_back(l == 1 ? 1 : 2);
  f.class_count = 2;
  const auto config = pipeline_preset("fbcsp", true, 1);
  const auto dec = fit_hierarchical(f, dataset::Hierarchy::identity(2), config);
  ASSERT_EQ(dec.levels.size(), 1u);
  const auto& clf = dec.levels[0].classifier;
  for (double y = -3.0; y <= 3.0; y += 0.25) {
    const Vector v = Vector::Constant(1, y);
    const auto r = decode_features(dec, v);
    const auto b = classify_binary(clf, v);
    EXPECT_EQ(r.label, b.label == 1 ? 1 : 2);
    EXPECT_NEAR(r.scores[0] - r.scores[1], b.log_post_plus - b.log_post_minus, 1e-12);
  }
}

TEST(Hierarchical, FourClassLevelsAndAccuracy) {
  const auto train = *harness::make_preset("fourclass", 1).epochs;
  const auto test = *harness::make_preset("fourclass", 2).epochs;
  const auto h = dataset::Hierarchy::identity(4);

  const auto lint = fit_hierarchical(train, h, pipeline_preset("mmi_lint", false, 1));
  ASSERT_EQ(lint.levels.size(), 3u);
  for (const auto& level : lint.levels) {
    ASSERT_TRUE(level.reduction.fit.has_value());
    const auto& m = std::get<transform::LinearTransform>(level.reduction.fit->transform).m;
    EXPECT_EQ(m.rows(), 2);
    EXPECT_EQ(m.cols(), 24);
    EXPECT_EQ(level.classifier.dims(), 2);
  }
  int hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) hits += decode(lint, test.trials[i]).label == test.labels[i];
  EXPECT_GE(static_cast<double>(hits) / static_cast<double>(test.size()), 0.95);

  const auto csp = fit_hierarchical(train, h, pipeline_preset("csp", false, 1));
  ASSERT_EQ(csp.levels.size(), 3u);
  for (const auto& level : csp.levels) EXPECT_EQ(level.classifier.dims(), 6);
}

TEST(Hierarchical, ErrorsAndGeometry) {
  auto train = *harness::make_preset("fourclass", 3).epochs;
  const auto config = pipeline_preset("csp", false, 1);
  const auto dec = fit_hierarchical(train, dataset::Hierarchy::identity(4), config);
  EXPECT_THROW(decode(dec, Matrix::Zero(train.channels() + 1, train.samples())), InvalidArgument);
  std::vector<Matrix> trials;
  std::vector<int> labels;
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train.labels[i] != 3) {
      trials.push_back(train.trials[i]);
      labels.push_back(train.labels[i]);
    }
  train.trials = trials;
  train.labels = labels;
  EXPECT_THROW(fit_hierarchical(train, dataset::Hierarchy::identity(4), config), InvalidArgument);
}

TEST(Hierarchical, JsonRoundTrip) {
  const auto data = *harness::make_preset("jointpair", 2).features;
  auto config = pipeline_preset("mmi_lint", true, 1);
  config.train.epochs = 2;
  const auto dec = fit_hierarchical(data, dataset::Hierarchy::identity(2), config);
  const auto path = std::filesystem::temp_directory_path() / "mmi_decoder_roundtrip.json";
  save_decoder(dec, path);
  const auto back = load_decoder(path);
  std::filesystem::remove(path);
  EXPECT_EQ(fit_hash(back), fit_hash(dec));
  const SampleSource src{nullptr, &data.x};
  const auto rows = all_rows(data.size());
  EXPECT_EQ(predict(back, src, rows), predict(dec, src, rows));
  for (std::size_t i = 0; i < 20; ++i)
    EXPECT_EQ(decode_features(back, data.x.row(static_cast<Eigen::Index>(i)).transpose()).scores,
              decode_features(dec, data.x.row(static_cast<Eigen::Index>(i)).transpose()).scores);
}
