#include "mmi/harness.hpp"

#include <gtest/gtest.h>

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <random>

using namespace mmi;
using namespace mmi::harness;
using nlohmann::json;

namespace {

RunConfig config_for(const std::string& pipeline, int k, int repeats) {
  RunConfig c;
  c.data.preset = "fourclass";
  c.data.preset_seed = 1;
  c.pipeline = json{{"name", pipeline}};
  c.cv = CvSettings{k, repeats, 1};
  c.seed = 1;
  return c;
}

Dataset oscillatory(int trials_per_class, double amplitude, double noise, std::uint64_t seed) {
  dataset::OscillatorySpec spec;
  spec.channels = 8;
  spec.fs = 250.0;
  spec.duration_s = 2.0;
  spec.trials_per_class = trials_per_class;
  spec.noise_sigma = noise;
  spec.classes = {{10.0, {{0, amplitude}}}, {14.0, {{2, amplitude}}}, {19.0, {{4, amplitude}}}, {26.0, {{6, amplitude}}}};
  Dataset d;
  d.epochs = dataset::synth_oscillatory_epochs(spec, seed);
  return d;
}

}  // namespace

TEST(ConfusionMatrix, Examples) {
  const std::vector<int> truth{1, 1, 1, 1, 2, 2, 3, 3};
  EXPECT_EQ(confusion_matrix(truth, truth, 3), Matrix(Matrix::Identity(3, 3)));
  const std::vector<int> ones(8, 1);
  const Matrix all_one = confusion_matrix(truth, ones, 3);
  EXPECT_EQ(all_one.col(0), Vector(Vector::Ones(3)));
  EXPECT_EQ(all_one.rightCols(2).cwiseAbs().maxCoeff(), 0.0);
  const std::vector<int> half{1, 2, 1, 3, 2, 2, 3, 3};
  const Matrix c = confusion_matrix(truth, half, 3);
  EXPECT_DOUBLE_EQ(c(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(c(0, 1), 0.25);
  for (Eigen::Index r = 0; r < 3; ++r) EXPECT_NEAR(c.row(r).sum(), 1.0, 1e-12);
  const std::vector<int> shorter{1, 2};
  EXPECT_THROW(confusion_matrix(truth, shorter, 3), InvalidArgument);
  const std::vector<int> missing{1, 1, 2};
  EXPECT_EQ(confusion_matrix(missing, missing, 3).row(2).sum(), 0.0);
}

TEST(PairedTTest, DegenerateInputs) {
  const std::vector<double> a{0.5, 0.6, 0.7};
  EXPECT_THROW(paired_ttest(a, a), InvalidArgument);
  const std::vector<double> b{-0.5, -0.4, -0.3};
  EXPECT_THROW(paired_ttest(a, b), InvalidArgument);
  const std::vector<double> one{1.0};
  EXPECT_THROW(paired_ttest(one, one), InvalidArgument);
  const std::vector<double> c{1.0, 2.0};
  EXPECT_THROW(paired_ttest(a, c), InvalidArgument);
}

TEST(PairedTTest, MatchesOracle) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d(0.5, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> a(9), b(9, 0.0);
    for (double& v : a) v = d(rng);
    const auto r = paired_ttest(a, b);
    double mean = 0.0;
    for (double v : a) mean += v / 9.0;
    double ss = 0.0;
    for (double v : a) ss += (v - mean) * (v - mean);
    const double t = mean / std::sqrt(ss / 8.0 / 9.0);
    const double p = 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(8.0), std::abs(t)));
    EXPECT_NEAR(r.t, t, 1e-12);
    EXPECT_EQ(r.df, 8);
    EXPECT_NEAR(r.p, p, 1e-6);
  }
}

TEST(RunConfigJson, Validation) {
  const json good = {{"data", {{"preset", "fourclass"}, {"seed", 1}}},
                     {"pipeline", "csp"},
                     {"seed", 1},
                     {"cv", {{"k", 5}, {"repeats", 5}, {"seed", 1}}}};
  const auto c = run_config_from_json(good);
  EXPECT_EQ(c.cv.k, 5);
  EXPECT_EQ(run_config_from_json(to_json(c)).cv.seed, 1u);

  auto no_seed = good;
  no_seed.erase("seed");
  EXPECT_THROW(run_config_from_json(no_seed), InvalidArgument);
  auto no_cv_seed = good;
  no_cv_seed["cv"].erase("seed");
  EXPECT_THROW(run_config_from_json(no_cv_seed), InvalidArgument);
  auto no_preset_seed = good;
  no_preset_seed["data"].erase("seed");
  EXPECT_THROW(run_config_from_json(no_preset_seed), InvalidArgument);
  auto bad_pipeline = good;
  bad_pipeline["pipeline"] = "lda";
  EXPECT_THROW(run_config_from_json(bad_pipeline), InvalidArgument);
  auto bad_k = good;
  bad_k["cv"]["k"] = 1;
  EXPECT_THROW(run_config_from_json(bad_k), InvalidArgument);
  EXPECT_THROW(make_preset("nope", 1), InvalidArgument);
}

TEST(RunCv, DeterministicReport) {
  const auto data = make_preset("fourclass", 4);
  const auto config = config_for("fbcsp", 3, 2);
  const auto a = run_cv(config, data), b = run_cv(config, data);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_EQ(a.folds.size(), 6u);
  for (Eigen::Index r = 0; r < a.confusion.rows(); ++r) EXPECT_NEAR(a.confusion.row(r).sum(), 1.0, 1e-9);
  EXPECT_FALSE(a.to_json().contains("wall_ms") && !a.to_json()["wall_ms"].is_null());
}

TEST(RunCv, ChanceLevelOnIdenticalClasses) {
  const auto data = oscillatory(40, 0.0, 1.0, 5);
  const auto report = run_cv(config_for("csp", 5, 5), data);
  EXPECT_NEAR(report.mean, 0.25, 0.06);
}

TEST(RunCv, NoTestLeakageFeatures) {
  const auto data = make_preset("jointpair", 6);
  RunConfig config = config_for("mmi_lint", 4, 1);
  config.pipeline["transform"] = json{{"epochs", 2}};
  const auto base = run_cv(config, data);
  const auto plan = dataset::stratified_kfold(data.labels(), 4, 1, config.cv.seed);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> d(0.0, 10.0);
  for (int fold = 0; fold < 4; ++fold) {
    Dataset noisy = data;
    for (std::size_t row : plan.test_indices(0, fold))
      for (Eigen::Index j = 0; j < noisy.features->x.cols(); ++j) noisy.features->x(static_cast<Eigen::Index>(row), j) = d(rng);
    const auto r = run_cv(config, noisy);
    EXPECT_EQ(r.folds[static_cast<std::size_t>(fold)].fit_hash, base.folds[static_cast<std::size_t>(fold)].fit_hash);
    for (int other = 0; other < 4; ++other) {
      if (other == fold) continue;
      EXPECT_NE(r.folds[static_cast<std::size_t>(other)].fit_hash, base.folds[static_cast<std::size_t>(other)].fit_hash);
    }
  }
}

TEST(RunCv, NoTestLeakageEpochs) {
  const auto data = make_preset("fourclass", 8);
  const auto config = config_for("fbcsp", 4, 1);
  const auto base = run_cv(config, data);
  const auto plan = dataset::stratified_kfold(data.labels(), 4, 1, config.cv.seed);
  Dataset noisy = data;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> d(0.0, 5.0);
  for (std::size_t row : plan.test_indices(0, 2)) {
    Matrix& trial = noisy.epochs->trials[row];
    for (Eigen::Index i = 0; i < trial.size(); ++i) trial.data()[i] = d(rng);
  }
  const auto r = run_cv(config, noisy);
  EXPECT_EQ(r.folds[2].fit_hash, base.folds[2].fit_hash);
  EXPECT_NE(r.folds[2].accuracy, 0.0);
}

TEST(CrossSession, SameDistributionMatchesWithinSession) {
  const auto a = oscillatory(40, 0.7, 1.0, 10), b = oscillatory(40, 0.7, 1.0, 11);
  const auto config = config_for("fbcsp", 5, 1);
  const auto within = run_cv(config, a);
  const auto cross = run_cross_session(a, b, config);
  ASSERT_EQ(cross.folds.size(), 2u);
  EXPECT_EQ(cross.folds[0].label, "train->test");
  EXPECT_EQ(cross.folds[1].label, "test->train");
  EXPECT_NEAR(cross.mean, within.mean, 0.05);
}

TEST(CrossSession, NoisierTargetDropsAccuracy) {
  const auto a = oscillatory(40, 0.7, 1.0, 12), b = oscillatory(40, 0.7, 3.0, 13);
  const auto config = config_for("fbcsp", 5, 1);
  const auto same = run_cross_session(a, oscillatory(40, 0.7, 1.0, 14), config);
  const auto shifted = run_cross_session(a, b, config);
  EXPECT_LT(shifted.folds[0].accuracy, same.folds[0].accuracy);
  EXPECT_EQ(shifted.folds.size(), 2u);
}

TEST(CrossSession, GeometryMismatch) {
  auto a = make_preset("fourclass", 15), b = make_preset("fourclass", 16);
  for (auto& t : b.epochs->trials) t.conservativeResize(t.rows() - 1, Eigen::NoChange);
  EXPECT_THROW(run_cross_session(a, b, config_for("csp", 5, 1)), InvalidArgument);
  const auto f = make_preset("jointpair", 1);
  EXPECT_THROW(run_cross_session(a, f, config_for("csp", 5, 1)), InvalidArgument);
}

TEST(Presets, Shapes) {
  const auto four = make_preset("fourclass", 1);
  EXPECT_EQ(four.class_count(), 4);
  EXPECT_EQ(four.epochs->channels(), 8);
  const auto joint = make_preset("jointpair", 1);
  EXPECT_EQ(joint.features->x.rows(), 400);
  EXPECT_EQ(joint.features->x.cols(), 24);
  const auto x = make_preset("xor", 1);
  EXPECT_EQ(x.class_count(), 2);
  EXPECT_EQ(make_preset("jointpair", 3).features->x, make_preset("jointpair", 3).features->x);
}

TEST(DatasetIo, PresetRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "mmi_harness_roundtrip";
  std::filesystem::remove_all(dir);
  const auto joint = make_preset("jointpair", 2);
  save_dataset(joint, dir);
  const auto back = load_dataset(dir);
  ASSERT_TRUE(back.feature_input());
  EXPECT_EQ(back.labels(), joint.labels());
  EXPECT_LE((back.features->x - joint.features->x).cwiseAbs().maxCoeff(), 1e-12);
  std::filesystem::remove_all(dir);
}
