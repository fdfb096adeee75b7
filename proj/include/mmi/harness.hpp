#pragma once

#include "mmi/common.hpp"
#include "mmi/dataset.hpp"
#include "mmi/decoder.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mmi::harness {

/// Either raw epochs or a feature matrix.
struct Dataset {
  std::optional<dataset::EpochSet> epochs;
  std::optional<dataset::LabeledFeatures> features;

  bool feature_input() const { return features.has_value(); }
  const std::vector<int>& labels() const;
  int class_count() const;
  std::size_t size() const { return labels().size(); }
};

/// Shipped synthetic data: fourclass, jointpair, xor.
Dataset make_preset(const std::string& name, std::uint64_t seed);
std::vector<std::string> preset_names();

/// Directory holding manifest.json/data.f32/labels.csv (epochs) or
/// features.csv/labels.csv (features).
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& data, const std::filesystem::path& dir);

struct DataSource {
  std::optional<std::filesystem::path> path;
  std::optional<std::string> preset;
  std::uint64_t preset_seed = 0;
};

struct CvSettings {
  int k = 5;
  int repeats = 5;
  std::uint64_t seed = 0;
};

struct RunConfig {
  DataSource data;
  nlohmann::json pipeline;  // {"name": ..., overrides...}
  std::optional<std::vector<int>> hierarchy;
  CvSettings cv;
  std::uint64_t seed = 0;  // pipeline fits
  std::optional<std::filesystem::path> out;
  bool timing = false;

  /// Throws InvalidArgument on unknown pipeline, missing seeds or bad CV settings.
  void validate() const;
};

/// Seeds (seed, cv.seed and a preset's seed) are required.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);

Dataset resolve_data(const DataSource& src);

struct FoldResult {
  int repeat = 0;
  int fold = 0;
  std::string label;  // optional description (cross-session direction)
  double accuracy = 0.0;
  std::string fit_hash;
  std::vector<int> truth;
  std::vector<int> predicted;
  std::vector<double> mi_trace;  // level 1, transform pipelines only
};

struct Report {
  nlohmann::json config;
  std::vector<FoldResult> folds;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over folds
  Matrix confusion;  // pooled over folds, row-normalized
  std::vector<double> mi_trace;  // fold mean
  std::optional<double> wall_ms;

  nlohmann::json to_json() const;
};

/// Row-normalized L x L matrix, entry (a, b) = fraction of class a+1 trials
/// predicted as b+1. Rows without trials stay zero.
Matrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted, int class_count);

struct TTest {
  double t = 0.0;
  double p = 1.0;
  int df = 0;
};

/// Two-sided paired t-test on a - b.
TTest paired_ttest(std::span<const double> a, std::span<const double> b);

/// Fills mean, std, confusion and mi_trace from folds, which are sorted by
/// (repeat, fold) first.
void aggregate(Report& report, int class_count);

/// Decoder configuration for a run against a dataset.
decoder::PipelineConfig pipeline_for(const RunConfig& config, const Dataset& data);
dataset::Hierarchy hierarchy_for(const RunConfig& config, int class_count);

/// Stratified repeated k-fold evaluation. Every fit sees training rows only.
Report run_cv(const RunConfig& config);
Report run_cv(const RunConfig& config, const Dataset& data);

/// Train on one session, test on the other, both directions.
Report run_cross_session(const std::filesystem::path& a, const std::filesystem::path& b, const RunConfig& config);
Report run_cross_session(const Dataset& a, const Dataset& b, const RunConfig& config);

/// Fit on every row of the dataset.
decoder::HierarchicalDecoder fit_full(const RunConfig& config, const Dataset& data);

}  // namespace mmi::harness
