#pragma once

#include "mmi/common.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mmi::dataset {

/// Raw multichannel trials. Each trial is a channels x samples matrix.
struct EpochSet {
  std::vector<Matrix> trials;
  std::vector<int> labels;  // 1..class_count
  double fs = 0.0;
  int class_count = 0;
  std::vector<std::string> channel_names;

  std::size_t size() const { return trials.size(); }
  int channels() const { return trials.empty() ? 0 : static_cast<int>(trials.front().rows()); }
  int samples() const { return trials.empty() ? 0 : static_cast<int>(trials.front().cols()); }

  /// Throws InvalidArgument when shapes disagree, labels fall outside
  /// 1..class_count or fs is not positive.
  void validate() const;

  /// Trials at the given indices, labels copied alongside.
  EpochSet subset(std::span<const std::size_t> indices) const;
};

/// n x d feature matrix with one class label per row.
struct LabeledFeatures {
  Matrix x;
  std::vector<int> labels;
  int class_count = 0;

  std::size_t size() const { return labels.size(); }
  int dims() const { return static_cast<int>(x.cols()); }

  /// Sorted distinct labels present.
  std::vector<int> distinct_labels() const;
  void validate() const;
  LabeledFeatures subset(std::span<const std::size_t> indices) const;
};

struct FoldPlan {
  std::vector<std::vector<int>> assignments;  // [repeat][sample] -> fold
  int k = 0;
  int repeats = 0;
  std::uint64_t seed = 0;

  std::vector<std::size_t> train_indices(int repeat, int fold) const;
  std::vector<std::size_t> test_indices(int repeat, int fold) const;
};

/// Disjunction chain over classes. Level l (1-based) separates order[l-1]
/// (state +1) from order[l..] (state -1).
struct Hierarchy {
  std::vector<int> order;

  int class_count() const { return static_cast<int>(order.size()); }
  int levels() const { return class_count() - 1; }
  void validate() const;
  /// Position of class c in the chain, 0-based.
  int position(int cls) const;

  static Hierarchy identity(int class_count);
};

// ---- I/O -------------------------------------------------------------------

EpochSet load_epochs(const std::filesystem::path& dir);
void save_epochs(const EpochSet& epochs, const std::filesystem::path& dir);

/// Header-less CSV of floats, one sample per row.
Matrix load_feature_csv(const std::filesystem::path& path);
void save_feature_csv(const Matrix& x, const std::filesystem::path& path);
/// One integer label per line.
std::vector<int> load_labels_csv(const std::filesystem::path& path);
void save_labels_csv(std::span<const int> labels, const std::filesystem::path& path);

// ---- synthetic data --------------------------------------------------------

struct GaussianSpec {
  std::vector<Vector> means;  // one per class, labels 1..means.size()
  Vector variances;           // shared diagonal covariance
  int samples_per_class = 0;
};

LabeledFeatures synth_gaussian(const GaussianSpec& spec, std::uint64_t seed);

struct ChannelDrive {
  int channel = 0;
  double amplitude = 0.0;
};

struct ClassRhythm {
  double freq_hz = 10.0;
  std::vector<ChannelDrive> drives;
};

struct OscillatorySpec {
  int channels = 0;
  double fs = 250.0;
  double duration_s = 3.0;
  int trials_per_class = 0;
  double noise_sigma = 1.0;
  std::vector<ClassRhythm> classes;  // labels 1..classes.size()
};

/// Per-class sinusoids (random phase per trial) on designated channels plus
/// white noise on every channel. Trials are emitted class by class.
EpochSet synth_oscillatory_epochs(const OscillatorySpec& spec, std::uint64_t seed);

// ---- folds and hierarchy ---------------------------------------------------

FoldPlan stratified_kfold(std::span<const int> labels, int k, int repeats, std::uint64_t seed);

/// Row indices kept at a level and their +1/-1 labels.
struct LevelSplit {
  std::vector<std::size_t> indices;
  std::vector<int> binary_labels;
};

LevelSplit hierarchy_level_split(std::span<const int> labels, const Hierarchy& h, int level);
LabeledFeatures hierarchy_split(const LabeledFeatures& features, const Hierarchy& h, int level);

}  // namespace mmi::dataset
