#pragma once

#include "mmi/common.hpp"
#include "mmi/csp.hpp"
#include "mmi/dataset.hpp"
#include "mmi/density.hpp"
#include "mmi/selection.hpp"
#include "mmi/transform.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mmi::decoder {

// ---- binary classifier -----------------------------------------------------

/// KDE likelihoods for the +1 and -1 states with MAP decisions.
struct BinaryKdeClassifier {
  density::KdeModel plus;
  density::KdeModel minus;
  double prior_plus = 0.5;

  int dims() const { return plus.dims(); }
};

/// labels must be +1 / -1 with at least two rows each.
BinaryKdeClassifier fit_binary_kde(const Matrix& x, std::span<const int> labels, bool uniform_priors = false);

struct BinaryDecision {
  int label = +1;
  double log_post_plus = 0.0;
  double log_post_minus = 0.0;
};

/// argmax of prior times likelihood in the log domain; ties go to +1.
BinaryDecision classify_binary(const BinaryKdeClassifier& clf, const Eigen::Ref<const Vector>& y);

// ---- pipelines -------------------------------------------------------------

enum class FrontEnd { csp, fbcsp, identity };
enum class Reducer { none, r2, sda, mrmr, mmi_select, mmi_lint, mmi_nonlint };

struct PipelineConfig {
  std::string name = "mmi_lint";
  FrontEnd front = FrontEnd::fbcsp;
  Reducer reducer = Reducer::mmi_lint;
  csp::FbcspConfig fbcsp;
  int select_k = 6;                             // r2, mrmr
  selection::SdaConfig sda;                     // sda
  std::vector<int> select_candidates{2, 4, 6};  // mmi_select sweep
  int inner_folds = 3;
  int pair_block = 6;  // identity front end: eigen pairs within blocks of this width
  transform::TrainConfig train;
  bool uniform_priors = true;
  std::uint64_t seed = 0;
};

/// Default configuration for one of: csp, fbcsp, r2, sda, mrmr, mmi_select,
/// mmi_lint, mmi_nonlint. With feature_input the front end is the identity
/// and csp / fbcsp mean "no reduction".
PipelineConfig pipeline_preset(const std::string& name, bool feature_input, std::uint64_t seed);

nlohmann::json to_json(const PipelineConfig& c);
/// Starts from pipeline_preset(j["name"]) and applies any overrides.
PipelineConfig pipeline_from_json(const nlohmann::json& j, bool feature_input, std::uint64_t seed);

/// Fitted reducer: column selection or a learned transform.
struct Reduction {
  Reducer kind = Reducer::none;
  std::vector<int> selected;
  std::optional<transform::FitResult> fit;
  transform::TrainConfig train;  // as used for fit
};

Matrix apply_reduction(const Reduction& r, const Matrix& x);

struct LevelModel {
  std::optional<csp::FbcspModel> front;  // empty for the identity front end
  Reduction reduction;
  BinaryKdeClassifier classifier;
  double p_plus = 0.5;  // P(S = +1 | level reached)
};

struct HierarchicalDecoder {
  dataset::Hierarchy hierarchy;
  PipelineConfig config;
  std::vector<double> class_priors;  // by class label - 1
  std::vector<LevelModel> levels;
  // training geometry
  int channels = 0;
  int samples = 0;
  double fs = 0.0;
  int feature_dims = 0;  // identity front end only

  bool feature_input() const { return config.front == FrontEnd::identity; }
};

/// P(S(l) = +1 | S(l-1) = -1) per level; class_priors indexed by label - 1.
std::vector<double> transition_priors(const dataset::Hierarchy& h, std::span<const double> class_priors);

/// Rows of an input set, either band-filtered epochs [band][trial] matching
/// the pipeline's bands, or a feature matrix for the identity front end.
struct SampleSource {
  const std::vector<std::vector<Matrix>>* band_trials = nullptr;
  const Matrix* features = nullptr;
};

/// Geometry recorded in the decoder and checked at decode time.
struct Geometry {
  int channels = 0;
  int samples = 0;
  double fs = 0.0;
  int feature_dims = 0;
};

/// Fits every level on the given training rows. labels cover all rows of
/// the source and lie in 1..L.
HierarchicalDecoder fit_hierarchical(const SampleSource& source, std::span<const int> labels,
                                     std::span<const std::size_t> train_rows, const dataset::Hierarchy& h,
                                     const PipelineConfig& config, const Geometry& geometry);

HierarchicalDecoder fit_hierarchical(const dataset::EpochSet& train, const dataset::Hierarchy& h,
                                     const PipelineConfig& config);
HierarchicalDecoder fit_hierarchical(const dataset::LabeledFeatures& train, const dataset::Hierarchy& h,
                                     const PipelineConfig& config);

/// log p(y(l) | S(l) = +1) and log p(y(l) | S(l) = -1) for each row.
struct LevelLikelihoods {
  Vector plus;
  Vector minus;
};

std::vector<LevelLikelihoods> level_likelihoods(const HierarchicalDecoder& dec, const SampleSource& source,
                                                std::span<const std::size_t> rows);

/// Path scores in hierarchy order. Entry j < L-1 sums the -1 terms of levels
/// before j and the +1 term of level j; entry L-1 sums -1 terms of all levels.
std::vector<double> path_scores(std::span<const double> ll_plus, std::span<const double> ll_minus,
                                std::span<const double> p_plus);

struct DecodeResult {
  int label = 0;
  std::vector<double> scores;  // by class label - 1
};

/// Scores for one row given its per-level likelihoods; ties go to the
/// earlier class in hierarchy order.
DecodeResult decode_scores(const HierarchicalDecoder& dec, std::span<const double> ll_plus,
                           std::span<const double> ll_minus);

DecodeResult decode(const HierarchicalDecoder& dec, const Matrix& epoch);
DecodeResult decode_features(const HierarchicalDecoder& dec, const Eigen::Ref<const Vector>& x);

/// Decoded labels for a batch of rows.
std::vector<int> predict(const HierarchicalDecoder& dec, const SampleSource& source,
                         std::span<const std::size_t> rows);

nlohmann::json to_json(const HierarchicalDecoder& dec);
HierarchicalDecoder decoder_from_json(const nlohmann::json& j);
void save_decoder(const HierarchicalDecoder& dec, const std::filesystem::path& path);
HierarchicalDecoder load_decoder(const std::filesystem::path& path);

/// FNV-1a of the serialized parameters, hex encoded.
std::string fit_hash(const HierarchicalDecoder& dec);

std::string reducer_name(Reducer r);
std::string front_end_name(FrontEnd f);

}  // namespace mmi::decoder
