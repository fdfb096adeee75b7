#pragma once

#include "mmi/common.hpp"
#include "mmi/dataset.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace mmi::transform {

/// y = M x
struct LinearTransform {
  Matrix m;  // d_y x d_x
};

/// y = M2 max(0, M1 x)
struct TwoLayerTransform {
  Matrix m1;  // d_z x d_x
  Matrix m2;  // d_y x d_z
};

using Transform = std::variant<LinearTransform, TwoLayerTransform>;

enum class Kind { linear, two_layer };

struct TrainConfig {
  Kind kind = Kind::linear;
  int d_y = 2;
  int d_z = 30;
  int epochs = 20;
  double step = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  bool standardize = true;
  int bandwidth_refresh = 1;  // iterations between center/bandwidth refreshes
  // Drop the current sample from its own class centers during steps. Off by
  // default: the own kernel is the only label-dependent term of the step.
  bool leave_one_out = false;

  void validate() const;
};

struct StandardizationStats {
  Vector mean;
  Vector std;
};

StandardizationStats standardize_fit(const Matrix& x);
Matrix standardize_apply(const StandardizationStats& stats, const Matrix& x);

Transform init_transform(Kind kind, int d_x, int d_y, int d_z, std::uint64_t seed);

int input_dims(const Transform& t);
int output_dims(const Transform& t);

Vector forward(const Transform& t, const Eigen::Ref<const Vector>& x);
/// Row-wise forward pass of an n x d_x matrix.
Matrix forward_batch(const Transform& t, const Matrix& x);

/// Parameter gradient with the same variant alternative and shapes as the
/// transform it was computed for.
using Gradient = Transform;

/// Kernel-density context for one stochastic step: per-class transformed
/// centers and bandwidths, log priors, and the row of the current sample in
/// its own class (excluded when skip_row >= 0).
struct StepDensities {
  std::vector<Matrix> centers;
  std::vector<Vector> bandwidths;
  std::vector<double> log_priors;
  int own_class = -1;
  Eigen::Index skip_row = -1;
};

struct StepResult {
  double mi = 0.0;  // per-sample estimate at y_t
  Gradient gradient;
};

/// d(I_t)/d(y_t) for the per-sample mutual information estimate.
Vector mi_output_gradient(const Eigen::Ref<const Vector>& y, const StepDensities& dens, double* mi_out = nullptr);

/// Gradient of the per-sample estimate with respect to the transform
/// parameters; only y_t depends on the parameters.
StepResult mi_gradient(const Transform& t, const Eigen::Ref<const Vector>& x, const StepDensities& dens);

struct FitResult {
  Transform transform;
  StandardizationStats stats;
  std::vector<double> mi_trace;  // leave-one-out average_mi; [0] before training, then one per epoch
};

/// Momentum stochastic gradient ascent on the per-sample MI estimate.
FitResult fit_mmi(const dataset::LabeledFeatures& features, const TrainConfig& config);

/// Standardize (when stats non-empty) then forward.
Matrix apply_fitted(const FitResult& fit, const Matrix& x);

nlohmann::json to_json(const Transform& t);
Transform transform_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StandardizationStats& s);
StandardizationStats stats_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);
TrainConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FitResult& fit, const TrainConfig& config);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace mmi::transform
