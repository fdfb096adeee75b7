#pragma once

#include "mmi/common.hpp"
#include "mmi/dataset.hpp"
#include "mmi/dsp.hpp"

#include <span>
#include <vector>

namespace mmi::csp {

/// Spatial filters as columns of W (N x K). The first K/2 columns carry the
/// largest generalized eigenvalues in descending order, the last K/2 the
/// smallest in ascending order, so column k pairs with column k + K/2.
struct SpatialFilters {
  Matrix w;
  Vector eigenvalues;

  int channels() const { return static_cast<int>(w.rows()); }
  int count() const { return static_cast<int>(w.cols()); }
};

/// Channel-centered covariance of one epoch divided by its trace.
Matrix epoch_covariance(const Matrix& epoch);

/// Trace-normalized, channel-centered covariance averaged over epochs.
Matrix class_covariance(std::span<const Matrix> epochs);

/// Solves cov1 w = lambda cov2 w via Cholesky whitening of cov2 and a
/// symmetric eigensolve. Both inputs receive a 1e-8 * mean(diag) ridge.
/// Filters are unit-norm with the first non-negligible entry positive.
SpatialFilters fit_csp(const Matrix& cov1, const Matrix& cov2, int k);

/// log(var_k / sum_j var_j) of the spatially filtered epoch.
Vector csp_features(const SpatialFilters& filters, const Matrix& epoch);

struct FbcspConfig {
  std::vector<dsp::Band> bands = dsp::default_bands();
  int order = 4;
  int k = 6;
};

struct FbcspModel {
  std::vector<dsp::Band> bands;
  int order = 4;
  double fs = 0.0;
  int k = 0;
  std::vector<SpatialFilters> filters;  // one per band

  int output_dims() const { return static_cast<int>(bands.size()) * k; }
};

/// Band-filtered copies of every trial: result[band][trial].
std::vector<std::vector<Matrix>> filter_epochs(const dataset::EpochSet& epochs, std::span<const dsp::Band> bands,
                                               int order);

/// Fits one CSP per band on pre-filtered trials. labels are +1 / -1; class
/// +1 plays the role of the numerator covariance.
FbcspModel fit_fbcsp_filtered(const std::vector<std::vector<Matrix>>& band_trials, std::span<const int> labels,
                              const FbcspConfig& config, double fs);

/// As fit_fbcsp_filtered on the given trial rows only; labels[i] belongs to
/// rows[i].
FbcspModel fit_fbcsp_rows(const std::vector<std::vector<Matrix>>& band_trials, std::span<const std::size_t> rows,
                          std::span<const int> labels, const FbcspConfig& config, double fs);

FbcspModel fit_fbcsp(const dataset::EpochSet& train, std::span<const int> labels, const FbcspConfig& config);

/// Features of one trial given its per-band filtered copies.
Vector fbcsp_features_filtered(const FbcspModel& model, std::span<const Matrix> band_epoch);

Vector fbcsp_features(const FbcspModel& model, const Matrix& epoch);

/// Feature matrix for the selected trials of a filtered set, one row each.
/// Trials are processed in parallel.
Matrix fbcsp_feature_matrix(const FbcspModel& model, const std::vector<std::vector<Matrix>>& band_trials,
                            std::span<const std::size_t> trial_indices);

/// Serial reference for fbcsp_feature_matrix.
Matrix fbcsp_feature_matrix_serial(const FbcspModel& model, const std::vector<std::vector<Matrix>>& band_trials,
                                   std::span<const std::size_t> trial_indices);

/// Partner index of each feature under the k <-> k + K/2 pairing, band-wise.
std::vector<int> eigen_pair_map(int bands, int k);

}  // namespace mmi::csp
