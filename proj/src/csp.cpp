#include "mmi/csp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <omp.h>

namespace mmi::csp {

Matrix epoch_covariance(const Matrix& epoch) {
  const Matrix centered = epoch.colwise() - epoch.rowwise().mean();
  const Matrix c = centered * centered.transpose();
  const double tr = c.trace();
  require(tr > 0.0, "epoch has zero variance on every channel");
  return c / tr;
}

Matrix class_covariance(std::span<const Matrix> epochs) {
  require(!epochs.empty(), "class covariance needs at least one epoch");
  const auto n = epochs.front().rows();
  Matrix acc = Matrix::Zero(n, n);
  for (const auto& e : epochs) {
    require(e.rows() == n, "epochs disagree on channel count");
    acc += epoch_covariance(e);
  }
  return acc / static_cast<double>(epochs.size());
}

SpatialFilters fit_csp(const Matrix& cov1, const Matrix& cov2, int k) {
  require(cov1.rows() == cov1.cols() && cov2.rows() == cov2.cols() && cov1.rows() == cov2.rows(),
          "covariances must be square and equally sized");
  require(k >= 2 && k % 2 == 0, "K must be even and >= 2");
  const auto n = cov1.rows();
  require(k <= n, "K exceeds channel count");

  auto ridged = [](const Matrix& c) {
    const Matrix sym = 0.5 * (c + c.transpose());
    const double lambda = 1e-8 * sym.diagonal().mean();
    return Matrix(sym + lambda * Matrix::Identity(c.rows(), c.cols()));
  };
  const Matrix p1 = ridged(cov1);
  const Matrix p2 = ridged(cov2);

  Eigen::LLT<Matrix> llt(p2);
  if (llt.info() != Eigen::Success) throw NumericalError("denominator covariance is not SPD after ridge");
  const Matrix l = llt.matrixL();
  // S = L^-1 P1 L^-T
  const Matrix tmp = llt.matrixL().solve(p1);
  Matrix s = llt.matrixL().solve(tmp.transpose()).transpose();
  s = 0.5 * (s + s.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  if (eig.info() != Eigen::Success) throw NumericalError("symmetric eigensolve failed");
  // eigenvalues ascending; back-transform w = L^-T v
  const Matrix all_w = l.transpose().triangularView<Eigen::Upper>().solve(eig.eigenvectors());
  const Vector& vals = eig.eigenvalues();

  SpatialFilters out;
  out.w.resize(n, k);
  out.eigenvalues.resize(k);
  const int half = k / 2;
  for (int i = 0; i < half; ++i) {
    const auto hi = n - 1 - i;  // i-th largest
    out.w.col(i) = all_w.col(hi);
    out.eigenvalues[i] = vals[hi];
    out.w.col(half + i) = all_w.col(i);  // i-th smallest
    out.eigenvalues[half + i] = vals[i];
  }
  for (int c = 0; c < k; ++c) {
    auto col = out.w.col(c);
    col.normalize();
    const double tol = 1e-12 * col.cwiseAbs().maxCoeff();
    for (Eigen::Index r = 0; r < n; ++r) {
      if (std::abs(col[r]) > tol) {
        if (col[r] < 0) col = -col;
        break;
      }
    }
  }
  return out;
}

Vector csp_features(const SpatialFilters& filters, const Matrix& epoch) {
  require(epoch.rows() == filters.w.rows(), "epoch channel count does not match filters");
  const Matrix z = filters.w.transpose() * epoch;
  const Matrix centered = z.colwise() - z.rowwise().mean();
  const Vector var = centered.rowwise().squaredNorm();
  const double total = var.sum();
  if (!(total > 0.0)) throw InvalidArgument("spatially filtered epoch has zero total variance");
  Vector f(var.size());
  for (Eigen::Index i = 0; i < var.size(); ++i) {
    if (!(var[i] > 0.0)) throw InvalidArgument("spatially filtered component has zero variance");
    f[i] = std::log(var[i] / total);
  }
  return f;
}

std::vector<std::vector<Matrix>> filter_epochs(const dataset::EpochSet& epochs, std::span<const dsp::Band> bands,
                                               int order) {
  std::vector<dsp::BandpassFilter> filters;
  for (const auto& [lo, hi] : bands) filters.push_back(dsp::design_bandpass(lo, hi, epochs.fs, order));
  std::vector<std::vector<Matrix>> out(bands.size(), std::vector<Matrix>(epochs.size()));
  const auto trials = static_cast<long>(epochs.size());
#pragma omp parallel for schedule(dynamic) if (trials > 8)
  for (long t = 0; t < trials; ++t)
    for (std::size_t b = 0; b < filters.size(); ++b)
      out[b][static_cast<std::size_t>(t)] = dsp::filtfilt_rows(filters[b], epochs.trials[static_cast<std::size_t>(t)]);
  return out;
}

FbcspModel fit_fbcsp_filtered(const std::vector<std::vector<Matrix>>& band_trials, std::span<const int> labels,
                              const FbcspConfig& config, double fs) {
  require(band_trials.size() == config.bands.size(), "filtered data does not match band list");
  FbcspModel model;
  model.bands = config.bands;
  model.order = config.order;
  model.fs = fs;
  model.k = config.k;
  for (const auto& trials : band_trials) {
    require(trials.size() == labels.size(), "label count does not match trial count");
    std::vector<Matrix> pos, neg;
    for (std::size_t i = 0; i < trials.size(); ++i) {
      if (labels[i] == +1) {
        pos.push_back(trials[i]);
      } else if (labels[i] == -1) {
        neg.push_back(trials[i]);
      } else {
        throw InvalidArgument("FBCSP expects labels +1 / -1");
      }
    }
    require(!pos.empty() && !neg.empty(), "FBCSP needs both classes present");
    model.filters.push_back(fit_csp(class_covariance(pos), class_covariance(neg), config.k));
  }
  return model;
}

FbcspModel fit_fbcsp_rows(const std::vector<std::vector<Matrix>>& band_trials, std::span<const std::size_t> rows,
                          std::span<const int> labels, const FbcspConfig& config, double fs) {
  require(band_trials.size() == config.bands.size(), "filtered data does not match band list");
  require(rows.size() == labels.size(), "one label per selected row required");
  FbcspModel model;
  model.bands = config.bands;
  model.order = config.order;
  model.fs = fs;
  model.k = config.k;
  for (const auto& trials : band_trials) {
    Matrix pos, neg;
    int n_pos = 0, n_neg = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Matrix c = epoch_covariance(trials.at(rows[i]));
      Matrix& acc = labels[i] == +1 ? pos : neg;
      if (labels[i] != +1 && labels[i] != -1) throw InvalidArgument("FBCSP expects labels +1 / -1");
      if (acc.size() == 0) acc = Matrix::Zero(c.rows(), c.cols());
      require(acc.rows() == c.rows(), "epochs disagree on channel count");
      acc += c;
      (labels[i] == +1 ? n_pos : n_neg) += 1;
    }
    require(n_pos > 0 && n_neg > 0, "FBCSP needs both classes present");
    model.filters.push_back(fit_csp(pos / n_pos, neg / n_neg, config.k));
  }
  return model;
}

FbcspModel fit_fbcsp(const dataset::EpochSet& train, std::span<const int> labels, const FbcspConfig& config) {
  return fit_fbcsp_filtered(filter_epochs(train, config.bands, config.order), labels, config, train.fs);
}

Vector fbcsp_features_filtered(const FbcspModel& model, std::span<const Matrix> band_epoch) {
  require(band_epoch.size() == model.filters.size(), "band count mismatch");
  Vector out(model.output_dims());
  for (std::size_t b = 0; b < model.filters.size(); ++b)
    out.segment(static_cast<Eigen::Index>(b) * model.k, model.k) = csp_features(model.filters[b], band_epoch[b]);
  return out;
}

Vector fbcsp_features(const FbcspModel& model, const Matrix& epoch) {
  const auto filtered = dsp::apply_bank(model.bands, model.order, model.fs, epoch);
  return fbcsp_features_filtered(model, filtered);
}

namespace {

Vector row_features(const FbcspModel& model, const std::vector<std::vector<Matrix>>& band_trials, std::size_t t) {
  std::vector<Matrix> per_band;
  per_band.reserve(band_trials.size());
  for (const auto& band : band_trials) per_band.push_back(band.at(t));
  return fbcsp_features_filtered(model, per_band);
}

}  // namespace

Matrix fbcsp_feature_matrix(const FbcspModel& model, const std::vector<std::vector<Matrix>>& band_trials,
                            std::span<const std::size_t> trial_indices) {
  Matrix out(static_cast<Eigen::Index>(trial_indices.size()), model.output_dims());
  const auto n = static_cast<long>(trial_indices.size());
#pragma omp parallel for schedule(static) if (n > 16)
  for (long r = 0; r < n; ++r)
    out.row(r) = row_features(model, band_trials, trial_indices[static_cast<std::size_t>(r)]).transpose();
  return out;
}

Matrix fbcsp_feature_matrix_serial(const FbcspModel& model, const std::vector<std::vector<Matrix>>& band_trials,
                                   std::span<const std::size_t> trial_indices) {
  Matrix out(static_cast<Eigen::Index>(trial_indices.size()), model.output_dims());
  for (std::size_t r = 0; r < trial_indices.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = row_features(model, band_trials, trial_indices[r]).transpose();
  return out;
}

std::vector<int> eigen_pair_map(int bands, int k) {
  require(bands >= 1 && k >= 2 && k % 2 == 0, "pair map needs bands >= 1 and even K");
  std::vector<int> out(static_cast<std::size_t>(bands * k));
  const int half = k / 2;
  for (int b = 0; b < bands; ++b)
    for (int i = 0; i < k; ++i) out[static_cast<std::size_t>(b * k + i)] = b * k + (i + half) % k;
  return out;
}

}  // namespace mmi::csp
