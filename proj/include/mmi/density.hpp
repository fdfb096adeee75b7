#pragma once

#include "mmi/common.hpp"
#include "mmi/dataset.hpp"

#include <span>
#include <vector>

namespace mmi::density {

/// Product-Gaussian kernel density estimate with per-dimension widths.
struct KdeModel {
  Matrix centers;    // m x d
  Vector bandwidth;  // d

  int dims() const { return static_cast<int>(centers.cols()); }
};

/// Per-class densities. labels[c] is the class label modelled by models[c].
struct ClassDensities {
  std::vector<int> labels;
  std::vector<KdeModel> models;
  std::vector<double> priors;

  std::size_t classes() const { return labels.size(); }
  void validate() const;
};

/// sigma_j = s_j * (4 / ((d + 2) m))^(1 / (d + 4)) with s_j the sample
/// standard deviation. Constant dimensions get 1e-3 times the mean of the
/// non-zero stds (1e-3 if every dimension is constant).
Vector silverman_bandwidth(const Matrix& samples);

double kde_logpdf(const KdeModel& model, const Eigen::Ref<const Vector>& y);

/// log p(y) with one center excluded (leave-one-out); skip < 0 excludes none.
double kde_logpdf_excluding(const KdeModel& model, const Eigen::Ref<const Vector>& y, Eigen::Index skip);

/// Gradient of log p(y) with respect to y, centers held fixed.
Vector kde_logpdf_gradient(const KdeModel& model, const Eigen::Ref<const Vector>& y, Eigen::Index skip = -1);

/// Fits Silverman-bandwidth class densities. Priors come from class
/// frequencies unless uniform_priors is set.
ClassDensities fit_class_densities(const Matrix& x, std::span<const int> labels, bool uniform_priors = false);

/// Per-sample mutual information estimate from class log-likelihoods and
/// log priors, all in nats; the posterior is computed in the log domain.
double stochastic_mi_from_loglik(std::span<const double> log_priors, std::span<const double> log_lik);

double stochastic_mi(const Eigen::Ref<const Vector>& y, const ClassDensities& densities);

enum class HeldOut { off, leave_one_out };

/// Mean of the per-sample estimate over all rows. With leave_one_out each
/// sample is dropped from its own class's centers. Bandwidths are fitted per
/// class on all of that class's rows; priors are class frequencies.
/// Rows are evaluated in parallel and summed in index order, so the result
/// matches average_mi_serial bit for bit.
double average_mi(const dataset::LabeledFeatures& features, HeldOut mode = HeldOut::leave_one_out);
double average_mi(const Matrix& x, std::span<const int> labels, HeldOut mode = HeldOut::leave_one_out);

/// Single-threaded reference implementation of average_mi.
double average_mi_serial(const Matrix& x, std::span<const int> labels, HeldOut mode = HeldOut::leave_one_out);

double label_entropy(std::span<const double> priors);

struct ErrorBounds {
  double lower = 0.0;  // Fano
  double upper = 0.0;  // Hellman-Raviv
};

/// Binary-case Bayes error bounds from H(C) - I, natural logs, clamped to [0, 1].
ErrorBounds error_bounds(double mi, std::span<const double> priors);

/// Empirical class priors in order of sorted distinct labels.
std::vector<double> empirical_priors(std::span<const int> labels);

}  // namespace mmi::density
