#include "mmi/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>

#include <omp.h>

namespace mmi::density {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_sum_exp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double a : v) mx = std::max(mx, a);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double a : v) s += std::exp(a - mx);
  return mx + std::log(s);
}

// Class bookkeeping shared by the averaged estimators.
struct ClassIndex {
  std::vector<int> labels;                  // sorted distinct labels
  std::vector<std::vector<Eigen::Index>> rows;  // rows per class
  std::vector<int> class_of;                // row -> class slot
  std::vector<Eigen::Index> position;       // row -> position in its class
};

ClassIndex index_classes(std::span<const int> labels) {
  ClassIndex ci;
  std::map<int, int> slot;
  for (int l : labels) slot.emplace(l, 0);
  int s = 0;
  for (auto& [l, idx] : slot) {
    idx = s++;
    ci.labels.push_back(l);
  }
  ci.rows.resize(ci.labels.size());
  ci.class_of.resize(labels.size());
  ci.position.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = slot[labels[i]];
    ci.class_of[i] = c;
    ci.position[i] = static_cast<Eigen::Index>(ci.rows[static_cast<std::size_t>(c)].size());
    ci.rows[static_cast<std::size_t>(c)].push_back(static_cast<Eigen::Index>(i));
  }
  return ci;
}

struct AveragedSetup {
  ClassIndex index;
  std::vector<KdeModel> models;
  std::vector<double> log_priors;
};

AveragedSetup prepare_average(const Matrix& x, std::span<const int> labels, HeldOut mode) {
  require(x.rows() == static_cast<Eigen::Index>(labels.size()), "feature/label row mismatch");
  AveragedSetup s;
  s.index = index_classes(labels);
  require(s.index.labels.size() >= 2, "average MI needs at least two classes");
  const double n = static_cast<double>(labels.size());
  for (const auto& rows : s.index.rows) {
    if (mode == HeldOut::leave_one_out)
      require(rows.size() >= 2, "leave-one-out needs at least two samples per class");
    KdeModel m;
    m.centers = x(rows, Eigen::all);
    m.bandwidth = silverman_bandwidth(m.centers);
    s.models.push_back(std::move(m));
    s.log_priors.push_back(std::log(static_cast<double>(rows.size()) / n));
  }
  return s;
}

double sample_mi(const AveragedSetup& s, const Matrix& x, Eigen::Index i, HeldOut mode) {
  const std::size_t classes = s.models.size();
  std::vector<double> ll(classes);
  const Vector y = x.row(i).transpose();
  for (std::size_t c = 0; c < classes; ++c) {
    const bool own = static_cast<std::size_t>(s.index.class_of[static_cast<std::size_t>(i)]) == c;
    const Eigen::Index skip = (own && mode == HeldOut::leave_one_out) ? s.index.position[static_cast<std::size_t>(i)] : -1;
    ll[c] = kde_logpdf_excluding(s.models[c], y, skip);
  }
  return stochastic_mi_from_loglik(s.log_priors, ll);
}

}  // namespace

void ClassDensities::validate() const {
  require(!labels.empty(), "no classes");
  require(labels.size() == models.size() && labels.size() == priors.size(), "class density arrays disagree");
  double total = 0.0;
  for (double p : priors) {
    require(p > 0.0, "class priors must be positive");
    total += p;
  }
  require(std::abs(total - 1.0) < 1e-9, "class priors must sum to 1");
  for (const auto& m : models) {
    require(m.centers.rows() >= 1, "class density needs at least one center");
    require(m.bandwidth.size() == m.centers.cols(), "bandwidth/center dimension mismatch");
    require((m.bandwidth.array() > 0.0).all(), "bandwidths must be positive");
  }
}

Vector silverman_bandwidth(const Matrix& samples) {
  const auto m = samples.rows();
  const auto d = samples.cols();
  require(m >= 1 && d >= 1, "bandwidth needs a non-empty sample matrix");
  Vector sd = Vector::Zero(d);
  if (m >= 2) {
    const Eigen::RowVectorXd mean = samples.colwise().mean();
    sd = ((samples.rowwise() - mean).colwise().squaredNorm() / static_cast<double>(m - 1)).cwiseSqrt().transpose();
  }
  const double factor =
      std::pow(4.0 / ((static_cast<double>(d) + 2.0) * static_cast<double>(m)), 1.0 / (static_cast<double>(d) + 4.0));
  double nonzero_sum = 0.0;
  int nonzero = 0;
  for (Eigen::Index j = 0; j < d; ++j) {
    if (sd[j] > 0.0) {
      nonzero_sum += sd[j];
      ++nonzero;
    }
  }
  const double floor = nonzero > 0 ? 1e-3 * nonzero_sum / nonzero : 1e-3;
  Vector bw(d);
  for (Eigen::Index j = 0; j < d; ++j) bw[j] = sd[j] > 0.0 ? sd[j] * factor : floor;
  return bw;
}

double kde_logpdf_excluding(const KdeModel& model, const Eigen::Ref<const Vector>& y, Eigen::Index skip) {
  const auto m = model.centers.rows();
  const auto d = model.centers.cols();
  require(y.size() == d, "query dimension does not match density");
  const Eigen::Index used = skip >= 0 ? m - 1 : m;
  require(used >= 1, "density has no centers left");

  double mx = -std::numeric_limits<double>::infinity();
  // Two passes keep the log-sum-exp exact without a scratch buffer.
  auto exponent = [&](Eigen::Index i) {
    double q = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double u = (y[j] - model.centers(i, j)) / model.bandwidth[j];
      q += u * u;
    }
    return -0.5 * q;
  };
  for (Eigen::Index i = 0; i < m; ++i)
    if (i != skip) mx = std::max(mx, exponent(i));
  double s = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    if (i != skip) s += std::exp(exponent(i) - mx);
  const double log_norm = model.bandwidth.array().log().sum() + 0.5 * static_cast<double>(d) * kLog2Pi;
  return mx + std::log(s) - std::log(static_cast<double>(used)) - log_norm;
}

double kde_logpdf(const KdeModel& model, const Eigen::Ref<const Vector>& y) { return kde_logpdf_excluding(model, y, -1); }

Vector kde_logpdf_gradient(const KdeModel& model, const Eigen::Ref<const Vector>& y, Eigen::Index skip) {
  const auto m = model.centers.rows();
  const auto d = model.centers.cols();
  require(y.size() == d, "query dimension does not match density");
  require((skip >= 0 ? m - 1 : m) >= 1, "density has no centers left");
  const Vector inv_var = model.bandwidth.array().square().inverse();
  std::vector<double> e(static_cast<std::size_t>(m), -std::numeric_limits<double>::infinity());
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < m; ++i) {
    if (i == skip) continue;
    double q = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double u = y[j] - model.centers(i, j);
      q += u * u * inv_var[j];
    }
    e[static_cast<std::size_t>(i)] = -0.5 * q;
    mx = std::max(mx, e[static_cast<std::size_t>(i)]);
  }
  double total = 0.0;
  Vector g = Vector::Zero(d);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (i == skip) continue;
    const double w = std::exp(e[static_cast<std::size_t>(i)] - mx);
    total += w;
    for (Eigen::Index j = 0; j < d; ++j) g[j] -= w * (y[j] - model.centers(i, j)) * inv_var[j];
  }
  return g / total;
}

ClassDensities fit_class_densities(const Matrix& x, std::span<const int> labels, bool uniform_priors) {
  require(x.rows() == static_cast<Eigen::Index>(labels.size()), "feature/label row mismatch");
  const auto ci = index_classes(labels);
  require(!ci.labels.empty(), "no samples");
  ClassDensities out;
  out.labels = ci.labels;
  for (const auto& rows : ci.rows) {
    KdeModel m;
    m.centers = x(rows, Eigen::all);
    m.bandwidth = silverman_bandwidth(m.centers);
    out.models.push_back(std::move(m));
    out.priors.push_back(uniform_priors ? 1.0 / static_cast<double>(ci.labels.size())
                                        : static_cast<double>(rows.size()) / static_cast<double>(labels.size()));
  }
  return out;
}

double stochastic_mi_from_loglik(std::span<const double> log_priors, std::span<const double> log_lik) {
  require(log_priors.size() == log_lik.size() && !log_lik.empty(), "prior/likelihood size mismatch");
  std::vector<double> joint(log_lik.size());
  for (std::size_t c = 0; c < joint.size(); ++c) joint[c] = log_priors[c] + log_lik[c];
  const double log_mix = log_sum_exp(joint);
  double expected = 0.0;
  for (std::size_t c = 0; c < joint.size(); ++c) {
    const double post = std::exp(joint[c] - log_mix);
    if (post > 0.0) expected += post * log_lik[c];
  }
  return -log_mix + expected;
}

double stochastic_mi(const Eigen::Ref<const Vector>& y, const ClassDensities& densities) {
  densities.validate();
  std::vector<double> lp, ll;
  for (std::size_t c = 0; c < densities.classes(); ++c) {
    lp.push_back(std::log(densities.priors[c]));
    ll.push_back(kde_logpdf(densities.models[c], y));
  }
  return stochastic_mi_from_loglik(lp, ll);
}

double average_mi(const dataset::LabeledFeatures& features, HeldOut mode) {
  return average_mi(features.x, features.labels, mode);
}

double average_mi(const Matrix& x, std::span<const int> labels, HeldOut mode) {
  const auto setup = prepare_average(x, labels, mode);
  const auto n = x.rows();
  std::vector<double> per_sample(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static) if (n > 64)
  for (Eigen::Index i = 0; i < n; ++i) per_sample[static_cast<std::size_t>(i)] = sample_mi(setup, x, i, mode);
  double total = 0.0;
  for (double v : per_sample) total += v;
  return total / static_cast<double>(n);
}

double average_mi_serial(const Matrix& x, std::span<const int> labels, HeldOut mode) {
  const auto setup = prepare_average(x, labels, mode);
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) total += sample_mi(setup, x, i, mode);
  return total / static_cast<double>(x.rows());
}

double label_entropy(std::span<const double> priors) {
  double h = 0.0;
  for (double p : priors) {
    require(p >= 0.0, "priors must be non-negative");
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

ErrorBounds error_bounds(double mi, std::span<const double> priors) {
  const double gap = label_entropy(priors) - mi;
  ErrorBounds b;
  b.upper = std::clamp(gap / 2.0, 0.0, 1.0);
  b.lower = std::clamp((gap - 1.0) / std::numbers::ln2, 0.0, 1.0);
  return b;
}

std::vector<double> empirical_priors(std::span<const int> labels) {
  require(!labels.empty(), "no labels");
  std::map<int, double> counts;
  for (int l : labels) counts[l] += 1.0;
  std::vector<double> out;
  for (const auto& [l, c] : counts) out.push_back(c / static_cast<double>(labels.size()));
  return out;
}

}  // namespace mmi::density
