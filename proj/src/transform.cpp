#include "mmi/transform.hpp"

#include "mmi/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

namespace mmi::transform {

using nlohmann::json;

namespace {

constexpr double kDivergenceLimit = 1e6;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = u(rng);
  return m;
}

// log p(y|c) and its gradient in one sweep over the centers.
double class_loglik(const Matrix& centers, const Vector& bw, const Eigen::Ref<const Vector>& y, Eigen::Index skip,
                    Vector& grad) {
  const auto m = centers.rows();
  const auto d = centers.cols();
  const Eigen::Index used = skip >= 0 ? m - 1 : m;
  if (used < 1) throw InvalidArgument("class has no kernel centers for the gradient step");
  const Vector inv_var = bw.array().square().inverse();
  std::vector<double> e(static_cast<std::size_t>(m));
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < m; ++i) {
    if (i == skip) continue;
    double q = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double u = y[j] - centers(i, j);
      q += u * u * inv_var[j];
    }
    e[static_cast<std::size_t>(i)] = -0.5 * q;
    mx = std::max(mx, e[static_cast<std::size_t>(i)]);
  }
  double total = 0.0;
  grad = Vector::Zero(d);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (i == skip) continue;
    const double w = std::exp(e[static_cast<std::size_t>(i)] - mx);
    total += w;
    for (Eigen::Index j = 0; j < d; ++j) grad[j] -= w * (y[j] - centers(i, j)) * inv_var[j];
  }
  grad /= total;
  const double log_norm = bw.array().log().sum() + 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
  return mx + std::log(total) - std::log(static_cast<double>(used)) - log_norm;
}

double max_abs(const Transform& t) {
  return std::visit(overloaded{[](const LinearTransform& l) { return l.m.cwiseAbs().maxCoeff(); },
                               [](const TwoLayerTransform& n) {
                                 return std::max(n.m1.cwiseAbs().maxCoeff(), n.m2.cwiseAbs().maxCoeff());
                               }},
                    t);
}

bool all_finite(const Transform& t) {
  return std::visit(overloaded{[](const LinearTransform& l) { return l.m.allFinite(); },
                               [](const TwoLayerTransform& n) { return n.m1.allFinite() && n.m2.allFinite(); }},
                    t);
}

// velocity = momentum * velocity + step * grad; params += velocity
void momentum_update(Transform& params, Transform& velocity, const Gradient& grad, double step, double momentum) {
  std::visit(overloaded{[&](LinearTransform& p) {
                          auto& v = std::get<LinearTransform>(velocity);
                          const auto& g = std::get<LinearTransform>(grad);
                          v.m = momentum * v.m + step * g.m;
                          p.m += v.m;
                        },
                        [&](TwoLayerTransform& p) {
                          auto& v = std::get<TwoLayerTransform>(velocity);
                          const auto& g = std::get<TwoLayerTransform>(grad);
                          v.m1 = momentum * v.m1 + step * g.m1;
                          v.m2 = momentum * v.m2 + step * g.m2;
                          p.m1 += v.m1;
                          p.m2 += v.m2;
                        }},
             params);
}

Transform zeros_like(const Transform& t) {
  return std::visit(overloaded{[](const LinearTransform& l) -> Transform {
                                 return LinearTransform{Matrix::Zero(l.m.rows(), l.m.cols())};
                               },
                               [](const TwoLayerTransform& n) -> Transform {
                                 return TwoLayerTransform{Matrix::Zero(n.m1.rows(), n.m1.cols()),
                                                          Matrix::Zero(n.m2.rows(), n.m2.cols())};
                               }},
                    t);
}

}  // namespace

void TrainConfig::validate() const {
  require(d_y >= 1, "d_y must be >= 1");
  require(kind == Kind::linear || d_z >= 1, "d_z must be >= 1");
  require(epochs >= 1, "epochs must be >= 1");
  require(step > 0.0, "step size must be positive");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
  require(bandwidth_refresh >= 1, "bandwidth refresh period must be >= 1");
}

StandardizationStats standardize_fit(const Matrix& x) {
  require(x.rows() >= 2, "standardization needs at least two rows");
  StandardizationStats s;
  s.mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - s.mean.transpose();
  s.std = (centered.colwise().squaredNorm() / static_cast<double>(x.rows() - 1)).cwiseSqrt().transpose();
  for (Eigen::Index j = 0; j < s.std.size(); ++j)
    if (!(s.std[j] > 1e-12)) s.std[j] = 1.0;
  return s;
}

Matrix standardize_apply(const StandardizationStats& stats, const Matrix& x) {
  require(x.cols() == stats.mean.size(), "standardization dimension mismatch");
  return (x.rowwise() - stats.mean.transpose()).array().rowwise() / stats.std.transpose().array();
}

Transform init_transform(Kind kind, int d_x, int d_y, int d_z, std::uint64_t seed) {
  require(d_x >= 1 && d_y >= 1, "transform dimensions must be positive");
  std::mt19937_64 rng(seed);
  if (kind == Kind::linear) return LinearTransform{uniform_matrix(d_y, d_x, rng)};
  require(d_z >= 1, "hidden dimension must be positive");
  Matrix m1 = uniform_matrix(d_z, d_x, rng);
  Matrix m2 = uniform_matrix(d_y, d_z, rng);
  return TwoLayerTransform{std::move(m1), std::move(m2)};
}

int input_dims(const Transform& t) {
  return std::visit(overloaded{[](const LinearTransform& l) { return static_cast<int>(l.m.cols()); },
                               [](const TwoLayerTransform& n) { return static_cast<int>(n.m1.cols()); }},
                    t);
}

int output_dims(const Transform& t) {
  return std::visit(overloaded{[](const LinearTransform& l) { return static_cast<int>(l.m.rows()); },
                               [](const TwoLayerTransform& n) { return static_cast<int>(n.m2.rows()); }},
                    t);
}

Vector forward(const Transform& t, const Eigen::Ref<const Vector>& x) {
  require(x.size() == input_dims(t), "input dimension does not match transform");
  return std::visit(overloaded{[&](const LinearTransform& l) -> Vector { return l.m * x; },
                               [&](const TwoLayerTransform& n) -> Vector {
                                 const Vector z = (n.m1 * x).cwiseMax(0.0);
                                 return n.m2 * z;
                               }},
                    t);
}

Matrix forward_batch(const Transform& t, const Matrix& x) {
  require(x.cols() == input_dims(t), "input dimension does not match transform");
  return std::visit(overloaded{[&](const LinearTransform& l) -> Matrix { return x * l.m.transpose(); },
                               [&](const TwoLayerTransform& n) -> Matrix {
                                 const Matrix z = (x * n.m1.transpose()).cwiseMax(0.0);
                                 return z * n.m2.transpose();
                               }},
                    t);
}

Vector mi_output_gradient(const Eigen::Ref<const Vector>& y, const StepDensities& dens, double* mi_out) {
  const std::size_t classes = dens.centers.size();
  require(classes >= 1 && dens.bandwidths.size() == classes && dens.log_priors.size() == classes,
          "inconsistent step densities");
  std::vector<double> ll(classes), joint(classes);
  std::vector<Vector> grads(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    require(dens.centers[c].rows() >= 1, "empty class centers");
    const Eigen::Index skip = static_cast<int>(c) == dens.own_class ? dens.skip_row : -1;
    ll[c] = class_loglik(dens.centers[c], dens.bandwidths[c], y, skip, grads[c]);
    joint[c] = dens.log_priors[c] + ll[c];
  }
  const double mx = *std::max_element(joint.begin(), joint.end());
  double z = 0.0;
  for (double j : joint) z += std::exp(j - mx);
  const double log_mix = mx + std::log(z);
  std::vector<double> post(classes);
  double mean_ll = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    post[c] = std::exp(joint[c] - log_mix);
    mean_ll += post[c] * ll[c];
  }
  if (mi_out) *mi_out = -log_mix + mean_ll;
  // dI/dy = sum_c P(c|y) (log p(y|c) - E[log p(y|.)]) d log p(y|c)/dy
  Vector g = Vector::Zero(y.size());
  for (std::size_t c = 0; c < classes; ++c) g += post[c] * (ll[c] - mean_ll) * grads[c];
  return g;
}

StepResult mi_gradient(const Transform& t, const Eigen::Ref<const Vector>& x, const StepDensities& dens) {
  require(x.size() == input_dims(t), "input dimension does not match transform");
  StepResult out;
  out.gradient = std::visit(
      overloaded{[&](const LinearTransform& l) -> Gradient {
                   const Vector y = l.m * x;
                   const Vector g = mi_output_gradient(y, dens, &out.mi);
                   return LinearTransform{g * x.transpose()};
                 },
                 [&](const TwoLayerTransform& n) -> Gradient {
                   const Vector h = n.m1 * x;
                   const Vector z = h.cwiseMax(0.0);
                   const Vector y = n.m2 * z;
                   const Vector g = mi_output_gradient(y, dens, &out.mi);
                   Vector dh = n.m2.transpose() * g;
                   for (Eigen::Index i = 0; i < dh.size(); ++i)
                     if (!(h[i] > 0.0)) dh[i] = 0.0;
                   return TwoLayerTransform{dh * x.transpose(), g * z.transpose()};
                 }},
      t);
  return out;
}

FitResult fit_mmi(const dataset::LabeledFeatures& features, const TrainConfig& config) {
  config.validate();
  features.validate();

  // class slots in sorted label order
  std::map<int, int> slot;
  for (int l : features.labels) slot.emplace(l, 0);
  require(slot.size() >= 2, "transform learning needs at least two classes");
  {
    int s = 0;
    for (auto& [l, idx] : slot) idx = s++;
  }
  const std::size_t classes = slot.size();
  const auto n = static_cast<Eigen::Index>(features.size());
  std::vector<std::vector<Eigen::Index>> rows(classes);
  std::vector<int> class_of(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> position(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = slot[features.labels[static_cast<std::size_t>(i)]];
    class_of[static_cast<std::size_t>(i)] = c;
    position[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(c)].size());
    rows[static_cast<std::size_t>(c)].push_back(i);
  }
  for (const auto& r : rows) require(r.size() >= 2, "transform learning needs at least two samples per class");

  FitResult fit;
  Matrix x = features.x;
  if (config.standardize) {
    fit.stats = standardize_fit(x);
    x = standardize_apply(fit.stats, x);
  }

  Transform params = init_transform(config.kind, static_cast<int>(x.cols()), config.d_y, config.d_z, config.seed);
  Transform velocity = zeros_like(params);

  StepDensities dens;
  dens.centers.resize(classes);
  dens.bandwidths.resize(classes);
  for (const auto& r : rows)
    dens.log_priors.push_back(std::log(static_cast<double>(r.size()) / static_cast<double>(n)));

  const auto record_mi = [&] {
    const double mi = density::average_mi(forward_batch(params, x), features.labels);
    if (!std::isfinite(mi)) throw NumericalError("mutual information trace became non-finite");
    fit.mi_trace.push_back(mi);
  };
  record_mi();

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  long iteration = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (const auto t : order) {
      if (iteration % config.bandwidth_refresh == 0) {
        const Matrix y_all = forward_batch(params, x);
        for (std::size_t c = 0; c < classes; ++c) {
          dens.centers[c] = y_all(rows[c], Eigen::all);
          dens.bandwidths[c] = density::silverman_bandwidth(dens.centers[c]);
        }
      }
      ++iteration;
      dens.own_class = class_of[static_cast<std::size_t>(t)];
      dens.skip_row = config.leave_one_out ? position[static_cast<std::size_t>(t)] : -1;
      const auto step = mi_gradient(params, x.row(t).transpose(), dens);
      momentum_update(params, velocity, step.gradient, config.step, config.momentum);
      if (!all_finite(params) || max_abs(params) > kDivergenceLimit)
        throw NumericalError("transform parameters diverged at epoch " + std::to_string(epoch + 1) +
                             ", iteration " + std::to_string(iteration));
    }
    record_mi();
  }
  fit.transform = std::move(params);
  return fit;
}

Matrix apply_fitted(const FitResult& fit, const Matrix& x) {
  if (fit.stats.mean.size() == 0) return forward_batch(fit.transform, x);
  return forward_batch(fit.transform, standardize_apply(fit.stats, x));
}

// ---- serialization ---------------------------------------------------------

json matrix_to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw IoError("matrix entry count mismatch");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  return m;
}

json to_json(const Transform& t) {
  return std::visit(overloaded{[](const LinearTransform& l) {
                                 return json{{"kind", "linear"}, {"m", matrix_to_json(l.m)}};
                               },
                               [](const TwoLayerTransform& n) {
                                 return json{{"kind", "two_layer"},
                                             {"m1", matrix_to_json(n.m1)},
                                             {"m2", matrix_to_json(n.m2)}};
                               }},
                    t);
}

Transform transform_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "linear") return LinearTransform{matrix_from_json(j.at("m"))};
  if (kind == "two_layer") return TwoLayerTransform{matrix_from_json(j.at("m1")), matrix_from_json(j.at("m2"))};
  throw IoError("unknown transform kind '" + kind + "'");
}

json to_json(const StandardizationStats& s) {
  return json{{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
              {"std", std::vector<double>(s.std.data(), s.std.data() + s.std.size())}};
}

StandardizationStats stats_from_json(const json& j) {
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto sd = j.at("std").get<std::vector<double>>();
  StandardizationStats s;
  s.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  s.std = Eigen::Map<const Vector>(sd.data(), static_cast<Eigen::Index>(sd.size()));
  return s;
}

json to_json(const TrainConfig& c) {
  return json{{"kind", c.kind == Kind::linear ? "linear" : "two_layer"},
              {"d_y", c.d_y},
              {"d_z", c.d_z},
              {"epochs", c.epochs},
              {"step", c.step},
              {"momentum", c.momentum},
              {"seed", c.seed},
              {"standardize", c.standardize},
              {"bandwidth_refresh", c.bandwidth_refresh},
              {"leave_one_out", c.leave_one_out}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  if (j.contains("kind")) {
    const auto k = j.at("kind").get<std::string>();
    if (k == "linear") {
      c.kind = Kind::linear;
    } else if (k == "two_layer") {
      c.kind = Kind::two_layer;
    } else {
      throw InvalidArgument("unknown transform kind '" + k + "'");
    }
  }
  c.d_y = j.value("d_y", c.d_y);
  c.d_z = j.value("d_z", c.d_z);
  c.epochs = j.value("epochs", c.epochs);
  c.step = j.value("step", c.step);
  c.momentum = j.value("momentum", c.momentum);
  c.seed = j.value("seed", c.seed);
  c.standardize = j.value("standardize", c.standardize);
  c.bandwidth_refresh = j.value("bandwidth_refresh", c.bandwidth_refresh);
  c.leave_one_out = j.value("leave_one_out", c.leave_one_out);
  c.validate();
  return c;
}

json to_json(const FitResult& fit, const TrainConfig& config) {
  json j = to_json(fit.transform);
  j["d_x"] = input_dims(fit.transform);
  j["d_y"] = output_dims(fit.transform);
  if (fit.stats.mean.size() > 0) j["standardization"] = to_json(fit.stats);
  j["config"] = to_json(config);
  j["mi_trace"] = fit.mi_trace;
  return j;
}

}  // namespace mmi::transform
