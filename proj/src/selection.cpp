#include "mmi/selection.hpp"

#include "mmi/density.hpp"
#include "mmi/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>

namespace mmi::selection {

namespace {

// Indices sorted by descending score, ties by ascending index.
std::vector<int> rank_desc(const std::vector<double>& scores) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)]; });
  return idx;
}

// Residual sum of squares of an OLS fit with intercept, nullopt when the
// design is rank deficient.
std::optional<double> ols_rss(const Matrix& x, const Vector& y, const std::vector<int>& cols) {
  const auto n = x.rows();
  Matrix a(n, static_cast<Eigen::Index>(cols.size()) + 1);
  a.col(0).setOnes();
  for (std::size_t i = 0; i < cols.size(); ++i) a.col(static_cast<Eigen::Index>(i) + 1) = x.col(cols[i]);
  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() < a.cols()) return std::nullopt;
  const Vector beta = qr.solve(y);
  return (y - a * beta).squaredNorm();
}

double partial_f_pvalue(double rss_small, double rss_big, double df2) {
  if (!(df2 >= 1.0)) return 1.0;
  const double num = std::max(rss_small - rss_big, 0.0);
  if (rss_big <= 0.0) return num > 0.0 ? 0.0 : 1.0;
  return stats::f_sf(num / (rss_big / df2), 1.0, df2);
}

std::vector<int> to_codes(std::span<const int> labels) {
  std::map<int, int> code;
  for (int l : labels) code.emplace(l, 0);
  int c = 0;
  for (auto& [l, v] : code) v = c++;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(code[l]);
  return out;
}

}  // namespace

std::vector<double> binary_targets(std::span<const int> labels) {
  std::set<int> distinct(labels.begin(), labels.end());
  require(distinct.size() == 2, "binary selection needs exactly two distinct labels");
  const bool pm = distinct.contains(1) && distinct.contains(-1);
  const int positive = pm ? 1 : *distinct.begin();
  std::vector<double> y;
  y.reserve(labels.size());
  for (int l : labels) y.push_back(l == positive ? 1.0 : -1.0);
  return y;
}

SelectionResult r2_select(const Matrix& x, std::span<const int> labels, int k) {
  require(x.rows() == static_cast<Eigen::Index>(labels.size()), "feature/label row mismatch");
  require(k >= 0 && k <= x.cols(), "k must lie in 0..d");
  const auto t = binary_targets(labels);
  const Vector y = Eigen::Map<const Vector>(t.data(), static_cast<Eigen::Index>(t.size()));
  const Vector yc = y.array() - y.mean();
  require(yc.squaredNorm() > 0.0, "labels are constant");
  SelectionResult out;
  out.scores.resize(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Vector xc = x.col(j).array() - x.col(j).mean();
    const double sxx = xc.squaredNorm();
    const double sxy = xc.dot(yc);
    out.scores[static_cast<std::size_t>(j)] = sxx > 0.0 ? (sxy * sxy) / (sxx * yc.squaredNorm()) : 0.0;
  }
  const auto order = rank_desc(out.scores);
  out.selected.assign(order.begin(), order.begin() + k);
  return out;
}

SelectionResult sda_select(const Matrix& x, std::span<const int> labels, const SdaConfig& config) {
  require(x.rows() == static_cast<Eigen::Index>(labels.size()), "feature/label row mismatch");
  require(config.p_in > 0.0 && config.p_out >= config.p_in, "need 0 < p_in <= p_out");
  require(config.cap >= 0, "cap must be non-negative");
  const auto t = binary_targets(labels);
  const Vector y = Eigen::Map<const Vector>(t.data(), static_cast<Eigen::Index>(t.size()));
  const double n = static_cast<double>(x.rows());
  const auto d = static_cast<int>(x.cols());

  SelectionResult out;
  out.scores.assign(static_cast<std::size_t>(d), 1.0);
  const double rss0 = (y.array() - y.mean()).matrix().squaredNorm();
  for (int j = 0; j < d; ++j)
    if (auto rss = ols_rss(x, y, {j})) out.scores[static_cast<std::size_t>(j)] = partial_f_pvalue(rss0, *rss, n - 2.0);

  std::vector<int> sel;
  const int max_rounds = 4 * d + 8;
  for (int round = 0; round < max_rounds; ++round) {
    bool fired = false;
    const auto rss_sel = ols_rss(x, y, sel);
    const double rss_cur = rss_sel.value_or(rss0);

    if (static_cast<int>(sel.size()) < config.cap) {
      const double df2 = n - static_cast<double>(sel.size()) - 2.0;
      int best = -1;
      double best_p = std::numeric_limits<double>::infinity();
      for (int j = 0; j < d; ++j) {
        if (std::find(sel.begin(), sel.end(), j) != sel.end()) continue;
        auto cols = sel;
        cols.push_back(j);
        const auto rss = ols_rss(x, y, cols);
        if (!rss) continue;  // collinear with the current set
        const double p = partial_f_pvalue(rss_cur, *rss, df2);
        if (p < best_p) {
          best_p = p;
          best = j;
        }
      }
      if (best >= 0 && best_p < config.p_in) {
        sel.push_back(best);
        fired = true;
      }
    }

    if (!sel.empty()) {
      const auto rss_full = ols_rss(x, y, sel);
      const double rf = rss_full.value_or(rss0);
      const double df2 = n - static_cast<double>(sel.size()) - 1.0;
      int worst = -1;
      double worst_p = -1.0;
      for (std::size_t i = 0; i < sel.size(); ++i) {
        auto cols = sel;
        cols.erase(cols.begin() + static_cast<std::ptrdiff_t>(i));
        const double rss_without = ols_rss(x, y, cols).value_or(rss0);
        const double p = partial_f_pvalue(rss_without, rf, df2);
        if (p > worst_p) {
          worst_p = p;
          worst = static_cast<int>(i);
        }
      }
      if (worst >= 0 && worst_p > config.p_out) {
        sel.erase(sel.begin() + worst);
        fired = true;
      }
    }
    if (!fired) break;
  }
  out.selected = std::move(sel);
  return out;
}

std::vector<int> discretize_3state(const Eigen::Ref<const Vector>& column) {
  const auto n = column.size();
  require(n >= 2, "discretization needs at least two samples");
  const double mean = column.mean();
  const double sd = std::sqrt((column.array() - mean).square().sum() / static_cast<double>(n - 1));
  std::vector<int> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = column[i];
    out[static_cast<std::size_t>(i)] = v < mean - sd ? 0 : (v > mean + sd ? 2 : 1);
  }
  return out;
}

double discrete_mi(std::span<const int> a, std::span<const int> b) {
  require(a.size() == b.size() && !a.empty(), "discrete MI needs equal, non-empty sequences");
  const auto ca = to_codes(a);
  const auto cb = to_codes(b);
  const int na = *std::max_element(ca.begin(), ca.end()) + 1;
  const int nb = *std::max_element(cb.begin(), cb.end()) + 1;
  std::vector<double> joint(static_cast<std::size_t>(na * nb), 0.0), pa(static_cast<std::size_t>(na), 0.0),
      pb(static_cast<std::size_t>(nb), 0.0);
  const double inv = 1.0 / static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[static_cast<std::size_t>(ca[i] * nb + cb[i])] += inv;
    pa[static_cast<std::size_t>(ca[i])] += inv;
    pb[static_cast<std::size_t>(cb[i])] += inv;
  }
  double mi = 0.0;
  for (int i = 0; i < na; ++i)
    for (int j = 0; j < nb; ++j) {
      const double p = joint[static_cast<std::size_t>(i * nb + j)];
      if (p > 0.0) mi += p * std::log(p / (pa[static_cast<std::size_t>(i)] * pb[static_cast<std::size_t>(j)]));
    }
  return mi;
}

SelectionResult mrmr_select(const Matrix& x, std::span<const int> labels, int k) {
  require(x.rows() == static_cast<Eigen::Index>(labels.size()), "feature/label row mismatch");
  require(k >= 0 && k <= x.cols(), "k must lie in 0..d");
  const auto d = static_cast<std::size_t>(x.cols());
  std::vector<std::vector<int>> states(d);
  for (std::size_t j = 0; j < d; ++j) states[j] = discretize_3state(x.col(static_cast<Eigen::Index>(j)));

  SelectionResult out;
  out.scores.resize(d);
  for (std::size_t j = 0; j < d; ++j) out.scores[j] = discrete_mi(states[j], labels);

  std::vector<double> redundancy(d, 0.0);  // running sum over selected
  std::vector<bool> taken(d, false);
  for (int step = 0; step < k; ++step) {
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < d; ++j) {
      if (taken[j]) continue;
      const double score = out.selected.empty()
                               ? out.scores[j]
                               : out.scores[j] - redundancy[j] / static_cast<double>(out.selected.size());
      if (score > best_score) {
        best_score = score;
        best = static_cast<int>(j);
      }
    }
    out.selected.push_back(best);
    taken[static_cast<std::size_t>(best)] = true;
    for (std::size_t j = 0; j < d; ++j)
      if (!taken[j]) redundancy[j] += discrete_mi(states[j], states[static_cast<std::size_t>(best)]);
  }
  return out;
}

SelectionResult mmi_select(const Matrix& x, std::span<const int> labels, int k, std::span<const int> pair_map) {
  require(x.rows() == static_cast<Eigen::Index>(labels.size()), "feature/label row mismatch");
  require(k >= 0 && k % 2 == 0, "MMI selection needs an even k");
  require(k <= x.cols(), "k exceeds feature count");
  const auto d = static_cast<int>(x.cols());
  require(static_cast<int>(pair_map.size()) == d, "pair map must cover every feature");
  for (int j = 0; j < d; ++j) {
    const int p = pair_map[static_cast<std::size_t>(j)];
    require(p >= 0 && p < d && p != j && pair_map[static_cast<std::size_t>(p)] == j,
            "feature " + std::to_string(j) + " has no valid eigen-pair partner");
  }

  SelectionResult out;
  out.scores.resize(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j)
    out.scores[static_cast<std::size_t>(j)] = density::average_mi(Matrix(x.col(j)), labels);

  std::vector<bool> taken(static_cast<std::size_t>(d), false);
  for (int j : rank_desc(out.scores)) {
    if (static_cast<int>(out.selected.size()) >= k) break;
    if (taken[static_cast<std::size_t>(j)]) continue;
    const int p = pair_map[static_cast<std::size_t>(j)];
    out.selected.push_back(j);
    out.selected.push_back(p);
    taken[static_cast<std::size_t>(j)] = taken[static_cast<std::size_t>(p)] = true;
  }
  return out;
}

}  // namespace mmi::selection
