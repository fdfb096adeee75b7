#pragma once

#include "mmi/common.hpp"

#include <span>
#include <vector>

namespace mmi::selection {

struct SelectionResult {
  std::vector<int> selected;  // in order of selection
  std::vector<double> scores;  // one per input feature; meaning depends on the selector
};

/// Squared Pearson correlation of each column with +/-1 targets; top k,
/// ties broken by lower index.
SelectionResult r2_select(const Matrix& x, std::span<const int> labels, int k);

struct SdaConfig {
  double p_in = 0.05;
  double p_out = 0.05;
  int cap = 6;
};

/// Stepwise OLS (with intercept) regression on +/-1 targets. Forward steps
/// add the lowest partial-F p-value below p_in, backward steps drop the
/// highest above p_out. Candidates that make the design rank deficient are
/// skipped. scores hold each feature's p-value on entry from the empty set.
SelectionResult sda_select(const Matrix& x, std::span<const int> labels, const SdaConfig& config = {});

/// 0 below mean - std, 2 above mean + std, 1 otherwise (sample std).
std::vector<int> discretize_3state(const Eigen::Ref<const Vector>& column);

/// Plug-in mutual information (nats) between two discrete sequences.
double discrete_mi(std::span<const int> a, std::span<const int> b);

/// Greedy minimum-redundancy maximum-relevance (difference form) on
/// 3-state discretized columns. scores hold the relevance I(f_j; C).
SelectionResult mrmr_select(const Matrix& x, std::span<const int> labels, int k);

/// Ranks columns by their individual leave-one-out KDE mutual information
/// with the labels and selects in eigen-pairs: each pick brings its partner.
SelectionResult mmi_select(const Matrix& x, std::span<const int> labels, int k, std::span<const int> pair_map);

/// Labels mapped to +1 / -1. Labels already in {+1, -1} are kept; otherwise
/// the smaller of the two distinct labels becomes +1.
std::vector<double> binary_targets(std::span<const int> labels);

}  // namespace mmi::selection
