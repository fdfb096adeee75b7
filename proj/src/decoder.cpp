#include "mmi/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace mmi::decoder {

using nlohmann::json;

namespace {

double log_add(double a, double b) {
  const double m = std::max(a, b);
  if (!std::isfinite(m)) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

Matrix select_columns(const Matrix& x, std::span<const int> cols) {
  Matrix out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = x.col(cols[j]);
  return out;
}

Matrix select_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<int> pair_map_for(const PipelineConfig& c, int d) {
  if (c.front == FrontEnd::identity) {
    require(c.pair_block >= 2 && c.pair_block % 2 == 0 && d % c.pair_block == 0,
            "feature count must be a multiple of the even pair block for MMI selection");
    return csp::eigen_pair_map(d / c.pair_block, c.pair_block);
  }
  return csp::eigen_pair_map(static_cast<int>(c.fbcsp.bands.size()), c.fbcsp.k);
}

double holdout_accuracy(const Matrix& x_tr, std::span<const int> y_tr, const Matrix& x_va, std::span<const int> y_va,
                        bool uniform_priors) {
  const auto clf = fit_binary_kde(x_tr, y_tr, uniform_priors);
  int hits = 0;
  for (Eigen::Index i = 0; i < x_va.rows(); ++i)
    if (classify_binary(clf, x_va.row(i).transpose()).label == y_va[static_cast<std::size_t>(i)]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(x_va.rows());
}

// Picks k from the candidate list by inner stratified CV on the training rows.
int choose_select_k(const Matrix& x, std::span<const int> labels, const std::vector<int>& pairs,
                    const PipelineConfig& c, std::uint64_t seed) {
  std::vector<int> candidates;
  for (int k : c.select_candidates)
    if (k <= x.cols()) candidates.push_back(k);
  require(!candidates.empty(), "no MMI selection size fits the feature dimension");
  if (candidates.size() == 1) return candidates.front();

  const auto plan = dataset::stratified_kfold(labels, c.inner_folds, 1, seed);
  std::vector<double> acc(candidates.size(), 0.0);
  for (int f = 0; f < c.inner_folds; ++f) {
    const auto tr = plan.train_indices(0, f);
    const auto va = plan.test_indices(0, f);
    const Matrix x_tr = select_rows(x, tr);
    const Matrix x_va = select_rows(x, va);
    std::vector<int> y_tr, y_va;
    for (auto i : tr) y_tr.push_back(labels[i]);
    for (auto i : va) y_va.push_back(labels[i]);
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
      const auto sel = selection::mmi_select(x_tr, y_tr, candidates[ci], pairs).selected;
      acc[ci] += holdout_accuracy(select_columns(x_tr, sel), y_tr, select_columns(x_va, sel), y_va, c.uniform_priors);
    }
  }
  std::size_t best = 0;
  for (std::size_t ci = 1; ci < candidates.size(); ++ci)
    if (acc[ci] > acc[best]) best = ci;
  return candidates[best];
}

Reduction fit_reduction(const Matrix& x, std::span<const int> labels, const PipelineConfig& c, std::uint64_t seed) {
  Reduction r;
  r.kind = c.reducer;
  const int d = static_cast<int>(x.cols());
  switch (c.reducer) {
    case Reducer::none:
      break;
    case Reducer::r2:
      r.selected = selection::r2_select(x, labels, std::min(c.select_k, d)).selected;
      break;
    case Reducer::sda: {
      auto res = selection::sda_select(x, labels, c.sda);
      if (res.selected.empty()) {
        // nothing significant; keep the single strongest feature so the
        // classifier has an input
        const auto best = std::min_element(res.scores.begin(), res.scores.end()) - res.scores.begin();
        res.selected.push_back(static_cast<int>(best));
      }
      r.selected = std::move(res.selected);
      break;
    }
    case Reducer::mrmr:
      r.selected = selection::mrmr_select(x, labels, std::min(c.select_k, d)).selected;
      break;
    case Reducer::mmi_select: {
      const auto pairs = pair_map_for(c, d);
      const int k = choose_select_k(x, labels, pairs, c, mix_seed(seed, 1));
      r.selected = selection::mmi_select(x, labels, k, pairs).selected;
      break;
    }
    case Reducer::mmi_lint:
    case Reducer::mmi_nonlint: {
      r.train = c.train;
      r.train.kind = c.reducer == Reducer::mmi_lint ? transform::Kind::linear : transform::Kind::two_layer;
      r.train.seed = mix_seed(seed, 2);
      dataset::LabeledFeatures f;
      f.x = x;
      f.labels.assign(labels.begin(), labels.end());
      f.class_count = 2;
      r.fit = transform::fit_mmi(f, r.train);
      break;
    }
  }
  return r;
}

void check_source(const HierarchicalDecoder& dec, const SampleSource& source, std::span<const std::size_t> rows) {
  if (dec.feature_input()) {
    require(source.features != nullptr, "decoder expects feature rows");
    require(source.features->cols() == dec.feature_dims, "feature dimension does not match the decoder");
    for (auto r : rows) require(static_cast<Eigen::Index>(r) < source.features->rows(), "row index out of range");
    return;
  }
  require(source.band_trials != nullptr, "decoder expects band-filtered epochs");
  require(source.band_trials->size() == dec.config.fbcsp.bands.size(), "band count does not match the decoder");
  for (const auto& band : *source.band_trials)
    for (auto r : rows) {
      require(r < band.size(), "trial index out of range");
      require(band[r].rows() == dec.channels && band[r].cols() == dec.samples,
              "epoch shape does not match the decoder's training geometry");
    }
}

Matrix level_features(const LevelModel& level, const SampleSource& source, std::span<const std::size_t> rows) {
  if (level.front) return csp::fbcsp_feature_matrix(*level.front, *source.band_trials, rows);
  return select_rows(*source.features, rows);
}

json kde_to_json(const density::KdeModel& m) {
  return json{{"centers", transform::matrix_to_json(m.centers)},
              {"bandwidth", std::vector<double>(m.bandwidth.data(), m.bandwidth.data() + m.bandwidth.size())}};
}

density::KdeModel kde_from_json(const json& j) {
  density::KdeModel m;
  m.centers = transform::matrix_from_json(j.at("centers"));
  const auto bw = j.at("bandwidth").get<std::vector<double>>();
  m.bandwidth = Eigen::Map<const Vector>(bw.data(), static_cast<Eigen::Index>(bw.size()));
  if (m.bandwidth.size() != m.centers.cols()) throw IoError("bandwidth/center dimension mismatch in decoder file");
  return m;
}

json fbcsp_to_json(const csp::FbcspModel& m) {
  json filters = json::array();
  for (const auto& f : m.filters)
    filters.push_back({{"w", transform::matrix_to_json(f.w)},
                       {"eigenvalues", std::vector<double>(f.eigenvalues.data(), f.eigenvalues.data() + f.eigenvalues.size())}});
  return json{{"bands", m.bands}, {"order", m.order}, {"fs", m.fs}, {"k", m.k}, {"filters", filters}};
}

csp::FbcspModel fbcsp_from_json(const json& j) {
  csp::FbcspModel m;
  m.bands = j.at("bands").get<std::vector<dsp::Band>>();
  m.order = j.at("order").get<int>();
  m.fs = j.at("fs").get<double>();
  m.k = j.at("k").get<int>();
  for (const auto& f : j.at("filters")) {
    csp::SpatialFilters s;
    s.w = transform::matrix_from_json(f.at("w"));
    const auto ev = f.at("eigenvalues").get<std::vector<double>>();
    s.eigenvalues = Eigen::Map<const Vector>(ev.data(), static_cast<Eigen::Index>(ev.size()));
    m.filters.push_back(std::move(s));
  }
  if (m.filters.size() != m.bands.size()) throw IoError("filter count does not match band count in decoder file");
  return m;
}

Reducer reducer_from_name(const std::string& s) {
  for (auto r : {Reducer::none, Reducer::r2, Reducer::sda, Reducer::mrmr, Reducer::mmi_select, Reducer::mmi_lint,
                 Reducer::mmi_nonlint})
    if (reducer_name(r) == s) return r;
  throw InvalidArgument("unknown reducer '" + s + "'");
}

FrontEnd front_from_name(const std::string& s) {
  for (auto f : {FrontEnd::csp, FrontEnd::fbcsp, FrontEnd::identity})
    if (front_end_name(f) == s) return f;
  throw InvalidArgument("unknown front end '" + s + "'");
}

}  // namespace

std::string reducer_name(Reducer r) {
  switch (r) {
    case Reducer::none: return "none";
    case Reducer::r2: return "r2";
    case Reducer::sda: return "sda";
    case Reducer::mrmr: return "mrmr";
    case Reducer::mmi_select: return "mmi_select";
    case Reducer::mmi_lint: return "mmi_lint";
    case Reducer::mmi_nonlint: return "mmi_nonlint";
  }
  return "?";
}

std::string front_end_name(FrontEnd f) {
  switch (f) {
    case FrontEnd::csp: return "csp";
    case FrontEnd::fbcsp: return "fbcsp";
    case FrontEnd::identity: return "identity";
  }
  return "?";
}

// ---- binary classifier -----------------------------------------------------

BinaryKdeClassifier fit_binary_kde(const Matrix& x, std::span<const int> labels, bool uniform_priors) {
  require(x.rows() == static_cast<Eigen::Index>(labels.size()), "feature/label row mismatch");
  require(x.cols() >= 1, "classifier needs at least one feature");
  std::vector<Eigen::Index> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == +1) {
      pos.push_back(static_cast<Eigen::Index>(i));
    } else if (labels[i] == -1) {
      neg.push_back(static_cast<Eigen::Index>(i));
    } else {
      throw InvalidArgument("binary classifier expects labels +1 / -1");
    }
  }
  require(pos.size() >= 2 && neg.size() >= 2, "binary classifier needs at least two samples of each class");
  BinaryKdeClassifier clf;
  clf.plus.centers = x(pos, Eigen::all);
  clf.plus.bandwidth = density::silverman_bandwidth(clf.plus.centers);
  clf.minus.centers = x(neg, Eigen::all);
  clf.minus.bandwidth = density::silverman_bandwidth(clf.minus.centers);
  clf.prior_plus = uniform_priors ? 0.5 : static_cast<double>(pos.size()) / static_cast<double>(labels.size());
  return clf;
}

BinaryDecision classify_binary(const BinaryKdeClassifier& clf, const Eigen::Ref<const Vector>& y) {
  require(y.size() == clf.dims(), "query dimension does not match classifier");
  const double a = std::log(clf.prior_plus) + density::kde_logpdf(clf.plus, y);
  const double b = std::log(1.0 - clf.prior_plus) + density::kde_logpdf(clf.minus, y);
  const double z = log_add(a, b);
  return BinaryDecision{a >= b ? +1 : -1, a - z, b - z};
}

// ---- pipelines -------------------------------------------------------------

PipelineConfig pipeline_preset(const std::string& name, bool feature_input, std::uint64_t seed) {
  PipelineConfig c;
  c.name = name;
  c.seed = seed;
  c.front = feature_input ? FrontEnd::identity : FrontEnd::fbcsp;
  if (name == "csp") {
    if (!feature_input) c.front = FrontEnd::csp;
    c.fbcsp.bands = {{8.0, 30.0}};
    c.reducer = Reducer::none;
  } else if (name == "fbcsp") {
    c.reducer = Reducer::none;
  } else if (name == "r2") {
    c.reducer = Reducer::r2;
  } else if (name == "sda") {
    c.reducer = Reducer::sda;
  } else if (name == "mrmr") {
    c.reducer = Reducer::mrmr;
  } else if (name == "mmi_select") {
    c.reducer = Reducer::mmi_select;
  } else if (name == "mmi_lint") {
    c.reducer = Reducer::mmi_lint;
    c.train.kind = transform::Kind::linear;
  } else if (name == "mmi_nonlint") {
    c.reducer = Reducer::mmi_nonlint;
    c.train.kind = transform::Kind::two_layer;
  } else {
    throw InvalidArgument("unknown pipeline '" + name + "'");
  }
  return c;
}

json to_json(const PipelineConfig& c) {
  return json{{"name", c.name},
              {"front_end", front_end_name(c.front)},
              {"reducer", reducer_name(c.reducer)},
              {"bands", c.fbcsp.bands},
              {"filter_order", c.fbcsp.order},
              {"csp_k", c.fbcsp.k},
              {"select_k", c.select_k},
              {"sda", {{"p_in", c.sda.p_in}, {"p_out", c.sda.p_out}, {"cap", c.sda.cap}}},
              {"select_candidates", c.select_candidates},
              {"inner_folds", c.inner_folds},
              {"pair_block", c.pair_block},
              {"transform", transform::to_json(c.train)},
              {"priors", c.uniform_priors ? "uniform" : "empirical"},
              {"seed", c.seed}};
}

PipelineConfig pipeline_from_json(const json& j, bool feature_input, std::uint64_t seed) {
  PipelineConfig c = pipeline_preset(j.at("name").get<std::string>(), feature_input, seed);
  if (j.contains("bands")) c.fbcsp.bands = j.at("bands").get<std::vector<dsp::Band>>();
  c.fbcsp.order = j.value("filter_order", c.fbcsp.order);
  c.fbcsp.k = j.value("csp_k", c.fbcsp.k);
  c.select_k = j.value("select_k", c.select_k);
  if (j.contains("sda")) {
    const auto& s = j.at("sda");
    c.sda.p_in = s.value("p_in", c.sda.p_in);
    c.sda.p_out = s.value("p_out", c.sda.p_out);
    c.sda.cap = s.value("cap", c.sda.cap);
  }
  if (j.contains("select_candidates")) c.select_candidates = j.at("select_candidates").get<std::vector<int>>();
  c.inner_folds = j.value("inner_folds", c.inner_folds);
  c.pair_block = j.value("pair_block", c.pair_block);
  if (j.contains("transform")) {
    const auto kind = c.train.kind;
    c.train = transform::config_from_json(j.at("transform"));
    c.train.kind = kind;  // fixed by the pipeline name
  }
  if (j.contains("priors")) {
    const auto p = j.at("priors").get<std::string>();
    require(p == "uniform" || p == "empirical", "priors must be 'uniform' or 'empirical'");
    c.uniform_priors = p == "uniform";
  }
  require(!c.fbcsp.bands.empty(), "at least one band required");
  require(c.select_k >= 1, "select_k must be positive");
  require(c.inner_folds >= 2, "inner_folds must be >= 2");
  c.train.validate();
  return c;
}

Matrix apply_reduction(const Reduction& r, const Matrix& x) {
  if (r.fit) return transform::apply_fitted(*r.fit, x);
  if (!r.selected.empty()) return select_columns(x, r.selected);
  return x;
}

std::vector<double> transition_priors(const dataset::Hierarchy& h, std::span<const double> class_priors) {
  h.validate();
  require(static_cast<int>(class_priors.size()) == h.class_count(), "one prior per class required");
  for (double p : class_priors) require(p >= 0.0 && std::isfinite(p), "class priors must be non-negative");
  std::vector<double> out;
  for (int l = 0; l < h.levels(); ++l) {
    double reach = 0.0;
    for (int j = l; j < h.class_count(); ++j) reach += class_priors[static_cast<std::size_t>(h.order[static_cast<std::size_t>(j)] - 1)];
    require(reach > 0.0, "level " + std::to_string(l + 1) + " is reached with zero prior mass");
    out.push_back(class_priors[static_cast<std::size_t>(h.order[static_cast<std::size_t>(l)] - 1)] / reach);
  }
  return out;
}

HierarchicalDecoder fit_hierarchical(const SampleSource& source, std::span<const int> labels,
                                     std::span<const std::size_t> train_rows, const dataset::Hierarchy& h,
                                     const PipelineConfig& config, const Geometry& geometry) {
  h.validate();
  HierarchicalDecoder dec;
  dec.hierarchy = h;
  dec.config = config;
  dec.channels = geometry.channels;
  dec.samples = geometry.samples;
  dec.fs = geometry.fs;
  dec.feature_dims = geometry.feature_dims;
  check_source(dec, source, train_rows);

  std::vector<int> train_labels;
  train_labels.reserve(train_rows.size());
  for (auto r : train_rows) train_labels.push_back(labels[r]);
  const int L = h.class_count();
  std::vector<double> counts(static_cast<std::size_t>(L), 0.0);
  for (int l : train_labels) {
    require(l >= 1 && l <= L, "label " + std::to_string(l) + " outside the hierarchy");
    counts[static_cast<std::size_t>(l - 1)] += 1.0;
  }
  for (int c = 1; c <= L; ++c)
    require(counts[static_cast<std::size_t>(c - 1)] > 0.0, "class " + std::to_string(c) + " missing from training data");
  dec.class_priors.resize(static_cast<std::size_t>(L));
  for (int c = 0; c < L; ++c)
    dec.class_priors[static_cast<std::size_t>(c)] =
        config.uniform_priors ? 1.0 / L : counts[static_cast<std::size_t>(c)] / static_cast<double>(train_labels.size());
  const auto p_plus = transition_priors(h, dec.class_priors);

  for (int level = 1; level <= h.levels(); ++level) {
    const auto split = dataset::hierarchy_level_split(train_labels, h, level);
    std::vector<std::size_t> rows;
    rows.reserve(split.indices.size());
    for (auto i : split.indices) rows.push_back(train_rows[i]);
    const std::uint64_t seed = mix_seed(config.seed, static_cast<std::uint64_t>(level));

    LevelModel lm;
    Matrix x;
    if (config.front == FrontEnd::identity) {
      x = select_rows(*source.features, rows);
    } else {
      lm.front = csp::fit_fbcsp_rows(*source.band_trials, rows, split.binary_labels, config.fbcsp, geometry.fs);
      x = csp::fbcsp_feature_matrix(*lm.front, *source.band_trials, rows);
    }
    lm.reduction = fit_reduction(x, split.binary_labels, config, seed);
    lm.classifier = fit_binary_kde(apply_reduction(lm.reduction, x), split.binary_labels, config.uniform_priors);
    lm.p_plus = p_plus[static_cast<std::size_t>(level - 1)];
    dec.levels.push_back(std::move(lm));
  }
  return dec;
}

HierarchicalDecoder fit_hierarchical(const dataset::EpochSet& train, const dataset::Hierarchy& h,
                                     const PipelineConfig& config) {
  train.validate();
  require(config.front != FrontEnd::identity, "epoch input needs a CSP or FBCSP front end");
  const auto bands = csp::filter_epochs(train, config.fbcsp.bands, config.fbcsp.order);
  std::vector<std::size_t> rows(train.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return fit_hierarchical(SampleSource{&bands, nullptr}, train.labels, rows, h, config,
                          Geometry{train.channels(), train.samples(), train.fs, 0});
}

HierarchicalDecoder fit_hierarchical(const dataset::LabeledFeatures& train, const dataset::Hierarchy& h,
                                     const PipelineConfig& config) {
  train.validate();
  require(config.front == FrontEnd::identity, "feature input needs the identity front end");
  std::vector<std::size_t> rows(train.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return fit_hierarchical(SampleSource{nullptr, &train.x}, train.labels, rows, h, config,
                          Geometry{0, 0, 0.0, train.dims()});
}

std::vector<LevelLikelihoods> level_likelihoods(const HierarchicalDecoder& dec, const SampleSource& source,
                                                std::span<const std::size_t> rows) {
  check_source(dec, source, rows);
  std::vector<LevelLikelihoods> out;
  for (const auto& level : dec.levels) {
    const Matrix y = apply_reduction(level.reduction, level_features(level, source, rows));
    LevelLikelihoods ll{Vector(y.rows()), Vector(y.rows())};
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      ll.plus[i] = density::kde_logpdf(level.classifier.plus, y.row(i).transpose());
      ll.minus[i] = density::kde_logpdf(level.classifier.minus, y.row(i).transpose());
    }
    out.push_back(std::move(ll));
  }
  return out;
}

std::vector<double> path_scores(std::span<const double> ll_plus, std::span<const double> ll_minus,
                                std::span<const double> p_plus) {
  const std::size_t levels = p_plus.size();
  require(levels >= 1 && ll_plus.size() == levels && ll_minus.size() == levels, "one likelihood pair per level");
  std::vector<double> scores(levels + 1);
  double prefix = 0.0;  // all -1 through the previous level
  for (std::size_t l = 0; l < levels; ++l) {
    scores[l] = prefix + ll_plus[l] + std::log(p_plus[l]);
    prefix += ll_minus[l] + std::log(1.0 - p_plus[l]);
  }
  scores[levels] = prefix;
  return scores;
}

DecodeResult decode_scores(const HierarchicalDecoder& dec, std::span<const double> ll_plus,
                           std::span<const double> ll_minus) {
  std::vector<double> p;
  for (const auto& l : dec.levels) p.push_back(l.p_plus);
  const auto by_position = path_scores(ll_plus, ll_minus, p);
  DecodeResult r;
  r.scores.assign(by_position.size(), 0.0);
  std::size_t best = 0;
  for (std::size_t j = 0; j < by_position.size(); ++j) {
    r.scores[static_cast<std::size_t>(dec.hierarchy.order[j] - 1)] = by_position[j];
    if (by_position[j] > by_position[best]) best = j;
  }
  r.label = dec.hierarchy.order[best];
  return r;
}

std::vector<int> predict(const HierarchicalDecoder& dec, const SampleSource& source,
                         std::span<const std::size_t> rows) {
  const auto ll = level_likelihoods(dec, source, rows);
  std::vector<int> out(rows.size());
  std::vector<double> plus(ll.size()), minus(ll.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t l = 0; l < ll.size(); ++l) {
      plus[l] = ll[l].plus[static_cast<Eigen::Index>(i)];
      minus[l] = ll[l].minus[static_cast<Eigen::Index>(i)];
    }
    out[i] = decode_scores(dec, plus, minus).label;
  }
  return out;
}

namespace {

DecodeResult decode_one(const HierarchicalDecoder& dec, const SampleSource& source) {
  const std::size_t row = 0;
  const auto ll = level_likelihoods(dec, source, std::span<const std::size_t>(&row, 1));
  std::vector<double> plus, minus;
  for (const auto& l : ll) {
    plus.push_back(l.plus[0]);
    minus.push_back(l.minus[0]);
  }
  return decode_scores(dec, plus, minus);
}

}  // namespace

DecodeResult decode(const HierarchicalDecoder& dec, const Matrix& epoch) {
  require(!dec.feature_input(), "decoder was trained on feature rows, not epochs");
  require(epoch.rows() == dec.channels && epoch.cols() == dec.samples,
          "epoch shape does not match the decoder's training geometry");
  const auto filtered = dsp::apply_bank(dec.config.fbcsp.bands, dec.config.fbcsp.order, dec.fs, epoch);
  std::vector<std::vector<Matrix>> bands;
  for (const auto& f : filtered) bands.push_back({f});
  return decode_one(dec, SampleSource{&bands, nullptr});
}

DecodeResult decode_features(const HierarchicalDecoder& dec, const Eigen::Ref<const Vector>& x) {
  require(dec.feature_input(), "decoder was trained on epochs, not feature rows");
  require(x.size() == dec.feature_dims, "feature dimension does not match the decoder");
  const Matrix row = x.transpose();
  return decode_one(dec, SampleSource{nullptr, &row});
}

// ---- serialization ---------------------------------------------------------

json to_json(const HierarchicalDecoder& dec) {
  json levels = json::array();
  for (const auto& l : dec.levels) {
    json red{{"kind", reducer_name(l.reduction.kind)}, {"selected", l.reduction.selected}};
    red["transform"] = l.reduction.fit ? transform::to_json(*l.reduction.fit, l.reduction.train) : json(nullptr);
    levels.push_back({{"p_plus", l.p_plus},
                      {"front", l.front ? fbcsp_to_json(*l.front) : json(nullptr)},
                      {"reduction", red},
                      {"classifier",
                       {{"prior_plus", l.classifier.prior_plus},
                        {"plus", kde_to_json(l.classifier.plus)},
                        {"minus", kde_to_json(l.classifier.minus)}}}});
  }
  return json{{"format", "mmi-decoder"},
              {"version", 1},
              {"hierarchy", dec.hierarchy.order},
              {"pipeline", to_json(dec.config)},
              {"class_priors", dec.class_priors},
              {"geometry",
               {{"channels", dec.channels}, {"samples", dec.samples}, {"fs", dec.fs}, {"feature_dims", dec.feature_dims}}},
              {"levels", levels}};
}

HierarchicalDecoder decoder_from_json(const json& j) {
  try {
    if (j.value("format", std::string()) != "mmi-decoder") throw IoError("not a decoder file");
    HierarchicalDecoder dec;
    dec.hierarchy.order = j.at("hierarchy").get<std::vector<int>>();
    dec.hierarchy.validate();
    const auto& p = j.at("pipeline");
    const bool features = p.at("front_end").get<std::string>() == "identity";
    dec.config = pipeline_from_json(p, features, p.at("seed").get<std::uint64_t>());
    dec.config.front = front_from_name(p.at("front_end").get<std::string>());
    dec.config.reducer = reducer_from_name(p.at("reducer").get<std::string>());
    dec.config.train = transform::config_from_json(p.at("transform"));
    dec.class_priors = j.at("class_priors").get<std::vector<double>>();
    const auto& g = j.at("geometry");
    dec.channels = g.at("channels").get<int>();
    dec.samples = g.at("samples").get<int>();
    dec.fs = g.at("fs").get<double>();
    dec.feature_dims = g.at("feature_dims").get<int>();
    for (const auto& lj : j.at("levels")) {
      LevelModel l;
      l.p_plus = lj.at("p_plus").get<double>();
      if (!lj.at("front").is_null()) l.front = fbcsp_from_json(lj.at("front"));
      const auto& r = lj.at("reduction");
      l.reduction.kind = reducer_from_name(r.at("kind").get<std::string>());
      l.reduction.selected = r.at("selected").get<std::vector<int>>();
      if (!r.at("transform").is_null()) {
        const auto& t = r.at("transform");
        transform::FitResult fit;
        fit.transform = transform::transform_from_json(t);
        if (t.contains("standardization")) fit.stats = transform::stats_from_json(t.at("standardization"));
        fit.mi_trace = t.at("mi_trace").get<std::vector<double>>();
        l.reduction.train = transform::config_from_json(t.at("config"));
        l.reduction.fit = std::move(fit);
      }
      const auto& c = lj.at("classifier");
      l.classifier.prior_plus = c.at("prior_plus").get<double>();
      l.classifier.plus = kde_from_json(c.at("plus"));
      l.classifier.minus = kde_from_json(c.at("minus"));
      dec.levels.push_back(std::move(l));
    }
    if (static_cast<int>(dec.levels.size()) != dec.hierarchy.levels())
      throw IoError("decoder file has the wrong number of levels");
    return dec;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed decoder file: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("invalid decoder file: ") + e.what());
  }
}

void save_decoder(const HierarchicalDecoder& dec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(dec).dump(1) << '\n';
}

HierarchicalDecoder load_decoder(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("cannot parse " + path.string() + ": " + e.what());
  }
  return decoder_from_json(j);
}

std::string fit_hash(const HierarchicalDecoder& dec) {
  const std::string s = to_json(dec).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mmi::decoder
