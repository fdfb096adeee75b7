#include "mmi/harness.hpp"

#include "mmi/csp.hpp"
#include "mmi/stats.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <random>

namespace mmi::harness {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- presets ---------------------------------------------------------------

namespace {

// Four motor-imagery-like classes, each a distinct rhythm on its own channel.
dataset::EpochSet fourclass(std::uint64_t seed) {
  dataset::OscillatorySpec spec;
  spec.channels = 8;
  spec.fs = 250.0;
  spec.duration_s = 2.0;
  spec.trials_per_class = 40;
  spec.noise_sigma = 1.0;
  spec.classes = {{10.0, {{0, 2.0}}}, {14.0, {{2, 2.0}}}, {19.0, {{4, 2.0}}}, {26.0, {{6, 2.0}}}};
  return dataset::synth_oscillatory_epochs(spec, seed);
}

// Two features that are informative only jointly: feature 1 follows
// feature 0 with a class-dependent sign, so each marginal is the same for
// both classes while x0 - x1 and x0 + x1 differ in spread. Features 0 and 1
// sit in different eigen-pairs of the 24-dimensional filter-bank layout; the
// other 22 are noise.
dataset::LabeledFeatures jointpair(std::uint64_t seed) {
  constexpr int per_class = 200;
  constexpr int dims = 24;
  constexpr double jitter = 0.1;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  dataset::LabeledFeatures f;
  f.class_count = 2;
  f.x.resize(2 * per_class, dims);
  for (int i = 0; i < 2 * per_class; ++i) {
    const int label = i < per_class ? 1 : 2;
    for (int j = 0; j < dims; ++j) f.x(i, j) = normal(rng);
    f.x(i, 1) = (label == 1 ? 1.0 : -1.0) * f.x(i, 0) + jitter * normal(rng);
    f.labels.push_back(label);
  }
  return f;
}

// XOR of two XORs: the class is the parity of the signs of features 0..3.
// Every two-dimensional linear projection keeps little class information;
// magnitudes are 0.3 + log-normal, heavy enough to blur the level structure
// a projection could otherwise exploit while staying off the sign planes.
dataset::LabeledFeatures xor_parity(std::uint64_t seed) {
  constexpr int per_class = 300;
  constexpr int parity_dims = 4;
  constexpr int noise_dims = 2;
  constexpr double margin = 0.3;
  constexpr double log_spread = 1.25;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  dataset::LabeledFeatures f;
  f.class_count = 2;
  f.x.resize(2 * per_class, parity_dims + noise_dims);
  int count[2] = {0, 0};
  Eigen::Index row = 0;
  while (row < 2 * per_class) {
    Eigen::RowVectorXd x(parity_dims + noise_dims);
    int parity = 0;
    for (int j = 0; j < parity_dims; ++j) {
      const bool negative = coin(rng);
      parity ^= negative ? 1 : 0;
      x[j] = (negative ? -1.0 : 1.0) * (margin + std::exp(log_spread * normal(rng)));
    }
    for (int j = parity_dims; j < parity_dims + noise_dims; ++j) x[j] = normal(rng);
    if (count[parity] == per_class) continue;  // rejection keeps classes balanced
    ++count[parity];
    f.x.row(row++) = x;
    f.labels.push_back(parity + 1);
  }
  return f;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<double> fold_accuracies(const Report& r) {
  std::vector<double> out;
  for (const auto& f : r.folds) out.push_back(f.accuracy);
  return out;
}

double accuracy_of(std::span<const int> truth, std::span<const int> predicted) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i] == predicted[i]) ++hits;
  return truth.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(truth.size());
}

// Band filtering is per trial with a data-independent design, so filtered
// copies are computed once and shared by every fold.
struct PreparedSource {
  std::vector<std::vector<Matrix>> bands;
  decoder::SampleSource source;
  decoder::Geometry geometry;
};

PreparedSource prepare(const Dataset& data, const decoder::PipelineConfig& pc) {
  PreparedSource p;
  if (data.feature_input()) {
    p.source = {nullptr, &data.features->x};
    p.geometry = {0, 0, 0.0, data.features->dims()};
  } else {
    p.bands = csp::filter_epochs(*data.epochs, pc.fbcsp.bands, pc.fbcsp.order);
    p.source = {&p.bands, nullptr};
    p.geometry = {data.epochs->channels(), data.epochs->samples(), data.epochs->fs, 0};
  }
  return p;
}

FoldResult evaluate(const PreparedSource& prep, std::span<const int> labels, std::span<const std::size_t> train,
                    std::span<const std::size_t> test, const dataset::Hierarchy& h,
                    const decoder::PipelineConfig& pc) {
  const auto dec = decoder::fit_hierarchical(prep.source, labels, train, h, pc, prep.geometry);
  FoldResult r;
  r.fit_hash = decoder::fit_hash(dec);
  r.predicted = decoder::predict(dec, prep.source, test);
  for (auto i : test) r.truth.push_back(labels[i]);
  r.accuracy = accuracy_of(r.truth, r.predicted);
  if (!dec.levels.empty() && dec.levels.front().reduction.fit) r.mi_trace = dec.levels.front().reduction.fit->mi_trace;
  return r;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::vector<std::string> preset_names() { return {"fourclass", "jointpair", "xor"}; }

Dataset make_preset(const std::string& name, std::uint64_t seed) {
  Dataset d;
  if (name == "fourclass") {
    d.epochs = fourclass(seed);
  } else if (name == "jointpair") {
    d.features = jointpair(seed);
  } else if (name == "xor") {
    d.features = xor_parity(seed);
  } else {
    throw InvalidArgument("unknown preset '" + name + "'");
  }
  return d;
}

const std::vector<int>& Dataset::labels() const {
  if (epochs) return epochs->labels;
  if (features) return features->labels;
  throw InvalidArgument("empty dataset");
}

int Dataset::class_count() const {
  if (epochs) return epochs->class_count;
  if (features) return features->class_count;
  throw InvalidArgument("empty dataset");
}

Dataset load_dataset(const fs::path& dir) {
  Dataset d;
  if (fs::exists(dir / "manifest.json")) {
    d.epochs = dataset::load_epochs(dir);
    return d;
  }
  if (!fs::exists(dir / "features.csv") || !fs::exists(dir / "labels.csv"))
    throw IoError(dir.string() + " holds neither epochs (manifest.json) nor features (features.csv, labels.csv)");
  dataset::LabeledFeatures f;
  f.x = dataset::load_feature_csv(dir / "features.csv");
  f.labels = dataset::load_labels_csv(dir / "labels.csv");
  if (f.x.rows() != static_cast<Eigen::Index>(f.labels.size()))
    throw IoError("features.csv and labels.csv disagree on row count");
  for (int l : f.labels)
    if (l < 1) throw IoError("labels must be positive class indices");
  f.class_count = *std::max_element(f.labels.begin(), f.labels.end());
  f.validate();
  d.features = std::move(f);
  return d;
}

void save_dataset(const Dataset& data, const fs::path& dir) {
  if (data.epochs) {
    dataset::save_epochs(*data.epochs, dir);
    return;
  }
  require(data.features.has_value(), "empty dataset");
  fs::create_directories(dir);
  dataset::save_feature_csv(data.features->x, dir / "features.csv");
  dataset::save_labels_csv(data.features->labels, dir / "labels.csv");
}

// ---- configuration ---------------------------------------------------------

void RunConfig::validate() const {
  require(data.path.has_value() != data.preset.has_value(), "data needs exactly one of 'path' or 'preset'");
  if (data.preset) {
    const auto names = preset_names();
    require(std::find(names.begin(), names.end(), *data.preset) != names.end(), "unknown preset '" + *data.preset + "'");
  }
  require(pipeline.is_object() && pipeline.contains("name"), "pipeline needs a name");
  decoder::pipeline_from_json(pipeline, false, seed);  // throws on unknown names or bad overrides
  require(cv.k >= 2, "cv.k must be >= 2");
  require(cv.repeats >= 1, "cv.repeats must be >= 1");
}

RunConfig run_config_from_json(const json& j) {
  try {
    RunConfig c;
    require(j.is_object(), "config must be a JSON object");
    const auto& d = j.at("data");
    if (d.contains("path")) c.data.path = d.at("path").get<std::string>();
    if (d.contains("preset")) {
      c.data.preset = d.at("preset").get<std::string>();
      require(d.contains("seed"), "data.seed is required for synthetic presets");
      c.data.preset_seed = d.at("seed").get<std::uint64_t>();
    }
    const auto& p = j.at("pipeline");
    c.pipeline = p.is_string() ? json{{"name", p.get<std::string>()}} : p;
    if (j.contains("hierarchy")) c.hierarchy = j.at("hierarchy").get<std::vector<int>>();
    require(j.contains("seed"), "seed is required");
    c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("cv")) {
      const auto& cv = j.at("cv");
      c.cv.k = cv.value("k", c.cv.k);
      c.cv.repeats = cv.value("repeats", c.cv.repeats);
      require(cv.contains("seed"), "cv.seed is required");
      c.cv.seed = cv.at("seed").get<std::uint64_t>();
    } else {
      throw InvalidArgument("cv section with an explicit seed is required");
    }
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    c.timing = j.value("timing", false);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("invalid config: ") + e.what());
  }
}

json to_json(const RunConfig& c) {
  json data = json::object();
  if (c.data.path) data["path"] = c.data.path->generic_string();
  if (c.data.preset) {
    data["preset"] = *c.data.preset;
    data["seed"] = c.data.preset_seed;
  }
  json j{{"data", data},
         {"pipeline", c.pipeline},
         {"cv", {{"k", c.cv.k}, {"repeats", c.cv.repeats}, {"seed", c.cv.seed}}},
         {"seed", c.seed},
         {"timing", c.timing}};
  if (c.hierarchy) j["hierarchy"] = *c.hierarchy;
  if (c.out) j["out"] = c.out->generic_string();
  return j;
}

RunConfig load_run_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw InvalidArgument("cannot parse " + path.string() + ": " + e.what());
  }
  auto c = run_config_from_json(j);
  // relative data paths are taken from the config file's directory
  if (c.data.path && c.data.path->is_relative()) c.data.path = path.parent_path() / *c.data.path;
  return c;
}

Dataset resolve_data(const DataSource& src) {
  if (src.preset) return make_preset(*src.preset, src.preset_seed);
  require(src.path.has_value(), "no data source");
  if (!fs::exists(*src.path)) throw IoError("data path " + src.path->string() + " does not exist");
  return load_dataset(*src.path);
}

decoder::PipelineConfig pipeline_for(const RunConfig& config, const Dataset& data) {
  return decoder::pipeline_from_json(config.pipeline, data.feature_input(), config.seed);
}

dataset::Hierarchy hierarchy_for(const RunConfig& config, int class_count) {
  dataset::Hierarchy h = config.hierarchy ? dataset::Hierarchy{*config.hierarchy} : dataset::Hierarchy::identity(class_count);
  h.validate();
  require(h.class_count() == class_count, "hierarchy does not cover the dataset's classes");
  return h;
}

// ---- metrics ---------------------------------------------------------------

Matrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted, int class_count) {
  require(truth.size() == predicted.size(), "truth and prediction lengths differ");
  require(class_count >= 1, "class count must be positive");
  Matrix m = Matrix::Zero(class_count, class_count);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(truth[i] >= 1 && truth[i] <= class_count && predicted[i] >= 1 && predicted[i] <= class_count,
            "label outside 1..L");
    m(truth[i] - 1, predicted[i] - 1) += 1.0;
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double total = m.row(r).sum();
    if (total > 0.0) m.row(r) /= total;
  }
  return m;
}

TTest paired_ttest(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "paired samples must have equal length");
  require(a.size() >= 2, "paired t-test needs at least two pairs");
  const auto n = static_cast<double>(a.size());
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0;
  double scale = 0.0;
  for (double v : d) {
    ss += (v - mean) * (v - mean);
    scale = std::max(scale, std::abs(v));
  }
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 1e-12 * std::max(scale, 1e-300))) throw InvalidArgument("paired differences have zero variance");
  TTest r;
  r.df = static_cast<int>(a.size()) - 1;
  r.t = mean / (sd / std::sqrt(n));
  r.p = stats::t_two_sided(r.t, r.df);
  return r;
}

void aggregate(Report& report, int class_count) {
  std::sort(report.folds.begin(), report.folds.end(),
            [](const FoldResult& x, const FoldResult& y) { return std::tie(x.repeat, x.fold) < std::tie(y.repeat, y.fold); });
  const auto acc = fold_accuracies(report);
  const auto n = static_cast<double>(acc.size());
  report.mean = acc.empty() ? 0.0 : std::accumulate(acc.begin(), acc.end(), 0.0) / n;
  double ss = 0.0;
  for (double a : acc) ss += (a - report.mean) * (a - report.mean);
  report.std = acc.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;

  std::vector<int> truth, pred;
  for (const auto& f : report.folds) {
    truth.insert(truth.end(), f.truth.begin(), f.truth.end());
    pred.insert(pred.end(), f.predicted.begin(), f.predicted.end());
  }
  report.confusion = confusion_matrix(truth, pred, class_count);

  report.mi_trace.clear();
  std::size_t traced = 0;
  for (const auto& f : report.folds) {
    if (f.mi_trace.empty()) continue;
    if (report.mi_trace.empty()) report.mi_trace.assign(f.mi_trace.size(), 0.0);
    if (f.mi_trace.size() != report.mi_trace.size()) continue;
    for (std::size_t i = 0; i < f.mi_trace.size(); ++i) report.mi_trace[i] += f.mi_trace[i];
    ++traced;
  }
  for (double& v : report.mi_trace) v /= static_cast<double>(traced);
}

json Report::to_json() const {
  json folds_j = json::array();
  for (const auto& f : folds) {
    json e{{"repeat", f.repeat}, {"fold", f.fold}, {"accuracy", f.accuracy}, {"fit_hash", f.fit_hash}};
    if (!f.label.empty()) e["direction"] = f.label;
    folds_j.push_back(e);
  }
  json conf = json::array();
  for (Eigen::Index r = 0; r < confusion.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(confusion.cols()));
    for (Eigen::Index c = 0; c < confusion.cols(); ++c) row[static_cast<std::size_t>(c)] = confusion(r, c);
    conf.push_back(row);
  }
  return json{{"config", config},
              {"folds", folds_j},
              {"mean", mean},
              {"std", std},
              {"confusion", conf},
              {"mi_trace", mi_trace},
              {"wall_ms", wall_ms ? json(*wall_ms) : json(nullptr)}};
}

// ---- runs ------------------------------------------------------------------

Report run_cv(const RunConfig& config) { return run_cv(config, resolve_data(config.data)); }

Report run_cv(const RunConfig& config, const Dataset& data) {
  const auto start = std::chrono::steady_clock::now();
  config.validate();
  const auto pc = pipeline_for(config, data);
  const auto h = hierarchy_for(config, data.class_count());
  const auto& labels = data.labels();
  const auto plan = dataset::stratified_kfold(labels, config.cv.k, config.cv.repeats, config.cv.seed);
  const auto prep = prepare(data, pc);

  const int total = config.cv.k * config.cv.repeats;
  std::vector<FoldResult> results(static_cast<std::size_t>(total));
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) if (total > 1)
  for (int idx = 0; idx < total; ++idx) {
    const int repeat = idx / config.cv.k;
    const int fold = idx % config.cv.k;
    try {
      auto fold_pc = pc;
      fold_pc.seed = mix_seed(mix_seed(config.seed, static_cast<std::uint64_t>(repeat)), static_cast<std::uint64_t>(fold));
      const auto train = plan.train_indices(repeat, fold);
      const auto test = plan.test_indices(repeat, fold);
      auto r = evaluate(prep, labels, train, test, h, fold_pc);
      r.repeat = repeat;
      r.fold = fold;
      results[static_cast<std::size_t>(idx)] = std::move(r);
    } catch (...) {
#pragma omp critical(mmi_cv_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  Report report;
  report.config = to_json(config);
  report.config["resolved_pipeline"] = decoder::to_json(pc);
  report.config["hierarchy_order"] = h.order;
  report.folds = std::move(results);
  aggregate(report, data.class_count());
  if (config.timing) report.wall_ms = elapsed_ms(start);
  return report;
}

Report run_cross_session(const fs::path& a, const fs::path& b, const RunConfig& config) {
  auto report = run_cross_session(load_dataset(a), load_dataset(b), config);
  report.config["train_session"] = a.generic_string();
  report.config["test_session"] = b.generic_string();
  return report;
}

Report run_cross_session(const Dataset& a, const Dataset& b, const RunConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  require(a.feature_input() == b.feature_input(), "sessions differ in kind (epochs vs features)");
  require(a.class_count() == b.class_count(), "sessions differ in class count");
  if (a.feature_input()) {
    require(a.features->dims() == b.features->dims(), "sessions differ in feature dimension");
  } else {
    require(a.epochs->channels() == b.epochs->channels(), "sessions differ in channel count");
    require(a.epochs->samples() == b.epochs->samples(), "sessions differ in samples per trial");
    require(a.epochs->fs == b.epochs->fs, "sessions differ in sampling rate");
  }
  const auto pc = pipeline_for(config, a);
  const auto h = hierarchy_for(config, a.class_count());
  const auto prep_a = prepare(a, pc);
  const auto prep_b = prepare(b, pc);

  auto all_rows = [](const Dataset& d) {
    std::vector<std::size_t> rows(d.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
  };
  auto direction = [&](const PreparedSource& tr, const Dataset& dtr, const PreparedSource& te, const Dataset& dte,
                       int index, const char* name) {
    const auto dec = decoder::fit_hierarchical(tr.source, dtr.labels(), all_rows(dtr), h, pc, tr.geometry);
    FoldResult r;
    r.repeat = 0;
    r.fold = index;
    r.label = name;
    r.fit_hash = decoder::fit_hash(dec);
    r.predicted = decoder::predict(dec, te.source, all_rows(dte));
    r.truth = dte.labels();
    r.accuracy = accuracy_of(r.truth, r.predicted);
    if (dec.levels.front().reduction.fit) r.mi_trace = dec.levels.front().reduction.fit->mi_trace;
    return r;
  };

  Report report;
  report.config = to_json(config);
  report.config["resolved_pipeline"] = decoder::to_json(pc);
  report.config["hierarchy_order"] = h.order;
  report.folds.push_back(direction(prep_a, a, prep_b, b, 0, "train->test"));
  report.folds.push_back(direction(prep_b, b, prep_a, a, 1, "test->train"));
  aggregate(report, a.class_count());
  if (config.timing) report.wall_ms = elapsed_ms(start);
  return report;
}

decoder::HierarchicalDecoder fit_full(const RunConfig& config, const Dataset& data) {
  const auto pc = pipeline_for(config, data);
  const auto h = hierarchy_for(config, data.class_count());
  if (data.feature_input()) return decoder::fit_hierarchical(*data.features, h, pc);
  return decoder::fit_hierarchical(*data.epochs, h, pc);
}

}  // namespace mmi::harness
