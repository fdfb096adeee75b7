#include "mmi/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace mmi::dataset {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- EpochSet / LabeledFeatures --------------------------------------------

void EpochSet::validate() const {
  require(fs > 0.0, "sampling rate must be positive");
  require(trials.size() == labels.size(), "trial/label count mismatch");
  require(class_count >= 1, "class_count must be >= 1");
  for (std::size_t i = 0; i < trials.size(); ++i) {
    require(trials[i].rows() == trials.front().rows() && trials[i].cols() == trials.front().cols(),
            "all trials must share channel and sample counts");
    require(labels[i] >= 1 && labels[i] <= class_count,
            "label " + std::to_string(labels[i]) + " outside 1.." + std::to_string(class_count));
  }
  require(channel_names.empty() || static_cast<int>(channel_names.size()) == channels(),
          "channel name count must match channel count");
}

EpochSet EpochSet::subset(std::span<const std::size_t> indices) const {
  EpochSet out;
  out.fs = fs;
  out.class_count = class_count;
  out.channel_names = channel_names;
  out.trials.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    out.trials.push_back(trials.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

std::vector<int> LabeledFeatures::distinct_labels() const {
  std::set<int> s(labels.begin(), labels.end());
  return {s.begin(), s.end()};
}

void LabeledFeatures::validate() const {
  require(x.rows() == static_cast<Eigen::Index>(labels.size()), "feature/label row mismatch");
  require(labels.size() >= 2, "need at least two samples");
  require(x.allFinite(), "features contain non-finite entries");
}

LabeledFeatures LabeledFeatures::subset(std::span<const std::size_t> indices) const {
  LabeledFeatures out;
  out.class_count = class_count;
  out.x.resize(static_cast<Eigen::Index>(indices.size()), x.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.x.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(indices[r]));
    out.labels.push_back(labels.at(indices[r]));
  }
  return out;
}

// ---- FoldPlan / Hierarchy --------------------------------------------------

std::vector<std::size_t> FoldPlan::train_indices(int repeat, int fold) const {
  std::vector<std::size_t> out;
  const auto& a = assignments.at(static_cast<std::size_t>(repeat));
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::test_indices(int repeat, int fold) const {
  std::vector<std::size_t> out;
  const auto& a = assignments.at(static_cast<std::size_t>(repeat));
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] == fold) out.push_back(i);
  return out;
}

void Hierarchy::validate() const {
  require(order.size() >= 2, "hierarchy needs at least two classes");
  std::vector<int> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i)
    require(sorted[i] == static_cast<int>(i) + 1, "hierarchy order must be a permutation of 1..L");
}

int Hierarchy::position(int cls) const {
  auto it = std::find(order.begin(), order.end(), cls);
  require(it != order.end(), "class " + std::to_string(cls) + " not in hierarchy");
  return static_cast<int>(it - order.begin());
}

Hierarchy Hierarchy::identity(int class_count) {
  Hierarchy h;
  h.order.resize(static_cast<std::size_t>(class_count));
  std::iota(h.order.begin(), h.order.end(), 1);
  return h;
}

// ---- I/O -------------------------------------------------------------------

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

float from_le(float v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    u = __builtin_bswap32(u);
    std::memcpy(&v, &u, 4);
    return v;
  }
}

}  // namespace

EpochSet load_epochs(const fs::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  const auto data_path = dir / "data.f32";
  const auto labels_path = dir / "labels.csv";
  for (const auto& p : {manifest_path, data_path, labels_path})
    if (!fs::exists(p)) throw IoError("missing file " + p.string());

  json m;
  try {
    m = json::parse(read_text(manifest_path));
  } catch (const json::exception& e) {
    throw IoError("malformed manifest.json: " + std::string(e.what()));
  }
  const auto get_int = [&](const char* key) -> long long {
    if (!m.contains(key) || !m[key].is_number_integer())
      throw IoError(std::string("manifest.json: missing integer field '") + key + "'");
    return m[key].get<long long>();
  };
  const long long trials = get_int("trials");
  const long long channels = get_int("channels");
  const long long samples = get_int("samples");
  if (!m.contains("fs") || !m["fs"].is_number()) throw IoError("manifest.json: missing 'fs'");
  const double fs_hz = m["fs"].get<double>();
  if (trials < 1 || channels < 1 || samples < 1) throw IoError("manifest.json: non-positive dimensions");

  const auto expected = static_cast<std::uintmax_t>(trials * channels * samples) * sizeof(float);
  const auto actual = fs::file_size(data_path);
  if (actual != expected)
    throw IoError("data.f32 size mismatch: expected " + std::to_string(expected) + " bytes, found " +
                  std::to_string(actual));

  EpochSet out;
  out.fs = fs_hz;
  std::ifstream in(data_path, std::ios::binary);
  std::vector<float> buf(static_cast<std::size_t>(channels * samples));
  out.trials.reserve(static_cast<std::size_t>(trials));
  for (long long t = 0; t < trials; ++t) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw IoError("short read in data.f32");
    Matrix trial(channels, samples);
    for (long long c = 0; c < channels; ++c)
      for (long long s = 0; s < samples; ++s)
        trial(c, s) = static_cast<double>(from_le(buf[static_cast<std::size_t>(c * samples + s)]));
    out.trials.push_back(std::move(trial));
  }

  out.labels = load_labels_csv(labels_path);
  if (static_cast<long long>(out.labels.size()) != trials)
    throw IoError("labels.csv has " + std::to_string(out.labels.size()) + " labels for " +
                  std::to_string(trials) + " trials");
  if (m.contains("classes") && m["classes"].is_number_integer()) {
    out.class_count = m["classes"].get<int>();
  } else {
    out.class_count = *std::max_element(out.labels.begin(), out.labels.end());
  }
  for (int l : out.labels)
    if (l < 1 || l > out.class_count)
      throw IoError("label " + std::to_string(l) + " out of range 1.." + std::to_string(out.class_count));

  if (m.contains("channel_names") && m["channel_names"].is_array()) {
    for (const auto& n : m["channel_names"]) out.channel_names.push_back(n.get<std::string>());
    if (static_cast<long long>(out.channel_names.size()) != channels)
      throw IoError("channel_names length does not match channels");
  }
  return out;
}

void save_epochs(const EpochSet& epochs, const fs::path& dir) {
  epochs.validate();
  fs::create_directories(dir);
  json m;
  m["trials"] = epochs.size();
  m["channels"] = epochs.channels();
  m["samples"] = epochs.samples();
  m["fs"] = epochs.fs;
  m["classes"] = epochs.class_count;
  m["channel_names"] = epochs.channel_names;
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
    out << m.dump(2) << '\n';
  }
  std::ofstream data(dir / "data.f32", std::ios::binary);
  if (!data) throw IoError("cannot write data.f32");
  std::vector<float> buf(static_cast<std::size_t>(epochs.channels() * epochs.samples()));
  for (const auto& trial : epochs.trials) {
    for (Eigen::Index c = 0; c < trial.rows(); ++c)
      for (Eigen::Index s = 0; s < trial.cols(); ++s)
        buf[static_cast<std::size_t>(c * trial.cols() + s)] = from_le(static_cast<float>(trial(c, s)));
    data.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  save_labels_csv(epochs.labels, dir / "labels.csv");
}

Matrix load_feature_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw IoError("non-numeric cell '" + cell + "' in " + path.string());
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError("ragged rows in " + path.string());
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("empty feature file " + path.string());
  Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return x;
}

void save_feature_csv(const Matrix& x, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (c) out << ',';
      out << x(r, c);
    }
    out << '\n';
  }
}

std::vector<int> load_labels_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<int> labels;
  std::string line;
  while (std::getline(in, line)) {
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    try {
      std::size_t used = 0;
      labels.push_back(std::stoi(line.substr(first), &used));
    } catch (const std::exception&) {
      throw IoError("bad label line '" + line + "' in " + path.string());
    }
  }
  return labels;
}

void save_labels_csv(std::span<const int> labels, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (int l : labels) out << l << '\n';
}

// ---- synthetic data --------------------------------------------------------

LabeledFeatures synth_gaussian(const GaussianSpec& spec, std::uint64_t seed) {
  require(!spec.means.empty(), "need at least one class mean");
  require(spec.samples_per_class >= 1, "samples_per_class must be >= 1");
  const auto d = spec.variances.size();
  require(d >= 1, "need at least one dimension");
  for (const auto& m : spec.means) require(m.size() == d, "mean/variance dimension mismatch");
  for (Eigen::Index j = 0; j < d; ++j) require(spec.variances[j] > 0.0, "variances must be positive");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Vector sd = spec.variances.cwiseSqrt();
  const auto classes = static_cast<int>(spec.means.size());
  LabeledFeatures out;
  out.class_count = classes;
  out.x.resize(static_cast<Eigen::Index>(classes) * spec.samples_per_class, d);
  Eigen::Index row = 0;
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < spec.samples_per_class; ++i, ++row) {
      for (Eigen::Index j = 0; j < d; ++j) out.x(row, j) = spec.means[static_cast<std::size_t>(c)][j] + sd[j] * normal(rng);
      out.labels.push_back(c + 1);
    }
  }
  return out;
}

EpochSet synth_oscillatory_epochs(const OscillatorySpec& spec, std::uint64_t seed) {
  require(spec.channels >= 1, "need at least one channel");
  require(spec.fs > 0.0 && spec.duration_s > 0.0, "fs and duration must be positive");
  require(spec.trials_per_class >= 1, "trials_per_class must be >= 1");
  require(spec.noise_sigma >= 0.0, "noise sigma must be non-negative");
  require(!spec.classes.empty(), "need at least one class");
  for (const auto& c : spec.classes) {
    require(c.freq_hz > 0.0 && c.freq_hz < spec.fs / 2.0, "rhythm frequency must lie below Nyquist");
    for (const auto& d : c.drives) require(d.channel >= 0 && d.channel < spec.channels, "drive channel out of range");
  }

  const auto samples = static_cast<Eigen::Index>(std::lround(spec.fs * spec.duration_s));
  require(samples >= 2, "epoch too short");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, spec.noise_sigma > 0 ? spec.noise_sigma : 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);

  EpochSet out;
  out.fs = spec.fs;
  out.class_count = static_cast<int>(spec.classes.size());
  for (int c = 0; c < spec.channels; ++c) out.channel_names.push_back("ch" + std::to_string(c));
  for (std::size_t k = 0; k < spec.classes.size(); ++k) {
    const auto& rhythm = spec.classes[k];
    for (int t = 0; t < spec.trials_per_class; ++t) {
      Matrix trial(spec.channels, samples);
      for (Eigen::Index c = 0; c < trial.rows(); ++c)
        for (Eigen::Index s = 0; s < samples; ++s) trial(c, s) = spec.noise_sigma > 0 ? normal(rng) : 0.0;
      for (const auto& drive : rhythm.drives) {
        const double ph = phase(rng);
        const double w = 2.0 * std::numbers::pi * rhythm.freq_hz / spec.fs;
        for (Eigen::Index s = 0; s < samples; ++s)
          trial(drive.channel, s) += drive.amplitude * std::sin(w * static_cast<double>(s) + ph);
      }
      out.trials.push_back(std::move(trial));
      out.labels.push_back(static_cast<int>(k) + 1);
    }
  }
  return out;
}

// ---- folds and hierarchy ---------------------------------------------------

FoldPlan stratified_kfold(std::span<const int> labels, int k, int repeats, std::uint64_t seed) {
  require(k >= 2, "k must be >= 2");
  require(repeats >= 1, "repeats must be >= 1");
  std::set<int> classes(labels.begin(), labels.end());
  for (int c : classes) {
    const auto count = std::count(labels.begin(), labels.end(), c);
    require(count >= k, "class " + std::to_string(c) + " has " + std::to_string(count) +
                            " samples, fewer than k=" + std::to_string(k));
  }

  FoldPlan plan;
  plan.k = k;
  plan.repeats = repeats;
  plan.seed = seed;
  std::mt19937_64 rng(seed);
  for (int r = 0; r < repeats; ++r) {
    std::vector<int> assign(labels.size(), -1);
    // Dealing continues across classes so that per-class remainders land on
    // different folds; fold sizes then differ by at most one overall.
    int next = 0;
    for (int c : classes) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == c) idx.push_back(i);
      std::shuffle(idx.begin(), idx.end(), rng);
      for (auto i : idx) {
        assign[i] = next;
        next = (next + 1) % k;
      }
    }
    plan.assignments.push_back(std::move(assign));
  }
  return plan;
}

LevelSplit hierarchy_level_split(std::span<const int> labels, const Hierarchy& h, int level) {
  h.validate();
  require(level >= 1 && level <= h.levels(),
          "level " + std::to_string(level) + " outside 1.." + std::to_string(h.levels()));
  const int terminal = h.order[static_cast<std::size_t>(level - 1)];
  std::set<int> rest(h.order.begin() + level, h.order.end());
  LevelSplit out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == terminal) {
      out.indices.push_back(i);
      out.binary_labels.push_back(+1);
    } else if (rest.contains(labels[i])) {
      out.indices.push_back(i);
      out.binary_labels.push_back(-1);
    }
  }
  return out;
}

LabeledFeatures hierarchy_split(const LabeledFeatures& features, const Hierarchy& h, int level) {
  auto split = hierarchy_level_split(features.labels, h, level);
  LabeledFeatures out = features.subset(split.indices);
  out.labels = std::move(split.binary_labels);
  out.class_count = 2;
  return out;
}

}  // namespace mmi::dataset
