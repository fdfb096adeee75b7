// Command-line front end: synthetic data, feature extraction, evaluation
// runs, mutual-information diagnostics and single-trial decoding.

#include "mmi/csp.hpp"
#include "mmi/dataset.hpp"
#include "mmi/decoder.hpp"
#include "mmi/density.hpp"
#include "mmi/harness.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mmi;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string pipeline;
  std::string preset;
  std::string data;
  std::string train;
  std::string test;
  std::string features;
  std::string labels;
  std::string model;
  bool timing = false;
};

void emit(const json& report, const std::string& out) {
  const std::string text = report.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
    return;
  }
  const fs::path p(out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw IoError("cannot write " + out);
  f << text;
  std::cerr << "wrote " << out << '\n';
}

// Config from --config, or assembled from --preset/--data plus --seed.
harness::RunConfig run_config(const Options& o) {
  harness::RunConfig c;
  if (!o.config.empty()) {
    c = harness::load_run_config(o.config);
  } else {
    if (!o.seed) throw InvalidArgument("without --config an explicit --seed is required");
    if (o.preset.empty() == o.data.empty()) throw InvalidArgument("without --config give exactly one of --preset or --data");
    if (!o.preset.empty()) {
      c.data.preset = o.preset;
      c.data.preset_seed = *o.seed;
    } else {
      c.data.path = o.data;
    }
    c.pipeline = json{{"name", o.pipeline.empty() ? std::string("mmi_lint") : o.pipeline}};
    c.cv.seed = *o.seed;
    c.seed = *o.seed;
  }
  if (!o.pipeline.empty()) c.pipeline["name"] = o.pipeline;
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.out = o.out;
  if (o.timing) c.timing = true;
  c.validate();
  return c;
}

std::string out_path(const harness::RunConfig& c) { return c.out ? c.out->string() : std::string(); }

int cmd_synth(const Options& o) {
  if (!o.seed) throw InvalidArgument("--seed is required");
  const auto data = harness::make_preset(o.preset, *o.seed);
  harness::save_dataset(data, o.out);
  json report{{"command", "synth"},
              {"preset", o.preset},
              {"seed", *o.seed},
              {"kind", data.feature_input() ? "features" : "epochs"},
              {"rows", data.size()},
              {"classes", data.class_count()}};
  if (data.feature_input()) {
    report["dims"] = data.features->dims();
  } else {
    report["channels"] = data.epochs->channels();
    report["samples"] = data.epochs->samples();
    report["fs"] = data.epochs->fs;
  }
  emit(report, (fs::path(o.out) / "synth_report.json").string());
  return 0;
}

int cmd_extract(const Options& o) {
  auto c = run_config(o);
  const fs::path dir = c.out ? *c.out : fs::path("features");
  const auto data = harness::resolve_data(c.data);
  if (data.feature_input()) throw InvalidArgument("extract needs epoch data");
  const auto pc = harness::pipeline_for(c, data);
  const auto h = harness::hierarchy_for(c, data.class_count());
  const auto& epochs = *data.epochs;
  const auto bands = csp::filter_epochs(epochs, pc.fbcsp.bands, pc.fbcsp.order);
  fs::create_directories(dir);
  json levels = json::array();
  std::vector<std::size_t> all(epochs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  for (int level = 1; level <= h.levels(); ++level) {
    const auto split = dataset::hierarchy_level_split(epochs.labels, h, level);
    const auto model = csp::fit_fbcsp_rows(bands, split.indices, split.binary_labels, pc.fbcsp, epochs.fs);
    const Matrix x = csp::fbcsp_feature_matrix(model, bands, all);
    const auto name = "features_level" + std::to_string(level) + ".csv";
    dataset::save_feature_csv(x, dir / name);
    levels.push_back({{"level", level}, {"file", name}, {"dims", x.cols()}, {"fit_rows", split.indices.size()}});
  }
  dataset::save_labels_csv(epochs.labels, dir / "labels.csv");
  emit(json{{"command", "extract"},
            {"config", harness::to_json(c)},
            {"bands", pc.fbcsp.bands},
            {"k", pc.fbcsp.k},
            {"levels", levels}},
       (dir / "extract_report.json").string());
  return 0;
}

int cmd_cv(const Options& o) {
  const auto c = run_config(o);
  const auto report = harness::run_cv(c);
  std::cerr << "mean accuracy " << report.mean << " (std " << report.std << ", " << report.folds.size() << " folds)\n";
  emit(report.to_json(), out_path(c));
  return 0;
}

int cmd_cross_session(const Options& o) {
  Options base = o;
  if (base.config.empty() && base.data.empty() && base.preset.empty()) base.data = o.train;
  const auto c = run_config(base);
  const auto report = harness::run_cross_session(o.train, o.test, c);
  std::cerr << "train->test " << report.folds[0].accuracy << ", test->train " << report.folds[1].accuracy << '\n';
  emit(report.to_json(), out_path(c));
  return 0;
}

int cmd_mi(const Options& o) {
  dataset::LabeledFeatures f;
  f.x = dataset::load_feature_csv(o.features);
  f.labels = dataset::load_labels_csv(o.labels);
  require(f.x.rows() == static_cast<Eigen::Index>(f.labels.size()), "features and labels disagree on row count");
  f.validate();
  const double mi = density::average_mi(f);
  const auto priors = density::empirical_priors(f.labels);
  const double h = density::label_entropy(priors);
  const auto bounds = density::error_bounds(mi, priors);
  std::cout << "I(Y;C)  = " << mi << " nats\n"
            << "H(C)    = " << h << " nats\n"
            << "Fano lower bound on error      = " << bounds.lower << '\n'
            << "Hellman-Raviv upper bound      = " << bounds.upper << '\n';
  json report{{"command", "mi"},
              {"features", o.features},
              {"labels", o.labels},
              {"rows", f.size()},
              {"dims", f.dims()},
              {"mi", mi},
              {"entropy", h},
              {"priors", priors},
              {"fano_lower", bounds.lower},
              {"hellman_raviv_upper", bounds.upper}};
  if (!o.out.empty()) emit(report, o.out);
  else std::cout << report.dump(2) << '\n';
  return 0;
}

int cmd_fit(const Options& o) {
  auto c = run_config(o);
  if (!c.out) throw InvalidArgument("fit needs --out (decoder file)");
  const auto data = harness::resolve_data(c.data);
  const auto dec = harness::fit_full(c, data);
  decoder::save_decoder(dec, *c.out);
  std::cerr << "wrote " << c.out->string() << " (fit hash " << decoder::fit_hash(dec) << ")\n";
  return 0;
}

int cmd_decode(const Options& o) {
  const auto dec = decoder::load_decoder(o.model);
  const auto data = harness::load_dataset(o.data);
  json trials = json::array();
  std::vector<int> predicted;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = data.feature_input() ? decoder::decode_features(dec, data.features->x.row(static_cast<Eigen::Index>(i)).transpose())
                                        : decoder::decode(dec, data.epochs->trials[i]);
    predicted.push_back(r.label);
    trials.push_back({{"trial", i}, {"label", r.label}, {"scores", r.scores}});
  }
  const auto& truth = data.labels();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == predicted[i] ? 1 : 0;
  const auto conf = harness::confusion_matrix(truth, predicted, dec.hierarchy.class_count());
  json conf_j = json::array();
  for (Eigen::Index r = 0; r < conf.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(conf.cols()));
    for (Eigen::Index k = 0; k < conf.cols(); ++k) row[static_cast<std::size_t>(k)] = conf(r, k);
    conf_j.push_back(row);
  }
  const double acc = truth.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(truth.size());
  std::cerr << "decoded " << truth.size() << " trials, accuracy " << acc << '\n';
  emit(json{{"command", "decode"},
            {"model", o.model},
            {"fit_hash", decoder::fit_hash(dec)},
            {"data", o.data},
            {"trials", trials},
            {"accuracy", acc},
            {"confusion", conf_j}},
       o.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mutual-information feature learning and hierarchical EEG decoding"};
  app.require_subcommand(1);
  Options o;
  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", o.seed, "Random seed"); };

  auto* synth = app.add_subcommand("synth", "Write a synthetic preset dataset");
  synth->add_option("--preset", o.preset, "fourclass | jointpair | xor")->required();
  add_seed(synth);
  synth->add_option("--out", o.out, "Output directory")->required();

  auto* extract = app.add_subcommand("extract", "Write per-level filter-bank CSP features");
  extract->add_option("--config", o.config, "Run configuration (JSON)");
  extract->add_option("--data", o.data, "Epoch directory");
  extract->add_option("--preset", o.preset, "Synthetic preset instead of --data");
  extract->add_option("--pipeline", o.pipeline, "Pipeline name (bands and K)");
  add_seed(extract);
  extract->add_option("--out", o.out, "Output directory");

  auto* cv = app.add_subcommand("cv", "Repeated stratified k-fold evaluation");
  cv->add_option("--config", o.config, "Run configuration (JSON)");
  cv->add_option("--data", o.data, "Dataset directory");
  cv->add_option("--preset", o.preset, "Synthetic preset instead of --data");
  cv->add_option("--pipeline", o.pipeline, "Pipeline override");
  add_seed(cv);
  cv->add_option("--out", o.out, "Report path");
  cv->add_flag("--timing", o.timing, "Record wall time in the report");

  auto* cross = app.add_subcommand("cross-session", "Train on one session, test on the other, both ways");
  cross->add_option("--train", o.train, "First session directory")->required();
  cross->add_option("--test", o.test, "Second session directory")->required();
  cross->add_option("--config", o.config, "Run configuration (JSON)");
  cross->add_option("--pipeline", o.pipeline, "Pipeline override");
  add_seed(cross);
  cross->add_option("--out", o.out, "Report path");
  cross->add_flag("--timing", o.timing, "Record wall time in the report");

  auto* mi = app.add_subcommand("mi", "Mutual information and Bayes error bounds of a feature set");
  mi->add_option("--features", o.features, "Header-less feature CSV")->required();
  mi->add_option("--labels", o.labels, "Label CSV")->required();
  mi->add_option("--out", o.out, "Report path");

  auto* fit = app.add_subcommand("fit", "Fit a decoder on a whole dataset and save it");
  fit->add_option("--config", o.config, "Run configuration (JSON)");
  fit->add_option("--data", o.data, "Dataset directory");
  fit->add_option("--preset", o.preset, "Synthetic preset instead of --data");
  fit->add_option("--pipeline", o.pipeline, "Pipeline override");
  add_seed(fit);
  fit->add_option("--out", o.out, "Decoder file")->required();

  auto* dec = app.add_subcommand("decode", "Decode every trial of a dataset with a saved decoder");
  dec->add_option("--model", o.model, "Decoder file")->required();
  dec->add_option("--data", o.data, "Dataset directory")->required();
  dec->add_option("--out", o.out, "Report path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(o);
    if (extract->parsed()) return cmd_extract(o);
    if (cv->parsed()) return cmd_cv(o);
    if (cross->parsed()) return cmd_cross_session(o);
    if (mi->parsed()) return cmd_mi(o);
    if (fit->parsed()) return cmd_fit(o);
    if (dec->parsed()) return cmd_decode(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
