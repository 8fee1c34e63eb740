// Command-line front end: synth, extract, analyze, train, evaluate, predict,
// paramcount, gradcheck.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>

#include "ssnet/dsp/audio.hpp"
#include "ssnet/harness/analyze.hpp"
#include "ssnet/harness/features.hpp"
#include "ssnet/harness/manifest.hpp"
#include "ssnet/harness/synth.hpp"
#include "ssnet/harness/train.hpp"
#include "ssnet/model/checkpoint.hpp"
#include "ssnet/model/grad_check.hpp"

namespace fs = std::filesystem;
using namespace ssnet;

namespace {

int parse_channels(const std::string& s) {
  if (s == "stereo") return 2;
  if (s == "mono") return 1;
  throw ConfigError("--channels must be mono or stereo");
}

struct ModelFlags {
  std::string variant = "subspectral";
  int mel_bins = 40;
  int sub_size = 20;
  int hop = 10;
  int frames = 500;
  int pool2_time = 0;  // 0: frames / 5
  std::string channels = "stereo";
  int classes = 10;
  bool head_compat = false;
  bool no_sub_loss = false;
  int width = 1;
  double dropout = 0.3;

  void add(CLI::App* app, bool shape_flags = true) {
    app->add_option("--variant", variant, "subspectral | baseline")->capture_default_str();
    app->add_option("--sub-size", sub_size, "sub-spectrogram size X (mel bins)")->capture_default_str();
    app->add_option("--hop-size", hop, "sub-spectrogram hop Y (mel bins)")->capture_default_str();
    app->add_option("--pool2-time", pool2_time, "time extent of the second pooling (default frames/5)");
    app->add_flag("--head-compat", head_compat, "global head sized with floor(log2 M) hidden layers");
    app->add_flag("--no-sub-loss", no_sub_loss, "drop the sub-classifier softmax heads");
    app->add_option("--width", width, "baseline width multiplier")->capture_default_str();
    app->add_option("--dropout", dropout)->capture_default_str();
    if (shape_flags) {
      app->add_option("--mel-bins", mel_bins)->capture_default_str();
      app->add_option("--frames", frames)->capture_default_str();
      app->add_option("--channels", channels, "mono | stereo")->capture_default_str();
      app->add_option("--classes", classes)->capture_default_str();
    }
  }

  model::ModelConfig config() const {
    model::ModelConfig c;
    c.variant = model::parse_variant(variant);
    c.mel_bins = mel_bins;
    c.sub_size = sub_size;
    c.hop = hop;
    c.frames = frames;
    c.pool2_time = pool2_time > 0 ? pool2_time : frames / 5;
    c.channels = parse_channels(channels);
    c.classes = classes;
    c.head_compat = head_compat;
    c.sub_heads = !no_sub_loss;
    c.width_multiplier = width;
    c.dropout = dropout;
    return c;
  }
};

void print_layer_table(model::Model<float>& m) {
  harness::Table t({"layer", "kind", "output", "params"});
  for (const auto& r : m.layer_table()) {
    t.row({r.name, r.kind, std::to_string(r.output.c) + "x" + std::to_string(r.output.h) + "x" + std::to_string(r.output.w),
           std::to_string(r.params)});
  }
  t.row({"total", "", "", std::to_string(model::count_params(m))});
  std::cout << t.str();
}

harness::DatasetManifest read_manifest(const std::string& manifest, const std::string& train_list,
                                       const std::string& test_list) {
  if (!manifest.empty()) return harness::parse_manifest(manifest);
  if (train_list.empty() || test_list.empty()) {
    throw ConfigError("give --manifest, or both --train-list and --test-list");
  }
  return harness::parse_manifest_pair(train_list, test_list);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sub-spectrogram CNN toolkit for acoustic scene classification"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic band-limited noise fixture");
  harness::SynthConfig synth_cfg;
  std::string synth_out;
  std::string synth_channels = "stereo";
  synth->add_option("--out", synth_out)->required();
  synth->add_option("--classes", synth_cfg.classes)->capture_default_str();
  synth->add_option("--per-class", synth_cfg.per_class, "training clips per class")->capture_default_str();
  synth->add_option("--test-per-class", synth_cfg.test_per_class, "test clips per class (default: --per-class)");
  synth->add_option("--seconds", synth_cfg.seconds)->capture_default_str();
  synth->add_option("--sample-rate", synth_cfg.sample_rate)->capture_default_str();
  synth->add_option("--channels", synth_channels, "mono | stereo")->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed)->capture_default_str();

  // extract
  auto* extract = app.add_subcommand("extract", "log mel features + train-split normalizer");
  std::string manifest, train_list, test_list, ex_out, ex_channels = "stereo";
  harness::FeatureConfig fcfg;
  extract->add_option("--manifest", manifest, "TSV: filename, scene_label, split");
  extract->add_option("--train-list", train_list, "DCASE-style training list");
  extract->add_option("--test-list", test_list, "DCASE-style evaluation list");
  extract->add_option("--out", ex_out)->required();
  extract->add_option("--mel-bins", fcfg.mel.n_mels)->capture_default_str();
  extract->add_option("--channels", ex_channels, "mono | stereo")->capture_default_str();
  extract->add_option("--frames", fcfg.frames, "frames per clip (default: clip length / hop)");
  extract->add_option("--fft-size", fcfg.stft.fft_size)->capture_default_str();
  extract->add_option("--jobs", fcfg.jobs)->capture_default_str();

  // analyze
  auto* analyze = app.add_subcommand("analyze", "per-bin histograms and confusion-like distance matrices");
  std::string an_features, an_out, an_metric = "chisq";
  double an_k = 10.0;
  analyze->add_option("--features", an_features)->required();
  analyze->add_option("--out", an_out)->required();
  analyze->add_option("--k", an_k)->capture_default_str();
  analyze->add_option("--metric", an_metric, "chisq | kl | hellinger (also written to matrix.tsv)")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "train with Adam and report average-best accuracy");
  ModelFlags train_model;
  harness::TrainConfig tcfg;
  std::string tr_features, tr_out;
  train_model.add(train, false);
  train->add_option("--features", tr_features)->required();
  train->add_option("--out", tr_out)->required();
  train->add_option("--epochs", tcfg.epochs)->capture_default_str();
  train->add_option("--lr", tcfg.lr)->capture_default_str();
  train->add_option("--batch", tcfg.batch)->capture_default_str();
  train->add_option("--seed", tcfg.seed)->capture_default_str();
  train->add_option("--repeats", tcfg.repeats)->capture_default_str();
  bool quiet = false;
  train->add_flag("--quiet", quiet, "no per-epoch log on stderr");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "per-head accuracy and confusion matrices");
  std::string ev_ckpt, ev_features, ev_out, ev_split = "test";
  eval->add_option("--checkpoint", ev_ckpt)->required();
  eval->add_option("--features", ev_features)->required();
  eval->add_option("--split", ev_split, "test | train")->capture_default_str();
  eval->add_option("--out", ev_out, "directory for TSV reports");

  // predict
  auto* predict = app.add_subcommand("predict", "classify WAV files");
  std::string pr_ckpt, pr_features;
  std::vector<std::string> pr_files;
  predict->add_option("--checkpoint", pr_ckpt)->required();
  predict->add_option("--features", pr_features, "feature directory (normalizer and vocabulary)")->required();
  predict->add_option("files", pr_files)->required();

  // paramcount
  auto* paramcount = app.add_subcommand("paramcount", "per-layer output shapes and parameter counts");
  ModelFlags pc_model;
  pc_model.add(paramcount);

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the multi-head loss");
  ModelFlags gc_model;
  gc_model.mel_bins = 20;
  gc_model.sub_size = 10;
  gc_model.hop = 5;
  gc_model.frames = 25;
  gc_model.classes = 4;
  gc_model.dropout = 0.0;
  gc_model.add(gradcheck);
  std::string gc_precision = "f64";
  int gc_batch = 2;
  std::uint64_t gc_seed = 0;
  nn::GradCheckOptions gc_opt;
  gradcheck->add_option("--precision", gc_precision, "f32 | f64")->capture_default_str();
  gradcheck->add_option("--batch", gc_batch)->capture_default_str();
  gradcheck->add_option("--seed", gc_seed)->capture_default_str();
  gradcheck->add_option("--coords", gc_opt.coords_per_tensor, "coordinates sampled per tensor")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      synth_cfg.channels = parse_channels(synth_channels);
      const auto m = harness::synth_fixture(synth_cfg, synth_out);
      std::cout << "wrote " << m.entries.size() << " clips to " << synth_out << "\n";
    } else if (*extract) {
      fcfg.mono = parse_channels(ex_channels) == 1;
      const auto m = read_manifest(manifest, train_list, test_list);
      m.require_both_splits();
      const auto d = harness::extract_dataset(m, fcfg);
      harness::save_dataset({ex_out}, d, m, fcfg);
      std::cout << "train " << d.train.size() << " test " << d.test.size() << " shape " << d.train.channels << "x"
                << d.train.bins << "x" << d.train.frames << "\n";
    } else if (*analyze) {
      const harness::FeatureDir dir{an_features};
      const auto names = harness::load_vocabulary(dir);
      const auto a = harness::analyze_bands(harness::load_features(dir.train()), harness::load_features(dir.test()),
                                            names.size(), an_k);
      const auto primary = stats::parse_metric(an_metric);
      harness::write_analysis(an_out, a, names, primary);
      for (const auto& mtx : a.matrices) {
        const auto [i, j] = stats::most_similar_pair(mtx);
        std::cout << stats::metric_name(mtx.metric) << "\tmost similar: " << names[i] << " / " << names[j] << "\n";
      }
    } else if (*train) {
      const harness::FeatureDir dir{tr_features};
      const auto names = harness::load_vocabulary(dir);
      const auto train_set = harness::load_features(dir.train());
      const auto test_set = harness::load_features(dir.test());
      train_model.mel_bins = static_cast<int>(train_set.bins);
      train_model.frames = static_cast<int>(train_set.frames);
      train_model.channels = train_set.channels == 1 ? "mono" : "stereo";
      train_model.classes = static_cast<int>(names.size());
      const auto mcfg = train_model.config();
      fs::create_directories(tr_out);
      const nlohmann::json meta{{"vocabulary", names}};
      harness::EpochCallback log;
      if (!quiet) {
        log = [](const harness::RunResult& r, const harness::EpochRecord& e) {
          std::cerr << "run " << r.run << " epoch " << e.epoch << " loss " << harness::fmt6(e.loss) << " test "
                    << harness::fmt6(e.test_accuracy.back());
          if (!e.train_accuracy.empty()) std::cerr << " train " << harness::fmt6(e.train_accuracy.back());
          std::cerr << "\n";
        };
      }
      const auto result = harness::train(mcfg, tcfg, train_set, test_set, meta, log);
      harness::Table summary({"run", "best_epoch", "best_accuracy"});
      for (const auto& r : result.runs) {
        const std::string suffix = tcfg.repeats > 1 ? ".run" + std::to_string(r.run) : "";
        std::ofstream(fs::path(tr_out) / ("best" + suffix + ".ssnw"), std::ios::binary) << r.best_checkpoint;
        std::ofstream(fs::path(tr_out) / ("final" + suffix + ".ssnw"), std::ios::binary) << r.final_checkpoint;
        harness::history_table(r).save(fs::path(tr_out) / ("history" + suffix + ".tsv"));
        harness::write_eval_report(fs::path(tr_out) / ("best" + suffix), r.best_report, names);
        summary.row({std::to_string(r.run), std::to_string(r.best_epoch), harness::fmt6(r.best_accuracy)});
      }
      summary.row({"average_best", "", harness::fmt6(result.average_best)});
      summary.save(fs::path(tr_out) / "summary.tsv");
      std::cout << summary.str();
    } else if (*eval) {
      const harness::FeatureDir dir{ev_features};
      const auto names = harness::load_vocabulary(dir);
      auto ck = model::load_checkpoint(ev_ckpt);
      const auto set = harness::load_features(ev_split == "train" ? dir.train() : dir.test());
      const auto report = harness::evaluate(*ck.model, set);
      if (!ev_out.empty()) harness::write_eval_report(ev_out, report, names);
      std::cout << harness::accuracy_table(report).str();
      std::cout << "\n" << harness::confusion_table(report.global(), names).str();
    } else if (*predict) {
      const harness::FeatureDir dir{pr_features};
      const auto names = harness::load_vocabulary(dir);
      const auto norm = harness::load_normalizer(dir.normalizer());
      auto ck = model::load_checkpoint(pr_ckpt);
      const auto meta = nlohmann::json::parse(std::ifstream(dir.meta()));
      harness::FeatureConfig cfg;
      const auto& fj = meta.at("features");
      cfg.stft.fft_size = fj.at("fft_size");
      cfg.stft.window_ms = fj.at("window_ms");
      cfg.stft.hop_ms = fj.at("hop_ms");
      cfg.mel.n_mels = fj.at("n_mels");
      cfg.mel.f_min = fj.at("f_min");
      cfg.mel.f_max = fj.at("f_max");
      cfg.mono = fj.at("mono");
      cfg.frames = static_cast<std::size_t>(ck.config.frames);
      harness::Table t({"file", "prediction", "probability"});
      for (const auto& f : pr_files) {
        harness::FeatureSet one;
        one.push(dsp::apply_normalizer(harness::extract_clip(f, cfg), norm), 0);
        const std::size_t idx = 0;
        const auto probs = ck.model->predict(one.batch<float>(std::span(&idx, 1)));
        const auto& g = probs.back();
        const auto best = static_cast<std::size_t>(nn::argmax_rows(g)[0]);
        t.row({f, names.at(best), harness::fmt6(g[best])});
      }
      std::cout << t.str();
    } else if (*paramcount) {
      auto m = model::build_model<float>(pc_model.config());
      print_layer_table(*m);
    } else if (*gradcheck) {
      auto cfg = gc_model.config();
      cfg.seed = gc_seed;
      gc_opt.seed = gc_seed;
      std::mt19937_64 rng(gc_seed ^ 0x5eedULL);
      std::normal_distribution<double> gauss(0.0, 1.0);
      nn::Tensor<double> x({static_cast<std::size_t>(gc_batch), static_cast<std::size_t>(cfg.channels),
                            static_cast<std::size_t>(cfg.mel_bins), static_cast<std::size_t>(cfg.frames)});
      for (auto& v : x.values()) v = gauss(rng);
      std::vector<int> labels;
      for (int i = 0; i < gc_batch; ++i) labels.push_back(static_cast<int>(rng() % static_cast<unsigned>(cfg.classes)));
      const std::size_t heads = model::build_model<double>(cfg)->head_count();
      const std::vector<bool> enabled(heads, true);
      nn::GradCheckReport rep;
      double tol = 0.0;
      if (gc_precision == "f32") {
        gc_opt.scale_floor = nn::scale_floor_for(true);
        rep = model::grad_check_model<float>(cfg, x, labels, enabled, gc_opt);
        tol = 1e-4;
      } else if (gc_precision == "f64") {
        gc_opt.scale_floor = nn::scale_floor_for(false);
        rep = model::grad_check_model<double>(cfg, x, labels, enabled, gc_opt);
        tol = 1e-7;
      } else {
        throw ConfigError("--precision must be f32 or f64");
      }
      std::cout << "checked\t" << rep.checked << "\nskipped\t" << rep.skipped << "\nmax_rel_error\t"
                << harness::fmt6(rep.max_rel_error) << "\nworst\t" << rep.worst.name << "[" << rep.worst.index << "]\n";
      return rep.passed(tol) ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
