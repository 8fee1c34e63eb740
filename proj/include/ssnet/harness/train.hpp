#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssnet/error.hpp"
#include "ssnet/harness/features.hpp"
#include "ssnet/harness/report.hpp"
#include "ssnet/model/checkpoint.hpp"
#include "ssnet/model/subspectral.hpp"
#include "ssnet/nn/loss.hpp"
#include "ssnet/nn/optim.hpp"
#include "ssnet/util/seed.hpp"

namespace ssnet::harness {

using model::Model;
using model::ModelConfig;

struct TrainConfig {
  int epochs = 200;
  double lr = 0.001;
  int batch = 16;
  std::uint64_t seed = 0;
  int repeats = 3;
  bool track_train_accuracy = true;  // eval-mode pass over the train split each epoch

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
    if (batch < 1) throw ConfigError("batch size must be >= 1");
    if (repeats < 1) throw ConfigError("repeats must be >= 1");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs}, {"lr", c.lr}, {"batch", c.batch}, {"seed", c.seed}, {"repeats", c.repeats}};
}

struct HeadReport {
  std::string name;
  double accuracy = 0.0;                       // percent
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::size_t correct = 0;
  std::size_t total = 0;
};

struct EvalReport {
  std::vector<HeadReport> heads;  // global head last

  const HeadReport& global() const { return heads.back(); }
};

// Eval-mode predictions of every head over a feature set.
inline EvalReport evaluate(Model<float>& m, const FeatureSet& fs, int batch = 16) {
  const auto& cfg = m.config();
  if (fs.channels != static_cast<std::size_t>(cfg.channels) || fs.bins != static_cast<std::size_t>(cfg.mel_bins) ||
      fs.frames != static_cast<std::size_t>(cfg.frames)) {
    throw ShapeError("features are " + std::to_string(fs.channels) + "x" + std::to_string(fs.bins) + "x" +
                     std::to_string(fs.frames) + " but layer 'input' expects " + m.input_shape(1).str());
  }
  const auto classes = static_cast<std::size_t>(cfg.classes);
  EvalReport r;
  for (std::size_t h = 0; h < m.head_count(); ++h) {
    r.heads.push_back({m.head_name(h), 0.0, std::vector<std::vector<std::size_t>>(classes, std::vector<std::size_t>(classes, 0)), 0, 0});
  }
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < fs.size(); start += static_cast<std::size_t>(batch)) {
    idx.clear();
    for (std::size_t i = start; i < std::min(fs.size(), start + static_cast<std::size_t>(batch)); ++i) idx.push_back(i);
    const auto logits = m.forward(fs.batch<float>(idx), nn::Mode::kEval);
    for (std::size_t h = 0; h < logits.size(); ++h) {
      const auto pred = nn::argmax_rows(logits[h]);
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const auto truth = static_cast<std::size_t>(fs.labels[idx[b]]);
        if (truth >= classes) throw ShapeError("label " + std::to_string(truth) + " exceeds class count");
        ++r.heads[h].confusion[truth][static_cast<std::size_t>(pred[b])];
      }
    }
  }
  for (auto& h : r.heads) {
    for (std::size_t i = 0; i < classes; ++i) {
      h.correct += h.confusion[i][i];
      for (auto v : h.confusion[i]) h.total += v;
    }
    h.accuracy = h.total ? 100.0 * static_cast<double>(h.correct) / static_cast<double>(h.total) : 0.0;
  }
  return r;
}

struct EpochRecord {
  int epoch = 0;                      // 1-based
  double loss = 0.0;                  // mean summed multi-head loss over batches
  std::vector<double> head_loss;      // mean per-head loss
  std::vector<double> train_accuracy; // per head, percent (empty if not tracked)
  std::vector<double> test_accuracy;  // per head, percent
};

struct RunResult {
  int run = 0;
  std::vector<std::string> head_names;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_accuracy = -1.0;  // global head, test split
  EvalReport best_report;
  std::string best_checkpoint;  // SSNW bytes of the best epoch
  std::string final_checkpoint;
};

struct TrainResult {
  std::vector<RunResult> runs;
  double average_best = 0.0;
};

using EpochCallback = std::function<void(const RunResult&, const EpochRecord&)>;

// Derived model seed for run `run`; the model's initializers and dropout masks
// follow from it.
inline ModelConfig run_model_config(ModelConfig cfg, const TrainConfig& tc, int run) {
  cfg.seed = derive_seed(tc.seed, {0x6d6f64656cULL, static_cast<std::uint64_t>(run)});
  return cfg;
}

// Epoch order from a counter-based RNG keyed on (seed, run, epoch).
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int run, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(run), static_cast<std::uint64_t>(epoch)}));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

inline RunResult train_run(const ModelConfig& base, const TrainConfig& tc, const FeatureSet& train,
                           const FeatureSet& test, int run, const nlohmann::json& metadata = {},
                           const EpochCallback& on_epoch = {}) {
  tc.validate();
  if (train.size() == 0) throw Error("training split is empty");
  if (test.size() == 0) throw Error("test split is empty");
  const ModelConfig cfg = run_model_config(base, tc, run);
  auto m = model::build_model<float>(cfg);
  nn::ParamStore<float> store(m->params());
  const nn::AdamConfig adam{.lr = tc.lr};
  const std::vector<bool> enabled(m->head_count(), true);

  RunResult r;
  r.run = run;
  for (std::size_t h = 0; h < m->head_count(); ++h) r.head_names.push_back(m->head_name(h));
  auto meta = metadata.is_null() ? nlohmann::json::object() : metadata;
  meta["train"] = to_json(tc);
  meta["run"] = run;

  const auto bs = static_cast<std::size_t>(tc.batch);
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto order = epoch_order(train.size(), tc.seed, run, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.head_loss.assign(m->head_count(), 0.0);
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(bs, order.size() - start));
      const auto labels = train.batch_labels(idx);
      store.zero_grad();
      const auto logits = m->forward(train.batch<float>(idx), nn::Mode::kTrain);
      std::vector<nn::Tensor<float>> dlogits;
      const auto loss = model::multi_head_loss(logits, std::span<const int>(labels), enabled, &dlogits);
      if (!std::isfinite(loss.total)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches + 1) + " (run " + std::to_string(run) + ")");
      }
      m->backward(dlogits);
      store.adam_step(adam);
      rec.loss += loss.total;
      for (std::size_t h = 0; h < loss.per_head.size(); ++h) rec.head_loss[h] += loss.per_head[h];
      ++batches;
    }
    rec.loss /= static_cast<double>(batches);
    for (double& l : rec.head_loss) l /= static_cast<double>(batches);

    auto report = evaluate(*m, test, tc.batch);
    for (const auto& h : report.heads) rec.test_accuracy.push_back(h.accuracy);
    if (tc.track_train_accuracy) {
      for (const auto& h : evaluate(*m, train, tc.batch).heads) rec.train_accuracy.push_back(h.accuracy);
    }
    if (report.global().accuracy > r.best_accuracy) {
      r.best_accuracy = report.global().accuracy;
      r.best_epoch = epoch;
      r.best_report = std::move(report);
      meta["epoch"] = epoch;
      r.best_checkpoint = model::encode_checkpoint(*m, meta);
    }
    r.history.push_back(std::move(rec));
    if (on_epoch) on_epoch(r, r.history.back());
  }
  meta["epoch"] = tc.epochs;
  r.final_checkpoint = model::encode_checkpoint(*m, meta);
  return r;
}

// `repeats` independent runs; average-best = mean over runs of each run's best
// per-epoch global-head test accuracy.
inline TrainResult train(const ModelConfig& cfg, const TrainConfig& tc, const FeatureSet& train_set,
                         const FeatureSet& test_set, const nlohmann::json& metadata = {},
                         const EpochCallback& on_epoch = {}) {
  tc.validate();
  TrainResult out;
  for (int run = 0; run < tc.repeats; ++run) {
    out.runs.push_back(train_run(cfg, tc, train_set, test_set, run, metadata, on_epoch));
    out.average_best += out.runs.back().best_accuracy;
  }
  out.average_best /= static_cast<double>(tc.repeats);
  return out;
}

// TSV reports.
inline Table accuracy_table(const EvalReport& r) {
  Table t({"head", "accuracy", "correct", "total"});
  for (const auto& h : r.heads) t.row({h.name, fmt6(h.accuracy), std::to_string(h.correct), std::to_string(h.total)});
  return t;
}

inline Table confusion_table(const HeadReport& h, const std::vector<std::string>& names) {
  return matrix_table(names, h.confusion.size(),
                      [&](std::size_t i, std::size_t j) { return std::to_string(h.confusion[i][j]); }, "true\\pred");
}

inline Table history_table(const RunResult& r) {
  std::vector<std::string> header{"epoch", "loss"};
  for (const auto& n : r.head_names) header.push_back("loss_" + n);
  for (const auto& n : r.head_names) header.push_back("test_acc_" + n);
  const bool with_train = !r.history.empty() && !r.history.front().train_accuracy.empty();
  if (with_train) {
    for (const auto& n : r.head_names) header.push_back("train_acc_" + n);
  }
  Table t(header);
  for (const auto& e : r.history) {
    std::vector<std::string> row{std::to_string(e.epoch), fmt6(e.loss)};
    for (double v : e.head_loss) row.push_back(fmt6(v));
    for (double v : e.test_accuracy) row.push_back(fmt6(v));
    for (double v : e.train_accuracy) row.push_back(fmt6(v));
    t.row(std::move(row));
  }
  return t;
}

inline void write_eval_report(const std::filesystem::path& dir, const EvalReport& r,
                              const std::vector<std::string>& names) {
  std::filesystem::create_directories(dir);
  accuracy_table(r).save(dir / "accuracy.tsv");
  for (const auto& h : r.heads) confusion_table(h, names).save(dir / ("confusion_" + h.name + ".tsv"));
}

}  // namespace ssnet::harness
