#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sl/corpus.hpp"
#include "sl/dataset.hpp"
#include "sl/eval.hpp"
#include "sl/models.hpp"
#include "sl/nn/checkpoint.hpp"
#include "sl/nn/graph.hpp"
#include "sl/nn/loss.hpp"
#include "sl/rng.hpp"

namespace sl::train {

enum class Regime { Scratch, FullFinetune, LastLayersFinetune };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::Scratch: return "scratch";
    case Regime::FullFinetune: return "full_finetune";
    case Regime::LastLayersFinetune: return "last_layers_finetune";
  }
  return "?";
}

inline Regime regime_from_token(const std::string& tok) {
  if (tok == "scratch") return Regime::Scratch;
  if (tok == "full_finetune" || tok == "full") return Regime::FullFinetune;
  if (tok == "last_layers_finetune" || tok == "last") return Regime::LastLayersFinetune;
  fail("ConfigError", "unknown regime '" + tok + "'");
}

struct TrainConfig {
  int epochs = 80;
  int batch_size = 16;
  double lr0 = 3e-6;
  double lr_min = 0.0;
  uint64_t seed = 7;
  Regime regime = Regime::Scratch;
  std::string pretrained_checkpoint;

  void validate() const {
    if (epochs < 1) fail("ConfigError", "epochs must be >= 1");
    if (batch_size < 1) fail("ConfigError", "batch_size must be >= 1");
    if (!(lr0 > lr_min) || lr_min < 0.0)
      fail("ConfigError", format("require lr0 > lr_min >= 0, got lr0=%g lr_min=%g", lr0, lr_min));
    if (regime != Regime::Scratch && pretrained_checkpoint.empty())
      fail("ConfigError", std::string(to_string(regime)) + " requires a pretrained checkpoint");
  }
};

/// Stepped once per epoch: lr(t) = lr_min + (lr0 - lr_min)(1 + cos(pi t/T))/2.
inline double cosine_lr(int t, int total, double lr0, double lr_min) {
  if (total < 1) fail("ConfigError", "cosine_lr: total must be >= 1");
  if (t < 0 || t > total) fail("ConfigError", format("cosine_lr: t=%d outside [0, %d]", t, total));
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(M_PI * t / total));
}

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_uar = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct RunLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double wall_time_s = 0.0;  // informational; excluded from equality

  bool operator==(const RunLog& o) const {
    return epochs == o.epochs && best_epoch == o.best_epoch;
  }
};

inline std::string serialize_runlog(const RunLog& log) {
  std::string out;
  for (const auto& e : log.epochs) {
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["lr"] = e.lr;
    j["train_loss"] = e.train_loss;
    j["val_loss"] = e.val_loss;
    j["val_uar"] = e.val_uar;
    out += j.dump();
    out += '\n';
  }
  nlohmann::json tail;
  tail["best_epoch"] = log.best_epoch;
  tail["wall_time_s"] = log.wall_time_s;
  out += tail.dump();
  out += '\n';
  return out;
}

inline RunLog parse_runlog(const std::string& text) {
  RunLog log;
  for (const auto& line : split_on(text, '\n')) {
    if (trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line);
    if (j.contains("best_epoch")) {
      log.best_epoch = j["best_epoch"].get<int>();
      log.wall_time_s = j.value("wall_time_s", 0.0);
      continue;
    }
    EpochRecord e;
    e.epoch = j["epoch"].get<int>();
    e.lr = j["lr"].get<double>();
    e.train_loss = j["train_loss"].get<double>();
    e.val_loss = j["val_loss"].get<double>();
    e.val_uar = j["val_uar"].get<double>();
    log.epochs.push_back(e);
  }
  return log;
}

// ---- batch sources ----------------------------------------------------------

/// Anything the loop can draw labeled model inputs from.
struct BatchSource {
  virtual ~BatchSource() = default;
  virtual size_t size() const = 0;
  virtual int label(size_t i) const = 0;
  virtual nn::Tensor inputs(const std::vector<size_t>& idx) const = 0;
};

/// In-memory rows: data[i] along axis 0, one label per row.
struct TensorSource : BatchSource {
  nn::Tensor data{{1}};
  std::vector<int> labels;

  TensorSource() = default;
  TensorSource(nn::Tensor d, std::vector<int> y) : data(std::move(d)), labels(std::move(y)) {
    if (data.shape.empty() || data.shape[0] != static_cast<long>(labels.size()))
      fail("ConfigError", "TensorSource: rows and labels disagree");
  }

  size_t size() const override { return labels.size(); }
  int label(size_t i) const override { return labels.at(i); }
  nn::Tensor inputs(const std::vector<size_t>& idx) const override {
    auto shape = data.shape;
    shape[0] = static_cast<long>(idx.size());
    nn::Tensor out(shape);
    const long row = data.numel() / data.shape[0];
    for (size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] >= labels.size()) fail("ConfigError", "TensorSource: index out of range");
      std::copy(data.ptr() + static_cast<long>(idx[k]) * row,
                data.ptr() + static_cast<long>(idx[k] + 1) * row,
                out.ptr() + static_cast<long>(k) * row);
    }
    return out;
  }
};

enum class Modality { Audio, Video };

inline const char* to_string(Modality m) { return m == Modality::Audio ? "audio" : "video"; }

inline Modality modality_from_token(const std::string& tok) {
  if (tok == "audio") return Modality::Audio;
  if (tok == "video") return Modality::Video;
  fail("ConfigError", "unknown modality '" + tok + "' (audio|video)");
}

/// Windows of one dataset split, cut and normalized on demand.
struct ClipSource : BatchSource {
  const data::Dataset* ds = nullptr;
  std::vector<size_t> window_idx;
  Modality modality = Modality::Audio;

  ClipSource(const data::Dataset& d, std::vector<size_t> idx, Modality m)
      : ds(&d), window_idx(std::move(idx)), modality(m) {}

  size_t size() const override { return window_idx.size(); }
  int label(size_t i) const override {
    return static_cast<int>(ds->windows[window_idx.at(i)].label);
  }
  nn::Tensor inputs(const std::vector<size_t>& idx) const override {
    std::vector<media::ClipPair> clips;
    clips.reserve(idx.size());
    for (size_t k : idx) clips.push_back(ds->clip(window_idx.at(k)));
    return modality == Modality::Audio ? data::audio_batch(clips) : data::video_batch(clips);
  }
};

// ---- the loop ---------------------------------------------------------------

struct TrainResult {
  RunLog log;
  std::map<std::string, nn::Tensor> state;  // best epoch, or last finite on divergence
  bool diverged = false;
};

namespace detail {

// Inverse class frequency, normalized to sum one across classes. Generic in
// the class count so proxy tasks (>= 4 labels) ride the same loop.
inline std::vector<double> window_weights(const BatchSource& src) {
  std::vector<int64_t> n(static_cast<size_t>(kNumClasses), 0);
  for (size_t i = 0; i < src.size(); ++i) {
    int c = src.label(i);
    if (c < 0) fail("ConfigError", "negative class label");
    if (c >= static_cast<int>(n.size())) n.resize(static_cast<size_t>(c) + 1, 0);
    ++n[static_cast<size_t>(c)];
  }
  std::vector<double> class_w(n.size());
  double total = 0.0;
  for (size_t c = 0; c < n.size(); ++c) {
    if (n[c] <= 0) fail("EmptyClass", format("class %zu has no windows", c));
    class_w[c] = 1.0 / static_cast<double>(n[c]);
    total += class_w[c];
  }
  for (auto& v : class_w) v /= total;
  std::vector<double> w(src.size());
  for (size_t i = 0; i < src.size(); ++i) w[i] = class_w[static_cast<size_t>(src.label(i))];
  return w;
}

struct EvalPass {
  double loss = 0.0;
  double uar = 0.0;
  eval::ConfusionMatrix3 cm;
};

inline EvalPass evaluate(nn::Graph& g, const BatchSource& src, int batch_size) {
  g.set_train(false);
  std::vector<int> truth, pred;
  double loss_sum = 0.0;
  long n = 0, width = 0;
  for (size_t at = 0; at < src.size(); at += static_cast<size_t>(batch_size)) {
    std::vector<size_t> idx;
    for (size_t i = at; i < std::min(src.size(), at + static_cast<size_t>(batch_size)); ++i)
      idx.push_back(i);
    auto logits = g.forward(src.inputs(idx));
    std::vector<int> labels;
    for (size_t i : idx) labels.push_back(src.label(i));
    auto ce = nn::cross_entropy_with_logits(logits, labels);
    loss_sum += ce.loss * static_cast<double>(idx.size());
    n += static_cast<long>(idx.size());
    width = logits.shape[1];
    for (size_t r = 0; r < idx.size(); ++r) {
      const float* row = logits.ptr() + static_cast<long>(r) * width;
      long arg = 0;
      for (long k = 1; k < width; ++k)
        if (row[k] > row[arg]) arg = k;
      pred.push_back(static_cast<int>(arg));
      truth.push_back(labels[r]);
    }
  }
  EvalPass out;
  out.loss = n > 0 ? loss_sum / static_cast<double>(n) : 0.0;
  if (width == kNumClasses) {
    std::vector<Expression> t3, p3;
    for (size_t i = 0; i < truth.size(); ++i) {
      t3.push_back(static_cast<Expression>(truth[i]));
      p3.push_back(static_cast<Expression>(pred[i]));
    }
    out.cm = eval::confusion(p3, t3);
    out.uar = eval::metrics(out.cm).uar;
  } else {
    // proxy tasks: recall averaged over the classes that appear
    std::vector<long> hits(static_cast<size_t>(width), 0), support(static_cast<size_t>(width), 0);
    for (size_t i = 0; i < truth.size(); ++i) {
      ++support[static_cast<size_t>(truth[i])];
      if (truth[i] == pred[i]) ++hits[static_cast<size_t>(truth[i])];
    }
    double sum = 0.0;
    long seen = 0;
    for (long c = 0; c < width; ++c)
      if (support[static_cast<size_t>(c)] > 0) {
        sum += static_cast<double>(hits[static_cast<size_t>(c)]) /
               static_cast<double>(support[static_cast<size_t>(c)]);
        ++seen;
      }
    out.uar = seen > 0 ? sum / static_cast<double>(seen) : 0.0;
  }
  return out;
}

}  // namespace detail

/// The shared epoch loop: weighted batches, cross-entropy descent at the
/// cosine-annealed rate, validation each epoch, best-UAR selection (ties go
/// to the earliest epoch). A non-finite loss stops the run and keeps the last
/// finite epoch's weights.
inline TrainResult run_training(const TrainConfig& cfg, nn::Graph& g, const BatchSource& train_src,
                                const BatchSource& val_src) {
  cfg.validate();
  if (train_src.size() == 0) fail("ConfigError", "empty training split");
  if (val_src.size() == 0) fail("ConfigError", "empty validation split");
  const auto t0 = std::chrono::steady_clock::now();

  auto weights = detail::window_weights(train_src);
  Rng rng(Rng::derive(cfg.seed, 0x7a19));
  const auto steps = static_cast<size_t>(
      (train_src.size() + static_cast<size_t>(cfg.batch_size) - 1) / static_cast<size_t>(cfg.batch_size));

  TrainResult result;
  std::map<std::string, nn::Tensor> last_finite = g.snapshot_state();
  double best_uar = -1.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg.epochs, cfg.lr0, cfg.lr_min);
    g.set_train(true);
    double loss_sum = 0.0;
    bool finite = true;
    for (size_t s = 0; s < steps; ++s) {
      auto idx = corpus::sample_batch(rng, weights, static_cast<size_t>(cfg.batch_size));
      auto x = train_src.inputs(idx);
      std::vector<int> labels;
      for (size_t i : idx) labels.push_back(train_src.label(i));
      auto logits = g.forward(x, /*want_grad=*/true);
      auto ce = nn::cross_entropy_with_logits(logits, labels);
      if (!std::isfinite(ce.loss)) {
        finite = false;
        break;
      }
      loss_sum += ce.loss;
      g.zero_grad();
      g.backward(ce.dlogits);
      g.sgd_step(lr);
    }
    if (!finite) {
      result.diverged = true;
      result.state = std::move(last_finite);
      break;
    }
    auto val = detail::evaluate(g, val_src, cfg.batch_size);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(steps);
    rec.val_loss = val.loss;
    rec.val_uar = val.uar;
    result.log.epochs.push_back(rec);
    if (val.uar > best_uar) {
      best_uar = val.uar;
      result.log.best_epoch = epoch;
      result.state = g.snapshot_state();
    }
    last_finite = g.snapshot_state();
  }
  if (result.state.empty()) result.state = std::move(last_finite);
  result.log.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

/// Load pretrained weights (head absent is fine; it stays freshly initialized)
/// and set which parameters may move.
inline void apply_regime(const TrainConfig& cfg, nn::Graph& g) {
  if (cfg.regime != Regime::Scratch) {
    auto st = nn::load_slck(cfg.pretrained_checkpoint);
    g.load_state(st, {"head."});
  }
  g.freeze(cfg.regime == Regime::LastLayersFinetune ? nn::FreezeSelector::AllButMstcnAndHead
                                                    : nn::FreezeSelector::None);
}

inline TrainResult train_modality(const TrainConfig& cfg, nn::Graph& g,
                                  const BatchSource& train_src, const BatchSource& val_src) {
  cfg.validate();
  apply_regime(cfg, g);
  return run_training(cfg, g, train_src, val_src);
}

/// Frozen-modality fusion features: per window, the two softmax outputs side
/// by side, (n, 6).
inline nn::Tensor fusion_features(nn::Graph& audio_g, nn::Graph& video_g,
                                  const data::Dataset& ds, const std::vector<size_t>& idx,
                                  int batch_size = 16) {
  audio_g.set_train(false);
  video_g.set_train(false);
  const long n_classes = audio_g.out_shape().back();
  nn::Tensor out({static_cast<long>(idx.size()), 2 * n_classes});
  ClipSource audio_src(ds, idx, Modality::Audio);
  ClipSource video_src(ds, idx, Modality::Video);
  for (size_t at = 0; at < idx.size(); at += static_cast<size_t>(batch_size)) {
    std::vector<size_t> local;
    for (size_t i = at; i < std::min(idx.size(), at + static_cast<size_t>(batch_size)); ++i)
      local.push_back(i);
    auto pa = nn::softmax(audio_g.forward(audio_src.inputs(local)));
    auto pv = nn::softmax(video_g.forward(video_src.inputs(local)));
    auto rows = models::fusion_input(pa, pv);
    std::copy(rows.ptr(), rows.ptr() + rows.numel(),
              out.ptr() + static_cast<long>(at) * 2 * n_classes);
  }
  return out;
}

/// Train the fusion head on precomputed frozen-modality features. Only the
/// head's parameters exist in this graph, so the modality weights cannot move.
inline TrainResult train_fusion(const TrainConfig& cfg, nn::Graph& fusion,
                                const BatchSource& train_src, const BatchSource& val_src) {
  cfg.validate();
  return run_training(cfg, fusion, train_src, val_src);
}

/// Checkpoint minus the classification head, for cross-task transfer.
inline std::map<std::string, nn::Tensor> strip_head(const std::map<std::string, nn::Tensor>& st) {
  std::map<std::string, nn::Tensor> out;
  for (const auto& [name, t] : st)
    if (name.rfind("head.", 0) != 0) out.emplace(name, t);
  return out;
}

/// Train on a stand-in labeling task with >= 4 classes, then drop the head so
/// the result loads into a 3-class model.
inline TrainResult proxy_pretrain(const TrainConfig& cfg, nn::Graph& g, int task_classes,
                                  const BatchSource& train_src, const BatchSource& val_src) {
  if (task_classes < 4) fail("ConfigError", "proxy task needs >= 4 classes");
  if (g.out_shape().back() != task_classes)
    fail("ConfigError", "graph head width does not match the proxy task");
  auto result = run_training(cfg, g, train_src, val_src);
  result.state = strip_head(result.state);
  return result;
}

// ---- run directory convention -------------------------------------------------

struct RunPaths {
  std::string dir, config_json, log_jsonl, best_slck;
};

inline RunPaths run_paths(const std::string& runs_root, const std::string& name) {
  RunPaths p;
  p.dir = runs_root + "/" + name;
  p.config_json = p.dir + "/config.json";
  p.log_jsonl = p.dir + "/log.jsonl";
  p.best_slck = p.dir + "/best.slck";
  return p;
}

inline nlohmann::json config_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["lr0"] = cfg.lr0;
  j["lr_min"] = cfg.lr_min;
  j["seed"] = cfg.seed;
  j["regime"] = to_string(cfg.regime);
  j["pretrained_checkpoint"] = cfg.pretrained_checkpoint;
  return j;
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.lr0 = j.value("lr0", cfg.lr0);
  cfg.lr_min = j.value("lr_min", cfg.lr_min);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("regime")) cfg.regime = regime_from_token(j["regime"].get<std::string>());
  cfg.pretrained_checkpoint = j.value("pretrained_checkpoint", cfg.pretrained_checkpoint);
  return cfg;
}

inline void write_run(const RunPaths& paths, const TrainConfig& cfg, const TrainResult& result) {
  std::filesystem::create_directories(paths.dir);
  write_text_file(paths.config_json, config_json(cfg).dump(2) + "\n");
  write_text_file(paths.log_jsonl, serialize_runlog(result.log));
  nn::save_slck(paths.best_slck, result.state);
}

}  // namespace sl::train
