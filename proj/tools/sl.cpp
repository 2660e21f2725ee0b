// sl: end-to-end driver for the smile & laughter classification pipeline.
// One subcommand per pipeline stage; every invocation leaves a
// run_manifest.json fingerprinting its outputs.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sl/dataset.hpp"
#include "sl/embed.hpp"
#include "sl/eval.hpp"
#include "sl/manifest.hpp"
#include "sl/models.hpp"
#include "sl/synth.hpp"
#include "sl/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json(const std::string& path) {
  try {
    return json::parse(sl::read_text_file(path));
  } catch (const json::exception& e) {
    sl::fail("ConfigError", path + ": " + e.what());
  }
}

struct AppConfig {
  sl::corpus::WindowSpec window{};
  std::array<double, 3> ratios{0.7, 0.15, 0.15};
  sl::models::Scale scale = sl::models::Scale::Paper;
  sl::train::TrainConfig train{};
  json raw;
};

AppConfig read_config(const std::string& path) {
  AppConfig cfg;
  if (path.empty()) return cfg;
  json j = load_json(path);
  cfg.raw = j;
  if (j.contains("window")) {
    cfg.window.duration_ms = j["window"].value("duration_ms", cfg.window.duration_ms);
    cfg.window.overlap_ms = j["window"].value("overlap_ms", cfg.window.overlap_ms);
  }
  if (j.contains("ratios")) {
    auto r = j["ratios"];
    if (!r.is_array() || r.size() != 3) sl::fail("ConfigError", "ratios must be [train,val,test]");
    for (int i = 0; i < 3; ++i) cfg.ratios[static_cast<size_t>(i)] = r[static_cast<size_t>(i)].get<double>();
  }
  if (j.contains("scale")) cfg.scale = sl::models::scale_from_token(j["scale"].get<std::string>());
  if (j.contains("train")) cfg.train = sl::train::config_from_json(j["train"]);
  return cfg;
}

sl::synth::SynthSpec spec_from_json(const json& j) {
  sl::synth::SynthSpec s;
  s.seed = j.value("seed", s.seed);
  s.n_sources = j.value("n_sources", s.n_sources);
  s.n_laugh = j.value("n_laugh", s.n_laugh);
  s.n_smile = j.value("n_smile", s.n_smile);
  s.n_none = j.value("n_none", s.n_none);
  auto range = [&](const char* key, std::array<long, 2>& dst) {
    if (!j.contains(key)) return;
    auto a = j[key];
    if (!a.is_array() || a.size() != 2) sl::fail("ConfigError", std::string(key) + " must be [lo,hi]");
    dst = {a[0].get<long>(), a[1].get<long>()};
  };
  range("laugh_dur_ms", s.laugh_dur_ms);
  range("smile_dur_ms", s.smile_dur_ms);
  range("none_dur_ms", s.none_dur_ms);
  s.audio_cue = j.value("audio_cue", s.audio_cue);
  s.video_cue = j.value("video_cue", s.video_cue);
  s.noise_floor = j.value("noise_floor", s.noise_floor);
  if (j.contains("mode")) s.mode = sl::synth::informativeness_from_token(j["mode"].get<std::string>());
  auto weights = [&](const char* key, auto& dst) {
    if (!j.contains(key)) return;
    auto a = j[key];
    if (!a.is_array() || a.size() != dst.size())
      sl::fail("ConfigError", std::string(key) + ": wrong number of weights");
    for (size_t i = 0; i < dst.size(); ++i) dst[i] = a[i].get<double>();
  };
  weights("smile_intensity_weights", s.smile_intensity_weights);
  weights("laugh_intensity_weights", s.laugh_intensity_weights);
  return s;
}

std::string dir_of(const std::string& file_path) {
  auto parent = fs::path(file_path).parent_path().string();
  return parent.empty() ? "." : parent;
}

std::string runs_root(const std::string& flag_out) {
  if (!flag_out.empty()) return flag_out;
  if (const char* env = std::getenv("SL_RUNS_DIR"); env && *env) return env;
  return "runs";
}

sl::train::Regime regime_from_flag(const std::string& tok) {
  if (tok == "full-ft") return sl::train::Regime::FullFinetune;
  if (tok == "last-layers-ft") return sl::train::Regime::LastLayersFinetune;
  return sl::train::regime_from_token(tok);
}

sl::nn::Graph build_modality(sl::train::Modality m, const sl::models::ModelConfig& mc,
                             uint64_t seed) {
  return m == sl::train::Modality::Audio ? sl::models::build_audio_net<float>(mc, seed)
                                         : sl::models::build_video_net<float>(mc, seed);
}

struct Predictions {
  std::vector<sl::eval::LabeledPrediction> rows;
  sl::eval::ConfusionMatrix3 cm;
};

Predictions predict_modality(sl::nn::Graph& g, const sl::data::Dataset& ds,
                             const std::vector<size_t>& idx, sl::train::Modality m,
                             int batch_size) {
  g.set_train(false);
  Predictions out;
  sl::train::ClipSource src(ds, idx, m);
  std::vector<sl::Expression> truth, pred;
  for (size_t at = 0; at < idx.size(); at += static_cast<size_t>(batch_size)) {
    std::vector<size_t> local;
    for (size_t i = at; i < std::min(idx.size(), at + static_cast<size_t>(batch_size)); ++i)
      local.push_back(i);
    auto logits = g.forward(src.inputs(local));
    const long c = logits.shape[1];
    for (size_t r = 0; r < local.size(); ++r) {
      const float* row = logits.ptr() + static_cast<long>(r) * c;
      long arg = 0;
      for (long k = 1; k < c; ++k)
        if (row[k] > row[arg]) arg = k;
      const auto& w = ds.windows[idx[local[r]]];
      out.rows.push_back({w.id(), w.label, w.intensity, static_cast<sl::Expression>(arg)});
      truth.push_back(w.label);
      pred.push_back(static_cast<sl::Expression>(arg));
    }
  }
  out.cm = sl::eval::confusion(pred, truth);
  return out;
}

Predictions predict_fusion(sl::nn::Graph& audio_g, sl::nn::Graph& video_g, sl::nn::Graph& fusion,
                           const sl::data::Dataset& ds, const std::vector<size_t>& idx,
                           int batch_size) {
  auto features = sl::train::fusion_features(audio_g, video_g, ds, idx, batch_size);
  fusion.set_train(false);
  Predictions out;
  std::vector<sl::Expression> truth, pred;
  const long c = 2 * 3;
  for (size_t at = 0; at < idx.size(); at += static_cast<size_t>(batch_size)) {
    size_t hi = std::min(idx.size(), at + static_cast<size_t>(batch_size));
    sl::nn::Tensor x({static_cast<long>(hi - at), c});
    std::copy(features.ptr() + static_cast<long>(at) * c, features.ptr() + static_cast<long>(hi) * c,
              x.ptr());
    auto logits = fusion.forward(x);
    const long k_out = logits.shape[1];
    for (size_t r = 0; r < hi - at; ++r) {
      const float* row = logits.ptr() + static_cast<long>(r) * k_out;
      long arg = 0;
      for (long k = 1; k < k_out; ++k)
        if (row[k] > row[arg]) arg = k;
      const auto& w = ds.windows[idx[at + r]];
      out.rows.push_back({w.id(), w.label, w.intensity, static_cast<sl::Expression>(arg)});
      truth.push_back(w.label);
      pred.push_back(static_cast<sl::Expression>(arg));
    }
  }
  out.cm = sl::eval::confusion(pred, truth);
  return out;
}

json metrics_json(const sl::eval::MetricsReport& r, const sl::eval::ConfusionMatrix3& cm) {
  json j;
  auto triple = [&](const std::array<double, 3>& v, double mac, double mic, double wt) {
    json o;
    o["laugh"] = v[0];
    o["smile"] = v[1];
    o["none"] = v[2];
    o["macro"] = mac;
    o["micro"] = mic;
    o["weighted"] = wt;
    return o;
  };
  j["precision"] = triple(r.precision, r.macro_precision, r.micro_precision, r.weighted_precision);
  j["recall"] = triple(r.recall, r.macro_recall, r.micro_recall, r.weighted_recall);
  j["f1"] = triple(r.f1, r.macro_f1, r.micro_f1, r.weighted_f1);
  j["support"] = {{"laugh", r.support[0]}, {"smile", r.support[1]}, {"none", r.support[2]}};
  j["uar"] = r.uar;
  auto rows = json::array();
  for (int a = 0; a < 3; ++a) {
    auto row = json::array();
    for (int b = 0; b < 3; ++b) row.push_back(cm.m[static_cast<size_t>(a)][static_cast<size_t>(b)]);
    rows.push_back(row);
  }
  j["confusion"] = rows;
  return j;
}

std::string predictions_csv(const std::vector<sl::eval::LabeledPrediction>& rows) {
  std::string out = "window_id,truth,intensity,pred\n";
  for (const auto& r : rows) {
    out += r.id;
    out += ',';
    out += sl::to_string(r.truth);
    out += ',';
    out += sl::intensity_to_string(r.intensity);
    out += ',';
    out += sl::to_string(r.pred);
    out += '\n';
  }
  return out;
}

std::vector<size_t> pick_split(const sl::data::Dataset& ds, const std::string& split) {
  if (split == "all") {
    std::vector<size_t> idx(ds.windows.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
  }
  auto idx = ds.indices_of(sl::corpus::split_from_token(split));
  if (idx.empty()) sl::fail("ConfigError", "split '" + split + "' has no windows");
  return idx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"smile & laughter classification pipeline"};
  app.require_subcommand(1);

  // shared flag storage; each subcommand binds the subset it supports
  std::string config_path, dataset_dir, out_dir, name, modality_tok = "audio";
  std::string regime_tok = "scratch", split_tok = "test", scale_tok, spec_path;
  std::string checkpoint, audio_ckpt, video_ckpt, in_path;
  std::vector<std::string> inputs;
  uint64_t seed = 0;
  bool seed_set = false;
  int epochs_flag = -1, batch_flag = -1, classes_flag = 8, per_class_flag = 12;
  double lr0_flag = -1.0, perplexity_flag = -1.0;
  int iterations_flag = -1;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option_function<uint64_t>(
        "--seed", [&](uint64_t v) { seed = v; seed_set = true; }, "override every seed in play");
  };
  auto add_config = [&](CLI::App* cmd) { cmd->add_option("--config", config_path, "JSON config"); };
  auto add_scale = [&](CLI::App* cmd) {
    cmd->add_option("--scale", scale_tok, "model scale (paper|tiny)");
  };
  auto add_train_knobs = [&](CLI::App* cmd) {
    cmd->add_option("--epochs", epochs_flag, "override epoch count");
    cmd->add_option("--batch-size", batch_flag, "override batch size");
    cmd->add_option("--lr0", lr0_flag, "override initial learning rate");
  };

  auto* c_synth = app.add_subcommand("synth", "generate a synthetic corpus");
  c_synth->add_option("--out", out_dir, "corpus directory")->required();
  c_synth->add_option("--spec", spec_path, "synthesis spec JSON");
  add_config(c_synth);
  add_seed(c_synth);

  auto* c_prepare = app.add_subcommand("prepare", "window, split, and write manifest.csv");
  c_prepare->add_option("--dataset", dataset_dir, "corpus directory")->required();
  add_config(c_prepare);
  add_seed(c_prepare);

  auto* c_train = app.add_subcommand("train", "train one modality");
  c_train->add_option("--dataset", dataset_dir)->required();
  c_train->add_option("--modality", modality_tok, "audio|video");
  c_train->add_option("--regime", regime_tok, "scratch|full-ft|last-layers-ft");
  c_train->add_option("--name", name, "run name under the runs root");
  c_train->add_option("--out", out_dir, "runs root (default $SL_RUNS_DIR or ./runs)");
  c_train->add_option("--pretrained", checkpoint, "checkpoint for the finetune regimes");
  add_config(c_train);
  add_seed(c_train);
  add_scale(c_train);
  add_train_knobs(c_train);

  auto* c_proxy = app.add_subcommand("pretrain-proxy", "pretrain on a stand-in labeling task");
  c_proxy->add_option("--modality", modality_tok, "audio|video");
  c_proxy->add_option("--name", name);
  c_proxy->add_option("--out", out_dir);
  c_proxy->add_option("--classes", classes_flag, "number of proxy classes (>= 4)");
  c_proxy->add_option("--per-class", per_class_flag, "examples per class");
  add_config(c_proxy);
  add_seed(c_proxy);
  add_scale(c_proxy);
  add_train_knobs(c_proxy);

  auto* c_fusion = app.add_subcommand("train-fusion", "train the fusion head on frozen modalities");
  c_fusion->add_option("--dataset", dataset_dir)->required();
  c_fusion->add_option("--audio-ckpt", audio_ckpt)->required();
  c_fusion->add_option("--video-ckpt", video_ckpt)->required();
  c_fusion->add_option("--name", name);
  c_fusion->add_option("--out", out_dir);
  add_config(c_fusion);
  add_seed(c_fusion);
  add_scale(c_fusion);
  add_train_knobs(c_fusion);

  auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  c_eval->add_option("--dataset", dataset_dir)->required();
  c_eval->add_option("--modality", modality_tok, "audio|video|fusion");
  c_eval->add_option("--checkpoint", checkpoint, "modality net or fusion head checkpoint");
  c_eval->add_option("--audio-ckpt", audio_ckpt, "fusion only");
  c_eval->add_option("--video-ckpt", video_ckpt, "fusion only");
  c_eval->add_option("--split", split_tok, "train|val|test|all");
  c_eval->add_option("--out", out_dir, "output directory")->required();
  add_config(c_eval);
  add_seed(c_eval);
  add_scale(c_eval);

  auto* c_heatmap = app.add_subcommand("heatmap", "render an intensity heatmap CSV as SVG");
  c_heatmap->add_option("--in", in_path, "heatmap CSV")->required();
  c_heatmap->add_option("--out", out_dir, "output SVG path")->required();

  auto* c_remap = app.add_subcommand("remap", "two-class laughter re-reading across heatmaps");
  c_remap->add_option("--out", out_dir, "output CSV path")->required();
  c_remap->add_option("inputs", inputs, "heatmap CSV paths")->required();

  auto* c_tsne = app.add_subcommand("tsne", "project embeddings of a split to 2-D");
  c_tsne->add_option("--dataset", dataset_dir)->required();
  c_tsne->add_option("--checkpoint", checkpoint)->required();
  c_tsne->add_option("--modality", modality_tok, "audio|video");
  c_tsne->add_option("--split", split_tok, "train|val|test|all");
  c_tsne->add_option("--out", out_dir, "output directory")->required();
  c_tsne->add_option("--perplexity", perplexity_flag);
  c_tsne->add_option("--iterations", iterations_flag);
  add_config(c_tsne);
  add_seed(c_tsne);
  add_scale(c_tsne);

  auto* c_report = app.add_subcommand("report", "aggregate metrics files into one table");
  c_report->add_option("--out", out_dir, "output CSV path")->required();
  c_report->add_option("configs", inputs, "NAME=metrics.json pairs")->required();

  try {
    app.parse(argc, argv);

    AppConfig cfg = read_config(config_path);
    if (!scale_tok.empty()) cfg.scale = sl::models::scale_from_token(scale_tok);
    if (seed_set) cfg.train.seed = seed;
    if (epochs_flag > 0) cfg.train.epochs = epochs_flag;
    if (batch_flag > 0) cfg.train.batch_size = batch_flag;
    if (lr0_flag > 0) cfg.train.lr0 = lr0_flag;

    if (c_synth->parsed()) {
      sl::synth::SynthSpec spec;
      if (!spec_path.empty()) spec = spec_from_json(load_json(spec_path));
      else if (cfg.raw.contains("synth")) spec = spec_from_json(cfg.raw["synth"]);
      if (seed_set) spec.seed = seed;
      fs::create_directories(out_dir);
      auto files = sl::synth::gen_corpus(spec, out_dir);
      sl::RunManifest m;
      m.command = "synth";
      m.config_path = spec_path.empty() ? config_path : spec_path;
      m.seed = spec.seed;
      m.add_output(files.annotation_path);
      m.add_output(files.roi_path);
      for (const auto& p : files.wav_paths) m.add_output(p);
      for (const auto& p : files.gv01_paths) m.add_output(p);
      sl::write_run_manifest(out_dir, m);
      std::cout << "wrote " << files.sources.size() << " sources to " << out_dir << "\n";
    } else if (c_prepare->parsed()) {
      sl::data::PrepareConfig pc;
      pc.window = cfg.window;
      pc.ratios = cfg.ratios;
      pc.seed = seed_set ? seed : cfg.train.seed;
      auto windows = sl::data::prepare(dataset_dir, pc);
      sl::RunManifest m;
      m.command = "prepare";
      m.config_path = config_path;
      m.seed = pc.seed;
      m.inputs = {dataset_dir + "/annotations.tsv"};
      m.add_output(dataset_dir + "/manifest.csv");
      sl::write_run_manifest(dataset_dir, m);
      auto counts = sl::corpus::count_classes(windows);
      std::cout << "windows: " << windows.size() << " (laugh " << counts.laughs << ", smile "
                << counts.smiles << ", none " << counts.none << ")\n";
    } else if (c_train->parsed()) {
      auto modality = sl::train::modality_from_token(modality_tok);
      cfg.train.regime = regime_from_flag(regime_tok);
      if (!checkpoint.empty()) cfg.train.pretrained_checkpoint = checkpoint;
      auto ds = sl::data::load_dataset(dataset_dir, cfg.window);
      auto g = build_modality(modality, sl::models::make_config(cfg.scale), cfg.train.seed);
      sl::train::ClipSource train_src(ds, ds.indices_of(sl::corpus::Split::Train), modality);
      sl::train::ClipSource val_src(ds, ds.indices_of(sl::corpus::Split::Val), modality);
      auto result = sl::train::train_modality(cfg.train, g, train_src, val_src);
      if (name.empty()) name = std::string(to_string(modality)) + "-" + to_string(cfg.train.regime);
      auto paths = sl::train::run_paths(runs_root(out_dir), name);
      sl::train::write_run(paths, cfg.train, result);
      sl::RunManifest m;
      m.command = "train";
      m.config_path = config_path;
      m.seed = cfg.train.seed;
      m.inputs = {dataset_dir + "/manifest.csv"};
      m.add_output(paths.config_json);
      m.add_output(paths.log_jsonl);
      m.add_output(paths.best_slck);
      sl::write_run_manifest(paths.dir, m);
      if (result.diverged) sl::fail("DivergedLoss", "kept last finite checkpoint at " + paths.best_slck);
      std::cout << "best epoch " << result.log.best_epoch << ", val uar "
                << sl::format("%.4f", result.log.epochs[static_cast<size_t>(result.log.best_epoch)].val_uar)
                << ", saved " << paths.best_slck << "\n";
    } else if (c_proxy->parsed()) {
      auto modality = sl::train::modality_from_token(modality_tok);
      uint64_t s = seed_set ? seed : cfg.train.seed;
      auto mc = sl::models::make_config(cfg.scale, classes_flag);
      auto g = build_modality(modality, mc, s);
      auto [train_x, train_y] =
          sl::synth::proxy_examples(s, classes_flag, per_class_flag, modality == sl::train::Modality::Audio);
      auto [val_x, val_y] = sl::synth::proxy_examples(s + 0x51, classes_flag,
                                                      std::max(2, per_class_flag / 4),
                                                      modality == sl::train::Modality::Audio);
      sl::train::TensorSource train_src(std::move(train_x), std::move(train_y));
      sl::train::TensorSource val_src(std::move(val_x), std::move(val_y));
      auto result = sl::train::proxy_pretrain(cfg.train, g, classes_flag, train_src, val_src);
      if (name.empty()) name = std::string("proxy-") + to_string(modality);
      auto paths = sl::train::run_paths(runs_root(out_dir), name);
      sl::train::write_run(paths, cfg.train, result);
      sl::RunManifest m;
      m.command = "pretrain-proxy";
      m.config_path = config_path;
      m.seed = s;
      m.add_output(paths.config_json);
      m.add_output(paths.log_jsonl);
      m.add_output(paths.best_slck);
      sl::write_run_manifest(paths.dir, m);
      std::cout << "proxy checkpoint saved to " << paths.best_slck << "\n";
    } else if (c_fusion->parsed()) {
      auto mc = sl::models::make_config(cfg.scale);
      auto ds = sl::data::load_dataset(dataset_dir, cfg.window);
      auto audio_g = sl::models::build_audio_net<float>(mc, cfg.train.seed);
      auto video_g = sl::models::build_video_net<float>(mc, cfg.train.seed + 1);
      audio_g.load_state(sl::nn::load_slck(audio_ckpt));
      video_g.load_state(sl::nn::load_slck(video_ckpt));
      auto train_idx = ds.indices_of(sl::corpus::Split::Train);
      auto val_idx = ds.indices_of(sl::corpus::Split::Val);
      auto feat_train = sl::train::fusion_features(audio_g, video_g, ds, train_idx, cfg.train.batch_size);
      auto feat_val = sl::train::fusion_features(audio_g, video_g, ds, val_idx, cfg.train.batch_size);
      auto labels_of = [&](const std::vector<size_t>& idx) {
        std::vector<int> y;
        for (size_t i : idx) y.push_back(static_cast<int>(ds.windows[i].label));
        return y;
      };
      sl::train::TensorSource train_src(std::move(feat_train), labels_of(train_idx));
      sl::train::TensorSource val_src(std::move(feat_val), labels_of(val_idx));
      auto fusion = sl::models::build_fusion_head<float>(mc, cfg.train.seed);
      if (epochs_flag <= 0 && !cfg.raw.contains("train")) cfg.train.epochs = 30;
      auto result = sl::train::train_fusion(cfg.train, fusion, train_src, val_src);
      if (name.empty()) name = "fusion";
      auto paths = sl::train::run_paths(runs_root(out_dir), name);
      sl::train::write_run(paths, cfg.train, result);
      sl::RunManifest m;
      m.command = "train-fusion";
      m.config_path = config_path;
      m.seed = cfg.train.seed;
      m.inputs = {audio_ckpt, video_ckpt, dataset_dir + "/manifest.csv"};
      m.add_output(paths.config_json);
      m.add_output(paths.log_jsonl);
      m.add_output(paths.best_slck);
      sl::write_run_manifest(paths.dir, m);
      if (result.diverged) sl::fail("DivergedLoss", "kept last finite checkpoint at " + paths.best_slck);
      std::cout << "best epoch " << result.log.best_epoch << ", saved " << paths.best_slck << "\n";
    } else if (c_eval->parsed()) {
      auto mc = sl::models::make_config(cfg.scale);
      auto ds = sl::data::load_dataset(dataset_dir, cfg.window);
      auto idx = pick_split(ds, split_tok);
      Predictions preds;
      std::vector<std::string> input_paths = {dataset_dir + "/manifest.csv"};
      if (modality_tok == "fusion") {
        if (checkpoint.empty() || audio_ckpt.empty() || video_ckpt.empty())
          sl::fail("ConfigError", "fusion eval needs --checkpoint, --audio-ckpt, --video-ckpt");
        auto audio_g = sl::models::build_audio_net<float>(mc, 1);
        auto video_g = sl::models::build_video_net<float>(mc, 2);
        auto fusion = sl::models::build_fusion_head<float>(mc, 3);
        audio_g.load_state(sl::nn::load_slck(audio_ckpt));
        video_g.load_state(sl::nn::load_slck(video_ckpt));
        fusion.load_state(sl::nn::load_slck(checkpoint));
        preds = predict_fusion(audio_g, video_g, fusion, ds, idx, cfg.train.batch_size);
        input_paths.insert(input_paths.end(), {checkpoint, audio_ckpt, video_ckpt});
      } else {
        if (checkpoint.empty()) sl::fail("ConfigError", "eval needs --checkpoint");
        auto modality = sl::train::modality_from_token(modality_tok);
        auto g = build_modality(modality, mc, 1);
        g.load_state(sl::nn::load_slck(checkpoint));
        preds = predict_modality(g, ds, idx, modality, cfg.train.batch_size);
        input_paths.push_back(checkpoint);
      }
      auto report = sl::eval::metrics(preds.cm);
      auto heat = sl::eval::intensity_heatmap(preds.rows);
      fs::create_directories(out_dir);
      sl::write_text_file(out_dir + "/metrics.json", metrics_json(report, preds.cm).dump(2) + "\n");
      sl::write_text_file(out_dir + "/metrics.csv", sl::eval::metrics_csv(report));
      sl::write_text_file(out_dir + "/heatmap.csv", sl::eval::heatmap_csv(heat));
      sl::write_text_file(out_dir + "/predictions.csv", predictions_csv(preds.rows));
      sl::RunManifest m;
      m.command = "eval";
      m.config_path = config_path;
      m.seed = cfg.train.seed;
      m.inputs = input_paths;
      m.add_output(out_dir + "/metrics.json");
      m.add_output(out_dir + "/metrics.csv");
      m.add_output(out_dir + "/heatmap.csv");
      m.add_output(out_dir + "/predictions.csv");
      sl::write_run_manifest(out_dir, m);
      std::cout << sl::format("uar %.4f over %zu windows\n", report.uar, preds.rows.size());
    } else if (c_heatmap->parsed()) {
      auto heat = sl::eval::parse_heatmap_csv(sl::read_text_file(in_path));
      sl::write_text_file(out_dir, sl::eval::heatmap_svg(heat));
      sl::RunManifest m;
      m.command = "heatmap";
      m.inputs = {in_path};
      m.add_output(out_dir);
      sl::write_run_manifest(dir_of(out_dir), m);
      std::cout << "wrote " << out_dir << "\n";
    } else if (c_remap->parsed()) {
      std::vector<sl::eval::IntensityHeatmap> heats;
      for (const auto& p : inputs)
        heats.push_back(sl::eval::parse_heatmap_csv(sl::read_text_file(p)));
      auto rr = sl::eval::remap_two_class(heats);
      std::string csv = "metric,value\n";
      csv += sl::format("baseline_mean,%.6f\n", rr.base_mean);
      csv += sl::format("baseline_std,%.6f\n", rr.base_std);
      csv += sl::format("remapped_mean,%.6f\n", rr.remap_mean);
      csv += sl::format("remapped_std,%.6f\n", rr.remap_std);
      sl::write_text_file(out_dir, csv);
      sl::RunManifest m;
      m.command = "remap";
      m.inputs = inputs;
      m.add_output(out_dir);
      sl::write_run_manifest(dir_of(out_dir), m);
      std::cout << sl::format("laugh recall %.1f%% -> %.1f%% after re-reading\n", rr.base_mean,
                              rr.remap_mean);
    } else if (c_tsne->parsed()) {
      auto modality = sl::train::modality_from_token(modality_tok);
      auto mc = sl::models::make_config(cfg.scale);
      auto ds = sl::data::load_dataset(dataset_dir, cfg.window);
      auto idx = pick_split(ds, split_tok);
      auto g = build_modality(modality, mc, 1);
      g.load_state(sl::nn::load_slck(checkpoint));
      g.set_train(false);
      sl::embed::EmbeddingSet set;
      sl::train::ClipSource src(ds, idx, modality);
      const int batch = cfg.train.batch_size;
      for (size_t at = 0; at < idx.size(); at += static_cast<size_t>(batch)) {
        std::vector<size_t> local;
        for (size_t i = at; i < std::min(idx.size(), at + static_cast<size_t>(batch)); ++i)
          local.push_back(i);
        auto out = sl::models::modality_forward(g, src.inputs(local));
        const long d = out.embedding.shape[1];
        for (size_t r = 0; r < local.size(); ++r) {
          const auto& w = ds.windows[idx[local[r]]];
          std::vector<double> v(static_cast<size_t>(d));
          for (long k = 0; k < d; ++k)
            v[static_cast<size_t>(k)] = out.embedding.ptr()[static_cast<long>(r) * d + k];
          set.vectors.push_back(std::move(v));
          set.labels.push_back(w.label);
          set.intensities.push_back(w.intensity);
          set.ids.push_back(w.id());
        }
      }
      sl::embed::TsneConfig tc;
      tc.seed = seed_set ? seed : cfg.train.seed;
      if (perplexity_flag > 0) tc.perplexity = perplexity_flag;
      if (iterations_flag > 0) tc.iterations = iterations_flag;
      if (tc.perplexity >= static_cast<double>(set.size()))
        tc.perplexity = std::max(2.0, static_cast<double>(set.size()) / 4.0);
      auto proj = sl::embed::tsne(set, tc);
      fs::create_directories(out_dir);
      sl::write_text_file(out_dir + "/projection.csv", sl::embed::projection_csv(proj, set));
      sl::write_text_file(out_dir + "/projection.svg", sl::embed::projection_svg(proj, set));
      sl::write_text_file(out_dir + "/embeddings.csv", sl::embed::embeddings_csv(set));
      sl::RunManifest m;
      m.command = "tsne";
      m.config_path = config_path;
      m.seed = tc.seed;
      m.inputs = {dataset_dir + "/manifest.csv", checkpoint};
      m.add_output(out_dir + "/projection.csv");
      m.add_output(out_dir + "/projection.svg");
      m.add_output(out_dir + "/embeddings.csv");
      sl::write_run_manifest(out_dir, m);
      std::cout << sl::format("kl %.4f -> %.4f over %zu points\n", proj.kl_initial, proj.kl_final,
                              set.size());
    } else if (c_report->parsed()) {
      std::vector<std::string> names;
      std::vector<json> reports;
      for (const auto& item : inputs) {
        auto eq = item.find('=');
        if (eq == std::string::npos)
          sl::fail("ConfigError", "report inputs must be NAME=metrics.json, got '" + item + "'");
        names.push_back(item.substr(0, eq));
        reports.push_back(load_json(item.substr(eq + 1)));
      }
      std::string csv = "metric";
      for (const auto& n : names) csv += "," + n;
      csv += '\n';
      auto row = [&](const char* label, auto get) {
        csv += label;
        for (const auto& r : reports) csv += sl::format(",%.4f", get(r));
        csv += '\n';
      };
      row("precision", [](const json& r) { return r["precision"]["weighted"].get<double>(); });
      row("recall", [](const json& r) { return r["recall"]["weighted"].get<double>(); });
      row("f1", [](const json& r) { return r["f1"]["weighted"].get<double>(); });
      row("uar", [](const json& r) { return r["uar"].get<double>(); });
      sl::write_text_file(out_dir, csv);
      sl::RunManifest m;
      m.command = "report";
      for (const auto& item : inputs) m.inputs.push_back(item.substr(item.find('=') + 1));
      m.add_output(out_dir);
      sl::write_run_manifest(dir_of(out_dir), m);
      std::cout << "wrote " << out_dir << "\n";
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const sl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << "\n";
    return 1;
  }
}
