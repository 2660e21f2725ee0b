#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "sl/media.hpp"
#include "sl/nn/graph.hpp"
#include "sl/nn/layers.hpp"
#include "sl/nn/loss.hpp"

namespace sl::models {

using nn::FreezeSelector;
using nn::GraphT;
using nn::TensorT;

enum class Scale { Paper, Tiny };

inline const char* to_string(Scale s) { return s == Scale::Paper ? "paper" : "tiny"; }
inline Scale scale_from_token(const std::string& tok) {
  if (tok == "paper") return Scale::Paper;
  if (tok == "tiny") return Scale::Tiny;
  fail("ConfigError", "unknown scale '" + tok + "'");
}

struct MstcnConfig {
  std::vector<long> kernel_sizes{3, 5, 7};
  int blocks = 4;
  std::vector<long> dilations{1, 2, 4, 8};
  double dropout = 0.2;
  long channels = 768;
};

struct ModelConfig {
  Scale scale = Scale::Paper;
  int n_classes = 3;
  long frontend_channels = 64;
  std::array<long, 4> stage_channels{64, 128, 256, 512};
  long fusion_hidden = 1024;
  long mstcn_t = 30;  // both modalities meet the MS-TCN at this length
  MstcnConfig mstcn;

  void validate() const {
    if (n_classes < 2) fail("ConfigError", "n_classes must be >= 2");
    if (mstcn.channels % static_cast<long>(mstcn.kernel_sizes.size()) != 0)
      fail("ConfigError",
           format("mstcn channels %ld not divisible by %zu branches", mstcn.channels,
                  mstcn.kernel_sizes.size()));
    if (mstcn.blocks < 1 || static_cast<size_t>(mstcn.blocks) > mstcn.dilations.size())
      fail("ConfigError", "mstcn blocks must be in [1, #dilations]");
  }
};

inline ModelConfig make_config(Scale scale, int n_classes = 3) {
  ModelConfig cfg;
  cfg.scale = scale;
  cfg.n_classes = n_classes;
  if (scale == Scale::Tiny) {
    cfg.frontend_channels /= 8;
    for (auto& c : cfg.stage_channels) c /= 8;
    cfg.fusion_hidden /= 8;
    cfg.mstcn.channels /= 8;
  }
  cfg.validate();
  return cfg;
}

namespace detail {

template <typename T>
std::unique_ptr<nn::SequentialT<T>> seq() {
  return std::make_unique<nn::SequentialT<T>>();
}

/// conv(k3,s) bn prelu conv(k3,1) bn, plus a 1x1 projection shortcut when the
/// shape changes. Post-add activation is appended by the caller.
template <typename T>
std::unique_ptr<nn::ResidualT<T>> basic_block1d(long in_c, long out_c, long stride) {
  auto body = seq<T>();
  body->add("conv1", nn::conv1d<T>(in_c, out_c, 3, stride, 1));
  body->add("bn1", std::make_unique<nn::BatchNormT<T>>(out_c));
  body->add("act1", std::make_unique<nn::PReLUT<T>>(out_c));
  body->add("conv2", nn::conv1d<T>(out_c, out_c, 3, 1, 1));
  body->add("bn2", std::make_unique<nn::BatchNormT<T>>(out_c));
  auto shortcut = seq<T>();
  if (in_c != out_c || stride != 1) {
    shortcut->add("conv", nn::conv1d<T>(in_c, out_c, 1, stride, 0));
    shortcut->add("bn", std::make_unique<nn::BatchNormT<T>>(out_c));
  }
  return std::make_unique<nn::ResidualT<T>>(std::move(body), std::move(shortcut));
}

template <typename T>
std::unique_ptr<nn::ResidualT<T>> basic_block2d(long in_c, long out_c, long stride) {
  auto body = seq<T>();
  body->add("conv1", nn::conv2d<T>(in_c, out_c, 3, stride, 1));
  body->add("bn1", std::make_unique<nn::BatchNormT<T>>(out_c));
  body->add("act1", std::make_unique<nn::PReLUT<T>>(out_c));
  body->add("conv2", nn::conv2d<T>(out_c, out_c, 3, 1, 1));
  body->add("bn2", std::make_unique<nn::BatchNormT<T>>(out_c));
  auto shortcut = seq<T>();
  if (in_c != out_c || stride != 1) {
    shortcut->add("conv", nn::conv2d<T>(in_c, out_c, 1, stride, 0));
    shortcut->add("bn", std::make_unique<nn::BatchNormT<T>>(out_c));
  }
  return std::make_unique<nn::ResidualT<T>>(std::move(body), std::move(shortcut));
}

template <typename T>
std::unique_ptr<nn::SequentialT<T>> resnet_stages(const ModelConfig& cfg, bool two_d) {
  auto stages = seq<T>();
  long in_c = cfg.frontend_channels;
  const std::array<long, 4> strides{1, 2, 2, 2};
  for (int s = 0; s < 4; ++s) {
    auto stage = seq<T>();
    long out_c = cfg.stage_channels[static_cast<size_t>(s)];
    for (int b = 0; b < 2; ++b) {
      std::string tag = std::to_string(b + 1);
      long stride = b == 0 ? strides[static_cast<size_t>(s)] : 1;
      if (two_d)
        stage->add("block" + tag, basic_block2d<T>(in_c, out_c, stride));
      else
        stage->add("block" + tag, basic_block1d<T>(in_c, out_c, stride));
      stage->add("post" + tag, std::make_unique<nn::PReLUT<T>>(out_c));
      in_c = out_c;
    }
    stages->add("stage" + std::to_string(s + 1), std::move(stage));
  }
  return stages;
}

}  // namespace detail

/// Multi-scale temporal block stack. Each block runs parallel branches with
/// kernel sizes {3,5,7} at the block's dilation, "same" padding, each branch
/// conv + bn + prelu + dropout; outputs concatenate back to cfg channels. The
/// first block projects the residual with a 1x1 conv; later blocks add the
/// input directly. Time length is preserved throughout.
template <typename T>
std::unique_ptr<nn::SequentialT<T>> build_mstcn(long in_channels, const MstcnConfig& cfg) {
  if (cfg.channels % static_cast<long>(cfg.kernel_sizes.size()) != 0)
    fail("ConfigError", "mstcn channels must divide evenly across branches");
  auto stack = detail::seq<T>();
  const long branch_c = cfg.channels / static_cast<long>(cfg.kernel_sizes.size());
  long in_c = in_channels;
  for (int blk = 0; blk < cfg.blocks; ++blk) {
    long dil = cfg.dilations[static_cast<size_t>(blk)];
    auto branches = std::make_unique<nn::MultibranchT<T>>();
    for (long k : cfg.kernel_sizes) {
      auto br = detail::seq<T>();
      long pad = dil * (k - 1) / 2;
      br->add("conv", nn::conv1d<T>(in_c, branch_c, k, 1, pad, dil));
      br->add("bn", std::make_unique<nn::BatchNormT<T>>(branch_c));
      br->add("act", std::make_unique<nn::PReLUT<T>>(branch_c));
      br->add("drop", std::make_unique<nn::DropoutT<T>>(cfg.dropout));
      branches->add("k" + std::to_string(k), std::move(br));
    }
    auto body = detail::seq<T>();
    body->add("branches", std::move(branches));
    auto shortcut = detail::seq<T>();
    if (in_c != cfg.channels) shortcut->add("proj", nn::conv1d<T>(in_c, cfg.channels, 1, 1, 0));
    stack->add("block" + std::to_string(blk + 1),
               std::make_unique<nn::ResidualT<T>>(std::move(body), std::move(shortcut)));
    in_c = cfg.channels;
  }
  return stack;
}

/// (B, 1, 19520) -> logits (B, n_classes). Stages: frontend (wide strided
/// conv), four 1-d residual stages, adaptive pooling to T=30, MS-TCN, temporal
/// average, linear head. The pooled MS-TCN output (input of "head") is the
/// clip embedding.
template <typename T>
GraphT<T> build_audio_net(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  GraphT<T> g;
  auto frontend = detail::seq<T>();
  frontend->add("conv", nn::conv1d<T>(1, cfg.frontend_channels, 80, 4, 38));
  frontend->add("bn", std::make_unique<nn::BatchNormT<T>>(cfg.frontend_channels));
  frontend->add("act", std::make_unique<nn::PReLUT<T>>(cfg.frontend_channels));
  g.add_stage("frontend", std::move(frontend));

  auto backbone = detail::resnet_stages<T>(cfg, false);
  backbone->add("pool", std::make_unique<nn::AdaptiveAvgPool1dT<T>>(cfg.mstcn_t));
  g.add_stage("backbone", std::move(backbone));

  g.add_stage("mstcn", build_mstcn<T>(cfg.stage_channels[3], cfg.mstcn));
  g.add_stage("pool_t", std::make_unique<nn::TemporalAvgPoolT<T>>());

  auto head = detail::seq<T>();
  head->add("fc", std::make_unique<nn::LinearT<T>>(cfg.mstcn.channels, cfg.n_classes));
  g.add_stage("head", std::move(head));

  g.finalize({1, 1, media::kClipSamples}, seed);
  return g;
}

/// (B, 1, 30, 96, 96) -> logits (B, n_classes). A 3-d frontend halves space
/// twice (96 -> 48 -> 24) while preserving time, frames then run the 2-d
/// residual stages independently, global spatial pooling re-forms the
/// (B, C, 30) sequence for the MS-TCN.
template <typename T>
GraphT<T> build_video_net(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  GraphT<T> g;
  auto frontend = detail::seq<T>();
  frontend->add("conv", nn::conv3d<T>(1, cfg.frontend_channels, {5, 7, 7}, {1, 2, 2}, {2, 3, 3}));
  frontend->add("bn", std::make_unique<nn::BatchNormT<T>>(cfg.frontend_channels));
  frontend->add("act", std::make_unique<nn::PReLUT<T>>(cfg.frontend_channels));
  frontend->add("pool",
                std::make_unique<nn::MaxPool3dT<T>>(std::array<long, 3>{1, 3, 3},
                                                    std::array<long, 3>{1, 2, 2},
                                                    std::array<long, 3>{0, 1, 1}));
  frontend->add("fold", std::make_unique<nn::FoldTimeT<T>>());
  g.add_stage("frontend", std::move(frontend));

  auto backbone = detail::resnet_stages<T>(cfg, true);
  backbone->add("pool", std::make_unique<nn::GlobalAvgPool2dT<T>>());
  backbone->add("unfold", std::make_unique<nn::UnfoldTimeT<T>>(cfg.mstcn_t));
  g.add_stage("backbone", std::move(backbone));

  g.add_stage("mstcn", build_mstcn<T>(cfg.stage_channels[3], cfg.mstcn));
  g.add_stage("pool_t", std::make_unique<nn::TemporalAvgPoolT<T>>());

  auto head = detail::seq<T>();
  head->add("fc", std::make_unique<nn::LinearT<T>>(cfg.mstcn.channels, cfg.n_classes));
  g.add_stage("head", std::move(head));

  g.finalize({1, 1, media::kClipFrames, media::kRoiSide, media::kRoiSide}, seed);
  return g;
}

/// Concatenated modality probabilities (B, 6) -> logits (B, 3). Two linear
/// layers around a fixed-slope activation: 6*H + H + H*3 + 3 parameters.
template <typename T>
GraphT<T> build_fusion_head(const ModelConfig& cfg, uint64_t seed) {
  GraphT<T> g;
  auto head = detail::seq<T>();
  head->add("fc1", std::make_unique<nn::LinearT<T>>(2L * cfg.n_classes, cfg.fusion_hidden));
  head->add("act", std::make_unique<nn::LeakyReLUT<T>>(0.25));
  head->add("fc2", std::make_unique<nn::LinearT<T>>(cfg.fusion_hidden, cfg.n_classes));
  g.add_stage("head", std::move(head));
  g.finalize({1, 2L * cfg.n_classes}, seed);
  return g;
}

template <typename T>
struct ModalityOutputT {
  TensorT<T> logits;      // (B, n_classes)
  TensorT<T> probs;       // (B, n_classes)
  TensorT<T> embedding;   // (B, mstcn channels)
};

/// Forward a modality graph, tapping the embedding (the head's input).
template <typename T>
ModalityOutputT<T> modality_forward(GraphT<T>& g, const TensorT<T>& x, bool want_grad = false) {
  ModalityOutputT<T> out;
  out.embedding = g.forward_until(x, g.n_stages() - 1, want_grad);
  out.logits = g.forward_from(out.embedding, g.n_stages() - 1, want_grad);
  out.probs = nn::softmax(out.logits);
  return out;
}

/// Concatenate the two probability rows into the fusion head's input.
template <typename T>
TensorT<T> fusion_input(const TensorT<T>& audio_probs, const TensorT<T>& video_probs) {
  if (audio_probs.shape != video_probs.shape || audio_probs.ndim() != 2)
    fail("ShapeMismatch", "fusion_input: probability shapes differ");
  const long b = audio_probs.shape[0], c = audio_probs.shape[1];
  TensorT<T> x({b, 2 * c});
  for (long i = 0; i < b; ++i) {
    std::copy(audio_probs.ptr() + i * c, audio_probs.ptr() + (i + 1) * c, x.ptr() + i * 2 * c);
    std::copy(video_probs.ptr() + i * c, video_probs.ptr() + (i + 1) * c, x.ptr() + i * 2 * c + c);
  }
  return x;
}

template <typename T>
TensorT<T> fuse_forward(GraphT<T>& fusion, const ModalityOutputT<T>& audio_out,
                        const ModalityOutputT<T>& video_out, bool want_grad = false) {
  return fusion.forward(fusion_input(audio_out.probs, video_out.probs), want_grad);
}

using ModalityOutput = ModalityOutputT<float>;

}  // namespace sl::models
