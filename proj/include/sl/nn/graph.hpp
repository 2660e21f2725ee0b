#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sl/nn/layers.hpp"

namespace sl::nn {

enum class FreezeSelector { All, None, AllButMstcnAndHead };

/// An ordered list of named stages with static shape inference, dotted
/// parameter naming, and a fixed input signature. finalize() must run before
/// any execution.
template <typename T>
class GraphT {
 public:
  void add_stage(const std::string& name, std::unique_ptr<LayerT<T>> layer) {
    if (finalized_) fail("ConfigError", "graph: cannot add stages after finalize");
    for (const auto& s : stages_)
      if (s.name == name) fail("ConfigError", "graph: duplicate stage " + name);
    stages_.push_back({name, std::move(layer)});
  }

  /// Infer all shapes from a representative input (batch extent free at run
  /// time), initialize parameters from the seed, and register dotted names.
  void finalize(const std::vector<long>& in_shape, uint64_t seed) {
    if (finalized_) fail("ConfigError", "graph: finalize called twice");
    in_shape_ = in_shape;
    boundaries_.clear();
    boundaries_.push_back(in_shape);
    for (const auto& s : stages_) boundaries_.push_back(s.layer->out_shape(boundaries_.back()));
    Rng init_rng(Rng::derive(seed, 0x1217));
    uint64_t stream_counter = 0;
    for (auto& s : stages_) {
      s.layer->init_params(init_rng);
      s.layer->seed_streams(Rng::derive(seed, 0xd607), stream_counter);
    }
    params_.clear();
    for (auto& s : stages_)
      s.layer->visit_params(s.name + ".", [&](const std::string& name, ParamT<T>& p) {
        if (!param_index_.emplace(name, params_.size()).second)
          fail("ConfigError", "graph: duplicate parameter name " + name);
        params_.push_back({name, &p});
      });
    buffers_.clear();
    for (auto& s : stages_)
      s.layer->visit_buffers(s.name + ".", [&](const std::string& name, TensorT<T>& b) {
        buffers_.push_back({name, &b});
      });
    finalized_ = true;
  }

  bool finalized() const { return finalized_; }
  size_t n_stages() const { return stages_.size(); }
  const std::vector<long>& in_shape() const { return in_shape_; }
  const std::vector<long>& out_shape() const { return boundaries_.back(); }
  const std::vector<long>& shape_after(size_t stage) const { return boundaries_.at(stage + 1); }

  TensorT<T> forward(const TensorT<T>& x, bool want_grad = false) {
    return forward_range(x, 0, stages_.size(), want_grad);
  }

  /// Run stages [0, n_stages); use with forward_from to tap intermediates.
  TensorT<T> forward_until(const TensorT<T>& x, size_t n_stages, bool want_grad = false) {
    return forward_range(x, 0, n_stages, want_grad);
  }
  TensorT<T> forward_from(const TensorT<T>& x, size_t first_stage, bool want_grad = false) {
    return forward_range(x, first_stage, stages_.size(), want_grad);
  }

  TensorT<T> backward(const TensorT<T>& dy) {
    if (!ran_forward_) fail("NoForwardState", "graph: backward before forward");
    TensorT<T> g = dy;
    for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) g = it->layer->backward(g);
    return g;
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p->zero_grad();
  }

  /// Plain gradient-descent update on trainable parameters, fixed order.
  void sgd_step(double lr) {
    for (auto& [name, p] : params_) {
      if (!p->trainable) continue;
      for (size_t i = 0; i < p->value.data.size(); ++i)
        p->value.data[i] -= static_cast<T>(lr * p->grad.data[i]);
    }
  }

  void set_train(bool train) {
    for (auto& s : stages_) s.layer->set_train(train);
  }

  void freeze(FreezeSelector sel) {
    for (auto& [name, p] : params_) {
      switch (sel) {
        case FreezeSelector::All: p->trainable = false; break;
        case FreezeSelector::None: p->trainable = true; break;
        case FreezeSelector::AllButMstcnAndHead:
          p->trainable = name.rfind("mstcn.", 0) == 0 || name.rfind("head.", 0) == 0;
          break;
      }
      if (!p->trainable) p->zero_grad();
    }
  }

  const std::vector<std::pair<std::string, ParamT<T>*>>& params() const { return params_; }
  const std::vector<std::pair<std::string, TensorT<T>*>>& buffers() const { return buffers_; }

  ParamT<T>& param(const std::string& name) {
    auto it = param_index_.find(name);
    if (it == param_index_.end()) fail("ConfigError", "graph: no parameter named " + name);
    return *params_[it->second].second;
  }

  long parameter_count(const std::string& prefix = "") const {
    long n = 0;
    for (const auto& [name, p] : params_)
      if (prefix.empty() || name.rfind(prefix, 0) == 0) n += p->value.numel();
    return n;
  }

  /// All learnable state: parameters plus buffers, in registration order.
  std::vector<std::pair<std::string, const TensorT<T>*>> state() const {
    std::vector<std::pair<std::string, const TensorT<T>*>> out;
    for (const auto& [name, p] : params_) out.push_back({name, &p->value});
    for (const auto& [name, b] : buffers_) out.push_back({name, b});
    return out;
  }

  /// Deep copy of all state values, for checkpoint snapshots.
  std::map<std::string, TensorT<T>> snapshot_state() const {
    std::map<std::string, TensorT<T>> out;
    for (const auto& [name, t] : state()) out.emplace(name, *t);
    return out;
  }

  /// Restore from a snapshot; names and shapes must cover the graph exactly,
  /// except names under `skip_prefixes` which may be absent (kept as-is).
  void load_state(const std::map<std::string, TensorT<T>>& st,
                  const std::vector<std::string>& skip_prefixes = {}) {
    auto skippable = [&](const std::string& name) {
      for (const auto& pre : skip_prefixes)
        if (name.rfind(pre, 0) == 0) return true;
      return false;
    };
    size_t used = 0;
    auto apply = [&](const std::string& name, TensorT<T>& dst) {
      auto it = st.find(name);
      if (it == st.end()) {
        if (skippable(name)) return;
        fail("CheckpointMismatch", "missing tensor " + name);
      }
      if (it->second.shape != dst.shape)
        fail("CheckpointMismatch", "shape mismatch for " + name + ": checkpoint " +
                                       shape_str(it->second.shape) + " vs graph " +
                                       shape_str(dst.shape));
      dst.data = it->second.data;
      ++used;
    };
    for (auto& [name, p] : params_) apply(name, p->value);
    for (auto& [name, b] : buffers_) apply(name, *b);
    if (used != st.size())
      fail("CheckpointMismatch",
           format("checkpoint has %zu tensors not present in the graph", st.size() - used));
  }

 private:
  TensorT<T> forward_range(const TensorT<T>& x, size_t first, size_t last, bool want_grad) {
    if (!finalized_) fail("ConfigError", "graph: execute before finalize");
    const auto& expect = boundaries_.at(first);
    if (x.shape.size() != expect.size())
      fail("ShapeMismatch", "graph: input rank " + shape_str(x.shape) + " vs signature " +
                                shape_str(expect));
    for (size_t i = 1; i < expect.size(); ++i)
      if (x.shape[i] != expect[i])
        fail("ShapeMismatch",
             "graph: input " + shape_str(x.shape) + " vs signature " + shape_str(expect));
    TensorT<T> h = x;
    for (size_t i = first; i < last; ++i) h = stages_[i].layer->forward(h, want_grad);
    if (last == stages_.size()) ran_forward_ = true;
    return h;
  }

  struct Stage {
    std::string name;
    std::unique_ptr<LayerT<T>> layer;
  };
  std::vector<Stage> stages_;
  std::vector<std::vector<long>> boundaries_;
  std::vector<long> in_shape_;
  std::vector<std::pair<std::string, ParamT<T>*>> params_;
  std::map<std::string, size_t> param_index_;
  std::vector<std::pair<std::string, TensorT<T>*>> buffers_;
  bool finalized_ = false, ran_forward_ = false;
};

using Graph = GraphT<float>;

}  // namespace sl::nn
