// Mini-batch training with classic Adam (coupled L2 weight decay), the
// halve-at-epoch learning-rate schedule, deterministic seeded shuffling and
// resumable checkpoints that carry the optimizer state.

#pragma once

#include "transrppg/model.hpp"
#include "transrppg/random.hpp"
#include "transrppg/tensor.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace transrppg {

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 5e-5;
  size_t batch_size = 10;
  size_t max_epochs = 60;
  size_t lr_halve_epoch = 45;  // epochs are 1-indexed; this epoch onwards uses lr/2
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  uint64_t seed = 1;
  bool shuffle = true;

  void validate() const {
    if (lr <= 0) throw std::invalid_argument("train: lr must be positive");
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
      throw std::invalid_argument("train: betas must lie in (0,1)");
    if (lr_halve_epoch > max_epochs)
      throw std::invalid_argument("train: lr_halve_epoch must be <= max_epochs");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  }
};

inline double lr_at_epoch(size_t epoch, const TrainConfig& cfg) {
  if (epoch < 1 || epoch > cfg.max_epochs)
    throw std::invalid_argument("lr_at_epoch: epoch " + std::to_string(epoch) +
                                " out of 1.." + std::to_string(cfg.max_epochs));
  return epoch >= cfg.lr_halve_epoch ? cfg.lr / 2.0 : cfg.lr;
}

// One Adam update on a single parameter vector. Weight decay enters as an
// L2 term added to the gradient before the moment updates.
template <typename T>
void adam_update(std::vector<T>& w, const std::vector<T>& grad, std::vector<T>& m,
                 std::vector<T>& v, size_t step_index, double lr, const TrainConfig& cfg,
                 double grad_scale = 1.0) {
  if (w.size() != grad.size() || w.size() != m.size() || w.size() != v.size())
    throw std::invalid_argument("adam_update: state shape mismatch");
  if (step_index < 1) throw std::invalid_argument("adam_update: step_index must be >= 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_index));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_index));
  for (size_t i = 0; i < w.size(); ++i) {
    const double g = static_cast<double>(grad[i]) * grad_scale +
                     cfg.weight_decay * static_cast<double>(w[i]);
    const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double mhat = mi / bc1, vhat = vi / bc2;
    w[i] = static_cast<T>(static_cast<double>(w[i]) -
                          lr * mhat / (std::sqrt(vhat) + cfg.adam_epsilon));
  }
}

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m, v;  // aligned with ModelWeights::param_list order
  size_t step = 0;

  static AdamState make(ModelWeights<T>& w) {
    AdamState s;
    for (auto& [name, t] : w.param_list()) {
      s.m.emplace_back(t->size(), T(0));
      s.v.emplace_back(t->size(), T(0));
    }
    return s;
  }
};

// Applies one optimizer step across all parameters; gradients are expected
// to hold per-batch sums and grad_scale = 1/batch_count turns them into means.
template <typename T>
void adam_step(ModelWeights<T>& w, AdamState<T>& state, const TrainConfig& cfg, double lr,
               double grad_scale) {
  auto params = w.param_list();
  if (params.size() != state.m.size())
    throw std::invalid_argument("adam_step: optimizer state does not match model");
  ++state.step;
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor<T>* t = params[i].second;
    if (!t->has_grad()) t->zero_grad();
    adam_update(t->data(), t->grad(), state.m[i], state.v[i], state.step, lr, cfg, grad_scale);
  }
}

struct TrainLogEntry {
  size_t epoch;
  double lr;
  double l_face, l_bg, l_combined, l_overall;
  double wall_s;
};

using TrainLog = std::vector<TrainLogEntry>;

inline void write_train_log(const TrainLog& log, std::ostream& os) {
  char buf[256];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf),
                  "epoch=%zu lr=%.6f L_face=%.6f L_bg=%.6f L_combined=%.6f L_overall=%.6f\n",
                  e.epoch, e.lr, e.l_face, e.l_bg, e.l_combined, e.l_overall);
    os << buf;
  }
}

inline void write_train_log(const TrainLog& log, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write train log: " + path);
  write_train_log(log, os);
}

template <typename T>
struct TrainSample {
  Tensor<T> face_patches;
  Tensor<T> bg_patches;  // invalid when the bg branch is disabled
  int label = 0;
  std::string subject;
};

// Epoch loop with per-epoch derived shuffle seed (cfg.seed + 1315423911 *
// epoch), per-sample backward accumulation and one Adam step per batch.
// The last incomplete batch is kept. Deterministic given (weights, data,
// config); resuming from a saved epoch boundary reproduces the exact
// trajectory of an uninterrupted run.
template <typename T>
TrainLog train(ModelWeights<T>& w, std::vector<TrainSample<T>>& data, const TrainConfig& cfg,
               AdamState<T>& state, size_t start_epoch = 1) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: dataset is empty");
  TrainLog log;
  for (size_t epoch = start_epoch; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(epoch, cfg);
    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    if (cfg.shuffle) {
      std::mt19937_64 rng(cfg.seed + 1315423911ull * epoch);
      deterministic_shuffle(order, rng);
    }
    double sum_face = 0, sum_bg = 0, sum_com = 0, sum_total = 0;
    for (size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const size_t b1 = std::min(b0 + cfg.batch_size, order.size());
      w.zero_grads();
      for (size_t i = b0; i < b1; ++i) {
        TrainSample<T>& s = data[order[i]];
        LossBreakdown<T> loss;
        try {
          ForwardResult<T> res = forward_patches(s.face_patches, s.bg_patches, w);
          loss = hierarchical_loss(res, s.label, w.cfg);
        } catch (const std::runtime_error& e) {
          throw std::runtime_error("epoch " + std::to_string(epoch) + " batch " +
                                   std::to_string(b0 / cfg.batch_size) + ": " + e.what());
        }
        loss.total.backward();
        sum_face += loss.face;
        sum_bg += loss.bg;
        sum_com += loss.combined;
        sum_total += static_cast<double>(loss.total.item());
      }
      adam_step(w, state, cfg, lr, 1.0 / static_cast<double>(b1 - b0));
    }
    const double n = static_cast<double>(data.size());
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.push_back({epoch, lr, sum_face / n, sum_bg / n, sum_com / n, sum_total / n, wall});
  }
  return log;
}

// Training checkpoint = model weights plus optimizer moments, step counter
// and completed-epoch marker, all in the same tensor container format.
template <typename T>
void save_train_checkpoint(ModelWeights<T>& w, const AdamState<T>& state, size_t epochs_done,
                           const std::string& path) {
  std::vector<std::pair<std::string, const Tensor<T>*>> ts;
  auto params = w.param_list();
  for (auto& [name, t] : params) ts.push_back({name, t});
  std::vector<Tensor<T>> extra;
  extra.reserve(params.size() * 2 + 2);
  for (size_t i = 0; i < params.size(); ++i) {
    extra.push_back(Tensor<T>::from_data(params[i].second->shape(), state.m[i]));
    extra.push_back(Tensor<T>::from_data(params[i].second->shape(), state.v[i]));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    ts.push_back({"opt.m." + params[i].first, &extra[2 * i]});
    ts.push_back({"opt.v." + params[i].first, &extra[2 * i + 1]});
  }
  Tensor<T> step_t = Tensor<T>::scalar(static_cast<T>(state.step));
  Tensor<T> epoch_t = Tensor<T>::scalar(static_cast<T>(epochs_done));
  ts.push_back({"opt.step", &step_t});
  ts.push_back({"train.epochs_done", &epoch_t});
  save_tensors(ts, path);
}

template <typename T>
size_t load_train_checkpoint(ModelWeights<T>& w, AdamState<T>& state, const std::string& path) {
  load_checkpoint(w, path);
  auto stored = load_tensors(path);
  auto params = w.param_list();
  state = AdamState<T>::make(w);
  for (size_t i = 0; i < params.size(); ++i) {
    for (const char* kind : {"m", "v"}) {
      auto it = stored.find(std::string("opt.") + kind + "." + params[i].first);
      if (it == stored.end())
        throw std::runtime_error("checkpoint has no optimizer state for '" + params[i].first +
                                 "': " + path);
      auto& dst = kind[0] == 'm' ? state.m[i] : state.v[i];
      for (size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(it->second.data[j]);
    }
  }
  auto step_it = stored.find("opt.step");
  auto epoch_it = stored.find("train.epochs_done");
  if (step_it == stored.end() || epoch_it == stored.end())
    throw std::runtime_error("checkpoint missing optimizer counters: " + path);
  state.step = static_cast<size_t>(step_it->second.data[0]);
  return static_cast<size_t>(epoch_it->second.data[0]);
}

}  // namespace transrppg
