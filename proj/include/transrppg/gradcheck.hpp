// Finite-difference verification suite, run in double precision: every
// differentiable op on random shapes, plus the full hierarchical loss on a
// miniature model configuration, checked weight group by weight group.

#pragma once

#include "transrppg/model.hpp"
#include "transrppg/random.hpp"
#include "transrppg/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace transrppg {

struct GradCheckResult {
  std::string name;
  double err;
};

namespace detail {

inline Tensor<double> random_tensor(std::vector<size_t> shape, std::mt19937_64& rng,
                                    double scale = 1.0) {
  size_t total = 1;
  for (size_t e : shape) total *= e;
  std::vector<double> data(total);
  for (double& v : data) v = scale * normal(rng);
  return Tensor<double>::from_data(std::move(shape), std::move(data));
}

}  // namespace detail

// Per-op checks: each op is reduced to a scalar through a fixed random
// projection so the whole Jacobian is exercised.
inline std::vector<GradCheckResult> gradcheck_ops(uint64_t seed, size_t trials = 5) {
  using Td = Tensor<double>;
  std::vector<GradCheckResult> results;
  std::mt19937_64 rng(seed);
  auto record = [&](const std::string& name, double err) {
    results.push_back({name, err});
  };
  for (size_t t = 0; t < trials; ++t) {
    const size_t m = 2 + rng() % 4, k = 2 + rng() % 4, n = 2 + rng() % 4;
    // random projection to a scalar, fixed per trial
    auto project = [&rng](const Td& y) {
      // deterministic pseudo-weights from the value count
      std::vector<double> w(y.size());
      for (size_t i = 0; i < w.size(); ++i) w[i] = std::cos(1.7 * static_cast<double>(i + 1));
      return sum(mul(y, Td::from_data(y.shape(), std::move(w))));
    };

    {
      Td b = detail::random_tensor({k, n}, rng);
      record("matmul.lhs", grad_check<double>(
                               [&](const Td& x) { return project(matmul(x, b)); },
                               detail::random_tensor({m, k}, rng)));
      Td a = detail::random_tensor({m, k}, rng);
      record("matmul.rhs", grad_check<double>(
                               [&](const Td& x) { return project(matmul(a, x)); },
                               detail::random_tensor({k, n}, rng)));
    }
    record("softmax", grad_check<double>(
                          [&](const Td& x) { return project(softmax(x, 1)); },
                          detail::random_tensor({m, n}, rng)));
    {
      Td gain = detail::random_tensor({n}, rng);
      Td bias = detail::random_tensor({n}, rng);
      record("layer_norm.x", grad_check<double>(
                                 [&](const Td& x) { return project(layer_norm(x, gain, bias)); },
                                 detail::random_tensor({m, n}, rng)));
      Td x0 = detail::random_tensor({m, n}, rng);
      record("layer_norm.gain",
             grad_check<double>([&](const Td& g) { return project(layer_norm(x0, g, bias)); },
                                detail::random_tensor({n}, rng)));
      record("layer_norm.bias",
             grad_check<double>([&](const Td& b) { return project(layer_norm(x0, gain, b)); },
                                detail::random_tensor({n}, rng)));
    }
    record("gelu", grad_check<double>([&](const Td& x) { return project(gelu(x)); },
                                      detail::random_tensor({m, n}, rng)));
    record("add_bias_row.bias",
           [&] {
             Td x0 = detail::random_tensor({m, n}, rng);
             return grad_check<double>(
                 [&](const Td& b) { return project(add_bias_row(x0, b)); },
                 detail::random_tensor({n}, rng));
           }());
    record("bce_with_logits",
           grad_check<double>(
               [&, t](const Td& z) { return bce_with_logits(z, static_cast<int>(t % 2)); },
               detail::random_tensor({1}, rng)));
    {
      const size_t s = 3 + rng() % 3, d = 2 + rng() % 3;
      Td q = detail::random_tensor({s, d}, rng), kk = detail::random_tensor({s, d}, rng),
         v = detail::random_tensor({s, d}, rng);
      const double sc = 1.0 / std::sqrt(static_cast<double>(d));
      record("attention.q",
             grad_check<double>([&](const Td& x) { return project(attention(x, kk, v, sc)); },
                                detail::random_tensor({s, d}, rng)));
      record("attention.k",
             grad_check<double>([&](const Td& x) { return project(attention(q, x, v, sc)); },
                                detail::random_tensor({s, d}, rng)));
      record("attention.v",
             grad_check<double>([&](const Td& x) { return project(attention(q, kk, x, sc)); },
                                detail::random_tensor({s, d}, rng)));
    }
    record("mean_rows", grad_check<double>([&](const Td& x) { return project(mean_rows(x)); },
                                           detail::random_tensor({m, n}, rng)));
  }
  return results;
}

inline ModelConfig gradcheck_mini_config() {
  ModelConfig cfg;
  cfg.H_face = 9;
  cfg.W = 60;
  cfg.C = 3;
  cfg.H_bg = 7;
  cfg.D = 12;
  cfg.heads = 3;
  cfg.layers = 2;
  return cfg;
}

// Full-model check: analytic gradient of the hierarchical loss versus
// central finite differences, element by element for every weight group.
inline std::vector<GradCheckResult> gradcheck_model(uint64_t seed) {
  const ModelConfig cfg = gradcheck_mini_config();
  ModelWeights<double> w = ModelWeights<double>::make(cfg);
  w.init(seed);
  std::mt19937_64 rng(seed + 1);
  auto face = detail::random_tensor({cfg.face_tokens(), cfg.patch_dim()}, rng, 0.5);
  auto bg = detail::random_tensor({cfg.bg_tokens(), cfg.patch_dim()}, rng, 0.5);
  const int label = 1;

  auto loss_value = [&]() {
    ForwardResult<double> res = forward_patches(face, bg, w);
    return static_cast<double>(hierarchical_loss(res, label, cfg).total.item());
  };

  w.zero_grads();
  {
    ForwardResult<double> res = forward_patches(face, bg, w);
    hierarchical_loss(res, label, cfg).total.backward();
  }

  std::vector<GradCheckResult> results;
  const double step = 1e-5;
  for (auto& [name, t] : w.param_list()) {
    const std::vector<double> analytic = t->grad();
    double worst = 0.0;
    for (size_t i = 0; i < t->size(); ++i) {
      const double orig = t->data()[i];
      const double h = step * std::max(1.0, std::fabs(orig));
      t->data()[i] = orig + h;
      const double fp = loss_value();
      t->data()[i] = orig - h;
      const double fm = loss_value();
      t->data()[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double err =
          std::fabs(analytic[i] - fd) / std::max({std::fabs(analytic[i]), std::fabs(fd), 1e-3});
      worst = std::max(worst, err);
    }
    results.push_back({"loss_grad." + name, worst});
  }
  return results;
}

inline std::vector<GradCheckResult> gradcheck_suite(uint64_t seed) {
  auto results = gradcheck_ops(seed);
  auto model = gradcheck_model(seed + 17);
  results.insert(results.end(), model.begin(), model.end());
  return results;
}

}  // namespace transrppg
