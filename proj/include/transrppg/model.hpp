// Two-branch shared-encoder transformer over face and background MSTmaps:
// overlapping-patch sequentialization, shared linear patch embedding,
// branch-specific class tokens and position embeddings, L shared pre-norm
// encoder layers, one fusion layer over the concatenated token features,
// and three linear classification heads with hierarchical BCE supervision.

#pragma once

#include "transrppg/mstmap.hpp"
#include "transrppg/random.hpp"
#include "transrppg/tensor.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace transrppg {

struct ModelConfig {
  size_t H_face = 63, W = 300, C = 3;
  size_t H_bg = 15;
  size_t P_H = 3, P_W = 30;
  size_t S_H = 1, S_W = 15;
  size_t D = 96;
  size_t heads = 3;
  size_t layers = 6;
  size_t mlp_ratio = 2;  // hidden width doubles in the first MLP layer
  bool use_class_token = true;
  bool use_pos_embed = true;
  bool use_bg_branch = true;

  size_t per_head_dim() const { return D / heads; }
  size_t patch_dim() const { return P_H * P_W * C; }
  size_t mlp_hidden() const { return mlp_ratio * D; }

  // Sliding-window token count along one dimension.
  static size_t tokens_1d(size_t extent, size_t patch, size_t step) {
    return (extent - patch + step) / step;
  }
  size_t face_tokens() const { return tokens_1d(H_face, P_H, S_H) * tokens_1d(W, P_W, S_W); }
  size_t bg_tokens() const { return tokens_1d(H_bg, P_H, S_H) * tokens_1d(W, P_W, S_W); }
  size_t face_seq() const { return face_tokens() + (use_class_token ? 1 : 0); }
  size_t bg_seq() const { return bg_tokens() + (use_class_token ? 1 : 0); }
  size_t fusion_seq() const {
    return face_tokens() + (use_bg_branch ? bg_tokens() : 0) + (use_class_token ? 1 : 0);
  }

  void validate() const {
    if (D == 0 || heads == 0 || D % heads != 0)
      throw std::invalid_argument("model: D must be a positive multiple of heads");
    if (S_H < 1 || S_W < 1) throw std::invalid_argument("model: step sizes must be >= 1");
    if (P_H > H_face || P_W > W)
      throw std::invalid_argument("model: patch exceeds face map extents");
    if (use_bg_branch && P_H > H_bg)
      throw std::invalid_argument("model: patch exceeds background map extents");
    if (face_tokens() < 1 || (use_bg_branch && bg_tokens() < 1))
      throw std::invalid_argument("model: token counts must be >= 1");
    if (mlp_ratio < 1) throw std::invalid_argument("model: mlp_ratio must be >= 1");
  }
};

template <typename T>
struct LayerWeights {
  Tensor<T> ln1_gain, ln1_bias;
  Tensor<T> qkv;  // D x 3D, bias-free
  Tensor<T> proj_w, proj_b;
  Tensor<T> ln2_gain, ln2_bias;
  Tensor<T> fc1_w, fc1_b;
  Tensor<T> fc2_w, fc2_b;
};

template <typename T>
struct ModelWeights {
  ModelConfig cfg;
  Tensor<T> patch_w, patch_b;  // shared between branches
  Tensor<T> cls_face, cls_bg, cls_com;
  Tensor<T> pos_face, pos_bg;
  std::vector<LayerWeights<T>> layers;  // cfg.layers encoder layers + 1 fusion layer
  Tensor<T> head_face_w, head_face_b;
  Tensor<T> head_bg_w, head_bg_b;
  Tensor<T> head_com_w, head_com_b;

  static ModelWeights make(const ModelConfig& cfg) {
    cfg.validate();
    ModelWeights w;
    w.cfg = cfg;
    const size_t D = cfg.D;
    auto param = [](std::vector<size_t> shape) {
      return Tensor<T>::zeros(std::move(shape), true);
    };
    w.patch_w = param({cfg.patch_dim(), D});
    w.patch_b = param({D});
    if (cfg.use_class_token) {
      w.cls_face = param({1, D});
      w.cls_com = param({1, D});
      if (cfg.use_bg_branch) w.cls_bg = param({1, D});
    }
    if (cfg.use_pos_embed) {
      w.pos_face = param({cfg.face_seq(), D});
      if (cfg.use_bg_branch) w.pos_bg = param({cfg.bg_seq(), D});
    }
    w.layers.resize(cfg.layers + 1);
    for (auto& l : w.layers) {
      l.ln1_gain = param({D});
      l.ln1_bias = param({D});
      l.qkv = param({D, 3 * D});
      l.proj_w = param({D, D});
      l.proj_b = param({D});
      l.ln2_gain = param({D});
      l.ln2_bias = param({D});
      l.fc1_w = param({D, cfg.mlp_hidden()});
      l.fc1_b = param({cfg.mlp_hidden()});
      l.fc2_w = param({cfg.mlp_hidden(), D});
      l.fc2_b = param({D});
    }
    w.head_face_w = param({D, 1});
    w.head_face_b = param({1, 1});
    if (cfg.use_bg_branch) {
      w.head_bg_w = param({D, 1});
      w.head_bg_b = param({1, 1});
    }
    w.head_com_w = param({D, 1});
    w.head_com_b = param({1, 1});
    return w;
  }

  // Fixed checkpoint/traversal order.
  std::vector<std::pair<std::string, Tensor<T>*>> param_list() {
    std::vector<std::pair<std::string, Tensor<T>*>> p;
    p.push_back({"patch_embed.weight", &patch_w});
    p.push_back({"patch_embed.bias", &patch_b});
    if (cfg.use_class_token) {
      p.push_back({"cls.face", &cls_face});
      if (cfg.use_bg_branch) p.push_back({"cls.bg", &cls_bg});
      p.push_back({"cls.com", &cls_com});
    }
    if (cfg.use_pos_embed) {
      p.push_back({"pos.face", &pos_face});
      if (cfg.use_bg_branch) p.push_back({"pos.bg", &pos_bg});
    }
    for (size_t i = 0; i < layers.size(); ++i) {
      std::string base = i < cfg.layers ? "enc" + std::to_string(i) : std::string("fusion");
      auto& l = layers[i];
      p.push_back({base + ".ln1.gain", &l.ln1_gain});
      p.push_back({base + ".ln1.bias", &l.ln1_bias});
      p.push_back({base + ".qkv.weight", &l.qkv});
      p.push_back({base + ".proj.weight", &l.proj_w});
      p.push_back({base + ".proj.bias", &l.proj_b});
      p.push_back({base + ".ln2.gain", &l.ln2_gain});
      p.push_back({base + ".ln2.bias", &l.ln2_bias});
      p.push_back({base + ".mlp.fc1.weight", &l.fc1_w});
      p.push_back({base + ".mlp.fc1.bias", &l.fc1_b});
      p.push_back({base + ".mlp.fc2.weight", &l.fc2_w});
      p.push_back({base + ".mlp.fc2.bias", &l.fc2_b});
    }
    p.push_back({"head.face.weight", &head_face_w});
    p.push_back({"head.face.bias", &head_face_b});
    if (cfg.use_bg_branch) {
      p.push_back({"head.bg.weight", &head_bg_w});
      p.push_back({"head.bg.bias", &head_bg_b});
    }
    p.push_back({"head.com.weight", &head_com_w});
    p.push_back({"head.com.bias", &head_com_b});
    return p;
  }

  // Truncated normal (std 0.02) for projections and position embeddings;
  // zeros for biases, LN biases and class tokens; ones for LN gains.
  void init(uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& [name, t] : param_list()) {
      bool is_gain = name.find(".gain") != std::string::npos;
      bool is_bias = name.find(".bias") != std::string::npos || name.rfind("cls.", 0) == 0;
      if (is_gain) {
        std::fill(t->data().begin(), t->data().end(), T(1));
      } else if (is_bias) {
        std::fill(t->data().begin(), t->data().end(), T(0));
      } else {
        for (T& v : t->data()) v = T(truncated_normal(rng, 0.02));
      }
    }
  }

  void zero_grads() {
    for (auto& [name, t] : param_list()) t->zero_grad();
  }
};

// ---------------------------------------------------------------------------
// Parameter / FLOP accounting
// ---------------------------------------------------------------------------

struct ParamGroup {
  std::string name;
  size_t count;
};

struct ParamCount {
  std::vector<ParamGroup> groups;
  size_t patch_embed = 0;
  size_t transformer_layers = 0;  // L encoder layers + fusion layer
  size_t class_tokens = 0;
  size_t heads = 0;
  size_t pos_embed = 0;

  // Headline figure: patch embedding + all transformer layers. This is the
  // count that lands at 547,488 with the default configuration.
  size_t core() const { return patch_embed + transformer_layers; }
  size_t total_excl_pos() const { return core() + class_tokens + heads; }
  size_t total() const { return total_excl_pos() + pos_embed; }
};

template <typename T>
ParamCount param_count(ModelWeights<T>& w) {
  ParamCount pc;
  for (auto& [name, t] : w.param_list()) {
    const size_t n = t->size();
    pc.groups.push_back({name, n});
    if (name.rfind("patch_embed", 0) == 0) pc.patch_embed += n;
    else if (name.rfind("cls.", 0) == 0) pc.class_tokens += n;
    else if (name.rfind("pos.", 0) == 0) pc.pos_embed += n;
    else if (name.rfind("head.", 0) == 0) pc.heads += n;
    else pc.transformer_layers += n;
  }
  return pc;
}

// Multiply-accumulate estimate (2*m*k*n per matrix product) for one forward
// pass: patch embeddings, QKV/attention/projection/MLP per layer on both
// branches, the fusion layer, and the heads. Report-only.
inline double flop_count(const ModelConfig& cfg) {
  const double D = static_cast<double>(cfg.D);
  const double pd = static_cast<double>(cfg.patch_dim());
  const double hid = static_cast<double>(cfg.mlp_hidden());
  auto layer_flops = [&](double s) {
    double qkv = 2.0 * s * D * 3.0 * D;
    double attn = 2.0 * 2.0 * s * s * D;  // QK^T and AV across all heads
    double proj = 2.0 * s * D * D;
    double mlp = 2.0 * s * D * hid * 2.0;
    return qkv + attn + proj + mlp;
  };
  double total = 2.0 * cfg.face_tokens() * pd * D;
  total += static_cast<double>(cfg.layers) * layer_flops(static_cast<double>(cfg.face_seq()));
  if (cfg.use_bg_branch) {
    total += 2.0 * cfg.bg_tokens() * pd * D;
    total += static_cast<double>(cfg.layers) * layer_flops(static_cast<double>(cfg.bg_seq()));
  }
  total += layer_flops(static_cast<double>(cfg.fusion_seq()));
  total += 2.0 * D * (cfg.use_bg_branch ? 3.0 : 2.0);  // heads
  return total;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

// Flattened overlapping patches in row-major (height-outer) window order;
// each patch flattens in (row, column, channel) order.
template <typename T>
Tensor<T> sequentialize(const MSTMap& map, const ModelConfig& cfg) {
  if (!map.normalized) throw std::invalid_argument("sequentialize expects a normalized map");
  if (cfg.P_H > map.rows || cfg.P_W > map.T)
    throw std::invalid_argument("patch " + std::to_string(cfg.P_H) + "x" + std::to_string(cfg.P_W) +
                                " larger than map " + std::to_string(map.rows) + "x" +
                                std::to_string(map.T));
  if (map.C != cfg.C) throw std::invalid_argument("map channel count does not match config");
  const size_t nh = ModelConfig::tokens_1d(map.rows, cfg.P_H, cfg.S_H);
  const size_t nw = ModelConfig::tokens_1d(map.T, cfg.P_W, cfg.S_W);
  const size_t pd = cfg.patch_dim();
  std::vector<T> data(nh * nw * pd);
  size_t out = 0;
  for (size_t ih = 0; ih < nh; ++ih) {
    for (size_t iw = 0; iw < nw; ++iw) {
      const size_t r0 = ih * cfg.S_H, t0 = iw * cfg.S_W;
      for (size_t pr = 0; pr < cfg.P_H; ++pr)
        for (size_t pc = 0; pc < cfg.P_W; ++pc)
          for (size_t ch = 0; ch < cfg.C; ++ch)
            data[out++] = static_cast<T>(map.at(r0 + pr, t0 + pc, ch));
    }
  }
  return Tensor<T>::from_data({nh * nw, pd}, std::move(data));
}

enum class Branch { Face, Bg };

// Z0 = [class token; patches * E + bias] + branch position embedding.
template <typename T>
Tensor<T> embed(const Tensor<T>& patches, Branch branch, ModelWeights<T>& w) {
  const ModelConfig& cfg = w.cfg;
  if (patches.rank() != 2 || patches.extent(1) != cfg.patch_dim())
    throw std::invalid_argument("embed: patch dimension mismatch, got " +
                                detail::shape_str(patches.shape()) + ", expected cols " +
                                std::to_string(cfg.patch_dim()));
  if (branch == Branch::Bg && !cfg.use_bg_branch)
    throw std::invalid_argument("embed: background branch disabled");
  const size_t expected = branch == Branch::Face ? cfg.face_tokens() : cfg.bg_tokens();
  if (patches.extent(0) != expected)
    throw std::invalid_argument("embed: expected " + std::to_string(expected) +
                                " patches, got " + std::to_string(patches.extent(0)));
  Tensor<T> z = add_bias_row(matmul(patches, w.patch_w), w.patch_b);
  if (cfg.use_class_token) {
    Tensor<T> cls = branch == Branch::Face ? w.cls_face : w.cls_bg;
    z = concat_rows<T>({cls, z});
  }
  if (cfg.use_pos_embed) {
    z = add(z, branch == Branch::Face ? w.pos_face : w.pos_bg);
  }
  return z;
}

// Attention matrices captured during a forward pass; every row sums to 1.
template <typename T>
struct AttentionRecord {
  struct Entry {
    std::string branch;  // "face", "bg", "fusion"
    size_t layer;
    size_t head;
    size_t rows, cols;
    std::vector<T> a;
  };
  std::vector<Entry> entries;
};

// Pre-norm residual encoder layer:
//   Z' = MSA(LN(Z)) + Z;  Z_out = MLP(LN(Z')) + Z'
template <typename T>
Tensor<T> encoder_layer(const Tensor<T>& z, const LayerWeights<T>& l, const ModelConfig& cfg,
                        AttentionRecord<T>* rec = nullptr, const std::string& branch = "",
                        size_t layer_index = 0) {
  const size_t D = cfg.D, dh = cfg.per_head_dim();
  const T att_scale = T(1) / std::sqrt(T(dh));
  Tensor<T> zin = z;
  try {
    Tensor<T> y = layer_norm(zin, l.ln1_gain, l.ln1_bias);
    Tensor<T> qkv = matmul(y, l.qkv);
    std::vector<Tensor<T>> head_outs;
    head_outs.reserve(cfg.heads);
    for (size_t h = 0; h < cfg.heads; ++h) {
      Tensor<T> q = slice_cols(qkv, h * dh, (h + 1) * dh);
      Tensor<T> k = slice_cols(qkv, D + h * dh, D + (h + 1) * dh);
      Tensor<T> v = slice_cols(qkv, 2 * D + h * dh, 2 * D + (h + 1) * dh);
      std::vector<T> attn;
      head_outs.push_back(attention(q, k, v, att_scale, rec ? &attn : nullptr));
      if (rec) {
        rec->entries.push_back({branch, layer_index, h, z.extent(0), z.extent(0), std::move(attn)});
      }
    }
    Tensor<T> msa = add_bias_row(matmul(concat_cols(head_outs), l.proj_w), l.proj_b);
    Tensor<T> z1 = add(msa, zin);
    Tensor<T> y2 = layer_norm(z1, l.ln2_gain, l.ln2_bias);
    Tensor<T> mlp = add_bias_row(
        matmul(gelu(add_bias_row(matmul(y2, l.fc1_w), l.fc1_b)), l.fc2_w), l.fc2_b);
    return add(mlp, z1);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(branch + " layer " + std::to_string(layer_index) + ": " + e.what());
  }
}

template <typename T>
struct ForwardResult {
  Tensor<T> logit_face;
  Tensor<T> logit_bg;  // absent (invalid) when the bg branch is disabled
  Tensor<T> logit_com;
  AttentionRecord<T> attn;
};

// Forward from pre-sequentialized patch matrices. bg_patches may be an
// invalid tensor when the background branch is disabled.
template <typename T>
ForwardResult<T> forward_patches(const Tensor<T>& face_patches, const Tensor<T>& bg_patches,
                                 ModelWeights<T>& w, bool want_attention = false) {
  const ModelConfig& cfg = w.cfg;
  ForwardResult<T> res;
  AttentionRecord<T>* rec = want_attention ? &res.attn : nullptr;

  Tensor<T> zf = embed(face_patches, Branch::Face, w);
  for (size_t i = 0; i < cfg.layers; ++i)
    zf = encoder_layer(zf, w.layers[i], cfg, rec, "face", i);

  Tensor<T> zb;
  if (cfg.use_bg_branch) {
    if (!bg_patches.valid()) throw std::invalid_argument("forward: missing background patches");
    zb = embed(bg_patches, Branch::Bg, w);
    for (size_t i = 0; i < cfg.layers; ++i)
      zb = encoder_layer(zb, w.layers[i], cfg, rec, "bg", i);
  }

  auto head = [](const Tensor<T>& feat, const Tensor<T>& hw, const Tensor<T>& hb) {
    return add(matmul(feat, hw), hb);
  };
  auto branch_feature = [&cfg](const Tensor<T>& z) {
    return cfg.use_class_token ? slice_rows(z, 0, 1) : mean_rows(z);
  };

  res.logit_face = head(branch_feature(zf), w.head_face_w, w.head_face_b);
  if (cfg.use_bg_branch) res.logit_bg = head(branch_feature(zb), w.head_bg_w, w.head_bg_b);

  // Fusion: all non-class token features from both branches plus the joint
  // class token, through one extra transformer layer.
  const size_t skip = cfg.use_class_token ? 1 : 0;
  std::vector<Tensor<T>> parts;
  if (cfg.use_class_token) parts.push_back(w.cls_com);
  parts.push_back(skip ? slice_rows(zf, 1, zf.extent(0)) : zf);
  if (cfg.use_bg_branch) parts.push_back(skip ? slice_rows(zb, 1, zb.extent(0)) : zb);
  Tensor<T> zc = encoder_layer(concat_rows(parts), w.layers[cfg.layers], cfg, rec, "fusion", 0);
  res.logit_com = head(branch_feature(zc), w.head_com_w, w.head_com_b);
  return res;
}

template <typename T>
ForwardResult<T> forward(const MSTMap& face_map, const MSTMap& bg_map, ModelWeights<T>& w,
                         bool want_attention = false) {
  const ModelConfig& cfg = w.cfg;
  if (face_map.rows != cfg.H_face || face_map.T != cfg.W)
    throw std::invalid_argument("forward: face map is " + std::to_string(face_map.rows) + "x" +
                                std::to_string(face_map.T) + ", config expects " +
                                std::to_string(cfg.H_face) + "x" + std::to_string(cfg.W));
  Tensor<T> fp = sequentialize<T>(face_map, cfg);
  Tensor<T> bp;
  if (cfg.use_bg_branch) {
    if (bg_map.rows != cfg.H_bg || bg_map.T != cfg.W)
      throw std::invalid_argument("forward: bg map is " + std::to_string(bg_map.rows) + "x" +
                                  std::to_string(bg_map.T) + ", config expects " +
                                  std::to_string(cfg.H_bg) + "x" + std::to_string(cfg.W));
    bp = sequentialize<T>(bg_map, cfg);
  }
  return forward_patches(fp, bp, w, want_attention);
}

// ---------------------------------------------------------------------------
// Hierarchical loss
// ---------------------------------------------------------------------------

template <typename T>
struct LossBreakdown {
  Tensor<T> total;
  double face = 0.0, bg = 0.0, combined = 0.0;
};

// L = BCE(face, label) + BCE(bg, 0) + BCE(combined, label). The background
// target is the mask-attack class regardless of the sample label.
template <typename T>
LossBreakdown<T> hierarchical_loss(const ForwardResult<T>& res, int label,
                                   const ModelConfig& cfg) {
  if (label != 0 && label != 1) throw std::invalid_argument("label must be 0 or 1");
  LossBreakdown<T> out;
  Tensor<T> lf = bce_with_logits(res.logit_face, label);
  Tensor<T> lc = bce_with_logits(res.logit_com, label);
  out.face = static_cast<double>(lf.item());
  out.combined = static_cast<double>(lc.item());
  if (cfg.use_bg_branch) {
    if (!res.logit_bg.valid())
      throw std::invalid_argument("hierarchical_loss: bg logit missing with bg branch enabled");
    Tensor<T> lb = bce_with_logits(res.logit_bg, 0);
    out.bg = static_cast<double>(lb.item());
    out.total = add(add(lf, lb), lc);
  } else {
    out.total = add(lf, lc);
  }
  return out;
}

template <typename T>
double liveness_score(const ForwardResult<T>& res) {
  double z = static_cast<double>(res.logit_com.item());
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// ---------------------------------------------------------------------------
// Checkpoint format: magic 'TRPG', u32 version=1, u32 tensor count, then per
// tensor: u16 name length, name bytes, u8 rank, u32 dims[rank], f32 data
// (little-endian, row-major).
// ---------------------------------------------------------------------------

template <typename T>
void save_tensors(const std::vector<std::pair<std::string, const Tensor<T>*>>& tensors,
                  const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write("TRPG", 4);
  detail::put_u32(os, 1);
  detail::put_u32(os, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    const uint16_t len = static_cast<uint16_t>(name.size());
    unsigned char lb[2] = {static_cast<unsigned char>(len & 0xff),
                           static_cast<unsigned char>(len >> 8)};
    os.write(reinterpret_cast<const char*>(lb), 2);
    os.write(name.data(), len);
    os.put(static_cast<char>(t->rank()));
    for (size_t d : t->shape()) detail::put_u32(os, static_cast<uint32_t>(d));
    for (const T& v : t->data()) detail::put_f32(os, static_cast<float>(v));
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

struct StoredTensor {
  std::vector<size_t> shape;
  std::vector<float> data;
};

inline std::map<std::string, StoredTensor> load_tensors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "TRPG", 4) != 0)
    throw std::runtime_error("bad magic in checkpoint: " + path);
  if (detail::get_u32(is) != 1) throw std::runtime_error("unsupported checkpoint version");
  const uint32_t count = detail::get_u32(is);
  std::map<std::string, StoredTensor> out;
  for (uint32_t i = 0; i < count; ++i) {
    unsigned char lb[2];
    is.read(reinterpret_cast<char*>(lb), 2);
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    const size_t len = lb[0] | (static_cast<size_t>(lb[1]) << 8);
    std::string name(len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(len));
    int rank = is.get();
    if (rank < 0) throw std::runtime_error("truncated checkpoint: " + path);
    StoredTensor st;
    size_t total = 1;
    for (int d = 0; d < rank; ++d) {
      st.shape.push_back(detail::get_u32(is));
      total *= st.shape.back();
    }
    st.data.resize(total);
    for (float& v : st.data) v = detail::get_f32(is);
    out.emplace(std::move(name), std::move(st));
  }
  return out;
}

template <typename T>
void save_checkpoint(ModelWeights<T>& w, const std::string& path) {
  std::vector<std::pair<std::string, const Tensor<T>*>> ts;
  for (auto& [name, t] : w.param_list()) ts.push_back({name, t});
  save_tensors(ts, path);
}

template <typename T>
void load_checkpoint(ModelWeights<T>& w, const std::string& path) {
  auto stored = load_tensors(path);
  auto params = w.param_list();
  for (auto& [name, t] : params) {
    auto it = stored.find(name);
    if (it == stored.end())
      throw std::runtime_error("checkpoint missing tensor '" + name + "': " + path);
    if (it->second.shape != t->shape())
      throw std::runtime_error("checkpoint tensor '" + name + "' has shape " +
                               detail::shape_str(it->second.shape) + ", expected " +
                               detail::shape_str(t->shape()));
    for (size_t i = 0; i < t->size(); ++i) t->data()[i] = static_cast<T>(it->second.data[i]);
    stored.erase(it);
  }
  for (const auto& [name, st] : stored)
    if (name.rfind("opt.", 0) != 0 && name.rfind("train.", 0) != 0)
      throw std::runtime_error("checkpoint has unexpected tensor '" + name + "': " + path);
}

// ---------------------------------------------------------------------------
// Attention export: for each fusion-layer head, the joint-class-token
// attention row over (com token | face tokens | bg tokens) as raw CSV plus a
// PGM heatmap of the token weights laid out on the map grids.
// ---------------------------------------------------------------------------

template <typename T>
std::vector<std::string> export_attention(const AttentionRecord<T>& rec, const ModelConfig& cfg,
                                          const std::string& out_prefix) {
  if (!cfg.use_class_token)
    throw std::invalid_argument("attention export requires class tokens");
  std::vector<std::string> written;
  const size_t nhf = ModelConfig::tokens_1d(cfg.H_face, cfg.P_H, cfg.S_H);
  const size_t nwf = ModelConfig::tokens_1d(cfg.W, cfg.P_W, cfg.S_W);
  const size_t nhb = cfg.use_bg_branch ? ModelConfig::tokens_1d(cfg.H_bg, cfg.P_H, cfg.S_H) : 0;
  for (const auto& e : rec.entries) {
    if (e.branch != "fusion") continue;
    // class-token row
    std::vector<double> row(e.cols);
    for (size_t j = 0; j < e.cols; ++j) row[j] = static_cast<double>(e.a[j]);
    const std::string csv = out_prefix + "_head" + std::to_string(e.head) + ".csv";
    {
      std::ofstream os(csv, std::ios::binary);
      if (!os) throw std::runtime_error("cannot write " + csv);
      char buf[32];
      for (size_t j = 0; j < row.size(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.9g", row[j]);
        os << (j ? "," : "") << buf;
      }
      os << "\n";
    }
    written.push_back(csv);
    // heatmap over face grid stacked above bg grid, normalized by max weight
    double mx = 0.0;
    for (size_t j = 1; j < row.size(); ++j) mx = std::max(mx, row[j]);
    if (mx <= 0.0) mx = 1.0;
    MSTMap img;
    img.rows = nhf + nhb;
    img.T = nwf;
    img.C = 1;
    img.normalized = true;
    img.values.assign(img.rows * img.T, 0.0);
    for (size_t j = 1; j < row.size(); ++j) img.values[j - 1] = row[j] / mx;
    const std::string pgm = out_prefix + "_head" + std::to_string(e.head) + ".pgm";
    write_map_image(img, pgm);
    written.push_back(pgm);
  }
  return written;
}

}  // namespace transrppg
