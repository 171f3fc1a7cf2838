// Leave-one-subject-out protocol runner and ablation sweeps. Each fold
// trains a fresh model on every other subject, scores the held-out subject,
// and pooled metrics are computed over the concatenated held-out scores.

#pragma once

#include "transrppg/metrics.hpp"
#include "transrppg/model.hpp"
#include "transrppg/synth.hpp"
#include "transrppg/trainer.hpp"

#include <algorithm>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace transrppg {

// A sample prepared for the model: normalized maps plus identity/label.
struct EvalSample {
  MSTMap face;
  MSTMap bg;
  int label = 0;
  std::string subject;
};

// Builds normalized face/bg maps from a trace set: resample to the target
// grid, optional color transform, subset averaging, row normalization.
inline EvalSample prepare_sample(const RegionTraceSet& traces, ColorSpace cs = ColorSpace::RGB,
                                 double target_fps = 30.0, size_t target_frames = 300) {
  RegionTraceSet r = resample_traces(traces, target_fps, target_frames);
  auto [face, bg] = build_mstmaps(r);
  EvalSample s;
  s.face = normalize_rows(color_transform(face, cs));
  if (bg.rows > 0) s.bg = normalize_rows(color_transform(bg, cs));
  s.label = traces.label;
  s.subject = traces.subject_id;
  return s;
}

// When bg_maps_as_input is set the background map is fed to the (single)
// face branch, which is how the background-only control model is trained.
struct LosoOptions {
  bool bg_maps_as_input = false;
};

struct FoldResult {
  std::string subject;
  bool metrics_available = false;  // single-class held-out folds have none
  MetricsReport metrics;
  ScoredSet held_out;
  double train_eer_threshold = 0.0;
};

struct LosoResult {
  std::vector<FoldResult> folds;
  MetricsReport pooled;
  ScoredSet pooled_scores;
};

template <typename T>
std::vector<TrainSample<T>> to_train_samples(const std::vector<EvalSample>& samples,
                                             const ModelConfig& cfg, bool bg_as_input) {
  std::vector<TrainSample<T>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    TrainSample<T> ts;
    ts.face_patches = sequentialize<T>(bg_as_input ? s.bg : s.face, cfg);
    if (cfg.use_bg_branch) ts.bg_patches = sequentialize<T>(s.bg, cfg);
    ts.label = s.label;
    ts.subject = s.subject;
    out.push_back(std::move(ts));
  }
  return out;
}

template <typename T>
double score_sample(TrainSample<T>& s, ModelWeights<T>& w) {
  ForwardResult<T> res = forward_patches(s.face_patches, s.bg_patches, w);
  return liveness_score(res);
}

// Fold f trains on all subjects except fold-subject f (ordered by first
// appearance), with fold-derived init seed train.seed + 7919 * fold_index.
template <typename T = float>
LosoResult loso_run(const std::vector<EvalSample>& samples, const ModelConfig& model_cfg,
                    const TrainConfig& train_cfg, LosoOptions opts = {}) {
  std::vector<std::string> subjects;
  for (const auto& s : samples)
    if (std::find(subjects.begin(), subjects.end(), s.subject) == subjects.end())
      subjects.push_back(s.subject);
  if (subjects.size() < 2) throw std::invalid_argument("loso_run needs at least 2 subjects");

  auto all = to_train_samples<T>(samples, model_cfg, opts.bg_maps_as_input);
  LosoResult result;
  for (size_t f = 0; f < subjects.size(); ++f) {
    const std::string& held = subjects[f];
    std::vector<TrainSample<T>> train_set;
    std::vector<size_t> test_idx;
    for (size_t i = 0; i < all.size(); ++i) {
      if (all[i].subject == held) test_idx.push_back(i);
      else train_set.push_back(all[i]);
    }
    ModelWeights<T> w = ModelWeights<T>::make(model_cfg);
    w.init(train_cfg.seed + 7919 * f);
    AdamState<T> state = AdamState<T>::make(w);
    train(w, train_set, train_cfg, state);

    // EER threshold from the training pool, used for held-out HTER
    ScoredSet train_scores;
    for (auto& s : train_set) {
      train_scores.scores.push_back(score_sample(s, w));
      train_scores.labels.push_back(s.label);
    }
    FoldResult fr;
    fr.subject = held;
    fr.train_eer_threshold = eer(train_scores).second;
    for (size_t i : test_idx) {
      fr.held_out.scores.push_back(score_sample(all[i], w));
      fr.held_out.labels.push_back(all[i].label);
      fr.held_out.subjects.push_back(held);
    }
    bool pos = false, neg = false;
    for (int l : fr.held_out.labels) (l == 1 ? pos : neg) = true;
    if (pos && neg) {
      fr.metrics_available = true;
      fr.metrics = compute_metrics(fr.held_out, &fr.train_eer_threshold);
    }
    result.folds.push_back(std::move(fr));
  }

  // pooled metrics over the concatenation of all held-out scores; pooled
  // HTER aggregates per-fold decisions at each fold's own threshold
  size_t far = 0, frr = 0, npos = 0, nneg = 0;
  for (const auto& fr : result.folds) {
    for (size_t i = 0; i < fr.held_out.scores.size(); ++i) {
      result.pooled_scores.scores.push_back(fr.held_out.scores[i]);
      result.pooled_scores.labels.push_back(fr.held_out.labels[i]);
      result.pooled_scores.subjects.push_back(fr.held_out.subjects[i]);
      if (fr.held_out.labels[i] == 1) {
        ++npos;
        if (fr.held_out.scores[i] < fr.train_eer_threshold) ++frr;
      } else {
        ++nneg;
        if (fr.held_out.scores[i] >= fr.train_eer_threshold) ++far;
      }
    }
  }
  result.pooled = compute_metrics(result.pooled_scores);
  if (npos > 0 && nneg > 0) {
    result.pooled.has_hter = true;
    result.pooled.hter =
        0.5 * (static_cast<double>(far) / nneg + static_cast<double>(frr) / npos);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Ablation sweeps
// ---------------------------------------------------------------------------

enum class AblationAxis {
  ColorSpace,
  PatchSize,
  VideoLength,
  Depth,
  Width,
  BgBranch,
  ClassToken,
  PosEmbed,
};

inline AblationAxis parse_ablation_axis(const std::string& s) {
  if (s == "color_space") return AblationAxis::ColorSpace;
  if (s == "patch_size") return AblationAxis::PatchSize;
  if (s == "video_length") return AblationAxis::VideoLength;
  if (s == "depth") return AblationAxis::Depth;
  if (s == "width") return AblationAxis::Width;
  if (s == "bg_branch") return AblationAxis::BgBranch;
  if (s == "class_token") return AblationAxis::ClassToken;
  if (s == "pos_embed") return AblationAxis::PosEmbed;
  throw std::invalid_argument("unknown ablation axis '" + s + "'");
}

inline const char* ablation_axis_name(AblationAxis a) {
  switch (a) {
    case AblationAxis::ColorSpace: return "color_space";
    case AblationAxis::PatchSize: return "patch_size";
    case AblationAxis::VideoLength: return "video_length";
    case AblationAxis::Depth: return "depth";
    case AblationAxis::Width: return "width";
    case AblationAxis::BgBranch: return "bg_branch";
    case AblationAxis::ClassToken: return "class_token";
    case AblationAxis::PosEmbed: return "pos_embed";
  }
  return "?";
}

struct AblationRow {
  std::string axis;
  std::string value;
  MetricsReport metrics;
};

inline bool parse_bool_value(const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw std::invalid_argument("expected boolean ablation value, got '" + v + "'");
}

// Trains and evaluates one LOSO variant per axis value on the same raw
// traces. Report-only: no ordering among the rows is asserted anywhere.
inline std::vector<AblationRow> ablation_sweep(AblationAxis axis,
                                               const std::vector<std::string>& values,
                                               const std::vector<RegionTraceSet>& traces,
                                               const ModelConfig& base_model,
                                               const TrainConfig& train_cfg,
                                               double target_fps = 30.0) {
  std::vector<AblationRow> rows;
  for (const std::string& value : values) {
    ModelConfig cfg = base_model;
    ColorSpace cs = ColorSpace::RGB;
    size_t target_frames = cfg.W;
    std::optional<double> clip_seconds;
    switch (axis) {
      case AblationAxis::ColorSpace:
        cs = parse_color_space(value);
        cfg.C = color_space_channels(cs);
        break;
      case AblationAxis::PatchSize: {
        auto x = value.find('x');
        if (x == std::string::npos)
          throw std::invalid_argument("patch_size value must look like '3x30'");
        cfg.P_H = std::stoul(value.substr(0, x));
        cfg.P_W = std::stoul(value.substr(x + 1));
        break;
      }
      case AblationAxis::VideoLength:
        clip_seconds = std::stod(value);
        target_frames = static_cast<size_t>(std::llround(*clip_seconds * target_fps));
        cfg.W = target_frames;
        break;
      case AblationAxis::Depth:
        cfg.layers = std::stoul(value);
        break;
      case AblationAxis::Width:
        cfg.D = std::stoul(value);
        break;
      case AblationAxis::BgBranch:
        cfg.use_bg_branch = parse_bool_value(value);
        break;
      case AblationAxis::ClassToken:
        cfg.use_class_token = parse_bool_value(value);
        break;
      case AblationAxis::PosEmbed:
        cfg.use_pos_embed = parse_bool_value(value);
        break;
    }
    cfg.validate();
    std::vector<EvalSample> samples;
    samples.reserve(traces.size());
    for (const auto& t : traces) {
      RegionTraceSet clipped = t;
      if (clip_seconds) {
        const size_t keep = std::min(
            t.frames, static_cast<size_t>(std::llround(*clip_seconds * t.fps)));
        if (keep < 2) throw std::invalid_argument("video_length clip leaves too few frames");
        clipped.frames = keep;
        clipped.face = Traces::zeros(t.face.regions, keep);
        clipped.bg = Traces::zeros(t.bg.regions, keep);
        for (size_t r = 0; r < t.face.regions; ++r)
          for (size_t f = 0; f < keep; ++f)
            for (size_t c = 0; c < 3; ++c) clipped.face.at(r, f, c) = t.face.at(r, f, c);
        for (size_t r = 0; r < t.bg.regions; ++r)
          for (size_t f = 0; f < keep; ++f)
            for (size_t c = 0; c < 3; ++c) clipped.bg.at(r, f, c) = t.bg.at(r, f, c);
      }
      samples.push_back(prepare_sample(clipped, cs, target_fps, target_frames));
    }
    LosoResult res = loso_run<float>(samples, cfg, train_cfg);
    rows.push_back({ablation_axis_name(axis), value, res.pooled});
  }
  return rows;
}

inline void write_ablation_csv(const std::vector<AblationRow>& rows, std::ostream& os) {
  os << "axis,value,auc,eer,ffr\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f\n", r.metrics.auc, r.metrics.eer,
                  r.metrics.ffr_at_flr_001);
    os << r.axis << "," << r.value << buf;
  }
}

inline void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write ablation table: " + path);
  write_ablation_csv(rows, os);
}

}  // namespace transrppg
