// Line-oriented `key = value` run configuration with `#` comments and
// section-prefixed keys (synth., model., train., eval.). Unknown keys are
// hard errors; a silent typo must never change a run.

#pragma once

#include "transrppg/evaluator.hpp"
#include "transrppg/synth.hpp"
#include "transrppg/trainer.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace transrppg {

struct EvalConfig {
  ColorSpace color_space = ColorSpace::RGB;
  bool bg_only = false;  // background-maps-only control model
};

struct RunConfig {
  SynthConfig synth;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  uint64_t seed = 1;
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw std::invalid_argument("config key '" + key + "': expected boolean, got '" + v + "'");
}

}  // namespace detail

inline RunConfig parse_run_config(std::istream& is, const std::string& name = "<config>") {
  RunConfig rc;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(name + ":" + std::to_string(lineno) +
                                  ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw std::invalid_argument(name + ":" + std::to_string(lineno) + ": empty key or value");
    auto u64 = [&] { return static_cast<uint64_t>(std::stoull(val)); };
    auto sz = [&] { return static_cast<size_t>(std::stoull(val)); };
    auto dbl = [&] { return std::stod(val); };
    auto bl = [&] { return detail::parse_bool(val, key); };
    try {
      if (key == "seed") rc.seed = u64();
      else if (key == "synth.subjects") rc.synth.subjects = sz();
      else if (key == "synth.samples_per_subject_per_class")
        rc.synth.samples_per_subject_per_class = sz();
      else if (key == "synth.fps") rc.synth.fps = dbl();
      else if (key == "synth.duration_s") rc.synth.duration_s = dbl();
      else if (key == "synth.heart_rate_min") rc.synth.hr_min_bpm = dbl();
      else if (key == "synth.heart_rate_max") rc.synth.hr_max_bpm = dbl();
      else if (key == "synth.pulse_amplitude") rc.synth.pulse_amplitude = dbl();
      else if (key == "synth.mask_attenuation") rc.synth.mask_attenuation = dbl();
      else if (key == "synth.noise_sigma") rc.synth.noise_sigma = dbl();
      else if (key == "synth.illumination_drift_amplitude")
        rc.synth.illumination_drift_amplitude = dbl();
      else if (key == "synth.region_phase_jitter") rc.synth.region_phase_jitter = dbl();
      else if (key == "synth.face_regions") rc.synth.face_regions = sz();
      else if (key == "synth.bg_regions") rc.synth.bg_regions = sz();
      else if (key == "model.patch_h") rc.model.P_H = sz();
      else if (key == "model.patch_w") rc.model.P_W = sz();
      else if (key == "model.step_h") rc.model.S_H = sz();
      else if (key == "model.step_w") rc.model.S_W = sz();
      else if (key == "model.dim") rc.model.D = sz();
      else if (key == "model.heads") rc.model.heads = sz();
      else if (key == "model.layers") rc.model.layers = sz();
      else if (key == "model.mlp_ratio") rc.model.mlp_ratio = sz();
      else if (key == "model.use_class_token") rc.model.use_class_token = bl();
      else if (key == "model.use_pos_embed") rc.model.use_pos_embed = bl();
      else if (key == "model.use_bg_branch") rc.model.use_bg_branch = bl();
      else if (key == "train.lr") rc.train.lr = dbl();
      else if (key == "train.weight_decay") rc.train.weight_decay = dbl();
      else if (key == "train.batch_size") rc.train.batch_size = sz();
      else if (key == "train.max_epochs") rc.train.max_epochs = sz();
      else if (key == "train.lr_halve_epoch") rc.train.lr_halve_epoch = sz();
      else if (key == "train.beta1") rc.train.beta1 = dbl();
      else if (key == "train.beta2") rc.train.beta2 = dbl();
      else if (key == "train.adam_epsilon") rc.train.adam_epsilon = dbl();
      else if (key == "train.shuffle") rc.train.shuffle = bl();
      else if (key == "eval.color_space") rc.eval.color_space = parse_color_space(val);
      else if (key == "eval.bg_only") rc.eval.bg_only = bl();
      else
        throw std::invalid_argument(name + ":" + std::to_string(lineno) +
                                    ": unknown config key '" + key + "'");
    } catch (const std::invalid_argument& e) {
      // keep location info when the value failed to parse
      std::string msg = e.what();
      if (msg.find(name) == std::string::npos)
        msg = name + ":" + std::to_string(lineno) + ": bad value for '" + key + "': " + msg;
      throw std::invalid_argument(msg);
    }
  }
  rc.synth.seed = rc.seed;
  rc.train.seed = rc.seed;
  return rc;
}

inline RunConfig parse_run_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  return parse_run_config(is, path);
}

// Model geometry implied by a dataset: map heights follow from the region
// counts, width from the resampled frame count, channels from the transform.
inline void apply_data_geometry(ModelConfig& cfg, size_t face_regions, size_t bg_regions,
                                size_t frames, ColorSpace cs) {
  cfg.H_face = (size_t(1) << face_regions) - 1;
  cfg.H_bg = bg_regions > 0 ? (size_t(1) << bg_regions) - 1 : 0;
  if (bg_regions == 0) cfg.use_bg_branch = false;
  cfg.W = frames;
  cfg.C = color_space_channels(cs);
}

}  // namespace transrppg
