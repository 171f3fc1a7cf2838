// Synthetic labeled region-trace generator. Bonafide face traces carry a
// periodic pulse component; mask traces carry the same baseline, shared
// illumination drift and sensor noise but an attenuated (default: absent)
// pulse. Background traces are generated by a label-independent path.

#pragma once

#include "transrppg/mstmap.hpp"
#include "transrppg/random.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace transrppg {

struct SynthConfig {
  size_t subjects = 8;
  size_t samples_per_subject_per_class = 4;
  double fps = 30.0;
  double duration_s = 10.0;
  double hr_min_bpm = 48.0;
  double hr_max_bpm = 102.0;
  double pulse_amplitude = 0.2;
  double mask_attenuation = 0.0;  // multiplier on pulse amplitude for the mask class
  double noise_sigma = 0.01;
  double illumination_drift_amplitude = 0.02;
  double region_phase_jitter = 0.05;  // seconds, uniform per region
  size_t face_regions = 6;
  size_t bg_regions = 4;
  uint64_t seed = 1;

  void validate() const {
    if (subjects < 1 || samples_per_subject_per_class < 1)
      throw std::invalid_argument("synth: subjects and samples_per_subject_per_class must be >= 1");
    if (hr_min_bpm < 30.0 || hr_max_bpm > 240.0 || hr_min_bpm > hr_max_bpm)
      throw std::invalid_argument("synth: heart_rate_range must lie within [30,240] bpm");
    if (pulse_amplitude < 0 || noise_sigma < 0 || illumination_drift_amplitude < 0 ||
        region_phase_jitter < 0)
      throw std::invalid_argument("synth: amplitudes must be >= 0");
    if (mask_attenuation < 0.0 || mask_attenuation > 1.0)
      throw std::invalid_argument("synth: mask_attenuation must be in [0,1]");
    if (face_regions < 1 || face_regions > 16 || bg_regions > 16)
      throw std::invalid_argument("synth: region counts out of range");
    if (fps <= 0 || duration_s <= 0)
      throw std::invalid_argument("synth: fps and duration_s must be positive");
  }
};

// Fundamental sinusoid at hr/60 Hz plus a half-amplitude second harmonic,
// peak-normalized to 1. The peak of sin(x) + 0.5 sin(2x) is 3*sqrt(3)/4.
inline double pulse_waveform(double t_seconds, double hr_bpm) {
  if (hr_bpm < 30.0 || hr_bpm > 240.0)
    throw std::invalid_argument("pulse_waveform: hr out of [30,240] bpm");
  constexpr double two_pi = 6.283185307179586476925287;
  constexpr double peak = 1.2990381056766579701;  // 3*sqrt(3)/4
  const double f = hr_bpm / 60.0;
  return (std::sin(two_pi * f * t_seconds) + 0.5 * std::sin(2.0 * two_pi * f * t_seconds)) / peak;
}

// Deterministic dataset: subject s draws its heart rate and per-sample
// streams from seed + s (documented offset), so subjects may be generated
// independently. Sample order per subject: bonafide 0..k-1, mask 0..k-1.
inline std::vector<RegionTraceSet> generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  const size_t frames = static_cast<size_t>(std::llround(cfg.duration_s * cfg.fps));
  std::vector<RegionTraceSet> out;
  out.reserve(cfg.subjects * cfg.samples_per_subject_per_class * 2);
  for (size_t s = 0; s < cfg.subjects; ++s) {
    std::mt19937_64 rng(cfg.seed + s);
    const double hr = uniform(rng, cfg.hr_min_bpm, cfg.hr_max_bpm);
    // pulse couples most strongly into the green channel
    const double channel_gain[3] = {0.6, 1.0, 0.4};
    for (int label : {1, 0}) {
      const double pulse_gain = label == 1 ? 1.0 : cfg.mask_attenuation;
      for (size_t k = 0; k < cfg.samples_per_subject_per_class; ++k) {
        RegionTraceSet t;
        t.subject_id = "s" + std::to_string(s);
        t.label = label;
        t.fps = cfg.fps;
        t.frames = frames;
        t.face = Traces::zeros(cfg.face_regions, frames);
        t.bg = Traces::zeros(cfg.bg_regions, frames);

        // shared illumination drift: slow sinusoid with random phase/rate
        const double drift_freq = uniform(rng, 0.05, 0.3);
        const double drift_phase = uniform(rng, 0.0, 6.283185307179586);
        std::vector<double> region_jitter(cfg.face_regions);
        for (double& j : region_jitter) j = uniform(rng, 0.0, cfg.region_phase_jitter);

        auto fill = [&](Traces& tr, bool is_face) {
          for (size_t r = 0; r < tr.regions; ++r) {
            double baseline[3];
            for (double& b : baseline) b = uniform(rng, 0.45, 0.55);
            for (size_t f = 0; f < frames; ++f) {
              const double tt = static_cast<double>(f) / cfg.fps;
              const double drift = cfg.illumination_drift_amplitude *
                                   std::sin(6.283185307179586 * drift_freq * tt + drift_phase);
              for (size_t c = 0; c < 3; ++c) {
                double v = baseline[c] + drift + cfg.noise_sigma * normal(rng);
                if (is_face)
                  v += pulse_gain * cfg.pulse_amplitude * channel_gain[c] *
                       pulse_waveform(tt + region_jitter[r], hr);
                tr.at(r, f, c) = std::max(v, 0.0);
              }
            }
          }
        };
        fill(t.face, true);
        fill(t.bg, false);
        t.validate();
        out.push_back(std::move(t));
      }
    }
  }
  return out;
}

// Writes trace files plus a manifest with one `path subject label` line per
// sample. Returns the written trace paths in manifest order.
inline std::vector<std::string> write_dataset(const std::vector<RegionTraceSet>& samples,
                                              const std::string& out_dir) {
  std::vector<std::string> paths;
  std::ofstream manifest(out_dir + "/manifest.txt", std::ios::binary);
  if (!manifest) throw std::runtime_error("cannot write manifest in " + out_dir);
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& t = samples[i];
    std::string path = out_dir + "/trace_" + t.subject_id + "_" +
                       (t.label == 1 ? "bonafide" : "mask") + "_" + std::to_string(i) + ".txt";
    write_trace_file(t, path);
    manifest << path << " " << t.subject_id << " " << t.label << "\n";
    paths.push_back(std::move(path));
  }
  return paths;
}

struct ManifestEntry {
  std::string path;
  std::string subject;
  int label;
};

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open manifest: " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!(ls >> e.path >> e.subject >> e.label) || (e.label != 0 && e.label != 1))
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed manifest line");
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace transrppg
