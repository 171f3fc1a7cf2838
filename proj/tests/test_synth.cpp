#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "transrppg/synth.hpp"

#include <cmath>
#include <complex>
#include <filesystem>

using namespace transrppg;

namespace {

// Plain DFT magnitude at one bin of a detrended series.
double dft_mag(const std::vector<double>& x, size_t bin) {
  double mean = 0;
  for (double v : x) mean += v;
  mean /= x.size();
  std::complex<double> acc = 0;
  for (size_t n = 0; n < x.size(); ++n)
    acc += (x[n] - mean) *
           std::exp(std::complex<double>(0, -2.0 * M_PI * bin * n / x.size()));
  return std::abs(acc);
}

std::vector<double> green_trace(const RegionTraceSet& t, size_t region) {
  std::vector<double> g(t.frames);
  for (size_t f = 0; f < t.frames; ++f) g[f] = t.face.at(region, f, 1);
  return g;
}

}  // namespace

TEST_CASE("dataset shape: subjects x classes x samples, fixed order") {
  SynthConfig cfg;
  cfg.subjects = 3;
  cfg.samples_per_subject_per_class = 2;
  cfg.duration_s = 2.0;
  auto data = generate_dataset(cfg);
  REQUIRE(data.size() == 12);
  // per subject: bonafide samples first, then masks
  for (size_t s = 0; s < 3; ++s) {
    for (size_t k = 0; k < 4; ++k) {
      const auto& t = data[s * 4 + k];
      CHECK(t.subject_id == "s" + std::to_string(s));
      CHECK(t.label == (k < 2 ? 1 : 0));
      CHECK(t.frames == 60);
      CHECK(t.face.regions == cfg.face_regions);
      CHECK(t.bg.regions == cfg.bg_regions);
    }
  }
}

TEST_CASE("generation is deterministic in the seed") {
  SynthConfig cfg;
  cfg.subjects = 2;
  cfg.samples_per_subject_per_class = 1;
  cfg.duration_s = 1.0;
  auto a = generate_dataset(cfg);
  auto b = generate_dataset(cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].face.v == b[i].face.v);
  cfg.seed = 2;
  auto c = generate_dataset(cfg);
  CHECK(a[0].face.v != c[0].face.v);
}

TEST_CASE("bonafide spectra peak near the subject heart rate; masks do not") {
  SynthConfig cfg;
  cfg.subjects = 4;
  cfg.samples_per_subject_per_class = 1;
  cfg.duration_s = 10.0;
  cfg.noise_sigma = 0.002;
  cfg.illumination_drift_amplitude = 0.0;
  auto data = generate_dataset(cfg);
  const size_t N = data[0].frames;
  for (size_t s = 0; s < cfg.subjects; ++s) {
    const auto& live = data[2 * s];
    const auto& mask = data[2 * s + 1];
    REQUIRE(live.label == 1);
    REQUIRE(mask.label == 0);
    auto g_live = green_trace(live, 0);
    auto g_mask = green_trace(mask, 0);
    // strongest cardiac-band bin of the live trace
    size_t lo = static_cast<size_t>(std::floor(0.7 * N / cfg.fps));
    size_t hi = static_cast<size_t>(std::ceil(3.5 * N / cfg.fps));
    size_t best = lo;
    for (size_t b = lo; b <= hi; ++b)
      if (dft_mag(g_live, b) > dft_mag(g_live, best)) best = b;
    const double hr_hz = best * cfg.fps / N;
    CHECK(hr_hz >= cfg.hr_min_bpm / 60.0 - 0.15);
    CHECK(hr_hz <= cfg.hr_max_bpm / 60.0 + 0.15);
    // live energy at that bin dominates the mask energy at the same bin
    CHECK(dft_mag(g_live, best) > 5.0 * dft_mag(g_mask, best));
  }
}

TEST_CASE("background traces carry no cardiac component for either class") {
  SynthConfig cfg;
  cfg.subjects = 2;
  cfg.samples_per_subject_per_class = 1;
  cfg.duration_s = 10.0;
  cfg.noise_sigma = 0.002;
  cfg.illumination_drift_amplitude = 0.0;
  auto data = generate_dataset(cfg);
  const size_t N = data[0].frames;
  for (const auto& t : data) {
    auto face_g = green_trace(t, 0);
    std::vector<double> bg_g(N);
    for (size_t f = 0; f < N; ++f) bg_g[f] = t.bg.at(0, f, 1);
    size_t lo = static_cast<size_t>(std::floor(0.7 * N / cfg.fps));
    size_t hi = static_cast<size_t>(std::ceil(3.5 * N / cfg.fps));
    double face_peak = 0, bg_peak = 0;
    for (size_t b = lo; b <= hi; ++b) {
      face_peak = std::max(face_peak, dft_mag(face_g, b));
      bg_peak = std::max(bg_peak, dft_mag(bg_g, b));
    }
    if (t.label == 1) CHECK(face_peak > 5.0 * bg_peak);
  }
}

TEST_CASE("pulse waveform is peak-normalized with a second harmonic") {
  double peak = 0;
  for (int i = 0; i < 2000; ++i)
    peak = std::max(peak, std::fabs(pulse_waveform(i / 2000.0, 60.0)));
  CHECK(peak == doctest::Approx(1.0).epsilon(1e-4));
  // period at 60 bpm is exactly 1s
  CHECK(pulse_waveform(0.3, 60.0) == doctest::Approx(pulse_waveform(1.3, 60.0)).epsilon(1e-9));
  CHECK_THROWS_AS(pulse_waveform(0.0, 10.0), std::invalid_argument);
}

TEST_CASE("dataset writer emits a readable manifest and trace files") {
  SynthConfig cfg;
  cfg.subjects = 2;
  cfg.samples_per_subject_per_class = 1;
  cfg.duration_s = 1.0;
  auto data = generate_dataset(cfg);
  auto dir = std::filesystem::temp_directory_path() / "synth_ds_test";
  std::filesystem::create_directories(dir);
  auto paths = write_dataset(data, dir.string());
  REQUIRE(paths.size() == 4);
  auto entries = read_manifest((dir / "manifest.txt").string());
  REQUIRE(entries.size() == 4);
  for (size_t i = 0; i < 4; ++i) {
    CHECK(entries[i].path == paths[i]);
    CHECK(entries[i].subject == data[i].subject_id);
    CHECK(entries[i].label == data[i].label);
    RegionTraceSet r = read_trace_file(entries[i].path);
    CHECK(r.frames == data[i].frames);
    CHECK(r.face.at(0, 0, 0) == doctest::Approx(data[i].face.at(0, 0, 0)).epsilon(1e-8));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("config validation catches out-of-range settings") {
  SynthConfig cfg;
  cfg.hr_min_bpm = 10.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.mask_attenuation = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.face_regions = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
