// Multi-scale spatio-temporal map construction from per-region color traces:
// resampling, subset averaging over all non-empty region combinations, row
// normalization, color-space transforms, and the trace / map file formats.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace transrppg {

// Per-frame mean color values for a set of regions. Layout:
// v[(region * frames + frame) * 3 + channel], channels R,G,B.
struct Traces {
  size_t regions = 0;
  size_t frames = 0;
  std::vector<double> v;

  double& at(size_t r, size_t f, size_t c) { return v[(r * frames + f) * 3 + c]; }
  double at(size_t r, size_t f, size_t c) const { return v[(r * frames + f) * 3 + c]; }

  static Traces zeros(size_t regions, size_t frames) {
    Traces t;
    t.regions = regions;
    t.frames = frames;
    t.v.assign(regions * frames * 3, 0.0);
    return t;
  }
};

struct RegionTraceSet {
  std::string subject_id;
  int label = 0;  // bonafide = 1, mask = 0
  double fps = 30.0;
  size_t frames = 0;
  Traces face;  // n regions
  Traces bg;    // m regions (may be empty)

  void validate() const {
    if (face.regions < 1) throw std::invalid_argument("RegionTraceSet needs >= 1 face region");
    if (face.frames != frames || (bg.regions > 0 && bg.frames != frames))
      throw std::invalid_argument("trace frame counts disagree");
    for (const auto* t : {&face, &bg})
      for (double x : t->v)
        if (!std::isfinite(x) || x < 0.0)
          throw std::invalid_argument("trace values must be finite and >= 0");
  }
};

enum class ColorSpace { RGB, G, YUV, CHROM, POS };

inline ColorSpace parse_color_space(const std::string& s) {
  if (s == "RGB") return ColorSpace::RGB;
  if (s == "G") return ColorSpace::G;
  if (s == "YUV") return ColorSpace::YUV;
  if (s == "CHROM") return ColorSpace::CHROM;
  if (s == "POS") return ColorSpace::POS;
  throw std::invalid_argument("unknown color space '" + s + "'");
}

inline const char* color_space_name(ColorSpace cs) {
  switch (cs) {
    case ColorSpace::RGB: return "RGB";
    case ColorSpace::G: return "G";
    case ColorSpace::YUV: return "YUV";
    case ColorSpace::CHROM: return "CHROM";
    case ColorSpace::POS: return "POS";
  }
  return "?";
}

// (2^k - 1) x T x C map. Row order is ascending bitmask integer; bit i of a
// mask selects source region i.
struct MSTMap {
  size_t rows = 0;
  size_t T = 0;
  size_t C = 0;
  std::vector<double> values;  // rows x T x C, row-major
  bool normalized = false;
  std::vector<uint32_t> subset_index;  // row -> region bitmask

  double& at(size_t r, size_t t, size_t c) { return values[(r * T + t) * C + c]; }
  double at(size_t r, size_t t, size_t c) const { return values[(r * T + t) * C + c]; }
};

// All non-empty bitmasks over k regions, ascending by integer value.
inline std::vector<uint32_t> enumerate_subsets(size_t k) {
  if (k < 1 || k > 16) throw std::invalid_argument("enumerate_subsets: k must be in 1..16");
  std::vector<uint32_t> out;
  out.reserve((1u << k) - 1);
  for (uint32_t mask = 1; mask < (1u << k); ++mask) out.push_back(mask);
  return out;
}

namespace detail {

inline Traces resample(const Traces& in, double src_fps, size_t target_frames) {
  Traces out = Traces::zeros(in.regions, target_frames);
  if (in.regions == 0) return out;
  const double duration = static_cast<double>(in.frames - 1) / src_fps;
  for (size_t r = 0; r < in.regions; ++r) {
    for (size_t f = 0; f < target_frames; ++f) {
      const double t = target_frames > 1
                           ? duration * static_cast<double>(f) / static_cast<double>(target_frames - 1)
                           : 0.0;
      double pos = t * src_fps;
      size_t i0 = static_cast<size_t>(std::min(pos, static_cast<double>(in.frames - 1)));
      if (i0 >= in.frames - 1) {
        for (size_t c = 0; c < 3; ++c) out.at(r, f, c) = in.at(r, in.frames - 1, c);
        continue;
      }
      const double w = pos - static_cast<double>(i0);
      for (size_t c = 0; c < 3; ++c)
        out.at(r, f, c) = (1.0 - w) * in.at(r, i0, c) + w * in.at(r, i0 + 1, c);
    }
  }
  return out;
}

}  // namespace detail

// Linear interpolation of every region/channel trace onto a uniform grid of
// target_frames samples spanning the original duration.
inline RegionTraceSet resample_traces(const RegionTraceSet& t, double target_fps = 30.0,
                                      size_t target_frames = 300) {
  if (t.frames < 2) throw std::invalid_argument("resample_traces needs at least 2 frames");
  RegionTraceSet out = t;
  out.fps = target_fps;
  out.frames = target_frames;
  out.face = detail::resample(t.face, t.fps, target_frames);
  out.bg = detail::resample(t.bg, t.fps, target_frames);
  return out;
}

namespace detail {

inline MSTMap build_one_map(const Traces& tr) {
  MSTMap map;
  map.T = tr.frames;
  map.C = 3;
  if (tr.regions == 0) {
    map.rows = 0;
    return map;
  }
  map.subset_index = enumerate_subsets(tr.regions);
  map.rows = map.subset_index.size();
  map.values.assign(map.rows * map.T * map.C, 0.0);
  for (size_t row = 0; row < map.rows; ++row) {
    const uint32_t mask = map.subset_index[row];
    const int count = std::popcount(mask);
    for (size_t f = 0; f < map.T; ++f) {
      for (size_t c = 0; c < 3; ++c) {
        double s = 0.0;
        for (size_t r = 0; r < tr.regions; ++r)
          if (mask & (1u << r)) s += tr.at(r, f, c);
        map.at(row, f, c) = s / count;
      }
    }
  }
  return map;
}

}  // namespace detail

// Face and background maps: row for subset S is the unweighted mean of the
// member regions' channel means at every frame.
inline std::pair<MSTMap, MSTMap> build_mstmaps(const RegionTraceSet& t) {
  if (t.face.regions == 0) throw std::invalid_argument("build_mstmaps: empty face region set");
  return {detail::build_one_map(t.face), detail::build_one_map(t.bg)};
}

// Per row, per channel min-max normalization to [0,1]; constant rows map to 0.5.
inline MSTMap normalize_rows(const MSTMap& map) {
  if (map.normalized) throw std::invalid_argument("normalize_rows: map already normalized");
  MSTMap out = map;
  out.normalized = true;
  for (size_t r = 0; r < map.rows; ++r) {
    for (size_t c = 0; c < map.C; ++c) {
      double lo = map.at(r, 0, c), hi = lo;
      for (size_t f = 1; f < map.T; ++f) {
        lo = std::min(lo, map.at(r, f, c));
        hi = std::max(hi, map.at(r, f, c));
      }
      if (hi > lo) {
        const double inv = 1.0 / (hi - lo);
        for (size_t f = 0; f < map.T; ++f) out.at(r, f, c) = (map.at(r, f, c) - lo) * inv;
      } else {
        for (size_t f = 0; f < map.T; ++f) out.at(r, f, c) = 0.5;
      }
    }
  }
  return out;
}

inline size_t color_space_channels(ColorSpace cs) {
  switch (cs) {
    case ColorSpace::RGB:
    case ColorSpace::YUV: return 3;
    default: return 1;  // G, CHROM, POS collapse to one channel per row
  }
}

// Color-space transform applied before normalization; input must be RGB.
//  RGB   identity
//  G     green channel only
//  YUV   BT.601 full-range linear transform
//  CHROM de Haan-Jeanne chrominance projection, alpha-combined per row
//  POS   plane-orthogonal-to-skin projection, alpha-combined per row
inline MSTMap color_transform(const MSTMap& map, ColorSpace cs) {
  if (map.normalized) throw std::invalid_argument("color_transform must precede normalization");
  if (map.C != 3) throw std::invalid_argument("color_transform expects RGB (3-channel) input");
  if (cs == ColorSpace::RGB) return map;
  MSTMap out;
  out.rows = map.rows;
  out.T = map.T;
  out.C = color_space_channels(cs);
  out.subset_index = map.subset_index;
  out.values.assign(out.rows * out.T * out.C, 0.0);
  for (size_t r = 0; r < map.rows; ++r) {
    if (cs == ColorSpace::G) {
      for (size_t f = 0; f < map.T; ++f) out.at(r, f, 0) = map.at(r, f, 1);
      continue;
    }
    if (cs == ColorSpace::YUV) {
      for (size_t f = 0; f < map.T; ++f) {
        const double R = map.at(r, f, 0), G = map.at(r, f, 1), B = map.at(r, f, 2);
        out.at(r, f, 0) = 0.299 * R + 0.587 * G + 0.114 * B;
        out.at(r, f, 1) = -0.14713 * R - 0.28886 * G + 0.436 * B;
        out.at(r, f, 2) = 0.615 * R - 0.51499 * G - 0.10001 * B;
      }
      continue;
    }
    // CHROM / POS work on temporally mean-normalized channels per row.
    std::array<double, 3> mean = {0.0, 0.0, 0.0};
    for (size_t f = 0; f < map.T; ++f)
      for (size_t c = 0; c < 3; ++c) mean[c] += map.at(r, f, c);
    for (size_t c = 0; c < 3; ++c) mean[c] = std::max(mean[c] / map.T, 1e-12);
    std::vector<double> s1(map.T), s2(map.T);
    for (size_t f = 0; f < map.T; ++f) {
      const double Rn = map.at(r, f, 0) / mean[0];
      const double Gn = map.at(r, f, 1) / mean[1];
      const double Bn = map.at(r, f, 2) / mean[2];
      if (cs == ColorSpace::CHROM) {
        s1[f] = 3.0 * Rn - 2.0 * Gn;
        s2[f] = 1.5 * Rn + Gn - 1.5 * Bn;
      } else {  // POS projection matrix [[0,1,-1],[-2,1,1]]
        s1[f] = Gn - Bn;
        s2[f] = -2.0 * Rn + Gn + Bn;
      }
    }
    auto stddev = [&](const std::vector<double>& s) {
      double mu = 0.0;
      for (double x : s) mu += x;
      mu /= s.size();
      double var = 0.0;
      for (double x : s) var += (x - mu) * (x - mu);
      return std::sqrt(var / s.size());
    };
    const double sd2 = stddev(s2);
    const double alpha = sd2 > 1e-12 ? stddev(s1) / sd2 : 0.0;
    for (size_t f = 0; f < map.T; ++f)
      out.at(r, f, 0) = cs == ColorSpace::CHROM ? s1[f] - alpha * s2[f] : s1[f] + alpha * s2[f];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trace file format (line-oriented text, one sample per file)
// ---------------------------------------------------------------------------

inline void write_trace_file(const RegionTraceSet& t, std::ostream& os) {
  os << "subject=" << t.subject_id << " label=" << t.label << " fps=" << t.fps
     << " n=" << t.face.regions << " m=" << t.bg.regions << " frames=" << t.frames << "\n";
  char buf[32];
  for (size_t f = 0; f < t.frames; ++f) {
    os << f;
    for (const auto* tr : {&t.face, &t.bg}) {
      for (size_t r = 0; r < tr->regions; ++r) {
        for (size_t c = 0; c < 3; ++c) {
          std::snprintf(buf, sizeof(buf), " %.9g", tr->at(r, f, c));
          os << buf;
        }
      }
    }
    os << "\n";
  }
}

inline void write_trace_file(const RegionTraceSet& t, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open trace file for writing: " + path);
  write_trace_file(t, os);
}

inline RegionTraceSet read_trace_file(std::istream& is, const std::string& name = "<stream>") {
  RegionTraceSet t;
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error(name + ":1: empty trace file");
  size_t n = 0, m = 0;
  {
    std::istringstream hs(line);
    std::string tok;
    bool got[6] = {};
    while (hs >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error(name + ":1: malformed header token '" + tok + "'");
      std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      try {
        if (key == "subject") { t.subject_id = val; got[0] = true; }
        else if (key == "label") { t.label = std::stoi(val); got[1] = true; }
        else if (key == "fps") { t.fps = std::stod(val); got[2] = true; }
        else if (key == "n") { n = std::stoul(val); got[3] = true; }
        else if (key == "m") { m = std::stoul(val); got[4] = true; }
        else if (key == "frames") { t.frames = std::stoul(val); got[5] = true; }
        else throw std::runtime_error(name + ":1: unknown header key '" + key + "'");
      } catch (const std::invalid_argument&) {
        throw std::runtime_error(name + ":1: bad value for '" + key + "'");
      }
    }
    for (bool g : got)
      if (!g) throw std::runtime_error(name + ":1: incomplete header");
  }
  if (t.label != 0 && t.label != 1)
    throw std::runtime_error(name + ":1: label must be 0 or 1");
  t.face = Traces::zeros(n, t.frames);
  t.bg = Traces::zeros(m, t.frames);
  for (size_t f = 0; f < t.frames; ++f) {
    const size_t lineno = f + 2;
    if (!std::getline(is, line))
      throw std::runtime_error(name + ":" + std::to_string(lineno) + ": unexpected end of file");
    std::istringstream ls(line);
    size_t frame_idx;
    if (!(ls >> frame_idx))
      throw std::runtime_error(name + ":" + std::to_string(lineno) + ": missing frame index");
    for (auto* tr : {&t.face, &t.bg}) {
      for (size_t r = 0; r < tr->regions; ++r) {
        for (size_t c = 0; c < 3; ++c) {
          double v;
          if (!(ls >> v))
            throw std::runtime_error(name + ":" + std::to_string(lineno) +
                                     ": too few values on frame line");
          tr->at(r, f, c) = v;
        }
      }
    }
    double extra;
    if (ls >> extra)
      throw std::runtime_error(name + ":" + std::to_string(lineno) +
                               ": too many values on frame line");
  }
  t.validate();
  return t;
}

inline RegionTraceSet read_trace_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open trace file: " + path);
  return read_trace_file(is, path);
}

// ---------------------------------------------------------------------------
// MSTmap binary export: magic 'MSTM', u32 version=1, u32 rows, u32 T, u32 C,
// then rows*T*C little-endian 32-bit floats, row-major.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("truncated binary input");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(os, v);
}

inline float get_f32(std::istream& is) {
  uint32_t v = get_u32(is);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

}  // namespace detail

inline void write_mstmap_binary(const MSTMap& map, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open map file for writing: " + path);
  os.write("MSTM", 4);
  detail::put_u32(os, 1);
  detail::put_u32(os, static_cast<uint32_t>(map.rows));
  detail::put_u32(os, static_cast<uint32_t>(map.T));
  detail::put_u32(os, static_cast<uint32_t>(map.C));
  for (double v : map.values) detail::put_f32(os, static_cast<float>(v));
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline MSTMap read_mstmap_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open map file: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "MSTM", 4) != 0)
    throw std::runtime_error("bad magic in map file: " + path);
  uint32_t version = detail::get_u32(is);
  if (version != 1) throw std::runtime_error("unsupported map version in " + path);
  MSTMap map;
  map.rows = detail::get_u32(is);
  map.T = detail::get_u32(is);
  map.C = detail::get_u32(is);
  map.values.resize(map.rows * map.T * map.C);
  for (double& v : map.values) v = detail::get_f32(is);
  map.normalized = true;  // exported maps are normalized by convention
  return map;
}

// 8-bit PGM (1 channel) / PPM (3 channels) writer for visual inspection.
// Values are scaled by 255 and rounded half-up; inputs outside [0,1] clamp.
inline void write_map_image(const MSTMap& map, const std::string& path) {
  if (map.C != 1 && map.C != 3)
    throw std::invalid_argument("image export supports 1 or 3 channels only");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open image file for writing: " + path);
  os << (map.C == 1 ? "P5" : "P6") << "\n" << map.T << " " << map.rows << "\n255\n";
  for (size_t r = 0; r < map.rows; ++r)
    for (size_t f = 0; f < map.T; ++f)
      for (size_t c = 0; c < map.C; ++c) {
        double v = std::clamp(map.at(r, f, c), 0.0, 1.0);
        os.put(static_cast<char>(static_cast<int>(std::floor(v * 255.0 + 0.5))));
      }
  if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace transrppg
