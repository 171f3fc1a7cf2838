#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "transrppg/mstmap.hpp"
#include "transrppg/random.hpp"

#include <cstdio>
#include <filesystem>
#include <sstream>

using namespace transrppg;

namespace {

RegionTraceSet make_traces(size_t n, size_t m, size_t frames, uint64_t seed, double fps = 30.0) {
  RegionTraceSet t;
  t.subject_id = "s0";
  t.label = 1;
  t.fps = fps;
  t.frames = frames;
  t.face = Traces::zeros(n, frames);
  t.bg = Traces::zeros(m, frames);
  std::mt19937_64 rng(seed);
  for (auto* tr : {&t.face, &t.bg})
    for (double& v : tr->v) v = uniform(rng, 0.1, 0.9);
  return t;
}

}  // namespace

TEST_CASE("subset enumeration is every non-empty bitmask in ascending order") {
  auto s6 = enumerate_subsets(6);
  REQUIRE(s6.size() == 63);
  for (size_t i = 0; i < s6.size(); ++i) CHECK(s6[i] == i + 1);
  CHECK(enumerate_subsets(4).size() == 15);
  CHECK(enumerate_subsets(1).size() == 1);
  CHECK_THROWS_AS(enumerate_subsets(0), std::invalid_argument);
  CHECK_THROWS_AS(enumerate_subsets(17), std::invalid_argument);
}

TEST_CASE("map rows are unweighted subset means") {
  // two regions: row 0 = region 0, row 1 = region 1, row 2 = their mean
  RegionTraceSet t = make_traces(2, 0, 5, 3);
  auto [face, bg] = build_mstmaps(t);
  REQUIRE(face.rows == 3);
  CHECK(bg.rows == 0);
  for (size_t f = 0; f < 5; ++f)
    for (size_t c = 0; c < 3; ++c) {
      CHECK(face.at(0, f, c) == doctest::Approx(t.face.at(0, f, c)));
      CHECK(face.at(1, f, c) == doctest::Approx(t.face.at(1, f, c)));
      CHECK(face.at(2, f, c) ==
            doctest::Approx(0.5 * (t.face.at(0, f, c) + t.face.at(1, f, c))));
    }

  // spot check a three-region subset against the mean definition
  RegionTraceSet t3 = make_traces(3, 0, 4, 5);
  auto [f3, b3] = build_mstmaps(t3);
  REQUIRE(f3.rows == 7);
  const uint32_t mask = f3.subset_index[6];  // 0b111
  CHECK(mask == 7);
  for (size_t f = 0; f < 4; ++f)
    CHECK(f3.at(6, f, 1) == doctest::Approx((t3.face.at(0, f, 1) + t3.face.at(1, f, 1) +
                                             t3.face.at(2, f, 1)) / 3.0));
}

TEST_CASE("resampling: identity at matching rate, midpoints at doubling") {
  RegionTraceSet t = make_traces(1, 0, 10, 7);
  RegionTraceSet same = resample_traces(t, 30.0, 10);
  for (size_t i = 0; i < t.face.v.size(); ++i)
    CHECK(same.face.v[i] == doctest::Approx(t.face.v[i]).epsilon(1e-12));

  // 2 frames at 30fps resampled to 3 frames: middle is the average
  RegionTraceSet t2 = make_traces(1, 0, 2, 9);
  RegionTraceSet up = resample_traces(t2, 60.0, 3);
  for (size_t c = 0; c < 3; ++c) {
    CHECK(up.face.at(0, 0, c) == doctest::Approx(t2.face.at(0, 0, c)));
    CHECK(up.face.at(0, 1, c) ==
          doctest::Approx(0.5 * (t2.face.at(0, 0, c) + t2.face.at(0, 1, c))));
    CHECK(up.face.at(0, 2, c) == doctest::Approx(t2.face.at(0, 1, c)));
  }
  CHECK_THROWS_AS(resample_traces(make_traces(1, 0, 1, 1), 30.0, 5), std::invalid_argument);
}

TEST_CASE("row normalization maps to [0,1] with exact endpoints") {
  RegionTraceSet t = make_traces(3, 2, 20, 11);
  auto [face, bg] = build_mstmaps(t);
  MSTMap n = normalize_rows(face);
  CHECK(n.normalized);
  for (size_t r = 0; r < n.rows; ++r)
    for (size_t c = 0; c < n.C; ++c) {
      double lo = 1e9, hi = -1e9;
      for (size_t f = 0; f < n.T; ++f) {
        lo = std::min(lo, n.at(r, f, c));
        hi = std::max(hi, n.at(r, f, c));
      }
      CHECK(lo == doctest::Approx(0.0));
      CHECK(hi == doctest::Approx(1.0));
    }
  CHECK_THROWS_AS(normalize_rows(n), std::invalid_argument);
}

TEST_CASE("constant rows normalize to 0.5") {
  MSTMap m;
  m.rows = 1;
  m.T = 4;
  m.C = 1;
  m.values.assign(4, 0.37);
  MSTMap n = normalize_rows(m);
  for (double v : n.values) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("normalization is invariant to positive affine trace changes") {
  RegionTraceSet t = make_traces(2, 0, 15, 13);
  RegionTraceSet t2 = t;
  for (double& v : t2.face.v) v = 2.5 * v + 0.1;
  auto [f1, b1] = build_mstmaps(t);
  auto [f2, b2] = build_mstmaps(t2);
  MSTMap n1 = normalize_rows(f1), n2 = normalize_rows(f2);
  for (size_t i = 0; i < n1.values.size(); ++i)
    CHECK(n1.values[i] == doctest::Approx(n2.values[i]).epsilon(1e-9));
}

TEST_CASE("region permutation permutes rows without changing values") {
  RegionTraceSet t = make_traces(3, 0, 8, 17);
  RegionTraceSet p = t;  // swap regions 0 and 2
  for (size_t f = 0; f < 8; ++f)
    for (size_t c = 0; c < 3; ++c)
      std::swap(p.face.at(0, f, c), p.face.at(2, f, c));
  auto [mt, bt] = build_mstmaps(t);
  auto [mp, bp] = build_mstmaps(p);
  // subset {0,2} (mask 5) is symmetric under the swap; singleton rows swap
  for (size_t f = 0; f < 8; ++f)
    for (size_t c = 0; c < 3; ++c) {
      CHECK(mt.at(4, f, c) == doctest::Approx(mp.at(4, f, c)));  // mask 5
      CHECK(mt.at(6, f, c) == doctest::Approx(mp.at(6, f, c)));  // mask 7
      CHECK(mt.at(0, f, c) == doctest::Approx(mp.at(3, f, c)));  // {0} vs {2}
    }
}

TEST_CASE("YUV transform sends white to (1,0,0) and matches BT.601 weights") {
  MSTMap m;
  m.rows = 1;
  m.T = 2;
  m.C = 3;
  m.values = {1.0, 1.0, 1.0, 0.2, 0.5, 0.8};
  MSTMap y = color_transform(m, ColorSpace::YUV);
  CHECK(y.C == 3);
  CHECK(y.at(0, 0, 0) == doctest::Approx(1.0));
  CHECK(y.at(0, 0, 1) == doctest::Approx(0.0).epsilon(1e-4));
  CHECK(y.at(0, 0, 2) == doctest::Approx(0.0).epsilon(1e-4));
  CHECK(y.at(0, 1, 0) == doctest::Approx(0.299 * 0.2 + 0.587 * 0.5 + 0.114 * 0.8));
}

TEST_CASE("G transform keeps the green channel only") {
  RegionTraceSet t = make_traces(2, 0, 6, 19);
  auto [face, bg] = build_mstmaps(t);
  MSTMap g = color_transform(face, ColorSpace::G);
  REQUIRE(g.C == 1);
  for (size_t r = 0; r < g.rows; ++r)
    for (size_t f = 0; f < g.T; ++f) CHECK(g.at(r, f, 0) == doctest::Approx(face.at(r, f, 1)));
}

TEST_CASE("CHROM and POS produce one zero-mean-combined channel") {
  RegionTraceSet t = make_traces(2, 0, 64, 23);
  auto [face, bg] = build_mstmaps(t);
  for (ColorSpace cs : {ColorSpace::CHROM, ColorSpace::POS}) {
    MSTMap o = color_transform(face, cs);
    CHECK(o.C == 1);
    CHECK(o.rows == face.rows);
    for (double v : o.values) CHECK(std::isfinite(v));
  }
  CHECK_THROWS_AS(color_transform(color_transform(face, ColorSpace::G), ColorSpace::CHROM),
                  std::invalid_argument);
}

TEST_CASE("color space parsing round trips and rejects junk") {
  for (const char* n : {"RGB", "G", "YUV", "CHROM", "POS"})
    CHECK(color_space_name(parse_color_space(n)) == std::string(n));
  CHECK_THROWS_AS(parse_color_space("HSV"), std::invalid_argument);
  CHECK(color_space_channels(ColorSpace::RGB) == 3);
  CHECK(color_space_channels(ColorSpace::POS) == 1);
}

TEST_CASE("trace files round trip exactly enough and report line numbers") {
  RegionTraceSet t = make_traces(2, 1, 12, 29, 25.0);
  std::ostringstream os;
  write_trace_file(t, os);
  std::istringstream is(os.str());
  RegionTraceSet r = read_trace_file(is, "mem");
  CHECK(r.subject_id == t.subject_id);
  CHECK(r.label == t.label);
  CHECK(r.fps == doctest::Approx(25.0));
  CHECK(r.frames == 12);
  REQUIRE(r.face.v.size() == t.face.v.size());
  for (size_t i = 0; i < t.face.v.size(); ++i)
    CHECK(r.face.v[i] == doctest::Approx(t.face.v[i]).epsilon(1e-8));

  // truncated body: error cites the failing line
  std::string text = os.str();
  std::string cut = text.substr(0, text.find('\n', text.find('\n') + 1) + 1);
  std::istringstream bad(cut);
  CHECK_THROWS_WITH_AS(read_trace_file(bad, "cut"), doctest::Contains("cut:3"),
                       std::runtime_error);

  std::istringstream badhdr("subject=x label=1 fps=30 n=1\n");
  CHECK_THROWS_AS(read_trace_file(badhdr, "h"), std::runtime_error);
}

TEST_CASE("map binary format round trips") {
  RegionTraceSet t = make_traces(3, 0, 10, 31);
  auto [face, bg] = build_mstmaps(t);
  MSTMap n = normalize_rows(face);
  const std::string path = std::filesystem::temp_directory_path() / "map_rt.mstm";
  write_mstmap_binary(n, path);
  MSTMap r = read_mstmap_binary(path);
  CHECK(r.rows == n.rows);
  CHECK(r.T == n.T);
  CHECK(r.C == n.C);
  for (size_t i = 0; i < n.values.size(); ++i)
    CHECK(r.values[i] == doctest::Approx(n.values[i]).epsilon(1e-6));
  std::filesystem::remove(path);
}

TEST_CASE("image export writes the right header and rounds half up") {
  MSTMap m;
  m.rows = 1;
  m.T = 3;
  m.C = 1;
  m.normalized = true;
  m.values = {0.0, 0.5, 1.0};
  const std::string path = std::filesystem::temp_directory_path() / "map_img.pgm";
  write_map_image(m, path);
  std::ifstream is(path, std::ios::binary);
  std::string magic, dims;
  std::getline(is, magic);
  CHECK(magic == "P5");
  std::getline(is, dims);
  CHECK(dims == "3 1");
  std::getline(is, dims);
  CHECK(dims == "255");
  unsigned char px[3];
  is.read(reinterpret_cast<char*>(px), 3);
  CHECK(px[0] == 0);
  CHECK(px[1] == 128);  // 0.5*255 + 0.5 = 128 after half-up rounding
  CHECK(px[2] == 255);
  std::filesystem::remove(path);
}

TEST_CASE("validation rejects negative and non-finite traces") {
  RegionTraceSet t = make_traces(1, 0, 4, 37);
  t.face.at(0, 1, 2) = -0.1;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t.face.at(0, 1, 2) = std::nan("");
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
}
