#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "argus/ctvol_io.hpp"
#include "argus/rng.hpp"
#include "argus/volume.hpp"

using namespace argus;

namespace {

Volume make_volume(std::array<uint32_t, 3> dims, std::array<double, 3> spacing,
                   float fill = 0.0f) {
  Volume v;
  v.dims = dims;
  v.spacing = spacing;
  v.voxels.assign(v.size(), fill);
  return v;
}

Volume random_hu_volume(std::array<uint32_t, 3> dims, uint64_t seed) {
  Volume v = make_volume(dims, {0.8, 0.9, 2.5});
  Rng rng(seed);
  for (float& x : v.voxels) x = float(rng.uniform(-2500.0, 2500.0));
  return v;
}

// Affine field evaluated at physical voxel centers.
Volume affine_volume(std::array<uint32_t, 3> dims, std::array<double, 3> spacing,
                     double a, double b, double c, double d) {
  Volume v = make_volume(dims, spacing);
  for (uint32_t z = 0; z < dims[2]; ++z) {
    for (uint32_t y = 0; y < dims[1]; ++y) {
      for (uint32_t x = 0; x < dims[0]; ++x) {
        const double px = (x + 0.5) * spacing[0];
        const double py = (y + 0.5) * spacing[1];
        const double pz = (z + 0.5) * spacing[2];
        v.at(x, y, z) = float(a * px + b * py + c * pz + d);
      }
    }
  }
  return v;
}

std::string temp_path(const std::string& leaf) {
  return (std::filesystem::temp_directory_path() / leaf).string();
}

}  // namespace

TEST_CASE("clip_hu clamps into [-1000, 1000]") {
  Volume v = make_volume({3, 1, 1}, {1, 1, 1});
  v.voxels = {1500.0f, -2000.0f, 37.5f};
  const Volume out = clip_hu(v);
  CHECK(out.voxels[0] == 1000.0f);
  CHECK(out.voxels[1] == -1000.0f);
  CHECK(out.voxels[2] == 37.5f);
  CHECK(out.dims == v.dims);
  CHECK(out.spacing == v.spacing);
}

TEST_CASE("clip_hu rejects non-finite voxels with the index") {
  Volume v = make_volume({2, 2, 1}, {1, 1, 1});
  v.voxels[3] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_WITH_AS(clip_hu(v), doctest::Contains("index 3"),
                       ValidationError);
}

TEST_CASE("normalize_intensity maps bounds and midpoint") {
  Volume v = make_volume({3, 1, 1}, {1, 1, 1});
  v.voxels = {-1000.0f, 1000.0f, 0.0f};
  const Volume out = normalize_intensity(v);
  CHECK(out.voxels[0] == 0.0f);
  CHECK(out.voxels[1] == 1.0f);
  CHECK(out.voxels[2] == 0.5f);
}

TEST_CASE("normalize_intensity rejects out-of-range values by name") {
  Volume v = make_volume({1, 1, 1}, {1, 1, 1}, 1200.0f);
  CHECK_THROWS_WITH_AS(normalize_intensity(v), doctest::Contains("1200"),
                       ValidationError);
}

TEST_CASE("clip then normalize lands in [0,1] on random HU fields") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const Volume v = random_hu_volume({9, 7, 6}, seed);
    const Volume out = normalize_intensity(clip_hu(v));
    for (float x : out.voxels) {
      CHECK(x >= 0.0f);
      CHECK(x <= 1.0f);
    }
  }
}

TEST_CASE("resample_spacing dims follow the rounding formula") {
  // 512*0.7/1 = 358.4 -> 358, 300*1.0/4 = 75
  Volume v = make_volume({512, 512, 300}, {0.7, 0.7, 1.0}, 42.0f);
  const Volume out = resample_spacing(v, {1.0, 1.0, 4.0});
  CHECK(out.dims == std::array<uint32_t, 3>{358, 358, 75});
  CHECK(out.spacing == std::array<double, 3>{1.0, 1.0, 4.0});
  for (float x : out.voxels) {
    REQUIRE(x == 42.0f);  // constants interpolate exactly
  }
}

TEST_CASE("resample_spacing reproduces affine fields when downsampling") {
  // geometry chosen so every output center lies inside the input center hull
  // (dims * spacing / target rounds down or exactly on every axis)
  const std::array<double, 3> spacing{0.6, 0.8, 3.0};
  const Volume v = affine_volume({24, 20, 16}, spacing, 0.37, -0.21, 0.11, 5.0);
  const Volume out = resample_spacing(v, {1.0, 1.0, 4.0});
  double max_err = 0.0, max_field = 0.0;
  for (uint32_t z = 0; z < out.dims[2]; ++z) {
    for (uint32_t y = 0; y < out.dims[1]; ++y) {
      for (uint32_t x = 0; x < out.dims[0]; ++x) {
        const double expect = 0.37 * (x + 0.5) * 1.0 - 0.21 * (y + 0.5) * 1.0 +
                              0.11 * (z + 0.5) * 4.0 + 5.0;
        max_field = std::max(max_field, std::abs(expect));
        max_err = std::max(max_err, std::abs(double(out.at(x, y, z)) - expect));
      }
    }
  }
  CHECK(max_err / max_field < 1e-5);
}

TEST_CASE("resample_spacing clamps degenerate axes to one voxel") {
  Volume v = make_volume({2, 2, 2}, {0.1, 1.0, 1.0}, 7.0f);
  const Volume out = resample_spacing(v, {10.0, 1.0, 1.0});
  CHECK(out.dims[0] == 1);
}

TEST_CASE("resize to identical dims is a bitwise identity") {
  Volume v = random_hu_volume({11, 9, 5}, 3);
  const Volume out = resize(v, v.dims);
  CHECK(out.voxels == v.voxels);
  CHECK(out.spacing == v.spacing);
}

TEST_CASE("resize reaches the NORMAL profile dims and keeps extent") {
  Volume v = random_hu_volume({48, 40, 24}, 4);
  const Volume out = resize(v, ResolutionProfile::normal().target_dims);
  CHECK(out.dims == std::array<uint32_t, 3>{256, 256, 64});
  for (int a = 0; a < 3; ++a) {
    CHECK(std::abs(out.extent(a) - v.extent(a)) < v.spacing[a]);
  }
}

TEST_CASE("resize reproduces affine fields when downsampling") {
  const std::array<double, 3> spacing{1.0, 1.5, 2.0};
  const Volume v = affine_volume({20, 16, 12}, spacing, 0.2, 0.3, -0.15, 1.0);
  const Volume out = resize(v, {10, 8, 6});
  double max_err = 0.0, max_field = 0.0;
  for (uint32_t z = 0; z < out.dims[2]; ++z) {
    for (uint32_t y = 0; y < out.dims[1]; ++y) {
      for (uint32_t x = 0; x < out.dims[0]; ++x) {
        const double expect = 0.2 * (x + 0.5) * out.spacing[0] +
                              0.3 * (y + 0.5) * out.spacing[1] -
                              0.15 * (z + 0.5) * out.spacing[2] + 1.0;
        max_field = std::max(max_field, std::abs(expect));
        max_err = std::max(max_err, std::abs(double(out.at(x, y, z)) - expect));
      }
    }
  }
  CHECK(max_err / max_field < 1e-5);
}

TEST_CASE("preprocess: constant 0 HU input becomes constant 0.5") {
  Volume v = make_volume({32, 32, 16}, {8.0, 8.0, 16.0}, 0.0f);
  const Volume out = preprocess(v, ResolutionProfile::normal());
  CHECK(out.dims == std::array<uint32_t, 3>{256, 256, 64});
  for (float x : out.voxels) {
    REQUIRE(x == 0.5f);
  }
}

TEST_CASE("preprocess tags the failing stage") {
  Volume v = make_volume({2, 2, 2}, {1, 1, 1});
  v.voxels[0] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_WITH_AS(preprocess(v, ResolutionProfile::normal()),
                       doctest::Contains("preprocess[clip]"), ValidationError);
}

TEST_CASE("preprocess is idempotent on an aligned grid") {
  Volume v = make_volume({128, 128, 128}, {2.0, 2.0, 2.0});
  Rng rng(11);
  for (float& x : v.voxels) x = float(rng.uniform(-1000.0, 1000.0));
  const ResolutionProfile prof = ResolutionProfile::normal();
  const Volume once = preprocess(v, prof);

  Volume back = once;  // rescale to HU and run the pipeline again
  for (float& x : back.voxels) x = x * 2000.0f - 1000.0f;
  const Volume twice = preprocess(back, prof);
  REQUIRE(twice.dims == once.dims);
  for (size_t i = 0; i < once.voxels.size(); ++i) {
    REQUIRE(std::abs(twice.voxels[i] - once.voxels[i]) < 1e-5f);
  }
}

TEST_CASE("ctvol round-trip is bitwise exact") {
  Volume v = random_hu_volume({7, 6, 5}, 9);
  const std::string path = temp_path("argus_test_roundtrip.ctvol");
  write_ctvol(v, path);
  const Volume r = read_ctvol(path);
  CHECK(r.dims == v.dims);
  CHECK(r.spacing == v.spacing);
  CHECK(std::memcmp(r.voxels.data(), v.voxels.data(),
                    v.voxels.size() * sizeof(float)) == 0);
  std::remove(path.c_str());
}

TEST_CASE("ctvol reader distinguishes the error cases") {
  const std::string path = temp_path("argus_test_bad.ctvol");

  SUBCASE("empty file is bad magic") {
    std::ofstream(path, std::ios::trunc).close();
    CHECK_THROWS_WITH_AS(read_ctvol(path), doctest::Contains("bad magic"),
                         IoError);
  }
  SUBCASE("wrong magic") {
    std::ofstream out(path, std::ios::trunc);
    out << "NOPE then some bytes";
    out.close();
    CHECK_THROWS_WITH_AS(read_ctvol(path), doctest::Contains("bad magic"),
                         IoError);
  }
  SUBCASE("header cut short is a truncated payload") {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    out << "CTV1" << std::string(10, '\0');
    out.close();
    CHECK_THROWS_WITH_AS(read_ctvol(path), doctest::Contains("truncated"),
                         IoError);
  }
  SUBCASE("dims 2x2x2 with 7 voxels is a payload mismatch") {
    Volume v = make_volume({2, 2, 2}, {1, 1, 1}, 1.0f);
    write_ctvol(v, path);
    std::ifstream in(path, std::ios::binary);
    std::string data((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    out.write(data.data(), std::streamsize(data.size() - 4));
    out.close();
    CHECK_THROWS_WITH_AS(read_ctvol(path),
                         doctest::Contains("payload mismatch"), IoError);
  }
  std::remove(path.c_str());
}

TEST_CASE("raw f32 arrays load through a JSON descriptor") {
  const std::string raw_path = temp_path("argus_fixture.raw");
  const std::string json_path = temp_path("argus_fixture.json");
  Volume v = random_hu_volume({4, 3, 2}, 21);
  {
    std::ofstream out(raw_path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(v.voxels.data()),
              std::streamsize(v.voxels.size() * sizeof(float)));
  }
  {
    std::ofstream out(json_path, std::ios::trunc);
    out << R"({"dims": [4, 3, 2], "spacing": [0.8, 0.9, 2.5], "data": "argus_fixture.raw"})";
  }
  const Volume r = load_volume(json_path);
  CHECK(r.dims == v.dims);
  CHECK(r.voxels == v.voxels);
  std::remove(raw_path.c_str());
  std::remove(json_path.c_str());
}
