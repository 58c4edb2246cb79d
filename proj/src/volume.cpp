#include "argus/volume.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

namespace argus {

void Volume::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] == 0) {
      throw ValidationError("volume: zero dimension on axis " +
                            std::to_string(a));
    }
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
      throw ValidationError("volume: non-positive or non-finite spacing on axis " +
                            std::to_string(a));
    }
  }
  if (voxels.size() != size()) {
    throw ValidationError("volume: voxel count " + std::to_string(voxels.size()) +
                          " does not match dims product " + std::to_string(size()));
  }
  for (size_t i = 0; i < voxels.size(); ++i) {
    if (!std::isfinite(voxels[i])) {
      throw ValidationError("volume: non-finite voxel at index " +
                            std::to_string(i));
    }
  }
}

ResolutionProfile ResolutionProfile::normal() {
  return {"normal", {256, 256, 64}, {16, 16, 8}};
}

ResolutionProfile ResolutionProfile::high() {
  return {"high", {512, 512, 256}, {32, 32, 16}};
}

ResolutionProfile ResolutionProfile::by_name(const std::string& name) {
  if (name == "normal" || name == "NORMAL") return normal();
  if (name == "high" || name == "HIGH") return high();
  throw ValidationError("unknown resolution profile '" + name +
                        "' (valid: normal, high)");
}

size_t ResolutionProfile::raw_token_count() const {
  size_t n = 1;
  for (int a = 0; a < 3; ++a) n *= target_dims[a] / patch_dims[a];
  return n;
}

Volume clip_hu(const Volume& v, float lo, float hi) {
  if (!(lo < hi)) throw ValidationError("clip_hu: lo must be < hi");
  Volume out;
  out.dims = v.dims;
  out.spacing = v.spacing;
  out.voxels.resize(v.voxels.size());
  for (size_t i = 0; i < v.voxels.size(); ++i) {
    const float x = v.voxels[i];
    if (!std::isfinite(x)) {
      throw ValidationError("clip_hu: non-finite voxel at index " +
                            std::to_string(i));
    }
    out.voxels[i] = std::min(hi, std::max(lo, x));
  }
  return out;
}

Volume normalize_intensity(const Volume& v, float lo, float hi) {
  if (!(lo < hi)) throw ValidationError("normalize_intensity: lo must be < hi");
  Volume out;
  out.dims = v.dims;
  out.spacing = v.spacing;
  out.voxels.resize(v.voxels.size());
  const double span = double(hi) - double(lo);
  for (size_t i = 0; i < v.voxels.size(); ++i) {
    const float x = v.voxels[i];
    if (!(x >= lo && x <= hi)) {
      std::ostringstream oss;
      oss << "normalize_intensity: voxel value " << x << " outside [" << lo
          << ", " << hi << "] (clip first)";
      throw ValidationError(oss.str());
    }
    out.voxels[i] = float((double(x) - double(lo)) / span);
  }
  return out;
}

namespace {

int64_t round_half_away(double x) {
  return int64_t(x >= 0.0 ? std::floor(x + 0.5) : std::ceil(x - 0.5));
}

// Trilinear sampling at voxel centers: input voxel i sits at (i + 0.5) *
// spacing_in, output voxel j samples (j + 0.5) * spacing_out, so the source
// coordinate is (j + 0.5) * ratio - 0.5 with ratio = spacing_out/spacing_in.
// Sample coordinates are clamped into the input center range. The ratio is
// passed explicitly so an exact 1.0 maps voxels through bit-identically.
Volume trilinear_map(const Volume& v, std::array<uint32_t, 3> out_dims,
                     std::array<double, 3> out_spacing,
                     std::array<double, 3> ratio) {
  Volume out;
  out.dims = out_dims;
  out.spacing = out_spacing;
  out.voxels.resize(out.size());

  const uint32_t nx = v.dims[0], ny = v.dims[1], nz = v.dims[2];

  // Per-axis source coordinates are precomputed once.
  struct AxisSample {
    uint32_t i0, i1;
    double f;
  };
  auto axis_samples = [](uint32_t n_out, uint32_t n_in, double r) {
    std::vector<AxisSample> s(n_out);
    for (uint32_t j = 0; j < n_out; ++j) {
      double u = (double(j) + 0.5) * r - 0.5;
      u = std::min(std::max(u, 0.0), double(n_in - 1));
      const double fl = std::floor(u);
      const uint32_t i0 = uint32_t(fl);
      s[j] = {i0, std::min(i0 + 1, n_in - 1), u - fl};
    }
    return s;
  };
  const auto xs = axis_samples(out_dims[0], nx, ratio[0]);
  const auto ys = axis_samples(out_dims[1], ny, ratio[1]);
  const auto zs = axis_samples(out_dims[2], nz, ratio[2]);

  size_t o = 0;
  for (uint32_t z = 0; z < out_dims[2]; ++z) {
    const auto& az = zs[z];
    for (uint32_t y = 0; y < out_dims[1]; ++y) {
      const auto& ay = ys[y];
      const size_t base00 = v.index(0, ay.i0, az.i0);
      const size_t base10 = v.index(0, ay.i1, az.i0);
      const size_t base01 = v.index(0, ay.i0, az.i1);
      const size_t base11 = v.index(0, ay.i1, az.i1);
      for (uint32_t x = 0; x < out_dims[0]; ++x, ++o) {
        const auto& ax = xs[x];
        const double c000 = v.voxels[base00 + ax.i0];
        const double c100 = v.voxels[base00 + ax.i1];
        const double c010 = v.voxels[base10 + ax.i0];
        const double c110 = v.voxels[base10 + ax.i1];
        const double c001 = v.voxels[base01 + ax.i0];
        const double c101 = v.voxels[base01 + ax.i1];
        const double c011 = v.voxels[base11 + ax.i0];
        const double c111 = v.voxels[base11 + ax.i1];
        const double c00 = c000 + (c100 - c000) * ax.f;
        const double c10 = c010 + (c110 - c010) * ax.f;
        const double c01 = c001 + (c101 - c001) * ax.f;
        const double c11 = c011 + (c111 - c011) * ax.f;
        const double c0 = c00 + (c10 - c00) * ay.f;
        const double c1 = c01 + (c11 - c01) * ay.f;
        out.voxels[o] = float(c0 + (c1 - c0) * az.f);
      }
    }
  }
  return out;
}

}  // namespace

Volume resample_spacing(const Volume& v, std::array<double, 3> target_spacing) {
  v.validate();
  for (int a = 0; a < 3; ++a) {
    if (!(target_spacing[a] > 0.0) || !std::isfinite(target_spacing[a])) {
      throw ValidationError("resample_spacing: target spacing must be positive");
    }
  }
  std::array<uint32_t, 3> out_dims{};
  for (int a = 0; a < 3; ++a) {
    int64_t n = round_half_away(double(v.dims[a]) * v.spacing[a] / target_spacing[a]);
    if (n < 1) {
      std::cerr << "resample_spacing: axis " << a
                << " would collapse to 0 voxels, clamping to 1\n";
      n = 1;
    }
    out_dims[a] = uint32_t(n);
  }
  std::array<double, 3> ratio{};
  for (int a = 0; a < 3; ++a) ratio[a] = target_spacing[a] / v.spacing[a];
  return trilinear_map(v, out_dims, target_spacing, ratio);
}

Volume resize(const Volume& v, std::array<uint32_t, 3> target_dims) {
  v.validate();
  for (int a = 0; a < 3; ++a) {
    if (target_dims[a] == 0) {
      throw ValidationError("resize: target dims must be positive");
    }
  }
  std::array<double, 3> out_spacing{}, ratio{};
  for (int a = 0; a < 3; ++a) {
    // ratio 1.0 exactly when target == dims, which keeps identity resizes
    // bitwise and spacing untouched
    ratio[a] = double(v.dims[a]) / double(target_dims[a]);
    out_spacing[a] = v.spacing[a] * ratio[a];
  }
  return trilinear_map(v, target_dims, out_spacing, ratio);
}

Volume preprocess(const Volume& v, const ResolutionProfile& profile) {
  auto staged = [](const char* stage, auto&& fn) {
    try {
      return fn();
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("preprocess[") + stage + "]: " + e.what());
    }
  };
  Volume c = staged("clip", [&] { return clip_hu(v); });
  Volume n = staged("normalize", [&] { return normalize_intensity(c); });
  Volume r = staged("resample", [&] { return resample_spacing(n); });
  return staged("resize", [&] { return resize(r, profile.target_dims); });
}

}  // namespace argus
