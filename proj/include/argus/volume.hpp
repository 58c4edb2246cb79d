#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "argus/errors.hpp"

namespace argus {

/// A 3D CT scalar field. Axis order is x (sagittal), y (coronal),
/// z (transverse); voxels are stored x-fastest. Spacing is millimeters per
/// voxel, kept at 64-bit while voxels stay 32-bit.
struct Volume {
  std::array<uint32_t, 3> dims{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::vector<float> voxels;

  size_t size() const { return size_t(dims[0]) * dims[1] * dims[2]; }

  size_t index(uint32_t x, uint32_t y, uint32_t z) const {
    return size_t(x) + size_t(dims[0]) * (size_t(y) + size_t(dims[1]) * z);
  }

  float at(uint32_t x, uint32_t y, uint32_t z) const {
    return voxels[index(x, y, z)];
  }
  float& at(uint32_t x, uint32_t y, uint32_t z) {
    return voxels[index(x, y, z)];
  }

  /// Physical extent along one axis, millimeters.
  double extent(int axis) const { return dims[axis] * spacing[axis]; }

  /// Checks dims/spacing/voxel-count invariants and voxel finiteness.
  /// Throws ValidationError on violation.
  void validate() const;
};

/// One of the two resolution settings the pipeline supports.
struct ResolutionProfile {
  std::string name;
  std::array<uint32_t, 3> target_dims;
  std::array<uint32_t, 3> patch_dims;

  static ResolutionProfile normal();  // (256,256,64), patch (16,16,8)
  static ResolutionProfile high();    // (512,512,256), patch (32,32,16)
  static ResolutionProfile by_name(const std::string& name);

  size_t raw_token_count() const;
};

/// Clamps every voxel into [lo, hi] HU. Rejects non-finite voxels with the
/// offending index.
Volume clip_hu(const Volume& v, float lo = -1000.0f, float hi = 1000.0f);

/// Maps voxels from [lo, hi] HU to [0, 1]. The input must already be clipped;
/// out-of-range voxels are an error naming the offending value.
Volume normalize_intensity(const Volume& v, float lo = -1000.0f,
                           float hi = 1000.0f);

/// Resamples to the target physical spacing. New dims are
/// round(dims * spacing / target), clamped to at least 1. Values come from
/// trilinear interpolation at voxel centers with edge clamping.
Volume resample_spacing(const Volume& v,
                        std::array<double, 3> target_spacing = {1.0, 1.0,
                                                                4.0});

/// Trilinear resize to exactly target_dims; spacing is rescaled so the
/// physical extent is preserved.
Volume resize(const Volume& v, std::array<uint32_t, 3> target_dims);

/// clip -> normalize -> resample to (1,1,4) mm -> resize to the profile dims.
/// Stage failures are rethrown tagged with the stage name.
Volume preprocess(const Volume& v, const ResolutionProfile& profile);

}  // namespace argus
