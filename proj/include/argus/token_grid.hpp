#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "argus/volume.hpp"

namespace argus {

/// A 3D lattice of feature vectors stored token-major, tokens ordered
/// x-fastest just like Volume voxels.
struct TokenGrid {
  std::array<uint32_t, 3> grid_dims{0, 0, 0};
  uint32_t token_dim = 0;
  std::vector<float> data;

  size_t n_tokens() const {
    return size_t(grid_dims[0]) * grid_dims[1] * grid_dims[2];
  }
  size_t token_index(uint32_t x, uint32_t y, uint32_t z) const {
    return size_t(x) + size_t(grid_dims[0]) * (size_t(y) + size_t(grid_dims[1]) * z);
  }
  const float* token(size_t t) const { return data.data() + t * token_dim; }
  float* token(size_t t) { return data.data() + t * token_dim; }

  void validate() const;
};

/// Indices of masked tokens, strictly increasing.
struct MaskSet {
  size_t n_tokens = 0;
  std::vector<uint32_t> masked;

  std::vector<uint32_t> visible() const;
  void validate() const;
};

/// Tiles the volume into non-overlapping patch_dims blocks; token (X,Y,Z)
/// holds that block's voxels flattened x-fastest. Volume dims must be
/// divisible by patch dims.
TokenGrid patchify(const Volume& v, std::array<uint32_t, 3> patch_dims);

/// Exact inverse of patchify. token_dim must equal the patch volume.
Volume unpatchify(const TokenGrid& g, std::array<uint32_t, 3> patch_dims,
                  std::array<double, 3> spacing = {1.0, 1.0, 1.0});

/// Parameter-free 3D sinusoidal embedding table, one row of d values per
/// token in grid order. d must be divisible by 6: each axis gets d/3 slots
/// filled with sin/cos pairs at geometrically spaced frequencies from 1 down
/// to 1/10000.
std::vector<double> pos_embed_3d(std::array<uint32_t, 3> grid_dims, size_t d);

/// Space-to-depth: halves every grid axis and concatenates each 2x2x2 block
/// of tokens into one, offset order o = dz*4 + dy*2 + dx. A pure permutation
/// of scalars.
TokenGrid pixel_shuffle_3d(const TokenGrid& g);

/// Exact inverse of pixel_shuffle_3d. token_dim must be divisible by 8.
TokenGrid pixel_unshuffle_3d(const TokenGrid& g);

/// Halves every grid axis; each output token is the arithmetic mean of its
/// 2x2x2 source block. token_dim is unchanged.
TokenGrid avg_pool_3d(const TokenGrid& g);

/// Draws exactly round(ratio * n_tokens) distinct indices uniformly,
/// deterministic in seed.
MaskSet sample_mask(size_t n_tokens, double ratio, uint64_t seed);

/// `.tkg` layout: magic "TKG1"; little-endian u32 gx, gy, gz, d; then f32
/// payload, token-major.
void write_tkg(const TokenGrid& g, const std::string& path);
TokenGrid read_tkg(const std::string& path);

/// Mask sets serialize as {"n_tokens": N, "masked": [...]}.
void write_mask_json(const MaskSet& m, const std::string& path);
MaskSet read_mask_json(const std::string& path);

}  // namespace argus
