#include "argus/token_grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "argus/rng.hpp"

namespace argus {

void TokenGrid::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (grid_dims[a] == 0) {
      throw ValidationError("token grid: zero dimension on axis " +
                            std::to_string(a));
    }
  }
  if (token_dim == 0) throw ValidationError("token grid: zero token_dim");
  if (data.size() != n_tokens() * token_dim) {
    throw ValidationError("token grid: data length " +
                          std::to_string(data.size()) + " does not equal " +
                          std::to_string(n_tokens() * token_dim));
  }
  for (size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw ValidationError("token grid: non-finite entry at index " +
                            std::to_string(i));
    }
  }
}

std::vector<uint32_t> MaskSet::visible() const {
  std::vector<uint32_t> vis;
  vis.reserve(n_tokens - masked.size());
  size_t m = 0;
  for (uint32_t i = 0; i < n_tokens; ++i) {
    if (m < masked.size() && masked[m] == i) {
      ++m;
    } else {
      vis.push_back(i);
    }
  }
  return vis;
}

void MaskSet::validate() const {
  for (size_t i = 0; i < masked.size(); ++i) {
    if (masked[i] >= n_tokens) {
      throw ValidationError("mask set: index " + std::to_string(masked[i]) +
                            " out of range");
    }
    if (i > 0 && masked[i] <= masked[i - 1]) {
      throw ValidationError("mask set: indices must be strictly increasing");
    }
  }
}

TokenGrid patchify(const Volume& v, std::array<uint32_t, 3> patch_dims) {
  v.validate();
  static const char* axis_names[3] = {"x", "y", "z"};
  for (int a = 0; a < 3; ++a) {
    if (patch_dims[a] == 0 || v.dims[a] % patch_dims[a] != 0) {
      throw ValidationError(std::string("patchify: volume dim on axis ") +
                            axis_names[a] + " (" + std::to_string(v.dims[a]) +
                            ") is not divisible by patch dim " +
                            std::to_string(patch_dims[a]));
    }
  }
  TokenGrid g;
  for (int a = 0; a < 3; ++a) g.grid_dims[a] = v.dims[a] / patch_dims[a];
  g.token_dim = patch_dims[0] * patch_dims[1] * patch_dims[2];
  g.data.resize(g.n_tokens() * g.token_dim);

  const uint32_t px = patch_dims[0], py = patch_dims[1], pz = patch_dims[2];
  for (uint32_t Z = 0; Z < g.grid_dims[2]; ++Z) {
    for (uint32_t Y = 0; Y < g.grid_dims[1]; ++Y) {
      for (uint32_t X = 0; X < g.grid_dims[0]; ++X) {
        float* tok = g.token(g.token_index(X, Y, Z));
        size_t k = 0;
        for (uint32_t dz = 0; dz < pz; ++dz) {
          for (uint32_t dy = 0; dy < py; ++dy) {
            const size_t row = v.index(X * px, Y * py + dy, Z * pz + dz);
            std::memcpy(tok + k, v.voxels.data() + row, px * sizeof(float));
            k += px;
          }
        }
      }
    }
  }
  return g;
}

Volume unpatchify(const TokenGrid& g, std::array<uint32_t, 3> patch_dims,
                  std::array<double, 3> spacing) {
  g.validate();
  const uint32_t px = patch_dims[0], py = patch_dims[1], pz = patch_dims[2];
  if (g.token_dim != px * py * pz) {
    throw ValidationError("unpatchify: token_dim " + std::to_string(g.token_dim) +
                          " does not equal patch volume " +
                          std::to_string(px * py * pz));
  }
  Volume v;
  for (int a = 0; a < 3; ++a) v.dims[a] = g.grid_dims[a] * patch_dims[a];
  v.spacing = spacing;
  v.voxels.resize(v.size());
  for (uint32_t Z = 0; Z < g.grid_dims[2]; ++Z) {
    for (uint32_t Y = 0; Y < g.grid_dims[1]; ++Y) {
      for (uint32_t X = 0; X < g.grid_dims[0]; ++X) {
        const float* tok = g.token(g.token_index(X, Y, Z));
        size_t k = 0;
        for (uint32_t dz = 0; dz < pz; ++dz) {
          for (uint32_t dy = 0; dy < py; ++dy) {
            const size_t row = v.index(X * px, Y * py + dy, Z * pz + dz);
            std::memcpy(v.voxels.data() + row, tok + k, px * sizeof(float));
            k += px;
          }
        }
      }
    }
  }
  return v;
}

std::vector<double> pos_embed_3d(std::array<uint32_t, 3> grid_dims, size_t d) {
  if (d == 0 || d % 6 != 0) {
    throw ValidationError("pos_embed_3d: d must be divisible by 6, got " +
                          std::to_string(d));
  }
  const size_t block = d / 3;   // per-axis slot count
  const size_t pairs = block / 2;
  std::vector<double> freqs(pairs);
  for (size_t k = 0; k < pairs; ++k) {
    freqs[k] = pairs == 1
                   ? 1.0
                   : std::pow(10000.0, -double(k) / double(pairs - 1));
  }
  const size_t n =
      size_t(grid_dims[0]) * grid_dims[1] * grid_dims[2];
  std::vector<double> table(n * d);
  size_t t = 0;
  for (uint32_t z = 0; z < grid_dims[2]; ++z) {
    for (uint32_t y = 0; y < grid_dims[1]; ++y) {
      for (uint32_t x = 0; x < grid_dims[0]; ++x, ++t) {
        double* row = table.data() + t * d;
        const double coord[3] = {double(x), double(y), double(z)};
        for (int a = 0; a < 3; ++a) {
          double* slot = row + a * block;
          for (size_t k = 0; k < pairs; ++k) {
            slot[2 * k] = std::sin(coord[a] * freqs[k]);
            slot[2 * k + 1] = std::cos(coord[a] * freqs[k]);
          }
        }
      }
    }
  }
  return table;
}

namespace {

void check_even(const TokenGrid& g, const char* op) {
  static const char* axis_names[3] = {"x", "y", "z"};
  for (int a = 0; a < 3; ++a) {
    if (g.grid_dims[a] % 2 != 0) {
      throw ValidationError(std::string(op) + ": grid dim on axis " +
                            axis_names[a] + " (" +
                            std::to_string(g.grid_dims[a]) + ") is odd");
    }
  }
}

}  // namespace

TokenGrid pixel_shuffle_3d(const TokenGrid& g) {
  g.validate();
  check_even(g, "pixel_shuffle_3d");
  TokenGrid out;
  for (int a = 0; a < 3; ++a) out.grid_dims[a] = g.grid_dims[a] / 2;
  out.token_dim = g.token_dim * 8;
  out.data.resize(out.n_tokens() * out.token_dim);
  const size_t d = g.token_dim;
  for (uint32_t Z = 0; Z < out.grid_dims[2]; ++Z) {
    for (uint32_t Y = 0; Y < out.grid_dims[1]; ++Y) {
      for (uint32_t X = 0; X < out.grid_dims[0]; ++X) {
        float* dst = out.token(out.token_index(X, Y, Z));
        for (uint32_t o = 0; o < 8; ++o) {
          const uint32_t dx = o & 1, dy = (o >> 1) & 1, dz = o >> 2;
          const float* src =
              g.token(g.token_index(2 * X + dx, 2 * Y + dy, 2 * Z + dz));
          std::memcpy(dst + o * d, src, d * sizeof(float));
        }
      }
    }
  }
  return out;
}

TokenGrid pixel_unshuffle_3d(const TokenGrid& g) {
  g.validate();
  if (g.token_dim % 8 != 0) {
    throw ValidationError("pixel_unshuffle_3d: token_dim " +
                          std::to_string(g.token_dim) +
                          " is not divisible by 8");
  }
  TokenGrid out;
  for (int a = 0; a < 3; ++a) out.grid_dims[a] = g.grid_dims[a] * 2;
  out.token_dim = g.token_dim / 8;
  out.data.resize(out.n_tokens() * out.token_dim);
  const size_t d = out.token_dim;
  for (uint32_t Z = 0; Z < g.grid_dims[2]; ++Z) {
    for (uint32_t Y = 0; Y < g.grid_dims[1]; ++Y) {
      for (uint32_t X = 0; X < g.grid_dims[0]; ++X) {
        const float* src = g.token(g.token_index(X, Y, Z));
        for (uint32_t o = 0; o < 8; ++o) {
          const uint32_t dx = o & 1, dy = (o >> 1) & 1, dz = o >> 2;
          float* dst =
              out.token(out.token_index(2 * X + dx, 2 * Y + dy, 2 * Z + dz));
          std::memcpy(dst, src + o * d, d * sizeof(float));
        }
      }
    }
  }
  return out;
}

TokenGrid avg_pool_3d(const TokenGrid& g) {
  g.validate();
  check_even(g, "avg_pool_3d");
  TokenGrid out;
  for (int a = 0; a < 3; ++a) out.grid_dims[a] = g.grid_dims[a] / 2;
  out.token_dim = g.token_dim;
  out.data.resize(out.n_tokens() * out.token_dim);
  const size_t d = g.token_dim;
  std::vector<double> acc(d);
  for (uint32_t Z = 0; Z < out.grid_dims[2]; ++Z) {
    for (uint32_t Y = 0; Y < out.grid_dims[1]; ++Y) {
      for (uint32_t X = 0; X < out.grid_dims[0]; ++X) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (uint32_t o = 0; o < 8; ++o) {
          const uint32_t dx = o & 1, dy = (o >> 1) & 1, dz = o >> 2;
          const float* src =
              g.token(g.token_index(2 * X + dx, 2 * Y + dy, 2 * Z + dz));
          for (size_t j = 0; j < d; ++j) acc[j] += src[j];
        }
        float* dst = out.token(out.token_index(X, Y, Z));
        for (size_t j = 0; j < d; ++j) dst[j] = float(acc[j] / 8.0);
      }
    }
  }
  return out;
}

MaskSet sample_mask(size_t n_tokens, double ratio, uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw ValidationError("sample_mask: ratio must lie in [0, 1]");
  }
  const size_t k = size_t(std::llround(ratio * double(n_tokens)));
  std::vector<uint32_t> idx(n_tokens);
  for (size_t i = 0; i < n_tokens; ++i) idx[i] = uint32_t(i);
  Rng rng(seed);
  for (size_t i = 0; i < k; ++i) {
    const size_t j = i + size_t(rng.below(uint64_t(n_tokens - i)));
    std::swap(idx[i], idx[j]);
  }
  MaskSet m;
  m.n_tokens = n_tokens;
  m.masked.assign(idx.begin(), idx.begin() + std::ptrdiff_t(k));
  std::sort(m.masked.begin(), m.masked.end());
  return m;
}

namespace {

constexpr char kTkgMagic[4] = {'T', 'K', 'G', '1'};

}  // namespace

void write_tkg(const TokenGrid& g, const std::string& path) {
  g.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(kTkgMagic, 4);
  auto put_u32 = [&](uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = char((v >> (8 * i)) & 0xff);
    out.write(b, 4);
  };
  for (int a = 0; a < 3; ++a) put_u32(g.grid_dims[a]);
  put_u32(g.token_dim);
  for (float x : g.data) put_u32(std::bit_cast<uint32_t>(x));
  if (!out) throw IoError("short write to '" + path + "'");
}

TokenGrid read_tkg(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 4 || std::memcmp(buf.data(), kTkgMagic, 4) != 0) {
    throw IoError("bad magic in '" + path + "'");
  }
  if (buf.size() < 4 + 16) {
    throw IoError("truncated payload in '" + path + "': header ends early");
  }
  size_t pos = 4;
  auto get_u32 = [&]() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  };
  TokenGrid g;
  for (int a = 0; a < 3; ++a) g.grid_dims[a] = get_u32();
  g.token_dim = get_u32();
  const size_t expected = g.n_tokens() * g.token_dim;
  if ((buf.size() - pos) != expected * 4) {
    throw IoError("payload mismatch in '" + path + "': expected " +
                  std::to_string(expected) + " f32 entries");
  }
  g.data.resize(expected);
  for (size_t i = 0; i < expected; ++i) {
    g.data[i] = std::bit_cast<float>(get_u32());
  }
  g.validate();
  return g;
}

void write_mask_json(const MaskSet& m, const std::string& path) {
  m.validate();
  nlohmann::json j;
  j["n_tokens"] = m.n_tokens;
  j["masked"] = m.masked;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump() << "\n";
}

MaskSet read_mask_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad mask file '" + path + "': " + e.what());
  }
  MaskSet m;
  m.n_tokens = j.at("n_tokens").get<size_t>();
  m.masked = j.at("masked").get<std::vector<uint32_t>>();
  m.validate();
  return m;
}

}  // namespace argus
