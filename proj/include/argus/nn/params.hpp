#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "argus/nn/tensor.hpp"

namespace argus::nn {

enum class Compression { PixelShuffle, AvgPool, Perceiver };

Compression compression_from_string(const std::string& s);
const char* compression_to_string(Compression c);

/// Geometry and width of the miniature encoder stack.
struct EncoderConfig {
  size_t d_model = 24;
  size_t n_layers = 2;
  size_t n_heads = 2;
  double mlp_ratio = 4.0;
  std::array<uint32_t, 3> patch_dims{4, 4, 4};
  std::array<uint32_t, 3> grid_dims{2, 2, 2};
  size_t d_joint = 16;      // contrastive projection width
  size_t d_llm = 32;        // connector output width
  size_t n_queries = 64;    // resampler query count

  size_t token_dim() const {
    return size_t(patch_dims[0]) * patch_dims[1] * patch_dims[2];
  }
  size_t n_tokens() const {
    return size_t(grid_dims[0]) * grid_dims[1] * grid_dims[2];
  }
  size_t mlp_hidden() const;
  size_t d_head() const { return d_model / n_heads; }

  /// Connector input width for a given compression path.
  size_t connector_in(Compression c) const {
    return c == Compression::PixelShuffle ? 8 * d_model : d_model;
  }

  void validate() const;
};

struct Param {
  Tensor value;
  bool frozen = false;
};

/// Every named tensor of the model plus its config. Map iteration order is
/// the deterministic order used by the optimizer and the checkpoint writer.
struct ParameterSet {
  EncoderConfig cfg;
  Compression compression = Compression::PixelShuffle;
  int connector_depth = 2;
  uint64_t init_seed = 0;
  std::map<std::string, Param> tensors;

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool frozen(const std::string& name) const;
};

/// Seeded initialization: weights trunc-normal(0, 0.02) cut at 2 sigma,
/// biases and LN beta zero, LN gamma one. Bit-deterministic in (cfg, seed)
/// regardless of tensor iteration order. The fixed stage-1 alignment target
/// projection ships as the frozen tensor "align.target.w".
ParameterSet init_params(const EncoderConfig& cfg, uint64_t seed,
                         int connector_depth = 2,
                         Compression compression = Compression::PixelShuffle);

/// Expands stage tensor selectors into concrete names. A selector is either
/// an exact tensor name or one of the group aliases: encoder, mae, joint,
/// resampler, connector. Unresolvable selectors are an error.
std::set<std::string> resolve_tensor_set(const ParameterSet& params,
                                         const std::set<std::string>& selectors);

}  // namespace argus::nn
