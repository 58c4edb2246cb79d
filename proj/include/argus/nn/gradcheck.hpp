#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "argus/nn/params.hpp"

namespace argus::nn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  // per-loss, per-tensor maxima, keys like "mae/patch_embed.w"
  std::map<std::string, double> per_tensor;
  size_t coordinates_checked = 0;
};

/// Central finite differences against the analytic gradients of mae_loss and
/// flip_loss on a seeded random instance of `cfg`. Every coordinate of every
/// participating tensor is probed, except tensors above 10^4 entries, which
/// get a seeded 10% sample. Relative error per coordinate is
/// |g_analytic - g_fd| / max(|g_fd|, 1e-8).
GradCheckReport grad_check(const EncoderConfig& cfg, uint64_t seed,
                           double eps = 1e-4);

/// The spec micro configuration: 8x8x8 volume, 4x4x4 patches, d_model 24,
/// 2 layers, 2 heads.
EncoderConfig gradcheck_config();

}  // namespace argus::nn
