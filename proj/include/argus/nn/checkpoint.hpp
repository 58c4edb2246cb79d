#pragma once

#include <string>
#include <vector>

#include "argus/nn/params.hpp"

namespace argus::nn {

/// Checkpoint layout: magic "AVT1"; little-endian u32 entry count; then per
/// entry: u32 name length, name bytes, u8 dtype (0 = f32, 1 = f64), u8
/// frozen flag, u32 rank, u32 dims[rank], payload. Model config travels as
/// the reserved f64 entry "__cfg__". f64 is the default payload so frozen
/// tensors survive round trips bit-exactly.
void save_checkpoint(const ParameterSet& params, const std::string& path,
                     bool f64_payload = true);
ParameterSet load_checkpoint(const std::string& path);

/// Names whose shape, flags, or payload differ between the two files.
std::vector<std::string> checkpoint_diff(const std::string& path_a,
                                         const std::string& path_b);

}  // namespace argus::nn
