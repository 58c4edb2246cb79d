#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace argus::nn {

/// Toy text tower: seeded hashing bag-of-words. Each lowercased whitespace
/// token hashes to a signed bucket; the histogram is L2-normalized. Returns
/// the zero vector only for texts with no tokens (which flip_loss rejects).
std::vector<double> embed_text(const std::string& text, size_t d_joint,
                               uint64_t seed);

}  // namespace argus::nn
