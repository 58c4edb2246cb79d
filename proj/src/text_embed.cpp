#include "argus/nn/text_embed.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

#include "argus/rng.hpp"

namespace argus::nn {

std::vector<double> embed_text(const std::string& text, size_t d_joint,
                               uint64_t seed) {
  std::vector<double> acc(d_joint, 0.0);
  std::istringstream iss(text);
  std::string tok;
  bool any = false;
  while (iss >> tok) {
    for (char& c : tok) c = char(std::tolower(uint8_t(c)));
    const uint64_t h = splitmix64(fnv1a64(tok) ^ splitmix64(seed));
    const size_t bucket = size_t(h % d_joint);
    const double sign = (h >> 63) ? 1.0 : -1.0;
    acc[bucket] += sign;
    any = true;
  }
  if (!any) return acc;
  double norm = 0.0;
  for (double x : acc) norm += x * x;
  if (norm == 0.0) {
    // opposing tokens can cancel; nudge the bucket of the first token so the
    // embedding stays usable
    acc[0] = 1.0;
    return acc;
  }
  norm = std::sqrt(norm);
  for (double& x : acc) x /= norm;
  return acc;
}

}  // namespace argus::nn
