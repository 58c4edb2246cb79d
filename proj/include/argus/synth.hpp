#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "argus/curation.hpp"
#include "argus/volume.hpp"

namespace argus {

/// Recipe for the synthetic octant-lesion corpus that replaces gated real
/// datasets in desk-scale runs.
struct SynthSpec {
  size_t n_samples = 8;
  std::array<uint32_t, 3> dims{64, 64, 32};
  std::array<double, 3> spacing{1.25, 1.25, 5.0};
  uint32_t min_lesions = 1, max_lesions = 3;
  double background = 0.1, lesion_value = 0.9;
  uint32_t min_extent = 3, max_extent = 7;  // ellipsoid semi-axes, voxels
  std::vector<std::string> templates;        // "{region}" placeholder
  uint64_t seed = 0;

  void validate() const;
  static std::vector<std::string> default_templates();
};

struct SynthSample {
  std::string id;
  Volume volume;
  std::string report;
  std::vector<std::string> regions;  // octant phrase per rendered lesion
};

/// One deterministic sample: constant background with K separated ellipsoidal
/// bright lesions, and a report naming each lesion's octant. K = 0 yields the
/// fixed no-findings sentence.
SynthSample synth_sample(const SynthSpec& spec, size_t index);

/// Octant phrase for a lesion center, "{upper|lower} {left|right}
/// {anterior|posterior}": x splits left/right, y anterior/posterior,
/// z lower/upper.
std::string octant_phrase(std::array<uint32_t, 3> dims,
                          std::array<double, 3> center);

/// Generates the corpus: volumes/<id>.ctvol plus corpus.jsonl of RawRecords
/// (source SYNTHETIC). Returns the records.
std::vector<RawRecord> synth_corpus(const SynthSpec& spec,
                                    const std::string& out_dir);

}  // namespace argus
