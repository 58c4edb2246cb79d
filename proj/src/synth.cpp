#include "argus/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "argus/ctvol_io.hpp"
#include "argus/rng.hpp"

namespace argus {

void SynthSpec::validate() const {
  if (n_samples == 0) throw ValidationError("synth: n_samples must be >= 1");
  if (min_lesions > max_lesions) {
    throw ValidationError("synth: lesion count range is inverted");
  }
  if (min_extent == 0 || min_extent > max_extent) {
    throw ValidationError("synth: lesion extent range is invalid");
  }
  for (int a = 0; a < 3; ++a) {
    // a lesion needs its full extent plus a separation margin inside the grid
    if (dims[a] < 2 * max_extent + 2) {
      throw ValidationError(
          "synth: dims smaller than max lesion extent (axis " +
          std::to_string(a) + " needs at least " +
          std::to_string(2 * max_extent + 2) + " voxels)");
    }
    if (!(spacing[a] > 0.0)) {
      throw ValidationError("synth: spacing must be positive");
    }
  }
}

std::vector<std::string> SynthSpec::default_templates() {
  return {
      "A focal hyperdense lesion is seen in the {region} region of the lung "
      "parenchyma.",
      "There is a well defined rounded opacity within the {region} region.",
      "An area of increased attenuation is identified in the {region} region."};
}

std::string octant_phrase(std::array<uint32_t, 3> dims,
                          std::array<double, 3> center) {
  const char* vertical = center[2] >= dims[2] / 2.0 ? "upper" : "lower";
  const char* lateral = center[0] < dims[0] / 2.0 ? "left" : "right";
  const char* depth = center[1] < dims[1] / 2.0 ? "anterior" : "posterior";
  return std::string(vertical) + " " + lateral + " " + depth;
}

namespace {

struct Lesion {
  std::array<double, 3> center;
  std::array<double, 3> semi;
};

bool boxes_apart(const Lesion& a, const Lesion& b) {
  // bounding boxes must keep a one-voxel gap so components stay separate
  for (int ax = 0; ax < 3; ++ax) {
    const double lo_a = a.center[ax] - a.semi[ax];
    const double hi_a = a.center[ax] + a.semi[ax];
    const double lo_b = b.center[ax] - b.semi[ax];
    const double hi_b = b.center[ax] + b.semi[ax];
    if (hi_a + 2.0 < lo_b || hi_b + 2.0 < lo_a) return true;
  }
  return false;
}

std::string fill_template(const std::string& tpl, const std::string& region) {
  std::string out = tpl;
  const std::string key = "{region}";
  const auto at = out.find(key);
  if (at != std::string::npos) out.replace(at, key.size(), region);
  return out;
}

}  // namespace

SynthSample synth_sample(const SynthSpec& spec, size_t index) {
  spec.validate();
  const auto templates =
      spec.templates.empty() ? SynthSpec::default_templates() : spec.templates;

  SynthSample sample;
  char idbuf[32];
  std::snprintf(idbuf, sizeof(idbuf), "synth_%04zu", index);
  sample.id = idbuf;

  Rng rng(derive_seed(spec.seed, "sample." + std::to_string(index)));
  const uint32_t k =
      uint32_t(rng.range(int64_t(spec.min_lesions), int64_t(spec.max_lesions)));

  Volume& v = sample.volume;
  v.dims = spec.dims;
  v.spacing = spec.spacing;
  v.voxels.assign(v.size(), float(spec.background));

  std::vector<Lesion> lesions;
  for (uint32_t li = 0; li < k; ++li) {
    Lesion les{};
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      for (int a = 0; a < 3; ++a) {
        les.semi[a] =
            double(rng.range(int64_t(spec.min_extent), int64_t(spec.max_extent)));
        const double margin = les.semi[a] + 1.0;
        les.center[a] = rng.uniform(margin, double(spec.dims[a]) - margin);
      }
      placed = true;
      for (const auto& other : lesions) {
        if (!boxes_apart(les, other)) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) {
      throw ValidationError("synth: could not separate " + std::to_string(k) +
                            " lesions inside the volume; enlarge dims or "
                            "shrink extents");
    }
    lesions.push_back(les);

    for (uint32_t z = 0; z < v.dims[2]; ++z) {
      const double fz = (double(z) - les.center[2]) / les.semi[2];
      if (std::abs(fz) > 1.0) continue;
      for (uint32_t y = 0; y < v.dims[1]; ++y) {
        const double fy = (double(y) - les.center[1]) / les.semi[1];
        if (fz * fz + fy * fy > 1.0) continue;
        for (uint32_t x = 0; x < v.dims[0]; ++x) {
          const double fx = (double(x) - les.center[0]) / les.semi[0];
          if (fx * fx + fy * fy + fz * fz <= 1.0) {
            v.at(x, y, z) = float(spec.lesion_value);
          }
        }
      }
    }
    sample.regions.push_back(octant_phrase(spec.dims, les.center));
  }

  if (k == 0) {
    sample.report = "No focal lesions identified across all regions.";
  } else {
    std::string report;
    for (uint32_t li = 0; li < k; ++li) {
      if (li) report += ' ';
      const std::string& tpl =
          templates[size_t(rng.below(uint64_t(templates.size())))];
      report += fill_template(tpl, sample.regions[li]);
    }
    sample.report = report;
  }
  return sample;
}

std::vector<RawRecord> synth_corpus(const SynthSpec& spec,
                                    const std::string& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "volumes");

  std::vector<RawRecord> records;
  records.reserve(spec.n_samples);
  for (size_t i = 0; i < spec.n_samples; ++i) {
    SynthSample s = synth_sample(spec, i);
    write_ctvol(s.volume,
                (fs::path(out_dir) / "volumes" / (s.id + ".ctvol")).string());
    RawRecord r;
    r.id = s.id;
    r.source = "SYNTHETIC";
    r.report = s.report;
    records.push_back(std::move(r));
  }
  write_raw_jsonl(records, (fs::path(out_dir) / "corpus.jsonl").string());
  return records;
}

}  // namespace argus
