#include "argus/nn/params.hpp"

#include <cmath>

#include "argus/rng.hpp"

namespace argus::nn {

Compression compression_from_string(const std::string& s) {
  if (s == "pixel_shuffle") return Compression::PixelShuffle;
  if (s == "avg_pool") return Compression::AvgPool;
  if (s == "perceiver") return Compression::Perceiver;
  throw ValidationError("unknown compression '" + s +
                        "' (valid: pixel_shuffle, avg_pool, perceiver)");
}

const char* compression_to_string(Compression c) {
  switch (c) {
    case Compression::PixelShuffle: return "pixel_shuffle";
    case Compression::AvgPool: return "avg_pool";
    case Compression::Perceiver: return "perceiver";
  }
  return "?";
}

size_t EncoderConfig::mlp_hidden() const {
  return size_t(std::llround(mlp_ratio * double(d_model)));
}

void EncoderConfig::validate() const {
  if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_joint == 0 ||
      d_llm == 0 || n_queries == 0) {
    throw ValidationError("encoder config: all dims must be >= 1");
  }
  if (d_model % n_heads != 0) {
    throw ValidationError("encoder config: d_model must be divisible by n_heads");
  }
  if (d_model % 6 != 0) {
    throw ValidationError(
        "encoder config: d_model must be divisible by 6 for the positional embedding");
  }
  if (mlp_hidden() == 0) {
    throw ValidationError("encoder config: mlp hidden width must be >= 1");
  }
  for (int a = 0; a < 3; ++a) {
    if (patch_dims[a] == 0 || grid_dims[a] == 0) {
      throw ValidationError("encoder config: patch and grid dims must be >= 1");
    }
  }
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) {
    throw ValidationError("unknown tensor '" + name + "'");
  }
  return it->second.value;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) {
    throw ValidationError("unknown tensor '" + name + "'");
  }
  return it->second.value;
}

bool ParameterSet::frozen(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) {
    throw ValidationError("unknown tensor '" + name + "'");
  }
  return it->second.frozen;
}

namespace {

// Per-tensor seeds derive from (seed, name) so init order never matters.
Tensor weight_tensor(std::vector<size_t> shape, uint64_t seed,
                     const std::string& name, double sd = 0.02) {
  Tensor t(std::move(shape));
  Rng rng(derive_seed(seed, name));
  for (double& x : t.data) x = rng.trunc_normal(0.0, sd, 2.0);
  return t;
}

Tensor const_tensor(std::vector<size_t> shape, double value) {
  Tensor t(std::move(shape));
  for (double& x : t.data) x = value;
  return t;
}

void add_block(ParameterSet& ps, const std::string& prefix, size_t d,
               size_t hidden, uint64_t seed) {
  ps.tensors[prefix + ".ln1.g"] = {const_tensor({d}, 1.0), false};
  ps.tensors[prefix + ".ln1.b"] = {const_tensor({d}, 0.0), false};
  ps.tensors[prefix + ".attn.wqkv"] = {
      weight_tensor({d, 3 * d}, seed, prefix + ".attn.wqkv"), false};
  ps.tensors[prefix + ".attn.bqkv"] = {const_tensor({3 * d}, 0.0), false};
  ps.tensors[prefix + ".attn.wo"] = {
      weight_tensor({d, d}, seed, prefix + ".attn.wo"), false};
  ps.tensors[prefix + ".attn.bo"] = {const_tensor({d}, 0.0), false};
  ps.tensors[prefix + ".ln2.g"] = {const_tensor({d}, 1.0), false};
  ps.tensors[prefix + ".ln2.b"] = {const_tensor({d}, 0.0), false};
  ps.tensors[prefix + ".mlp.w1"] = {
      weight_tensor({d, hidden}, seed, prefix + ".mlp.w1"), false};
  ps.tensors[prefix + ".mlp.b1"] = {const_tensor({hidden}, 0.0), false};
  ps.tensors[prefix + ".mlp.w2"] = {
      weight_tensor({hidden, d}, seed, prefix + ".mlp.w2"), false};
  ps.tensors[prefix + ".mlp.b2"] = {const_tensor({d}, 0.0), false};
}

}  // namespace

ParameterSet init_params(const EncoderConfig& cfg, uint64_t seed,
                         int connector_depth, Compression compression) {
  cfg.validate();
  if (connector_depth != 1 && connector_depth != 2) {
    throw ValidationError("connector depth must be 1 or 2");
  }
  ParameterSet ps;
  ps.cfg = cfg;
  ps.compression = compression;
  ps.connector_depth = connector_depth;
  ps.init_seed = seed;

  const size_t d = cfg.d_model;
  const size_t td = cfg.token_dim();

  ps.tensors["patch_embed.w"] = {weight_tensor({td, d}, seed, "patch_embed.w"),
                                 false};
  ps.tensors["patch_embed.b"] = {const_tensor({d}, 0.0), false};
  for (size_t i = 0; i < cfg.n_layers; ++i) {
    add_block(ps, "enc." + std::to_string(i), d, cfg.mlp_hidden(), seed);
  }
  ps.tensors["enc.ln_f.g"] = {const_tensor({d}, 1.0), false};
  ps.tensors["enc.ln_f.b"] = {const_tensor({d}, 0.0), false};

  ps.tensors["mae.mask_token"] = {weight_tensor({d}, seed, "mae.mask_token"),
                                  false};
  add_block(ps, "mae.dec", d, cfg.mlp_hidden(), seed);
  ps.tensors["mae.head.w"] = {weight_tensor({d, td}, seed, "mae.head.w"),
                              false};
  ps.tensors["mae.head.b"] = {const_tensor({td}, 0.0), false};

  ps.tensors["joint.w"] = {weight_tensor({d, cfg.d_joint}, seed, "joint.w"),
                           false};
  ps.tensors["joint.b"] = {const_tensor({cfg.d_joint}, 0.0), false};

  ps.tensors["resampler.queries"] = {
      weight_tensor({cfg.n_queries, d}, seed, "resampler.queries"), false};
  for (const char* w : {"wq", "wk", "wv", "wo"}) {
    ps.tensors[std::string("resampler.") + w] = {
        weight_tensor({d, d}, seed, std::string("resampler.") + w), false};
  }
  for (const char* b : {"bq", "bk", "bv", "bo"}) {
    ps.tensors[std::string("resampler.") + b] = {const_tensor({d}, 0.0), false};
  }

  const size_t cin = cfg.connector_in(compression);
  ps.tensors["connector.w1"] = {
      weight_tensor({cin, cfg.d_llm}, seed, "connector.w1"), false};
  ps.tensors["connector.b1"] = {const_tensor({cfg.d_llm}, 0.0), false};
  if (connector_depth == 2) {
    ps.tensors["connector.w2"] = {
        weight_tensor({cfg.d_llm, cfg.d_llm}, seed, "connector.w2"), false};
    ps.tensors["connector.b2"] = {const_tensor({cfg.d_llm}, 0.0), false};
  }

  // Fixed random projection standing in for the frozen language model during
  // connector alignment. Never trainable.
  ps.tensors["align.target.w"] = {
      weight_tensor({cin, cfg.d_llm}, seed, "align.target.w", 0.2), true};

  return ps;
}

std::set<std::string> resolve_tensor_set(
    const ParameterSet& params, const std::set<std::string>& selectors) {
  std::set<std::string> out;
  for (const auto& sel : selectors) {
    if (params.tensors.count(sel)) {
      out.insert(sel);
      continue;
    }
    std::string prefix;
    if (sel == "encoder") {
      // patch embedding plus every enc.* tensor
      bool any = false;
      for (const auto& [name, p] : params.tensors) {
        if (name.rfind("enc.", 0) == 0 || name.rfind("patch_embed.", 0) == 0) {
          out.insert(name);
          any = true;
        }
      }
      if (!any) throw ValidationError("selector 'encoder' matched nothing");
      continue;
    } else if (sel == "mae" || sel == "joint" || sel == "resampler" ||
               sel == "connector") {
      prefix = sel + ".";
    } else {
      throw ValidationError("unknown tensor selector '" + sel + "'");
    }
    bool any = false;
    for (const auto& [name, p] : params.tensors) {
      if (name.rfind(prefix, 0) == 0) {
        out.insert(name);
        any = true;
      }
    }
    if (!any) {
      throw ValidationError("selector '" + sel + "' matched nothing");
    }
  }
  return out;
}

}  // namespace argus::nn
