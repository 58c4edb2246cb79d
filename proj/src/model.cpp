#include "argus/nn/model.hpp"

#include <cmath>

#include "argus/rng.hpp"

namespace argus::nn {

namespace {

int param(Graph& g, const ParameterSet& ps, const std::string& name) {
  return g.param_leaf(name, ps.at(name).as_mat());
}

Mat grid_rows(const TokenGrid& tokens, const std::vector<uint32_t>& rows) {
  Mat m(rows.size(), tokens.token_dim);
  for (size_t k = 0; k < rows.size(); ++k) {
    const float* src = tokens.token(rows[k]);
    for (size_t j = 0; j < tokens.token_dim; ++j) m.at(k, j) = src[j];
  }
  return m;
}

Mat pos_rows(const ParameterSet& ps, const std::vector<uint32_t>& rows) {
  const auto table = pos_embed_3d(ps.cfg.grid_dims, ps.cfg.d_model);
  Mat m(rows.size(), ps.cfg.d_model);
  for (size_t k = 0; k < rows.size(); ++k) {
    const double* src = table.data() + size_t(rows[k]) * ps.cfg.d_model;
    for (size_t j = 0; j < ps.cfg.d_model; ++j) m.at(k, j) = src[j];
  }
  return m;
}

std::vector<uint32_t> all_indices(size_t n) {
  std::vector<uint32_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = uint32_t(i);
  return idx;
}

// Multi-head attention over an already-normalized input: x provides queries,
// kv provides keys and values. Returns the projected output (no residual).
int attention(Graph& g, const ParameterSet& ps, const std::string& prefix,
              int q_in, int kv_in, std::vector<int>* softmax_ids) {
  const auto& cfg = ps.cfg;
  const size_t d = cfg.d_model, dh = cfg.d_head();
  int qkv_q, qkv_k, qkv_v;
  if (ps.tensors.count(prefix + ".attn.wqkv")) {
    const int wqkv = param(g, ps, prefix + ".attn.wqkv");
    const int bqkv = param(g, ps, prefix + ".attn.bqkv");
    const int q_proj = g.add_rowvec(g.matmul(q_in, wqkv), bqkv);
    const int kv_proj = q_in == kv_in
                            ? q_proj
                            : g.add_rowvec(g.matmul(kv_in, wqkv), bqkv);
    qkv_q = g.slice_cols(q_proj, 0, d);
    qkv_k = g.slice_cols(kv_proj, d, 2 * d);
    qkv_v = g.slice_cols(kv_proj, 2 * d, 3 * d);
  } else {
    // separate projections (resampler layout)
    qkv_q = g.add_rowvec(g.matmul(q_in, param(g, ps, prefix + ".wq")),
                         param(g, ps, prefix + ".bq"));
    qkv_k = g.add_rowvec(g.matmul(kv_in, param(g, ps, prefix + ".wk")),
                         param(g, ps, prefix + ".bk"));
    qkv_v = g.add_rowvec(g.matmul(kv_in, param(g, ps, prefix + ".wv")),
                         param(g, ps, prefix + ".bv"));
  }
  std::vector<int> heads;
  heads.reserve(cfg.n_heads);
  const double scale = 1.0 / std::sqrt(double(dh));
  for (size_t h = 0; h < cfg.n_heads; ++h) {
    const int qh = g.slice_cols(qkv_q, h * dh, (h + 1) * dh);
    const int kh = g.slice_cols(qkv_k, h * dh, (h + 1) * dh);
    const int vh = g.slice_cols(qkv_v, h * dh, (h + 1) * dh);
    const int scores = g.scale(g.matmul_nt(qh, kh), scale);
    const int probs = g.softmax_rows(scores);
    if (softmax_ids) softmax_ids->push_back(probs);
    heads.push_back(g.matmul(probs, vh));
  }
  const int merged = g.concat_cols(heads);
  const std::string wo =
      ps.tensors.count(prefix + ".attn.wo") ? prefix + ".attn.wo" : prefix + ".wo";
  const std::string bo =
      ps.tensors.count(prefix + ".attn.bo") ? prefix + ".attn.bo" : prefix + ".bo";
  return g.add_rowvec(g.matmul(merged, param(g, ps, wo)), param(g, ps, bo));
}

// One pre-LN transformer block: x + Attn(LN1(x)), then x + MLP(LN2(x)).
int block(Graph& g, const ParameterSet& ps, const std::string& prefix, int x,
          std::vector<int>* softmax_ids) {
  const int ln1 = g.layer_norm(x, param(g, ps, prefix + ".ln1.g"),
                               param(g, ps, prefix + ".ln1.b"));
  const int attn = attention(g, ps, prefix, ln1, ln1, softmax_ids);
  const int x1 = g.add(x, attn);
  const int ln2 = g.layer_norm(x1, param(g, ps, prefix + ".ln2.g"),
                               param(g, ps, prefix + ".ln2.b"));
  const int h = g.gelu(g.add_rowvec(g.matmul(ln2, param(g, ps, prefix + ".mlp.w1")),
                                    param(g, ps, prefix + ".mlp.b1")));
  const int m = g.add_rowvec(g.matmul(h, param(g, ps, prefix + ".mlp.w2")),
                             param(g, ps, prefix + ".mlp.b2"));
  return g.add(x1, m);
}

}  // namespace

EncodeTrace build_encode(Graph& g, const ParameterSet& params,
                         const TokenGrid& tokens,
                         const std::vector<uint32_t>& visible) {
  const auto& cfg = params.cfg;
  if (tokens.token_dim != cfg.token_dim()) {
    throw ValidationError("encode: token_dim " + std::to_string(tokens.token_dim) +
                          " does not match patch_embed input " +
                          std::to_string(cfg.token_dim()));
  }
  if (tokens.n_tokens() != cfg.n_tokens()) {
    throw ValidationError("encode: grid size does not match config grid_dims");
  }
  if (visible.empty()) throw ValidationError("encode: empty visible set");

  EncodeTrace trace;
  const int x_raw = g.leaf(grid_rows(tokens, visible));
  const int embedded =
      g.add_rowvec(g.matmul(x_raw, param(g, params, "patch_embed.w")),
                   param(g, params, "patch_embed.b"));
  const int pos = g.leaf(pos_rows(params, visible));
  int h = g.add(embedded, pos);
  auto check_finite = [&g](int node, const std::string& where) {
    const Mat& m = g.value(node);
    for (double x : m.d) {
      if (!std::isfinite(x)) {
        throw ValidationError("encode: non-finite activation at " + where);
      }
    }
  };
  for (size_t i = 0; i < cfg.n_layers; ++i) {
    h = block(g, params, "enc." + std::to_string(i), h, &trace.attn_softmax);
    check_finite(h, "layer " + std::to_string(i));
  }
  trace.output = g.layer_norm(h, param(g, params, "enc.ln_f.g"),
                              param(g, params, "enc.ln_f.b"));
  check_finite(trace.output, "final layer norm");
  return trace;
}

MaeTrace build_mae(Graph& g, const ParameterSet& params,
                   const TokenGrid& inputs, const TokenGrid& targets,
                   const MaskSet& mask) {
  const auto& cfg = params.cfg;
  mask.validate();
  if (mask.n_tokens != inputs.n_tokens()) {
    throw ValidationError("mae: mask token count does not match grid");
  }
  if (targets.n_tokens() != inputs.n_tokens() ||
      targets.token_dim != inputs.token_dim) {
    throw ValidationError("mae: targets shape does not match inputs");
  }
  if (mask.masked.empty() || mask.masked.size() == mask.n_tokens) {
    throw ValidationError(
        "mae: mask ratio must leave both context and target non-empty");
  }

  MaeTrace trace;
  const std::vector<uint32_t> visible = mask.visible();
  trace.encoder = build_encode(g, params, inputs, visible);

  // Base sequence: every slot starts as mask_token + positional embedding;
  // encoder outputs overwrite the visible slots.
  const size_t n = inputs.n_tokens();
  const int pos_all = g.leaf(pos_rows(params, all_indices(n)));
  const int mask_tok = param(g, params, "mae.mask_token");
  const int base = g.add_rowvec(pos_all, mask_tok);
  const int full = g.scatter_rows(base, visible, trace.encoder.output);

  const int dec = block(g, params, "mae.dec", full, nullptr);
  trace.recon = g.add_rowvec(g.matmul(dec, param(g, params, "mae.head.w")),
                             param(g, params, "mae.head.b"));

  const int recon_masked = g.gather_rows(trace.recon, mask.masked);
  const int target_masked = g.leaf(grid_rows(targets, mask.masked));
  trace.loss = g.mse(recon_masked, target_masked);
  (void)cfg;
  return trace;
}

FlipTrace build_flip(Graph& g, const ParameterSet& params,
                     const std::vector<const TokenGrid*>& items,
                     const std::vector<std::vector<double>>& text_embs,
                     const std::vector<MaskSet>& masks, double tau) {
  if (items.size() < 2) throw ValidationError("flip: batch must hold B >= 2 items");
  if (text_embs.size() != items.size() || masks.size() != items.size()) {
    throw ValidationError("flip: batch size mismatch across inputs");
  }
  if (!(tau > 0.0)) throw ValidationError("flip: tau must be positive");
  const size_t d_joint = params.cfg.d_joint;

  FlipTrace trace;
  std::vector<int> pooled;
  pooled.reserve(items.size());
  for (size_t b = 0; b < items.size(); ++b) {
    EncodeTrace enc = build_encode(g, params, *items[b], masks[b].visible());
    pooled.push_back(g.mean_pool_rows(enc.output));
    trace.encoders.push_back(std::move(enc));
  }
  const int stacked = g.concat_rows(pooled);
  const int projected =
      g.add_rowvec(g.matmul(stacked, param(g, params, "joint.w")),
                   param(g, params, "joint.b"));
  trace.image_embeddings = g.l2_normalize_rows(projected);

  Mat text(items.size(), d_joint);
  for (size_t b = 0; b < items.size(); ++b) {
    if (text_embs[b].size() != d_joint) {
      throw ValidationError("flip: text embedding width must equal d_joint");
    }
    double norm = 0.0;
    for (size_t j = 0; j < d_joint; ++j) {
      if (!std::isfinite(text_embs[b][j])) {
        throw ValidationError("flip: non-finite text embedding");
      }
      text.at(b, j) = text_embs[b][j];
      norm += text_embs[b][j] * text_embs[b][j];
    }
    if (!(norm > 0.0)) {
      throw ValidationError("flip: zero-norm text embedding at item " +
                            std::to_string(b));
    }
  }
  const int text_leaf = g.leaf(std::move(text));
  const int sims = g.scale(g.matmul_nt(trace.image_embeddings, text_leaf),
                           1.0 / tau);
  trace.loss = g.cross_entropy_diag(sims);
  return trace;
}

int build_perceiver(Graph& g, const ParameterSet& params, int tokens) {
  if (g.value(tokens).rows == 0) {
    throw ValidationError("perceiver_resample: empty input sequence");
  }
  if (g.value(tokens).cols != params.cfg.d_model) {
    throw ValidationError("perceiver_resample: input dim must equal d_model");
  }
  const int queries = param(g, params, "resampler.queries");
  return attention(g, params, "resampler", queries, tokens, nullptr);
}

int build_connector(Graph& g, const ParameterSet& params, int tokens) {
  const size_t cin = params.cfg.connector_in(params.compression);
  if (g.value(tokens).cols != cin) {
    throw ValidationError("connector: input dim " +
                          std::to_string(g.value(tokens).cols) +
                          " does not match expected " + std::to_string(cin));
  }
  int h = g.add_rowvec(g.matmul(tokens, param(g, params, "connector.w1")),
                       param(g, params, "connector.b1"));
  if (params.connector_depth == 2) {
    h = g.add_rowvec(g.matmul(g.gelu(h), param(g, params, "connector.w2")),
                     param(g, params, "connector.b2"));
  }
  return h;
}

AlignTrace build_align(Graph& g, const ParameterSet& params,
                       const TokenGrid& tokens) {
  AlignTrace trace;
  trace.encoder = build_encode(g, params, tokens,
                               all_indices(tokens.n_tokens()));
  int compressed = -1;
  switch (params.compression) {
    case Compression::PixelShuffle:
      compressed = g.pixel_shuffle_rows(trace.encoder.output,
                                        params.cfg.grid_dims);
      break;
    case Compression::AvgPool:
      compressed = g.avg_pool_rows(trace.encoder.output, params.cfg.grid_dims);
      break;
    case Compression::Perceiver:
      compressed = build_perceiver(g, params, trace.encoder.output);
      break;
  }
  trace.connector_out = build_connector(g, params, compressed);
  const int target = g.matmul(g.detach(compressed),
                              param(g, params, "align.target.w"));
  trace.loss = g.mse(trace.connector_out, target);
  return trace;
}

MaeResult mae_loss_tokens(const TokenGrid& grid, const ParameterSet& params,
                          double ratio, uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ValidationError(
        "mae_loss: ratio must lie strictly inside (0, 1); the target and "
        "context must both be non-empty");
  }
  MaeResult result;
  result.mask = sample_mask(grid.n_tokens(), ratio, seed);
  Graph g;
  MaeTrace trace = build_mae(g, params, grid, grid, result.mask);
  result.loss = g.value(trace.loss).at(0, 0);
  result.reconstruction = g.value(trace.recon);
  return result;
}

MaeResult mae_loss(const Volume& v, const ParameterSet& params, double ratio,
                   uint64_t seed) {
  return mae_loss_tokens(patchify(v, params.cfg.patch_dims), params, ratio,
                         seed);
}

double flip_loss_tokens(const std::vector<TokenGrid>& grids,
                        const std::vector<std::vector<double>>& text_embs,
                        const ParameterSet& params, double ratio, double tau,
                        uint64_t seed) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw ValidationError("flip_loss: ratio must lie in [0, 1)");
  }
  std::vector<const TokenGrid*> items;
  std::vector<MaskSet> masks;
  for (size_t b = 0; b < grids.size(); ++b) {
    items.push_back(&grids[b]);
    masks.push_back(sample_mask(grids[b].n_tokens(), ratio,
                                derive_seed(seed, uint64_t(b))));
  }
  Graph g;
  FlipTrace trace = build_flip(g, params, items, text_embs, masks, tau);
  return g.value(trace.loss).at(0, 0);
}

double flip_loss(const std::vector<Volume>& volumes,
                 const std::vector<std::vector<double>>& text_embs,
                 const ParameterSet& params, double ratio, double tau,
                 uint64_t seed) {
  std::vector<TokenGrid> grids;
  grids.reserve(volumes.size());
  for (const auto& v : volumes) grids.push_back(patchify(v, params.cfg.patch_dims));
  return flip_loss_tokens(grids, text_embs, params, ratio, tau, seed);
}

double info_nce_symmetric(const Mat& image, const Mat& text, double tau) {
  if (!(tau > 0.0)) throw ValidationError("info_nce: tau must be positive");
  if (image.rows != text.rows || image.cols != text.cols || image.rows < 2) {
    throw ValidationError("info_nce: need matching [B, d] batches with B >= 2");
  }
  Graph g;
  const int img = g.l2_normalize_rows(g.leaf(image));
  const int sims = g.scale(g.matmul_nt(img, g.leaf(text)), 1.0 / tau);
  return g.value(g.cross_entropy_diag(sims)).at(0, 0);
}

Mat encode(const TokenGrid& tokens, const ParameterSet& params,
           const std::vector<uint32_t>& visible) {
  Graph g;
  EncodeTrace trace = build_encode(g, params, tokens, visible);
  return g.value(trace.output);
}

std::vector<double> joint_embedding(const TokenGrid& tokens,
                                    const ParameterSet& params) {
  Graph g;
  EncodeTrace trace =
      build_encode(g, params, tokens, all_indices(tokens.n_tokens()));
  const int pooled = g.mean_pool_rows(trace.output);
  const int projected =
      g.add_rowvec(g.matmul(pooled, param(g, params, "joint.w")),
                   param(g, params, "joint.b"));
  const int out = g.l2_normalize_rows(projected);
  const Mat& m = g.value(out);
  return std::vector<double>(m.d.begin(), m.d.end());
}

Mat perceiver_resample(const Mat& tokens, const ParameterSet& params) {
  Graph g;
  const int in = g.leaf(tokens);
  const int out = build_perceiver(g, params, in);
  return g.value(out);
}

Mat connector_forward(const Mat& tokens, const ParameterSet& params) {
  Graph g;
  const int in = g.leaf(tokens);
  const int out = build_connector(g, params, in);
  return g.value(out);
}

}  // namespace argus::nn
