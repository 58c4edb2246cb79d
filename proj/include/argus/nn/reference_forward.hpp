#pragma once

// Scalar-generic forward evaluation of the two pretraining losses, mirroring
// the tape ops loop-for-loop. Instantiated at double it reproduces the graph
// losses bit-exactly (tested); instantiated at long double it serves as the
// low-noise reference for finite-difference gradient checks.

#include <cmath>
#include <vector>

#include "argus/nn/params.hpp"
#include "argus/token_grid.hpp"

namespace argus::nn::ref {

template <typename T>
struct MatT {
  size_t rows = 0, cols = 0;
  std::vector<T> d;
  MatT() = default;
  MatT(size_t r, size_t c) : rows(r), cols(c), d(r * c, T(0)) {}
  T& at(size_t i, size_t j) { return d[i * cols + j]; }
  T at(size_t i, size_t j) const { return d[i * cols + j]; }
};

template <typename T>
MatT<T> from_tensor(const Tensor& t) {
  MatT<T> m;
  if (t.shape.size() == 1) {
    m.rows = 1;
    m.cols = t.shape[0];
  } else {
    m.rows = t.shape[0];
    m.cols = t.shape[1];
  }
  m.d.assign(t.data.begin(), t.data.end());
  return m;
}

template <typename T>
MatT<T> matmul(const MatT<T>& a, const MatT<T>& b) {
  MatT<T> out(a.rows, b.cols);
  for (size_t i = 0; i < a.rows; ++i) {
    for (size_t k = 0; k < a.cols; ++k) {
      const T aik = a.at(i, k);
      if (aik == T(0)) continue;
      for (size_t j = 0; j < b.cols; ++j) out.at(i, j) += aik * b.at(k, j);
    }
  }
  return out;
}

template <typename T>
MatT<T> matmul_nt(const MatT<T>& a, const MatT<T>& b) {
  MatT<T> out(a.rows, b.rows);
  for (size_t i = 0; i < a.rows; ++i) {
    for (size_t j = 0; j < b.rows; ++j) {
      T s(0);
      for (size_t k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(j, k);
      out.at(i, j) = s;
    }
  }
  return out;
}

template <typename T>
MatT<T> add(const MatT<T>& a, const MatT<T>& b) {
  MatT<T> out(a.rows, a.cols);
  for (size_t i = 0; i < a.d.size(); ++i) out.d[i] = a.d[i] + b.d[i];
  return out;
}

template <typename T>
MatT<T> add_rowvec(const MatT<T>& a, const MatT<T>& v) {
  MatT<T> out(a.rows, a.cols);
  for (size_t i = 0; i < a.rows; ++i) {
    for (size_t j = 0; j < a.cols; ++j) out.at(i, j) = a.at(i, j) + v.at(0, j);
  }
  return out;
}

template <typename T>
MatT<T> scale(const MatT<T>& a, T c) {
  MatT<T> out(a.rows, a.cols);
  for (size_t i = 0; i < a.d.size(); ++i) out.d[i] = a.d[i] * c;
  return out;
}

template <typename T>
MatT<T> layer_norm(const MatT<T>& x, const MatT<T>& gamma, const MatT<T>& beta,
                   T eps) {
  MatT<T> out(x.rows, x.cols);
  const size_t n = x.cols;
  for (size_t i = 0; i < x.rows; ++i) {
    T mean(0);
    for (size_t j = 0; j < n; ++j) mean += x.at(i, j);
    mean /= T(n);
    T var(0);
    for (size_t j = 0; j < n; ++j) {
      const T d = x.at(i, j) - mean;
      var += d * d;
    }
    var /= T(n);
    const T is = T(1) / std::sqrt(var + eps);
    for (size_t j = 0; j < n; ++j) {
      out.at(i, j) = gamma.at(0, j) * ((x.at(i, j) - mean) * is) + beta.at(0, j);
    }
  }
  return out;
}

template <typename T>
MatT<T> gelu(const MatT<T>& x) {
  const T inv_sqrt2 = T(0.70710678118654752440L);
  MatT<T> out(x.rows, x.cols);
  for (size_t i = 0; i < x.d.size(); ++i) {
    out.d[i] = T(0.5) * x.d[i] * (T(1) + std::erf(x.d[i] * inv_sqrt2));
  }
  return out;
}

template <typename T>
MatT<T> softmax_rows(const MatT<T>& x) {
  MatT<T> out(x.rows, x.cols);
  for (size_t i = 0; i < x.rows; ++i) {
    T mx = x.at(i, 0);
    for (size_t j = 1; j < x.cols; ++j) mx = std::max(mx, x.at(i, j));
    T sum(0);
    for (size_t j = 0; j < x.cols; ++j) {
      const T e = std::exp(x.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (size_t j = 0; j < x.cols; ++j) out.at(i, j) /= sum;
  }
  return out;
}

template <typename T>
MatT<T> slice_cols(const MatT<T>& x, size_t from, size_t to) {
  MatT<T> out(x.rows, to - from);
  for (size_t i = 0; i < x.rows; ++i) {
    for (size_t j = from; j < to; ++j) out.at(i, j - from) = x.at(i, j);
  }
  return out;
}

template <typename T>
MatT<T> concat_cols(const std::vector<MatT<T>>& xs) {
  size_t cols = 0;
  for (const auto& x : xs) cols += x.cols;
  MatT<T> out(xs[0].rows, cols);
  size_t off = 0;
  for (const auto& x : xs) {
    for (size_t i = 0; i < x.rows; ++i) {
      for (size_t j = 0; j < x.cols; ++j) out.at(i, off + j) = x.at(i, j);
    }
    off += x.cols;
  }
  return out;
}

// ---- model composition, mirroring model.cpp ----

template <typename T>
struct RefParams {
  const ParameterSet* ps;
  MatT<T> operator()(const std::string& name) const {
    return from_tensor<T>(ps->at(name));
  }
};

template <typename T>
MatT<T> attention_block(const RefParams<T>& P, const EncoderConfig& cfg,
                        const std::string& prefix, const MatT<T>& x) {
  const size_t d = cfg.d_model, dh = cfg.d_head();
  const MatT<T> proj = add_rowvec(matmul(x, P(prefix + ".attn.wqkv")),
                                  P(prefix + ".attn.bqkv"));
  const MatT<T> q = slice_cols(proj, 0, d);
  const MatT<T> k = slice_cols(proj, d, 2 * d);
  const MatT<T> v = slice_cols(proj, 2 * d, 3 * d);
  std::vector<MatT<T>> heads;
  const T s = T(1) / std::sqrt(T(dh));
  for (size_t h = 0; h < cfg.n_heads; ++h) {
    const MatT<T> qh = slice_cols(q, h * dh, (h + 1) * dh);
    const MatT<T> kh = slice_cols(k, h * dh, (h + 1) * dh);
    const MatT<T> vh = slice_cols(v, h * dh, (h + 1) * dh);
    heads.push_back(matmul(softmax_rows(scale(matmul_nt(qh, kh), s)), vh));
  }
  return add_rowvec(matmul(concat_cols(heads), P(prefix + ".attn.wo")),
                    P(prefix + ".attn.bo"));
}

template <typename T>
MatT<T> transformer_block(const RefParams<T>& P, const EncoderConfig& cfg,
                          const std::string& prefix, const MatT<T>& x,
                          T ln_eps) {
  const MatT<T> ln1 =
      layer_norm(x, P(prefix + ".ln1.g"), P(prefix + ".ln1.b"), ln_eps);
  const MatT<T> x1 = add(x, attention_block(P, cfg, prefix, ln1));
  const MatT<T> ln2 =
      layer_norm(x1, P(prefix + ".ln2.g"), P(prefix + ".ln2.b"), ln_eps);
  const MatT<T> h = gelu(add_rowvec(matmul(ln2, P(prefix + ".mlp.w1")),
                                    P(prefix + ".mlp.b1")));
  return add(x1, add_rowvec(matmul(h, P(prefix + ".mlp.w2")),
                            P(prefix + ".mlp.b2")));
}

template <typename T>
MatT<T> encode_tokens(const ParameterSet& params, const TokenGrid& tokens,
                      const std::vector<uint32_t>& visible) {
  const RefParams<T> P{&params};
  const auto& cfg = params.cfg;
  const T ln_eps = T(1e-8);

  MatT<T> x(visible.size(), tokens.token_dim);
  for (size_t r = 0; r < visible.size(); ++r) {
    const float* src = tokens.token(visible[r]);
    for (size_t j = 0; j < tokens.token_dim; ++j) x.at(r, j) = T(src[j]);
  }
  const auto pos_table = pos_embed_3d(cfg.grid_dims, cfg.d_model);
  MatT<T> pos(visible.size(), cfg.d_model);
  for (size_t r = 0; r < visible.size(); ++r) {
    const double* src = pos_table.data() + size_t(visible[r]) * cfg.d_model;
    for (size_t j = 0; j < cfg.d_model; ++j) pos.at(r, j) = T(src[j]);
  }
  MatT<T> h = add(add_rowvec(matmul(x, P("patch_embed.w")), P("patch_embed.b")),
                  pos);
  for (size_t i = 0; i < cfg.n_layers; ++i) {
    h = transformer_block(P, cfg, "enc." + std::to_string(i), h, ln_eps);
  }
  return layer_norm(h, P("enc.ln_f.g"), P("enc.ln_f.b"), ln_eps);
}

template <typename T>
T mae_loss(const ParameterSet& params, const TokenGrid& inputs,
           const TokenGrid& targets, const MaskSet& mask) {
  const RefParams<T> P{&params};
  const auto& cfg = params.cfg;
  const std::vector<uint32_t> visible = mask.visible();
  const MatT<T> enc = encode_tokens<T>(params, inputs, visible);

  const size_t n = inputs.n_tokens();
  const auto pos_table = pos_embed_3d(cfg.grid_dims, cfg.d_model);
  MatT<T> pos_all(n, cfg.d_model);
  for (size_t t = 0; t < n; ++t) {
    for (size_t j = 0; j < cfg.d_model; ++j) {
      pos_all.at(t, j) = T(pos_table[t * cfg.d_model + j]);
    }
  }
  MatT<T> full = add_rowvec(pos_all, P("mae.mask_token"));
  for (size_t r = 0; r < visible.size(); ++r) {
    for (size_t j = 0; j < cfg.d_model; ++j) {
      full.at(visible[r], j) = enc.at(r, j);
    }
  }
  const MatT<T> dec =
      transformer_block(P, cfg, "mae.dec", full, T(1e-8));
  const MatT<T> recon =
      add_rowvec(matmul(dec, P("mae.head.w")), P("mae.head.b"));

  T sum(0);
  for (uint32_t t : mask.masked) {
    const float* target = targets.token(t);
    for (size_t j = 0; j < targets.token_dim; ++j) {
      const T diff = recon.at(t, j) - T(target[j]);
      sum += diff * diff;
    }
  }
  return sum / T(mask.masked.size() * targets.token_dim);
}

template <typename T>
T flip_loss(const ParameterSet& params,
            const std::vector<const TokenGrid*>& items,
            const std::vector<std::vector<double>>& text_embs,
            const std::vector<MaskSet>& masks, double tau) {
  const RefParams<T> P{&params};
  const auto& cfg = params.cfg;
  const size_t B = items.size();

  MatT<T> pooled(B, cfg.d_model);
  for (size_t b = 0; b < B; ++b) {
    const MatT<T> enc = encode_tokens<T>(params, *items[b], masks[b].visible());
    for (size_t j = 0; j < cfg.d_model; ++j) {
      T s(0);
      for (size_t i = 0; i < enc.rows; ++i) s += enc.at(i, j);
      pooled.at(b, j) = s / T(enc.rows);
    }
  }
  MatT<T> proj = add_rowvec(matmul(pooled, P("joint.w")), P("joint.b"));
  for (size_t b = 0; b < B; ++b) {
    T s(0);
    for (size_t j = 0; j < cfg.d_joint; ++j) s += proj.at(b, j) * proj.at(b, j);
    const T norm = std::sqrt(s);
    for (size_t j = 0; j < cfg.d_joint; ++j) proj.at(b, j) /= norm;
  }
  MatT<T> text(B, cfg.d_joint);
  for (size_t b = 0; b < B; ++b) {
    for (size_t j = 0; j < cfg.d_joint; ++j) text.at(b, j) = T(text_embs[b][j]);
  }
  const MatT<T> sims = scale(matmul_nt(proj, text), T(1) / T(tau));

  auto lse = [](const std::vector<T>& v) {
    T mx = v[0];
    for (const T& x : v) mx = std::max(mx, x);
    T sum(0);
    for (const T& x : v) sum += std::exp(x - mx);
    return mx + std::log(sum);
  };
  T loss(0);
  for (size_t i = 0; i < B; ++i) {
    std::vector<T> row(B), col(B);
    for (size_t j = 0; j < B; ++j) {
      row[j] = sims.at(i, j);
      col[j] = sims.at(j, i);
    }
    loss += lse(row) - sims.at(i, i);
    loss += lse(col) - sims.at(i, i);
  }
  return loss / T(2 * B);
}

}  // namespace argus::nn::ref
