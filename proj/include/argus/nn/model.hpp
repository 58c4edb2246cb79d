#pragma once

#include <cstdint>
#include <vector>

#include "argus/nn/graph.hpp"
#include "argus/nn/params.hpp"
#include "argus/token_grid.hpp"
#include "argus/volume.hpp"

namespace argus::nn {

/// Node ids a builder leaves behind for inspection (attention softmaxes per
/// layer, the final output).
struct EncodeTrace {
  int output = -1;                  // [n_visible, d_model]
  std::vector<int> attn_softmax;    // one per layer (per-head rows stacked)
};

/// Embeds the visible tokens (linear patch embedding + 3D sinusoidal
/// positional embedding), runs the pre-LN transformer stack, applies the
/// final LN. Token values enter as a [n_visible, token_dim] constant.
EncodeTrace build_encode(Graph& g, const ParameterSet& params,
                         const TokenGrid& tokens,
                         const std::vector<uint32_t>& visible);

struct MaeTrace {
  int loss = -1;
  int recon = -1;  // [n_tokens, token_dim]
  EncodeTrace encoder;
};

/// MAE forward: encode visible tokens, fill masked slots with the learned
/// mask token plus its positional embedding, run one decoder block, project
/// to voxels, and take the MSE over masked tokens only. `inputs` feeds the
/// encoder, `targets` defines the reconstruction labels; the two coincide in
/// ordinary use.
MaeTrace build_mae(Graph& g, const ParameterSet& params,
                   const TokenGrid& inputs, const TokenGrid& targets,
                   const MaskSet& mask);

struct FlipTrace {
  int loss = -1;
  int image_embeddings = -1;  // [B, d_joint], L2-normalized
  std::vector<EncodeTrace> encoders;
};

/// FLIP forward: per item, encode the mask-visible tokens, mean-pool,
/// project to the joint space and L2-normalize; similarity against the given
/// text embeddings scaled by 1/tau feeds the symmetric InfoNCE loss.
FlipTrace build_flip(Graph& g, const ParameterSet& params,
                     const std::vector<const TokenGrid*>& items,
                     const std::vector<std::vector<double>>& text_embs,
                     const std::vector<MaskSet>& masks, double tau);

/// Perceiver cross-attention: the learned queries attend over `tokens`
/// ([n, d_model]); output is [n_queries, d_model] for any n >= 1.
int build_perceiver(Graph& g, const ParameterSet& params, int tokens);

/// Connector MLP: depth 1 is affine, depth 2 is affine-GELU-affine, output
/// width d_llm.
int build_connector(Graph& g, const ParameterSet& params, int tokens);

/// Encode all tokens, compress per the parameter set's compression mode, and
/// regress the connector output onto the frozen random target projection of
/// the compressed tokens (the stage-1/2 training proxy).
struct AlignTrace {
  int loss = -1;
  int connector_out = -1;
  EncodeTrace encoder;
};
AlignTrace build_align(Graph& g, const ParameterSet& params,
                       const TokenGrid& tokens);

// ---- convenience entry points over volumes/grids ----

struct MaeResult {
  double loss = 0.0;
  Mat reconstruction;  // [n_tokens, token_dim]
  MaskSet mask;
};

/// Patchifies with the config patch dims and runs the MAE forward. ratio in
/// (0, 1) exclusive: an empty target or empty context is rejected.
MaeResult mae_loss(const Volume& v, const ParameterSet& params, double ratio,
                   uint64_t seed);
MaeResult mae_loss_tokens(const TokenGrid& grid, const ParameterSet& params,
                          double ratio, uint64_t seed);

/// FLIP loss over a batch of volumes and precomputed text embeddings.
/// Per-item masks derive from (seed, item index). B >= 2, tau > 0.
double flip_loss(const std::vector<Volume>& volumes,
                 const std::vector<std::vector<double>>& text_embs,
                 const ParameterSet& params, double ratio, double tau,
                 uint64_t seed);
double flip_loss_tokens(const std::vector<TokenGrid>& grids,
                        const std::vector<std::vector<double>>& text_embs,
                        const ParameterSet& params, double ratio, double tau,
                        uint64_t seed);

/// The similarity-to-loss core of FLIP, exposed for closed-form checks:
/// rows of `image` and `text` are embeddings; image rows are normalized
/// internally, text rows are used as given.
double info_nce_symmetric(const Mat& image, const Mat& text, double tau);

/// Plain forward of the encoder over the given visible set.
Mat encode(const TokenGrid& tokens, const ParameterSet& params,
           const std::vector<uint32_t>& visible);

/// Full-visibility pooled-and-projected joint embedding of a grid,
/// L2-normalized (used by retrieval evaluation).
std::vector<double> joint_embedding(const TokenGrid& tokens,
                                    const ParameterSet& params);

Mat perceiver_resample(const Mat& tokens, const ParameterSet& params);
Mat connector_forward(const Mat& tokens, const ParameterSet& params);

}  // namespace argus::nn
