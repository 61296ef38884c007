#pragma once

// UViT encoder: patch embedding, windowed multi-head self-attention, pre-norm
// residual blocks, stage transitions, and checkpoint adaptation.
//
// Every operation exists twice: a differentiable form over ad::Var (namespace
// uvit::graph) that the gradient checks drive, and a plain Tensor form that
// wraps it with constant inputs.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "uvit/arch.hpp"
#include "uvit/autodiff.hpp"
#include "uvit/tensor.hpp"
#include "uvit/token_grid.hpp"
#include "uvit/weights.hpp"
#include "uvit/window.hpp"

namespace uvit {

inline constexpr double kLayerNormEps = 1e-6;

struct BlockWeights {
  Tensor ln1_gamma, ln1_beta;
  Tensor qkv_weight, qkv_bias;    // [d, 3d], [3d]
  Tensor proj_weight, proj_bias;  // [d, d], [d]
  Tensor ln2_gamma, ln2_beta;
  Tensor ffn1_weight, ffn1_bias;  // [d, 4d], [4d]
  Tensor ffn2_weight, ffn2_bias;  // [4d, d], [d]
  int heads = 6;

  std::size_t hidden() const { return ln1_gamma.size(); }
  /// Throws ConfigError on any shape inconsistency, including d % heads.
  void validate() const;

  /// Block `index` of a weight set.
  static BlockWeights from(const WeightSet& ws, int index, int heads);
  /// Gammas one, everything else zero.
  static BlockWeights identity(std::size_t d, int heads = 6);
};

struct EmbedWeights {
  Tensor kernel;  // [p, p, 3, d]
  Tensor bias;    // [d]
  Tensor pos;     // [gh, gw, d]
  std::optional<Tensor> cls_token;
  std::optional<Tensor> cls_pos;

  static EmbedWeights from(const WeightSet& ws);
};

/// Post-softmax attention matrices of one layer: scores[window][head], each
/// [L, L] with L the window token count.
struct LayerAttention {
  WindowLayout layout;
  std::vector<std::vector<Tensor>> scores;
};

struct MhsaResult {
  TokenGrid tokens;
  LayerAttention attention;
};

/// Throws DimensionError unless p divides both image extents.
TokenGrid patch_embed(const Tensor& image, const EmbedWeights& ew, int patch);

/// Bilinearly resamples the spatial axes of a [k, k, c_in, c_out] kernel.
Tensor adapt_patch_kernel(const Tensor& kernel, std::size_t target = 8);
/// Bilinearly resamples a [g_h, g_w, d] position table.
Tensor adapt_pos_embedding(const Tensor& pos, std::size_t th, std::size_t tw);

MhsaResult mhsa(const TokenGrid& tokens, const BlockWeights& w, const WindowLayout& layout);
TokenGrid encoder_block(const TokenGrid& tokens, const BlockWeights& w, const WindowLayout& layout);

struct FeatureOutput {
  /// Dense mode: the final grid, or one grid per stage under MF.
  std::vector<TokenGrid> features;
  /// Image stride of each feature grid.
  std::vector<int> strides;
  /// Classification mode: num_classes logits.
  std::optional<Tensor> logits;
  /// Filled when requested, one entry per block.
  std::vector<LayerAttention> attention;
};

struct ForwardOptions {
  bool record_attention = false;
};

/// Throws ConfigError when weights do not match the config (names or
/// shapes) and DimensionError when the image does not fit it.
FeatureOutput forward(const ArchConfig& cfg, const WeightSet& weights, const Tensor& image,
                      const ForwardOptions& options = {});

/// Converts a checkpoint to `target`: resamples the patch kernel when patch
/// sizes differ, resamples the position table to the target grid, drops the
/// class token and head when the target is dense. Tensors the target needs
/// that the source lacks are an error.
WeightSet adapt_checkpoint(const WeightSet& source, const ArchConfig& target);

namespace graph {

using ad::Var;

struct BlockParams {
  Var ln1_gamma, ln1_beta, qkv_weight, qkv_bias, proj_weight, proj_bias;
  Var ln2_gamma, ln2_beta, ffn1_weight, ffn1_bias, ffn2_weight, ffn2_bias;
  int heads = 6;

  static BlockParams constants(const BlockWeights& w);
};

/// tokens: [N, d] with N = layout.token_count(). Appends the score matrices
/// to `record` when given.
Var mhsa(const Var& tokens, const BlockParams& p, const WindowLayout& layout,
         LayerAttention* record = nullptr);
Var encoder_block(const Var& tokens, const BlockParams& p, const WindowLayout& layout,
                  LayerAttention* record = nullptr);

/// image [H, W, 3] and kernel [p, p, 3, d] -> tokens [(H/p)*(W/p), d]
/// (position embedding not added).
Var patch_embed(const Var& image, const Var& kernel, const Var& bias, int patch);

/// Looks up a parameter by name.
using ParamLookup = std::function<Var(const std::string&)>;

struct GraphOutput {
  std::vector<Var> features;  // [h*w, d] per tap
  std::vector<std::size_t> grid;  // tap grid extent (square)
  std::vector<int> strides;
  std::optional<Var> logits;
  std::vector<LayerAttention> attention;
};

GraphOutput forward(const ArchConfig& cfg, const ParamLookup& params, const Var& image,
                    const ForwardOptions& options = {});

}  // namespace graph

}  // namespace uvit
