#include "uvit/model.hpp"

#include <cmath>
#include <numeric>

#include "uvit/errors.hpp"
#include "uvit/ops.hpp"

namespace uvit {

namespace {

void expect_dims(const Tensor& t, const Dims& dims, const char* what) {
  if (t.dims() != dims) {
    throw ConfigError(std::string(what) + " has shape " + t.shape_string() + ", expected " +
                      dims_string(dims));
  }
}

}  // namespace

void BlockWeights::validate() const {
  const std::size_t d = hidden();
  if (heads < 1 || d % static_cast<std::size_t>(heads) != 0) {
    throw ConfigError("hidden size " + std::to_string(d) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  expect_dims(ln1_gamma, {d}, "ln1.gamma");
  expect_dims(ln1_beta, {d}, "ln1.beta");
  expect_dims(qkv_weight, {d, 3 * d}, "qkv.weight");
  expect_dims(qkv_bias, {3 * d}, "qkv.bias");
  expect_dims(proj_weight, {d, d}, "proj.weight");
  expect_dims(proj_bias, {d}, "proj.bias");
  expect_dims(ln2_gamma, {d}, "ln2.gamma");
  expect_dims(ln2_beta, {d}, "ln2.beta");
  if (ffn1_weight.rank() != 2 || ffn1_weight.dim(0) != d || ffn1_weight.dim(1) != 4 * d) {
    throw ConfigError("ffn1.weight has shape " + ffn1_weight.shape_string() +
                      ", the FFN inner width must be 4d");
  }
  expect_dims(ffn1_bias, {4 * d}, "ffn1.bias");
  expect_dims(ffn2_weight, {4 * d, d}, "ffn2.weight");
  expect_dims(ffn2_bias, {d}, "ffn2.bias");
}

BlockWeights BlockWeights::from(const WeightSet& ws, int index, int heads) {
  const std::string p = "blocks." + std::to_string(index) + ".";
  BlockWeights w{ws.at(p + "ln1.gamma"),   ws.at(p + "ln1.beta"),    ws.at(p + "qkv.weight"),
                 ws.at(p + "qkv.bias"),    ws.at(p + "proj.weight"), ws.at(p + "proj.bias"),
                 ws.at(p + "ln2.gamma"),   ws.at(p + "ln2.beta"),    ws.at(p + "ffn1.weight"),
                 ws.at(p + "ffn1.bias"),   ws.at(p + "ffn2.weight"), ws.at(p + "ffn2.bias"),
                 heads};
  w.validate();
  return w;
}

BlockWeights BlockWeights::identity(std::size_t d, int heads) {
  return BlockWeights{Tensor({d}, 1.0),     Tensor({d}),         Tensor({d, 3 * d}),
                      Tensor({3 * d}),      Tensor({d, d}),      Tensor({d}),
                      Tensor({d}, 1.0),     Tensor({d}),         Tensor({d, 4 * d}),
                      Tensor({4 * d}),      Tensor({4 * d, d}),  Tensor({d}),
                      heads};
}

EmbedWeights EmbedWeights::from(const WeightSet& ws) {
  EmbedWeights e{ws.at("embed.kernel"), ws.at("embed.bias"), ws.at("embed.pos"), std::nullopt,
                 std::nullopt};
  if (ws.contains("embed.cls_token")) e.cls_token = ws.at("embed.cls_token");
  if (ws.contains("embed.cls_pos")) e.cls_pos = ws.at("embed.cls_pos");
  return e;
}

// ---------------------------------------------------------------------------
// Differentiable graph

namespace graph {

BlockParams BlockParams::constants(const BlockWeights& w) {
  w.validate();
  auto c = [](const Tensor& t) { return Var::constant(t); };
  return BlockParams{c(w.ln1_gamma),  c(w.ln1_beta),  c(w.qkv_weight), c(w.qkv_bias),
                     c(w.proj_weight), c(w.proj_bias), c(w.ln2_gamma),  c(w.ln2_beta),
                     c(w.ffn1_weight), c(w.ffn1_bias), c(w.ffn2_weight), c(w.ffn2_bias),
                     w.heads};
}

Var mhsa(const Var& tokens, const BlockParams& p, const WindowLayout& layout, LayerAttention* record) {
  layout.validate();
  const Tensor& x = tokens.value();
  if (x.rank() != 2 || x.dim(0) != layout.token_count()) {
    throw DimensionError("mhsa: tokens " + x.shape_string() + " do not match a " +
                         std::to_string(layout.grid_h) + "x" + std::to_string(layout.grid_w) + " layout");
  }
  const std::size_t d = x.dim(1);
  const auto heads = static_cast<std::size_t>(p.heads);
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("mhsa: hidden size " + std::to_string(d) + " is not divisible by " +
                      std::to_string(p.heads) + " heads");
  }
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const Var qkv = ad::add_row_vector(ad::matmul(tokens, p.qkv_weight), p.qkv_bias);
  const std::size_t windows = layout.window_count();
  if (record) {
    record->layout = layout;
    record->scores.assign(windows, {});
  }

  std::vector<Var> window_out;
  window_out.reserve(windows);
  std::vector<std::size_t> order;
  order.reserve(layout.token_count());
  for (std::size_t w = 0; w < windows; ++w) {
    const auto idx = layout.token_indices(w);
    order.insert(order.end(), idx.begin(), idx.end());
    const Var part = windows == 1 ? qkv : ad::gather_rows(qkv, idx);
    std::vector<Var> head_out;
    head_out.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      const Var q = ad::slice_cols(part, h * dh, dh);
      const Var k = ad::slice_cols(part, d + h * dh, dh);
      const Var v = ad::slice_cols(part, 2 * d + h * dh, dh);
      const Var s = ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose(k)), scale));
      if (record) record->scores[w].push_back(s.value());
      head_out.push_back(ad::matmul(s, v));
    }
    window_out.push_back(heads == 1 ? head_out.front() : ad::concat_cols(head_out));
  }

  Var merged = windows == 1 ? window_out.front() : ad::concat_rows(window_out);
  if (windows > 1) {
    // merged row r holds token order[r]; invert to restore grid order.
    std::vector<std::size_t> inverse(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) inverse[order[r]] = r;
    merged = ad::gather_rows(merged, inverse);
  }
  return ad::add_row_vector(ad::matmul(merged, p.proj_weight), p.proj_bias);
}

Var encoder_block(const Var& tokens, const BlockParams& p, const WindowLayout& layout,
                  LayerAttention* record) {
  const Var h1 = ad::layernorm(tokens, p.ln1_gamma, p.ln1_beta, kLayerNormEps);
  const Var x1 = ad::add(tokens, mhsa(h1, p, layout, record));
  const Var h2 = ad::layernorm(x1, p.ln2_gamma, p.ln2_beta, kLayerNormEps);
  const Var inner = ad::gelu(ad::add_row_vector(ad::matmul(h2, p.ffn1_weight), p.ffn1_bias));
  return ad::add(x1, ad::add_row_vector(ad::matmul(inner, p.ffn2_weight), p.ffn2_bias));
}

Var patch_embed(const Var& image, const Var& kernel, const Var& bias, int patch) {
  const Tensor& img = image.value();
  if (img.rank() != 3 || img.dim(2) != 3) {
    throw DimensionError("patch_embed: image must be [H, W, 3], got " + img.shape_string());
  }
  if (patch < 1) throw DimensionError("patch_embed: patch size must be positive");
  const auto p = static_cast<std::size_t>(patch);
  const std::size_t H = img.dim(0), W = img.dim(1);
  if (H % p != 0 || W % p != 0) {
    throw DimensionError("patch_embed: image " + img.shape_string() + " is not divisible by patch size " +
                         std::to_string(p));
  }
  const Tensor& k = kernel.value();
  if (k.rank() != 4 || k.dim(0) != p || k.dim(1) != p || k.dim(2) != 3) {
    throw DimensionError("patch_embed: kernel " + k.shape_string() + " does not match patch size " +
                         std::to_string(p));
  }
  const std::size_t d = k.dim(3);
  const std::size_t gh = H / p, gw = W / p, patch_len = p * p * 3;
  std::vector<std::size_t> index;
  index.reserve(gh * gw * patch_len);
  for (std::size_t gy = 0; gy < gh; ++gy)
    for (std::size_t gx = 0; gx < gw; ++gx)
      for (std::size_t dy = 0; dy < p; ++dy)
        for (std::size_t dx = 0; dx < p; ++dx)
          for (std::size_t c = 0; c < 3; ++c) index.push_back(((gy * p + dy) * W + gx * p + dx) * 3 + c);
  const Var patches = ad::gather(image, index, {gh * gw, patch_len});
  return ad::add_row_vector(ad::matmul(patches, ad::reshape(kernel, {patch_len, d})), bias);
}

namespace {

Var strided_merge(const Var& x, std::size_t grid, const Var& weight, const Var& bias) {
  if (grid % 2 != 0) {
    throw DimensionError("strided projection needs an even grid, got " + std::to_string(grid));
  }
  const std::size_t out = grid / 2;
  std::vector<Var> parts;
  for (std::size_t oy : {0, 1}) {
    for (std::size_t ox : {0, 1}) {
      std::vector<std::size_t> rows;
      rows.reserve(out * out);
      for (std::size_t i = 0; i < out; ++i)
        for (std::size_t j = 0; j < out; ++j) rows.push_back((2 * i + oy) * grid + 2 * j + ox);
      parts.push_back(ad::gather_rows(x, rows));
    }
  }
  return ad::add_row_vector(ad::matmul(ad::concat_cols(parts), weight), bias);
}

Var resize_tokens(const Var& x, std::size_t grid, std::size_t target) {
  if (grid == target) return x;
  const std::size_t d = x.value().dim(1);
  const Var g = ad::reshape(x, {grid, grid, d});
  return ad::reshape(ad::bilinear_resize(g, target, target), {target * target, d});
}

}  // namespace

GraphOutput forward(const ArchConfig& cfg, const ParamLookup& params, const Var& image,
                    const ForwardOptions& options) {
  validate(cfg);
  const Tensor& img = image.value();
  const auto input = static_cast<std::size_t>(cfg.input_size);
  if (img.rank() != 3 || img.dim(0) != input || img.dim(1) != input || img.dim(2) != 3) {
    throw DimensionError("forward: image " + img.shape_string() + " does not match config input " +
                         std::to_string(input) + "x" + std::to_string(input) + "x3");
  }
  GraphOutput out;
  std::size_t grid = cfg.embed_grid();
  const auto d0 = static_cast<std::size_t>(cfg.stages.front().hidden);

  Var x = patch_embed(image, params("embed.kernel"), params("embed.bias"), cfg.patch_size);
  x = ad::add(x, ad::reshape(params("embed.pos"), {grid * grid, d0}));
  const bool classification = cfg.mode == Mode::classification;
  if (classification) {
    const Var cls = ad::reshape(ad::add(params("embed.cls_token"), params("embed.cls_pos")), {1, d0});
    const Var parts[] = {cls, x};
    x = ad::concat_rows(parts);
  }

  int block = 0;
  for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
    const StageSpec& stage = cfg.stages[s];
    if (s > 0) {
      const std::string prefix = "transitions." + std::to_string(s - 1);
      const std::size_t next = input / static_cast<std::size_t>(stage.input_stride);
      switch (cfg.transitions[s - 1]) {
        case TransitionKind::strided_projection:
          x = strided_merge(x, grid, params(prefix + ".weight"), params(prefix + ".bias"));
          break;
        case TransitionKind::bilinear_merge:
          x = resize_tokens(x, grid, next);
          break;
        case TransitionKind::width_projection:
          x = ad::add_row_vector(ad::matmul(x, params(prefix + ".weight")), params(prefix + ".bias"));
          break;
        case TransitionKind::none:
          break;
      }
      grid = next;
    }

    std::vector<WindowLayout> layouts;
    if (classification) {
      // Class token plus all patches attend globally as one sequence.
      const std::size_t n = grid * grid + 1;
      layouts.assign(static_cast<std::size_t>(stage.depth), WindowLayout{1, n, 1, n});
    } else if (stage.depth > 0) {
      layouts = bind_strategy(stage.windows, stage.depth, grid, grid);
    }
    for (const WindowLayout& layout : layouts) {
      const std::string prefix = "blocks." + std::to_string(block++) + ".";
      const BlockParams bp{params(prefix + "ln1.gamma"),   params(prefix + "ln1.beta"),
                           params(prefix + "qkv.weight"),  params(prefix + "qkv.bias"),
                           params(prefix + "proj.weight"), params(prefix + "proj.bias"),
                           params(prefix + "ln2.gamma"),   params(prefix + "ln2.beta"),
                           params(prefix + "ffn1.weight"), params(prefix + "ffn1.bias"),
                           params(prefix + "ffn2.weight"), params(prefix + "ffn2.bias"),
                           cfg.heads};
      LayerAttention rec;
      x = encoder_block(x, bp, layout, options.record_attention ? &rec : nullptr);
      if (options.record_attention) out.attention.push_back(std::move(rec));
    }

    const bool last = s + 1 == cfg.stages.size();
    if (last) x = ad::layernorm(x, params("final_norm.gamma"), params("final_norm.beta"), kLayerNormEps);
    if (!classification && stage.output_stride) {
      const std::size_t tap = input / static_cast<std::size_t>(*stage.output_stride);
      out.features.push_back(resize_tokens(x, grid, tap));
      out.grid.push_back(tap);
      out.strides.push_back(*stage.output_stride);
    }
  }

  if (classification) {
    const std::size_t first[] = {0};
    const Var cls = ad::gather_rows(x, first);
    out.logits = ad::reshape(ad::add_row_vector(ad::matmul(cls, params("head.weight")), params("head.bias")),
                             {static_cast<std::size_t>(cfg.num_classes)});
  }
  return out;
}

}  // namespace graph

// ---------------------------------------------------------------------------
// Tensor-level wrappers

using ad::Var;

TokenGrid patch_embed(const Tensor& image, const EmbedWeights& ew, int patch) {
  const Var tokens = graph::patch_embed(Var::constant(image), Var::constant(ew.kernel),
                                        Var::constant(ew.bias), patch);
  const std::size_t gh = image.dim(0) / static_cast<std::size_t>(patch);
  const std::size_t gw = image.dim(1) / static_cast<std::size_t>(patch);
  const std::size_t d = ew.kernel.dim(3);
  if (ew.pos.dims() != Dims{gh, gw, d}) {
    throw DimensionError("patch_embed: position table " + ew.pos.shape_string() + " does not match grid " +
                         dims_string({gh, gw, d}));
  }
  const Tensor sum = ops::add(tokens.value(), ew.pos.reshaped({gh * gw, d}));
  return TokenGrid(sum.reshaped({gh, gw, d}));
}

Tensor adapt_patch_kernel(const Tensor& kernel, std::size_t target) {
  if (kernel.rank() != 4) {
    throw DimensionError("adapt_patch_kernel: expected [k, k, c_in, c_out], got " + kernel.shape_string());
  }
  const std::size_t kh = kernel.dim(0), kw = kernel.dim(1), cin = kernel.dim(2), cout = kernel.dim(3);
  const Tensor grid = kernel.reshaped({kh, kw, cin * cout});
  return ops::bilinear_resize(grid, target, target).reshaped({target, target, cin, cout});
}

Tensor adapt_pos_embedding(const Tensor& pos, std::size_t th, std::size_t tw) {
  return ops::bilinear_resize(pos, th, tw);
}

MhsaResult mhsa(const TokenGrid& tokens, const BlockWeights& w, const WindowLayout& layout) {
  MhsaResult result;
  const Var out = graph::mhsa(Var::constant(tokens.as_matrix()), graph::BlockParams::constants(w), layout,
                              &result.attention);
  result.tokens = TokenGrid(out.value().reshaped({tokens.h(), tokens.w(), tokens.d()}));
  return result;
}

TokenGrid encoder_block(const TokenGrid& tokens, const BlockWeights& w, const WindowLayout& layout) {
  const Var out = graph::encoder_block(Var::constant(tokens.as_matrix()), graph::BlockParams::constants(w), layout);
  return TokenGrid(out.value().reshaped({tokens.h(), tokens.w(), tokens.d()}));
}

namespace {

void check_weights_match(const ArchConfig& cfg, const WeightSet& weights) {
  const auto shapes = parameter_shapes(cfg);
  for (const auto& [name, dims] : shapes) {
    if (!weights.contains(name)) throw ConfigError("weights lack '" + name + "' required by config '" + cfg.name + "'");
    if (weights.at(name).dims() != dims) {
      throw ConfigError("weight '" + name + "' has shape " + weights.at(name).shape_string() + ", config '" +
                        cfg.name + "' needs " + dims_string(dims));
    }
  }
  if (weights.size() != shapes.size()) {
    throw ConfigError("weights hold " + std::to_string(weights.size()) + " tensors, config '" + cfg.name +
                      "' needs " + std::to_string(shapes.size()));
  }
}

}  // namespace

FeatureOutput forward(const ArchConfig& cfg, const WeightSet& weights, const Tensor& image,
                      const ForwardOptions& options) {
  check_weights_match(cfg, weights);
  const auto lookup = [&weights](const std::string& name) { return Var::constant(weights.at(name)); };
  graph::GraphOutput g = graph::forward(cfg, lookup, Var::constant(image), options);
  FeatureOutput out;
  for (std::size_t i = 0; i < g.features.size(); ++i) {
    const Tensor& v = g.features[i].value();
    out.features.emplace_back(v.reshaped({g.grid[i], g.grid[i], v.dim(1)}));
  }
  out.strides = std::move(g.strides);
  if (g.logits) out.logits = g.logits->value();
  out.attention = std::move(g.attention);
  return out;
}

WeightSet adapt_checkpoint(const WeightSet& source, const ArchConfig& target) {
  WeightSet out;
  for (const auto& [name, dims] : parameter_shapes(target)) {
    if (!source.contains(name)) {
      throw ConfigError("checkpoint lacks '" + name + "' needed by '" + target.name + "'");
    }
    Tensor t = source.at(name);
    if (name == "embed.kernel" && t.rank() == 4 && t.dim(0) != dims[0]) {
      t = adapt_patch_kernel(t, dims[0]);
    } else if (name == "embed.pos" && t.rank() == 3 && (t.dim(0) != dims[0] || t.dim(1) != dims[1])) {
      t = adapt_pos_embedding(t, dims[0], dims[1]);
    }
    if (t.dims() != dims) {
      throw ConfigError("checkpoint tensor '" + name + "' has shape " + t.shape_string() + ", target needs " +
                        dims_string(dims));
    }
    out.insert(name, std::move(t));
  }
  return out;
}

}  // namespace uvit
