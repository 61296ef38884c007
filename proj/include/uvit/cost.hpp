#pragma once

// Analytic parameter and multiply-accumulate counts.
//
// One multiply-accumulate counts as one FLOP. Softmax, layer norm, GELU and
// bias additions are not counted; bilinear resampling costs nothing.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "uvit/arch.hpp"

namespace uvit {

struct CostEntry {
  std::string component;  // "embedding", "position", "block.3.linear", ...
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

struct CostReport {
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  std::vector<CostEntry> breakdown;

  double gmacs() const { return static_cast<double>(macs) * 1e-9; }
  double mparams() const { return static_cast<double>(params) * 1e-6; }
  /// Sum of the breakdown entries whose component ends with `suffix`.
  std::uint64_t macs_of(const std::string& suffix) const;
  std::uint64_t params_of(const std::string& suffix) const;
};

/// Per-block parameter count: 12d^2 + 13d at FFN ratio 4.
std::uint64_t block_params(std::uint64_t d, std::uint64_t ffn_ratio = 4);

/// 2 * d * sum over windows of (window tokens)^2.
std::uint64_t attention_macs(const WindowLayout& layout, std::uint64_t d);

/// Counts at cfg.input_size. Throws what validate(cfg) throws.
CostReport count_params(const ArchConfig& cfg);
/// Counts with the config re-targeted to `input`; the position table follows
/// the grid, so parameters can differ from count_params(cfg).
CostReport count_flops(const ArchConfig& cfg, int input);

struct OffsetFit {
  double offset = 0.0;               // GMACs
  std::vector<double> residuals;     // (backbone + offset - total) / total
  std::vector<double> backbone;      // GMACs per row

  double max_abs_residual() const;
};

struct OffsetRow {
  ArchConfig cfg;
  int input = 0;
  double total_gmacs = 0.0;
};

/// Least-squares constant (clamped at zero) reconciling backbone counts
/// with end-to-end totals. Throws ContractError on empty or ragged input.
OffsetFit fit_offset(std::span<const double> backbone_gmacs, std::span<const double> totals);
OffsetFit fit_head_offset(std::span<const OffsetRow> rows);

/// CSV with header
/// name,depth,width,input,strategy,params,gmacs,embedding_gmacs,linear_gmacs,attention_gmacs,transition_gmacs,head_gmacs
/// followed by any caller-supplied extra columns.
void write_cost_csv_header(std::ostream& out, std::span<const std::string> extra = {});
void write_cost_csv_row(std::ostream& out, const ArchConfig& cfg, const CostReport& report,
                        std::span<const std::string> extra = {});

}  // namespace uvit
