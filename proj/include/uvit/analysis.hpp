#pragma once

// Relative receptive field of attention maps.
//
// For a row-stochastic [L, L] score matrix s with 1-based indices,
//   r = (1/L) * sum_i [ sum_j s_ij |i - j| ] / max(i, L - i)
// Windowed layers get one r per window, averaged over windows.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "uvit/model.hpp"
#include "uvit/tensor.hpp"

namespace uvit {

/// Throws ContractError unless `scores` is square and every row sums to one
/// within 1e-6 with no negative entries.
double relative_receptive_field(const Tensor& scores);

struct LayerRF {
  std::size_t layer = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population, across heads
  std::vector<double> per_head;
  std::size_t windows = 1;
  bool windowed() const { return windows > 1; }
};

struct RRFSummary {
  std::vector<LayerRF> layers;
};

/// One entry per layer in order. Throws ContractError when a layer has no
/// heads or head counts differ between windows or layers.
RRFSummary layer_rf_summary(std::span<const LayerAttention> layers);

/// Reads long-form scores with header layer,head,window,row,col,score.
/// Indices are 0-based and must be dense; every (layer, window, head) matrix
/// must be square and fully populated. Throws FormatError otherwise.
std::vector<LayerAttention> read_scores_csv(std::istream& in);
void write_scores_csv(std::ostream& out, std::span<const LayerAttention> layers);

/// layer,head,r
void write_rf_long_csv(std::ostream& out, const RRFSummary& summary);
/// layer,mean,std,windows,windowed
void write_rf_summary_csv(std::ostream& out, const RRFSummary& summary);

}  // namespace uvit
