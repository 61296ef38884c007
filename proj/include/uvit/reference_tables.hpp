#pragma once

// Published cost figures used as reference points by the CLI tables and the
// acceptance suite. Detection totals include the detection head; backbone
// counts from cost.hpp are compared through differences or a fitted offset.

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "uvit/arch.hpp"

namespace uvit::reference {

/// Window-strategy ablation, UViT-B dense at 896.
struct WindowAblationRow {
  std::string_view strategy;
  double total_gflops;
};
std::span<const WindowAblationRow> window_ablation();

/// SD / MF / 2x ablation families at 640.
struct ArchAblationRow {
  ArchFlags flags;
  std::vector<int> depths;
  int hidden;      // first-stage width
  int window_den;  // shared by all stages
  double params_m;
  double total_gflops;
};
const std::vector<ArchAblationRow>& arch_ablation();
AblationSpec to_spec(const ArchAblationRow& row);

/// Compound-scaling grid, single-stage with 1/2 windows.
struct ScalingRow {
  int input;
  int depth;
  int width;
  double params_m;
  double total_gflops;
};
std::span<const ScalingRow> scaling_grid();

/// Classification presets at 224.
struct PresetCostRow {
  std::string_view preset;
  double params_m;
  double gflops;
};
std::span<const PresetCostRow> preset_costs();

/// The longer strategy used for the deeper appendix variant.
inline constexpr std::string_view kDeepStrategy = "[2^-1]x28 -> [1]x4";

}  // namespace uvit::reference
