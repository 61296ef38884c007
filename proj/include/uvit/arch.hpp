#pragma once

// Architecture descriptions: UViT presets, the SD / MF / 2x ablation
// families, and the compound-scaling grid.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "uvit/tensor.hpp"
#include "uvit/window.hpp"

namespace uvit {

class WeightSet;

enum class Mode { classification, dense };

std::string_view mode_name(Mode mode);
Mode parse_mode(std::string_view text);

/// Spatial downsampling, multi-scale features, doubled channels.
struct ArchFlags {
  bool sd = false;
  bool mf = false;
  bool doubled = false;

  bool any() const { return sd || mf || doubled; }
  /// e.g. "SD+MF", "2x", "none"
  std::string label() const;

  bool operator==(const ArchFlags&) const = default;
};

enum class TransitionKind { none, strided_projection, bilinear_merge, width_projection };

std::string_view transition_name(TransitionKind kind);
TransitionKind parse_transition(std::string_view text);
/// SD and 2x: strided projection; SD alone: bilinear merge; 2x alone: width
/// projection; otherwise none.
TransitionKind transition_for(const ArchFlags& flags);

struct StageSpec {
  int depth = 0;
  int hidden = 0;
  /// Token grid stride relative to the image (8 means a 1/8-scale grid).
  int input_stride = 8;
  WindowStrategy windows;
  /// Stride of the feature tap fed to a head, if this stage has one.
  std::optional<int> output_stride;

  bool operator==(const StageSpec&) const = default;
};

struct ArchConfig {
  std::string name;
  Mode mode = Mode::dense;
  int patch_size = 8;
  int input_size = 896;
  ArchFlags flags;
  std::vector<StageSpec> stages;
  /// transitions[i] sits between stages[i] and stages[i + 1].
  std::vector<TransitionKind> transitions;
  int heads = 6;
  int ffn_ratio = 4;
  int num_classes = 1000;

  int depth() const;
  int final_hidden() const { return stages.back().hidden; }
  /// Token grid extent after patch embedding.
  std::size_t embed_grid() const {
    return static_cast<std::size_t>(input_size / patch_size);
  }
  /// Copy with a different input size (position table follows the grid).
  ArchConfig with_input(int input) const;

  bool operator==(const ArchConfig&) const = default;
};

/// Checks every structural invariant; throws ConfigError (or a window error
/// for strategies that cannot bind to the grid).
void validate(const ArchConfig& cfg);

// Presets ------------------------------------------------------------------

/// uvit-{t,s,b}-cls, uvit-{t,s,b}-dense (constant 1/2 windows) and
/// uvit-{t,s,b}-plus-dense (progressive windows). "uvit-b+-dense" and
/// case variations ("UViT-B+") are accepted aliases.
ArchConfig preset(std::string_view name);
std::vector<std::string> preset_names();

// Ablation factory -----------------------------------------------------------

struct AblationSpec {
  ArchFlags flags;
  /// One entry without flags, three with any flag.
  std::vector<int> depths;
  /// One entry (doubled per stage under 2x) or one per stage.
  std::vector<int> hidden;
  /// One entry shared by all stages or one per stage.
  std::vector<WindowScale> windows;
  int input_size = 640;
  int patch_size = 8;
  std::string name;
};

ArchConfig ablation_config(const AblationSpec& spec);

// Scaling grid ---------------------------------------------------------------

/// Cartesian product (depth-major, then input, then width) of single-stage
/// dense configs with 1/2-scale windows. Throws ConfigError for widths not
/// divisible by the head count.
std::vector<ArchConfig> enumerate_scaling(const std::vector<int>& depths,
                                          const std::vector<int>& input_sizes,
                                          const std::vector<int>& widths);

// Weights ------------------------------------------------------------------

/// Every learned tensor of the model, in construction order.
std::vector<std::pair<std::string, Dims>> parameter_shapes(const ArchConfig& cfg);

/// Truncated normal (sigma 0.02, cut at two sigma) for projections, kernels,
/// position tables and class token; zeros for biases and betas; ones for
/// gammas. Deterministic in (cfg, seed).
WeightSet init_weights(const ArchConfig& cfg, std::uint64_t seed);

// JSON -----------------------------------------------------------------------

std::string config_to_json(const ArchConfig& cfg);
ArchConfig config_from_json(std::string_view text);

}  // namespace uvit
