#include "uvit/arch.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

#include <json.hpp>

#include "uvit/errors.hpp"
#include "uvit/weights.hpp"

namespace uvit {

std::string_view mode_name(Mode mode) {
  return mode == Mode::classification ? "classification" : "dense";
}

Mode parse_mode(std::string_view text) {
  if (text == "classification") return Mode::classification;
  if (text == "dense") return Mode::dense;
  throw ConfigError("unknown mode '" + std::string(text) + "'");
}

std::string ArchFlags::label() const {
  std::string out;
  auto append = [&out](const char* s) {
    if (!out.empty()) out += '+';
    out += s;
  };
  if (sd) append("SD");
  if (mf) append("MF");
  if (doubled) append("2x");
  return out.empty() ? "none" : out;
}

std::string_view transition_name(TransitionKind kind) {
  switch (kind) {
    case TransitionKind::none:
      return "none";
    case TransitionKind::strided_projection:
      return "strided-projection";
    case TransitionKind::bilinear_merge:
      return "bilinear-merge";
    case TransitionKind::width_projection:
      return "width-projection";
  }
  return "none";
}

TransitionKind parse_transition(std::string_view text) {
  for (auto k : {TransitionKind::none, TransitionKind::strided_projection,
                 TransitionKind::bilinear_merge, TransitionKind::width_projection}) {
    if (transition_name(k) == text) return k;
  }
  throw ConfigError("unknown transition '" + std::string(text) + "'");
}

TransitionKind transition_for(const ArchFlags& flags) {
  if (flags.sd && flags.doubled) return TransitionKind::strided_projection;
  if (flags.sd) return TransitionKind::bilinear_merge;
  if (flags.doubled) return TransitionKind::width_projection;
  return TransitionKind::none;
}

int ArchConfig::depth() const {
  int n = 0;
  for (const auto& s : stages) n += s.depth;
  return n;
}

ArchConfig ArchConfig::with_input(int input) const {
  ArchConfig copy = *this;
  copy.input_size = input;
  return copy;
}

void validate(const ArchConfig& cfg) {
  auto fail = [&cfg](const std::string& msg) {
    throw ConfigError("config '" + cfg.name + "': " + msg);
  };
  if (cfg.patch_size < 1) fail("patch size must be positive");
  if (cfg.input_size < 1 || cfg.input_size % cfg.patch_size != 0) {
    fail("input size " + std::to_string(cfg.input_size) + " is not divisible by patch size " +
         std::to_string(cfg.patch_size));
  }
  if (cfg.heads < 1) fail("heads must be positive");
  if (cfg.ffn_ratio < 1) fail("ffn ratio must be positive");
  if (cfg.stages.empty()) fail("no stages");
  if (cfg.flags.any()) {
    if (cfg.stages.size() != 3) fail("flagged configs have exactly three stages");
  } else if (cfg.stages.size() != 1) {
    fail("configs without SD/MF/2x have exactly one stage");
  }
  if (cfg.mode == Mode::classification) {
    if (cfg.flags.any()) fail("classification mode supports only the single-stage layout");
    if (cfg.num_classes < 1) fail("num_classes must be positive");
  }
  if (cfg.transitions.size() != cfg.stages.size() - 1) fail("need one transition between each pair of stages");
  const TransitionKind expected = transition_for(cfg.flags);
  for (TransitionKind t : cfg.transitions) {
    if (t != expected) {
      fail("transition '" + std::string(transition_name(t)) + "' does not match flags " +
           cfg.flags.label() + " (expected '" + std::string(transition_name(expected)) + "')");
    }
  }

  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const StageSpec& s = cfg.stages[i];
    const std::string where = "stage " + std::to_string(i + 1) + ": ";
    if (s.depth < 0) fail(where + "negative depth");
    if (s.hidden < 1 || s.hidden % cfg.heads != 0) {
      fail(where + "hidden size " + std::to_string(s.hidden) + " is not divisible by " +
           std::to_string(cfg.heads) + " heads");
    }
    if (s.windows.total_blocks() != s.depth) {
      fail(where + "window strategy covers " + std::to_string(s.windows.total_blocks()) +
           " blocks, depth is " + std::to_string(s.depth));
    }
    const int expected_stride = cfg.flags.sd ? cfg.patch_size << i : cfg.patch_size;
    if (s.input_stride != expected_stride) {
      fail(where + "input stride " + std::to_string(s.input_stride) + ", expected " +
           std::to_string(expected_stride));
    }
    if (i > 0) {
      const int prev = cfg.stages[i - 1].hidden;
      const int want = cfg.flags.doubled ? 2 * prev : prev;
      if (s.hidden != want) {
        fail(where + "hidden size " + std::to_string(s.hidden) + ", expected " + std::to_string(want));
      }
    }
    const bool last = i + 1 == cfg.stages.size();
    if (cfg.flags.mf) {
      if (s.output_stride != (cfg.patch_size << i)) fail(where + "MF tap must be at stride " + std::to_string(cfg.patch_size << i));
    } else if (last) {
      if (s.output_stride != s.input_stride) fail(where + "final output must be at the stage stride");
    } else if (s.output_stride) {
      fail(where + "only the last stage has an output without MF");
    }
    if (cfg.input_size % s.input_stride != 0) fail(where + "input is not divisible by the stage stride");
    const auto grid = static_cast<std::size_t>(cfg.input_size / s.input_stride);
    if (grid < 1) fail(where + "empty token grid");
    if (s.depth > 0) bind_strategy(s.windows, s.depth, grid, grid);
    if (s.output_stride && cfg.input_size % *s.output_stride != 0) {
      fail(where + "output stride does not divide the input");
    }
  }
}

// ---------------------------------------------------------------------------
// Presets

namespace {

struct PresetRow {
  char letter;
  int hidden;
};
constexpr PresetRow kPresetRows[] = {{'t', 222}, {'s', 288}, {'b', 384}};
constexpr int kPresetDepth = 18;

const WindowStrategy& progressive_strategy() {
  static const WindowStrategy ws = parse_strategy("[4^-1]x14 -> [2^-1]x2 -> [1]x2");
  return ws;
}

std::string normalize_preset_name(std::string_view name) {
  std::string out;
  for (char c : name) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  // "uvit-b+" and "uvit-b+-dense" -> "uvit-b-plus-dense"
  if (auto p = out.find('+'); p != std::string::npos) {
    out.replace(p, 1, "-plus");
    if (out.find("-dense") == std::string::npos) out += "-dense";
  }
  if (out.size() == 6 && out.rfind("uvit-", 0) == 0) out += "-cls";
  if (out.ends_with("-classification")) out = out.substr(0, out.size() - 15) + "-cls";
  return out;
}

ArchConfig single_stage(std::string name, Mode mode, int patch, int input, int depth, int hidden,
                        WindowStrategy windows) {
  ArchConfig cfg;
  cfg.name = std::move(name);
  cfg.mode = mode;
  cfg.patch_size = patch;
  cfg.input_size = input;
  StageSpec s;
  s.depth = depth;
  s.hidden = hidden;
  s.input_stride = patch;
  s.windows = std::move(windows);
  s.output_stride = patch;
  cfg.stages.push_back(std::move(s));
  return cfg;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& row : kPresetRows) {
    const std::string base = std::string("uvit-") + row.letter;
    names.push_back(base + "-cls");
    names.push_back(base + "-dense");
    names.push_back(base + "-plus-dense");
  }
  return names;
}

ArchConfig preset(std::string_view name) {
  const std::string key = normalize_preset_name(name);
  for (const auto& row : kPresetRows) {
    const std::string base = std::string("uvit-") + row.letter;
    if (key == base + "-cls") {
      return single_stage(key, Mode::classification, 16, 224, kPresetDepth, row.hidden,
                          WindowStrategy::uniform(WindowScale::global(), kPresetDepth));
    }
    if (key == base + "-dense") {
      return single_stage(key, Mode::dense, 8, 896, kPresetDepth, row.hidden,
                          WindowStrategy::uniform(WindowScale(2), kPresetDepth));
    }
    if (key == base + "-plus-dense") {
      return single_stage(key, Mode::dense, 8, 896, kPresetDepth, row.hidden, progressive_strategy());
    }
  }
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Ablations

ArchConfig ablation_config(const AblationSpec& spec) {
  const ArchFlags& f = spec.flags;
  const std::size_t n_stages = f.any() ? 3 : 1;
  auto invalid = [](const std::string& msg) { throw ConfigError("ablation: " + msg); };
  if (spec.depths.size() != n_stages) {
    invalid("expected " + std::to_string(n_stages) + " stage depths for flags " + f.label() +
            ", got " + std::to_string(spec.depths.size()));
  }
  for (int d : spec.depths) {
    if (d < 1) invalid("stage depths must be positive");
  }
  std::vector<int> hidden = spec.hidden;
  if (hidden.size() == 1 && n_stages == 3) {
    const int h = hidden[0];
    hidden = f.doubled ? std::vector<int>{h, 2 * h, 4 * h} : std::vector<int>{h, h, h};
  }
  if (hidden.size() != n_stages) invalid("hidden sizes do not match the stage count");
  std::vector<WindowScale> windows = spec.windows;
  if (windows.size() == 1) windows.assign(n_stages, windows[0]);
  if (windows.size() != n_stages) invalid("window scales do not match the stage count");

  ArchConfig cfg;
  cfg.name = spec.name.empty() ? "ablation-" + f.label() : spec.name;
  cfg.mode = Mode::dense;
  cfg.patch_size = spec.patch_size;
  cfg.input_size = spec.input_size;
  cfg.flags = f;
  for (std::size_t i = 0; i < n_stages; ++i) {
    StageSpec s;
    s.depth = spec.depths[i];
    s.hidden = hidden[i];
    s.input_stride = f.sd ? spec.patch_size << i : spec.patch_size;
    s.windows = WindowStrategy::uniform(windows[i], s.depth);
    if (f.mf) {
      s.output_stride = spec.patch_size << i;
    } else if (i + 1 == n_stages) {
      s.output_stride = s.input_stride;
    }
    cfg.stages.push_back(std::move(s));
  }
  cfg.transitions.assign(n_stages - 1, transition_for(f));
  // Some ablation widths (152, 128, 160, 224) do not split into six heads.
  for (cfg.heads = 6; cfg.heads > 1; --cfg.heads) {
    if (std::all_of(hidden.begin(), hidden.end(), [&cfg](int h) { return h % cfg.heads == 0; })) break;
  }
  validate(cfg);
  return cfg;
}

std::vector<ArchConfig> enumerate_scaling(const std::vector<int>& depths,
                                          const std::vector<int>& input_sizes,
                                          const std::vector<int>& widths) {
  constexpr int kHeads = 6;
  for (int w : widths) {
    if (w < 1 || w % kHeads != 0) {
      throw ConfigError("scaling grid: width " + std::to_string(w) + " is not divisible by " +
                        std::to_string(kHeads) + " heads");
    }
  }
  std::vector<ArchConfig> out;
  out.reserve(depths.size() * input_sizes.size() * widths.size());
  for (int depth : depths) {
    for (int input : input_sizes) {
      for (int width : widths) {
        ArchConfig cfg = single_stage(
            "scaling-" + std::to_string(input) + "-d" + std::to_string(depth) + "-w" + std::to_string(width),
            Mode::dense, 8, input, depth, width, WindowStrategy::uniform(WindowScale(2), depth));
        validate(cfg);
        out.push_back(std::move(cfg));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weights

std::vector<std::pair<std::string, Dims>> parameter_shapes(const ArchConfig& cfg) {
  validate(cfg);
  std::vector<std::pair<std::string, Dims>> shapes;
  const auto p = static_cast<std::size_t>(cfg.patch_size);
  const auto d0 = static_cast<std::size_t>(cfg.stages.front().hidden);
  const std::size_t grid = cfg.embed_grid();
  shapes.push_back({"embed.kernel", {p, p, 3, d0}});
  shapes.push_back({"embed.bias", {d0}});
  shapes.push_back({"embed.pos", {grid, grid, d0}});
  if (cfg.mode == Mode::classification) {
    shapes.push_back({"embed.cls_token", {d0}});
    shapes.push_back({"embed.cls_pos", {d0}});
  }
  int block = 0;
  for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
    const StageSpec& stage = cfg.stages[s];
    const auto d = static_cast<std::size_t>(stage.hidden);
    const std::size_t inner = d * static_cast<std::size_t>(cfg.ffn_ratio);
    if (s > 0) {
      const auto din = static_cast<std::size_t>(cfg.stages[s - 1].hidden);
      const std::string prefix = "transitions." + std::to_string(s - 1);
      switch (cfg.transitions[s - 1]) {
        case TransitionKind::strided_projection:
          shapes.push_back({prefix + ".weight", {4 * din, d}});
          shapes.push_back({prefix + ".bias", {d}});
          break;
        case TransitionKind::width_projection:
          shapes.push_back({prefix + ".weight", {din, d}});
          shapes.push_back({prefix + ".bias", {d}});
          break;
        case TransitionKind::bilinear_merge:
        case TransitionKind::none:
          break;
      }
    }
    for (int i = 0; i < stage.depth; ++i, ++block) {
      const std::string prefix = "blocks." + std::to_string(block);
      shapes.push_back({prefix + ".ln1.gamma", {d}});
      shapes.push_back({prefix + ".ln1.beta", {d}});
      shapes.push_back({prefix + ".qkv.weight", {d, 3 * d}});
      shapes.push_back({prefix + ".qkv.bias", {3 * d}});
      shapes.push_back({prefix + ".proj.weight", {d, d}});
      shapes.push_back({prefix + ".proj.bias", {d}});
      shapes.push_back({prefix + ".ln2.gamma", {d}});
      shapes.push_back({prefix + ".ln2.beta", {d}});
      shapes.push_back({prefix + ".ffn1.weight", {d, inner}});
      shapes.push_back({prefix + ".ffn1.bias", {inner}});
      shapes.push_back({prefix + ".ffn2.weight", {inner, d}});
      shapes.push_back({prefix + ".ffn2.bias", {d}});
    }
  }
  const auto dl = static_cast<std::size_t>(cfg.final_hidden());
  shapes.push_back({"final_norm.gamma", {dl}});
  shapes.push_back({"final_norm.beta", {dl}});
  if (cfg.mode == Mode::classification) {
    const auto c = static_cast<std::size_t>(cfg.num_classes);
    shapes.push_back({"head.weight", {dl, c}});
    shapes.push_back({"head.bias", {c}});
  }
  return shapes;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Uniform in (0, 1) from the top 53 bits.
double unit_open(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

// Box-Muller with rejection outside two sigma.
double truncated_normal(std::mt19937_64& rng, double sigma) {
  constexpr double kPi = 3.14159265358979323846;
  for (;;) {
    const double u1 = unit_open(rng), u2 = unit_open(rng);
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    if (std::abs(z) <= 2.0) return sigma * z;
  }
}

bool ends_with(std::string_view s, std::string_view suffix) { return s.ends_with(suffix); }

}  // namespace

WeightSet init_weights(const ArchConfig& cfg, std::uint64_t seed) {
  WeightSet ws;
  for (auto& [name, dims] : parameter_shapes(cfg)) {
    Tensor t(dims);
    if (ends_with(name, ".gamma")) {
      for (double& v : t.data()) v = 1.0;
    } else if (ends_with(name, ".bias") || ends_with(name, ".beta")) {
      // zeros
    } else {
      // Each tensor draws from its own stream so values do not depend on the
      // order tensors are created in.
      std::mt19937_64 rng(splitmix64(seed ^ fnv1a(name)));
      for (double& v : t.data()) v = truncated_normal(rng, 0.02);
    }
    ws.insert(name, std::move(t));
  }
  return ws;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

std::string stride_to_scale(int stride) { return "1/" + std::to_string(stride); }

int scale_to_stride(const std::string& text) {
  if (text.rfind("1/", 0) == 0) {
    try {
      const int v = std::stoi(text.substr(2));
      if (v >= 1) return v;
    } catch (const std::exception&) {
    }
  } else if (text == "1") {
    return 1;
  }
  throw ConfigError("bad scale '" + text + "' (expected 1/N)");
}

}  // namespace

std::string config_to_json(const ArchConfig& cfg) {
  nlohmann::ordered_json j;
  j["name"] = cfg.name;
  j["mode"] = mode_name(cfg.mode);
  j["patch_size"] = cfg.patch_size;
  j["input_size"] = cfg.input_size;
  j["heads"] = cfg.heads;
  j["ffn_ratio"] = cfg.ffn_ratio;
  j["num_classes"] = cfg.num_classes;
  j["flags"] = {{"sd", cfg.flags.sd}, {"mf", cfg.flags.mf}, {"doubled_channels", cfg.flags.doubled}};
  j["stages"] = nlohmann::ordered_json::array();
  for (const auto& s : cfg.stages) {
    nlohmann::ordered_json js;
    js["depth"] = s.depth;
    js["hidden"] = s.hidden;
    js["input_scale"] = stride_to_scale(s.input_stride);
    js["window_strategy"] = s.depth > 0 ? format_strategy(s.windows) : std::string();
    js["output_scale"] = s.output_stride ? nlohmann::ordered_json(stride_to_scale(*s.output_stride))
                                         : nlohmann::ordered_json(nullptr);
    j["stages"].push_back(js);
  }
  j["transitions"] = nlohmann::ordered_json::array();
  for (auto t : cfg.transitions) j["transitions"].push_back(transition_name(t));
  return j.dump(2);
}

ArchConfig config_from_json(std::string_view text) {
  ArchConfig cfg;
  try {
    const auto j = nlohmann::json::parse(text);
    cfg.name = j.value("name", std::string("custom"));
    cfg.mode = parse_mode(j.value("mode", std::string("dense")));
    cfg.patch_size = j.at("patch_size").get<int>();
    cfg.input_size = j.at("input_size").get<int>();
    cfg.heads = j.value("heads", 6);
    cfg.ffn_ratio = j.value("ffn_ratio", 4);
    cfg.num_classes = j.value("num_classes", 1000);
    if (j.contains("flags")) {
      const auto& f = j.at("flags");
      cfg.flags.sd = f.value("sd", false);
      cfg.flags.mf = f.value("mf", false);
      cfg.flags.doubled = f.value("doubled_channels", false);
    }
    for (const auto& js : j.at("stages")) {
      StageSpec s;
      s.depth = js.at("depth").get<int>();
      s.hidden = js.at("hidden").get<int>();
      s.input_stride = scale_to_stride(js.value("input_scale", stride_to_scale(cfg.patch_size)));
      const auto strategy = js.value("window_strategy", std::string());
      if (!strategy.empty()) s.windows = parse_strategy(strategy);
      if (js.contains("output_scale") && !js.at("output_scale").is_null()) {
        s.output_stride = scale_to_stride(js.at("output_scale").get<std::string>());
      }
      cfg.stages.push_back(std::move(s));
    }
    if (j.contains("transitions")) {
      for (const auto& t : j.at("transitions")) cfg.transitions.push_back(parse_transition(t.get<std::string>()));
    } else if (!cfg.stages.empty()) {
      cfg.transitions.assign(cfg.stages.size() - 1, transition_for(cfg.flags));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config JSON: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

}  // namespace uvit
