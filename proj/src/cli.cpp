#include "uvit/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>

#include "uvit/analysis.hpp"
#include "uvit/arch.hpp"
#include "uvit/cost.hpp"
#include "uvit/errors.hpp"
#include "uvit/model.hpp"
#include "uvit/reference_tables.hpp"
#include "uvit/weights.hpp"
#include "uvit/window.hpp"

namespace uvit::cli {

namespace {

using json = nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Pending file writes, flushed only after the command succeeds.
struct Outputs {
  std::ostream& console;
  std::vector<std::pair<std::string, std::string>> files;
  std::string console_text;

  void emit(const std::string& path, std::string text) {
    if (path.empty() || path == "-") {
      console_text += text;
    } else {
      files.emplace_back(path, std::move(text));
    }
  }

  void flush() {
    for (const auto& [path, text] : files) {
      std::ofstream f(path, std::ios::binary);
      if (!f) throw FormatError("cannot open '" + path + "' for writing");
      f << text;
      if (!f) throw FormatError("failed writing '" + path + "'");
    }
    console << console_text;
  }
};

struct ConfigSource {
  std::string preset;
  std::string config_path;
  int input = 0;

  void add_to(CLI::App* cmd, bool with_input = true) {
    auto* p = cmd->add_option("--preset", preset, "Built-in preset name (see `presets`)");
    auto* c = cmd->add_option("--config", config_path, "Architecture JSON file");
    p->excludes(c);
    c->excludes(p);
    if (with_input) cmd->add_option("--input", input, "Square input size in pixels (default: config value)");
  }

  ArchConfig load() const {
    if (preset.empty() == config_path.empty()) throw UsageError("exactly one of --preset or --config is required");
    ArchConfig cfg;
    if (!preset.empty()) {
      cfg = uvit::preset(preset);
    } else {
      std::ifstream f(config_path, std::ios::binary);
      if (!f) throw UsageError("cannot read config '" + config_path + "'");
      std::stringstream ss;
      ss << f.rdbuf();
      cfg = config_from_json(ss.str());
    }
    if (input > 0) cfg = cfg.with_input(input);
    validate(cfg);
    return cfg;
  }
};

std::pair<std::size_t, std::size_t> parse_grid(const std::string& text) {
  const auto x = text.find_first_of("xX");
  std::size_t h = 0, w = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    h = std::stoul(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(text);
    w = std::stoul(text.substr(x + 1), &used);
    if (used != text.size() - x - 1) throw std::invalid_argument(text);
  } catch (const std::exception&) {
    throw UsageError("--grid expects HxW, got '" + text + "'");
  }
  if (h == 0 || w == 0) throw UsageError("--grid extents must be positive");
  return {h, w};
}

std::uint64_t fnv1a(std::span<const double> values) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : values) {
    // little-endian byte order regardless of host
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

json checksum(const Tensor& t) {
  double sum = 0.0, abs_sum = 0.0, sumsq = 0.0;
  for (double v : t.data()) {
    sum += v;
    abs_sum += std::abs(v);
    sumsq += v * v;
  }
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(t.data())));
  json j;
  j["shape"] = t.dims();
  j["sum"] = sum;
  j["abs_sum"] = abs_sum;
  j["sumsq"] = sumsq;
  j["fnv1a"] = hash;
  return j;
}

// Pixels uniform in [-1, 1), reproducible from the seed.
Tensor synthetic_image(std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5EEDF00DCAFEBEEFULL);
  Tensor img({size, size, 3});
  for (double& v : img.data()) v = static_cast<double>(rng() >> 11) * 0x1.0p-52 - 1.0;
  return img;
}

WeightSet weights_for(const ArchConfig& cfg, const std::string& path, std::uint64_t seed) {
  if (path.empty()) return init_weights(cfg, seed);
  return adapt_checkpoint(load_weights(path), cfg);
}

json cost_json(const ArchConfig& cfg, const CostReport& r) {
  json j;
  j["name"] = cfg.name;
  j["input"] = cfg.input_size;
  j["params"] = r.params;
  j["macs"] = r.macs;
  j["gmacs"] = r.gmacs();
  j["breakdown"] = json::array();
  for (const auto& e : r.breakdown) {
    j["breakdown"].push_back({{"component", e.component}, {"params", e.params}, {"macs", e.macs}});
  }
  return j;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"UViT architecture, cost and analysis toolkit", "uvit"};
  app.require_subcommand(1);
  Outputs outputs{out, {}, {}};
  std::string out_path;
  std::string format = "csv";
  std::function<void()> action;

  auto add_out = [&out_path](CLI::App* cmd) { cmd->add_option("--out", out_path, "Output file (default: stdout)"); };
  auto add_format = [&format](CLI::App* cmd, const char* dflt) {
    format = dflt;
    cmd->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  };

  // presets ----------------------------------------------------------------
  auto* presets_cmd = app.add_subcommand("presets", "List built-in configurations with their costs");
  add_out(presets_cmd);
  presets_cmd->callback([&] {
    action = [&] {
      std::ostringstream s;
      s << "name,mode,patch,input,depth,hidden,strategy,params,gmacs\n";
      for (const auto& name : preset_names()) {
        const ArchConfig cfg = preset(name);
        const CostReport r = count_flops(cfg, cfg.input_size);
        s << name << ',' << mode_name(cfg.mode) << ',' << cfg.patch_size << ',' << cfg.input_size << ','
          << cfg.depth() << ',' << cfg.final_hidden() << ',' << format_strategy(cfg.stages.front().windows) << ','
          << r.params << ',' << fixed(r.gmacs(), 6) << '\n';
      }
      outputs.emit(out_path, s.str());
    };
  });

  // cost -------------------------------------------------------------------
  ConfigSource cost_src;
  auto* cost_cmd = app.add_subcommand("cost", "Parameter and MAC counts for one configuration");
  cost_src.add_to(cost_cmd);
  add_out(cost_cmd);
  add_format(cost_cmd, "json");
  cost_cmd->callback([&] {
    action = [&] {
      const ArchConfig cfg = cost_src.load();
      const CostReport r = count_flops(cfg, cfg.input_size);
      if (format == "json") {
        outputs.emit(out_path, cost_json(cfg, r).dump(2) + "\n");
      } else {
        std::ostringstream s;
        write_cost_csv_header(s);
        write_cost_csv_row(s, cfg, r);
        outputs.emit(out_path, s.str());
      }
    };
  });

  // ablation-table ---------------------------------------------------------
  auto* ablation_cmd = app.add_subcommand("ablation-table", "Backbone costs of the SD/MF/2x ablation families");
  add_out(ablation_cmd);
  ablation_cmd->callback([&] {
    action = [&] {
      std::ostringstream s;
      s << "sd,mf,doubled,depths,hidden,window_scale,input,params_m,backbone_gmacs,reference_params_m,"
           "reference_gflops\n";
      for (const auto& row : reference::arch_ablation()) {
        const ArchConfig cfg = ablation_config(reference::to_spec(row));
        const CostReport r = count_flops(cfg, cfg.input_size);
        std::string depths, hidden;
        for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
          depths += (i ? "/" : "") + std::to_string(cfg.stages[i].depth);
          hidden += (i ? "/" : "") + std::to_string(cfg.stages[i].hidden);
        }
        s << row.flags.sd << ',' << row.flags.mf << ',' << row.flags.doubled << ',' << depths << ',' << hidden
          << ',' << WindowScale(row.window_den).to_string() << ',' << cfg.input_size << ','
          << fixed(r.mparams(), 3) << ',' << fixed(r.gmacs(), 3) << ',' << fixed(row.params_m, 1) << ','
          << num(row.total_gflops) << '\n';
      }
      outputs.emit(out_path, s.str());
    };
  });

  // scaling-table ----------------------------------------------------------
  auto* scaling_cmd = app.add_subcommand("scaling-table", "Backbone costs of the compound-scaling grid");
  add_out(scaling_cmd);
  scaling_cmd->callback([&] {
    action = [&] {
      std::ostringstream s;
      const std::vector<std::string> extra_cols = {"reference_params_m", "reference_gflops"};
      write_cost_csv_header(s, extra_cols);
      for (const auto& row : reference::scaling_grid()) {
        const ArchConfig cfg = enumerate_scaling({row.depth}, {row.input}, {row.width}).front();
        const std::vector<std::string> extra = {fixed(row.params_m, 1), num(row.total_gflops)};
        write_cost_csv_row(s, cfg, count_flops(cfg, cfg.input_size), extra);
      }
      outputs.emit(out_path, s.str());
    };
  });

  // window -----------------------------------------------------------------
  auto* window_cmd = app.add_subcommand("window", "Window-strategy tools");
  window_cmd->require_subcommand(1);
  std::string strategy_text, grid_text;
  int window_depth = -1;
  auto add_window_opts = [&](CLI::App* cmd, bool need_depth) {
    cmd->add_option("--strategy", strategy_text, "Strategy, e.g. \"[4^-1]x14 -> [2^-1]x2 -> [1]x2\"")->required();
    auto* d = cmd->add_option("--depth", window_depth, "Number of blocks the strategy must cover");
    if (need_depth) d->required();
    cmd->add_option("--grid", grid_text, "Token grid HxW the windows must tile");
    add_out(cmd);
  };
  auto* validate_cmd = window_cmd->add_subcommand("validate", "Check a strategy against a depth and grid");
  add_window_opts(validate_cmd, true);
  validate_cmd->callback([&] {
    action = [&] {
      const WindowStrategy ws = parse_strategy(strategy_text);
      json j;
      j["strategy"] = format_strategy(ws);
      j["depth"] = window_depth;
      if (ws.total_blocks() != window_depth) {
        throw BindingError("strategy covers " + std::to_string(ws.total_blocks()) + " blocks, depth is " +
                           std::to_string(window_depth));
      }
      if (!grid_text.empty()) {
        const auto [h, w] = parse_grid(grid_text);
        const auto layouts = bind_strategy(ws, window_depth, h, w);
        j["grid"] = {h, w};
        j["phases"] = json::array();
        for (const auto& phase : ws.phases) {
          const WindowLayout l = plan_windows(h, w, phase.scale);
          j["phases"].push_back({{"scale", phase.scale.to_string()},
                                 {"blocks", phase.count},
                                 {"window", {l.window_h, l.window_w}},
                                 {"windows", l.window_count()}});
        }
        std::uint64_t attn = 0;
        for (const auto& l : layouts) attn += l.window_count() * l.tokens_per_window() * l.tokens_per_window();
        j["sum_window_tokens_squared"] = attn;
      }
      j["valid"] = true;
      outputs.emit(out_path, j.dump(2) + "\n");
    };
  });
  auto* canon_cmd = window_cmd->add_subcommand("canonicalize", "Print the canonical form of a strategy");
  add_window_opts(canon_cmd, false);
  canon_cmd->callback([&] {
    action = [&] {
      const WindowStrategy ws = parse_strategy(strategy_text);
      if (window_depth >= 0 || !grid_text.empty()) {
        const int depth = window_depth >= 0 ? window_depth : ws.total_blocks();
        if (!grid_text.empty()) {
          const auto [h, w] = parse_grid(grid_text);
          bind_strategy(ws, depth, h, w);
        } else if (ws.total_blocks() != depth) {
          throw BindingError("strategy covers " + std::to_string(ws.total_blocks()) + " blocks, depth is " +
                             std::to_string(depth));
        }
      }
      outputs.emit(out_path, format_strategy(ws) + "\n");
    };
  });

  // forward ----------------------------------------------------------------
  ConfigSource fwd_src;
  std::string weights_path;
  std::uint64_t seed = 0;
  auto* forward_cmd = app.add_subcommand("forward", "Deterministic forward pass; prints shapes and checksums");
  fwd_src.add_to(forward_cmd);
  forward_cmd->add_option("--weights", weights_path, "Weights file (default: initialized from --seed)");
  forward_cmd->add_option("--seed", seed, "Seed for weights and the synthetic image");
  add_out(forward_cmd);
  forward_cmd->callback([&] {
    action = [&] {
      const ArchConfig cfg = fwd_src.load();
      const WeightSet ws = weights_for(cfg, weights_path, seed);
      const Tensor image = synthetic_image(static_cast<std::size_t>(cfg.input_size), seed);
      const FeatureOutput result = forward(cfg, ws, image);
      json j;
      j["config"] = cfg.name;
      j["input"] = cfg.input_size;
      j["seed"] = seed;
      j["image"] = checksum(image);
      j["outputs"] = json::array();
      for (std::size_t i = 0; i < result.features.size(); ++i) {
        json f = checksum(result.features[i].values());
        f["stride"] = result.strides[i];
        j["outputs"].push_back(std::move(f));
      }
      if (result.logits) j["logits"] = checksum(*result.logits);
      outputs.emit(out_path, j.dump(2) + "\n");
    };
  });

  // init-weights -----------------------------------------------------------
  ConfigSource init_src;
  std::uint64_t init_seed = 0;
  std::string init_out;
  auto* init_cmd = app.add_subcommand("init-weights", "Write freshly initialized weights");
  init_src.add_to(init_cmd);
  init_cmd->add_option("--seed", init_seed, "Initialization seed");
  init_cmd->add_option("--out", init_out, "Weights file to write")->required();
  init_cmd->callback([&] {
    action = [&] {
      const ArchConfig cfg = init_src.load();
      std::ostringstream s(std::ios::binary);
      write_weights(init_weights(cfg, init_seed), s);
      if (init_out == "-") throw UsageError("init-weights needs a file path for --out");
      outputs.emit(init_out, s.str());
    };
  });

  // show-config ------------------------------------------------------------
  ConfigSource show_src;
  auto* show_cmd = app.add_subcommand("show-config", "Print a configuration as JSON");
  show_src.add_to(show_cmd);
  add_out(show_cmd);
  show_cmd->callback([&] { action = [&] { outputs.emit(out_path, config_to_json(show_src.load()) + "\n"); }; });

  // rf ---------------------------------------------------------------------
  ConfigSource rf_src;
  std::string scores_path, long_path, dump_path;
  std::uint64_t rf_seed = 0;
  auto* rf_cmd = app.add_subcommand("rf", "Relative receptive field per layer");
  auto* scores_opt = rf_cmd->add_option("--scores", scores_path, "Long-form scores CSV (layer,head,window,row,col,score)");
  rf_src.add_to(rf_cmd);
  rf_cmd->get_option("--preset")->excludes(scores_opt);
  rf_cmd->get_option("--config")->excludes(scores_opt);
  rf_cmd->add_option("--seed", rf_seed, "Seed when recording attention from a config");
  rf_cmd->add_option("--long", long_path, "Also write per-head values (layer,head,r) here");
  rf_cmd->add_option("--dump-scores", dump_path, "Also write the recorded scores CSV here");
  add_out(rf_cmd);
  rf_cmd->callback([&] {
    action = [&] {
      std::vector<LayerAttention> layers;
      if (!scores_path.empty()) {
        std::ifstream f(scores_path, std::ios::binary);
        if (!f) throw UsageError("cannot read scores '" + scores_path + "'");
        layers = read_scores_csv(f);
      } else {
        const ArchConfig cfg = rf_src.load();
        const WeightSet ws = init_weights(cfg, rf_seed);
        const Tensor image = synthetic_image(static_cast<std::size_t>(cfg.input_size), rf_seed);
        layers = forward(cfg, ws, image, ForwardOptions{true}).attention;
      }
      const RRFSummary summary = layer_rf_summary(layers);
      std::ostringstream s;
      write_rf_summary_csv(s, summary);
      outputs.emit(out_path, s.str());
      if (!long_path.empty()) {
        std::ostringstream l;
        write_rf_long_csv(l, summary);
        outputs.emit(long_path, l.str());
      }
      if (!dump_path.empty()) {
        std::ostringstream d;
        write_scores_csv(d, layers);
        outputs.emit(dump_path, d.str());
      }
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    return 1;
  }

  try {
    if (!action) throw UsageError("no command given");
    action();
    outputs.flush();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace uvit::cli
