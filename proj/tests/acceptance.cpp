// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes. Tolerances are fixed below.

#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <map>
#include <set>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "uvit/analysis.hpp"
#include "uvit/arch.hpp"
#include "uvit/cost.hpp"
#include "uvit/errors.hpp"
#include "uvit/model.hpp"
#include "uvit/ops.hpp"
#include "uvit/reference_tables.hpp"
#include "uvit/window.hpp"

#ifndef UVIT_CLI_PATH
#error "UVIT_CLI_PATH must point at the uvit executable"
#endif

using namespace uvit;

namespace {

constexpr double kParamsTolB = 0.02;
constexpr double kParamsTolOracle = 0.01;
constexpr double kFlopsTol = 0.05;
constexpr double kDeltaTol = 0.05;
constexpr double kResidualTol = 0.015;
constexpr double kAttentionTol = 1e-12;
constexpr double kGradTol = 1e-4;
constexpr double kRampTol = 1e-12;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

// 1 -------------------------------------------------------------------------
void params_golden(Outcome& o) {
  const double b = count_params(preset("uvit-b-cls")).mparams();
  o.detail << "B " << fmt(b, 3) << "M vs 32.8M (" << fmt(100 * rel(b, 32.8), 2) << "%)";
  o.require(rel(b, 32.8) <= kParamsTolB, "UViT-B outside 2%");
  const std::pair<const char*, double> ts[] = {{"uvit-t-cls", 13.5}, {"uvit-s-cls", 21.7}};
  for (const auto& [name, paper] : ts) {
    const ArchConfig cfg = preset(name);
    const double got = static_cast<double>(count_params(cfg).params);
    const double want = static_cast<double>(
        oracle::enumerated_params(16, 14, static_cast<std::uint64_t>(cfg.final_hidden()), 18, true));
    o.detail << "; " << name << " " << fmt(got * 1e-6, 3) << "M vs enumerated " << fmt(want * 1e-6, 3)
             << "M (published " << paper << "M, known deviation)";
    o.require(rel(got, want) <= kParamsTolOracle, std::string(name) + " differs from enumeration");
  }
}

// 2 -------------------------------------------------------------------------
void flops_golden(Outcome& o) {
  for (const auto& row : reference::preset_costs()) {
    const double g = count_flops(preset(row.preset), 224).gmacs();
    o.detail << row.preset << " " << fmt(g, 3) << "G vs " << row.gflops << "G; ";
    o.require(rel(g, row.gflops) <= kFlopsTol, std::string(row.preset) + " outside 5%");
  }
}

// 3 -------------------------------------------------------------------------
void window_deltas(Outcome& o) {
  const auto rows = reference::window_ablation();
  std::vector<double> backbone, totals;
  for (const auto& row : rows) {
    ArchConfig cfg = preset("uvit-b-dense");
    cfg.stages[0].windows = parse_strategy(row.strategy);
    backbone.push_back(count_flops(cfg, 896).gmacs());
    totals.push_back(row.total_gflops);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      const double want = totals[i] - totals[j], got = backbone[i] - backbone[j];
      if (want == 0.0) {
        o.require(got == 0.0, "rows " + std::to_string(i + 1) + "/" + std::to_string(j + 1) + " should tie");
        continue;
      }
      const double e = rel(got, want);
      worst = std::max(worst, e);
      o.require(e <= kDeltaTol, "delta rows " + std::to_string(i + 1) + "/" + std::to_string(j + 1) + " off by " +
                                    fmt(100 * e, 2) + "%");
    }
  }
  const OffsetFit fit = fit_offset(backbone, totals);
  o.detail << "[1]x18 - [2^-1]x18 = " << fmt(backbone[0] - backbone[1], 1) << "G vs 1663.2G; worst pairwise "
           << fmt(100 * worst, 2) << "%; offset " << fmt(fit.offset, 1) << "G, max residual "
           << fmt(100 * fit.max_abs_residual(), 2) << "%";
  o.require(fit.max_abs_residual() < kResidualTol, "offset residual");
}

// 4 -------------------------------------------------------------------------
void window_equivalence(Outcome& o) {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const BlockWeights w = oracle::random_block(12, 6, seed);
    const TokenGrid x(oracle::random_tensor({6, 6, 12}, 100 + seed));
    const Tensor got = mhsa(x, w, plan_windows(6, 6, WindowScale(1))).tokens.as_matrix();
    worst = std::max(worst, oracle::max_abs_diff(got, oracle::global_attention(x.as_matrix(), w)));
  }
  o.detail << "max |mhsa - brute force| " << worst;
  o.require(worst <= kAttentionTol, "global attention mismatch");

  bool round_trip = true;
  const TokenGrid g(oracle::random_tensor({16, 16, 7}, 9));
  for (int den : {1, 2, 4, 8, 16}) {
    const WindowLayout l = plan_windows(16, 16, WindowScale(den));
    round_trip = round_trip && window_merge(window_partition(g, l), l) == g;
  }
  o.detail << "; partition/merge " << (round_trip ? "bit-exact" : "MISMATCH");
  o.require(round_trip, "partition round-trip");

  bool law = true;
  for (std::size_t grid : {16, 48, 112}) {
    const auto global = attention_macs(plan_windows(grid, grid, WindowScale(1)), 384);
    for (int den : {2, 4, 8, 16}) {
      if (grid % static_cast<std::size_t>(den)) continue;
      law = law && attention_macs(plan_windows(grid, grid, WindowScale(den)), 384) *
                           static_cast<std::uint64_t>(den * den) ==
                       global;
    }
  }
  ArchConfig a = preset("uvit-b-dense"), b = a;
  a.stages[0].windows = parse_strategy("[1]x18");
  law = law && count_flops(a, 896).macs_of(".attention") == 4 * count_flops(b, 896).macs_of(".attention");
  o.detail << "; s^2 scaling " << (law ? "exact" : "BROKEN");
  o.require(law, "attention scaling law");
}

// 5 -------------------------------------------------------------------------
void gradient_suite(Outcome& o) {
  using ad::Var;
  using Vars = std::vector<Var>;
  auto r = [](Dims d, std::uint64_t s) { return oracle::random_tensor(d, s); };
  struct Case {
    const char* name;
    std::function<Var(const Vars&)> f;
    std::vector<Tensor> in;
  };
  const std::vector<Case> cases = {
      {"matmul", [](const Vars& v) { return oracle::weighted_sum(ad::matmul(v[0], v[1]), 1); },
       {r({3, 4}, 2), r({4, 5}, 3)}},
      {"add/mul/scale/transpose",
       [](const Vars& v) {
         return oracle::weighted_sum(ad::scale(ad::mul(ad::add(ad::transpose(v[0]), v[1]), v[1]), 0.3), 4);
       },
       {r({4, 3}, 5), r({3, 4}, 6)}},
      {"add_row_vector", [](const Vars& v) { return oracle::weighted_sum(ad::add_row_vector(v[0], v[1]), 7); },
       {r({3, 4}, 8), r({4}, 9)}},
      {"softmax", [](const Vars& v) { return oracle::weighted_sum(ad::softmax_rows(v[0]), 10); },
       {oracle::random_tensor({4, 5}, 11, -3, 3)}},
      {"layernorm",
       [](const Vars& v) { return oracle::weighted_sum(ad::layernorm(v[0], v[1], v[2], kLayerNormEps), 12); },
       {r({3, 6}, 13), r({6}, 14), r({6}, 15)}},
      {"gelu", [](const Vars& v) { return oracle::weighted_sum(ad::gelu(v[0]), 16); },
       {oracle::random_tensor({3, 4}, 17, -3, 3)}},
      {"bilinear", [](const Vars& v) { return oracle::weighted_sum(ad::bilinear_resize(v[0], 5, 3), 18); },
       {r({3, 4, 2}, 19)}},
      {"gather/concat/slice",
       [](const Vars& v) {
         const std::size_t rows[] = {1, 0, 1};
         const Var parts[] = {ad::slice_cols(ad::gather_rows(v[0], rows), 1, 2), v[1]};
         return oracle::weighted_sum(ad::concat_cols(parts), 20);
       },
       {r({2, 4}, 21), r({3, 2}, 22)}},
  };
  double worst = 0.0;
  for (const auto& c : cases) {
    const double e = oracle::gradient_check(c.f, c.in);
    worst = std::max(worst, e);
    o.require(e < kGradTol, std::string(c.name) + " rel err " + std::to_string(e));
  }
  o.detail << "primitives max rel err " << worst;

  // Depth-2 encoder on a 4x4 token grid, every parameter and the image.
  ArchConfig cfg = enumerate_scaling({2}, {32}, {12}).front();
  cfg.stages[0].windows = parse_strategy("[2^-1]x1 -> [1]x1");
  validate(cfg);
  const WeightSet ws = init_weights(cfg, 31);
  std::vector<std::string> names;
  std::vector<Tensor> inputs;
  for (const auto& [name, t] : ws.entries()) {
    names.push_back(name);
    // Larger than the init scale so attention is far from uniform.
    Tensor v = t;
    const Tensor noise = oracle::random_tensor(t.dims(), names.size(), -0.4, 0.4);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += noise[i];
    inputs.push_back(v);
  }
  inputs.push_back(oracle::random_tensor({32, 32, 3}, 77));
  auto model = [&](const Vars& v) {
    const graph::ParamLookup lookup = [&](const std::string& n) {
      for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == n) return v[i];
      throw ConfigError("no parameter " + n);
    };
    return oracle::weighted_sum(graph::forward(cfg, lookup, v.back()).features[0], 99);
  };
  const double e = oracle::gradient_check(model, inputs);
  o.detail << "; depth-2 d=12 4x4 encoder max rel err " << e;
  o.require(e < kGradTol, "encoder gradient");
}

// 6 -------------------------------------------------------------------------
void rrf_metric(Outcome& o) {
  for (std::size_t L : {1, 5, 16}) {
    Tensor id({L, L});
    for (std::size_t i = 0; i < L; ++i) id.at(i, i) = 1.0;
    o.require(relative_receptive_field(id) == 0.0, "identity not zero");
  }
  for (std::size_t L : {2, 4, 8, 16}) {
    const double got = relative_receptive_field(Tensor({L, L}, 1.0 / double(L)));
    const double want = oracle::rrf_uniform_closed_form(L);
    o.detail << "L=" << L << " " << fmt(got, 6) << "; ";
    o.require(std::abs(got - want) <= 1e-14, "uniform L=" + std::to_string(L));
  }
  o.require(std::abs(relative_receptive_field(Tensor({2, 2}, 0.5)) - 0.375) <= 1e-15, "L=2 is not 0.375");
  std::mt19937_64 rng(1000);
  std::exponential_distribution<double> e(1.0);
  double lo = 1.0, hi = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t L = 1 + rng() % 32;
    Tensor s({L, L});
    for (std::size_t i = 0; i < L; ++i) {
      double z = 0.0;
      for (std::size_t j = 0; j < L; ++j) z += s.at(i, j) = std::pow(e(rng), 4.0);
      for (std::size_t j = 0; j < L; ++j) s.at(i, j) /= z;
    }
    const double r = relative_receptive_field(s);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  o.detail << "1000 random in [" << fmt(lo, 4) << ", " << fmt(hi, 4) << "]";
  o.require(lo >= 0.0 && hi <= 1.0, "random r out of [0, 1]");
}

// 7 -------------------------------------------------------------------------
void parser_suite(Outcome& o) {
  std::vector<std::string> texts;
  for (const auto& row : reference::window_ablation()) texts.emplace_back(row.strategy);
  texts.emplace_back(reference::kDeepStrategy);
  int ok = 0;
  for (const auto& t : texts) {
    const WindowStrategy ws = parse_strategy(t);
    const bool same = format_strategy(ws) == t && parse_strategy(format_strategy(ws)) == ws;
    ok += same;
    o.require(same, "round-trip " + t);
  }
  o.require(parse_strategy("[2^{-1}]\\times 28 \\rightarrow [1^{-1}]\\times 4") ==
                parse_strategy(reference::kDeepStrategy),
            "typeset appendix strategy");
  const std::pair<const char*, std::size_t> bad[] = {
      {"", 0}, {"[2^-1]x18 ->", 12}, {"[5^-1]x2", 1}, {"[2^-1]18", 6}, {"[2^-1]x0", 7}, {"[1]x2 junk", 6}};
  int rejected = 0;
  for (const auto& [text, pos] : bad) {
    try {
      parse_strategy(text);
      o.require(false, std::string("accepted '") + text + "'");
    } catch (const ParseError& e) {
      rejected += e.position() == pos;
      o.require(e.position() == pos, std::string("position for '") + text + "'");
    }
  }
  o.detail << ok << "/" << texts.size() << " round-trips, " << rejected << "/" << std::size(bad)
           << " malformed inputs rejected at the expected offset";
}

// 8 -------------------------------------------------------------------------
void ablation_invariants(Outcome& o) {
  std::array<bool, 8> seen{};
  std::map<std::string, std::set<std::uint64_t>> params_by_family;
  for (const auto& row : reference::arch_ablation()) {
    const ArchConfig cfg = ablation_config(reference::to_spec(row));
    seen[row.flags.sd + 2 * row.flags.mf + 4 * row.flags.doubled] = true;
    const TransitionKind want = row.flags.sd ? (row.flags.doubled ? TransitionKind::strided_projection
                                                                  : TransitionKind::bilinear_merge)
                                             : (row.flags.doubled ? TransitionKind::width_projection
                                                                  : TransitionKind::none);
    for (TransitionKind t : cfg.transitions) o.require(t == want, "transition for " + row.flags.label());
    if (!row.flags.sd) params_by_family[row.flags.label()].insert(count_params(cfg).params);
  }
  bool all = true;
  for (bool s : seen) all = all && s;
  o.require(all, "not all eight flag combinations built");
  o.detail << reference::arch_ablation().size() << " rows, 8 flag combinations built;";
  for (const auto& [family, counts] : params_by_family) {
    o.detail << " " << family << " " << fmt(static_cast<double>(*counts.begin()) * 1e-6, 2) << "M";
    o.require(counts.size() == 1, family + " params vary with windows");
  }
  o.detail << " (window-independent)";
}

// 9 -------------------------------------------------------------------------
void checkpoint_adaptation(Outcome& o) {
  const Tensor c({16, 16, 3, 4}, 0.0625);
  const Tensor ac = adapt_patch_kernel(c);
  bool constants = ac.dims() == Dims{8, 8, 3, 4};
  for (double v : ac.data()) constants = constants && v == 0.0625;
  o.require(constants, "kernel constant");

  Tensor ramp({16, 16, 3, 1});
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x)
      for (std::size_t ch = 0; ch < 3; ++ch) ramp[(y * 16 + x) * 3 + ch] = 0.5 * y - 1.25 * x + double(ch);
  double worst = 0.0;
  for (std::size_t target : {8, 6}) {
    const Tensor a = adapt_patch_kernel(ramp, target);
    for (std::size_t y = 0; y < target; ++y)
      for (std::size_t x = 0; x < target; ++x)
        for (std::size_t ch = 0; ch < 3; ++ch) {
          const double sy = double(y) * 15.0 / double(target - 1), sx = double(x) * 15.0 / double(target - 1);
          worst = std::max(worst, std::abs(a[(y * target + x) * 3 + ch] - (0.5 * sy - 1.25 * sx + double(ch))));
        }
  }
  o.detail << "kernel constants exact, ramp max err " << worst;
  o.require(worst <= kRampTol, "kernel ramp");

  const Tensor pc({14, 14, 8}, -0.75);
  const Tensor big = adapt_pos_embedding(pc, 112, 112);
  bool pos_const = big.dims() == Dims{112, 112, 8};
  for (double v : big.data()) pos_const = pos_const && v == -0.75;
  const Tensor rp = oracle::random_tensor({14, 14, 8}, 5);
  const bool identity = adapt_pos_embedding(rp, 14, 14) == rp;
  o.detail << "; pos 14->112 constants " << (pos_const ? "exact" : "CHANGED") << ", equal-size "
           << (identity ? "identity" : "NOT identity");
  o.require(pos_const && identity, "position table");
}

// 10 ------------------------------------------------------------------------
std::pair<int, std::string> run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + UVIT_CLI_PATH + "\" " + args;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, {}};
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  return {pclose(pipe), out};
}

void determinism(Outcome& o) {
  const std::string args = "forward --preset uvit-t-dense --input 64 --seed 7";
  const auto a = run_cli(args), b = run_cli(args);
  o.require(a.first == 0 && b.first == 0, "CLI exit status");
  o.require(a.second == b.second, "outputs differ");
  try {
    const auto j = nlohmann::json::parse(a.second);
    const auto& f = j.at("outputs").at(0);
    o.detail << "shape " << f.at("shape").dump() << ", fnv1a " << f.at("fnv1a").get<std::string>() << " twice";
    o.require(f.at("shape") == nlohmann::json::array({8, 8, 222}), "grid shape");
  } catch (const std::exception& e) {
    o.require(false, std::string("unparseable output: ") + e.what());
  }
}

}  // namespace

int main() {
  const std::pair<const char*, void (*)(Outcome&)> criteria[] = {
      {"params golden", params_golden},
      {"FLOPs golden", flops_golden},
      {"window-ablation deltas", window_deltas},
      {"window equivalence", window_equivalence},
      {"gradient suite", gradient_suite},
      {"receptive-field metric", rrf_metric},
      {"strategy parser", parser_suite},
      {"ablation-factory invariants", ablation_invariants},
      {"checkpoint adaptation", checkpoint_adaptation},
      {"end-to-end determinism", determinism},
  };
  int passed = 0, index = 0;
  for (const auto& [name, fn] : criteria) {
    ++index;
    Outcome o;
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    passed += o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << index << "] " << name << ": " << o.detail.str() << std::endl;
  }
  std::cout << passed << "/" << index << " criteria passed" << std::endl;
  return passed == index ? 0 : 1;
}
