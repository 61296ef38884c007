#include "uvit/cost.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "uvit/errors.hpp"

namespace uvit {

namespace {

using u64 = std::uint64_t;

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

CostReport build_report(const ArchConfig& cfg) {
  validate(cfg);
  CostReport r;
  auto add = [&r](std::string component, u64 params, u64 macs) {
    r.params += params;
    r.macs += macs;
    r.breakdown.push_back({std::move(component), params, macs});
  };

  const bool cls = cfg.mode == Mode::classification;
  const u64 p = static_cast<u64>(cfg.patch_size);
  const u64 d0 = static_cast<u64>(cfg.stages.front().hidden);
  const u64 g = cfg.embed_grid();
  const u64 patches = g * g;
  const u64 ratio = static_cast<u64>(cfg.ffn_ratio);

  add("embedding", p * p * 3 * d0 + d0, patches * p * p * 3 * d0);
  add("position", patches * d0 + (cls ? 2 * d0 : 0), 0);

  const auto input = static_cast<std::size_t>(cfg.input_size);
  int block = 0;
  for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
    const StageSpec& stage = cfg.stages[s];
    const u64 d = static_cast<u64>(stage.hidden);
    const std::size_t grid = input / static_cast<std::size_t>(stage.input_stride);
    const u64 n = grid * grid + (cls ? 1 : 0);

    if (s > 0) {
      const u64 din = static_cast<u64>(cfg.stages[s - 1].hidden);
      const std::string name = "transition." + std::to_string(s - 1);
      switch (cfg.transitions[s - 1]) {
        case TransitionKind::strided_projection:
          add(name, 4 * din * d + d, n * 4 * din * d);
          break;
        case TransitionKind::width_projection:
          add(name, din * d + d, n * din * d);
          break;
        case TransitionKind::bilinear_merge:
        case TransitionKind::none:
          add(name, 0, 0);
          break;
      }
    }

    std::vector<WindowLayout> layouts;
    if (cls) {
      layouts.assign(static_cast<std::size_t>(stage.depth), WindowLayout{1, n, 1, n});
    } else if (stage.depth > 0) {
      layouts = bind_strategy(stage.windows, stage.depth, grid, grid);
    }
    for (const WindowLayout& layout : layouts) {
      const std::string name = "block." + std::to_string(block++);
      // qkv 3d^2, proj d^2, FFN 2*ratio*d^2
      add(name + ".linear", block_params(d, ratio), n * (4 + 2 * ratio) * d * d);
      add(name + ".attention", 0, attention_macs(layout, d));
    }
  }

  const u64 dl = static_cast<u64>(cfg.final_hidden());
  add("final_norm", 2 * dl, 0);
  if (cls) {
    const u64 c = static_cast<u64>(cfg.num_classes);
    add("head", dl * c + c, dl * c);
  }
  return r;
}

std::string fmt_g(u64 macs) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", static_cast<double>(macs) * 1e-9);
  return buf;
}

}  // namespace

std::uint64_t CostReport::macs_of(const std::string& suffix) const {
  u64 total = 0;
  for (const auto& e : breakdown)
    if (ends_with(e.component, suffix)) total += e.macs;
  return total;
}

std::uint64_t CostReport::params_of(const std::string& suffix) const {
  u64 total = 0;
  for (const auto& e : breakdown)
    if (ends_with(e.component, suffix)) total += e.params;
  return total;
}

std::uint64_t block_params(std::uint64_t d, std::uint64_t ffn_ratio) {
  const u64 inner = ffn_ratio * d;
  return (3 * d * d + 3 * d) + (d * d + d) + (d * inner + inner) + (inner * d + d) + 4 * d;
}

std::uint64_t attention_macs(const WindowLayout& layout, std::uint64_t d) {
  layout.validate();
  const u64 t = layout.tokens_per_window();
  // q k^T and s v each cost t^2 d per window.
  return 2 * d * layout.window_count() * t * t;
}

CostReport count_params(const ArchConfig& cfg) { return build_report(cfg); }

CostReport count_flops(const ArchConfig& cfg, int input) { return build_report(cfg.with_input(input)); }

double OffsetFit::max_abs_residual() const {
  double m = 0.0;
  for (double r : residuals) m = std::max(m, std::abs(r));
  return m;
}

OffsetFit fit_offset(std::span<const double> backbone_gmacs, std::span<const double> totals) {
  if (backbone_gmacs.empty()) throw ContractError("fit_head_offset: no rows");
  if (backbone_gmacs.size() != totals.size()) {
    throw ContractError("fit_head_offset: " + std::to_string(backbone_gmacs.size()) + " backbone values for " +
                        std::to_string(totals.size()) + " totals");
  }
  double gap = 0.0;
  for (std::size_t i = 0; i < totals.size(); ++i) {
    if (!(totals[i] > 0.0)) throw ContractError("fit_head_offset: totals must be positive");
    gap += totals[i] - backbone_gmacs[i];
  }
  OffsetFit fit;
  fit.offset = std::max(0.0, gap / static_cast<double>(totals.size()));
  fit.backbone.assign(backbone_gmacs.begin(), backbone_gmacs.end());
  for (std::size_t i = 0; i < totals.size(); ++i) {
    fit.residuals.push_back((backbone_gmacs[i] + fit.offset - totals[i]) / totals[i]);
  }
  return fit;
}

OffsetFit fit_head_offset(std::span<const OffsetRow> rows) {
  std::vector<double> backbone, totals;
  for (const auto& row : rows) {
    backbone.push_back(count_flops(row.cfg, row.input).gmacs());
    totals.push_back(row.total_gmacs);
  }
  return fit_offset(backbone, totals);
}

void write_cost_csv_header(std::ostream& out, std::span<const std::string> extra) {
  out << "name,depth,width,input,strategy,params,gmacs,embedding_gmacs,linear_gmacs,attention_gmacs,"
         "transition_gmacs,head_gmacs";
  for (const auto& e : extra) out << ',' << e;
  out << '\n';
}

void write_cost_csv_row(std::ostream& out, const ArchConfig& cfg, const CostReport& report,
                        std::span<const std::string> extra) {
  std::string width, strategy;
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    if (i > 0) {
      width += '/';
      strategy += " | ";
    }
    width += std::to_string(cfg.stages[i].hidden);
    strategy += cfg.stages[i].windows.to_string();
  }
  u64 transition = 0;
  for (const auto& e : report.breakdown)
    if (e.component.rfind("transition.", 0) == 0) transition += e.macs;
  out << cfg.name << ',' << cfg.depth() << ',' << width << ',' << cfg.input_size << ',' << strategy << ','
      << report.params << ',' << fmt_g(report.macs) << ',' << fmt_g(report.macs_of("embedding")) << ','
      << fmt_g(report.macs_of(".linear")) << ',' << fmt_g(report.macs_of(".attention")) << ','
      << fmt_g(transition) << ',' << fmt_g(report.macs_of("head"));
  for (const auto& e : extra) out << ',' << e;
  out << '\n';
}

}  // namespace uvit
