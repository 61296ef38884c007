#include "uvit/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>

#include "uvit/errors.hpp"

namespace uvit {

namespace {

constexpr double kStochasticTol = 1e-6;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double relative_receptive_field(const Tensor& scores) {
  if (scores.rank() != 2 || scores.dim(0) != scores.dim(1)) {
    throw ContractError("relative_receptive_field: expected a square matrix, got " + scores.shape_string());
  }
  const std::size_t L = scores.dim(0);
  double total = 0.0;
  for (std::size_t i = 1; i <= L; ++i) {
    double row_sum = 0.0, spread = 0.0;
    for (std::size_t j = 1; j <= L; ++j) {
      const double s = scores.at(i - 1, j - 1);
      if (!(s >= 0.0)) {
        throw ContractError("relative_receptive_field: negative or non-finite score in row " + std::to_string(i - 1));
      }
      row_sum += s;
      spread += s * static_cast<double>(i > j ? i - j : j - i);
    }
    if (std::abs(row_sum - 1.0) > kStochasticTol) {
      throw ContractError("relative_receptive_field: row " + std::to_string(i - 1) + " sums to " + num(row_sum));
    }
    // max(i, L - i) is never zero for i >= 1.
    total += spread / static_cast<double>(std::max(i, L - i));
  }
  return total / static_cast<double>(L);
}

RRFSummary layer_rf_summary(std::span<const LayerAttention> layers) {
  RRFSummary out;
  std::size_t heads = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& scores = layers[l].scores;
    if (scores.empty() || scores.front().empty()) {
      throw ContractError("layer_rf_summary: layer " + std::to_string(l) + " has no heads");
    }
    const std::size_t h = scores.front().size();
    if (l == 0) heads = h;
    LayerRF rf;
    rf.layer = l;
    rf.windows = scores.size();
    rf.per_head.assign(h, 0.0);
    for (const auto& window : scores) {
      if (window.size() != heads) {
        throw ContractError("layer_rf_summary: ragged head counts (" + std::to_string(window.size()) + " vs " +
                            std::to_string(heads) + ") at layer " + std::to_string(l));
      }
      for (std::size_t k = 0; k < h; ++k) rf.per_head[k] += relative_receptive_field(window[k]);
    }
    for (double& r : rf.per_head) r /= static_cast<double>(rf.windows);
    double sum = 0.0;
    for (double r : rf.per_head) sum += r;
    rf.mean = sum / static_cast<double>(h);
    double var = 0.0;
    for (double r : rf.per_head) var += (r - rf.mean) * (r - rf.mean);
    rf.stddev = std::sqrt(var / static_cast<double>(h));
    out.layers.push_back(std::move(rf));
  }
  return out;
}

std::vector<LayerAttention> read_scores_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("scores csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "layer,head,window,row,col,score") {
    throw FormatError("scores csv: expected header 'layer,head,window,row,col,score', got '" + line + "'");
  }
  using Key = std::tuple<std::size_t, std::size_t, std::size_t>;  // layer, window, head
  std::map<Key, std::map<std::pair<std::size_t, std::size_t>, double>> cells;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t idx[5];
    double score = 0.0;
    std::istringstream fields(line);
    std::string field;
    for (int f = 0; f < 6; ++f) {
      if (!std::getline(fields, field, ',')) {
        throw FormatError("scores csv line " + std::to_string(line_no) + ": expected 6 fields");
      }
      const char* b = field.data();
      const char* e = b + field.size();
      const auto res = f < 5 ? std::from_chars(b, e, idx[f]) : std::from_chars(b, e, score);
      if (res.ec != std::errc() || res.ptr != e) {
        throw FormatError("scores csv line " + std::to_string(line_no) + ": bad field '" + field + "'");
      }
    }
    if (std::getline(fields, field, ',')) {
      throw FormatError("scores csv line " + std::to_string(line_no) + ": too many fields");
    }
    auto& m = cells[Key{idx[0], idx[2], idx[1]}];
    if (!m.emplace(std::pair{idx[3], idx[4]}, score).second) {
      throw FormatError("scores csv line " + std::to_string(line_no) + ": duplicate cell");
    }
  }
  if (cells.empty()) throw FormatError("scores csv: no rows");

  std::vector<LayerAttention> layers;
  for (const auto& [key, m] : cells) {
    const auto [layer, window, head] = key;
    if (layer > layers.size()) throw FormatError("scores csv: layer indices are not dense");
    if (layer == layers.size()) layers.emplace_back();
    auto& scores = layers[layer].scores;
    if (window > scores.size()) throw FormatError("scores csv: window indices are not dense");
    if (window == scores.size()) scores.emplace_back();
    if (head != scores[window].size()) throw FormatError("scores csv: head indices are not dense");
    std::size_t L = 0;
    while (L * L < m.size()) ++L;
    if (L * L != m.size()) {
      throw FormatError("scores csv: layer " + std::to_string(layer) + " head " + std::to_string(head) +
                        " is not a full square matrix");
    }
    Tensor t({L, L});
    for (const auto& [rc, v] : m) {
      if (rc.first >= L || rc.second >= L) {
        throw FormatError("scores csv: layer " + std::to_string(layer) + " head " + std::to_string(head) +
                          " is not a full square matrix");
      }
      t.at(rc.first, rc.second) = v;
    }
    scores[window].push_back(std::move(t));
  }
  for (auto& l : layers) {
    const std::size_t L = l.scores.front().front().dim(0);
    l.layout = WindowLayout{1, L * l.scores.size(), 1, L};
  }
  return layers;
}

void write_scores_csv(std::ostream& out, std::span<const LayerAttention> layers) {
  out << "layer,head,window,row,col,score\n";
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& scores = layers[l].scores;
    for (std::size_t w = 0; w < scores.size(); ++w)
      for (std::size_t h = 0; h < scores[w].size(); ++h) {
        const Tensor& t = scores[w][h];
        for (std::size_t i = 0; i < t.dim(0); ++i)
          for (std::size_t j = 0; j < t.dim(1); ++j)
            out << l << ',' << h << ',' << w << ',' << i << ',' << j << ',' << num(t.at(i, j)) << '\n';
      }
  }
}

void write_rf_long_csv(std::ostream& out, const RRFSummary& summary) {
  out << "layer,head,r\n";
  for (const auto& l : summary.layers)
    for (std::size_t h = 0; h < l.per_head.size(); ++h) out << l.layer << ',' << h << ',' << num(l.per_head[h]) << '\n';
}

void write_rf_summary_csv(std::ostream& out, const RRFSummary& summary) {
  out << "layer,mean,std,windows,windowed\n";
  for (const auto& l : summary.layers) {
    out << l.layer << ',' << num(l.mean) << ',' << num(l.stddev) << ',' << l.windows << ','
        << (l.windowed() ? "true" : "false") << '\n';
  }
}

}  // namespace uvit
