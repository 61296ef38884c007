#include "uvit/weights.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "uvit/errors.hpp"

namespace uvit {

namespace {

constexpr std::array<char, 8> kMagic{'U', 'V', 'I', 'T', 'W', 'S', '0', '1'};
constexpr std::uint64_t kMaxManifestBytes = 1ULL << 30;

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw FormatError("weights: truncated file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}

}  // namespace

void WeightSet::insert(std::string name, Tensor value) {
  if (auto it = index_.find(name); it != index_.end()) {
    entries_[it->second].second = std::move(value);
    return;
  }
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

void WeightSet::erase(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return;
  entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(it->second));
  index_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) index_.emplace(entries_[i].first, i);
}

bool WeightSet::contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

const Tensor& WeightSet::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("weight '" + std::string(name) + "' is missing");
  return entries_[it->second].second;
}

std::size_t WeightSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

void write_weights(const WeightSet& weights, std::ostream& out) {
  nlohmann::json manifest;
  manifest["format"] = "uvit-weights";
  manifest["version"] = 1;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : weights.entries()) {
    manifest["tensors"].push_back({{"name", name}, {"dims", t.dims()}, {"offset", offset}});
    offset += t.size();
  }
  const std::string text = manifest.dump();
  out.write(kMagic.data(), kMagic.size());
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : weights.entries()) {
    for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw FormatError("weights: write failed");
}

WeightSet read_weights(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw FormatError("weights: bad magic");
  const std::uint64_t len = get_u64(in);
  if (len > kMaxManifestBytes) throw FormatError("weights: manifest too large");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("weights: truncated manifest");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("weights: manifest is not JSON: ") + e.what());
  }
  if (manifest.value("format", "") != "uvit-weights" || manifest.value("version", 0) != 1) {
    throw FormatError("weights: unsupported manifest format/version");
  }
  WeightSet ws;
  std::uint64_t expected_offset = 0;
  try {
    for (const auto& entry : manifest.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto dims = entry.at("dims").get<Dims>();
      if (entry.at("offset").get<std::uint64_t>() != expected_offset) {
        throw FormatError("weights: tensor '" + name + "' has a non-contiguous offset");
      }
      Tensor t(dims);
      for (double& v : t.data()) v = std::bit_cast<double>(get_u64(in));
      expected_offset += t.size();
      ws.insert(name, std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("weights: bad manifest entry: ") + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(std::string("weights: bad tensor dims: ") + e.what());
  }
  return ws;
}

void save_weights(const WeightSet& weights, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("weights: cannot open " + path.string() + " for writing");
  write_weights(weights, out);
}

WeightSet load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("weights: cannot open " + path.string());
  return read_weights(in);
}

}  // namespace uvit
