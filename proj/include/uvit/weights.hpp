#pragma once

// Named tensor collection and its on-disk container.
//
// File layout (all integers little-endian):
//   bytes 0..7   magic "UVITWS01"
//   bytes 8..15  uint64 manifest length M
//   next M bytes UTF-8 JSON manifest:
//                {"format":"uvit-weights","version":1,
//                 "tensors":[{"name":..., "dims":[...], "offset":E}, ...]}
//                offset E counts float64 elements from the payload start
//   payload      IEEE-754 binary64 values, little-endian, tensors in
//                manifest order, each row-major

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "uvit/tensor.hpp"

namespace uvit {

class WeightSet {
 public:
  /// Adds or replaces; insertion order is kept for new names.
  void insert(std::string name, Tensor value);
  void erase(std::string_view name);

  bool contains(std::string_view name) const;
  /// Throws ConfigError when missing.
  const Tensor& at(std::string_view name) const;

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t total_elements() const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const noexcept { return entries_; }

  bool operator==(const WeightSet& other) const { return entries_ == other.entries_; }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

void write_weights(const WeightSet& weights, std::ostream& out);
/// Throws FormatError on a malformed container.
WeightSet read_weights(std::istream& in);

void save_weights(const WeightSet& weights, const std::filesystem::path& path);
WeightSet load_weights(const std::filesystem::path& path);

}  // namespace uvit
