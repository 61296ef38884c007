#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "oracles.hpp"
#include "uvit/arch.hpp"
#include "uvit/errors.hpp"
#include "uvit/weights.hpp"

using namespace uvit;

TEST_CASE("weight set bookkeeping") {
  WeightSet ws;
  ws.insert("b", Tensor({2}));
  ws.insert("a", Tensor({3}));
  ws.insert("b", Tensor({4}, 1.0));
  CHECK(ws.size() == 2);
  CHECK(ws.entries()[0].first == "b");
  CHECK(ws.at("b").size() == 4);
  CHECK(ws.total_elements() == 7);
  ws.erase("b");
  CHECK_FALSE(ws.contains("b"));
  CHECK(ws.at("a").size() == 3);
  CHECK_THROWS_AS(ws.at("missing"), ConfigError);
}

TEST_CASE("binary round-trip is exact") {
  WeightSet ws;
  ws.insert("x", oracle::random_tensor({3, 4, 5}, 1));
  ws.insert("y.bias", Tensor({1}, {-0.0}));
  ws.insert("z", Tensor({2}, {1e-310, 1e300}));
  std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
  write_weights(ws, ss);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 8) == "UVITWS01");
  CHECK(read_weights(ss) == ws);
}

TEST_CASE("files") {
  const ArchConfig cfg = preset("uvit-t-dense").with_input(32);
  const WeightSet ws = init_weights(cfg, 9);
  const auto path = std::filesystem::temp_directory_path() / "uvit_weights_test.bin";
  save_weights(ws, path);
  CHECK(load_weights(path) == ws);
  std::filesystem::remove(path);
  CHECK_THROWS(load_weights(path));
}

TEST_CASE("malformed containers") {
  auto read = [](const std::string& bytes) {
    std::istringstream in(bytes, std::ios::binary);
    return read_weights(in);
  };
  WeightSet ws;
  ws.insert("x", Tensor({2}, {1.0, 2.0}));
  std::ostringstream out(std::ios::binary);
  write_weights(ws, out);
  const std::string good = out.str();

  CHECK_THROWS_AS(read(""), FormatError);
  CHECK_THROWS_AS(read("NOTMAGIC" + good.substr(8)), FormatError);
  CHECK_THROWS_AS(read(good.substr(0, 12)), FormatError);
  CHECK_THROWS_AS(read(good.substr(0, good.size() - 3)), FormatError);
  std::string bad_json = good;
  bad_json[16] = '!';
  CHECK_THROWS_AS(read(bad_json), FormatError);
}
