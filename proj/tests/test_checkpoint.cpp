#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "spikehar/checkpoint.hpp"
#include "spikehar/errors.hpp"

using namespace spikehar;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("named tensors round-trip bit-exactly, order preserved") {
  std::mt19937_64 rng(701);
  NamedTensors tensors;
  tensors.emplace_back("w", Tensor::uniform({3, 4}, -5.0, 5.0, rng));
  tensors.emplace_back("b", Tensor::uniform({4}, -1.0, 1.0, rng));
  tensors.emplace_back("scalar", Tensor::scalar(-0.0));
  std::string path = temp_path("spikehar_test_ckpt.spkc");
  save_checkpoint(path, tensors);
  NamedTensors back = load_checkpoint(path);
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < tensors.size(); ++i) {
    CHECK(back[i].first == tensors[i].first);
    REQUIRE(back[i].second.shape() == tensors[i].second.shape());
    for (int64_t j = 0; j < tensors[i].second.size(); ++j) {
      // bitwise: compare through the bit pattern to catch -0.0 vs 0.0
      double a = back[i].second[j], b = tensors[i].second[j];
      CHECK(std::memcmp(&a, &b, 8) == 0);
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("bad magic, truncation and trailing bytes are format errors") {
  std::string path = temp_path("spikehar_test_badckpt.spkc");
  {
    std::ofstream out(path, std::ios::binary);
    out << "XXXX";
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);

  NamedTensors tensors;
  tensors.emplace_back("w", Tensor({2, 2}, {1, 2, 3, 4}));
  save_checkpoint(path, tensors);
  {
    std::ifstream in(path, std::ios::binary);
    std::string buf((std::istreambuf_iterator<char>(in)), {});
    in.close();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size() - 3));
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);

  save_checkpoint(path, tensors);
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << "junk";
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("load_into_params matches by name and validates shapes") {
  Parameter w("layer.weight", Tensor({2, 2}, {1, 2, 3, 4}));
  Parameter b("layer.bias", Tensor({2}, {5, 6}));
  NamedTensors tensors = collect_params({&w, &b});

  Parameter w2("layer.weight", Tensor({2, 2}));
  Parameter b2("layer.bias", Tensor({2}));
  load_into_params(tensors, {&w2, &b2});
  CHECK(w2.value[3] == 4.0);
  CHECK(b2.value[0] == 5.0);

  Parameter missing("layer.gamma", Tensor({2}));
  CHECK_THROWS_AS(load_into_params(tensors, {&missing}), FormatError);

  Parameter wrong_shape("layer.weight", Tensor({4}));
  CHECK_THROWS_AS(load_into_params(tensors, {&wrong_shape}), FormatError);
}

TEST_CASE("scalar metadata helpers") {
  NamedTensors tensors;
  tensors.emplace_back("meta.t_cls", Tensor::scalar(29.0));
  CHECK(checkpoint_scalar(tensors, "meta.t_cls") == 29.0);
  CHECK(checkpoint_has(tensors, "meta.t_cls"));
  CHECK_FALSE(checkpoint_has(tensors, "meta.other"));
  CHECK_THROWS_AS(checkpoint_scalar(tensors, "meta.other"), FormatError);
}

TEST_CASE("fuzzed random checkpoints round-trip") {
  std::mt19937_64 rng(709);
  std::string path = temp_path("spikehar_test_fuzz.spkc");
  for (int rep = 0; rep < 50; ++rep) {
    NamedTensors tensors;
    int count = static_cast<int>(rng() % 4);
    for (int i = 0; i < count; ++i) {
      Shape shape;
      int rank = static_cast<int>(rng() % 3);
      for (int d = 0; d < rank; ++d) shape.push_back(1 + static_cast<int64_t>(rng() % 4));
      std::string name = "t" + std::to_string(i) + std::string(rng() % 3, '_');
      tensors.emplace_back(name, Tensor::uniform(shape, -1e6, 1e6, rng));
    }
    save_checkpoint(path, tensors);
    NamedTensors back = load_checkpoint(path);
    REQUIRE(back.size() == tensors.size());
    for (size_t i = 0; i < tensors.size(); ++i) {
      CHECK(back[i].first == tensors[i].first);
      CHECK(back[i].second.shape() == tensors[i].second.shape());
      for (int64_t j = 0; j < tensors[i].second.size(); ++j) {
        CHECK(back[i].second[j] == tensors[i].second[j]);
      }
    }
  }
  std::remove(path.c_str());
}

}  // TEST_SUITE
