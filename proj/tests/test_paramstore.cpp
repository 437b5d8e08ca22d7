#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "sdsclip/core/param_store.hpp"
#include "sdsclip/core/rng.hpp"

using namespace sdsclip;

namespace {

template <typename S>
ParamStoreT<S> sample_store(unsigned seed) {
  Rng rng(seed);
  ParamStoreT<S> store;
  std::vector<S> a, b;
  for (int i = 0; i < 12; ++i) a.push_back(static_cast<S>(rng.normal()));
  for (int i = 0; i < 5; ++i) b.push_back(static_cast<S>(rng.normal()));
  store.insert("clip.image.block0.ln1.gain", TensorT<S>({3, 4}, a));
  store.insert("teacher.unet.bias", TensorT<S>({5}, b), false);
  return store;
}

std::string temp_path(const char* stem) {
  return (std::filesystem::temp_directory_path() / stem).string();
}

}  // namespace

TEST(ParamStore, DuplicateNamesRejected) {
  ParamStore s;
  s.insert("a", Tensor::scalar(1.0));
  EXPECT_THROW(s.insert("a", Tensor::scalar(2.0)), std::invalid_argument);
}

TEST(ParamStore, RoundTripIsBitExactF64) {
  auto store = sample_store<double>(42);
  const std::string path = temp_path("sdsclip_store_f64.bin");
  store.save(path);
  auto loaded = ParamStore::load(path);
  ASSERT_EQ(loaded.size(), store.size());
  for (const auto& [name, e] : store) {
    ASSERT_TRUE(loaded.contains(name));
    EXPECT_TRUE(loaded.tensor(name).same_values(e.tensor)) << name;
  }
  EXPECT_EQ(loaded.serialize(), store.serialize());
  std::remove(path.c_str());
}

TEST(ParamStore, RoundTripIsBitExactF32) {
  auto store = sample_store<float>(43);
  const std::string path = temp_path("sdsclip_store_f32.bin");
  store.save(path);
  auto loaded = ParamStoreT<float>::load(path);
  EXPECT_EQ(loaded.serialize(), store.serialize());
  std::remove(path.c_str());
}

TEST(ParamStore, DtypeTagIsChecked) {
  auto store = sample_store<double>(44);
  const std::string path = temp_path("sdsclip_store_mixed.bin");
  store.save(path);
  EXPECT_THROW(ParamStoreT<float>::load(path), std::runtime_error);
  std::remove(path.c_str());
}

TEST(ParamStore, HeaderIsMagicThenVersion) {
  auto store = sample_store<double>(45);
  const std::string bytes = store.serialize();
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_EQ(bytes.substr(0, 4), "SDSC");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);  // version 1, little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[5]), 0u);
}

TEST(ParamStore, BadMagicRejected) {
  EXPECT_THROW(ParamStore::deserialize("XXXX\x01\x00\x00\x00"), std::runtime_error);
}

TEST(ParamStore, SubtreeHashTracksContent) {
  auto a = sample_store<double>(46);
  auto b = sample_store<double>(46);
  EXPECT_EQ(a.subtree_hash(), b.subtree_hash());
  EXPECT_EQ(a.subtree_hash("teacher."), b.subtree_hash("teacher."));
  b.set_tensor("teacher.unet.bias", Tensor({5}, {1, 2, 3, 4, 5}));
  EXPECT_NE(a.subtree_hash("teacher."), b.subtree_hash("teacher."));
  EXPECT_EQ(a.subtree_hash("clip."), b.subtree_hash("clip."));
}

TEST(ParamStore, GradAccumulationMatchesShape) {
  ParamStore s;
  s.insert("p", Tensor({2}, {1.0, 2.0}));
  s.accumulate_grad("p", {0.5, 0.5});
  s.accumulate_grad("p", {0.25, 0.25});
  EXPECT_DOUBLE_EQ(s.entry("p").grad[0], 0.75);
  EXPECT_THROW(s.accumulate_grad("p", {1.0}), std::invalid_argument);
  s.clear_grads();
  EXPECT_TRUE(s.entry("p").grad.empty());
}
