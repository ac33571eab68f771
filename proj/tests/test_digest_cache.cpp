#include <gtest/gtest.h>

#include <thread>

#include "paracosm/cache.hpp"
#include "paracosm/digest.hpp"
#include "test_support.hpp"

using namespace paracosm;

TEST(Sha256Test, KnownVectors) {
  EXPECT_EQ(sha256_hex(std::string_view("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(std::string_view("")), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Sha256Test, FieldsAreLengthPrefixed) {
  EXPECT_NE(Sha256().field("ab").field("c").hex(), Sha256().field("a").field("bc").hex());
}

TEST(Base64, RoundTripAndPadding) {
  EXPECT_EQ(base64_encode(Bytes{'h', 'e', 'l', 'l', 'o'}), "aGVsbG8=");
  EXPECT_EQ(base64_encode(Bytes{}), "");
  for (std::size_t n = 0; n < 40; ++n) {
    Bytes b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>(i * 37 + 11);
    EXPECT_EQ(base64_decode(base64_encode(b)), b) << n;
  }
  EXPECT_THROW(base64_decode("***"), Error);
}

TEST(CacheKeyTest, EveryFieldMatters) {
  nlohmann::json p{{"steps", 50}};
  auto base = CacheKey::make("image_edit", "m", "prompt", "abc", p);
  EXPECT_EQ(base, CacheKey::make("image_edit", "m", "prompt", "abc", nlohmann::json{{"steps", 50}}));
  EXPECT_NE(base, CacheKey::make("text_to_image", "m", "prompt", "abc", p));
  EXPECT_NE(base, CacheKey::make("image_edit", "m2", "prompt", "abc", p));
  EXPECT_NE(base, CacheKey::make("image_edit", "m", "prompt!", "abc", p));
  EXPECT_NE(base, CacheKey::make("image_edit", "m", "prompt", "abd", p));
  EXPECT_NE(base, CacheKey::make("image_edit", "m", "prompt", "abc", nlohmann::json{{"steps", 51}}));
  EXPECT_EQ(base.digest.size(), 64u);
}

TEST(ContentCacheTest, PutGetAndMiss) {
  paracosm::testing::TempDir dir;
  ContentCache cache(dir.path());
  auto key = CacheKey::make("caption", "m", "p", "d", nlohmann::json::object());
  EXPECT_FALSE(cache.get("caption", key));
  cache.put("caption", key, std::string_view("a cat"));
  auto hit = cache.get("caption", key);
  ASSERT_TRUE(hit);
  EXPECT_EQ(std::string(hit->begin(), hit->end()), "a cat");
  EXPECT_FALSE(cache.get("embed_text", key));
}

TEST(ContentCacheTest, ConcurrentWritersLeaveOneCompleteEntry) {
  paracosm::testing::TempDir dir;
  ContentCache cache(dir.path());
  auto key = CacheKey::make("caption", "m", "p", "d", nlohmann::json::object());
  std::string value(100000, 'x');
  {
    std::vector<std::jthread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&] { cache.put("caption", key, std::string_view(value)); });
  }
  auto hit = cache.get("caption", key);
  ASSERT_TRUE(hit);
  EXPECT_EQ(hit->size(), value.size());
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir.path()))
    if (e.is_regular_file()) ++files;
  EXPECT_EQ(files, 1u);
}
