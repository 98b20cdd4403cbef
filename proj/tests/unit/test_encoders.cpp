#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "unloc/encoders.hpp"
#include "unloc/errors.hpp"
#include "unloc/layers.hpp"
#include "unloc/random.hpp"

using namespace unloc;
namespace fs = std::filesystem;

namespace {

FeatureArray features(int n, int k, std::uint64_t seed) {
  Rng rng(seed);
  return {rng.normal_matrix(n, k, 1.0), std::vector<std::uint8_t>(static_cast<std::size_t>(n), 1)};
}

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "unloc_encoder_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(FrameEncoding, IdentityEncoder) {
  const FeatureArray raw{ag::Matrix::Identity(4, 4), {1, 1, 1, 1}};
  const FrameTokens t = encode_frames(raw, FrameEncoder::identity(4), false);
  EXPECT_EQ(t.tokens.value(), ag::Matrix::Identity(4, 4));
}

TEST(FrameEncoding, PaddedRowsAreZeroAndMasked) {
  nn::ParameterStore store;
  Rng rng(1);
  const FrameEncoder enc(store, 6, 8, rng);
  FeatureArray raw = features(5, 6, 2);
  raw.mask = {1, 1, 1, 0, 0};
  const FrameTokens t = encode_frames(raw, enc, false);
  EXPECT_EQ(t.tokens.rows(), 5);
  EXPECT_EQ(t.mask, raw.mask);
  EXPECT_TRUE(t.tokens.value().bottomRows(2).isZero());
}

TEST(FrameEncoding, Deterministic) {
  nn::ParameterStore s1, s2;
  Rng r1(3), r2(3);
  const FrameEncoder a(s1, 6, 8, r1), b(s2, 6, 8, r2);
  const FeatureArray raw = features(5, 6, 4);
  EXPECT_EQ(encode_frames(raw, a, false).tokens.value(), encode_frames(raw, b, false).tokens.value());
}

TEST(FrameEncoding, FrozenEncoderGetsNoGradient) {
  nn::ParameterStore store;
  Rng rng(5);
  const FrameEncoder enc(store, 6, 8, rng);
  const FrameTokens t = encode_frames(features(5, 6, 6), enc, true);
  ag::backward(ag::sum(t.tokens));
  for (const auto& p : store.parameters()) EXPECT_EQ(p.tensor.grad().size(), 0) << p.name;
}

TEST(FrameEncoding, WidthMismatch) {
  nn::ParameterStore store;
  Rng rng(7);
  const FrameEncoder enc(store, 6, 8, rng);
  EXPECT_THROW(encode_frames(features(5, 7, 8), enc, false), InputError);
}

TEST(TextEncoding, PaddingAndTruncation) {
  nn::ParameterStore store;
  Rng rng(9);
  const TextEncoder enc(store, 64, 8, rng);
  // The summary token takes one slot.
  TextTokens t = encode_text({5, 6, 7, 8}, enc, 16);
  EXPECT_EQ(t.tokens.rows(), 16);
  EXPECT_EQ(t.valid_count(), 5);
  EXPECT_TRUE(t.tokens.value().bottomRows(11).isZero());

  std::vector<int> long_caption(40, 9);
  t = encode_text(long_caption, enc, 32);
  EXPECT_EQ(t.tokens.rows(), 32);
  EXPECT_EQ(t.valid_count(), 32);

  t = encode_text({}, enc, 16);
  EXPECT_EQ(t.valid_count(), 1);
  EXPECT_EQ(t.mask[static_cast<std::size_t>(t.cls_index)], 1);
}

TEST(TextEncoding, UnknownIdRejected) {
  nn::ParameterStore store;
  Rng rng(10);
  const TextEncoder enc(store, 16, 8, rng);
  EXPECT_THROW(encode_text({99}, enc, 8), InputError);
}

TEST(Vocabulary, Tokenize) {
  Vocabulary v;
  v.add_text("Open the Door");
  const auto ids = v.tokenize("open THE window");
  ASSERT_EQ(ids.size(), 3u);
  EXPECT_EQ(ids[0], v.id("open"));
  EXPECT_EQ(ids[2], Vocabulary::kUnk);
}

TEST(FeatureFile, RoundTripIsBitExact) {
  FeatureArray f = features(128, 24, 11);
  f.mask[127] = 0;
  const fs::path a = temp_file("a.ulft"), b = temp_file("b.ulft");
  write_features(a, f);
  const FrameTokens t = load_precomputed_features(a);
  EXPECT_EQ(t.tokens.rows(), 128);
  EXPECT_EQ(t.tokens.cols(), 24);
  write_features(b, read_features(a));
  std::ifstream ia(a, std::ios::binary), ib(b, std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(ia)), {});
  const std::string sb((std::istreambuf_iterator<char>(ib)), {});
  EXPECT_EQ(sa, sb);
}

TEST(FeatureFile, TruncatedPayload) {
  const fs::path a = temp_file("t.ulft");
  write_features(a, features(8, 4, 12));
  fs::resize_file(a, fs::file_size(a) - 10);
  EXPECT_THROW(read_features(a), FormatError);
}

TEST(FeatureFile, ZeroFramesRejected) {
  const fs::path a = temp_file("z.ulft");
  EXPECT_THROW(write_features(a, FeatureArray{ag::Matrix(0, 4), {}}), InputError);
  // A hand-built header with N = 0.
  std::ofstream out(a, std::ios::binary);
  const char magic[4] = {'U', 'L', 'F', 'T'};
  const std::uint32_t header[3] = {kFeatureFileVersion, 0, 4};
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.close();
  try {
    read_features(a);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 8u);
  }
}
