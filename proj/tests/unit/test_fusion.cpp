#include <gtest/gtest.h>

#include "unloc/errors.hpp"
#include "unloc/fusion.hpp"
#include "unloc/random.hpp"

using namespace unloc;

namespace {

struct Fixture {
  nn::ParameterStore store;
  FusionModule fusion;
  Rng rng{1};

  explicit Fixture(int frames = 8, int text = 16) {
    FusionSettings s;
    s.width = 8;
    s.max_frames = frames;
    s.max_text_tokens = text;
    fusion = FusionModule(store, s, rng);
  }

  FrameTokens frames(int n) {
    return {ag::Tensor(rng.normal_matrix(n, 8, 1.0), true),
            std::vector<std::uint8_t>(static_cast<std::size_t>(n), 1)};
  }
  TextTokens text(int t, int valid) {
    TextTokens out;
    ag::Matrix m = rng.normal_matrix(t, 8, 1.0);
    out.mask.assign(static_cast<std::size_t>(t), 0);
    for (int i = 0; i < valid; ++i) out.mask[static_cast<std::size_t>(i)] = 1;
    for (int i = valid; i < t; ++i) m.row(i).setZero();
    out.tokens = ag::Tensor(m, true);
    return out;
  }
};

}  // namespace

TEST(Fusion, SequenceLengths) {
  Fixture f;
  const TextTokens t = f.text(16, 5);
  EXPECT_EQ(FusionModule::sequence_length(8, &t, TextMode::AllTokens), 24);
  EXPECT_EQ(FusionModule::sequence_length(8, &t, TextMode::ClsOnly), 9);
  EXPECT_EQ(FusionModule::sequence_length(8, nullptr, TextMode::NoText), 8);
  for (TextMode mode : {TextMode::AllTokens, TextMode::ClsOnly, TextMode::NoText}) {
    const auto out = f.fusion.fuse(f.frames(8), &t, mode);
    EXPECT_EQ(out.x.rows(), 8);
    EXPECT_EQ(out.x.cols(), 8);
  }
}

TEST(Fusion, ZeroedBlocksPassThroughPositions) {
  Fixture f;
  for (auto& b : f.fusion.blocks()) b.zero_output_projections();
  const FrameTokens x = f.frames(8);
  const auto out = f.fusion.fuse(x, nullptr, TextMode::NoText);
  const ag::Matrix expected = x.tokens.value() + f.fusion.positional().value().topRows(8);
  EXPECT_TRUE(out.x.value().isApprox(expected, 1e-6f));
}

TEST(Fusion, PaddedTextTokensAreInvisible) {
  Fixture f;
  const FrameTokens x = f.frames(8);
  TextTokens t = f.text(16, 5);
  const auto a = f.fusion.fuse(x, &t, TextMode::AllTokens);
  ag::Matrix m = t.tokens.value();
  m.row(7).setConstant(3.0f);
  m.row(12).setConstant(-2.0f);
  m.row(7).swap(m.row(12));
  t.tokens = ag::Tensor(m);
  const auto b = f.fusion.fuse(x, &t, TextMode::AllTokens);
  EXPECT_EQ(a.x.value(), b.x.value());
}

TEST(Fusion, PaddedFramesDoNotLeak) {
  Fixture f;
  FrameTokens x = f.frames(8);
  x.mask = {1, 1, 1, 1, 1, 1, 0, 0};
  const TextTokens t = f.text(16, 4);
  const auto a = f.fusion.fuse(x, &t, TextMode::AllTokens);
  ag::Matrix m = x.tokens.value();
  m.bottomRows(2).setConstant(9.0f);
  x.tokens = ag::Tensor(m);
  const auto b = f.fusion.fuse(x, &t, TextMode::AllTokens);
  EXPECT_EQ(a.x.value().topRows(6), b.x.value().topRows(6));
  EXPECT_TRUE(b.x.value().bottomRows(2).isZero());
}

TEST(Fusion, PerClassMatchesSingleFuse) {
  Fixture f;
  const FrameTokens x = f.frames(8);
  const TextTokens t = f.text(16, 5);
  const std::vector<TextTokens> same{t, t, t};
  const auto out = f.fusion.fuse_per_class(x, same, TextMode::AllTokens);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].x.value(), out[1].x.value());
  EXPECT_EQ(out[1].x.value(), out[2].x.value());
  const std::vector<TextTokens> single{t};
  EXPECT_EQ(f.fusion.fuse_per_class(x, single, TextMode::AllTokens)[0].x.value(),
            f.fusion.fuse(x, &t, TextMode::AllTokens).x.value());
  EXPECT_THROW(f.fusion.fuse_per_class(x, {}, TextMode::AllTokens), InputError);
}

TEST(Fusion, GradientReachesTextTokens) {
  Fixture f;
  FrameTokens x = f.frames(8);
  TextTokens t = f.text(16, 5);
  for (TextMode mode : {TextMode::AllTokens, TextMode::ClsOnly}) {
    x.tokens.zero_grad();
    t.tokens.zero_grad();
    ag::backward(ag::sum(f.fusion.fuse(x, &t, mode).x));
    ASSERT_GT(t.tokens.grad().size(), 0);
    EXPECT_GT(t.tokens.grad().row(t.cls_index).norm(), 0.0f);
    EXPECT_GT(x.tokens.grad().norm(), 0.0f);
  }
}

TEST(Fusion, WidthMismatch) {
  Fixture f;
  FrameTokens bad{ag::Tensor(ag::Matrix::Zero(8, 4)), std::vector<std::uint8_t>(8, 1)};
  EXPECT_THROW(f.fusion.fuse(bad, nullptr, TextMode::NoText), InputError);
}
