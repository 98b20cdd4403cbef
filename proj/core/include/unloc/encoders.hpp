#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "unloc/autograd.hpp"
#include "unloc/layers.hpp"

namespace unloc {

/// One token per sampled frame; padded rows are zero and masked out.
struct FrameTokens {
  ag::Tensor tokens;
  std::vector<std::uint8_t> mask;

  Eigen::Index size() const { return tokens.rows(); }
};

/// T x K text tokens; row `cls_index` summarises the whole sequence.
struct TextTokens {
  ag::Tensor tokens;
  std::vector<std::uint8_t> mask;
  int cls_index = 0;

  int valid_count() const;
};

/// Raw feature rows as stored on disk.
struct FeatureArray {
  ag::Matrix rows;
  std::vector<std::uint8_t> mask;
};

/// Word-level vocabulary with reserved ids for padding, summary and unknown.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kUnk = 2;

  Vocabulary();
  int add(const std::string& word);
  int id(const std::string& word) const;
  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

  /// Lower-cases and splits on whitespace; unknown words map to kUnk.
  std::vector<int> tokenize(const std::string& text) const;
  /// Adds every word of `text`.
  void add_text(const std::string& text);

 private:
  std::vector<std::string> words_;
  std::map<std::string, int> index_;
};

std::vector<std::string> split_words(const std::string& text);

/// Per-frame encoder: raw features -> K-wide tokens. The learned variant is
/// a two-layer affine map with a GELU in between.
class FrameEncoder {
 public:
  FrameEncoder() = default;
  FrameEncoder(nn::ParameterStore& store, int raw_dim, int width, Rng& rng,
               const std::string& group = "image_encoder");
  /// Pass-through encoder for precomputed features already of width K.
  static FrameEncoder identity(int width);

  ag::Tensor operator()(const ag::Tensor& raw) const;
  int input_width() const { return input_width_; }
  int width() const { return width_; }
  bool is_identity() const { return identity_; }

 private:
  nn::Linear layer1_, layer2_;
  int input_width_ = 0;
  int width_ = 0;
  bool identity_ = false;
};

/// Text encoder over token ids. Word rows are an embedding lookup followed
/// by a two-layer map; the summary row encodes the summary embedding plus
/// the mean word embedding through the same map.
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(nn::ParameterStore& store, int vocab_size, int width, Rng& rng,
              const std::string& group = "text_encoder");

  /// Encodes [CLS, ids...] truncated from the right to `max_tokens`.
  ag::Tensor encode_rows(const std::vector<int>& sequence) const;
  int width() const { return width_; }
  int vocab_size() const { return vocab_size_; }

 private:
  ag::Tensor embedding_;
  nn::Linear layer1_, layer2_;
  int width_ = 0;
  int vocab_size_ = 0;
};

/// A frame and a text encoder of equal width. `paired` records whether they
/// were initialised/trained together.
struct EncoderPair {
  FrameEncoder frame_encoder;
  TextEncoder text_encoder;
  bool paired = true;
};

FrameTokens encode_frames(const FeatureArray& raw, const FrameEncoder& encoder,
                          bool freeze);
TextTokens encode_text(const std::vector<int>& ids, const TextEncoder& encoder,
                       int max_tokens);

/// Little-endian "ULFT" container: version, N, K, N*K floats, N mask bytes.
void write_features(const std::filesystem::path& path, const FeatureArray& features);
FeatureArray read_features(const std::filesystem::path& path);
/// Loads a feature file as frame tokens (identity encoding).
FrameTokens load_precomputed_features(const std::filesystem::path& path);

inline constexpr std::uint32_t kFeatureFileVersion = 1;

}  // namespace unloc
