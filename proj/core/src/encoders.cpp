#include "unloc/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "unloc/errors.hpp"

namespace unloc {

int TextTokens::valid_count() const {
  return static_cast<int>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string word;
  while (in >> word) {
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.push_back(word);
  }
  return out;
}

Vocabulary::Vocabulary() {
  add("[pad]");
  add("[cls]");
  add("[unk]");
}

int Vocabulary::add(const std::string& word) {
  if (auto it = index_.find(word); it != index_.end()) return it->second;
  const int id = static_cast<int>(words_.size());
  words_.push_back(word);
  index_.emplace(word, id);
  return id;
}

int Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::tokenize(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(id(w));
  return ids;
}

void Vocabulary::add_text(const std::string& text) {
  for (const auto& w : split_words(text)) add(w);
}

FrameEncoder::FrameEncoder(nn::ParameterStore& store, int raw_dim, int width, Rng& rng,
                           const std::string& group)
    : layer1_(store, group + ".fc1", group, raw_dim, width, rng),
      layer2_(store, group + ".fc2", group, width, width, rng),
      input_width_(raw_dim),
      width_(width) {}

FrameEncoder FrameEncoder::identity(int width) {
  FrameEncoder enc;
  enc.input_width_ = width;
  enc.width_ = width;
  enc.identity_ = true;
  return enc;
}

ag::Tensor FrameEncoder::operator()(const ag::Tensor& raw) const {
  if (raw.cols() != input_width_) {
    throw InputError("frame encoder expects width " + std::to_string(input_width_) +
                     ", got " + std::to_string(raw.cols()));
  }
  if (identity_) return raw;
  return layer2_(ag::gelu(layer1_(raw)));
}

TextEncoder::TextEncoder(nn::ParameterStore& store, int vocab_size, int width, Rng& rng,
                         const std::string& group)
    : embedding_(store.create(group + ".embedding", group,
                              rng.normal_matrix(vocab_size, width, 1.0))),
      layer1_(store, group + ".fc1", group, width, width, rng),
      layer2_(store, group + ".fc2", group, width, width, rng),
      width_(width),
      vocab_size_(vocab_size) {}

ag::Tensor TextEncoder::encode_rows(const std::vector<int>& words) const {
  for (int id : words) {
    if (id < 0 || id >= vocab_size_) {
      throw InputError("token id " + std::to_string(id) + " outside the vocabulary");
    }
  }
  const int cls_id = Vocabulary::kCls;
  ag::Tensor cls = ag::gather_rows(embedding_, std::span<const int>(&cls_id, 1));
  std::vector<ag::Tensor> rows;
  if (words.empty()) {
    rows.push_back(cls);
  } else {
    ag::Tensor emb = ag::gather_rows(embedding_, words);
    std::vector<float> w(words.size(), 1.0f / static_cast<float>(words.size()));
    rows.push_back(ag::add(cls, ag::weighted_sum_rows(emb, w)));
    rows.push_back(emb);
  }
  ag::Tensor x = ag::concat_rows(rows);
  return layer2_(ag::gelu(layer1_(x)));
}

FrameTokens encode_frames(const FeatureArray& raw, const FrameEncoder& encoder,
                          bool freeze) {
  if (raw.rows.cols() != encoder.input_width()) {
    throw InputError("raw frame width " + std::to_string(raw.rows.cols()) +
                     " does not match encoder input width " +
                     std::to_string(encoder.input_width()));
  }
  if (static_cast<Eigen::Index>(raw.mask.size()) != raw.rows.rows()) {
    throw InputError("frame mask length differs from frame count");
  }
  FrameTokens out;
  out.mask = raw.mask;
  ag::Tensor input = ag::constant(raw.rows);
  if (freeze) {
    ag::NoGradGuard guard;
    out.tokens = ag::mask_rows(encoder(input), out.mask);
  } else {
    out.tokens = ag::mask_rows(encoder(input), out.mask);
  }
  return out;
}

TextTokens encode_text(const std::vector<int>& ids, const TextEncoder& encoder,
                       int max_tokens) {
  if (max_tokens < 1) throw InputError("max_tokens must be >= 1");
  const std::size_t keep_words =
      std::min<std::size_t>(ids.size(), static_cast<std::size_t>(max_tokens - 1));
  std::vector<int> words(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep_words));
  ag::Tensor rows = encoder.encode_rows(words);
  const int valid = static_cast<int>(rows.rows());

  TextTokens out;
  out.cls_index = 0;
  out.mask.assign(static_cast<std::size_t>(max_tokens), 0);
  std::fill(out.mask.begin(), out.mask.begin() + valid, 1);
  if (valid < max_tokens) {
    std::vector<ag::Tensor> parts{
        rows, ag::constant(ag::Matrix::Zero(max_tokens - valid, encoder.width()))};
    out.tokens = ag::concat_rows(parts);
  } else {
    out.tokens = rows;
  }
  return out;
}

}  // namespace unloc
