#include <cmath>
#include <set>

#include "unloc/data.hpp"
#include "unloc/errors.hpp"

namespace unloc {

namespace {

constexpr std::string_view kSlot = "{label}";

std::size_t count_slots(const std::string& t) {
  std::size_t n = 0;
  for (auto pos = t.find(kSlot); pos != std::string::npos; pos = t.find(kSlot, pos + 1)) ++n;
  return n;
}

}  // namespace

PromptSet::PromptSet(std::vector<std::string> templates) : templates_(std::move(templates)) {
  if (templates_.empty()) throw ConfigError("prompt set has no templates");
  for (std::size_t i = 0; i < templates_.size(); ++i) {
    if (count_slots(templates_[i]) != 1) {
      throw ConfigError("prompt template " + std::to_string(i) + " ('" + templates_[i] +
                        "') must contain exactly one {label} slot");
    }
  }
}

PromptSet PromptSet::kinetics() {
  std::vector<std::string> templates{"a video of a person doing {label}"};
  for (const char* lead : {"a photo of", "a video of", "a example of", "a demonstration of"}) {
    for (const char* tail : {"", " a person", " a person using", " a person doing",
                             " a person during", " a person performing",
                             " a person practicing"}) {
      std::string t = std::string(lead) + tail + " {label}";
      if (t != templates.front()) templates.push_back(t);
    }
  }
  return PromptSet(std::move(templates));
}

std::string PromptSet::render(std::size_t index, const std::string& label) const {
  std::string t = templates_.at(index);
  t.replace(t.find(kSlot), kSlot.size(), label);
  return t;
}

TextTokens apply_prompts(const std::string& label, const PromptSet& prompts,
                         const TextEncoder& encoder, const Vocabulary& vocab,
                         int max_tokens, bool ensemble) {
  TextTokens first = encode_text(vocab.tokenize(prompts.render(0, label)), encoder, max_tokens);
  if (!ensemble) return first;

  // Duplicate renderings carry no extra information and are skipped.
  std::set<std::string> seen;
  std::vector<ag::Tensor> summaries;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const std::string text = prompts.render(i, label);
    if (!seen.insert(text).second) continue;
    ag::Tensor rows = i == 0 ? first.tokens
                             : encode_text(vocab.tokenize(text), encoder, max_tokens).tokens;
    summaries.push_back(ag::slice_rows(rows, first.cls_index, 1));
  }
  const ag::Tensor stacked = ag::concat_rows(summaries);
  const std::vector<float> weights(summaries.size(), 1.0f / static_cast<float>(summaries.size()));
  ag::Tensor average = ag::weighted_sum_rows(stacked, weights);

  double mean_norm = 0.0;
  for (const auto& s : summaries) mean_norm += s.value().norm();
  mean_norm /= static_cast<double>(summaries.size());
  const double avg_norm = average.value().norm();
  if (avg_norm > 0.0) average = ag::scale(average, static_cast<float>(mean_norm / avg_norm));

  const Eigen::Index rows = first.tokens.rows();
  std::vector<ag::Tensor> parts;
  if (first.cls_index > 0) parts.push_back(ag::slice_rows(first.tokens, 0, first.cls_index));
  parts.push_back(average);
  if (first.cls_index + 1 < rows) {
    parts.push_back(ag::slice_rows(first.tokens, first.cls_index + 1, rows - first.cls_index - 1));
  }
  first.tokens = ag::concat_rows(parts);
  return first;
}

}  // namespace unloc
