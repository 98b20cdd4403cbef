#include "unloc/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "unloc/errors.hpp"

namespace unloc {

namespace {

constexpr char kMagic[4] = {'U', 'L', 'C', 'K'};

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    read(&v, sizeof v, what);
    return v;
  }
  void read(void* dst, std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated reading ") + what, bytes_.size());
    }
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::string string(std::size_t n, const char* what) {
    std::string s(n, '\0');
    read(s.data(), n, what);
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const UnlocModel& model, const CheckpointInfo& info,
                     const std::filesystem::path& path) {
  nlohmann::json meta;
  meta["model"] = nlohmann::json::parse(to_json(model.config()));
  meta["vocabulary"] = model.vocabulary().words();
  meta["prompts"] = model.prompts().templates();
  meta["classes"] = info.classes;
  meta["task"] = to_string(info.task);
  const std::string meta_text = meta.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
  out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
  const auto& params = model.parameters().parameters();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const auto& v = p.tensor.value();
    put_u32(out, static_cast<std::uint32_t>(v.rows()));
    put_u32(out, static_cast<std::uint32_t>(v.cols()));
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
  }
  if (!out) throw Error("failed writing " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));

  char magic[4];
  r.read(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a checkpoint file", 0);
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  const std::uint32_t meta_len = r.u32("metadata length");
  const std::size_t meta_at = r.pos();
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.string(meta_len, "metadata"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint metadata: ") + e.what(), meta_at);
  }

  CheckpointInfo info;
  Vocabulary vocab;
  ModelConfig config;
  std::vector<std::string> prompts;
  try {
    config = model_config_from_json(meta.at("model").dump());
    for (const auto& w : meta.at("vocabulary").get<std::vector<std::string>>()) vocab.add(w);
    prompts = meta.at("prompts").get<std::vector<std::string>>();
    info.classes = meta.at("classes").get<std::vector<std::string>>();
    info.task = parse_task(meta.at("task").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint metadata: ") + e.what(), meta_at);
  }
  UnlocModel model(config, std::move(vocab), 0);
  model.set_prompts(PromptSet(prompts));

  const std::uint32_t count = r.u32("parameter count");
  auto& store = model.parameters();
  if (count != store.parameters().size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " arrays, architecture has " +
                          std::to_string(store.parameters().size()),
                      r.pos());
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.pos();
    const std::string name = r.string(r.u32("name length"), "name");
    auto* p = store.find(name);
    if (!p) throw FormatError("unknown parameter '" + name + "'", at);
    const std::uint32_t rows = r.u32("rows");
    const std::uint32_t cols = r.u32("cols");
    auto& v = p->tensor.mutable_value();
    if (rows != v.rows() || cols != v.cols()) {
      throw FormatError("parameter '" + name + "' has the wrong shape", at);
    }
    r.read(v.data(), static_cast<std::size_t>(v.size()) * sizeof(float), "parameter data");
  }
  if (!r.done()) throw FormatError("trailing bytes after the last parameter", r.pos());
  return {std::move(model), std::move(info)};
}

std::size_t copy_matching_parameters(nn::ParameterStore& dst, const nn::ParameterStore& src) {
  std::size_t copied = 0;
  for (auto& p : dst.parameters()) {
    const auto* q = src.find(p.name);
    if (!q) continue;
    const auto& v = q->tensor.value();
    auto& target = p.tensor.mutable_value();
    if (v.rows() != target.rows() || v.cols() != target.cols()) continue;
    target = v;
    ++copied;
  }
  return copied;
}

}  // namespace unloc
