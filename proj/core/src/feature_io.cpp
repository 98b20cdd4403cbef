#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "unloc/encoders.hpp"
#include "unloc/errors.hpp"

namespace unloc {

static_assert(std::endian::native == std::endian::little,
              "feature files are little-endian; add byte swapping for this host");

namespace {

constexpr char kMagic[4] = {'U', 'L', 'F', 'T'};
constexpr std::size_t kHeaderBytes = 16;

void put_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(const std::vector<char>& buf, std::size_t offset) {
  std::uint32_t v;
  std::memcpy(&v, buf.data() + offset, sizeof v);
  return v;
}

}  // namespace

void write_features(const std::filesystem::path& path, const FeatureArray& features) {
  const auto n = features.rows.rows();
  const auto k = features.rows.cols();
  if (n < 1) throw InputError("feature file needs at least one frame");
  if (static_cast<Eigen::Index>(features.mask.size()) != n) {
    throw InputError("feature mask length differs from frame count");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kFeatureFileVersion);
  put_u32(out, static_cast<std::uint32_t>(n));
  put_u32(out, static_cast<std::uint32_t>(k));
  out.write(reinterpret_cast<const char*>(features.rows.data()),
            static_cast<std::streamsize>(n * k * sizeof(float)));
  for (auto m : features.mask) {
    const char b = m ? 1 : 0;
    out.write(&b, 1);
  }
  if (!out) throw Error("failed writing " + path.string());
}

FeatureArray read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
  if (buf.size() < kHeaderBytes) {
    throw FormatError("feature file header truncated", buf.size());
  }
  if (std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("bad feature file magic", 0);
  }
  if (get_u32(buf, 4) != kFeatureFileVersion) {
    throw FormatError("unsupported feature file version", 4);
  }
  const std::uint32_t n = get_u32(buf, 8);
  const std::uint32_t k = get_u32(buf, 12);
  if (n < 1) throw FormatError("feature file must hold at least one frame", 8);
  if (k < 1) throw FormatError("feature width must be positive", 12);
  const std::size_t payload = std::size_t{n} * k * sizeof(float);
  const std::size_t expected = kHeaderBytes + payload + n;
  if (buf.size() < expected) {
    throw FormatError("feature payload truncated (expected " +
                          std::to_string(expected) + " bytes)",
                      buf.size());
  }
  if (buf.size() > expected) {
    throw FormatError("trailing bytes after feature mask", expected);
  }
  FeatureArray out;
  out.rows.resize(n, k);
  std::memcpy(out.rows.data(), buf.data() + kHeaderBytes, payload);
  out.mask.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t at = kHeaderBytes + payload + i;
    const auto b = static_cast<unsigned char>(buf[at]);
    if (b > 1) throw FormatError("mask byte must be 0 or 1", at);
    out.mask[i] = b;
  }
  return out;
}

FrameTokens load_precomputed_features(const std::filesystem::path& path) {
  FeatureArray raw = read_features(path);
  FrameTokens out;
  out.mask = raw.mask;
  for (Eigen::Index i = 0; i < raw.rows.rows(); ++i) {
    if (!raw.mask[static_cast<std::size_t>(i)]) raw.rows.row(i).setZero();
  }
  out.tokens = ag::constant(std::move(raw.rows));
  return out;
}

}  // namespace unloc
