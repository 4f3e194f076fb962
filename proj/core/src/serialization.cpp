#include <algorithm>
#include <array>
#include <fstream>
#include <limits>
#include <optional>
#include <iterator>

#include <zlib.h>

#include "binary_io.hpp"
#include "emgauth/auth.hpp"
#include "emgauth/training.hpp"

namespace emgauth {
namespace detail {

std::uint32_t crc32(std::span<const std::uint8_t> data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < data.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(data.size() - done, 1u << 30));
    crc = ::crc32(crc, data.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void ByteWriter::crc_trailer() { u32(crc32(buf_)); }

bool crc_matches(std::span<const std::uint8_t> data) {
  if (data.size() < 4) return false;
  const auto body = data.first(data.size() - 4);
  std::uint32_t stored;
  std::memcpy(&stored, data.data() + body.size(), 4);
  return crc32(body) == stored;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::kIo, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error(Errc::kIo, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

namespace {

constexpr std::uint8_t kModelMagic[4] = {0x45, 0x4D, 0x47, 0x41};     // "EMGA"
constexpr std::uint8_t kTemplateMagic[4] = {0x45, 0x4D, 0x47, 0x57};  // "EMGW"
constexpr std::uint16_t kFormatVersion = 1;

void check_header(detail::ByteReader& r, const std::uint8_t (&magic)[4], const char* what) {
  std::uint8_t got[4];
  r.bytes(got, 4);
  if (std::memcmp(got, magic, 4) != 0) {
    throw Error(Errc::kBadMagic, std::string("not a ") + what + " file (bad magic)");
  }
  const auto version = r.u16();
  if (version != kFormatVersion) {
    throw Error(Errc::kVersionMismatch, std::string(what) + " version " + std::to_string(version) +
                                            " is not supported");
  }
}

// Layer dims are written per weight tensor; the bias follows the weights.
constexpr std::array<std::pair<Tensor, Tensor>, 4> kLayers = {{
    {Tensor::kConv1W, Tensor::kConv1B},
    {Tensor::kConv2W, Tensor::kConv2B},
    {Tensor::kConv3W, Tensor::kConv3B},
    {Tensor::kDenseW, Tensor::kDenseB},
}};

// Size the model file would have if its header is to be believed; nullopt
// when the header itself does not parse. A header cut short counts as larger
// than the input.
std::optional<std::size_t> expected_model_size(std::span<const std::uint8_t> bytes) {
  try {
    detail::ByteReader r(bytes);
    std::uint8_t magic[4];
    r.bytes(magic, 4);
    r.u16();
    const auto len = r.u32();
    std::string json(len, '\0');
    r.bytes(json.data(), len);
    const ModelConfig cfg = ModelConfig::from_json(json);
    std::size_t size = 4 + 2 + 4 + len + 4;
    for (auto [w, b] : kLayers) {
      size += 4 * tensor_shape(cfg, w).size();
      size += 4 * (tensor_size(cfg, w) + tensor_size(cfg, b));
    }
    return size;
  } catch (const Error& e) {
    if (e.code() == Errc::kTruncated) return std::numeric_limits<std::size_t>::max();
    return std::nullopt;
  }
}

}  // namespace

std::vector<std::uint8_t> encode_model(const SiameseModel<float>& model) {
  detail::ByteWriter w;
  w.bytes(kModelMagic, 4);
  w.u16(kFormatVersion);
  const std::string json = model.config().to_json();
  w.u32(static_cast<std::uint32_t>(json.size()));
  w.bytes(json.data(), json.size());
  for (auto [weight, bias] : kLayers) {
    for (auto d : tensor_shape(model.config(), weight)) w.u32(static_cast<std::uint32_t>(d));
    for (float v : model.tensor(weight)) w.f32(v);
    for (float v : model.tensor(bias)) w.f32(v);
  }
  w.crc_trailer();
  return std::move(w.buffer());
}

SiameseModel<float> decode_model(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  check_header(r, kModelMagic, "model");
  if (!detail::crc_matches(bytes)) {
    const auto expected = expected_model_size(bytes);
    if (expected && *expected > bytes.size()) {
      throw Error(Errc::kTruncated, "model file is truncated");
    }
    throw Error(Errc::kChecksumMismatch, "model file checksum mismatch");
  }
  const auto len = r.u32();
  std::string json(len, '\0');
  r.bytes(json.data(), len);
  SiameseModel<float> model(ModelConfig::from_json(json));
  for (auto [weight, bias] : kLayers) {
    for (auto d : tensor_shape(model.config(), weight)) {
      if (r.u32() != d) throw Error(Errc::kMalformedInput, "tensor dims disagree with config");
    }
    for (float& v : model.tensor(weight)) v = r.f32();
    for (float& v : model.tensor(bias)) v = r.f32();
  }
  if (r.remaining() != 4) throw Error(Errc::kMalformedInput, "unexpected trailing bytes");
  return model;
}

void save_model(const SiameseModel<float>& model, const std::filesystem::path& path) {
  detail::write_file(path, encode_model(model));
}

SiameseModel<float> load_model(const std::filesystem::path& path) {
  return decode_model(detail::read_file(path));
}

std::vector<std::uint8_t> encode_template(const EmgWindow& window) {
  detail::ByteWriter w;
  w.bytes(kTemplateMagic, 4);
  w.u16(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(window.width()));
  const ChannelMatrix& m = window.data();
  for (int c = 0; c < kChannels; ++c) {
    for (int t = 0; t < window.width(); ++t) w.f32(m(c, t));
  }
  w.crc_trailer();
  return std::move(w.buffer());
}

EmgWindow decode_template(std::span<const std::uint8_t> bytes, const std::string& subject,
                          Motion motion) {
  detail::ByteReader r(bytes);
  check_header(r, kTemplateMagic, "template");
  const auto width = r.u32();
  const std::size_t expected = 4 + 2 + 4 + std::size_t{4} * kChannels * width + 4;
  if (bytes.size() < expected) throw Error(Errc::kTruncated, "template file is truncated");
  if (!detail::crc_matches(bytes)) {
    throw Error(Errc::kChecksumMismatch, "template file checksum mismatch");
  }
  if (bytes.size() != expected) throw Error(Errc::kMalformedInput, "unexpected trailing bytes");
  ChannelMatrix m(kChannels, static_cast<Eigen::Index>(width));
  for (int c = 0; c < kChannels; ++c) {
    for (std::uint32_t t = 0; t < width; ++t) m(c, t) = r.f32();
  }
  return EmgWindow(std::move(m), subject, motion);
}

}  // namespace emgauth
