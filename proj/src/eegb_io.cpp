// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <fstream>
#include <iterator>

#include "bytes.hpp"
#include "geomanifold/signal.hpp"

namespace gm {

namespace detail {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace detail

namespace {
constexpr char kMagic[] = "EEGB";
constexpr std::uint32_t kVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_eegb(std::span<const EEGRecording> recs) {
  detail::ByteWriter w;
  w.bytes(kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(recs.size()));
  for (const auto& r : recs) {
    r.validate();
    w.u32(r.subject_id);
    w.i32(r.label ? static_cast<std::int32_t>(*r.label) : -1);
    w.u32(static_cast<std::uint32_t>(r.n_channels));
    w.u32(static_cast<std::uint32_t>(r.n_samples));
    w.f32(r.rate_hz);
    for (float v : r.data) w.f32(v);
  }
  return w.take();
}

std::vector<EEGRecording> decode_eegb(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "EEGB");
  if (r.bytes(4) != kMagic) r.fail("bad magic", 0);
  if (const auto v = r.u32(); v != kVersion) r.fail("unsupported version " + std::to_string(v), 4);
  const std::uint32_t count = r.u32();
  std::vector<EEGRecording> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t start = r.offset();
    EEGRecording rec;
    rec.subject_id = r.u32();
    const std::int32_t label = r.i32();
    if (label < -1) r.fail("negative label " + std::to_string(label), start + 4);
    if (label >= 0) rec.label = static_cast<std::uint32_t>(label);
    rec.n_channels = r.u32();
    rec.n_samples = r.u32();
    rec.rate_hz = r.f32();
    if (rec.n_channels == 0 || rec.n_samples == 0) r.fail("empty record", start + 8);
    if (!(rec.rate_hz > 0.0f) || !std::isfinite(rec.rate_hz))
      r.fail("non-positive sample rate", start + 16);
    const std::size_t n = rec.n_channels * rec.n_samples;
    r.need(n * 4);
    rec.data.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t at = r.offset();
      rec.data[k] = r.f32();
      if (!std::isfinite(rec.data[k])) r.fail("non-finite sample", at);
    }
    out.push_back(std::move(rec));
  }
  if (!r.at_end()) r.fail("trailing bytes after last record", r.offset());
  return out;
}

void write_eegb(const std::filesystem::path& path, std::span<const EEGRecording> recs) {
  detail::write_file(path, encode_eegb(recs));
}

std::vector<EEGRecording> read_eegb(const std::filesystem::path& path) {
  return decode_eegb(detail::read_file(path));
}

}  // namespace gm
