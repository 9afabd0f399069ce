// SPDX-License-Identifier: Apache-2.0
#include <set>

#include "bytes.hpp"
#include "geomanifold/model.hpp"

namespace gm {

namespace {
constexpr char kMagic[] = "MFW1";
constexpr std::uint32_t kVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_weights(const Model& model) {
  detail::ByteWriter w;
  w.bytes(kMagic);
  w.u32(kVersion);
  const std::string cfg = to_text(model.config());
  w.u32(static_cast<std::uint32_t>(cfg.size()));
  w.bytes(cfg);
  w.u8(static_cast<std::uint8_t>(model.stage));
  const auto params = model.params().all();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    w.u16(static_cast<std::uint16_t>(p->name.size()));
    w.bytes(p->name);
    const auto& dims = p->value.dims();
    w.u8(static_cast<std::uint8_t>(dims.size()));
    for (auto d : dims) w.u32(static_cast<std::uint32_t>(d));
    for (double v : p->value.values()) w.f64(v);
  }
  return w.take();
}

std::unique_ptr<Model> decode_weights(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "MFW1");
  if (r.bytes(4) != kMagic) r.fail("bad magic", 0);
  if (const auto v = r.u32(); v != kVersion) r.fail("unsupported version " + std::to_string(v), 4);
  const std::size_t cfg_at = r.offset();
  const std::uint32_t cfg_len = r.u32();
  const std::string text = r.bytes(cfg_len);
  std::unique_ptr<Model> model;
  try {
    model = std::make_unique<Model>(parse_config(text));
  } catch (const UsageError& e) {
    r.fail(std::string("embedded config rejected: ") + e.what(), cfg_at);
  }
  const std::size_t stage_at = r.offset();
  const std::uint8_t stage = r.u8();
  if (stage > static_cast<std::uint8_t>(Stage::finetuned))
    r.fail("unknown stage marker " + std::to_string(stage), stage_at);
  model->stage = static_cast<Stage>(stage);

  const std::uint32_t count = r.u32();
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const std::string name = r.bytes(r.u16());
    if (!seen.insert(name).second) r.fail("duplicate tensor '" + name + "'", at);
    Parameter* p = model->params().find(name);
    if (p == nullptr) r.fail("tensor '" + name + "' is not part of the configured model", at);
    const std::uint8_t ndim = r.u8();
    Shape dims;
    for (std::uint8_t k = 0; k < ndim; ++k) dims.push_back(r.u32());
    if (dims != p->value.dims())
      r.fail("tensor '" + name + "' has dims " + shape_str(dims) + ", config expects " +
                 p->value.shape_str(),
             at);
    r.need(p->value.size() * 8);
    for (double& v : p->value.values()) v = r.f64();
  }
  if (seen.size() != model->params().size())
    r.fail("file holds " + std::to_string(seen.size()) + " tensors, model needs " +
               std::to_string(model->params().size()),
           r.offset());
  if (!r.at_end()) r.fail("trailing bytes", r.offset());
  return model;
}

void save_weights(const std::filesystem::path& path, const Model& model) {
  detail::write_file(path, encode_weights(model));
}

std::unique_ptr<Model> load_weights(const std::filesystem::path& path) {
  return decode_weights(detail::read_file(path));
}

}  // namespace gm
