#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssnet/error.hpp"
#include "ssnet/model/config.hpp"
#include "ssnet/model/subspectral.hpp"

namespace ssnet::model {

using json = nlohmann::json;

inline constexpr char kCheckpointMagic[4] = {'S', 'S', 'N', 'W'};
inline constexpr int kCheckpointVersion = 1;

inline json to_json(const ModelConfig& c) {
  json j{{"variant", variant_name(c.variant)},
         {"mel_bins", c.mel_bins},
         {"frames", c.frames},
         {"channels", c.channels},
         {"classes", c.classes},
         {"sub_size", c.sub_size},
         {"hop", c.hop},
         {"head_compat", c.head_compat},
         {"sub_heads", c.sub_heads},
         {"width_multiplier", c.width_multiplier},
         {"pool2_time", c.pool2_time},
         {"dropout", c.dropout},
         {"seed", c.seed}};
  if (c.variant == Variant::kSubSpectral) {
    const int m = c.split().crops();
    const auto head = global_head_spec(m, c.head_compat);
    j["crops"] = m;
    j["global_hidden_layers"] = head.hidden_layers;
    j["global_widths"] = head.widths;
  }
  return j;
}

inline ModelConfig model_config_from_json(const json& j) {
  try {
    ModelConfig c;
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.mel_bins = j.at("mel_bins").get<int>();
    c.frames = j.at("frames").get<int>();
    c.channels = j.at("channels").get<int>();
    c.classes = j.at("classes").get<int>();
    c.sub_size = j.at("sub_size").get<int>();
    c.hop = j.at("hop").get<int>();
    c.head_compat = j.at("head_compat").get<bool>();
    c.sub_heads = j.at("sub_heads").get<bool>();
    c.width_multiplier = j.at("width_multiplier").get<int>();
    c.pool2_time = j.at("pool2_time").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad model description: ") + e.what());
  }
}

inline json layer_json(const LayerRow& r) {
  json j{{"name", r.name},
         {"kind", r.kind},
         {"output", {r.output.c, r.output.h, r.output.w}},
         {"params", r.params}};
  const auto& s = r.spec;
  if (s.filters) {
    j["in_channels"] = s.in_channels;
    j["filters"] = s.filters;
    j["kernel"] = {s.kernel_h, s.kernel_w};
  } else if (s.in_channels) {
    j["channels"] = s.in_channels;
  }
  if (s.pool_h) j["pool"] = {s.pool_h, s.pool_w};
  if (s.kind == nn::LayerKind::kDropout) j["rate"] = s.rate;
  if (s.units) {
    j["in_units"] = s.in_units;
    j["units"] = s.units;
  }
  return j;
}

template <typename T>
json describe_model(Model<T>& m) {
  json layers = json::array();
  for (const auto& row : m.layer_table()) layers.push_back(layer_json(row));
  return json{{"config", to_json(m.config())}, {"layers", layers}, {"trainable_params", count_params(m)}};
}

namespace detail {

inline void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t parse_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

// "SSNW", u32 header length, JSON header, then little-endian float32 tensors
// in header order. `metadata` is stored verbatim under "metadata".
inline std::string encode_checkpoint(Model<float>& m, const json& metadata = json::object()) {
  json tensors = json::array();
  auto params = m.params();
  for (auto* p : params) {
    const auto& s = p->value.shape();
    tensors.push_back({{"name", p->name}, {"shape", {s.n, s.c, s.h, s.w}}, {"trainable", p->trainable}});
  }
  json header{{"format_version", kCheckpointVersion},
              {"dtype", "float32"},
              {"model", describe_model(m)},
              {"tensors", tensors},
              {"metadata", metadata}};
  const std::string text = header.dump();
  std::string out(kCheckpointMagic, 4);
  detail::append_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (auto* p : params) {
    for (float v : p->value.values()) detail::append_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path, Model<float>& m,
                            const json& metadata = json::object()) {
  const std::string bytes = encode_checkpoint(m, metadata);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

struct Checkpoint {
  json header;
  ModelConfig config;
  std::unique_ptr<Model<float>> model;

  const json& metadata() const { return header.at("metadata"); }
};

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 8 || std::memcmp(raw, kCheckpointMagic, 4) != 0) {
    throw FormatError("not an SSNW checkpoint");
  }
  const std::uint32_t len = detail::parse_u32(raw + 4);
  if (len > bytes.size() - 8) throw FormatError("checkpoint header runs past end of file");
  Checkpoint ck;
  try {
    ck.header = json::parse(bytes.substr(8, len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (ck.header.value("format_version", 0) != kCheckpointVersion) {
    throw UnsupportedError("unsupported checkpoint format version");
  }
  if (ck.header.value("dtype", std::string()) != "float32") throw UnsupportedError("checkpoint dtype must be float32");
  ck.config = model_config_from_json(ck.header.at("model").at("config"));
  ck.model = build_model<float>(ck.config);

  std::map<std::string, Param<float>*> by_name;
  for (auto* p : ck.model->params()) by_name[p->name] = p;
  const auto& tensors = ck.header.at("tensors");
  if (tensors.size() != by_name.size()) {
    throw FormatError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                      std::to_string(by_name.size()));
  }
  std::size_t pos = 8 + len;
  for (const auto& t : tensors) {
    const std::string name = t.at("name").get<std::string>();
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint tensor '" + name + "' does not exist in the model");
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    const auto& s = it->second->value.shape();
    if (shape != std::vector<std::size_t>{s.n, s.c, s.h, s.w}) {
      throw FormatError("checkpoint tensor '" + name + "' has shape mismatch against layer (model wants " +
                        s.str() + ")");
    }
    const std::size_t count = s.size();
    if (bytes.size() - pos < count * 4) throw FormatError("checkpoint truncated in tensor '" + name + "'");
    auto& values = it->second->value;
    for (std::size_t i = 0; i < count; ++i) {
      values[i] = std::bit_cast<float>(detail::parse_u32(raw + pos + 4 * i));
    }
    pos += count * 4;
  }
  if (pos != bytes.size()) throw FormatError("trailing bytes after checkpoint tensors");
  return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

// Copies every tensor (parameters and buffers) between models of identical
// structure, converting precision.
template <typename From, typename To>
void copy_params(Model<From>& from, Model<To>& to) {
  auto src = from.params();
  auto dst = to.params();
  if (src.size() != dst.size()) throw ShapeError("models differ in tensor count");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i]->name != dst[i]->name || !(src[i]->value.shape() == dst[i]->value.shape())) {
      throw ShapeError("tensor mismatch at '" + src[i]->name + "'");
    }
    dst[i]->value = src[i]->value.template cast<To>();
  }
}

}  // namespace ssnet::model
