#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cfcf/network.hpp"

namespace cfcf::network {
namespace {

using nlohmann::json;

constexpr std::array<char, 7> kMagic{'C', 'F', 'C', 'F', 'M', 'D', 'L'};

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

json spec_to_json(const LayerSpec& spec) {
  return std::visit(
      Overloaded{
          [](const ConvSpec& c) {
            return json{{"kind", "conv"},          {"in_channels", c.in_channels},
                        {"out_channels", c.out_channels}, {"kernel_h", c.kernel_h},
                        {"kernel_w", c.kernel_w},  {"stride", c.stride},
                        {"padding", c.padding}};
          },
          [](const BatchNormSpec& b) {
            return json{{"kind", "batch_norm"},
                        {"channels", b.channels},
                        {"epsilon", b.epsilon},
                        {"momentum", b.momentum}};
          },
          [](const LeakyReluSpec& r) { return json{{"kind", "leaky_relu"}, {"leak", r.leak}}; },
          [](const MaxPoolSpec& p) {
            return json{{"kind", "max_pool"}, {"window", p.window}, {"stride", p.stride}};
          },
      },
      spec);
}

template <class T>
T field(const json& j, const char* key, T fallback) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  return it->get<T>();
}

LayerSpec spec_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw ParseError("layer entry needs a \"kind\"");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "conv") {
    ConvSpec c;
    c.in_channels = field(j, "in_channels", 0);
    c.out_channels = j.at("out_channels").get<int>();
    const int kernel = field(j, "kernel", 3);
    c.kernel_h = field(j, "kernel_h", kernel);
    c.kernel_w = field(j, "kernel_w", kernel);
    c.stride = field(j, "stride", 1);
    const auto pad = j.find("padding");
    if (pad == j.end() || (pad->is_string() && pad->get<std::string>() == "same")) {
      if (c.kernel_h != c.kernel_w) throw ParseError("\"same\" padding needs a square kernel");
      c.padding = same_padding(c.kernel_h);
    } else {
      c.padding = pad->get<int>();
    }
    return c;
  }
  if (kind == "batch_norm") {
    return BatchNormSpec{field(j, "channels", 0), field(j, "epsilon", 1e-5),
                         field(j, "momentum", 0.9)};
  }
  if (kind == "leaky_relu") return LeakyReluSpec{field(j, "leak", 0.1)};
  if (kind == "max_pool") {
    const int window = field(j, "window", 2);
    return MaxPoolSpec{window, field(j, "stride", window)};
  }
  throw ParseError("unknown layer kind \"" + kind + "\"");
}

json geometry_json(const Geometry& g) { return json::array({g.channels, g.height, g.width}); }

Geometry geometry_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ParseError("input geometry must be [c, h, w]");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

void put_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::string specs_to_json(const std::vector<LayerSpec>& specs) {
  json arr = json::array();
  for (const auto& s : specs) arr.push_back(spec_to_json(s));
  return arr.dump(2);
}

Architecture parse_architecture(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("architecture is not valid JSON: ") + e.what());
  }
  Architecture arch;
  try {
    const json* layers = &j;
    if (j.is_object()) {
      if (j.contains("input")) arch.input = geometry_from_json(j.at("input"));
      layers = &j.at("layers");
    }
    if (!layers->is_array()) throw ParseError("architecture must list layers");
    for (const auto& entry : *layers) arch.layers.push_back(spec_from_json(entry));
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed architecture: ") + e.what());
  }
  if (arch.layers.empty()) throw ParseError("architecture has no layers");
  return arch;
}

Architecture load_architecture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_architecture(ss.str());
}

void save_model(const NetworkModel& model, const std::filesystem::path& path) {
  json manifest;
  manifest["format_version"] = kModelFormatVersion;
  manifest["input"] = geometry_json(model.input);
  json layers = json::array();
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& layer : model.layers) {
    layers.push_back(spec_to_json(layer.spec));
    for (const auto& p : layer.params) {
      const std::uint64_t bytes = p.values.size() * sizeof(double);
      tensors.push_back({{"name", p.name},
                         {"shape", p.shape},
                         {"offset", offset},
                         {"bytes", bytes},
                         {"trainable", p.trainable}});
      offset += bytes;
    }
  }
  manifest["layers"] = std::move(layers);
  manifest["tensors"] = std::move(tensors);
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  out.put(static_cast<char>(kModelFormatVersion));
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& layer : model.layers) {
    for (const auto& p : layer.params) {
      for (double v : p.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

NetworkModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  const std::size_t header = kMagic.size() + 1 + 8;
  if (bytes.size() < header || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw CorruptFile(path.string() + " is not a model file");
  }
  const int version = bytes[kMagic.size()];
  if (version != kModelFormatVersion) {
    throw VersionMismatch("model format version " + std::to_string(version) +
                          " is not supported (expected " +
                          std::to_string(kModelFormatVersion) + ")");
  }
  const std::uint64_t manifest_len = get_u64(bytes.data() + kMagic.size() + 1);
  if (manifest_len > bytes.size() - header) throw CorruptFile("truncated manifest");

  NetworkModel model;
  std::uint64_t blob_bytes = 0;
  try {
    const json manifest = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(header),
                                      bytes.begin() + static_cast<std::ptrdiff_t>(header + manifest_len));
    if (manifest.at("format_version").get<int>() != kModelFormatVersion) {
      throw VersionMismatch("manifest format version differs from the header");
    }
    std::vector<LayerSpec> specs;
    for (const auto& entry : manifest.at("layers")) specs.push_back(spec_from_json(entry));
    model = make_network(specs, geometry_from_json(manifest.at("input")), 0);

    const auto& tensors = manifest.at("tensors");
    std::size_t t = 0;
    const unsigned char* blob = bytes.data() + header + manifest_len;
    const std::uint64_t available = bytes.size() - header - manifest_len;
    for (auto& layer : model.layers) {
      for (auto& p : layer.params) {
        if (t >= tensors.size()) throw CorruptFile("manifest lists too few tensors");
        const auto& entry = tensors[t++];
        const auto offset = entry.at("offset").get<std::uint64_t>();
        const auto size = entry.at("bytes").get<std::uint64_t>();
        if (entry.at("name").get<std::string>() != p.name ||
            entry.at("shape").get<std::vector<int>>() != p.shape ||
            size != p.values.size() * sizeof(double)) {
          throw CorruptFile("tensor " + p.name + " does not match its layer");
        }
        if (offset + size > available) throw CorruptFile("truncated tensor data");
        for (std::size_t i = 0; i < p.values.size(); ++i) {
          p.values[i] = std::bit_cast<double>(get_u64(blob + offset + 8 * i));
        }
        blob_bytes = std::max(blob_bytes, offset + size);
      }
    }
    if (t != tensors.size()) throw CorruptFile("manifest lists too many tensors");
    if (blob_bytes != available) throw CorruptFile("unexpected trailing data");
  } catch (const json::exception& e) {
    throw CorruptFile(std::string("malformed manifest: ") + e.what());
  } catch (const ParseError& e) {
    throw CorruptFile(e.what());
  } catch (const InvalidArgument& e) {
    throw CorruptFile(e.what());
  }
  return model;
}

}  // namespace cfcf::network
