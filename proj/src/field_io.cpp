#include "hyrec/field_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace hyrec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path with_ext(const fs::path& stem, const char* ext) {
  fs::path p = stem;
  p += ext;
  return p;
}

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r = (r << 8) | ((v >> (8 * i)) & 0xffu);
    return r;
  }
}

FieldKind parse_kind(const std::string& s) {
  if (s == "scalar") return FieldKind::scalar;
  if (s == "vector") return FieldKind::vector;
  if (s == "symtensor") return FieldKind::symtensor;
  throw ConfigError("unknown field kind '" + s + "'");
}

}  // namespace

const char* kind_name(FieldKind kind) {
  switch (kind) {
    case FieldKind::scalar:
      return "scalar";
    case FieldKind::vector:
      return "vector";
    case FieldKind::symtensor:
      return "symtensor";
  }
  return "scalar";
}

template <FieldKind K>
void write_field(const Field<K>& field, const fs::path& stem) {
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  const Grid& g = field.grid();
  json side;
  side["dim"] = g.dim();
  json bounds = json::array();
  json shape = json::array();
  for (int a = 0; a < g.dim(); ++a) {
    bounds.push_back({g.bounds(a).lo, g.bounds(a).hi});
    shape.push_back(g.shape(a));
  }
  side["bounds"] = bounds;
  side["shape"] = shape;
  side["kind"] = kind_name(K);
  {
    std::ofstream js(with_ext(stem, ".json"));
    if (!js) throw Error("cannot write " + with_ext(stem, ".json").string());
    js << side.dump(2) << '\n';
  }
  std::ofstream bin(with_ext(stem, ".bin"), std::ios::binary);
  if (!bin) throw Error("cannot write " + with_ext(stem, ".bin").string());
  for (const Complex& z : field.data()) {
    for (double part : {z.real(), z.imag()}) {
      const std::uint64_t word = to_le(std::bit_cast<std::uint64_t>(part));
      char bytes[8];
      std::memcpy(bytes, &word, 8);
      bin.write(bytes, 8);
    }
  }
  if (!bin) throw Error("short write to " + with_ext(stem, ".bin").string());
}

Grid read_field_grid(const fs::path& stem, FieldKind* kind) {
  std::ifstream js(with_ext(stem, ".json"));
  if (!js) throw ConfigError("missing sidecar " + with_ext(stem, ".json").string());
  json side;
  try {
    side = json::parse(js);
  } catch (const json::exception& e) {
    throw ConfigError("bad sidecar " + with_ext(stem, ".json").string() + ": " + e.what());
  }
  std::vector<Interval> bounds;
  std::vector<int> shape;
  for (const auto& b : side.at("bounds")) bounds.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
  for (const auto& s : side.at("shape")) shape.push_back(s.get<int>());
  if (static_cast<int>(shape.size()) != side.at("dim").get<int>()) {
    throw ConfigError("sidecar dim does not match shape");
  }
  if (kind) *kind = parse_kind(side.at("kind").get<std::string>());
  return make_grid(bounds, shape);
}

template <FieldKind K>
Field<K> read_field(const fs::path& stem) {
  FieldKind kind{};
  Grid g = read_field_grid(stem, &kind);
  if (kind != K) {
    throw ConfigError(stem.string() + " holds a " + kind_name(kind) + " field, expected " +
                      kind_name(K));
  }
  Field<K> out(g);
  std::ifstream bin(with_ext(stem, ".bin"), std::ios::binary);
  if (!bin) throw ConfigError("missing " + with_ext(stem, ".bin").string());
  for (Complex& z : out.data()) {
    double parts[2];
    for (double& part : parts) {
      char bytes[8];
      if (!bin.read(bytes, 8)) throw ConfigError("truncated " + with_ext(stem, ".bin").string());
      std::uint64_t word;
      std::memcpy(&word, bytes, 8);
      part = std::bit_cast<double>(to_le(word));
    }
    z = Complex(parts[0], parts[1]);
  }
  if (bin.peek() != std::char_traits<char>::eof()) {
    throw ConfigError("trailing bytes in " + with_ext(stem, ".bin").string());
  }
  return out;
}

template void write_field(const ScalarField&, const fs::path&);
template void write_field(const VectorField&, const fs::path&);
template void write_field(const SymTensorField&, const fs::path&);
template ScalarField read_field(const fs::path&);
template VectorField read_field(const fs::path&);
template SymTensorField read_field(const fs::path&);

}  // namespace hyrec
