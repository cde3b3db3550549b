#pragma once

// Binary field files. Layout (little-endian):
//   "DPRE" | u16 version = 1 | u16 d | i32 t_min | i32 t_max | i32 anchor time
//   | u8 law (0 gaussian, 1 uniform, 2 rademacher) | u64 master_seed
//   | u64 sample_index | u64 site_count | site_count x f64
// Values follow the cone index order (t ascending, lexicographic site).
// The cone is anchored at the spatial origin; enumerated fields store
// master_seed = 2^64 - 1 and the enumeration index as sample_index.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "disorder.hpp"
#include "errors.hpp"
#include "lattice.hpp"

namespace polymerlab {

inline constexpr std::array<char, 4> kFieldMagic = {'D', 'P', 'R', 'E'};
inline constexpr std::uint16_t kFieldVersion = 1;
inline constexpr std::uint64_t kEnumeratedSeed = ~std::uint64_t{0};

namespace detail {

template <class T>
void put_le(std::ostream& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto bits = static_cast<U>(value);
  char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(buf, sizeof(T));
}

template <class T>
T get_le(std::istream& in, const char* what) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) {
    throw FormatError(std::string("truncated field file while reading ") + what);
  }
  std::make_unsigned_t<T> bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::make_unsigned_t<T>>(buf[i]) << (8 * i);
  return static_cast<T>(bits);
}

}  // namespace detail

inline void save_field(const EnvironmentField& field, std::ostream& out) {
  const auto& cone = field.cone;
  for (int i = 0; i < cone.dim(); ++i) {
    if (cone.anchor().site[i] != 0) throw FormatError("field files require a cone anchored at the spatial origin");
  }
  out.write(kFieldMagic.data(), kFieldMagic.size());
  detail::put_le<std::uint16_t>(out, kFieldVersion);
  detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(cone.dim()));
  detail::put_le<std::int32_t>(out, cone.t_min());
  detail::put_le<std::int32_t>(out, cone.t_max());
  detail::put_le<std::int32_t>(out, cone.anchor().time);
  detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(field.provenance.law.kind));
  detail::put_le<std::uint64_t>(out, field.provenance.enumerated ? kEnumeratedSeed : field.provenance.master_seed);
  detail::put_le<std::uint64_t>(out, field.provenance.sample_index);
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(field.values.size()));
  for (double v : field.values) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw FormatError("failed to write field");
}

inline EnvironmentField load_field(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) throw FormatError("truncated field file while reading magic");
  if (magic != kFieldMagic) throw FormatError("bad magic: not a field file");
  const auto version = detail::get_le<std::uint16_t>(in, "version");
  if (version != kFieldVersion) throw FormatError("unsupported field file version " + std::to_string(version));
  const int dim = detail::get_le<std::uint16_t>(in, "dimension");
  const auto t_min = detail::get_le<std::int32_t>(in, "t_min");
  const auto t_max = detail::get_le<std::int32_t>(in, "t_max");
  const auto anchor_time = detail::get_le<std::int32_t>(in, "anchor time");
  const auto law_id = detail::get_le<std::uint8_t>(in, "law");
  if (law_id > 2) throw FormatError("unknown law id " + std::to_string(law_id));
  const auto seed = detail::get_le<std::uint64_t>(in, "master seed");
  const auto index = detail::get_le<std::uint64_t>(in, "sample index");
  const auto count = detail::get_le<std::uint64_t>(in, "site count");
  if (dim < 1 || dim > kMaxDim || t_min > t_max) throw FormatError("invalid cone header");

  EnvironmentField field;
  field.cone = LatticeCone::build(dim, t_min, t_max, {anchor_time, Site{}});
  if (count != field.cone.site_count()) {
    throw FormatError("site count " + std::to_string(count) + " does not match the cone (" +
                      std::to_string(field.cone.site_count()) + ")");
  }
  field.provenance = {{static_cast<LawKind>(law_id)}, seed == kEnumeratedSeed ? 0 : seed, index,
                      seed == kEnumeratedSeed};
  field.values.resize(count);
  for (auto& v : field.values) v = std::bit_cast<double>(detail::get_le<std::uint64_t>(in, "site values"));
  return field;
}

inline void save_field(const EnvironmentField& field, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  save_field(field, out);
}

inline EnvironmentField load_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return load_field(in);
}

}  // namespace polymerlab
