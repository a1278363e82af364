// SPDX-License-Identifier: Apache-2.0
//
// TDZ1 container: a named, role-tagged collection of dense and factored
// tensors with a bit-exact on-disk layout:
//
//   bytes 0..3   magic "TDZ1" (54 44 5A 31)
//   bytes 4..7   u32 little-endian header length L
//   bytes 8..    L bytes of compact UTF-8 JSON header
//   padding      zeros up to the next multiple of 64 (payload start)
//   payload      one segment per stored array: raw little-endian f32 values
//                followed by a u32 little-endian CRC-32 of those bytes; every
//                segment starts 64-byte aligned relative to the payload start
//
// Header: {"header_crc32": u32, "tensors": [...], "version": 1}. The CRC
// covers the compact dump of the header object with "header_crc32" removed.
// Each tensor: {"name", "role", "group", "kind", "shape", "ranks" (factored
// kinds only), "dtype": "f32", "segments": [{"name", "shape", "offset",
// "bytes"}]} with offsets relative to the payload start.
#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "tdz/crc32.hpp"
#include "tdz/factors.hpp"
#include "tdz/tensor.hpp"

namespace tdz {

enum class Role { kLinearWeight, kConv1dKernel, kConv2dKernel, kOther };
enum class Group { kEncoder, kDecoder, kOther };

inline const char* to_string(Role r) {
  switch (r) {
    case Role::kLinearWeight: return "linear_weight";
    case Role::kConv1dKernel: return "conv1d_kernel";
    case Role::kConv2dKernel: return "conv2d_kernel";
    case Role::kOther: return "other";
  }
  return "?";
}

inline const char* to_string(Group g) {
  switch (g) {
    case Group::kEncoder: return "encoder";
    case Group::kDecoder: return "decoder";
    case Group::kOther: return "other";
  }
  return "?";
}

inline std::optional<Role> parse_role(std::string_view s) {
  if (s == "linear_weight") return Role::kLinearWeight;
  if (s == "conv1d_kernel") return Role::kConv1dKernel;
  if (s == "conv2d_kernel") return Role::kConv2dKernel;
  if (s == "other") return Role::kOther;
  return std::nullopt;
}

inline std::optional<Group> parse_group(std::string_view s) {
  if (s == "encoder") return Group::kEncoder;
  if (s == "decoder") return Group::kDecoder;
  if (s == "other") return Group::kOther;
  return std::nullopt;
}

/// Tensor order a role requires, or 0 for any.
inline Index role_order(Role r) {
  switch (r) {
    case Role::kLinearWeight: return 2;
    case Role::kConv1dKernel: return 3;
    case Role::kConv2dKernel: return 4;
    case Role::kOther: return 0;
  }
  return 0;
}

using EntryValue = std::variant<DenseTensor, SvdFactors, TuckerFactors, CpFactors, TtFactors>;

inline const char* kind_name(const EntryValue& v) {
  static constexpr const char* kNames[] = {"dense", "svd", "tucker", "cp", "tt"};
  return kNames[v.index()];
}

struct TensorEntry {
  std::string name;
  Role role = Role::kOther;
  Group group = Group::kOther;
  EntryValue value;

  bool is_factored() const { return value.index() != 0; }

  Shape shape() const {
    return std::visit([](const auto& x) -> Shape { return x.shape(); }, value);
  }

  /// Values actually stored for this entry.
  Index param_count() const {
    return std::visit(
        [](const auto& x) -> Index {
          if constexpr (std::is_same_v<std::decay_t<decltype(x)>, DenseTensor>) {
            return x.size();
          } else {
            return stored_values(x);
          }
        },
        value);
  }

  friend bool operator==(const TensorEntry&, const TensorEntry&) = default;
};

/// Ordered, name-unique collection of tensor entries.
class ModelContainer {
 public:
  void add(TensorEntry entry) {
    if (entry.name.empty()) throw ValueError("tensor entry name must not be empty");
    if (find(entry.name)) throw ValueError("duplicate tensor name '" + entry.name + "'");
    std::visit(
        [](const auto& x) {
          if constexpr (!std::is_same_v<std::decay_t<decltype(x)>, DenseTensor>) x.validate();
        },
        entry.value);
    const Index want = role_order(entry.role);
    const Index got = entry.shape().size();
    if (want != 0 && want != got) {
      throw ShapeError("tensor '" + entry.name + "' with role " + to_string(entry.role) + " must have order " +
                       std::to_string(want) + ", got " + std::to_string(got));
    }
    entries_.push_back(std::move(entry));
  }

  const TensorEntry* find(std::string_view name) const {
    for (const auto& e : entries_) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }

  const std::vector<TensorEntry>& entries() const { return entries_; }
  Index size() const { return entries_.size(); }

  friend bool operator==(const ModelContainer&, const ModelContainer&) = default;

 private:
  std::vector<TensorEntry> entries_;
};

namespace format {

inline constexpr std::uint8_t kMagic[4] = {0x54, 0x44, 0x5A, 0x31};
inline constexpr int kVersion = 1;
inline constexpr Index kAlignment = 64;
// Generous cap on any single dimension; keeps shape arithmetic far from overflow.
inline constexpr Index kMaxDim = Index{1} << 31;

inline Index align_up(Index x) { return (x + kAlignment - 1) / kAlignment * kAlignment; }

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

struct SegmentRef {
  std::string name;
  Shape shape;
  std::span<const float> values;
};

inline SegmentRef tensor_segment(std::string name, const DenseTensor& t) { return {std::move(name), t.shape(), t.data()}; }

inline std::vector<SegmentRef> segments_of(const EntryValue& v) {
  std::vector<SegmentRef> out;
  std::visit(
      [&](const auto& x) {
        using X = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<X, DenseTensor>) {
          out.push_back(tensor_segment("data", x));
        } else if constexpr (std::is_same_v<X, SvdFactors>) {
          out.push_back(tensor_segment("a", x.a));
          out.push_back(tensor_segment("b", x.b));
        } else if constexpr (std::is_same_v<X, TuckerFactors>) {
          out.push_back(tensor_segment("core", x.core));
          for (Index n = 0; n < x.factors.size(); ++n) out.push_back(tensor_segment("factor" + std::to_string(n), x.factors[n]));
        } else if constexpr (std::is_same_v<X, CpFactors>) {
          out.push_back({"weights", Shape{x.weights.size()}, x.weights});
          for (Index n = 0; n < x.factors.size(); ++n) out.push_back(tensor_segment("factor" + std::to_string(n), x.factors[n]));
        } else {
          for (Index n = 0; n < x.cores.size(); ++n) out.push_back(tensor_segment("core" + std::to_string(n), x.cores[n]));
        }
      },
      v);
  return out;
}

// Segment names and shapes a well-formed entry of `kind` must carry.
inline std::vector<std::pair<std::string, Shape>> expected_segments(std::string_view kind, const Shape& shape,
                                                                    const std::vector<Index>& ranks) {
  std::vector<std::pair<std::string, Shape>> out;
  const Index order = shape.size();
  if (kind == "dense") {
    out.emplace_back("data", shape);
  } else if (kind == "svd") {
    out.emplace_back("a", Shape{shape[0], ranks[0]});
    out.emplace_back("b", Shape{ranks[0], shape[1]});
  } else if (kind == "tucker") {
    out.emplace_back("core", Shape(ranks.begin(), ranks.end()));
    for (Index n = 0; n < order; ++n) out.emplace_back("factor" + std::to_string(n), Shape{shape[n], ranks[n]});
  } else if (kind == "cp") {
    out.emplace_back("weights", Shape{ranks[0]});
    for (Index n = 0; n < order; ++n) out.emplace_back("factor" + std::to_string(n), Shape{shape[n], ranks[0]});
  } else if (kind == "tt") {
    for (Index n = 0; n < order; ++n) {
      const Index left = n == 0 ? 1 : ranks[n - 1];
      const Index right = n + 1 == order ? 1 : ranks[n];
      out.emplace_back("core" + std::to_string(n), Shape{left, shape[n], right});
    }
  }
  return out;
}

inline std::optional<Method> kind_method(std::string_view kind) {
  if (kind == "dense") return std::nullopt;
  return parse_method(kind);
}

inline std::vector<Index> entry_ranks(const EntryValue& v) {
  return std::visit(
      [](const auto& x) -> std::vector<Index> {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, DenseTensor>) {
          return {};
        } else {
          return x.ranks();
        }
      },
      v);
}

}  // namespace format

/// Serializes a container to TDZ1 bytes. Deterministic: equal containers give
/// identical bytes.
inline std::vector<std::uint8_t> serialize(const ModelContainer& c) {
  using nlohmann::json;
  json tensors = json::array();
  std::vector<std::vector<format::SegmentRef>> all_segments;
  Index cursor = 0;
  for (const auto& e : c.entries()) {
    auto segs = format::segments_of(e.value);
    json seg_json = json::array();
    for (const auto& s : segs) {
      const Index bytes = s.values.size() * 4;
      seg_json.push_back({{"name", s.name}, {"shape", s.shape}, {"offset", cursor}, {"bytes", bytes}});
      cursor = format::align_up(cursor + bytes + 4);
    }
    json entry = {{"name", e.name},
                  {"role", to_string(e.role)},
                  {"group", to_string(e.group)},
                  {"kind", kind_name(e.value)},
                  {"shape", e.shape()},
                  {"dtype", "f32"},
                  {"segments", std::move(seg_json)}};
    if (e.is_factored()) entry["ranks"] = format::entry_ranks(e.value);
    tensors.push_back(std::move(entry));
    all_segments.push_back(std::move(segs));
  }
  json header = {{"version", format::kVersion}, {"tensors", std::move(tensors)}};
  header["header_crc32"] = crc32(header.dump());
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(format::kMagic, format::kMagic + 4);
  format::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  const Index payload_start = format::align_up(out.size());
  out.resize(payload_start, 0);
  for (const auto& segs : all_segments) {
    for (const auto& s : segs) {
      out.resize(format::align_up(out.size() - payload_start) + payload_start, 0);
      const Index begin = out.size();
      for (float v : s.values) format::put_u32(out, std::bit_cast<std::uint32_t>(v));
      const auto crc = crc32(std::span<const std::uint8_t>(out.data() + begin, out.size() - begin));
      format::put_u32(out, crc);
    }
  }
  return out;
}

namespace format {

[[noreturn]] inline void fail(FormatErrorCode code, const std::string& what) { throw FormatError(code, what); }

inline Shape read_dims(const nlohmann::json& j, const std::string& what, bool allow_empty) {
  if (!j.is_array()) fail(FormatErrorCode::kMalformedHeader, what + " must be an array");
  if (j.empty() && !allow_empty) fail(FormatErrorCode::kMalformedHeader, what + " must not be empty");
  Shape out;
  for (const auto& d : j) {
    if (!d.is_number_unsigned()) fail(FormatErrorCode::kMalformedHeader, what + " entries must be unsigned integers");
    const auto v = d.get<std::uint64_t>();
    if (v < 1 || v > kMaxDim) fail(FormatErrorCode::kInconsistent, what + " entry out of range");
    out.push_back(static_cast<Index>(v));
  }
  return out;
}

inline const nlohmann::json& field(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(FormatErrorCode::kMalformedHeader, std::string("missing field '") + key + "'");
  return *it;
}

inline std::string string_field(const nlohmann::json& obj, const char* key) {
  const auto& v = field(obj, key);
  if (!v.is_string()) fail(FormatErrorCode::kMalformedHeader, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

inline std::uint64_t uint_field(const nlohmann::json& obj, const char* key) {
  const auto& v = field(obj, key);
  if (!v.is_number_unsigned()) fail(FormatErrorCode::kMalformedHeader, std::string("field '") + key + "' must be unsigned");
  return v.get<std::uint64_t>();
}

inline DenseTensor to_tensor(Shape shape, std::vector<float> values, const std::string& where) {
  try {
    return DenseTensor(std::move(shape), std::move(values));
  } catch (const std::exception& e) {
    fail(FormatErrorCode::kInconsistent, where + ": " + e.what());
  }
}

inline TensorEntry parse_entry(const nlohmann::json& j, std::span<const std::uint8_t> payload, Index& cursor) {
  if (!j.is_object()) fail(FormatErrorCode::kMalformedHeader, "tensor record must be an object");
  TensorEntry e;
  e.name = string_field(j, "name");
  const std::string where = "tensor '" + e.name + "'";
  auto role = parse_role(string_field(j, "role"));
  auto group = parse_group(string_field(j, "group"));
  if (!role) fail(FormatErrorCode::kInconsistent, where + ": unknown role");
  if (!group) fail(FormatErrorCode::kInconsistent, where + ": unknown group");
  e.role = *role;
  e.group = *group;
  const std::string kind = string_field(j, "kind");
  if (kind != "dense" && !parse_method(kind)) fail(FormatErrorCode::kInconsistent, where + ": unknown kind");
  if (string_field(j, "dtype") != "f32") fail(FormatErrorCode::kInconsistent, where + ": unsupported dtype");
  const Shape shape = read_dims(field(j, "shape"), where + " shape", false);
  try {
    element_count(shape);
  } catch (const ShapeError&) {
    fail(FormatErrorCode::kInconsistent, where + ": shape too large");
  }
  std::vector<Index> ranks;
  const auto method = kind_method(kind);
  if (method) {
    ranks = read_dims(field(j, "ranks"), where + " ranks", true);
    try {
      validate_ranks(*method, shape, ranks);
    } catch (const ShapeError& err) {
      fail(FormatErrorCode::kInconsistent, where + ": " + err.what());
    }
  } else if (j.contains("ranks")) {
    fail(FormatErrorCode::kInconsistent, where + ": dense tensors carry no ranks");
  }

  const auto expected = expected_segments(kind, shape, ranks);
  const auto& segs = field(j, "segments");
  if (!segs.is_array() || segs.size() != expected.size()) {
    fail(FormatErrorCode::kInconsistent, where + ": wrong number of payload segments");
  }
  std::vector<DenseTensor> arrays;
  for (Index s = 0; s < expected.size(); ++s) {
    const auto& sj = segs[s];
    if (!sj.is_object()) fail(FormatErrorCode::kMalformedHeader, where + ": segment must be an object");
    const std::string sname = string_field(sj, "name");
    const Shape sshape = read_dims(field(sj, "shape"), where + " segment shape", false);
    if (sname != expected[s].first || sshape != expected[s].second) {
      fail(FormatErrorCode::kInconsistent, where + ": segment " + std::to_string(s) + " does not match kind and ranks");
    }
    const std::uint64_t offset = uint_field(sj, "offset");
    const std::uint64_t bytes = uint_field(sj, "bytes");
    const Index count = element_count(sshape);
    if (offset != cursor) fail(FormatErrorCode::kInconsistent, where + ": segment offset out of sequence");
    if (bytes != count * 4) fail(FormatErrorCode::kInconsistent, where + ": segment byte count does not match shape");
    if (offset > payload.size() || payload.size() - offset < bytes + 4) {
      fail(FormatErrorCode::kTruncated, where + ": segment extends past end of file");
    }
    const std::uint8_t* p = payload.data() + offset;
    if (crc32(std::span<const std::uint8_t>(p, bytes)) != get_u32(p + bytes)) {
      fail(FormatErrorCode::kChecksumMismatch, where + ": payload segment '" + sname + "' checksum mismatch");
    }
    std::vector<float> values(count);
    for (Index i = 0; i < count; ++i) values[i] = std::bit_cast<float>(get_u32(p + 4 * i));
    arrays.push_back(to_tensor(sshape, std::move(values), where));
    cursor = align_up(offset + bytes + 4);
  }

  if (kind == "dense") {
    e.value = std::move(arrays[0]);
  } else if (kind == "svd") {
    e.value = SvdFactors{std::move(arrays[0]), std::move(arrays[1])};
  } else if (kind == "tucker") {
    TuckerFactors f;
    f.core = std::move(arrays[0]);
    f.factors.assign(std::make_move_iterator(arrays.begin() + 1), std::make_move_iterator(arrays.end()));
    e.value = std::move(f);
  } else if (kind == "cp") {
    CpFactors f;
    f.weights = arrays[0].values();
    f.factors.assign(std::make_move_iterator(arrays.begin() + 1), std::make_move_iterator(arrays.end()));
    e.value = std::move(f);
  } else {
    e.value = TtFactors{std::move(arrays)};
  }
  return e;
}

}  // namespace format

/// Parses TDZ1 bytes. Nothing is returned unless the whole buffer validates;
/// every defect surfaces as a FormatError with a distinct code.
inline ModelContainer deserialize(std::span<const std::uint8_t> bytes) {
  using format::fail;
  if (bytes.size() < 4) {
    if (!std::equal(bytes.begin(), bytes.end(), format::kMagic)) fail(FormatErrorCode::kBadMagic, "not a TDZ1 file");
    fail(FormatErrorCode::kTruncated, "file shorter than its preamble");
  }
  if (!std::equal(bytes.begin(), bytes.begin() + 4, format::kMagic)) fail(FormatErrorCode::kBadMagic, "not a TDZ1 file");
  if (bytes.size() < 8) fail(FormatErrorCode::kTruncated, "file shorter than its preamble");
  const Index header_len = format::get_u32(bytes.data() + 4);
  if (header_len > bytes.size() - 8) fail(FormatErrorCode::kTruncated, "header extends past end of file");
  const std::string_view text(reinterpret_cast<const char*>(bytes.data() + 8), header_len);
  // The JSON parser stops at a NUL, so a length that runs into the zero
  // padding would otherwise go unnoticed.
  if (text.find('\0') != std::string_view::npos) fail(FormatErrorCode::kMalformedHeader, "header contains a NUL byte");
  const Index pad_end = std::min<Index>(format::align_up(8 + header_len), bytes.size());
  if (std::any_of(bytes.begin() + 8 + header_len, bytes.begin() + pad_end, [](std::uint8_t b) { return b != 0; })) {
    fail(FormatErrorCode::kMalformedHeader, "nonzero header padding");
  }

  nlohmann::json header = nlohmann::json::parse(text, nullptr, false);
  if (header.is_discarded() || !header.is_object()) fail(FormatErrorCode::kMalformedHeader, "header is not a JSON object");
  const auto& version = format::field(header, "version");
  if (!version.is_number_integer()) fail(FormatErrorCode::kMalformedHeader, "version must be an integer");
  if (version.get<std::int64_t>() != format::kVersion) {
    fail(FormatErrorCode::kVersionMismatch, "unsupported version " + version.dump());
  }
  const std::uint64_t stored_crc = format::uint_field(header, "header_crc32");
  header.erase("header_crc32");
  std::string canonical;
  try {
    canonical = header.dump();
  } catch (const nlohmann::json::exception&) {
    fail(FormatErrorCode::kMalformedHeader, "header contains invalid UTF-8");
  }
  if (crc32(canonical) != stored_crc) fail(FormatErrorCode::kChecksumMismatch, "header checksum mismatch");

  const auto& tensors = format::field(header, "tensors");
  if (!tensors.is_array()) fail(FormatErrorCode::kMalformedHeader, "'tensors' must be an array");
  const Index payload_start = format::align_up(8 + header_len);
  if (payload_start > bytes.size() && !tensors.empty()) fail(FormatErrorCode::kTruncated, "payload missing");
  const auto payload = payload_start <= bytes.size() ? bytes.subspan(payload_start) : std::span<const std::uint8_t>{};

  ModelContainer c;
  Index cursor = 0;
  std::set<std::string> names;
  for (const auto& tj : tensors) {
    auto entry = format::parse_entry(tj, payload, cursor);
    if (!names.insert(entry.name).second) fail(FormatErrorCode::kInconsistent, "duplicate tensor name '" + entry.name + "'");
    try {
      c.add(std::move(entry));
    } catch (const std::exception& err) {
      fail(FormatErrorCode::kInconsistent, err.what());
    }
  }
  // The last segment is not padded; the file must end right after its CRC.
  Index expected_size = payload_start;
  if (!tensors.empty()) {
    const auto& last = tensors.back()["segments"].back();
    expected_size += last["offset"].get<std::uint64_t>() + last["bytes"].get<std::uint64_t>() + 4;
  }
  if (bytes.size() != expected_size) fail(FormatErrorCode::kInconsistent, "file size does not match header");
  return c;
}

/// Writes atomically: the bytes go to a sibling temporary that is renamed over `path`.
inline void save(const ModelContainer& c, const std::filesystem::path& path) {
  const auto bytes = serialize(c);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatErrorCode::kIo, "cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(FormatErrorCode::kIo, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw FormatError(FormatErrorCode::kIo, "cannot move " + tmp.string() + " to " + path.string());
  }
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw FormatError(FormatErrorCode::kIo, "read failed for " + path.string());
  return bytes;
}

inline ModelContainer load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

}  // namespace tdz
