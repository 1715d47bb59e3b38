#pragma once

// On-disk formats.
//
//   embeddings (.lfae)  "LFAE" | u32 version | u64 N | u32 d | N*d float32,
//                       all little-endian, rows contiguous. 20-byte header.
//   ids.csv             image_id,identity
//   groups CSV          group_id,image_id,insertion_rank
//   attributes CSV      image_id,<attribute>...
//   annotator JSON      { image_id: { attribute: label, ... }, ... }
//
// Directions are stored as an .lfae file with one row per group plus a JSON
// manifest.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "lfa/attributes.hpp"
#include "lfa/core.hpp"

namespace lfa::io {

namespace fs = std::filesystem;

inline constexpr std::array<char, 4> kMagic{'L', 'F', 'A', 'E'};
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderBytes = 20;


inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to '" + path.string() + "'");
}

/// 64-bit FNV-1a of a file's bytes as 16 hex digits.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string file_hash(const fs::path& path) { return fnv1a_hex(read_file(path)); }

// ---------------------------------------------------------------------------
// Binary embeddings

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<char>((value >> (8 * b)) & 0xff));
}

template <typename T>
T get_le(std::string_view in, std::size_t offset) {
  T v = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    v |= static_cast<T>(static_cast<unsigned char>(in[offset + b])) << (8 * b);
  }
  return v;
}

}  // namespace detail

struct RawEmbeddings {
  std::uint64_t rows = 0;
  std::uint32_t dim = 0;
  std::vector<double> values;  // widened from float32
};

inline std::string encode_embeddings(std::span<const double> values, std::uint64_t rows, std::uint32_t dim) {
  if (values.size() != rows * dim) throw Error(ErrorCode::InvalidArgument, "value count does not match rows * dim");
  std::string out;
  out.reserve(kHeaderBytes + 4 * values.size());
  out.append(kMagic.data(), kMagic.size());
  detail::put_le<std::uint32_t>(out, kFormatVersion);
  detail::put_le<std::uint64_t>(out, rows);
  detail::put_le<std::uint32_t>(out, dim);
  for (double v : values) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

inline RawEmbeddings decode_embeddings(std::string_view bytes, const std::string& label = "embedding file") {
  auto fail = [&](const std::string& m) { throw Error(ErrorCode::FormatError, label + ": " + m); };
  if (bytes.size() < kHeaderBytes) {
    fail("file has " + std::to_string(bytes.size()) + " bytes, header needs " + std::to_string(kHeaderBytes));
  }
  if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) fail("bad magic (expected \"LFAE\")");
  const auto version = detail::get_le<std::uint32_t>(bytes, 4);
  if (version != kFormatVersion) fail("unsupported format version " + std::to_string(version));
  RawEmbeddings raw;
  raw.rows = detail::get_le<std::uint64_t>(bytes, 8);
  raw.dim = detail::get_le<std::uint32_t>(bytes, 16);
  if (raw.rows < 1) fail("row count must be >= 1");
  if (raw.dim < 2) fail("dimension must be >= 2");
  const std::uint64_t max_payload = (UINT64_MAX - kHeaderBytes) / 4;
  if (raw.rows > max_payload / raw.dim) fail("header row/dimension product overflows");
  const std::uint64_t expected = kHeaderBytes + 4 * raw.rows * raw.dim;
  if (bytes.size() != expected) {
    fail("expected " + std::to_string(expected) + " bytes (20-byte header + 4 * " + std::to_string(raw.rows) +
         " * " + std::to_string(raw.dim) + "), found " + std::to_string(bytes.size()));
  }
  raw.values.resize(raw.rows * raw.dim);
  for (std::size_t i = 0; i < raw.values.size(); ++i) {
    const float f = std::bit_cast<float>(detail::get_le<std::uint32_t>(bytes, kHeaderBytes + 4 * i));
    if (!std::isfinite(f)) fail("component " + std::to_string(i) + " is not finite");
    raw.values[i] = f;
  }
  return raw;
}

inline RawEmbeddings read_embeddings(const fs::path& path) { return decode_embeddings(read_file(path), path.string()); }

// ---------------------------------------------------------------------------
// CSV

using CsvRow = std::vector<std::string>;

/// RFC 4180 style: comma separated, double-quoted fields with "" escapes,
/// LF or CRLF line ends. Blank lines are skipped.
inline std::vector<CsvRow> parse_csv(std::string_view text, const std::string& label = "csv") {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t line = 1;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    if (!(row.empty() && !field_started && field.empty())) {
      end_field();
      rows.push_back(std::move(row));
    }
    row.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty()) throw Error(ErrorCode::FormatError, label + ":" + std::to_string(line) + ": stray quote");
        quoted = true;
        field_started = true;
        break;
      case ',':
        end_field();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        ++line;
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (quoted) throw Error(ErrorCode::FormatError, label + ": unterminated quoted field");
  end_row();
  return rows;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string csv_line(std::span<const std::string> fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += csv_field(fields[i]);
  }
  out.push_back('\n');
  return out;
}

inline std::vector<CsvRow> read_csv_with_header(const fs::path& path, std::span<const std::string> expected_prefix) {
  auto rows = parse_csv(read_file(path), path.string());
  if (rows.empty()) throw Error(ErrorCode::FormatError, path.string() + ": missing header");
  const auto& header = rows.front();
  if (header.size() < expected_prefix.size() ||
      !std::equal(expected_prefix.begin(), expected_prefix.end(), header.begin())) {
    std::string want;
    for (const auto& h : expected_prefix) want += (want.empty() ? "" : ",") + h;
    throw Error(ErrorCode::FormatError, path.string() + ": header must start with " + want);
  }
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size()) {
      throw Error(ErrorCode::FormatError, path.string() + ": row " + std::to_string(r + 1) + " has " +
                                              std::to_string(rows[r].size()) + " fields, header has " +
                                              std::to_string(header.size()));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Dataset = embeddings + ids sidecar

struct IdRows {
  std::vector<std::string> image_ids;
  std::vector<std::string> identities;
};

inline IdRows read_ids(const fs::path& path) {
  static const std::vector<std::string> header{"image_id", "identity"};
  const auto rows = read_csv_with_header(path, header);
  if (rows.front().size() != 2) throw Error(ErrorCode::FormatError, path.string() + ": expected exactly 2 columns");
  IdRows ids;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    ids.image_ids.push_back(rows[r][0]);
    ids.identities.push_back(rows[r][1]);
  }
  return ids;
}

inline std::string encode_ids(const EmbeddingDataset& ds) {
  std::string out = "image_id,identity\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::array<std::string, 2> f{ds.image_id(i), ds.identity_name(ds.identity(i))};
    out += csv_line(f);
  }
  return out;
}

/// Sidecar defaults to ids.csv next to the embeddings file.
inline fs::path default_ids_path(const fs::path& embeddings) { return embeddings.parent_path() / "ids.csv"; }

inline EmbeddingDataset load_dataset(const fs::path& embeddings, const fs::path& ids_path) {
  const auto raw = read_embeddings(embeddings);
  auto ids = read_ids(ids_path);
  if (ids.image_ids.size() != raw.rows) {
    throw Error(ErrorCode::FormatError, ids_path.string() + " lists " + std::to_string(ids.image_ids.size()) +
                                            " images, embeddings have " + std::to_string(raw.rows) + " rows");
  }
  try {
    return EmbeddingDataset::from_rows(std::move(ids.image_ids), raw.values, raw.dim, ids.identities);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidDataset || e.code() == ErrorCode::ZeroVector) {
      throw Error(ErrorCode::FormatError, e.what());
    }
    throw;
  }
}

inline void save_dataset(const EmbeddingDataset& ds, const fs::path& embeddings, const fs::path& ids_path) {
  write_file(embeddings, encode_embeddings(ds.data(), ds.size(), static_cast<std::uint32_t>(ds.dim())));
  write_file(ids_path, encode_ids(ds));
}

// ---------------------------------------------------------------------------
// Groups

struct NamedGroup {
  std::string id;
  Group group;
};

inline std::string encode_groups(std::span<const NamedGroup> groups, const EmbeddingDataset& ds) {
  std::string out = "group_id,image_id,insertion_rank\n";
  for (const auto& g : groups) {
    for (std::size_t r = 0; r < g.group.members.size(); ++r) {
      const std::array<std::string, 3> f{g.id, ds.image_id(g.group.members[r]), std::to_string(r)};
      out += csv_line(f);
    }
  }
  return out;
}

/// Groups in order of first appearance, members ordered by insertion_rank.
inline std::vector<NamedGroup> read_groups(const fs::path& path, const EmbeddingDataset& ds) {
  static const std::vector<std::string> header{"group_id", "image_id", "insertion_rank"};
  const auto rows = read_csv_with_header(path, header);
  std::vector<NamedGroup> groups;
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::vector<std::pair<long long, std::size_t>>> ranked;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const auto idx = ds.find(row[1]);
    if (!idx) throw Error(ErrorCode::FormatError, path.string() + ": unknown image_id '" + row[1] + "'");
    long long rank = 0;
    try {
      std::size_t used = 0;
      rank = std::stoll(row[2], &used);
      if (used != row[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCode::FormatError, path.string() + ": bad insertion_rank '" + row[2] + "'");
    }
    auto [it, inserted] = slot.emplace(row[0], groups.size());
    if (inserted) {
      groups.push_back({row[0], {}});
      ranked.emplace_back();
    }
    ranked[it->second].emplace_back(rank, *idx);
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& rk = ranked[g];
    std::stable_sort(rk.begin(), rk.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<char> seen(ds.size(), 0);
    for (const auto& [rank, idx] : rk) {
      if (seen[idx]) {
        throw Error(ErrorCode::FormatError, path.string() + ": group '" + groups[g].id + "' lists '" +
                                                ds.image_id(idx) + "' twice");
      }
      seen[idx] = 1;
      groups[g].group.members.push_back(idx);
    }
    groups[g].group.provenance = groups[g].group.members.size() == 1 ? SeedProvenance::singleton
                                                                      : SeedProvenance::user_supplied;
  }
  return groups;
}

// ---------------------------------------------------------------------------
// Attributes

inline AttributeTable read_attributes(const fs::path& path) {
  static const std::vector<std::string> header{"image_id"};
  const auto rows = read_csv_with_header(path, header);
  std::vector<std::string> names(rows.front().begin() + 1, rows.front().end());
  auto table = AttributeTable::open(names);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    table.add_row(rows[r][0], std::span<const std::string>(rows[r]).subspan(1));
  }
  return table;
}

inline std::string encode_attributes(const AttributeTable& t) {
  std::vector<std::string> header{"image_id"};
  for (const auto& a : t.schema()) header.push_back(a.name);
  std::string out = csv_line(header);
  for (std::size_t r = 0; r < t.rows(); ++r) {
    std::vector<std::string> f{t.image_id(r)};
    const auto row = t.row(r);
    for (std::size_t a = 0; a < row.size(); ++a) f.push_back(t.token(a, row[a]));
    out += csv_line(f);
  }
  return out;
}

/// One annotator's labels against a closed schema. Missing attributes count
/// as "unknown"; keys outside the schema and labels outside the class lists
/// are rejected.
inline AttributeTable parse_annotator_json(std::string_view text, const std::vector<AttributeSchema>& schema,
                                           const std::string& label = "annotator") {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, label + ": " + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::FormatError, label + ": top level must be an object");
  AttributeTable table(schema);
  std::vector<std::string> tokens(schema.size());
  for (const auto& [image_id, attrs] : doc.items()) {
    if (!attrs.is_object()) throw Error(ErrorCode::FormatError, label + ": entry for '" + image_id + "' is not an object");
    std::fill(tokens.begin(), tokens.end(), std::string(kUnknownToken));
    for (const auto& [key, value] : attrs.items()) {
      const auto a = table.attribute_index(key);
      if (!a) throw Error(ErrorCode::SchemaMismatch, label + ": unknown attribute '" + key + "' for '" + image_id + "'");
      if (!value.is_string()) throw Error(ErrorCode::FormatError, label + ": '" + key + "' of '" + image_id + "' is not a string");
      tokens[*a] = value.get<std::string>();
    }
    try {
      table.add_row(image_id, tokens);
    } catch (const Error& e) {
      throw Error(e.code(), label + ": " + e.what());
    }
  }
  return table;
}

}  // namespace lfa::io
