#pragma once

// Per-image categorical attributes. Used only for evaluation (coherence) and
// as the per-annotator input to consensus merging.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lfa/core.hpp"

namespace lfa {

inline constexpr std::string_view kUnknownToken = "unknown";
inline constexpr std::int32_t kUnknownCode = -1;

struct AttributeSchema {
  std::string name;
  std::vector<std::string> classes;  // empty with an open table: learned on insert
};

/// The ten face attributes and their classes used for annotation prompts.
inline std::vector<AttributeSchema> face_attribute_schema() {
  return {
      {"gender", {"male", "female"}},
      {"age", {"young", "middle-aged", "senior"}},
      {"skin_color", {"light", "medium", "dark"}},
      {"ancestry", {"asian", "south_asian", "black", "latino/hispanic", "middle_eastern", "white", "indigenous"}},
      {"hair_color", {"black", "brown", "red", "blonde", "gray", "other"}},
      {"bangs", {"yes", "no"}},
      {"bald", {"yes", "no"}},
      {"beard", {"no", "mustache", "stubble", "full"}},
      {"glasses", {"no", "regular", "sun"}},
      {"headwear", {"no", "beanie", "cap", "hat", "headband", "hijab", "helmet", "turban"}},
  };
}

class AttributeTable {
 public:
  AttributeTable() = default;

  /// A closed table rejects tokens outside each attribute's class list; an
  /// open table appends unseen tokens as new classes.
  explicit AttributeTable(std::vector<AttributeSchema> schema, bool open_vocabulary = false)
      : schema_(std::move(schema)), open_(open_vocabulary) {
    for (const auto& a : schema_) {
      std::unordered_map<std::string, std::int32_t> lookup;
      for (std::size_t c = 0; c < a.classes.size(); ++c) lookup.emplace(a.classes[c], static_cast<std::int32_t>(c));
      lookup_.push_back(std::move(lookup));
    }
  }

  static AttributeTable open(std::span<const std::string> attribute_names) {
    std::vector<AttributeSchema> schema;
    for (const auto& n : attribute_names) schema.push_back({n, {}});
    return AttributeTable(std::move(schema), true);
  }

  std::size_t attribute_count() const noexcept { return schema_.size(); }
  std::size_t rows() const noexcept { return image_ids_.size(); }
  const std::vector<AttributeSchema>& schema() const noexcept { return schema_; }
  bool is_open() const noexcept { return open_; }

  std::vector<std::string> attribute_names() const {
    std::vector<std::string> names;
    for (const auto& a : schema_) names.push_back(a.name);
    return names;
  }

  std::optional<std::size_t> attribute_index(std::string_view name) const {
    for (std::size_t a = 0; a < schema_.size(); ++a) {
      if (schema_[a].name == name) return a;
    }
    return std::nullopt;
  }

  std::int32_t encode(std::size_t attribute, const std::string& token) {
    if (token == kUnknownToken) return kUnknownCode;
    auto& lookup = lookup_[attribute];
    auto it = lookup.find(token);
    if (it != lookup.end()) return it->second;
    if (!open_) {
      throw Error(ErrorCode::UnknownClassToken,
                  "'" + token + "' is not a class of attribute '" + schema_[attribute].name + "'");
    }
    const auto code = static_cast<std::int32_t>(schema_[attribute].classes.size());
    schema_[attribute].classes.push_back(token);
    lookup.emplace(token, code);
    return code;
  }

  const std::string& token(std::size_t attribute, std::int32_t code) const {
    static const std::string unknown(kUnknownToken);
    if (code == kUnknownCode) return unknown;
    return schema_[attribute].classes[static_cast<std::size_t>(code)];
  }

  void add_row(const std::string& image_id, std::span<const std::string> tokens) {
    if (tokens.size() != schema_.size()) {
      throw Error(ErrorCode::SchemaMismatch, "row for '" + image_id + "' has " + std::to_string(tokens.size()) +
                                                 " values, schema has " + std::to_string(schema_.size()));
    }
    std::vector<std::int32_t> codes(tokens.size());
    for (std::size_t a = 0; a < tokens.size(); ++a) codes[a] = encode(a, tokens[a]);
    add_coded_row(image_id, codes);
  }

  void add_coded_row(const std::string& image_id, std::span<const std::int32_t> codes) {
    if (codes.size() != schema_.size()) throw Error(ErrorCode::SchemaMismatch, "coded row width mismatch");
    if (!row_of_.emplace(image_id, image_ids_.size()).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate attribute row for '" + image_id + "'");
    }
    image_ids_.push_back(image_id);
    codes_.insert(codes_.end(), codes.begin(), codes.end());
  }

  std::span<const std::int32_t> row(std::size_t r) const {
    return {codes_.data() + r * schema_.size(), schema_.size()};
  }
  const std::string& image_id(std::size_t r) const { return image_ids_[r]; }
  const std::vector<std::string>& image_ids() const noexcept { return image_ids_; }

  std::optional<std::size_t> find(const std::string& image_id) const {
    auto it = row_of_.find(image_id);
    if (it == row_of_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<AttributeSchema> schema_;
  bool open_ = false;
  std::vector<std::unordered_map<std::string, std::int32_t>> lookup_;
  std::vector<std::string> image_ids_;
  std::vector<std::int32_t> codes_;
  std::unordered_map<std::string, std::size_t> row_of_;
};

}  // namespace lfa
