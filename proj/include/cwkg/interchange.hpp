#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "cwkg/common.hpp"
#include "cwkg/kg_embed.hpp"

namespace cwkg {

/// Word-vector text format shared by KG tables, sentence embeddings and word
/// vectors:
///
///   [#key=value #key=value]   optional metadata comment
///   <count> <dim>
///   <key> v1 v2 ... v_dim
///
/// Values are written in shortest round-trip decimal form.
struct VectorRecord {
  std::string key;
  VectorX<double> values;
};

struct VectorFile {
  std::vector<std::pair<std::string, std::string>> metadata;
  Index dim = 0;
  std::vector<VectorRecord> records;

  std::optional<std::string> meta(std::string_view key) const;
};

struct VectorReadOptions {
  /// Expected record length for a key; defaults to the header dimension.
  std::function<Index(std::string_view key, const VectorFile& header)> record_length;
  /// When set, records whose key is rejected are skipped (still counted).
  std::function<bool(std::string_view key)> keep;
};

/// Throws FormatError (with byte offset) on header/record mismatches.
VectorFile read_vector_file(const std::filesystem::path& path, const VectorReadOptions& options = {});

void write_vector_file(const std::filesystem::path& path, const VectorFile& file);

inline constexpr std::string_view kRelationKeyPrefix = "__rel__";

/// Serializes a table. Kind tables carry `#kind=<KIND> #d=<dim>`; relation
/// records follow the entities under `__rel__<name>`: the relation vector,
/// the row-major d x d map (RESCAL), or the vector followed by the map (TransR).
void save_table(const KgTable& table, const std::filesystem::path& path);

/// Loads a table written by save_table, or any plain word-vector file as a
/// kind-less entity table (e.g. pretrained Wikipedia2Vec vectors).
/// `keep` optionally restricts which entity keys are materialized.
KgTable load_table(const std::filesystem::path& path,
                   const std::function<bool(std::string_view)>& keep = {});

}  // namespace cwkg
