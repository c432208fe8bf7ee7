#include "cwkg/interchange.hpp"

#include <charconv>
#include <fstream>

#include "line_reader.hpp"

namespace cwkg {

std::optional<std::string> VectorFile::meta(std::string_view key) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return v;
  }
  return std::nullopt;
}

namespace {

std::vector<std::pair<std::string, std::string>> parse_metadata(std::string_view line) {
  std::vector<std::pair<std::string, std::string>> out;
  for (auto token : detail::split_spaces(line)) {
    if (token.empty() || token.front() != '#') continue;
    token.remove_prefix(1);
    const auto eq = token.find('=');
    if (eq == std::string_view::npos) {
      out.emplace_back(std::string(token), "");
    } else {
      out.emplace_back(std::string(token.substr(0, eq)), std::string(token.substr(eq + 1)));
    }
  }
  return out;
}

Index parse_count(std::string_view token, const detail::LineReader& reader) {
  Index value = 0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size() || value < 0) {
    throw FormatError("bad header field '" + std::string(token) + "' at " + reader.where());
  }
  return value;
}

}  // namespace

VectorFile read_vector_file(const std::filesystem::path& path, const VectorReadOptions& options) {
  detail::LineReader reader(path);
  VectorFile file;
  std::string line;

  bool have_header = false;
  Index declared = 0;
  while (reader.next(line)) {
    if (line.empty()) continue;
    if (line.front() == '#') {
      auto meta = parse_metadata(line);
      file.metadata.insert(file.metadata.end(), meta.begin(), meta.end());
      continue;
    }
    const auto fields = detail::split_spaces(line);
    if (fields.size() != 2) throw FormatError("expected '<count> <dim>' header at " + reader.where());
    declared = parse_count(fields[0], reader);
    file.dim = parse_count(fields[1], reader);
    have_header = true;
    break;
  }
  if (!have_header) throw FormatError("missing header in '" + path.string() + "'");

  Index seen = 0;
  while (reader.next(line)) {
    if (line.empty()) continue;
    ++seen;
    if (seen > declared) {
      throw FormatError("more records than the declared count " + std::to_string(declared) + " at " +
                        reader.where());
    }
    const auto fields = detail::split_spaces(line);
    if (fields.empty()) throw FormatError("blank record at " + reader.where());
    const std::string_view key = fields.front();
    const Index expected = options.record_length ? options.record_length(key, file) : file.dim;
    const auto got = static_cast<Index>(fields.size()) - 1;
    if (got != expected) {
      throw FormatError("record '" + std::string(key) + "' has " + std::to_string(got) + " values, expected " +
                        std::to_string(expected) + " at " + reader.where());
    }
    if (options.keep && !options.keep(key)) continue;
    VectorRecord rec;
    rec.key = std::string(key);
    rec.values.resize(expected);
    for (Index i = 0; i < expected; ++i) {
      try {
        rec.values[i] = parse_real(fields[static_cast<std::size_t>(i) + 1]);
      } catch (const ParseError& e) {
        throw FormatError(std::string(e.what()) + " at " + reader.where());
      }
    }
    file.records.push_back(std::move(rec));
  }
  if (seen != declared) {
    throw FormatError("header declares " + std::to_string(declared) + " records but '" + path.string() +
                      "' holds " + std::to_string(seen) + " (byte " + std::to_string(reader.offset()) + ")");
  }
  return file;
}

void write_vector_file(const std::filesystem::path& path, const VectorFile& file) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PathError("cannot write '" + path.string() + "'");
  if (!file.metadata.empty()) {
    bool first = true;
    for (const auto& [k, v] : file.metadata) {
      out << (first ? "" : " ") << '#' << k;
      if (!v.empty()) out << '=' << v;
      first = false;
    }
    out << '\n';
  }
  out << file.records.size() << ' ' << file.dim << '\n';
  for (const auto& rec : file.records) {
    out << rec.key;
    for (Index i = 0; i < rec.values.size(); ++i) out << ' ' << format_real(rec.values[i]);
    out << '\n';
  }
  if (!out) throw PathError("failed writing '" + path.string() + "'");
}

void save_table(const KgTable& table, const std::filesystem::path& path) {
  table.check_shapes();
  VectorFile file;
  file.dim = table.entities.rows();
  if (table.kind) {
    file.metadata = {{"kind", std::string(to_string(*table.kind))}, {"d", std::to_string(table.dim)}};
  }
  file.records.reserve(table.num_entities() + table.num_relations());
  for (std::size_t i = 0; i < table.num_entities(); ++i) {
    file.records.push_back({table.entity_names[i], table.entities.col(static_cast<Index>(i))});
  }
  if (table.kind) {
    const auto kind = *table.kind;
    const Index d = table.dim;
    const Index vw = relation_vector_width(kind, d);
    const Index mw = has_relation_map(kind) ? d * d : 0;
    for (std::size_t r = 0; r < table.num_relations(); ++r) {
      VectorX<double> v(vw + mw);
      if (vw > 0) v.head(vw) = table.relations.col(static_cast<Index>(r));
      if (mw > 0) {
        const auto& m = table.relation_maps[r];
        for (Index i = 0; i < d; ++i)
          for (Index j = 0; j < d; ++j) v[vw + i * d + j] = m(i, j);
      }
      file.records.push_back({std::string(kRelationKeyPrefix) + table.relation_names[r], std::move(v)});
    }
  }
  write_vector_file(path, file);
}

KgTable load_table(const std::filesystem::path& path, const std::function<bool(std::string_view)>& keep) {
  std::optional<KgModelKind> kind;
  Index d = 0;
  bool resolved = false;
  auto resolve_kind = [&](const VectorFile& header) {
    if (resolved) return;
    resolved = true;
    const auto name = header.meta("kind");
    if (!name) return;
    kind = parse_kg_model(*name);
    if (!kind) throw FormatError("unknown table kind '" + *name + "' in '" + path.string() + "'");
    const auto dm = header.meta("d");
    d = header.dim;
    if (dm) {
      const auto res = std::from_chars(dm->data(), dm->data() + dm->size(), d);
      if (res.ec != std::errc() || d < 1) throw FormatError("bad #d metadata in '" + path.string() + "'");
    }
    if (entity_width(*kind, d) != header.dim) {
      throw FormatError("header dim " + std::to_string(header.dim) + " inconsistent with #d=" + std::to_string(d) +
                        " for " + std::string(to_string(*kind)));
    }
  };

  VectorReadOptions options;
  options.record_length = [&](std::string_view key, const VectorFile& header) -> Index {
    resolve_kind(header);
    if (kind && key.starts_with(kRelationKeyPrefix)) {
      return relation_vector_width(*kind, d) + (has_relation_map(*kind) ? d * d : 0);
    }
    return header.dim;
  };
  options.keep = [&](std::string_view key) {
    if (kind && key.starts_with(kRelationKeyPrefix)) return true;
    return !keep || keep(key);
  };

  VectorFile file = read_vector_file(path, options);
  resolve_kind(file);  // files with no records never hit record_length

  KgTable table;
  table.kind = kind;
  table.dim = kind ? d : file.dim;
  std::vector<const VectorRecord*> ents, rels;
  for (const auto& rec : file.records) {
    (kind && std::string_view(rec.key).starts_with(kRelationKeyPrefix) ? rels : ents).push_back(&rec);
  }
  table.entities.resize(file.dim, static_cast<Index>(ents.size()));
  for (std::size_t i = 0; i < ents.size(); ++i) {
    table.entity_names.push_back(ents[i]->key);
    table.entities.col(static_cast<Index>(i)) = ents[i]->values;
  }
  if (kind) {
    const Index vw = relation_vector_width(*kind, d);
    table.relations.resize(vw, static_cast<Index>(rels.size()));
    for (std::size_t r = 0; r < rels.size(); ++r) {
      table.relation_names.push_back(rels[r]->key.substr(kRelationKeyPrefix.size()));
      const auto& v = rels[r]->values;
      if (vw > 0) table.relations.col(static_cast<Index>(r)) = v.head(vw);
      if (has_relation_map(*kind)) {
        MatrixX<double> m(d, d);
        for (Index i = 0; i < d; ++i)
          for (Index j = 0; j < d; ++j) m(i, j) = v[vw + i * d + j];
        table.relation_maps.push_back(std::move(m));
      }
    }
  }
  table.check_shapes();
  return table;
}

}  // namespace cwkg
