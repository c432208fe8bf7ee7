#include "cwkg/entity_pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "cwkg/common.hpp"
#include "line_reader.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

namespace cwkg {

using nlohmann::json;

std::string TranscriptSentence::key() const { return debate_id + ":" + std::to_string(line_no); }

namespace {

bool is_text_file(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  return ext == ".tsv" || ext == ".txt";
}

void load_transcript_file(const std::filesystem::path& path, std::vector<TranscriptSentence>& out) {
  detail::LineReader reader(path);
  const std::string debate = path.stem().string();
  std::set<int> seen;
  std::string line;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto f = detail::split(line, '\t');
    if (f.size() < 3 || f.size() > 5) {
      throw ParseError("expected 3-5 tab-separated fields at " + reader.where());
    }
    TranscriptSentence s;
    s.debate_id = debate;
    const auto res = std::from_chars(f[0].data(), f[0].data() + f[0].size(), s.line_no);
    if (res.ec != std::errc() || res.ptr != f[0].data() + f[0].size() || s.line_no < 1) {
      throw ParseError("non-integer line number '" + std::string(f[0]) + "' at " + reader.where());
    }
    if (!seen.insert(s.line_no).second) {
      throw ParseError("duplicate line number " + std::to_string(s.line_no) + " at " + reader.where());
    }
    s.speaker = std::string(f[1]);
    s.text = std::string(f[2]);
    if (f.size() >= 4 && !f[3].empty()) {
      if (f[3] == "0") {
        s.label = 0;
      } else if (f[3] == "1") {
        s.label = 1;
      } else {
        throw ParseError("label must be 0 or 1, got '" + std::string(f[3]) + "' at " + reader.where());
      }
    }
    if (f.size() == 5 && !f[4].empty()) s.resolved_text = std::string(f[4]);
    out.push_back(std::move(s));
  }
}

}  // namespace

std::vector<TranscriptSentence> load_transcripts(const std::filesystem::path& path) {
  std::vector<TranscriptSentence> out;
  if (!std::filesystem::exists(path)) throw PathError("transcript path '" + path.string() + "' does not exist");
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
      if (entry.is_regular_file() && is_text_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) load_transcript_file(f, out);
  } else {
    load_transcript_file(path, out);
  }
  return out;
}

CorpusSummary summarize(std::span<const TranscriptSentence> sentences) {
  CorpusSummary s;
  std::set<std::string_view> debates;
  for (const auto& x : sentences) {
    debates.insert(x.debate_id);
    ++s.sentences;
    if (x.label == 1) ++s.positives;
  }
  s.debates = debates.size();
  return s;
}

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

bool at_sentence_start(std::string_view text, std::size_t pos) {
  for (std::size_t i = pos; i > 0; --i) {
    const char c = text[i - 1];
    if (c == ' ' || c == '\t' || c == '"' || c == '\'' || c == '(' || c == '[') continue;
    return c == '.' || c == '!' || c == '?';
  }
  return true;
}

}  // namespace

std::string resolve_first_person(const TranscriptSentence& s) {
  const std::string_view text = s.text;
  const std::string& name = s.speaker;
  const std::string possessive = name + "'s";
  std::string out;
  out.reserve(text.size() + 16);

  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_byte(static_cast<unsigned char>(text[i]))) {
      out.push_back(text[i++]);
      continue;
    }
    const std::size_t start = i;
    while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
    const std::string_view word = text.substr(start, i - start);
    const bool initial = at_sentence_start(text, start);

    if (word == "I" || word == "me" || word == "myself" || (initial && (word == "Me" || word == "Myself"))) {
      out += name;
    } else if (word == "my" || word == "mine" || (initial && (word == "My" || word == "Mine"))) {
      out += possessive;
    } else {
      out += word;
    }
  }
  return out;
}

std::string preprocessed_text(const TranscriptSentence& s) {
  if (s.resolved_text) return *s.resolved_text;
  if (s.speaker.empty()) return s.text;
  return resolve_first_person(s);
}

std::vector<std::string> entity_set(std::span<const EntityMention> mentions) {
  std::vector<std::string> out;
  for (const auto& m : mentions) {
    if (std::find(out.begin(), out.end(), m.uri) == out.end()) out.push_back(m.uri);
  }
  return out;
}

std::vector<SentenceAnnotation> load_annotations(const std::filesystem::path& path) {
  detail::LineReader reader(path);
  std::vector<SentenceAnnotation> out;
  std::string line;
  while (reader.next(line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      SentenceAnnotation a;
      a.key = j.at("key").get<std::string>();
      for (const auto& m : j.at("mentions")) {
        EntityMention em;
        em.surface = m.at("surface").get<std::string>();
        em.uri = m.at("uri").get<std::string>();
        em.confidence = m.at("confidence").get<double>();
        em.start = m.at("start").get<std::size_t>();
        em.end = m.at("end").get<std::size_t>();
        if (em.end <= em.start) throw ParseError("mention span is empty");
        a.mentions.push_back(std::move(em));
      }
      out.push_back(std::move(a));
    } catch (const json::exception& e) {
      throw ParseError("bad annotation record at " + reader.where() + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(std::string(e.what()) + " at " + reader.where());
    }
  }
  return out;
}

void save_annotations(const std::filesystem::path& path, std::span<const SentenceAnnotation> annotations) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PathError("cannot write '" + path.string() + "'");
  for (const auto& a : annotations) {
    json mentions = json::array();
    for (const auto& m : a.mentions) {
      mentions.push_back(json{{"surface", m.surface},
                              {"uri", m.uri},
                              {"confidence", m.confidence},
                              {"start", m.start},
                              {"end", m.end}});
    }
    out << json{{"key", a.key}, {"mentions", std::move(mentions)}}.dump() << '\n';
  }
}

AnnotationJoin join_annotations(std::span<const TranscriptSentence> sentences,
                                std::span<const SentenceAnnotation> annotations) {
  std::set<std::string, std::less<>> keys;
  for (const auto& s : sentences) keys.insert(s.key());
  AnnotationJoin out;
  for (const auto& a : annotations) {
    if (!keys.contains(a.key)) {
      out.unknown_keys.push_back(a.key);
      continue;
    }
    auto& slot = out.mentions[a.key];
    slot.insert(slot.end(), a.mentions.begin(), a.mentions.end());
  }
  return out;
}

namespace {

// Byte offset of the `units`-th UTF-16 code unit of a UTF-8 string.
std::optional<std::size_t> utf16_to_byte(std::string_view text, std::size_t units) {
  std::size_t byte = 0;
  std::size_t counted = 0;
  while (counted < units) {
    if (byte >= text.size()) return std::nullopt;
    const auto c = static_cast<unsigned char>(text[byte]);
    std::size_t len = 1;
    std::size_t u16 = 1;
    if (c >= 0xF0) {
      len = 4;
      u16 = 2;
    } else if (c >= 0xE0) {
      len = 3;
    } else if (c >= 0xC0) {
      len = 2;
    }
    byte += len;
    counted += u16;
  }
  return byte;
}

double json_number(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return parse_real(j.get<std::string>());
  throw ParseError("expected a number in Spotlight response");
}

}  // namespace

std::vector<EntityMention> parse_spotlight_response(std::string_view body, std::string_view text,
                                                    double min_confidence) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed Spotlight JSON: ") + e.what());
  }
  std::vector<EntityMention> out;
  if (!doc.is_object() || !doc.contains("Resources")) return out;
  json resources = doc["Resources"];
  if (resources.is_object()) resources = json::array({resources});
  if (!resources.is_array()) throw ParseError("Spotlight 'Resources' is neither an array nor an object");

  try {
    for (const auto& r : resources) {
      EntityMention m;
      m.uri = r.at("@URI").get<std::string>();
      m.surface = r.at("@surfaceForm").get<std::string>();
      m.confidence = r.contains("@similarityScore") ? json_number(r["@similarityScore"]) : 1.0;
      if (m.confidence < min_confidence) continue;
      const auto offset = static_cast<std::size_t>(json_number(r.at("@offset")));
      const auto start = utf16_to_byte(text, offset);
      if (!start) throw ParseError("Spotlight offset " + std::to_string(offset) + " beyond text");
      m.start = *start;
      m.end = m.start + m.surface.size();
      if (m.end > text.size() || text.substr(m.start, m.surface.size()) != m.surface) {
        throw ParseError("Spotlight surface form '" + m.surface + "' does not match the text at offset " +
                         std::to_string(offset));
      }
      out.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed Spotlight resource: ") + e.what());
  }
  return out;
}

SpotlightClient::SpotlightClient(SpotlightOptions options) : options_(std::move(options)) {
  const auto scheme = options_.endpoint.find("://");
  if (scheme == std::string::npos) throw ConfigError("Spotlight endpoint must be an absolute URL");
  const auto path_start = options_.endpoint.find('/', scheme + 3);
  if (path_start == std::string::npos) {
    base_ = options_.endpoint;
    path_ = "/";
  } else {
    base_ = options_.endpoint.substr(0, path_start);
    path_ = options_.endpoint.substr(path_start);
  }
  if (options_.attempts < 1) throw ConfigError("Spotlight attempts must be >= 1");
}

std::vector<EntityMention> SpotlightClient::annotate(std::string_view key, std::string_view text) const {
  if (text.empty()) return {};
  httplib::Client client(base_);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  const httplib::Headers headers{{"Accept", "application/json"}};
  const httplib::Params params{{"text", std::string(text)}, {"confidence", format_real(options_.confidence)}};

  auto backoff = options_.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= options_.attempts; ++attempt) {
    auto res = client.Post(path_, headers, params);
    if (res && res->status >= 200 && res->status < 300) {
      return parse_spotlight_response(res->body, text, options_.confidence);
    }
    bool transient = true;
    if (res) {
      last_error = "HTTP " + std::to_string(res->status);
      transient = res->status == 429 || res->status >= 500;
    } else {
      last_error = httplib::to_string(res.error());
    }
    if (!transient) break;
    if (attempt < options_.attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw LinkingError(std::string(key), last_error);
}

std::vector<SentenceAnnotation> annotate_corpus(std::span<const TranscriptSentence> sentences,
                                                std::span<const SentenceAnnotation> cache,
                                                const SpotlightClient* client, int max_in_flight,
                                                std::vector<std::string>* missing) {
  std::map<std::string, const SentenceAnnotation*, std::less<>> cached;
  for (const auto& a : cache) cached.emplace(a.key, &a);

  std::vector<SentenceAnnotation> out(sentences.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    out[i].key = sentences[i].key();
    if (auto it = cached.find(out[i].key); it != cached.end()) {
      out[i].mentions = it->second->mentions;
    } else {
      pending.push_back(i);
    }
  }

  if (!client) {
    if (missing) {
      for (auto i : pending) missing->push_back(out[i].key);
    }
    return out;
  }

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    while (true) {
      const std::size_t slot = next.fetch_add(1);
      if (slot >= pending.size()) return;
      {
        std::lock_guard lock(error_mutex);
        if (error) return;
      }
      const std::size_t i = pending[slot];
      try {
        out[i].mentions = client->annotate(out[i].key, preprocessed_text(sentences[i]));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, max_in_flight));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, std::max<std::size_t>(pending.size(), 1)); ++w) {
      pool.emplace_back(worker);
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace cwkg
