#pragma once

// Figure-record ingestion and model-input construction: corpus parsing,
// OCR source merging, figure-reference extraction, rule-based paragraph
// refinement and OCR + mention + paragraph assembly.

#include <algorithm>
#include <climits>
#include <cstddef>
#include <istream>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "figcap/errors.hpp"
#include "figcap/jsonl.hpp"
#include "figcap/text_core.hpp"

namespace figcap {

struct FigureRecord {
  std::string id;
  std::optional<std::string> caption;
  std::vector<std::string> ocr_official;
  std::optional<std::vector<std::string>> ocr_alt;
  std::vector<std::string> mentions;
  std::string paragraph;

  friend bool operator==(const FigureRecord&, const FigureRecord&) = default;
};

struct FigureRef {
  enum class Kind { figure, table };
  Kind kind = Kind::figure;
  int number = 1;

  std::string kind_name() const { return kind == Kind::figure ? "figure" : "table"; }

  friend bool operator==(const FigureRef&, const FigureRef&) = default;
};

enum class Provenance { rule_based, external_llm, passthrough };

inline std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::rule_based:
      return "rule-based";
    case Provenance::external_llm:
      return "external-llm";
    case Provenance::passthrough:
      return "passthrough";
  }
  return "unknown";
}

struct RefinementResult {
  std::optional<FigureRef> target;
  std::string refined_paragraph;
  Provenance provenance = Provenance::passthrough;
  std::size_t char_count = 0;
};

struct AssembledInput {
  std::string text;
  bool truncated = false;
  std::size_t content_tokens = 0;  // tokens outside the three section markers
};

enum class OcrMergePolicy { prefer_alt, prefer_official, merge_union };

inline OcrMergePolicy parse_merge_policy(std::string_view name) {
  if (name == "prefer-alt") return OcrMergePolicy::prefer_alt;
  if (name == "prefer-official") return OcrMergePolicy::prefer_official;
  if (name == "union") return OcrMergePolicy::merge_union;
  throw InvalidArgument("unknown OCR merge policy '" + std::string(name) +
                        "' (expected prefer-alt, prefer-official or union)");
}

inline std::string merge_policy_name(OcrMergePolicy p) {
  switch (p) {
    case OcrMergePolicy::prefer_alt:
      return "prefer-alt";
    case OcrMergePolicy::prefer_official:
      return "prefer-official";
    case OcrMergePolicy::merge_union:
      return "union";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Corpus I/O

namespace detail {

inline std::vector<std::string> string_array(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_array()) throw FormatError(std::string("'") + key + "' must be an array of strings");
  std::vector<std::string> out;
  out.reserve(v.size());
  for (const auto& item : v) {
    if (!item.is_string()) {
      throw FormatError(std::string("'") + key + "' must be an array of strings");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

inline std::string string_field(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_string()) throw FormatError(std::string("'") + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace detail

inline FigureRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("record must be a JSON object");
  for (const char* key : {"id", "ocr", "mentions", "paragraph"}) {
    if (!j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  }
  FigureRecord rec;
  rec.id = detail::string_field(j, "id");
  if (rec.id.empty()) throw FormatError("empty id");
  if (j.contains("caption") && !j.at("caption").is_null()) {
    rec.caption = detail::string_field(j, "caption");
  }
  rec.ocr_official = detail::string_array(j, "ocr");
  if (j.contains("ocr_alt") && !j.at("ocr_alt").is_null()) {
    rec.ocr_alt = detail::string_array(j, "ocr_alt");
  }
  rec.mentions = detail::string_array(j, "mentions");
  rec.paragraph = detail::string_field(j, "paragraph");
  return rec;
}

inline nlohmann::json record_to_json(const FigureRecord& rec) {
  nlohmann::json j{{"id", rec.id},
                   {"ocr", rec.ocr_official},
                   {"mentions", rec.mentions},
                   {"paragraph", rec.paragraph}};
  if (rec.caption) j["caption"] = *rec.caption;
  if (rec.ocr_alt) j["ocr_alt"] = *rec.ocr_alt;
  return j;
}

// Streams records to fn(record, line_number). Rejects malformed lines and
// duplicate ids, naming the offending line.
template <typename Fn>
void for_each_record(std::istream& in, Fn&& fn) {
  std::set<std::string> seen;
  jsonl::for_each_line(in, [&](const nlohmann::json& j, std::size_t line_no) {
    auto rec = record_from_json(j);
    if (!seen.insert(rec.id).second) throw CorpusError("duplicate id '" + rec.id + "'");
    fn(std::move(rec), line_no);
  });
}

inline std::vector<FigureRecord> parse_corpus(std::istream& in) {
  std::vector<FigureRecord> out;
  for_each_record(in, [&](FigureRecord rec, std::size_t) { out.push_back(std::move(rec)); });
  return out;
}

inline void write_corpus(std::ostream& out, const std::vector<FigureRecord>& records) {
  for (const auto& rec : records) jsonl::write_line(out, record_to_json(rec));
}

// ---------------------------------------------------------------------------
// OCR merging

inline std::vector<std::string> merge_ocr(const std::vector<std::string>& official,
                                          const std::optional<std::vector<std::string>>& alt,
                                          OcrMergePolicy policy) {
  if (!alt) return official;
  switch (policy) {
    case OcrMergePolicy::prefer_alt:
      return alt->empty() ? official : *alt;
    case OcrMergePolicy::prefer_official:
      return official.empty() ? *alt : official;
    case OcrMergePolicy::merge_union: {
      std::vector<std::string> out;
      std::set<std::string_view> seen;
      for (const auto* list : {&official, &*alt}) {
        for (const auto& s : *list) {
          if (seen.insert(s).second) out.push_back(s);
        }
      }
      return out;
    }
  }
  return official;
}

// ---------------------------------------------------------------------------
// Figure references

struct RefOccurrence {
  FigureRef ref;
  std::size_t offset;  // byte offset in the scanned text
};

// Finds "Figure N", "Fig. N", "Fig N", "Table N", "Tab. N" (case-insensitive).
inline std::vector<RefOccurrence> find_figure_refs(std::string_view text) {
  static const std::regex kPattern(R"(\b(?:(figure|fig\.?)|(table|tab\.))\s*([0-9]+))",
                                   std::regex::ECMAScript | std::regex::icase);
  std::vector<RefOccurrence> out;
  const std::string owned(text);
  for (auto it = std::sregex_iterator(owned.begin(), owned.end(), kPattern);
       it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    const std::string digits = m[3].str();
    if (digits.size() > 9) continue;
    const int number = std::stoi(digits);
    if (number < 1) continue;
    const auto kind = m[1].matched ? FigureRef::Kind::figure : FigureRef::Kind::table;
    out.push_back({{kind, number}, static_cast<std::size_t>(m.position(0))});
  }
  return out;
}

// The (kind, number) referenced most often across all mentions; ties go to
// the reference seen first.
inline FigureRef most_mentioned_figure(const std::vector<std::string>& mentions) {
  struct Tally {
    FigureRef ref;
    std::size_t count;
  };
  std::vector<Tally> tallies;  // in order of first occurrence
  for (const auto& mention : mentions) {
    for (const auto& occ : find_figure_refs(mention)) {
      auto it = std::find_if(tallies.begin(), tallies.end(),
                             [&](const Tally& t) { return t.ref == occ.ref; });
      if (it == tallies.end()) {
        tallies.push_back({occ.ref, 1});
      } else {
        ++it->count;
      }
    }
  }
  if (tallies.empty()) throw NoReferenceError("no figure or table reference in mentions");
  const Tally* best = &tallies.front();
  for (const auto& t : tallies) {
    if (t.count > best->count) best = &t;
  }
  return best->ref;
}

inline std::optional<FigureRef> try_most_mentioned_figure(const std::vector<std::string>& mentions) {
  try {
    return most_mentioned_figure(mentions);
  } catch (const NoReferenceError&) {
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// Sentences

namespace detail {

inline bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool ascii_alpha(char c) noexcept {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

// True when the '.' at text[dot] ends a known abbreviation ("Fig.", "e.g.").
inline bool is_abbreviation(std::string_view text, std::size_t dot) {
  static const std::set<std::string, std::less<>> kAbbrev = {
      "fig", "figs", "tab", "tabs", "eq", "eqs", "sec", "secs", "ref", "refs",
      "vs",  "cf",   "al",  "e.g",  "i.e", "approx", "resp", "ch", "app"};
  std::size_t begin = dot;
  while (begin > 0 && (ascii_alpha(text[begin - 1]) || text[begin - 1] == '.')) --begin;
  std::string word(text.substr(begin, dot - begin));
  for (auto& c : word) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return kAbbrev.contains(word);
}

}  // namespace detail

// Sentences end at '.', '!' or '?' followed by whitespace or end of text.
// Periods closing a known abbreviation do not end a sentence. Returned views
// are trimmed and point into `paragraph`.
inline std::vector<std::string_view> split_sentences(std::string_view paragraph) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    while (start < end && detail::is_space(paragraph[start])) ++start;
    std::size_t stop = end;
    while (stop > start && detail::is_space(paragraph[stop - 1])) --stop;
    if (stop > start) out.push_back(paragraph.substr(start, stop - start));
    start = end;
  };
  for (std::size_t i = 0; i < paragraph.size(); ++i) {
    const char c = paragraph[i];
    if (c != '.' && c != '!' && c != '?') continue;
    const bool boundary = i + 1 == paragraph.size() || detail::is_space(paragraph[i + 1]);
    if (!boundary) continue;
    if (c == '.' && detail::is_abbreviation(paragraph, i)) continue;
    emit(i + 1);
  }
  emit(paragraph.size());
  return out;
}

// Joins sentences with single spaces, stopping before the first sentence that
// would push the result past budget_chars code points.
inline std::string join_within_budget(const std::vector<std::string_view>& sentences,
                                      std::size_t budget_chars) {
  std::string out;
  std::size_t chars = 0;
  for (const auto s : sentences) {
    const std::size_t add = utf8_length(s) + (out.empty() ? 0 : 1);
    if (chars + add > budget_chars) break;
    if (!out.empty()) out.push_back(' ');
    out += s;
    chars += add;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Refinement

inline RefinementResult refine_passthrough(std::string_view paragraph,
                                           std::optional<FigureRef> target = std::nullopt) {
  RefinementResult r;
  r.target = target;
  r.refined_paragraph = std::string(paragraph);
  r.provenance = Provenance::passthrough;
  r.char_count = utf8_length(r.refined_paragraph);
  return r;
}

// Keeps the sentences that reference `target`, in order; if none do, keeps the
// leading sentences. Output is cut at sentence boundaries to budget_chars.
inline RefinementResult refine_rule_based(std::string_view paragraph, const FigureRef& target,
                                          std::size_t budget_chars) {
  if (budget_chars == 0) throw InvalidArgument("refine_rule_based: budget must be > 0");
  const auto sentences = split_sentences(paragraph);
  std::vector<std::string_view> kept;
  for (const auto s : sentences) {
    const auto refs = find_figure_refs(s);
    if (std::any_of(refs.begin(), refs.end(), [&](const RefOccurrence& o) { return o.ref == target; })) {
      kept.push_back(s);
    }
  }
  RefinementResult r;
  r.target = target;
  r.provenance = Provenance::rule_based;
  r.refined_paragraph = join_within_budget(kept.empty() ? sentences : kept, budget_chars);
  r.char_count = utf8_length(r.refined_paragraph);
  return r;
}

// Cuts arbitrary text (e.g. a model response) to budget_chars: at a sentence
// boundary when the first sentence fits, otherwise at a code point boundary.
inline std::string fit_to_budget(std::string_view text, std::size_t budget_chars) {
  if (utf8_length(text) <= budget_chars) return std::string(text);
  auto joined = join_within_budget(split_sentences(text), budget_chars);
  if (!joined.empty()) return joined;
  return std::string(utf8_prefix(text, budget_chars));
}

// ---------------------------------------------------------------------------
// Input assembly

namespace detail {

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// Prefix of text holding its first `keep` tokens.
inline std::string keep_tokens(const std::string& text, const std::vector<TokenSpan>& spans,
                               std::size_t keep) {
  if (keep >= spans.size()) return text;
  if (keep == 0) return {};
  return text.substr(0, spans[keep - 1].end);
}

}  // namespace detail

inline AssembledInput assemble_input(const std::vector<std::string>& ocr,
                                     const std::vector<std::string>& mentions,
                                     std::string_view paragraph, std::size_t budget_tokens,
                                     const TokenizerConfig& tokenizer = {}) {
  if (budget_tokens == 0) throw InvalidArgument("assemble_input: budget must be > 0");
  std::string sections[3] = {detail::join(ocr, " "), detail::join(mentions, " "),
                             std::string(paragraph)};
  std::vector<TokenSpan> spans[3];
  std::size_t total = 0;
  for (int s = 0; s < 3; ++s) {
    spans[s] = token_spans(sections[s], tokenizer);
    total += spans[s].size();
  }

  AssembledInput result;
  if (total > budget_tokens) {
    result.truncated = true;
    std::size_t excess = total - budget_tokens;
    for (int s : {2, 1, 0}) {
      const std::size_t cut = std::min(excess, spans[s].size());
      sections[s] = detail::keep_tokens(sections[s], spans[s], spans[s].size() - cut);
      excess -= cut;
      total -= cut;
    }
  }
  result.content_tokens = total;
  result.text = "<ocr> " + sections[0] + " <mention> " + sections[1] + " <paragraph> " + sections[2];
  return result;
}

inline AssembledInput assemble_input(const FigureRecord& record, const RefinementResult& refinement,
                                     std::size_t budget_tokens,
                                     OcrMergePolicy policy = OcrMergePolicy::prefer_alt,
                                     const TokenizerConfig& tokenizer = {}) {
  return assemble_input(merge_ocr(record.ocr_official, record.ocr_alt, policy), record.mentions,
                        refinement.refined_paragraph, budget_tokens, tokenizer);
}

inline nlohmann::json refinement_json(const std::string& id, const RefinementResult& r) {
  nlohmann::json target = nullptr;
  if (r.target) target = {{"kind", r.target->kind_name()}, {"number", r.target->number}};
  return nlohmann::json{{"id", id},
                        {"target", target},
                        {"refined_paragraph", r.refined_paragraph},
                        {"provenance", provenance_name(r.provenance)}};
}

}  // namespace figcap
