#pragma once

// Consensus selection over N model outputs for one figure. Candidate i scores
//
//   score_i = sum_{j != i} R(caption_i, caption_j) / N
//
// where R(caption_i, caption_j) is the normalized ROUGE-n of caption_j taken
// as candidate against caption_i as reference. The highest score wins; ties go
// to the lowest index.

#include <cstddef>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "figcap/errors.hpp"
#include "figcap/jsonl.hpp"
#include "figcap/metrics.hpp"
#include "figcap/parallel.hpp"
#include "figcap/text_core.hpp"

namespace figcap {

struct ModelCaption {
  std::string model;
  std::string caption;
};

struct FusionInput {
  std::string id;
  std::vector<ModelCaption> candidates;
};

struct FusionResult {
  std::size_t chosen_index = 0;
  std::string chosen_text;
  std::vector<double> scores;
  std::vector<std::vector<double>> score_matrix;
};

struct FusionOptions {
  std::size_t n = 2;
  Normalizer norm = Normalizer::length_ratio();
  TokenizerConfig tokenizer{};
};

using ScoreMatrix = std::vector<std::vector<double>>;

inline ScoreMatrix pairwise_matrix(const std::vector<TokenSequence>& captions, std::size_t n,
                                   const Normalizer& norm) {
  if (captions.empty()) throw InvalidArgument("pairwise_matrix: no captions");
  const std::size_t count = captions.size();
  ScoreMatrix m(count, std::vector<double>(count, 0.0));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < count; ++j) {
      if (i != j) m[i][j] = rouge_n_normalized(captions[j], captions[i], n, norm);
    }
  }
  return m;
}

inline ScoreMatrix pairwise_matrix(const std::vector<std::string>& captions, std::size_t n,
                                   const Normalizer& norm, const TokenizerConfig& tokenizer = {}) {
  std::vector<TokenSequence> tokens;
  tokens.reserve(captions.size());
  for (const auto& c : captions) tokens.push_back(tokenize(c, tokenizer));
  return pairwise_matrix(tokens, n, norm);
}

inline FusionResult consensus_select(const FusionInput& input, const FusionOptions& options = {}) {
  const std::size_t count = input.candidates.size();
  if (count == 0) throw InvalidArgument("consensus_select: no candidates for '" + input.id + "'");
  {
    std::set<std::string_view> names;
    for (const auto& c : input.candidates) {
      if (!names.insert(c.model).second) {
        throw InvalidArgument("consensus_select: duplicate model name '" + c.model + "'");
      }
    }
  }

  std::vector<std::string> texts;
  texts.reserve(count);
  for (const auto& c : input.candidates) texts.push_back(c.caption);

  FusionResult result;
  result.score_matrix = pairwise_matrix(texts, options.n, options.norm, options.tokenizer);
  result.scores.assign(count, 0.0);
  for (std::size_t i = 0; i < count; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < count; ++j) {
      if (j != i) sum += result.score_matrix[i][j];
    }
    result.scores[i] = sum / static_cast<double>(count);
  }
  for (std::size_t i = 1; i < count; ++i) {
    if (result.scores[i] > result.scores[result.chosen_index]) result.chosen_index = i;
  }
  result.chosen_text = input.candidates[result.chosen_index].caption;
  return result;
}

// One {"id", "caption"} stream, in file order. "chosen_text" is accepted in
// place of "caption" so fused output can be fed back in.
struct CaptionRow {
  std::string id;
  std::string caption;
};

inline std::vector<CaptionRow> read_caption_stream(std::istream& in) {
  std::vector<CaptionRow> rows;
  std::set<std::string> seen;
  jsonl::for_each_line(in, [&](const nlohmann::json& j, std::size_t) {
    if (!j.is_object() || !j.contains("id") || !j.at("id").is_string()) {
      throw FormatError("expected an object with a string 'id'");
    }
    const char* key = j.contains("caption") ? "caption" : "chosen_text";
    if (!j.contains(key) || !j.at(key).is_string()) {
      throw FormatError("expected a string 'caption'");
    }
    CaptionRow row{j.at("id").get<std::string>(), j.at(key).get<std::string>()};
    if (row.id.empty()) throw FormatError("empty id");
    if (!seen.insert(row.id).second) throw CorpusError("duplicate id '" + row.id + "'");
    rows.push_back(std::move(row));
  });
  return rows;
}

struct NamedCaptionStream {
  std::string model;
  std::vector<CaptionRow> rows;
};

struct FusedRow {
  std::string id;
  FusionResult result;
};

// Aligns the streams by id (order of the first stream) and selects per id.
inline std::vector<FusedRow> fuse_corpus(const std::vector<NamedCaptionStream>& streams,
                                         const FusionOptions& options = {}, std::size_t jobs = 1) {
  if (streams.empty()) throw InvalidArgument("fuse_corpus: no input streams");

  std::vector<std::unordered_map<std::string, const std::string*>> by_id(streams.size());
  for (std::size_t s = 0; s < streams.size(); ++s) {
    for (const auto& row : streams[s].rows) by_id[s].emplace(row.id, &row.caption);
  }
  const auto& order = streams.front().rows;
  for (std::size_t s = 1; s < streams.size(); ++s) {
    for (const auto& row : order) {
      if (!by_id[s].contains(row.id)) {
        throw AlignmentError("id '" + row.id + "' missing from " + streams[s].model, row.id);
      }
    }
    for (const auto& row : streams[s].rows) {
      if (!by_id[0].contains(row.id)) {
        throw AlignmentError("id '" + row.id + "' in " + streams[s].model + " missing from " +
                                 streams[0].model,
                             row.id);
      }
    }
  }

  return ordered_map(order.size(), jobs, [&](std::size_t k) {
    FusionInput input{order[k].id, {}};
    for (std::size_t s = 0; s < streams.size(); ++s) {
      input.candidates.push_back({streams[s].model, *by_id[s].at(input.id)});
    }
    return FusedRow{input.id, consensus_select(input, options)};
  });
}

inline nlohmann::json fused_row_json(const FusedRow& row) {
  return nlohmann::json{{"id", row.id},
                        {"chosen_index", row.result.chosen_index},
                        {"chosen_text", row.result.chosen_text},
                        {"scores", row.result.scores}};
}

}  // namespace figcap
