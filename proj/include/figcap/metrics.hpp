#pragma once

// ROUGE-N, normalized ROUGE-N and smoothed sentence-level BLEU-4 over
// TokenSequences, plus corpus averaging and report formatting.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "figcap/errors.hpp"
#include "figcap/parallel.hpp"
#include "figcap/text_core.hpp"

namespace figcap {

struct PairScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Transform applied to ROUGE-N F1 to obtain the "-n" columns.
//   identity:     F1
//   length-ratio: F1 / (max(|candidate|, 1) / |reference|)
struct Normalizer {
  enum class Kind { identity, length_ratio };
  Kind kind = Kind::length_ratio;

  static Normalizer identity() { return {Kind::identity}; }
  static Normalizer length_ratio() { return {Kind::length_ratio}; }

  static Normalizer parse(std::string_view name) {
    if (name == "identity") return identity();
    if (name == "length-ratio") return length_ratio();
    throw InvalidArgument("unknown normalizer '" + std::string(name) +
                          "' (expected identity or length-ratio)");
  }

  std::string name() const { return kind == Kind::identity ? "identity" : "length-ratio"; }

  friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

struct MetricReport {
  double bleu4 = 0.0;
  double rouge1_f1 = 0.0;
  double rouge2_f1 = 0.0;
  double rouge1_norm = 0.0;
  double rouge2_norm = 0.0;
};

inline double f1_score(double precision, double recall) noexcept {
  const double sum = precision + recall;
  return sum == 0.0 ? 0.0 : 2.0 * precision * recall / sum;
}

// Sum over candidate n-grams of min(candidate count, reference count).
inline std::size_t clipped_overlap(const NgramMultiset& candidate, const NgramMultiset& reference) {
  std::size_t overlap = 0;
  for (const auto& [gram, count] : candidate.counts) {
    if (auto it = reference.counts.find(gram); it != reference.counts.end()) {
      overlap += std::min(count, it->second);
    }
  }
  return overlap;
}

inline PairScore rouge_n(const TokenSequence& candidate, const TokenSequence& reference,
                         std::size_t n) {
  if (n == 0) throw InvalidArgument("rouge_n: n must be >= 1");
  const auto cand = ngrams(candidate, n);
  const auto ref = ngrams(reference, n);
  const auto overlap = static_cast<double>(clipped_overlap(cand, ref));
  const auto cand_total = cand.total();
  const auto ref_total = ref.total();

  PairScore score;
  score.precision = cand_total == 0 ? 0.0 : overlap / static_cast<double>(cand_total);
  score.recall = ref_total == 0 ? 0.0 : overlap / static_cast<double>(ref_total);
  score.f1 = f1_score(score.precision, score.recall);
  return score;
}

inline double normalize_f1(double f1, std::size_t candidate_len, std::size_t reference_len,
                           const Normalizer& norm) {
  if (norm.kind == Normalizer::Kind::identity) return f1;
  if (reference_len == 0) {
    throw NormalizationError("length-ratio normalization undefined for an empty reference");
  }
  const double ratio = static_cast<double>(std::max<std::size_t>(candidate_len, 1)) /
                       static_cast<double>(reference_len);
  return f1 / ratio;
}

inline double rouge_n_normalized(const TokenSequence& candidate, const TokenSequence& reference,
                                 std::size_t n, const Normalizer& norm) {
  if (n == 0) throw InvalidArgument("rouge_n_normalized: n must be >= 1");
  if (norm.kind == Normalizer::Kind::length_ratio && reference.empty()) {
    throw NormalizationError("length-ratio normalization undefined for an empty reference");
  }
  return normalize_f1(rouge_n(candidate, reference, n).f1, candidate.size(), reference.size(),
                      norm);
}

// Sentence-level BLEU-4. Modified precisions p1..p4; for n >= 2 a zero match
// count is replaced by (0 + 1) / (total + 1). Brevity penalty
// exp(1 - |ref| / |cand|) when the candidate is shorter than the reference.
inline double bleu4(const TokenSequence& candidate, const TokenSequence& reference) {
  if (candidate.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto cand = ngrams(candidate, n);
    const auto ref = ngrams(reference, n);
    double matches = static_cast<double>(clipped_overlap(cand, ref));
    double total = static_cast<double>(cand.total());
    if (n >= 2 && matches == 0.0) {
      matches += 1.0;
      total += 1.0;
    }
    if (matches == 0.0) return 0.0;
    log_sum += std::log(matches / total);
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double brevity = c < r ? std::exp(1.0 - r / c) : 1.0;
  return brevity * std::exp(log_sum / 4.0);
}

inline MetricReport evaluate_pair(const TokenSequence& candidate, const TokenSequence& reference,
                                  const Normalizer& norm) {
  MetricReport report;
  report.bleu4 = bleu4(candidate, reference);
  const auto r1 = rouge_n(candidate, reference, 1);
  const auto r2 = rouge_n(candidate, reference, 2);
  report.rouge1_f1 = r1.f1;
  report.rouge2_f1 = r2.f1;
  report.rouge1_norm = normalize_f1(r1.f1, candidate.size(), reference.size(), norm);
  report.rouge2_norm = normalize_f1(r2.f1, candidate.size(), reference.size(), norm);
  return report;
}

using CandidateReferencePair = std::pair<TokenSequence, TokenSequence>;

// Arithmetic mean of per-pair reports. Pairs may be scored on several
// threads; the reduction is always left to right in input order.
inline MetricReport evaluate_corpus(const std::vector<CandidateReferencePair>& pairs,
                                    const Normalizer& norm, std::size_t jobs = 1) {
  if (pairs.empty()) throw InvalidArgument("evaluate_corpus: empty corpus");
  const auto per_pair = ordered_map(pairs.size(), jobs, [&](std::size_t i) {
    return evaluate_pair(pairs[i].first, pairs[i].second, norm);
  });
  MetricReport sum;
  for (const auto& r : per_pair) {
    sum.bleu4 += r.bleu4;
    sum.rouge1_f1 += r.rouge1_f1;
    sum.rouge2_f1 += r.rouge2_f1;
    sum.rouge1_norm += r.rouge1_norm;
    sum.rouge2_norm += r.rouge2_norm;
  }
  const auto count = static_cast<double>(pairs.size());
  return {sum.bleu4 / count, sum.rouge1_f1 / count, sum.rouge2_f1 / count,
          sum.rouge1_norm / count, sum.rouge2_norm / count};
}

inline void to_json(nlohmann::json& j, const MetricReport& r) {
  j = nlohmann::json{{"bleu4", r.bleu4},
                     {"rouge1_f1", r.rouge1_f1},
                     {"rouge2_f1", r.rouge2_f1},
                     {"rouge1_norm", r.rouge1_norm},
                     {"rouge2_norm", r.rouge2_norm}};
}

inline void from_json(const nlohmann::json& j, MetricReport& r) {
  j.at("bleu4").get_to(r.bleu4);
  j.at("rouge1_f1").get_to(r.rouge1_f1);
  j.at("rouge2_f1").get_to(r.rouge2_f1);
  j.at("rouge1_norm").get_to(r.rouge1_norm);
  j.at("rouge2_norm").get_to(r.rouge2_norm);
}

struct LabeledReport {
  std::string label;
  MetricReport report;
};

// Fixed-width text table, columns Method | Blue4 | R-1 | R-2 | R-1-n | R-2-n.
inline std::string format_table(const std::vector<LabeledReport>& rows, int precision = 3) {
  static constexpr const char* kHeaders[] = {"Method", "Blue4", "R-1", "R-2", "R-1-n", "R-2-n"};
  std::vector<std::vector<std::string>> cells;
  cells.push_back({std::begin(kHeaders), std::end(kHeaders)});
  for (const auto& row : rows) {
    std::vector<std::string> line{row.label};
    for (double v : {row.report.bleu4, row.report.rouge1_f1, row.report.rouge2_f1,
                     row.report.rouge1_norm, row.report.rouge2_norm}) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.*f", precision, v);
      line.emplace_back(buf);
    }
    cells.push_back(std::move(line));
  }

  std::vector<std::size_t> widths(6, 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      widths[c] = std::max(widths[c], utf8_length(line[c]));
    }
  }
  std::string out;
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      const std::size_t pad = widths[c] - utf8_length(line[c]);
      if (c == 0) {
        out += line[c];
        out.append(pad, ' ');
      } else {
        out += "  ";
        out.append(pad, ' ');
        out += line[c];
      }
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace figcap
