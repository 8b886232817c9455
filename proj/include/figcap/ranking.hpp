#pragma once

// Candidate scoring and ranking losses over externally supplied per-token
// log-probabilities:
//
//   f(S)  = sum_t log p(s_t) / |S|^alpha
//   L_ctr = sum_{i<j} max(0, f(S_j) - f(S_i) + (j - i) * lambda)
//   L_mul = L_xent + gamma * L_ctr
//
// with candidates i < j ordered best-first by normalized ROUGE against the
// reference.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "figcap/errors.hpp"
#include "figcap/metrics.hpp"
#include "figcap/text_core.hpp"

namespace figcap {

struct ScoredCandidate {
  std::string text;
  TokenSequence tokens;
  std::vector<double> token_logprobs;

  // Validates one log-probability per token, every entry <= 0.
  static ScoredCandidate make(std::string text, std::vector<double> logprobs,
                              const TokenizerConfig& config = {}) {
    ScoredCandidate c;
    c.tokens = tokenize(text, config);
    c.text = std::move(text);
    c.token_logprobs = std::move(logprobs);
    if (c.token_logprobs.size() != c.tokens.size()) {
      throw InvalidArgument("candidate has " + std::to_string(c.tokens.size()) + " tokens but " +
                            std::to_string(c.token_logprobs.size()) + " log-probabilities");
    }
    for (double lp : c.token_logprobs) {
      if (!(lp <= 0.0)) throw InvalidArgument("log-probability must be <= 0");
    }
    return c;
  }
};

struct CandidateSet {
  TokenSequence reference;
  std::vector<ScoredCandidate> candidates;
};

struct LossConfig {
  double alpha = 1.0;
  double lambda = 0.001;
  double gamma = 100.0;
  Normalizer norm = Normalizer::length_ratio();

  void validate() const {
    if (!(alpha >= 0.0) || !(lambda >= 0.0) || !(gamma >= 0.0)) {
      throw InvalidArgument("loss hyperparameters alpha, lambda, gamma must be >= 0");
    }
  }
};

struct LossBreakdown {
  double l_mul = 0.0;
  double l_xent = 0.0;
  double l_ctr = 0.0;
  std::vector<double> f_values;       // best-first
  std::vector<std::size_t> rank_order;  // original candidate index per rank
};

inline double length_norm_logprob(const std::vector<double>& token_logprobs, double alpha) {
  if (token_logprobs.empty()) throw InvalidArgument("length_norm_logprob: empty candidate");
  const double sum = std::accumulate(token_logprobs.begin(), token_logprobs.end(), 0.0);
  return sum / std::pow(static_cast<double>(token_logprobs.size()), alpha);
}

inline double length_norm_logprob(const ScoredCandidate& cand, double alpha) {
  return length_norm_logprob(cand.token_logprobs, alpha);
}

// Indices of set.candidates sorted by descending normalized ROUGE-n against
// the reference; ties keep input order.
inline std::vector<std::size_t> metric_rank_order(const CandidateSet& set, std::size_t n,
                                                  const Normalizer& norm) {
  if (set.candidates.empty()) throw InvalidArgument("order_by_metric: no candidates");
  std::vector<double> scores;
  scores.reserve(set.candidates.size());
  for (const auto& c : set.candidates) {
    scores.push_back(rouge_n_normalized(c.tokens, set.reference, n, norm));
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

inline CandidateSet order_by_metric(const CandidateSet& set, std::size_t n,
                                    const Normalizer& norm) {
  CandidateSet sorted;
  sorted.reference = set.reference;
  for (std::size_t idx : metric_rank_order(set, n, norm)) {
    sorted.candidates.push_back(set.candidates[idx]);
  }
  return sorted;
}

inline double contrastive_loss(const std::vector<double>& f_values, double lambda) {
  if (f_values.empty()) throw InvalidArgument("contrastive_loss: empty list");
  double loss = 0.0;
  for (std::size_t i = 0; i < f_values.size(); ++i) {
    for (std::size_t j = i + 1; j < f_values.size(); ++j) {
      const double margin = static_cast<double>(j - i) * lambda;
      loss += std::max(0.0, f_values[j] - f_values[i] + margin);
    }
  }
  return loss;
}

// Subgradient of contrastive_loss with respect to each f value. A hinge whose
// argument is exactly zero counts as inactive.
inline std::vector<double> contrastive_loss_gradient(const std::vector<double>& f_values,
                                                     double lambda) {
  if (f_values.empty()) throw InvalidArgument("contrastive_loss_gradient: empty list");
  std::vector<double> grad(f_values.size(), 0.0);
  for (std::size_t i = 0; i < f_values.size(); ++i) {
    for (std::size_t j = i + 1; j < f_values.size(); ++j) {
      const double margin = static_cast<double>(j - i) * lambda;
      if (f_values[j] - f_values[i] + margin > 0.0) {
        grad[j] += 1.0;
        grad[i] -= 1.0;
      }
    }
  }
  return grad;
}

// Token-mean negative log-likelihood of the reference.
inline double cross_entropy(const std::vector<double>& reference_logprobs) {
  if (reference_logprobs.empty()) throw InvalidArgument("cross_entropy: empty reference");
  const double sum = std::accumulate(reference_logprobs.begin(), reference_logprobs.end(), 0.0);
  return -sum / static_cast<double>(reference_logprobs.size());
}

// Orders candidates by normalized ROUGE-2, then evaluates all three terms.
inline LossBreakdown multitask_loss(const CandidateSet& set,
                                    const std::vector<double>& reference_logprobs,
                                    const LossConfig& config) {
  config.validate();
  LossBreakdown out;
  out.rank_order = metric_rank_order(set, 2, config.norm);
  out.f_values.reserve(out.rank_order.size());
  for (std::size_t idx : out.rank_order) {
    out.f_values.push_back(length_norm_logprob(set.candidates[idx], config.alpha));
  }
  out.l_xent = cross_entropy(reference_logprobs);
  out.l_ctr = contrastive_loss(out.f_values, config.lambda);
  out.l_mul = out.l_xent + config.gamma * out.l_ctr;
  return out;
}

// One line of a candidate-set JSON Lines file.
struct CandidateSetRecord {
  std::string id;
  CandidateSet set;
  std::vector<double> reference_logprobs;
};

inline CandidateSetRecord parse_candidate_set(const nlohmann::json& j,
                                              const TokenizerConfig& config = {}) {
  if (!j.is_object()) throw FormatError("candidate set must be a JSON object");
  auto require = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
    return j.at(key);
  };
  CandidateSetRecord rec;
  try {
    rec.id = require("id").get<std::string>();
    rec.set.reference = tokenize(require("reference").get<std::string>(), config);
    rec.reference_logprobs = require("reference_logprobs").get<std::vector<double>>();
    const auto& cands = require("candidates");
    if (!cands.is_array() || cands.empty()) {
      throw FormatError("'candidates' must be a nonempty array");
    }
    for (const auto& c : cands) {
      if (!c.is_object() || !c.contains("text") || !c.contains("logprobs")) {
        throw FormatError("candidate needs 'text' and 'logprobs'");
      }
      rec.set.candidates.push_back(ScoredCandidate::make(
          c.at("text").get<std::string>(), c.at("logprobs").get<std::vector<double>>(), config));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad field type: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
  if (rec.id.empty()) throw FormatError("empty id");
  if (rec.reference_logprobs.empty()) throw FormatError("'reference_logprobs' is empty");
  for (double lp : rec.reference_logprobs) {
    if (!(lp <= 0.0)) throw FormatError("reference log-probability must be <= 0");
  }
  return rec;
}

inline nlohmann::json loss_row_json(const std::string& id, const LossBreakdown& loss) {
  return nlohmann::json{{"id", id},
                        {"l_mul", loss.l_mul},
                        {"l_xent", loss.l_xent},
                        {"l_ctr", loss.l_ctr},
                        {"f_values", loss.f_values},
                        {"rank_order", loss.rank_order}};
}

}  // namespace figcap
