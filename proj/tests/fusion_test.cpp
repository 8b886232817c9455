#include <gtest/gtest.h>

#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "figcap/fusion.hpp"
#include "oracles.hpp"

using namespace figcap;

namespace {

FusionInput make_input(const std::vector<std::string>& captions) {
  FusionInput in{"fig", {}};
  for (std::size_t i = 0; i < captions.size(); ++i) {
    in.candidates.push_back({"m" + std::to_string(i), captions[i]});
  }
  return in;
}

FusionOptions opts(Normalizer norm, std::size_t n = 2) {
  FusionOptions o;
  o.n = n;
  o.norm = norm;
  return o;
}

}  // namespace

TEST(PairwiseMatrix, IdenticalCaptions) {
  const auto m = pairwise_matrix(std::vector<std::string>{"a b c", "a b c"}, 2, Normalizer::identity());
  EXPECT_EQ(m[0][0], 0.0);
  EXPECT_EQ(m[1][1], 0.0);
  EXPECT_EQ(m[0][1], 1.0);
  EXPECT_EQ(m[1][0], 1.0);
}

TEST(PairwiseMatrix, DisjointCaptions) {
  const auto m = pairwise_matrix(std::vector<std::string>{"a b c", "x y z"}, 2, Normalizer::identity());
  EXPECT_EQ(m[0][1], 0.0);
  EXPECT_EQ(m[1][0], 0.0);
}

TEST(PairwiseMatrix, EntriesMatchOracleAndDirection) {
  const std::vector<std::string> caps{"the loss curve drops fast", "the loss curve",
                                      "accuracy of the loss curve drops"};
  const auto m = pairwise_matrix(caps, 2, Normalizer::length_ratio());
  for (std::size_t i = 0; i < caps.size(); ++i) {
    for (std::size_t j = 0; j < caps.size(); ++j) {
      if (i == j) continue;
      // Row i is the reference, column j the candidate.
      EXPECT_NEAR(m[i][j],
                  oracle::rouge_norm(tokenize(caps[j]).tokens, tokenize(caps[i]).tokens, 2, true),
                  1e-12);
    }
  }
  EXPECT_NE(m[0][1], m[1][0]);
}

TEST(PairwiseMatrix, SymmetryOnlyUnderIdentity) {
  std::mt19937_64 rng(41);
  bool saw_asymmetry = false;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> caps;
    for (int k = 0; k < 4; ++k) caps.push_back(oracle::join(oracle::random_tokens(rng, 8, 4, 1)));
    const auto id = pairwise_matrix(caps, 2, Normalizer::identity());
    const auto lr = pairwise_matrix(caps, 2, Normalizer::length_ratio());
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_NEAR(id[i][j], id[j][i], 1e-12);
        if (std::abs(lr[i][j] - lr[j][i]) > 1e-9) saw_asymmetry = true;
      }
    }
  }
  EXPECT_TRUE(saw_asymmetry);
}

TEST(ConsensusSelect, SingleCandidate) {
  const auto r = consensus_select(make_input({"only one"}), opts(Normalizer::length_ratio()));
  EXPECT_EQ(r.chosen_index, 0u);
  EXPECT_EQ(r.chosen_text, "only one");
  EXPECT_EQ(r.scores, std::vector<double>{0.0});
}

TEST(ConsensusSelect, TieGoesToLowestIndex) {
  const auto r = consensus_select(make_input({"a b c", "a b c", "x y z"}), opts(Normalizer::identity()));
  ASSERT_EQ(r.scores.size(), 3u);
  EXPECT_NEAR(r.scores[0], 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.scores[1], 1.0 / 3.0, 1e-12);
  EXPECT_EQ(r.scores[2], 0.0);
  EXPECT_EQ(r.chosen_index, 0u);
}

TEST(ConsensusSelect, RejectsEmptyAndDuplicateModels) {
  EXPECT_THROW(consensus_select(FusionInput{"x", {}}), InvalidArgument);
  FusionInput dup{"x", {{"m", "a"}, {"m", "b"}}};
  EXPECT_THROW(consensus_select(dup), InvalidArgument);
}

TEST(ConsensusSelect, MatchesOracleOnRandomSets) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::string> caps;
    std::vector<oracle::Tokens> toks;
    for (int k = 0; k < 5; ++k) {
      toks.push_back(oracle::random_tokens(rng, 8, 4, 1));
      caps.push_back(oracle::join(toks.back()));
    }
    for (bool lr : {false, true}) {
      const auto r = consensus_select(make_input(caps),
                                      opts(lr ? Normalizer::length_ratio() : Normalizer::identity()));
      const auto want = oracle::consensus(toks, 2, lr);
      EXPECT_EQ(r.chosen_text, caps[want.index]);
      for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(r.scores[i], want.scores[i], 1e-12);
    }
  }
}

TEST(ConsensusSelect, DominantCandidateWins) {
  // Candidate 2 equals every other candidate's text; it ties for the top.
  const auto r = consensus_select(make_input({"a b c d", "a b c d", "a b c d"}),
                                  opts(Normalizer::length_ratio()));
  EXPECT_EQ(r.scores[2], r.scores[r.chosen_index]);
}

TEST(ConsensusSelect, PermutationKeepsUniqueWinnerText) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> caps;
    for (int k = 0; k < 5; ++k) caps.push_back(oracle::join(oracle::random_tokens(rng, 7, 4, 1)));
    const auto base = consensus_select(make_input(caps), opts(Normalizer::length_ratio()));
    const double top = base.scores[base.chosen_index];
    const auto ties = std::count_if(base.scores.begin(), base.scores.end(),
                                    [&](double s) { return s == top; });
    if (ties != 1) continue;
    auto shuffled = caps;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto again = consensus_select(make_input(shuffled), opts(Normalizer::length_ratio()));
    EXPECT_EQ(again.chosen_text, base.chosen_text);
    EXPECT_EQ(shuffled[again.chosen_index], base.chosen_text);
  }
}

namespace {

std::vector<CaptionRow> rows_from(const std::string& text) {
  std::istringstream in(text);
  return read_caption_stream(in);
}

}  // namespace

TEST(ReadCaptionStream, RejectsDuplicatesAndBadLines) {
  EXPECT_THROW(rows_from("{\"id\":\"a\",\"caption\":\"x\"}\n{\"id\":\"a\",\"caption\":\"y\"}\n"),
               CorpusError);
  try {
    rows_from("{\"id\":\"a\",\"caption\":\"x\"}\n{\"id\":\"b\"\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_EQ(rows_from("{\"id\":\"a\",\"chosen_text\":\"x\"}\n").front().caption, "x");
}

TEST(FuseCorpus, IdenticalStreams) {
  const std::string file = "{\"id\":\"1\",\"caption\":\"a plot of loss\"}\n"
                           "{\"id\":\"2\",\"caption\":\"accuracy per epoch\"}\n";
  std::vector<NamedCaptionStream> streams;
  for (int k = 0; k < 4; ++k) streams.push_back({"m" + std::to_string(k), rows_from(file)});
  const auto fused = fuse_corpus(streams, opts(Normalizer::identity()));
  ASSERT_EQ(fused.size(), 2u);
  EXPECT_EQ(fused[0].id, "1");
  EXPECT_EQ(fused[0].result.chosen_text, "a plot of loss");
  EXPECT_EQ(fused[1].result.chosen_text, "accuracy per epoch");
  for (const auto& row : fused) {
    for (double s : row.result.scores) EXPECT_NEAR(s, 3.0 / 4.0, 1e-12);
  }
}

TEST(FuseCorpus, MissingIdIsAlignmentError) {
  std::vector<NamedCaptionStream> streams{
      {"a", rows_from("{\"id\":\"1\",\"caption\":\"x\"}\n{\"id\":\"2\",\"caption\":\"y\"}\n")},
      {"b", rows_from("{\"id\":\"1\",\"caption\":\"x\"}\n")}};
  try {
    fuse_corpus(streams);
    FAIL();
  } catch (const AlignmentError& e) {
    EXPECT_EQ(e.id(), "2");
  }
  std::swap(streams[0], streams[1]);
  EXPECT_THROW(fuse_corpus(streams), AlignmentError);
}

TEST(FuseCorpus, SyntheticStreamsMatchOracle) {
  std::mt19937_64 rng(5);
  std::vector<std::vector<oracle::Tokens>> per_id(5);
  std::vector<NamedCaptionStream> streams(3);
  for (std::size_t s = 0; s < 3; ++s) streams[s].model = "model" + std::to_string(s);
  for (std::size_t id = 0; id < 5; ++id) {
    for (std::size_t s = 0; s < 3; ++s) {
      per_id[id].push_back(oracle::random_tokens(rng, 8, 4, 1));
    }
  }
  // Streams list ids in different orders; output follows the first stream.
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t k = 0; k < 5; ++k) {
      const std::size_t id = s == 0 ? k : 4 - k;
      streams[s].rows.push_back({"id" + std::to_string(id), oracle::join(per_id[id][s])});
    }
  }
  const auto fused = fuse_corpus(streams, opts(Normalizer::length_ratio()), 3);
  ASSERT_EQ(fused.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(fused[k].id, "id" + std::to_string(k));
    const auto want = oracle::consensus(per_id[k], 2, true);
    EXPECT_EQ(fused[k].result.chosen_index, want.index);
    EXPECT_EQ(fused[k].result.chosen_text, oracle::join(per_id[k][want.index]));
  }
}

TEST(FuseCorpus, RowJsonShape) {
  FusedRow row{"7", {}};
  row.result.chosen_index = 1;
  row.result.chosen_text = "t";
  row.result.scores = {0.1, 0.2};
  const auto j = fused_row_json(row);
  EXPECT_EQ(j.at("id"), "7");
  EXPECT_EQ(j.at("chosen_index"), 1);
  EXPECT_EQ(j.at("chosen_text"), "t");
  EXPECT_EQ(j.at("scores").size(), 2u);
  EXPECT_FALSE(j.contains("score_matrix"));
}
