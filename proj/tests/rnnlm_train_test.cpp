#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "otf_rnnlm/rnnlm_train.hpp"

using namespace otf;

namespace {

const char* kToy =
    "the cat sat on the mat\n"
    "the dog sat on the log\n"
    "a cat saw the dog\n"
    "the dog saw a cat\n"
    "a dog sat on a mat\n"
    "the cat ate\n"
    "a dog ate the cat food\n"
    "the mat is red\n"
    "a log is brown\n"
    "the cat is on the log\n";

struct Setup {
  Vocabulary vocab;
  Corpus corpus;
  HuffmanTree tree;
};

Setup setup() {
  std::istringstream a(kToy), b(kToy);
  Setup s{build_vocabulary(a, 1), {}, {}};
  s.corpus = s.vocab.tokenize_corpus(b);
  s.tree = build_huffman(s.vocab);
  return s;
}

double sentence_loss(const BasicRnnlmModel<double>& m, const HuffmanTree& tree, const std::vector<WordId>& words) {
  return -sequence_logprob(m, tree, std::span<const WordId>(words));
}

}  // namespace

TEST(RnnlmTrain, GradientMatchesCentralDifferences) {
  auto s = setup();
  RnnlmShape shape;
  shape.hidden_size = 8;
  shape.vocab_size = s.vocab.size();
  shape.maxent_table_bits = 10;
  auto m = BasicRnnlmModel<double>::random(shape, 21, 0.5);
  std::mt19937_64 rng(22);
  for (auto& x : m.maxent) x = static_cast<double>(rng() % 2001) / 2000.0 - 0.5;
  std::vector<WordId> words = s.corpus[3];
  words.push_back(s.vocab.sentence_end_id());
  const auto g = sentence_gradient(m, s.tree, words, words.size());
  EXPECT_NEAR(g.loss, sentence_loss(m, s.tree, words), 1e-12);

  struct Probe {
    double* weight;
    double analytic;
  };
  std::vector<Probe> probes;
  for (auto& [w, row] : g.input)
    for (std::size_t i = 0; i < 8 && probes.size() < 5; i += 3) probes.push_back({&m.input_weights[w * 8 + i], row[i]});
  for (std::size_t i = 0; i < 64 && probes.size() < 10; i += 13) probes.push_back({&m.recurrent_weights[i], g.recurrent[i]});
  for (auto& [node, row] : g.nodes)
    for (std::size_t i = 0; i < 8 && probes.size() < 15; i += 5) probes.push_back({&m.node_vectors[node * 8 + i], row[i]});
  for (auto& [slot, d] : g.maxent)
    if (probes.size() < 20) probes.push_back({&m.maxent[slot], d});
  ASSERT_EQ(probes.size(), 20u);

  const double eps = 1e-4;
  for (const auto& p : probes) {
    const double keep = *p.weight;
    *p.weight = keep + eps;
    const double up = sentence_loss(m, s.tree, words);
    *p.weight = keep - eps;
    const double down = sentence_loss(m, s.tree, words);
    *p.weight = keep;
    const double numeric = (up - down) / (2 * eps);
    const double rel = std::abs(numeric - p.analytic) / std::max({std::abs(numeric), std::abs(p.analytic), 1e-8});
    EXPECT_LT(rel, 1e-4) << "analytic " << p.analytic << " numeric " << numeric;
  }
}

TEST(RnnlmTrain, TruncationChangesOnlyTheRecurrentPath) {
  auto s = setup();
  RnnlmShape shape;
  shape.hidden_size = 4;
  shape.vocab_size = s.vocab.size();
  shape.maxent_table_bits = 8;
  const auto m = BasicRnnlmModel<double>::random(shape, 3, 0.5);
  std::vector<WordId> words = s.corpus[0];
  words.push_back(s.vocab.sentence_end_id());
  const auto one = sentence_gradient(m, s.tree, words, 1);
  const auto full = sentence_gradient(m, s.tree, words, words.size());
  EXPECT_EQ(one.loss, full.loss);
  EXPECT_EQ(one.nodes, full.nodes);
  EXPECT_EQ(one.maxent, full.maxent);
  EXPECT_NE(one.recurrent, full.recurrent);
}

TEST(RnnlmTrain, ZeroLearnRateLeavesWeightsBitExact) {
  auto s = setup();
  RnnlmShape shape;
  shape.hidden_size = 6;
  shape.vocab_size = s.vocab.size();
  shape.maxent_table_bits = 8;
  auto m = RnnlmModel::random(shape, 5);
  const auto before = m;
  train(m, s.tree, s.corpus, nullptr, s.vocab.sentence_end_id(), {2, 0.0, 1});
  EXPECT_EQ(m, before);
}

TEST(RnnlmTrain, PerplexityFallsOverEarlyEpochs) {
  auto s = setup();
  RnnlmShape shape;
  shape.hidden_size = 16;
  shape.vocab_size = s.vocab.size();
  shape.maxent_table_bits = 12;
  auto m = RnnlmModel::random(shape, 7);
  const double untrained = rnnlm_perplexity(m, s.tree, s.corpus, s.vocab.sentence_end_id());
  const Corpus valid{s.corpus[0], s.corpus[4]};
  const auto log = train(m, s.tree, s.corpus, &valid, s.vocab.sentence_end_id(), {10, 0.1, 2});
  ASSERT_EQ(log.size(), 10u);
  EXPECT_LT(log[0].train_perplexity, untrained);
  for (int e = 1; e < 3; ++e) EXPECT_LT(log[e].train_perplexity, log[e - 1].train_perplexity);
  EXPECT_LT(log.back().train_perplexity, untrained);
  EXPECT_TRUE(std::isfinite(log.back().valid_perplexity));
  EXPECT_EQ(log[4].epoch, 5);
}

TEST(RnnlmTrain, SameSeedSameModel) {
  auto s = setup();
  RnnlmShape shape;
  shape.hidden_size = 8;
  shape.vocab_size = s.vocab.size();
  shape.maxent_table_bits = 8;
  auto a = RnnlmModel::random(shape, 9), b = RnnlmModel::random(shape, 9);
  train(a, s.tree, s.corpus, nullptr, s.vocab.sentence_end_id(), {3, 0.1, 3});
  train(b, s.tree, s.corpus, nullptr, s.vocab.sentence_end_id(), {3, 0.1, 3});
  EXPECT_EQ(a, b);
}

TEST(RnnlmTrain, DivergenceNamesEpoch) {
  auto s = setup();
  RnnlmShape shape;
  shape.hidden_size = 8;
  shape.vocab_size = s.vocab.size();
  shape.maxent_table_bits = 8;
  auto m = RnnlmModel::random(shape, 9);
  try {
    train(m, s.tree, s.corpus, nullptr, s.vocab.sentence_end_id(), {3, 1e38, 1});
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.epoch(), 1);
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos);
  }
}

TEST(RnnlmTrain, RejectsBadOptions) {
  auto s = setup();
  RnnlmShape shape;
  shape.hidden_size = 4;
  shape.vocab_size = s.vocab.size();
  shape.maxent_table_bits = 4;
  auto m = RnnlmModel::random(shape, 1);
  EXPECT_THROW(train(m, s.tree, {}, nullptr, 0, {}), EmptyInputError);
  EXPECT_THROW(train(m, s.tree, s.corpus, nullptr, 0, {1, -1.0, 1}), RangeError);
  EXPECT_THROW(train(m, s.tree, s.corpus, nullptr, 0, {1, 0.1, 0}), RangeError);
}
