#pragma once

#include <sstream>

#include "otf_rnnlm/bench.hpp"
#include "otf_rnnlm/huffman.hpp"
#include "otf_rnnlm/ngram.hpp"
#include "otf_rnnlm/rnnlm.hpp"
#include "otf_rnnlm/rnnlm_train.hpp"
#include "otf_rnnlm/vocab.hpp"

// Command-style toy world: a generated corpus, its vocabulary, a bigram
// lattice LM, a trigram comparison LM and a briefly trained RNNLM.
struct ModelFixture {
  otf::Vocabulary vocab;
  otf::Corpus corpus;
  otf::HuffmanTree tree;
  otf::NgramModel small_lm;
  otf::NgramModel compare_lm;
  otf::RnnlmModel rnnlm;
  otf::CommandCorpusOptions commands;

  explicit ModelFixture(std::size_t hidden = 16, int epochs = 2, std::uint64_t seed = 1,
                        std::size_t sentences = 300) {
    commands.vocab_words = 60;
    commands.templates = 20;
    commands.seed = seed;
    otf::CommandGenerator gen(commands);
    std::string text;
    for (std::size_t i = 0; i < sentences; ++i) text += gen.sample_line() + "\n";
    std::istringstream a(text), b(text);
    vocab = otf::build_vocabulary(a, 1);
    corpus = vocab.tokenize_corpus(b);
    tree = otf::build_huffman(vocab);
    small_lm = otf::train_ngram(corpus, vocab, {2});
    compare_lm = otf::train_ngram(corpus, vocab, {3});
    otf::RnnlmShape shape;
    shape.hidden_size = hidden;
    shape.vocab_size = vocab.size();
    shape.maxent_table_bits = 14;
    rnnlm = otf::RnnlmModel::random(shape, seed);
    if (epochs > 0) otf::train(rnnlm, tree, corpus, nullptr, vocab.sentence_end_id(), {epochs, 0.1, 1});
  }
};
