#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "lattice_oracle.hpp"
#include "model_fixture.hpp"
#include "otf_rnnlm/lattice.hpp"

using namespace otf;

namespace {

const ModelFixture& world() {
  static const ModelFixture f(8, 0);
  return f;
}

Sentence reference(std::size_t len, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Sentence s;
  for (std::size_t i = 0; i < len; ++i) s.push_back(static_cast<WordId>(3 + rng() % (world().vocab.size() - 3)));
  return s;
}

}  // namespace

TEST(GenerateLattice, BreadthOneIsTheReference) {
  const auto ref = reference(6, 1);
  LatticeGenOptions opt;
  opt.confusion_breadth = 1;
  const auto lat = generate_lattice(ref, world().vocab, world().small_lm, opt);
  EXPECT_EQ(lat.path_count(), 1u);
  const auto paths = enumerate_paths(lat);
  ASSERT_EQ(paths.size(), 1u);
  auto expect = ref;
  expect.push_back(world().vocab.sentence_end_id());
  EXPECT_EQ(path_words(lat, paths[0]), expect);
}

TEST(GenerateLattice, PathCountBoundedByBreadthPower) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto ref = reference(5, seed);
    LatticeGenOptions opt;
    opt.confusion_breadth = 3;
    opt.seed = seed;
    const auto lat = generate_lattice(ref, world().vocab, world().small_lm, opt);
    const auto paths = enumerate_paths(lat);
    EXPECT_EQ(paths.size(), lat.path_count());
    EXPECT_LE(paths.size(), 243u);
    auto expect = ref;
    expect.push_back(world().vocab.sentence_end_id());
    bool found = false;
    for (const auto& p : paths) found = found || path_words(lat, p) == expect;
    EXPECT_TRUE(found) << "reference path missing";
  }
}

TEST(GenerateLattice, TimeVariantsMultiplyPaths) {
  const auto ref = reference(3, 2);
  LatticeGenOptions opt;
  opt.confusion_breadth = 2;
  opt.time_variants = 3;
  const auto lat = generate_lattice(ref, world().vocab, world().small_lm, opt);
  EXPECT_EQ(lat.path_count(), 6u * 6u * 6u);
  EXPECT_EQ(lat.depth(), 4u);
}

TEST(GenerateLattice, SmallLmScoresMatchPathContext) {
  const auto ref = reference(5, 3);
  LatticeGenOptions opt;
  opt.confusion_breadth = 3;
  opt.time_variants = 2;
  const auto lat = generate_lattice(ref, world().vocab, world().small_lm, opt);
  for (const auto& p : enumerate_paths(lat)) {
    std::vector<WordId> hist{world().vocab.sentence_begin_id()};
    for (auto a : p) {
      ASSERT_EQ(lat.arc(a).smalllm, world().small_lm.logprob(hist, lat.arc(a).word));
      hist.push_back(lat.arc(a).word);
    }
  }
}

TEST(GenerateLattice, DeterministicPerSeed) {
  const auto ref = reference(7, 4);
  LatticeGenOptions opt;
  opt.time_variants = 2;
  opt.seed = 99;
  std::ostringstream a, b;
  write_lattice(a, generate_lattice(ref, world().vocab, world().small_lm, opt), world().vocab);
  write_lattice(b, generate_lattice(ref, world().vocab, world().small_lm, opt), world().vocab);
  EXPECT_EQ(a.str(), b.str());
  opt.seed = 100;
  std::ostringstream c;
  write_lattice(c, generate_lattice(ref, world().vocab, world().small_lm, opt), world().vocab);
  EXPECT_NE(a.str(), c.str());
}

TEST(GenerateLattice, RejectsEmptyReference) {
  EXPECT_THROW(generate_lattice(Sentence{}, world().vocab, world().small_lm, {}), EmptyInputError);
}

TEST(Lattice, RejectsCycles) {
  std::vector<LatticeArc> arcs{{0, 1, 3, 0, 0}, {1, 2, 3, 0, 0}, {2, 1, 3, 0, 0}};
  EXPECT_THROW(Lattice(3, 0, {2}, arcs), FormatError);
}

TEST(Lattice, TextRoundTrip) {
  const auto ref = reference(4, 5);
  LatticeGenOptions opt;
  opt.time_variants = 2;
  const auto lat = generate_lattice(ref, world().vocab, world().small_lm, opt);
  std::stringstream buf;
  write_lattice(buf, lat, world().vocab);
  const auto back = read_lattice(buf, world().vocab);
  ASSERT_EQ(back.arcs().size(), lat.arcs().size());
  for (std::size_t i = 0; i < lat.arcs().size(); ++i) {
    EXPECT_EQ(back.arc(i).from, lat.arc(i).from);
    EXPECT_EQ(back.arc(i).to, lat.arc(i).to);
    EXPECT_EQ(back.arc(i).word, lat.arc(i).word);
    EXPECT_EQ(back.arc(i).acoustic, lat.arc(i).acoustic);
    EXPECT_EQ(back.arc(i).smalllm, lat.arc(i).smalllm);
  }
  EXPECT_EQ(back.finals(), lat.finals());
  EXPECT_EQ(back.path_count(), lat.path_count());
}

TEST(Lattice, ReaderNamesLineNumber) {
  const std::string w = world().vocab.word(3);
  std::istringstream in("# comment\nstart 0\n0 1 " + w + " -1 -2\n1 2 " + w + " oops -2\nfinal 2\n");
  try {
    read_lattice(in, world().vocab);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
  std::istringstream unknown("start 0\n0 1 nosuchword -1 -2\nfinal 1\n");
  EXPECT_THROW(read_lattice(unknown, world().vocab), FormatError);
  std::istringstream no_final("start 0\n0 1 " + w + " -1 -2\n");
  EXPECT_THROW(read_lattice(no_final, world().vocab), FormatError);
}

TEST(Lattice, RandomDagPathCountMatchesEnumeration) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 30; ++i) {
    const auto lat = random_dag(rng, 1 + rng() % 8, 3, world().vocab.size());
    EXPECT_EQ(enumerate_paths(lat).size(), lat.path_count());
  }
}
