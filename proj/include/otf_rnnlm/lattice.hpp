#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <charconv>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "otf_rnnlm/error.hpp"
#include "otf_rnnlm/ngram.hpp"
#include "otf_rnnlm/vocab.hpp"

namespace otf {

using NodeId = std::uint32_t;

struct LatticeArc {
  NodeId from = 0;
  NodeId to = 0;
  WordId word = 0;
  double acoustic = 0;  ///< log score
  double smalllm = 0;   ///< small-LM log score
};

/// Acyclic word graph with frame-stamped nodes. Every arc goes strictly
/// forward in time, so processing nodes by (time, id) is a topological order.
class Lattice {
 public:
  Lattice() = default;

  /// Validates and indexes the graph. Without `times`, each node's time is
  /// its longest arc distance from any source.
  Lattice(std::size_t node_count, NodeId start, std::vector<NodeId> finals, std::vector<LatticeArc> arcs,
          std::vector<std::int64_t> times = {})
      : node_count_(node_count), start_(start), finals_(std::move(finals)), arcs_(std::move(arcs)),
        times_(std::move(times)) {
    if (node_count_ == 0) throw FormatError(0, "lattice has no nodes");
    if (start_ >= node_count_) throw FormatError(0, "start node out of range");
    if (finals_.empty()) throw FormatError(0, "lattice has no final node");
    is_final_.assign(node_count_, false);
    for (NodeId f : finals_) {
      if (f >= node_count_) throw FormatError(0, "final node out of range");
      is_final_[f] = true;
    }
    out_.assign(node_count_, {});
    std::vector<std::size_t> indegree(node_count_, 0);
    for (std::size_t a = 0; a < arcs_.size(); ++a) {
      const auto& arc = arcs_[a];
      if (arc.from >= node_count_ || arc.to >= node_count_) throw FormatError(0, "arc node out of range");
      out_[arc.from].push_back(a);
      ++indegree[arc.to];
    }
    // Kahn's algorithm, doubling as the cycle check
    std::vector<NodeId> topo;
    topo.reserve(node_count_);
    for (NodeId n = 0; n < node_count_; ++n)
      if (indegree[n] == 0) topo.push_back(n);
    for (std::size_t i = 0; i < topo.size(); ++i)
      for (std::size_t a : out_[topo[i]])
        if (--indegree[arcs_[a].to] == 0) topo.push_back(arcs_[a].to);
    if (topo.size() != node_count_) throw FormatError(0, "lattice contains a cycle");

    if (times_.empty()) {
      times_.assign(node_count_, 0);
      for (NodeId n : topo)
        for (std::size_t a : out_[n]) times_[arcs_[a].to] = std::max(times_[arcs_[a].to], times_[n] + 1);
    } else {
      if (times_.size() != node_count_) throw FormatError(0, "node time count mismatch");
      for (const auto& arc : arcs_)
        if (times_[arc.to] <= times_[arc.from]) throw FormatError(0, "arc does not advance in time");
    }
    order_.resize(node_count_);
    std::iota(order_.begin(), order_.end(), NodeId{0});
    std::sort(order_.begin(), order_.end(),
              [&](NodeId a, NodeId b) { return std::tie(times_[a], a) < std::tie(times_[b], b); });
  }

  std::size_t node_count() const noexcept { return node_count_; }
  NodeId start() const noexcept { return start_; }
  const std::vector<NodeId>& finals() const noexcept { return finals_; }
  bool is_final(NodeId n) const { return is_final_.at(n); }
  const std::vector<LatticeArc>& arcs() const noexcept { return arcs_; }
  const LatticeArc& arc(std::size_t i) const { return arcs_.at(i); }
  std::span<const std::size_t> out_arcs(NodeId n) const { return out_.at(n); }
  std::int64_t time(NodeId n) const { return times_.at(n); }
  const std::vector<std::int64_t>& times() const noexcept { return times_; }
  /// Nodes sorted by (time, id).
  const std::vector<NodeId>& order() const noexcept { return order_; }

  /// Number of start-to-final paths, saturating at uint64 max.
  std::uint64_t path_count() const {
    std::vector<std::uint64_t> ways(node_count_, 0);
    ways[start_] = 1;
    std::uint64_t total = 0;
    constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
    for (NodeId n : order_) {
      if (is_final_[n]) total = total > kMax - ways[n] ? kMax : total + ways[n];
      for (std::size_t a : out_[n]) {
        auto& w = ways[arcs_[a].to];
        w = w > kMax - ways[n] ? kMax : w + ways[n];
      }
    }
    return total;
  }

  /// Longest start-to-final path in arcs.
  std::size_t depth() const {
    std::vector<std::int64_t> d(node_count_, -1);
    d[start_] = 0;
    std::int64_t best = 0;
    for (NodeId n : order_) {
      if (d[n] < 0) continue;
      if (is_final_[n]) best = std::max(best, d[n]);
      for (std::size_t a : out_[n]) d[arcs_[a].to] = std::max(d[arcs_[a].to], d[n] + 1);
    }
    return static_cast<std::size_t>(best);
  }

 private:
  std::size_t node_count_ = 0;
  NodeId start_ = 0;
  std::vector<NodeId> finals_;
  std::vector<LatticeArc> arcs_;
  std::vector<std::int64_t> times_;
  std::vector<bool> is_final_;
  std::vector<std::vector<std::size_t>> out_;
  std::vector<NodeId> order_;
};

/// Text form: "start <id>", then one "from to word acoustic smalllm" line
/// per arc, then "final <id> [<id>...]". Blank lines and '#' comments are
/// ignored. Words are surface forms of `vocab`.
inline void write_lattice(std::ostream& out, const Lattice& lat, const Vocabulary& vocab) {
  out << "start " << lat.start() << '\n';
  for (const auto& a : lat.arcs())
    out << a.from << ' ' << a.to << ' ' << vocab.word(a.word) << ' ' << detail::format_double(a.acoustic) << ' '
        << detail::format_double(a.smalllm) << '\n';
  out << "final";
  for (NodeId f : lat.finals()) out << ' ' << f;
  out << '\n';
  if (!out) throw IoError("error while writing lattice");
}

inline Lattice read_lattice(std::istream& in, const Vocabulary& vocab) {
  std::string line;
  std::size_t lineno = 0;
  std::optional<NodeId> start;
  std::vector<NodeId> finals;
  std::vector<LatticeArc> arcs;
  std::size_t nodes = 0;
  auto parse_node = [&](const std::string& tok) -> NodeId {
    std::uint64_t v = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || v >= std::numeric_limits<NodeId>::max())
      throw FormatError(lineno, "bad node id '" + tok + "'");
    nodes = std::max<std::size_t>(nodes, v + 1);
    return static_cast<NodeId>(v);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> f;
    for (std::string t; ls >> t;) f.push_back(t);
    if (f.empty()) continue;
    if (f[0] == "start") {
      if (f.size() != 2) throw FormatError(lineno, "expected 'start <id>'");
      if (start) throw FormatError(lineno, "duplicate start line");
      start = parse_node(f[1]);
    } else if (f[0] == "final") {
      if (f.size() < 2) throw FormatError(lineno, "expected 'final <id> [<id>...]'");
      for (std::size_t i = 1; i < f.size(); ++i) finals.push_back(parse_node(f[i]));
    } else {
      if (f.size() != 5) throw FormatError(lineno, "expected 'from to word acoustic smalllm'");
      LatticeArc a;
      a.from = parse_node(f[0]);
      a.to = parse_node(f[1]);
      if (!vocab.contains(f[2])) throw FormatError(lineno, "word '" + f[2] + "' not in vocabulary");
      a.word = vocab.lookup(f[2]);
      a.acoustic = detail::parse_double(f[3], lineno);
      a.smalllm = detail::parse_double(f[4], lineno);
      arcs.push_back(a);
    }
  }
  if (in.bad()) throw IoError("error while reading lattice");
  if (!start) throw FormatError(lineno, "missing start line");
  if (finals.empty()) throw FormatError(lineno, "missing final line");
  return Lattice(nodes, *start, std::move(finals), std::move(arcs));
}

struct LatticeGenOptions {
  std::size_t confusion_breadth = 3;  ///< word alternatives per position, reference included
  std::size_t time_variants = 1;      ///< segmentations per word hypothesis
  double acoustic_mean = 1.0;         ///< mean penalty of a non-reference hypothesis
  double acoustic_sigma = 0.5;
  std::uint64_t seed = 1;
};

/// Synthetic recognition lattice around `reference`.
///
/// Each position offers the reference word plus breadth-1 distinct
/// confusable regular words, each in `time_variants` segmentations. A node is
/// (position, word, small-LM history, segmentation), so every arc's small-LM
/// score is exact for the path through it. The acoustic score of a
/// hypothesis is 0 for the reference word in its first segmentation and
/// -|N(mean, sigma)| otherwise. All last-position nodes reach one final node
/// through a `</s>` arc. Deterministic per seed.
inline Lattice generate_lattice(std::span<const WordId> reference, const Vocabulary& vocab,
                                const NgramModel& small_lm, const LatticeGenOptions& opt) {
  if (reference.empty()) throw EmptyInputError("empty reference");
  if (opt.confusion_breadth < 1) throw RangeError("confusion_breadth must be >= 1");
  if (opt.time_variants < 1) throw RangeError("time_variants must be >= 1");
  std::mt19937_64 rng(opt.seed);
  auto uniform01 = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  auto normal = [&] {
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  };

  const WordId first_regular = 3;
  const std::size_t regular = vocab.size() > first_regular ? vocab.size() - first_regular : 0;
  const std::size_t ctx_len = static_cast<std::size_t>(std::max(small_lm.order() - 1, 0));
  const std::size_t J = opt.time_variants;

  struct State {
    std::vector<WordId> hist;
    NodeId node;
  };
  auto trim = [&](std::vector<WordId> h) {
    if (h.size() > ctx_len) h.erase(h.begin(), h.end() - static_cast<std::ptrdiff_t>(ctx_len));
    return h;
  };

  std::vector<LatticeArc> arcs;
  std::vector<std::int64_t> times{0};
  std::vector<State> layer{{trim({vocab.sentence_begin_id()}), 0}};
  for (std::size_t pos = 0; pos < reference.size(); ++pos) {
    std::vector<WordId> alts{reference[pos]};
    const std::size_t want = std::min(opt.confusion_breadth - 1, regular - (reference[pos] >= first_regular ? 1 : 0));
    while (alts.size() < want + 1) {
      const WordId w = static_cast<WordId>(first_regular + rng() % regular);
      if (std::find(alts.begin(), alts.end(), w) == alts.end()) alts.push_back(w);
    }
    std::vector<std::vector<double>> acoustic(alts.size(), std::vector<double>(J));
    for (std::size_t a = 0; a < alts.size(); ++a)
      for (std::size_t j = 0; j < J; ++j)
        acoustic[a][j] = (a == 0 && j == 0) ? 0.0 : -std::abs(opt.acoustic_mean + opt.acoustic_sigma * normal());

    std::map<std::tuple<std::size_t, std::vector<WordId>, std::size_t>, NodeId> made;
    std::vector<State> next;
    for (const State& s : layer) {
      for (std::size_t a = 0; a < alts.size(); ++a) {
        std::vector<WordId> h = s.hist;
        h.push_back(alts[a]);
        h = trim(std::move(h));
        const double lm = small_lm.logprob(s.hist, alts[a]);
        for (std::size_t j = 0; j < J; ++j) {
          auto [it, fresh] = made.try_emplace({a, h, j}, static_cast<NodeId>(times.size()));
          if (fresh) {
            times.push_back(static_cast<std::int64_t>((pos + 1) * J + j));
            next.push_back({h, it->second});
          }
          arcs.push_back({s.node, it->second, alts[a], acoustic[a][j], lm});
        }
      }
    }
    layer = std::move(next);
  }
  const NodeId final_node = static_cast<NodeId>(times.size());
  times.push_back(static_cast<std::int64_t>((reference.size() + 1) * J));
  for (const State& s : layer)
    arcs.push_back({s.node, final_node, vocab.sentence_end_id(), 0.0,
                    small_lm.logprob(s.hist, vocab.sentence_end_id())});
  const std::size_t node_count = times.size();
  return Lattice(node_count, 0, {final_node}, std::move(arcs), std::move(times));
}

}  // namespace otf
