#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "otf_rnnlm/error.hpp"

namespace otf {

using WordId = std::uint32_t;

/// A tokenized sentence without boundary markers; the end-of-sentence token
/// is implied by every consumer.
using Sentence = std::vector<WordId>;
using Corpus = std::vector<Sentence>;

inline constexpr std::string_view kSentenceEnd = "</s>";
inline constexpr std::string_view kSentenceBegin = "<s>";
inline constexpr std::string_view kUnknown = "<unk>";

/// Word list with dense ids and frequency counts.
///
/// Ids 0, 1 and 2 are always `</s>`, `<s>` and `<unk>`; regular words follow
/// in order of decreasing count, ties broken by byte order of the surface
/// form. Every stored word has a count of at least one.
class Vocabulary {
 public:
  Vocabulary() = default;

  /// Builds from (word, count) pairs in id order. The three special tokens
  /// must be present.
  static Vocabulary from_counts(
      const std::vector<std::pair<std::string, std::uint64_t>>& entries) {
    Vocabulary v;
    for (const auto& [word, count] : entries) {
      if (count == 0) throw FormatError(0, "zero count for word '" + word + "'");
      if (!v.ids_.emplace(word, static_cast<WordId>(v.words_.size())).second)
        throw FormatError(0, "duplicate word '" + word + "'");
      v.words_.push_back(word);
      v.counts_.push_back(count);
    }
    v.bind_specials();
    return v;
  }

  std::size_t size() const noexcept { return words_.size(); }
  WordId unk_id() const noexcept { return unk_id_; }
  WordId sentence_begin_id() const noexcept { return bos_id_; }
  WordId sentence_end_id() const noexcept { return eos_id_; }

  const std::string& word(WordId id) const {
    if (id >= words_.size())
      throw RangeError("word id " + std::to_string(id) + " out of range");
    return words_[id];
  }
  std::uint64_t count(WordId id) const {
    if (id >= counts_.size())
      throw RangeError("word id " + std::to_string(id) + " out of range");
    return counts_[id];
  }
  const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }
  const std::vector<std::string>& words() const noexcept { return words_; }

  /// Id of `word`, or unk_id() if it is not stored.
  WordId lookup(std::string_view word) const {
    auto it = ids_.find(std::string(word));
    return it == ids_.end() ? unk_id_ : it->second;
  }
  bool contains(std::string_view word) const {
    return ids_.count(std::string(word)) != 0;
  }

  /// Whitespace-tokenizes one line into ids, folding unknown words to unk.
  Sentence tokenize(std::string_view line) const {
    Sentence out;
    std::istringstream in{std::string(line)};
    std::string tok;
    while (in >> tok) out.push_back(lookup(tok));
    return out;
  }

  /// Tokenizes every non-blank line of `in`.
  Corpus tokenize_corpus(std::istream& in) const {
    Corpus corpus;
    std::string line;
    while (std::getline(in, line)) {
      Sentence s = tokenize(line);
      if (!s.empty()) corpus.push_back(std::move(s));
    }
    if (in.bad()) throw IoError("error while reading corpus stream");
    return corpus;
  }

  /// Text form: one "word<TAB>count" line per id.
  void write(std::ostream& out) const {
    for (std::size_t i = 0; i < words_.size(); ++i)
      out << words_[i] << '\t' << counts_[i] << '\n';
    if (!out) throw IoError("error while writing vocabulary");
  }

  static Vocabulary read(std::istream& in) {
    std::vector<std::pair<std::string, std::uint64_t>> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos || tab == 0)
        throw FormatError(lineno, "expected word<TAB>count");
      std::uint64_t count = 0;
      try {
        std::size_t used = 0;
        count = std::stoull(line.substr(tab + 1), &used);
        if (used != line.size() - tab - 1) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw FormatError(lineno, "bad count");
      }
      entries.emplace_back(line.substr(0, tab), count);
    }
    if (in.bad()) throw IoError("error while reading vocabulary");
    try {
      return from_counts(entries);
    } catch (const FormatError& e) {
      throw FormatError(0, std::string("vocabulary: ") + e.what());
    }
  }

 private:
  void bind_specials() {
    auto need = [&](std::string_view w) {
      auto it = ids_.find(std::string(w));
      if (it == ids_.end())
        throw FormatError(0, "missing special token " + std::string(w));
      return it->second;
    };
    eos_id_ = need(kSentenceEnd);
    bos_id_ = need(kSentenceBegin);
    unk_id_ = need(kUnknown);
  }

  std::vector<std::string> words_;
  std::unordered_map<std::string, WordId> ids_;
  std::vector<std::uint64_t> counts_;
  WordId unk_id_ = 0;
  WordId bos_id_ = 0;
  WordId eos_id_ = 0;
};

/// Counts words over a line-oriented corpus and folds every word seen fewer
/// than `min_count` times into `<unk>`.
///
/// `</s>` and `<s>` are counted once per non-blank line. `<unk>` receives the
/// folded count, floored at one so it keeps a code in the output tree.
inline Vocabulary build_vocabulary(std::istream& corpus, std::uint64_t min_count) {
  if (min_count < 1) throw RangeError("min_count must be >= 1");
  std::unordered_map<std::string, std::uint64_t> freq;
  std::uint64_t sentences = 0;
  std::string line;
  std::string tok;
  while (std::getline(corpus, line)) {
    std::istringstream in(line);
    bool any = false;
    while (in >> tok) {
      ++freq[tok];
      any = true;
    }
    if (any) ++sentences;
  }
  if (corpus.bad()) throw IoError("error while reading corpus stream");
  if (sentences == 0) throw EmptyInputError("corpus contains no tokens");

  std::uint64_t unk = 0;
  if (auto it = freq.find(std::string(kUnknown)); it != freq.end()) {
    unk += it->second;
    freq.erase(it);
  }
  freq.erase(std::string(kSentenceBegin));
  freq.erase(std::string(kSentenceEnd));

  std::vector<std::pair<std::string, std::uint64_t>> regular;
  for (auto& [w, c] : freq) {
    if (c >= min_count)
      regular.emplace_back(w, c);
    else
      unk += c;
  }
  std::sort(regular.begin(), regular.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });

  std::vector<std::pair<std::string, std::uint64_t>> entries;
  entries.reserve(regular.size() + 3);
  entries.emplace_back(std::string(kSentenceEnd), sentences);
  entries.emplace_back(std::string(kSentenceBegin), sentences);
  entries.emplace_back(std::string(kUnknown), std::max<std::uint64_t>(unk, 1));
  for (auto& e : regular) entries.push_back(std::move(e));
  return Vocabulary::from_counts(entries);
}

}  // namespace otf
