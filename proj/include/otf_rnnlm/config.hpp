#pragma once

#include <charconv>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "otf_rnnlm/error.hpp"
#include "otf_rnnlm/ngram.hpp"

namespace otf {

/// Everything a CLI run needs. Parsed from flat `key = value` text; `#`
/// starts a comment. Relative paths are taken as given.
struct RunConfig {
  // paths
  std::string corpus;
  std::string valid_corpus;
  std::string vocab;
  std::string rnnlm_model;
  std::string small_lm;
  std::string compare_lm;
  std::string lattice_dir;
  std::string references;
  std::string output_dir = ".";

  std::uint64_t min_count = 1;

  std::uint64_t hidden_size = 100;
  std::uint64_t maxent_order = 3;
  std::uint64_t maxent_table_bits = 20;
  std::uint64_t epochs = 10;
  double learn_rate = 0.1;
  std::uint64_t bptt_steps = 1;
  double init_scale = 0.1;

  std::uint64_t ngram_order = 3;
  std::uint64_t small_lm_order = 2;
  Smoothing smoothing = Smoothing::kneser_ney;
  double discount = -1.0;

  std::uint64_t beam = 16;
  std::uint64_t nbest_n = 10;
  double interp_weight = 0.5;
  double lm_weight = 1.0;
  std::uint64_t rnn_bits = 32;

  std::vector<std::uint64_t> cache_capacity_kb{0, 250, 500, 750, 1000};
  bool retain_across_utterances = false;
  bool cache_enabled = true;

  // synthetic data
  std::uint64_t train_sentences = 2000;
  std::uint64_t num_utterances = 500;
  std::uint64_t num_templates = 50;
  std::uint64_t command_vocab = 200;
  double zipf_exponent = 1.0;
  std::uint64_t confusion_breadth = 3;
  std::uint64_t time_variants = 4;
  double acoustic_mean = 1.0;
  double acoustic_sigma = 0.5;

  std::uint64_t seed = 1;

  void set(const std::string& key, const std::string& value);
  void validate() const;
  /// Canonical `key=value` lines for every field.
  std::vector<std::pair<std::string, std::string>> entries() const;
  /// All entries on one line, space separated.
  std::string echo() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::uint64_t config_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

inline double config_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

inline bool config_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

inline std::string join_u64(const std::vector<std::uint64_t>& v) {
  std::string s;
  for (auto x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  using namespace detail;
  const std::map<std::string, std::function<void(const std::string&)>> setters{
      {"corpus", [&](auto& v) { corpus = v; }},
      {"valid_corpus", [&](auto& v) { valid_corpus = v; }},
      {"vocab", [&](auto& v) { vocab = v; }},
      {"rnnlm_model", [&](auto& v) { rnnlm_model = v; }},
      {"small_lm", [&](auto& v) { small_lm = v; }},
      {"compare_lm", [&](auto& v) { compare_lm = v; }},
      {"lattice_dir", [&](auto& v) { lattice_dir = v; }},
      {"references", [&](auto& v) { references = v; }},
      {"output_dir", [&](auto& v) { output_dir = v; }},
      {"min_count", [&](auto& v) { min_count = config_u64(key, v); }},
      {"hidden_size", [&](auto& v) { hidden_size = config_u64(key, v); }},
      {"maxent_order", [&](auto& v) { maxent_order = config_u64(key, v); }},
      {"maxent_table_bits", [&](auto& v) { maxent_table_bits = config_u64(key, v); }},
      {"epochs", [&](auto& v) { epochs = config_u64(key, v); }},
      {"learn_rate", [&](auto& v) { learn_rate = config_double(key, v); }},
      {"bptt_steps", [&](auto& v) { bptt_steps = config_u64(key, v); }},
      {"init_scale", [&](auto& v) { init_scale = config_double(key, v); }},
      {"ngram_order", [&](auto& v) { ngram_order = config_u64(key, v); }},
      {"small_lm_order", [&](auto& v) { small_lm_order = config_u64(key, v); }},
      {"smoothing",
       [&](auto& v) {
         if (v == "kneser-ney")
           smoothing = Smoothing::kneser_ney;
         else if (v == "absolute-discount")
           smoothing = Smoothing::absolute_discount;
         else
           throw ConfigError("smoothing: expected kneser-ney or absolute-discount, got '" + v + "'");
       }},
      {"discount", [&](auto& v) { discount = config_double(key, v); }},
      {"beam", [&](auto& v) { beam = config_u64(key, v); }},
      {"nbest_n", [&](auto& v) { nbest_n = config_u64(key, v); }},
      {"interp_weight", [&](auto& v) { interp_weight = config_double(key, v); }},
      {"lm_weight", [&](auto& v) { lm_weight = config_double(key, v); }},
      {"rnn_bits", [&](auto& v) { rnn_bits = config_u64(key, v); }},
      {"cache_capacity_kb",
       [&](auto& v) {
         cache_capacity_kb.clear();
         std::size_t pos = 0;
         while (pos <= v.size()) {
           auto comma = v.find(',', pos);
           if (comma == std::string::npos) comma = v.size();
           cache_capacity_kb.push_back(config_u64(key, trim(v.substr(pos, comma - pos))));
           pos = comma + 1;
         }
       }},
      {"retain_across_utterances", [&](auto& v) { retain_across_utterances = config_bool(key, v); }},
      {"cache_enabled", [&](auto& v) { cache_enabled = config_bool(key, v); }},
      {"train_sentences", [&](auto& v) { train_sentences = config_u64(key, v); }},
      {"num_utterances", [&](auto& v) { num_utterances = config_u64(key, v); }},
      {"num_templates", [&](auto& v) { num_templates = config_u64(key, v); }},
      {"command_vocab", [&](auto& v) { command_vocab = config_u64(key, v); }},
      {"zipf_exponent", [&](auto& v) { zipf_exponent = config_double(key, v); }},
      {"confusion_breadth", [&](auto& v) { confusion_breadth = config_u64(key, v); }},
      {"time_variants", [&](auto& v) { time_variants = config_u64(key, v); }},
      {"acoustic_mean", [&](auto& v) { acoustic_mean = config_double(key, v); }},
      {"acoustic_sigma", [&](auto& v) { acoustic_sigma = config_double(key, v); }},
      {"seed", [&](auto& v) { seed = config_u64(key, v); }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown key '" + key + "'");
  it->second(value);
}

inline void RunConfig::validate() const {
  auto range = [](const char* key, double v, double lo, double hi) {
    if (!(v >= lo && v <= hi))
      throw ConfigError(std::string(key) + " out of range [" + detail::format_double(lo) + ", " +
                        detail::format_double(hi) + "]");
  };
  range("min_count", double(min_count), 1, 1e9);
  range("hidden_size", double(hidden_size), 1, 4096);
  range("maxent_order", double(maxent_order), 0, 8);
  range("maxent_table_bits", double(maxent_table_bits), 1, 30);
  range("epochs", double(epochs), 1, 1000);
  range("learn_rate", learn_rate, 1e-9, 10);
  range("bptt_steps", double(bptt_steps), 1, 1000);
  range("init_scale", init_scale, 0, 10);
  range("ngram_order", double(ngram_order), 1, 5);
  range("small_lm_order", double(small_lm_order), 1, 5);
  if (discount != -1.0) range("discount", discount, 0, 0.999999);
  range("beam", double(beam), 1, 1e9);
  range("nbest_n", double(nbest_n), 1, 1e6);
  range("interp_weight", interp_weight, 0, 1);
  range("lm_weight", lm_weight, 1e-9, 100);
  range("rnn_bits", double(rnn_bits), 1, 63);
  if (cache_capacity_kb.empty()) throw ConfigError("cache_capacity_kb must list at least one capacity");
  for (auto c : cache_capacity_kb) range("cache_capacity_kb", double(c), 0, 1e9);
  range("train_sentences", double(train_sentences), 1, 1e8);
  range("num_utterances", double(num_utterances), 1, 1e7);
  range("num_templates", double(num_templates), 1, 1e6);
  range("command_vocab", double(command_vocab), 1, 1e6);
  range("zipf_exponent", zipf_exponent, 0, 10);
  range("confusion_breadth", double(confusion_breadth), 1, 64);
  range("time_variants", double(time_variants), 1, 64);
  range("acoustic_mean", acoustic_mean, -1e6, 1e6);
  range("acoustic_sigma", acoustic_sigma, 0, 1e6);
}

inline std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  auto d = [](double v) { return detail::format_double(v); };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"corpus", corpus},
      {"valid_corpus", valid_corpus},
      {"vocab", vocab},
      {"rnnlm_model", rnnlm_model},
      {"small_lm", small_lm},
      {"compare_lm", compare_lm},
      {"lattice_dir", lattice_dir},
      {"references", references},
      {"output_dir", output_dir},
      {"min_count", std::to_string(min_count)},
      {"hidden_size", std::to_string(hidden_size)},
      {"maxent_order", std::to_string(maxent_order)},
      {"maxent_table_bits", std::to_string(maxent_table_bits)},
      {"epochs", std::to_string(epochs)},
      {"learn_rate", d(learn_rate)},
      {"bptt_steps", std::to_string(bptt_steps)},
      {"init_scale", d(init_scale)},
      {"ngram_order", std::to_string(ngram_order)},
      {"small_lm_order", std::to_string(small_lm_order)},
      {"smoothing", smoothing == Smoothing::kneser_ney ? "kneser-ney" : "absolute-discount"},
      {"discount", d(discount)},
      {"beam", std::to_string(beam)},
      {"nbest_n", std::to_string(nbest_n)},
      {"interp_weight", d(interp_weight)},
      {"lm_weight", d(lm_weight)},
      {"rnn_bits", std::to_string(rnn_bits)},
      {"cache_capacity_kb", detail::join_u64(cache_capacity_kb)},
      {"retain_across_utterances", b(retain_across_utterances)},
      {"cache_enabled", b(cache_enabled)},
      {"train_sentences", std::to_string(train_sentences)},
      {"num_utterances", std::to_string(num_utterances)},
      {"num_templates", std::to_string(num_templates)},
      {"command_vocab", std::to_string(command_vocab)},
      {"zipf_exponent", d(zipf_exponent)},
      {"confusion_breadth", std::to_string(confusion_breadth)},
      {"time_variants", std::to_string(time_variants)},
      {"acoustic_mean", d(acoustic_mean)},
      {"acoustic_sigma", d(acoustic_sigma)},
      {"seed", std::to_string(seed)},
  };
}

inline std::string RunConfig::echo() const {
  std::string s;
  for (const auto& [k, v] : entries()) s += (s.empty() ? "" : " ") + k + "=" + v;
  return s;
}

/// Parses config text. Errors carry the offending line number.
inline RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    try {
      cfg.set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

inline RunConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

}  // namespace otf
