#pragma once

// Synthetic math-word-problem corpora with known prototype equations.

#include "mwpcl/corpus.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace mwpcl::gen {

/// Text patterns use {1}..{k} for numbers and {name} style fillers drawn from
/// `fillers`. A filler used several times in one pattern gets the same word.
struct Template {
  std::string name;
  std::string lang;
  std::string corpus;
  std::vector<std::string> patterns;
  std::string equation;
  std::vector<std::pair<int, int>> ranges;  // inclusive integer range per slot
  std::map<std::string, std::vector<std::string>> fillers;

  eq::EquationTree prototype() const;
  /// Throws std::invalid_argument when placeholders and slots disagree.
  void validate() const;
};

std::vector<Template> default_pack();
std::vector<Template> read_pack(std::istream& in);
void write_pack(std::ostream& out, const std::vector<Template>& pack);

struct PackProperties {
  std::size_t subtree_sharing_pairs = 0;  // (a, b) with a's prototype matching a proper subtree of b's
  std::size_t hard_negative_pairs = 0;    // unordered same-size, different-operator prototype pairs
};
PackProperties pack_properties(const std::vector<Template>& pack);

/// `per_template` problems per template, in template order. Numbers that make
/// the equation undefined are resampled up to `max_retries` times.
Corpus generate(const std::vector<Template>& pack, std::size_t per_template, std::uint64_t seed, std::size_t max_retries = 100);

struct Split {
  Corpus train;
  Corpus dev;
  Corpus test;
};

/// Seeded shuffle then cut into train/dev/test by fraction.
Split split_corpus(const Corpus& corpus, double dev_fraction, double test_fraction, std::uint64_t seed);

Corpus filter_lang(const Corpus& corpus, const std::string& lang);

}  // namespace mwpcl::gen
