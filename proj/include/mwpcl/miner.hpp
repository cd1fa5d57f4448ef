#pragma once

// Structural mining of contrastive triples (base, positive, hard negative).

#include "mwpcl/corpus.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace mwpcl::mine {

enum class LeafMode {
  Wildcard,  // any leaf matches any leaf
  Exact,     // leaf tokens must be equal
};

struct ContrastiveTriple {
  std::string base;
  std::string positive;
  std::string positive_path;  // "L"/"R" steps from the positive's root; "" is the root
  std::string negative;

  friend bool operator==(const ContrastiveTriple&, const ContrastiveTriple&) = default;
};

bool structural_match(const eq::EquationTree& a, const eq::EquationTree& b, LeafMode mode = LeafMode::Wildcard);

/// Paths (pre-order) of every subtree of `candidate` that matches `pattern`.
std::vector<std::string> find_positive_sites(const eq::EquationTree& pattern, const eq::EquationTree& candidate,
                                             LeafMode mode = LeafMode::Wildcard);

bool is_hard_negative(const eq::EquationTree& pattern, const eq::EquationTree& candidate, LeafMode mode = LeafMode::Wildcard);

struct MineOptions {
  std::uint64_t seed = 0;
  std::size_t max_per_problem = 4;
  LeafMode leaf_mode = LeafMode::Wildcard;
};

/// Distinct (positive, negative) index pairs drawn uniformly without
/// replacement from the n_pos x n_neg grid, returned in ascending order.
std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(std::size_t n_pos, std::size_t n_neg, std::size_t k, std::mt19937_64& rng);

/// Random stream for the base problem at `rank` in id order.
std::mt19937_64 base_stream(std::uint64_t seed, std::size_t rank);

/// Triples for every base problem that has at least one positive and one hard
/// negative. Output is ordered by base id.
std::vector<ContrastiveTriple> mine_triples(const Corpus& base, const Corpus& positive_source, const Corpus& negative_source,
                                            const MineOptions& options);

void write_triples(std::ostream& out, const std::vector<ContrastiveTriple>& triples);
std::vector<ContrastiveTriple> read_triples(std::istream& in);

}  // namespace mwpcl::mine
