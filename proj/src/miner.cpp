#include "mwpcl/miner.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <istream>
#include <numeric>
#include <ostream>
#include <unordered_set>

namespace mwpcl::mine {

namespace {

using eq::EquationTree;

bool match_at(const EquationTree& a, int ai, const EquationTree& b, int bi, LeafMode mode) {
  const auto& na = a.node(ai);
  const auto& nb = b.node(bi);
  if (na.token.is_op() != nb.token.is_op()) return false;
  if (!na.token.is_op()) return mode == LeafMode::Wildcard || na.token == nb.token;
  if (na.token.op != nb.token.op) return false;
  return match_at(a, na.left, b, nb.left, mode) && match_at(a, na.right, b, nb.right, mode);
}

std::array<int, eq::kOpCount> op_histogram(const EquationTree& t) {
  std::array<int, eq::kOpCount> h{};
  for (const auto& n : t.nodes()) {
    if (n.token.is_op()) ++h[static_cast<std::size_t>(n.token.op)];
  }
  return h;
}

}  // namespace

bool structural_match(const EquationTree& a, const EquationTree& b, LeafMode mode) {
  if (a.size() != b.size() || a.empty()) return false;
  return match_at(a, 0, b, 0, mode);
}

std::vector<std::string> find_positive_sites(const EquationTree& pattern, const EquationTree& candidate, LeafMode mode) {
  std::vector<std::string> sites;
  if (pattern.empty() || candidate.size() < pattern.size()) return sites;
  const auto paths = candidate.paths();
  // A subtree rooted at i spans nodes [i, i + size) in pre-order; compute sizes bottom-up.
  std::vector<std::size_t> sizes(candidate.size(), 1);
  for (int i = static_cast<int>(candidate.size()) - 1; i >= 0; --i) {
    const auto& n = candidate.node(i);
    if (n.token.is_op()) sizes[static_cast<std::size_t>(i)] = 1 + sizes[static_cast<std::size_t>(n.left)] + sizes[static_cast<std::size_t>(n.right)];
  }
  for (int i = 0; i < static_cast<int>(candidate.size()); ++i) {
    if (sizes[static_cast<std::size_t>(i)] == pattern.size() && match_at(pattern, 0, candidate, i, mode)) {
      sites.push_back(paths[static_cast<std::size_t>(i)]);
    }
  }
  return sites;
}

bool is_hard_negative(const EquationTree& pattern, const EquationTree& candidate, LeafMode mode) {
  if (pattern.size() != candidate.size()) return false;
  if (op_histogram(pattern) == op_histogram(candidate)) return false;
  return find_positive_sites(pattern, candidate, mode).empty();
}

std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(std::size_t n_pos, std::size_t n_neg, std::size_t k, std::mt19937_64& rng) {
  const std::size_t total = n_pos * n_neg;
  k = std::min(k, total);
  // Floyd's algorithm: k distinct draws from [0, total).
  std::vector<std::size_t> chosen;
  std::unordered_set<std::size_t> seen;
  for (std::size_t j = total - k; j < total; ++j) {
    std::uniform_int_distribution<std::size_t> dist(0, j);
    const std::size_t t = dist(rng);
    const std::size_t pick = seen.count(t) ? j : t;
    seen.insert(pick);
    chosen.push_back(pick);
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(chosen.size());
  for (std::size_t c : chosen) out.emplace_back(c / n_neg, c % n_neg);
  return out;
}

std::mt19937_64 base_stream(std::uint64_t seed, std::size_t rank) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(rank),
                    static_cast<std::uint32_t>(rank >> 32)};
  return std::mt19937_64(seq);
}

std::vector<ContrastiveTriple> mine_triples(const Corpus& base, const Corpus& positive_source, const Corpus& negative_source,
                                            const MineOptions& options) {
  std::vector<std::size_t> order(base.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return base[a].id < base[b].id; });

  std::vector<ContrastiveTriple> out;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const ProblemInstance& p = base[order[rank]];
    std::vector<std::size_t> positives;
    std::vector<std::string> first_sites;
    for (std::size_t i = 0; i < positive_source.size(); ++i) {
      const auto& c = positive_source[i];
      if (c.id == p.id) continue;
      auto sites = find_positive_sites(p.gold, c.gold, options.leaf_mode);
      if (!sites.empty()) {
        positives.push_back(i);
        first_sites.push_back(std::move(sites.front()));
      }
    }
    if (positives.empty()) continue;
    std::vector<std::size_t> negatives;
    for (std::size_t i = 0; i < negative_source.size(); ++i) {
      const auto& c = negative_source[i];
      if (c.id != p.id && is_hard_negative(p.gold, c.gold, options.leaf_mode)) negatives.push_back(i);
    }
    if (negatives.empty()) continue;

    auto rng = base_stream(options.seed, rank);
    for (auto [pi, ni] : sample_pairs(positives.size(), negatives.size(), options.max_per_problem, rng)) {
      out.push_back(ContrastiveTriple{p.id, positive_source[positives[pi]].id, first_sites[pi], negative_source[negatives[ni]].id});
    }
  }
  return out;
}

void write_triples(std::ostream& out, const std::vector<ContrastiveTriple>& triples) {
  for (const auto& t : triples) {
    nlohmann::ordered_json j;
    j["p"] = t.base;
    j["pos"] = t.positive;
    j["pos_path"] = t.positive_path;
    j["neg"] = t.negative;
    out << j.dump() << '\n';
  }
}

std::vector<ContrastiveTriple> read_triples(std::istream& in) {
  std::vector<ContrastiveTriple> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back(ContrastiveTriple{j.at("p").get<std::string>(), j.at("pos").get<std::string>(), j.value("pos_path", std::string()),
                                    j.at("neg").get<std::string>()});
  }
  return out;
}

}  // namespace mwpcl::mine
