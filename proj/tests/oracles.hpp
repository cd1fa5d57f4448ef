#pragma once

// Independent reference implementations used to check the library.

#include "mwpcl/miner.hpp"
#include "mwpcl/model.hpp"
#include "mwpcl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace oracle {

using mwpcl::Rational;
using mwpcl::eq::Op;
using mwpcl::eq::Token;

// Stack machine over Polish tokens, read right to left.
inline Rational stack_eval(const std::vector<Token>& polish, const std::vector<Rational>& numbers) {
  std::vector<Rational> stack;
  for (auto it = polish.rbegin(); it != polish.rend(); ++it) {
    if (it->kind == Token::Kind::Slot) {
      stack.push_back(numbers.at(static_cast<std::size_t>(it->slot - 1)));
    } else if (it->kind == Token::Kind::Constant) {
      stack.push_back(it->constant);
    } else {
      if (stack.size() < 2) throw std::runtime_error("stack underflow");
      Rational a = stack.back();
      stack.pop_back();
      Rational b = stack.back();
      stack.pop_back();
      switch (it->op) {
        case Op::Add: stack.push_back(a + b); break;
        case Op::Sub: stack.push_back(a - b); break;
        case Op::Mul: stack.push_back(a * b); break;
        case Op::Div:
          if (b == 0) throw std::domain_error("div0");
          stack.push_back(a / b);
          break;
        case Op::Pow: {
          if (denominator(b) != 1 || abs(b) > 100000) throw std::domain_error("pow");
          long e = static_cast<long>(numerator(b));
          Rational r = 1;
          for (long i = 0; i < std::labs(e); ++i) r *= a;
          if (e < 0) {
            if (r == 0) throw std::domain_error("div0");
            r = 1 / r;
          }
          stack.push_back(r);
          break;
        }
      }
    }
  }
  if (stack.size() != 1) throw std::runtime_error("bad expression");
  return stack.back();
}

// Every subtree of a Polish sequence as (path, Polish tokens), pre-order.
inline void subtrees(const std::vector<Token>& polish, std::size_t& pos, const std::string& path,
                     std::vector<std::pair<std::string, std::vector<Token>>>& out) {
  const std::size_t begin = pos;
  const std::size_t slot = out.size();
  out.emplace_back(path, std::vector<Token>{});
  const Token t = polish.at(pos++);
  if (t.kind == Token::Kind::Operator) {
    subtrees(polish, pos, path + "L", out);
    subtrees(polish, pos, path + "R", out);
  }
  out[slot].second.assign(polish.begin() + static_cast<long>(begin), polish.begin() + static_cast<long>(pos));
}

inline std::vector<std::pair<std::string, std::vector<Token>>> subtrees(const std::vector<Token>& polish) {
  std::vector<std::pair<std::string, std::vector<Token>>> out;
  std::size_t pos = 0;
  subtrees(polish, pos, "", out);
  return out;
}

// Polish string with leaves replaced by "x" unless exact.
inline std::string shape(const std::vector<Token>& polish, bool exact) {
  std::string s;
  for (const auto& t : polish) s += (t.kind == Token::Kind::Operator || exact ? t.str() : std::string("x")) + " ";
  return s;
}

inline std::multiset<int> op_multiset(const std::vector<Token>& polish) {
  std::multiset<int> m;
  for (const auto& t : polish)
    if (t.kind == Token::Kind::Operator) m.insert(static_cast<int>(t.op));
  return m;
}

// Brute-force miner: all pairs, all subtrees, string comparison. Sampling reuses the
// library's seeded pair sampler so both sides see the same random draws.
inline std::vector<mwpcl::mine::ContrastiveTriple> brute_mine(const mwpcl::Corpus& base, const mwpcl::Corpus& pos,
                                                              const mwpcl::Corpus& neg, const mwpcl::mine::MineOptions& options) {
  const bool exact = options.leaf_mode == mwpcl::mine::LeafMode::Exact;
  std::vector<const mwpcl::ProblemInstance*> sorted;
  for (const auto& p : base) sorted.push_back(&p);
  std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });
  std::vector<mwpcl::mine::ContrastiveTriple> out;
  for (std::size_t rank = 0; rank < sorted.size(); ++rank) {
    const auto& p = *sorted[rank];
    const auto pp = mwpcl::eq::to_polish(p.gold);
    const std::string key = shape(pp, exact);
    std::vector<std::pair<std::string, std::string>> positives;  // id, first path
    for (const auto& c : pos) {
      if (c.id == p.id) continue;
      for (const auto& [path, sub] : subtrees(mwpcl::eq::to_polish(c.gold))) {
        if (shape(sub, exact) == key) {
          positives.emplace_back(c.id, path);
          break;
        }
      }
    }
    std::vector<std::string> negatives;
    for (const auto& c : neg) {
      if (c.id == p.id) continue;
      const auto cp = mwpcl::eq::to_polish(c.gold);
      if (cp.size() != pp.size() || op_multiset(cp) == op_multiset(pp)) continue;
      bool is_pos = false;
      for (const auto& [path, sub] : subtrees(cp)) is_pos = is_pos || shape(sub, exact) == key;
      if (!is_pos) negatives.push_back(c.id);
    }
    if (positives.empty() || negatives.empty()) continue;
    auto rng = mwpcl::mine::base_stream(options.seed, rank);
    for (auto [i, j] : mwpcl::mine::sample_pairs(positives.size(), negatives.size(), options.max_per_problem, rng)) {
      out.push_back({p.id, positives[i].first, positives[i].second, negatives[j]});
    }
  }
  return out;
}

// Central differences over every parameter. Per group, the error is the largest
// |numeric - analytic| over the group divided by the group's largest gradient entry:
// elementwise ratios on near-zero entries only measure the roundoff of the
// difference quotient (about eps * |loss| / h).
struct GroupError {
  double relative = 0.0;
  double max_abs_error = 0.0;
  double scale = 0.0;
};

inline std::map<std::string, GroupError> gradient_check(mwpcl::nn::Model& model,
                                                        const std::function<double(mwpcl::nn::Tape&, std::span<double>)>& loss,
                                                        double h = 1e-4) {
  auto values = model.params().values();
  std::vector<double> analytic(values.size(), 0.0);
  {
    mwpcl::nn::Tape tape(values);
    loss(tape, analytic);
  }
  auto eval = [&] {
    mwpcl::nn::Tape tape(values);
    return loss(tape, std::span<double>());
  };
  std::map<std::string, GroupError> out;
  for (const auto& entry : model.params().entries()) {
    GroupError g;
    for (std::size_t i = entry.ref.offset; i < entry.ref.offset + entry.ref.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = eval();
      values[i] = saved - h;
      const double down = eval();
      values[i] = saved;
      const double numeric = (up - down) / (2 * h);
      g.max_abs_error = std::max(g.max_abs_error, std::abs(numeric - analytic[i]));
      g.scale = std::max({g.scale, std::abs(numeric), std::abs(analytic[i])});
    }
    g.relative = g.scale > 0.0 ? g.max_abs_error / g.scale : 0.0;
    out[entry.name] = g;
  }
  return out;
}

}  // namespace oracle
