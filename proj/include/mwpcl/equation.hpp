#pragma once

// Equation trees: binary operator nodes over number slots and constants.

#include "mwpcl/rational.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mwpcl::eq {

enum class Op { Add, Sub, Mul, Div, Pow };

inline constexpr std::size_t kOpCount = 5;
inline constexpr Op kAllOps[kOpCount] = {Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Pow};

char op_symbol(Op op);
std::optional<Op> op_from_symbol(std::string_view s);

/// One symbol of an equation: an operator, a number slot n_i (1-based), or a constant.
struct Token {
  enum class Kind { Operator, Slot, Constant };

  Kind kind = Kind::Slot;
  Op op = Op::Add;
  int slot = 0;
  Rational constant;

  static Token make_op(Op o) { return Token{Kind::Operator, o, 0, {}}; }
  static Token make_slot(int index) { return Token{Kind::Slot, Op::Add, index, {}}; }
  static Token make_constant(Rational value) { return Token{Kind::Constant, Op::Add, 0, std::move(value)}; }

  bool is_op() const { return kind == Kind::Operator; }
  bool is_leaf() const { return kind != Kind::Operator; }

  // "+", "n3", "100", "157/50"
  std::string str() const;
  static Token parse(std::string_view text);

  friend bool operator==(const Token& a, const Token& b);
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, std::size_t position);
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Full binary tree stored in pre-order. Node 0 is the root; operator nodes
/// record the indices of both children.
class EquationTree {
 public:
  struct Node {
    Token token;
    int left = -1;
    int right = -1;

    friend bool operator==(const Node&, const Node&) = default;
  };

  EquationTree() = default;

  static EquationTree leaf(Token token);
  static EquationTree binary(Op op, const EquationTree& left, const EquationTree& right);

  const Node& node(int index) const { return nodes_.at(static_cast<std::size_t>(index)); }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  std::size_t operator_count() const;
  int max_slot() const;

  /// Index of the node reached by following `path` ("L"/"R" steps) from the root.
  std::optional<int> find(std::string_view path) const;
  /// Copy of the subtree rooted at `index`.
  EquationTree subtree(int index) const;
  /// Root-to-node paths for every node, in pre-order.
  std::vector<std::string> paths() const;

  friend bool operator==(const EquationTree& a, const EquationTree& b) { return a.nodes_ == b.nodes_; }

 private:
  friend EquationTree from_polish(std::span<const Token> tokens);

  std::vector<Node> nodes_;
};

EquationTree parse_infix(std::string_view expr, std::size_t n_numbers);
std::string print_infix(const EquationTree& tree);

std::vector<Token> to_polish(const EquationTree& tree);
EquationTree from_polish(std::span<const Token> tokens);
std::vector<std::string> polish_strings(const EquationTree& tree);

Rational evaluate(const EquationTree& tree, std::span<const Rational> numbers);

std::string prototype_key(const EquationTree& tree);

/// Orders the operands of + and * by prototype key so commuted forms collapse.
EquationTree canonicalize_commutative(const EquationTree& tree);

}  // namespace mwpcl::eq
