#include "mwpcl/equation.hpp"

#include <algorithm>
#include <cctype>
#include <functional>

namespace mwpcl::eq {

char op_symbol(Op op) {
  switch (op) {
    case Op::Add: return '+';
    case Op::Sub: return '-';
    case Op::Mul: return '*';
    case Op::Div: return '/';
    case Op::Pow: return '^';
  }
  return '?';
}

std::optional<Op> op_from_symbol(std::string_view s) {
  if (s == "+") return Op::Add;
  if (s == "-" || s == "−") return Op::Sub;
  if (s == "*" || s == "×") return Op::Mul;
  if (s == "/" || s == "÷") return Op::Div;
  if (s == "^" || s == "**") return Op::Pow;
  return std::nullopt;
}

bool operator==(const Token& a, const Token& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Token::Kind::Operator: return a.op == b.op;
    case Token::Kind::Slot: return a.slot == b.slot;
    case Token::Kind::Constant: return a.constant == b.constant;
  }
  return false;
}

std::string Token::str() const {
  switch (kind) {
    case Kind::Operator: return std::string(1, op_symbol(op));
    case Kind::Slot: return "n" + std::to_string(slot);
    case Kind::Constant: return rational_to_string(constant);
  }
  return {};
}

Token Token::parse(std::string_view text) {
  if (auto op = op_from_symbol(text)) return make_op(*op);
  if (text.size() >= 2 && text[0] == 'n' &&
      std::all_of(text.begin() + 1, text.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    int index = std::stoi(std::string(text.substr(1)));
    if (index < 1) throw std::invalid_argument("slot index must be >= 1: '" + std::string(text) + "'");
    return make_slot(index);
  }
  return make_constant(parse_rational(text));
}

ParseError::ParseError(const std::string& message, std::size_t position)
    : std::runtime_error(message + " at position " + std::to_string(position)), position_(position) {}

// --- tree ---------------------------------------------------------------

EquationTree EquationTree::leaf(Token token) {
  EquationTree t;
  t.nodes_.push_back(Node{std::move(token), -1, -1});
  return t;
}

EquationTree EquationTree::binary(Op op, const EquationTree& left, const EquationTree& right) {
  EquationTree t;
  t.nodes_.reserve(1 + left.size() + right.size());
  const int left_root = 1;
  const int right_root = 1 + static_cast<int>(left.size());
  t.nodes_.push_back(Node{Token::make_op(op), left_root, right_root});
  for (const Node& n : left.nodes_) {
    t.nodes_.push_back(Node{n.token, n.left < 0 ? -1 : n.left + left_root, n.right < 0 ? -1 : n.right + left_root});
  }
  for (const Node& n : right.nodes_) {
    t.nodes_.push_back(Node{n.token, n.left < 0 ? -1 : n.left + right_root, n.right < 0 ? -1 : n.right + right_root});
  }
  return t;
}

std::size_t EquationTree::operator_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.token.is_op(); }));
}

int EquationTree::max_slot() const {
  int m = 0;
  for (const Node& n : nodes_) {
    if (n.token.kind == Token::Kind::Slot) m = std::max(m, n.token.slot);
  }
  return m;
}

std::optional<int> EquationTree::find(std::string_view path) const {
  if (nodes_.empty()) return std::nullopt;
  int at = 0;
  for (char step : path) {
    const Node& n = nodes_[static_cast<std::size_t>(at)];
    if (!n.token.is_op()) return std::nullopt;
    if (step == 'L') {
      at = n.left;
    } else if (step == 'R') {
      at = n.right;
    } else {
      return std::nullopt;
    }
  }
  return at;
}

EquationTree EquationTree::subtree(int index) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(index));
  if (!n.token.is_op()) return leaf(n.token);
  return binary(n.token.op, subtree(n.left), subtree(n.right));
}

std::vector<std::string> EquationTree::paths() const {
  std::vector<std::string> out(nodes_.size());
  std::function<void(int, const std::string&)> walk = [&](int at, const std::string& path) {
    out[static_cast<std::size_t>(at)] = path;
    const Node& n = nodes_[static_cast<std::size_t>(at)];
    if (n.token.is_op()) {
      walk(n.left, path + "L");
      walk(n.right, path + "R");
    }
  };
  if (!nodes_.empty()) walk(0, "");
  return out;
}

// --- Polish notation ----------------------------------------------------

std::vector<Token> to_polish(const EquationTree& tree) {
  std::vector<Token> out;
  out.reserve(tree.size());
  for (const auto& n : tree.nodes()) out.push_back(n.token);
  return out;
}

std::vector<std::string> polish_strings(const EquationTree& tree) {
  std::vector<std::string> out;
  out.reserve(tree.size());
  for (const auto& n : tree.nodes()) out.push_back(n.token.str());
  return out;
}

EquationTree from_polish(std::span<const Token> tokens) {
  if (tokens.empty()) throw ParseError("empty Polish expression", 0);
  EquationTree tree;
  tree.nodes_.reserve(tokens.size());
  // Indices of operator nodes still waiting for a child.
  std::vector<int> open;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && open.empty()) throw ParseError("trailing tokens in Polish expression", i);
    const int index = static_cast<int>(i);
    if (!open.empty()) {
      auto& parent = tree.nodes_[static_cast<std::size_t>(open.back())];
      if (parent.left < 0) {
        parent.left = index;
      } else {
        parent.right = index;
        open.pop_back();
      }
    }
    tree.nodes_.push_back(EquationTree::Node{tokens[i], -1, -1});
    if (tokens[i].is_op()) open.push_back(index);
  }
  if (!open.empty()) throw ParseError("truncated Polish expression", tokens.size());
  return tree;
}

// --- infix --------------------------------------------------------------

namespace {

int precedence(Op op) {
  switch (op) {
    case Op::Add:
    case Op::Sub: return 1;
    case Op::Mul:
    case Op::Div: return 2;
    case Op::Pow: return 3;
  }
  return 0;
}

struct Lexeme {
  enum class Kind { Number, Slot, Operator, LParen, RParen, End } kind;
  std::string text;
  std::size_t pos;
};

std::vector<Lexeme> lex(std::string_view s) {
  std::vector<Lexeme> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (c == '(' || c == '[') {
      out.push_back({Lexeme::Kind::LParen, std::string(1, s[i]), i});
      ++i;
    } else if (c == ')' || c == ']') {
      out.push_back({Lexeme::Kind::RParen, std::string(1, s[i]), i});
      ++i;
    } else if (std::isdigit(c) || (c == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      const std::size_t start = i;
      while (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '.')) ++i;
      out.push_back({Lexeme::Kind::Number, std::string(s.substr(start, i - start)), start});
    } else if (c == 'n' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1]))) {
      const std::size_t start = i;
      ++i;
      while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
      out.push_back({Lexeme::Kind::Slot, std::string(s.substr(start, i - start)), start});
    } else if (s.compare(i, 2, "**") == 0) {
      out.push_back({Lexeme::Kind::Operator, "^", i});
      i += 2;
    } else if (std::string_view("+-*/^").find(static_cast<char>(c)) != std::string_view::npos) {
      out.push_back({Lexeme::Kind::Operator, std::string(1, s[i]), i});
      ++i;
    } else {
      // Multi-byte operator glyphs.
      bool matched = false;
      for (std::string_view glyph : {"−", "×", "÷"}) {
        if (s.compare(i, glyph.size(), glyph) == 0) {
          out.push_back({Lexeme::Kind::Operator, std::string(glyph), i});
          i += glyph.size();
          matched = true;
          break;
        }
      }
      if (!matched) throw ParseError(std::string("unexpected character '") + s[i] + "'", i);
    }
  }
  out.push_back({Lexeme::Kind::End, "", s.size()});
  return out;
}

class InfixParser {
 public:
  InfixParser(std::vector<Lexeme> lexemes, std::size_t n_numbers) : lx_(std::move(lexemes)), n_numbers_(n_numbers) {}

  EquationTree parse() {
    EquationTree t = expression(1);
    if (peek().kind != Lexeme::Kind::End) throw ParseError("unexpected '" + peek().text + "'", peek().pos);
    return t;
  }

 private:
  const Lexeme& peek() const { return lx_[at_]; }
  const Lexeme& next() { return lx_[at_++]; }

  // Precedence climbing; every operator is left associative.
  EquationTree expression(int min_prec) {
    EquationTree lhs = primary();
    while (peek().kind == Lexeme::Kind::Operator) {
      const Op op = *op_from_symbol(peek().text);
      const int prec = precedence(op);
      if (prec < min_prec) break;
      next();
      EquationTree rhs = expression(prec + 1);
      lhs = EquationTree::binary(op, lhs, rhs);
    }
    return lhs;
  }

  EquationTree primary() {
    const Lexeme& lx = next();
    switch (lx.kind) {
      case Lexeme::Kind::Number:
        try {
          return EquationTree::leaf(Token::make_constant(parse_rational(lx.text)));
        } catch (const std::invalid_argument&) {
          throw ParseError("malformed number '" + lx.text + "'", lx.pos);
        }
      case Lexeme::Kind::Slot: {
        const int index = std::stoi(lx.text.substr(1));
        if (index < 1 || static_cast<std::size_t>(index) > n_numbers_) {
          throw ParseError("slot " + lx.text + " out of range (problem has " + std::to_string(n_numbers_) + " numbers)", lx.pos);
        }
        return EquationTree::leaf(Token::make_slot(index));
      }
      case Lexeme::Kind::LParen: {
        EquationTree inner = expression(1);
        if (peek().kind != Lexeme::Kind::RParen) throw ParseError("expected ')'", peek().pos);
        next();
        return inner;
      }
      case Lexeme::Kind::End: throw ParseError("unexpected end of expression", lx.pos);
      default: throw ParseError("unexpected '" + lx.text + "'", lx.pos);
    }
  }

  std::vector<Lexeme> lx_;
  std::size_t at_ = 0;
  std::size_t n_numbers_;
};

void print_node(const EquationTree& t, int at, std::string& out) {
  const auto& n = t.node(at);
  if (!n.token.is_op()) {
    out += n.token.kind == Token::Kind::Constant ? rational_to_decimal(n.token.constant) : n.token.str();
    return;
  }
  const int prec = precedence(n.token.op);
  auto child = [&](int c, bool right_side) {
    const auto& cn = t.node(c);
    const bool wrap = cn.token.is_op() && (precedence(cn.token.op) < prec || (right_side && precedence(cn.token.op) == prec));
    if (wrap) out += '(';
    print_node(t, c, out);
    if (wrap) out += ')';
  };
  child(n.left, false);
  out += ' ';
  out += op_symbol(n.token.op);
  out += ' ';
  child(n.right, true);
}

}  // namespace

EquationTree parse_infix(std::string_view expr, std::size_t n_numbers) {
  return InfixParser(lex(expr), n_numbers).parse();
}

std::string print_infix(const EquationTree& tree) {
  std::string out;
  if (!tree.empty()) print_node(tree, 0, out);
  return out;
}

// --- evaluation ---------------------------------------------------------

namespace {

constexpr long kMaxExponent = 4096;

Rational eval_node(const EquationTree& t, int at, std::span<const Rational> numbers) {
  const auto& n = t.node(at);
  switch (n.token.kind) {
    case Token::Kind::Slot:
      if (n.token.slot < 1 || static_cast<std::size_t>(n.token.slot) > numbers.size()) {
        throw EvalError("slot n" + std::to_string(n.token.slot) + " out of range");
      }
      return numbers[static_cast<std::size_t>(n.token.slot - 1)];
    case Token::Kind::Constant: return n.token.constant;
    case Token::Kind::Operator: break;
  }
  const Rational a = eval_node(t, n.left, numbers);
  const Rational b = eval_node(t, n.right, numbers);
  switch (n.token.op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div:
      if (b == 0) throw EvalError("division by zero");
      return a / b;
    case Op::Pow: {
      if (boost::multiprecision::denominator(b) != 1) throw EvalError("non-integer exponent " + rational_to_string(b));
      const auto e = boost::multiprecision::numerator(b);
      if (e > kMaxExponent || e < -kMaxExponent) throw EvalError("exponent too large: " + e.str());
      long k = e.convert_to<long>();
      if (k < 0 && a == 0) throw EvalError("division by zero");
      Rational result = 1;
      const Rational base = k < 0 ? Rational(1 / a) : a;
      for (long i = 0; i < std::abs(k); ++i) result *= base;
      return result;
    }
  }
  throw EvalError("unknown operator");
}

void key_node(const EquationTree& t, int at, std::string& out) {
  const auto& n = t.node(at);
  if (!n.token.is_op()) {
    out += n.token.str();
    return;
  }
  out += '(';
  out += op_symbol(n.token.op);
  out += ' ';
  key_node(t, n.left, out);
  out += ' ';
  key_node(t, n.right, out);
  out += ')';
}

}  // namespace

Rational evaluate(const EquationTree& tree, std::span<const Rational> numbers) {
  if (tree.empty()) throw EvalError("empty tree");
  return eval_node(tree, 0, numbers);
}

std::string prototype_key(const EquationTree& tree) {
  std::string out;
  if (!tree.empty()) key_node(tree, 0, out);
  return out;
}

EquationTree canonicalize_commutative(const EquationTree& tree) {
  std::function<EquationTree(int)> canon = [&](int at) -> EquationTree {
    const auto& n = tree.node(at);
    if (!n.token.is_op()) return EquationTree::leaf(n.token);
    EquationTree l = canon(n.left);
    EquationTree r = canon(n.right);
    if ((n.token.op == Op::Add || n.token.op == Op::Mul) && prototype_key(r) < prototype_key(l)) std::swap(l, r);
    return EquationTree::binary(n.token.op, l, r);
  };
  if (tree.empty()) return tree;
  return canon(0);
}

}  // namespace mwpcl::eq
