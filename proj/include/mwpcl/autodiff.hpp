#pragma once

// Reverse-mode automatic differentiation over small dense vectors.
//
// A Tape records vector-valued nodes in creation order. Parameters live in an
// external flat buffer; parameter-reading nodes refer to it by offset and
// backward() accumulates into a gradient buffer of the same layout.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace mwpcl::nn {

struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

/// A dense parameter block inside the flat parameter buffer (row-major).
struct ParamRef {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 1;
  std::size_t size() const { return rows * cols; }
  ParamRef row(std::size_t r) const { return ParamRef{offset + r * cols, 1, cols}; }
};

class Tape {
 public:
  explicit Tape(std::span<const double> params) : params_(params) {}

  /// Drops all nodes; keeps allocated capacity.
  void clear();
  std::size_t node_count() const { return nodes_.size(); }

  std::span<const double> value(Var v) const;
  double scalar(Var v) const;
  std::size_t dim(Var v) const;
  std::vector<double> copy(Var v) const;

  // Leaves.
  Var constant(std::span<const double> values);
  Var constant(std::initializer_list<double> values) { return constant(std::span<const double>(values.begin(), values.size())); }
  Var zeros(std::size_t n);
  Var param(const ParamRef& p);

  // y = W x (+ b); W is rows x cols.
  Var linear(const ParamRef& w, Var x);
  Var linear(const ParamRef& w, Var x, const ParamRef& bias);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double k);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var slice(Var a, std::size_t begin, std::size_t n);

  Var concat(std::span<const Var> parts);
  Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }
  Var mean(std::span<const Var> parts);
  Var sum(std::span<const Var> parts);
  /// Scalars -> vector.
  Var stack(std::span<const Var> scalars);

  Var dot(Var a, Var b);
  /// Cosine similarity; 0 (with zero gradient) when either vector has zero norm.
  Var cosine(Var a, Var b);
  Var softmax(Var a);
  Var log_softmax(Var a);
  Var pick(Var a, std::size_t index);
  /// sum_i w[i] * parts[i]
  Var weighted_sum(Var weights, std::span<const Var> parts);

  /// GRU update from precomputed input/hidden projections laid out as [r; z; n].
  Var gru(Var gates_x, Var gates_h, Var h_prev);
  /// sigmoid(u[:m]) * tanh(u[m:]) for u of size 2m.
  Var gated_tanh(Var u);

  /// Number of cosine() calls that hit a zero-norm operand since the last clear().
  std::size_t degenerate_cosines() const { return degenerate_cosines_; }

  /// Back-propagates d(loss)/d(.) from the scalar node `loss`, accumulating
  /// parameter gradients into `param_grad` (same layout as the parameter buffer).
  void backward(Var loss, std::span<double> param_grad);

 private:
  enum class Kind : std::uint8_t {
    Constant, Param, Linear, Add, Sub, Mul, Scale, Tanh, Sigmoid, Relu, Slice, Concat, Mean, Sum, Stack,
    Dot, Cosine, Softmax, LogSoftmax, Pick, WeightedSum, Gru, GatedTanh,
  };

  struct Node {
    Kind kind;
    std::uint32_t off;     // value offset
    std::uint32_t n;       // value size
    std::uint32_t a = 0;   // operand ids
    std::uint32_t b = 0;
    std::uint32_t c = 0;
    std::uint32_t list_begin = 0;  // into list_
    std::uint32_t list_count = 0;
    std::size_t p0 = 0;  // parameter offsets
    std::size_t p1 = SIZE_MAX;
    std::size_t rows = 0;
    std::size_t cols = 0;
    double k = 0.0;
  };

  Var push(Node node);
  std::uint32_t alloc(std::size_t n);
  const Node& at(Var v) const;
  double* val(std::uint32_t id) { return values_.data() + nodes_[id].off; }
  const double* val(std::uint32_t id) const { return values_.data() + nodes_[id].off; }
  std::uint32_t push_list(std::span<const Var> parts);

  std::span<const double> params_;
  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<std::uint32_t> list_;
  std::size_t degenerate_cosines_ = 0;
};

}  // namespace mwpcl::nn
