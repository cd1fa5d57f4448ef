#include "mwpcl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mwpcl::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("tape: ") + what);
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void Tape::clear() {
  nodes_.clear();
  values_.clear();
  grads_.clear();
  list_.clear();
  degenerate_cosines_ = 0;
}

const Tape::Node& Tape::at(Var v) const {
  require(v.valid() && v.id < nodes_.size(), "invalid variable");
  return nodes_[v.id];
}

std::span<const double> Tape::value(Var v) const {
  const Node& n = at(v);
  return {values_.data() + n.off, n.n};
}

double Tape::scalar(Var v) const {
  const Node& n = at(v);
  require(n.n == 1, "scalar() on a non-scalar");
  return values_[n.off];
}

std::size_t Tape::dim(Var v) const { return at(v).n; }

std::vector<double> Tape::copy(Var v) const {
  auto s = value(v);
  return {s.begin(), s.end()};
}

std::uint32_t Tape::alloc(std::size_t n) {
  const auto off = static_cast<std::uint32_t>(values_.size());
  values_.resize(values_.size() + n, 0.0);
  return off;
}

Var Tape::push(Node node) {
  nodes_.push_back(node);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

std::uint32_t Tape::push_list(std::span<const Var> parts) {
  const auto begin = static_cast<std::uint32_t>(list_.size());
  for (Var v : parts) {
    at(v);
    list_.push_back(v.id);
  }
  return begin;
}

Var Tape::constant(std::span<const double> values) {
  const auto off = alloc(values.size());
  std::copy(values.begin(), values.end(), values_.begin() + off);
  return push(Node{Kind::Constant, off, static_cast<std::uint32_t>(values.size())});
}

Var Tape::zeros(std::size_t n) {
  const auto off = alloc(n);
  return push(Node{Kind::Constant, off, static_cast<std::uint32_t>(n)});
}

Var Tape::param(const ParamRef& p) {
  require(p.offset + p.size() <= params_.size(), "parameter out of range");
  const auto off = alloc(p.size());
  std::copy_n(params_.begin() + static_cast<std::ptrdiff_t>(p.offset), p.size(), values_.begin() + off);
  Node node{Kind::Param, off, static_cast<std::uint32_t>(p.size())};
  node.p0 = p.offset;
  return push(node);
}

Var Tape::linear(const ParamRef& w, Var x) { return linear(w, x, ParamRef{SIZE_MAX, 0, 0}); }

Var Tape::linear(const ParamRef& w, Var x, const ParamRef& bias) {
  const Node& xn = at(x);
  require(xn.n == w.cols, "linear: input size mismatch");
  require(w.offset + w.size() <= params_.size(), "linear: weight out of range");
  const bool has_bias = bias.offset != SIZE_MAX;
  if (has_bias) require(bias.size() == w.rows && bias.offset + bias.size() <= params_.size(), "linear: bias mismatch");
  const std::uint32_t x_off = xn.off;
  const auto off = alloc(w.rows);
  const double* W = params_.data() + w.offset;
  const double* in = values_.data() + x_off;
  double* out = values_.data() + off;
  for (std::size_t r = 0; r < w.rows; ++r) {
    double acc = has_bias ? params_[bias.offset + r] : 0.0;
    const double* row = W + r * w.cols;
    for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * in[c];
    out[r] = acc;
  }
  Node node{Kind::Linear, off, static_cast<std::uint32_t>(w.rows), x.id};
  node.p0 = w.offset;
  node.p1 = has_bias ? bias.offset : SIZE_MAX;
  node.rows = w.rows;
  node.cols = w.cols;
  return push(node);
}

#define MWPCL_BINARY(NAME, KIND, EXPR)                                 \
  Var Tape::NAME(Var a, Var b) {                                      \
    const std::uint32_t n = at(a).n;                                  \
    require(n == at(b).n, #NAME ": size mismatch");                   \
    const auto off = alloc(n);                                        \
    const double* x = val(a.id);                                      \
    const double* y = val(b.id);                                      \
    double* z = values_.data() + off;                                 \
    for (std::uint32_t i = 0; i < n; ++i) z[i] = (EXPR);              \
    return push(Node{Kind::KIND, off, n, a.id, b.id});                \
  }

MWPCL_BINARY(add, Add, x[i] + y[i])
MWPCL_BINARY(sub, Sub, x[i] - y[i])
MWPCL_BINARY(mul, Mul, x[i] * y[i])
#undef MWPCL_BINARY

#define MWPCL_UNARY(NAME, KIND, EXPR)                     \
  Var Tape::NAME(Var a) {                                \
    const std::uint32_t n = at(a).n;                     \
    const auto off = alloc(n);                           \
    const double* x = val(a.id);                         \
    double* z = values_.data() + off;                    \
    for (std::uint32_t i = 0; i < n; ++i) z[i] = (EXPR); \
    return push(Node{Kind::KIND, off, n, a.id});         \
  }

MWPCL_UNARY(tanh, Tanh, std::tanh(x[i]))
MWPCL_UNARY(sigmoid, Sigmoid, sigmoid_scalar(x[i]))
MWPCL_UNARY(relu, Relu, x[i] > 0.0 ? x[i] : 0.0)
#undef MWPCL_UNARY

Var Tape::scale(Var a, double k) {
  const std::uint32_t n = at(a).n;
  const auto off = alloc(n);
  const double* x = val(a.id);
  double* z = values_.data() + off;
  for (std::uint32_t i = 0; i < n; ++i) z[i] = k * x[i];
  Node node{Kind::Scale, off, n, a.id};
  node.k = k;
  return push(node);
}

Var Tape::slice(Var a, std::size_t begin, std::size_t n) {
  require(begin + n <= at(a).n, "slice out of range");
  const auto off = alloc(n);
  std::copy_n(val(a.id) + begin, n, values_.begin() + off);
  Node node{Kind::Slice, off, static_cast<std::uint32_t>(n), a.id};
  node.rows = begin;
  return push(node);
}

Var Tape::concat(std::span<const Var> parts) {
  std::size_t total = 0;
  for (Var v : parts) total += at(v).n;
  const auto lb = push_list(parts);
  const auto off = alloc(total);
  std::size_t pos = off;
  for (Var v : parts) {
    const Node& p = nodes_[v.id];
    std::copy_n(values_.begin() + p.off, p.n, values_.begin() + static_cast<std::ptrdiff_t>(pos));
    pos += p.n;
  }
  Node node{Kind::Concat, off, static_cast<std::uint32_t>(total)};
  node.list_begin = lb;
  node.list_count = static_cast<std::uint32_t>(parts.size());
  return push(node);
}

Var Tape::mean(std::span<const Var> parts) {
  require(!parts.empty(), "mean of nothing");
  const std::uint32_t n = at(parts[0]).n;
  for (Var v : parts) require(at(v).n == n, "mean: size mismatch");
  const auto lb = push_list(parts);
  const auto off = alloc(n);
  double* z = values_.data() + off;
  for (Var v : parts) {
    const double* x = val(v.id);
    for (std::uint32_t i = 0; i < n; ++i) z[i] += x[i];
  }
  const double inv = 1.0 / static_cast<double>(parts.size());
  for (std::uint32_t i = 0; i < n; ++i) z[i] *= inv;
  Node node{Kind::Mean, off, n};
  node.list_begin = lb;
  node.list_count = static_cast<std::uint32_t>(parts.size());
  node.k = inv;
  return push(node);
}

Var Tape::sum(std::span<const Var> parts) {
  require(!parts.empty(), "sum of nothing");
  const std::uint32_t n = at(parts[0]).n;
  for (Var v : parts) require(at(v).n == n, "sum: size mismatch");
  const auto lb = push_list(parts);
  const auto off = alloc(n);
  double* z = values_.data() + off;
  for (Var v : parts) {
    const double* x = val(v.id);
    for (std::uint32_t i = 0; i < n; ++i) z[i] += x[i];
  }
  Node node{Kind::Sum, off, n};
  node.list_begin = lb;
  node.list_count = static_cast<std::uint32_t>(parts.size());
  return push(node);
}

Var Tape::stack(std::span<const Var> scalars) {
  for (Var v : scalars) require(at(v).n == 1, "stack: operands must be scalars");
  const auto lb = push_list(scalars);
  const auto off = alloc(scalars.size());
  for (std::size_t i = 0; i < scalars.size(); ++i) values_[off + i] = values_[nodes_[scalars[i].id].off];
  Node node{Kind::Stack, off, static_cast<std::uint32_t>(scalars.size())};
  node.list_begin = lb;
  node.list_count = static_cast<std::uint32_t>(scalars.size());
  return push(node);
}

Var Tape::dot(Var a, Var b) {
  const std::uint32_t n = at(a).n;
  require(n == at(b).n, "dot: size mismatch");
  const auto off = alloc(1);
  const double* x = val(a.id);
  const double* y = val(b.id);
  double acc = 0.0;
  for (std::uint32_t i = 0; i < n; ++i) acc += x[i] * y[i];
  values_[off] = acc;
  return push(Node{Kind::Dot, off, 1, a.id, b.id});
}

Var Tape::cosine(Var a, Var b) {
  const std::uint32_t n = at(a).n;
  require(n == at(b).n, "cosine: size mismatch");
  const auto off = alloc(1);
  const double* x = val(a.id);
  const double* y = val(b.id);
  double xy = 0.0;
  double xx = 0.0;
  double yy = 0.0;
  for (std::uint32_t i = 0; i < n; ++i) {
    xy += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  if (xx == 0.0 || yy == 0.0) {
    ++degenerate_cosines_;
    values_[off] = 0.0;
  } else {
    values_[off] = xy / std::sqrt(xx * yy);
  }
  return push(Node{Kind::Cosine, off, 1, a.id, b.id});
}

Var Tape::softmax(Var a) {
  const std::uint32_t n = at(a).n;
  require(n > 0, "softmax of empty vector");
  const auto off = alloc(n);
  const double* x = val(a.id);
  double* z = values_.data() + off;
  const double m = *std::max_element(x, x + n);
  double total = 0.0;
  for (std::uint32_t i = 0; i < n; ++i) total += (z[i] = std::exp(x[i] - m));
  for (std::uint32_t i = 0; i < n; ++i) z[i] /= total;
  return push(Node{Kind::Softmax, off, n, a.id});
}

Var Tape::log_softmax(Var a) {
  const std::uint32_t n = at(a).n;
  require(n > 0, "log_softmax of empty vector");
  const auto off = alloc(n);
  const double* x = val(a.id);
  double* z = values_.data() + off;
  const double m = *std::max_element(x, x + n);
  double total = 0.0;
  for (std::uint32_t i = 0; i < n; ++i) total += std::exp(x[i] - m);
  const double lse = m + std::log(total);
  for (std::uint32_t i = 0; i < n; ++i) z[i] = x[i] - lse;
  return push(Node{Kind::LogSoftmax, off, n, a.id});
}

Var Tape::pick(Var a, std::size_t index) {
  require(index < at(a).n, "pick out of range");
  const auto off = alloc(1);
  values_[off] = val(a.id)[index];
  Node node{Kind::Pick, off, 1, a.id};
  node.rows = index;
  return push(node);
}

Var Tape::weighted_sum(Var weights, std::span<const Var> parts) {
  require(at(weights).n == parts.size() && !parts.empty(), "weighted_sum: weight count mismatch");
  const std::uint32_t n = at(parts[0]).n;
  for (Var v : parts) require(at(v).n == n, "weighted_sum: size mismatch");
  const auto lb = push_list(parts);
  const auto off = alloc(n);
  double* z = values_.data() + off;
  const double* w = val(weights.id);
  for (std::size_t j = 0; j < parts.size(); ++j) {
    const double* x = val(parts[j].id);
    for (std::uint32_t i = 0; i < n; ++i) z[i] += w[j] * x[i];
  }
  Node node{Kind::WeightedSum, off, n, weights.id};
  node.list_begin = lb;
  node.list_count = static_cast<std::uint32_t>(parts.size());
  return push(node);
}

Var Tape::gru(Var gates_x, Var gates_h, Var h_prev) {
  const std::uint32_t h = at(h_prev).n;
  require(at(gates_x).n == 3 * h && at(gates_h).n == 3 * h, "gru: gate size mismatch");
  const auto off = alloc(h);
  const double* gx = val(gates_x.id);
  const double* gh = val(gates_h.id);
  const double* hp = val(h_prev.id);
  double* out = values_.data() + off;
  for (std::uint32_t i = 0; i < h; ++i) {
    const double r = sigmoid_scalar(gx[i] + gh[i]);
    const double z = sigmoid_scalar(gx[h + i] + gh[h + i]);
    const double cand = std::tanh(gx[2 * h + i] + r * gh[2 * h + i]);
    out[i] = (1.0 - z) * cand + z * hp[i];
  }
  return push(Node{Kind::Gru, off, h, gates_x.id, gates_h.id, h_prev.id});
}

Var Tape::gated_tanh(Var u) {
  const std::uint32_t n2 = at(u).n;
  require(n2 % 2 == 0, "gated_tanh: odd input size");
  const std::uint32_t m = n2 / 2;
  const auto off = alloc(m);
  const double* x = val(u.id);
  double* z = values_.data() + off;
  for (std::uint32_t i = 0; i < m; ++i) z[i] = sigmoid_scalar(x[i]) * std::tanh(x[m + i]);
  return push(Node{Kind::GatedTanh, off, m, u.id});
}

void Tape::backward(Var loss, std::span<double> param_grad) {
  require(at(loss).n == 1, "backward from a non-scalar");
  require(param_grad.size() >= params_.size(), "gradient buffer too small");
  grads_.assign(values_.size(), 0.0);
  grads_[nodes_[loss.id].off] = 1.0;

  for (std::size_t idx = loss.id + 1; idx-- > 0;) {
    const Node& node = nodes_[idx];
    const double* g = grads_.data() + node.off;
    const double* y = values_.data() + node.off;
    const std::uint32_t n = node.n;
    bool any = false;
    for (std::uint32_t i = 0; i < n; ++i) {
      if (g[i] != 0.0) {
        any = true;
        break;
      }
    }
    if (!any) continue;

    auto grad_of = [&](std::uint32_t id) { return grads_.data() + nodes_[id].off; };
    auto value_of = [&](std::uint32_t id) { return values_.data() + nodes_[id].off; };

    switch (node.kind) {
      case Kind::Constant: break;
      case Kind::Param:
        for (std::uint32_t i = 0; i < n; ++i) param_grad[node.p0 + i] += g[i];
        break;
      case Kind::Linear: {
        const double* W = params_.data() + node.p0;
        double* gW = param_grad.data() + node.p0;
        const double* x = value_of(node.a);
        double* gx = grad_of(node.a);
        for (std::size_t r = 0; r < node.rows; ++r) {
          const double gr = g[r];
          if (gr == 0.0) continue;
          const double* row = W + r * node.cols;
          double* grow = gW + r * node.cols;
          for (std::size_t c = 0; c < node.cols; ++c) {
            gx[c] += row[c] * gr;
            grow[c] += gr * x[c];
          }
        }
        if (node.p1 != SIZE_MAX) {
          for (std::size_t r = 0; r < node.rows; ++r) param_grad[node.p1 + r] += g[r];
        }
        break;
      }
      case Kind::Add: {
        double* ga = grad_of(node.a);
        double* gb = grad_of(node.b);
        for (std::uint32_t i = 0; i < n; ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Kind::Sub: {
        double* ga = grad_of(node.a);
        double* gb = grad_of(node.b);
        for (std::uint32_t i = 0; i < n; ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      }
      case Kind::Mul: {
        const double* xa = value_of(node.a);
        const double* xb = value_of(node.b);
        double* ga = grad_of(node.a);
        double* gb = grad_of(node.b);
        for (std::uint32_t i = 0; i < n; ++i) {
          ga[i] += g[i] * xb[i];
          gb[i] += g[i] * xa[i];
        }
        break;
      }
      case Kind::Scale: {
        double* ga = grad_of(node.a);
        for (std::uint32_t i = 0; i < n; ++i) ga[i] += node.k * g[i];
        break;
      }
      case Kind::Tanh: {
        double* ga = grad_of(node.a);
        for (std::uint32_t i = 0; i < n; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Kind::Sigmoid: {
        double* ga = grad_of(node.a);
        for (std::uint32_t i = 0; i < n; ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case Kind::Relu: {
        const double* x = value_of(node.a);
        double* ga = grad_of(node.a);
        for (std::uint32_t i = 0; i < n; ++i) {
          if (x[i] > 0.0) ga[i] += g[i];
        }
        break;
      }
      case Kind::Slice: {
        double* ga = grad_of(node.a) + node.rows;
        for (std::uint32_t i = 0; i < n; ++i) ga[i] += g[i];
        break;
      }
      case Kind::Concat: {
        std::size_t pos = 0;
        for (std::uint32_t j = 0; j < node.list_count; ++j) {
          const std::uint32_t id = list_[node.list_begin + j];
          double* gp = grad_of(id);
          for (std::uint32_t i = 0; i < nodes_[id].n; ++i) gp[i] += g[pos + i];
          pos += nodes_[id].n;
        }
        break;
      }
      case Kind::Mean:
      case Kind::Sum: {
        const double k = node.kind == Kind::Mean ? node.k : 1.0;
        for (std::uint32_t j = 0; j < node.list_count; ++j) {
          double* gp = grad_of(list_[node.list_begin + j]);
          for (std::uint32_t i = 0; i < n; ++i) gp[i] += k * g[i];
        }
        break;
      }
      case Kind::Stack:
        for (std::uint32_t j = 0; j < node.list_count; ++j) grad_of(list_[node.list_begin + j])[0] += g[j];
        break;
      case Kind::Dot: {
        const std::uint32_t m = nodes_[node.a].n;
        const double* xa = value_of(node.a);
        const double* xb = value_of(node.b);
        double* ga = grad_of(node.a);
        double* gb = grad_of(node.b);
        for (std::uint32_t i = 0; i < m; ++i) {
          ga[i] += g[0] * xb[i];
          gb[i] += g[0] * xa[i];
        }
        break;
      }
      case Kind::Cosine: {
        const std::uint32_t m = nodes_[node.a].n;
        const double* xa = value_of(node.a);
        const double* xb = value_of(node.b);
        double aa = 0.0;
        double bb = 0.0;
        for (std::uint32_t i = 0; i < m; ++i) {
          aa += xa[i] * xa[i];
          bb += xb[i] * xb[i];
        }
        if (aa == 0.0 || bb == 0.0) break;
        const double na = std::sqrt(aa);
        const double nb = std::sqrt(bb);
        const double cos = y[0];
        double* ga = grad_of(node.a);
        double* gb = grad_of(node.b);
        for (std::uint32_t i = 0; i < m; ++i) {
          ga[i] += g[0] * (xb[i] / (na * nb) - cos * xa[i] / aa);
          gb[i] += g[0] * (xa[i] / (na * nb) - cos * xb[i] / bb);
        }
        break;
      }
      case Kind::Softmax: {
        double dotgy = 0.0;
        for (std::uint32_t i = 0; i < n; ++i) dotgy += g[i] * y[i];
        double* ga = grad_of(node.a);
        for (std::uint32_t i = 0; i < n; ++i) ga[i] += y[i] * (g[i] - dotgy);
        break;
      }
      case Kind::LogSoftmax: {
        double total = 0.0;
        for (std::uint32_t i = 0; i < n; ++i) total += g[i];
        double* ga = grad_of(node.a);
        for (std::uint32_t i = 0; i < n; ++i) ga[i] += g[i] - std::exp(y[i]) * total;
        break;
      }
      case Kind::Pick:
        grad_of(node.a)[node.rows] += g[0];
        break;
      case Kind::WeightedSum: {
        const double* w = value_of(node.a);
        double* gw = grad_of(node.a);
        for (std::uint32_t j = 0; j < node.list_count; ++j) {
          const std::uint32_t id = list_[node.list_begin + j];
          const double* x = value_of(id);
          double* gx = grad_of(id);
          double acc = 0.0;
          for (std::uint32_t i = 0; i < n; ++i) {
            acc += g[i] * x[i];
            gx[i] += w[j] * g[i];
          }
          gw[j] += acc;
        }
        break;
      }
      case Kind::Gru: {
        const double* gx = value_of(node.a);
        const double* gh = value_of(node.b);
        const double* hp = value_of(node.c);
        double* dgx = grad_of(node.a);
        double* dgh = grad_of(node.b);
        double* dhp = grad_of(node.c);
        for (std::uint32_t i = 0; i < n; ++i) {
          const double r = sigmoid_scalar(gx[i] + gh[i]);
          const double z = sigmoid_scalar(gx[n + i] + gh[n + i]);
          const double cand = std::tanh(gx[2 * n + i] + r * gh[2 * n + i]);
          const double dcand = g[i] * (1.0 - z) * (1.0 - cand * cand);
          const double dz = g[i] * (hp[i] - cand) * z * (1.0 - z);
          const double dr = dcand * gh[2 * n + i] * r * (1.0 - r);
          dhp[i] += g[i] * z;
          dgx[2 * n + i] += dcand;
          dgh[2 * n + i] += dcand * r;
          dgx[n + i] += dz;
          dgh[n + i] += dz;
          dgx[i] += dr;
          dgh[i] += dr;
        }
        break;
      }
      case Kind::GatedTanh: {
        const double* x = value_of(node.a);
        double* gu = grad_of(node.a);
        for (std::uint32_t i = 0; i < n; ++i) {
          const double s = sigmoid_scalar(x[i]);
          const double t = std::tanh(x[n + i]);
          gu[i] += g[i] * t * s * (1.0 - s);
          gu[n + i] += g[i] * s * (1.0 - t * t);
        }
        break;
      }
    }
  }
}

}  // namespace mwpcl::nn
