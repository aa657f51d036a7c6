#include "hetcal/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include "hetcal/errors.hpp"

namespace hetcal::ad {

Node& Tape::alloc_node(Op op, std::int32_t a, std::int32_t b, double c, std::size_t rows,
                       std::size_t cols) {
  if (size_ == nodes_.size()) nodes_.emplace_back();
  Node& n = nodes_[size_++];
  n.op = op;
  n.a = a;
  n.b = b;
  n.c = c;
  n.value.resize(rows, cols);
  n.grad.resize(rows, cols);
  n.grad.zero();
  return n;
}

void Tape::check_owned(Var v) const {
  if (v.tape() != this || v.id() < 0 || v.id() >= static_cast<std::int32_t>(size_))
    throw std::logic_error("Var does not belong to this tape");
}

Var Tape::leaf(const Mat& value) {
  Node& n = alloc_node(Op::kLeaf, -1, -1, 0.0, value.rows(), value.cols());
  n.value = value;
  return Var(this, static_cast<std::int32_t>(size_ - 1));
}

Var Tape::leaf_scalar(double v) {
  Node& n = alloc_node(Op::kLeaf, -1, -1, 0.0, 1, 1);
  n.value(0, 0) = v;
  return Var(this, static_cast<std::int32_t>(size_ - 1));
}

Var Tape::detach(Var x) {
  check_owned(x);
  const std::size_t rows = node(x.id()).value.rows();
  const std::size_t cols = node(x.id()).value.cols();
  Node& n = alloc_node(Op::kLeaf, -1, -1, 0.0, rows, cols);
  n.value = node(x.id()).value;
  return Var(this, static_cast<std::int32_t>(size_ - 1));
}

Var Tape::unary(Op op, Var x, double c) {
  check_owned(x);
  const std::int32_t xid = x.id();
  const std::size_t in_rows = node(xid).value.rows();
  const std::size_t in_cols = node(xid).value.cols();

  std::size_t out_rows = in_rows, out_cols = in_cols;
  if (op == Op::kMean) {
    if (in_rows * in_cols == 0) throw DomainError("mean of empty matrix");
    out_rows = out_cols = 1;
  } else if (op == Op::kCol) {
    if (static_cast<std::size_t>(c) >= in_cols) throw ShapeError("column index out of range");
    out_cols = 1;
  }

  Node& n = alloc_node(op, xid, -1, c, out_rows, out_cols);
  const Mat& v = node(xid).value;
  auto& out = n.value.storage();
  const auto& in = v.storage();
  switch (op) {
    case Op::kRelu:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
      break;
    case Op::kExp:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::exp(in[i]);
      break;
    case Op::kLog:
      for (std::size_t i = 0; i < in.size(); ++i) {
        if (!(in[i] > 0.0)) throw DomainError("log of non-positive entry");
        out[i] = std::log(in[i]);
      }
      break;
    case Op::kSquare:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * in[i];
      break;
    case Op::kScale:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = c * in[i];
      break;
    case Op::kClampMin:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > c ? in[i] : c;
      break;
    case Op::kMean: {
      double s = 0.0;
      for (double x_i : in) s += x_i;
      n.value(0, 0) = s / static_cast<double>(in.size());
      break;
    }
    case Op::kCol: {
      const auto j = static_cast<std::size_t>(c);
      for (std::size_t i = 0; i < in_rows; ++i) n.value(i, 0) = v(i, j);
      break;
    }
    default:
      throw std::logic_error("unary: bad op");
  }
  return Var(this, static_cast<std::int32_t>(size_ - 1));
}

Var Tape::binary(Op op, Var a, Var b) {
  check_owned(a);
  check_owned(b);
  const std::int32_t aid = a.id(), bid = b.id();
  const std::size_t rows = node(aid).value.rows();
  const std::size_t cols = node(aid).value.cols();

  if (op == Op::kAddRow) {
    if (node(bid).value.rows() != 1 || node(bid).value.cols() != cols)
      throw ShapeError("row broadcast expects 1x" + std::to_string(cols) + ", got " +
                       node(bid).value.shape_str());
    Node& n = alloc_node(op, aid, bid, 0.0, rows, cols);
    const Mat& va = node(aid).value;
    const Mat& vb = node(bid).value;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) n.value(i, j) = va(i, j) + vb(0, j);
    return Var(this, static_cast<std::int32_t>(size_ - 1));
  }

  if (!node(aid).value.same_shape(node(bid).value))
    throw ShapeError("elementwise op on mismatched shapes " + node(aid).value.shape_str() +
                     " vs " + node(bid).value.shape_str());
  Node& n = alloc_node(op, aid, bid, 0.0, rows, cols);
  auto& out = n.value.storage();
  const auto& xa = node(aid).value.storage();
  const auto& xb = node(bid).value.storage();
  switch (op) {
    case Op::kAdd:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = xa[i] + xb[i];
      break;
    case Op::kSub:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = xa[i] - xb[i];
      break;
    case Op::kMul:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = xa[i] * xb[i];
      break;
    case Op::kDiv:
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (xb[i] == 0.0) throw DomainError("division by zero entry");
        out[i] = xa[i] / xb[i];
      }
      break;
    default:
      throw std::logic_error("binary: bad op");
  }
  return Var(this, static_cast<std::int32_t>(size_ - 1));
}

Var Tape::matmul(Var a, Var b) {
  check_owned(a);
  check_owned(b);
  const std::int32_t aid = a.id(), bid = b.id();
  if (node(aid).value.cols() != node(bid).value.rows())
    throw ShapeError("matmul: inner dimensions disagree: " + node(aid).value.shape_str() + " * " +
                     node(bid).value.shape_str());
  Node& n = alloc_node(Op::kMatmul, aid, bid, 0.0, node(aid).value.rows(),
                       node(bid).value.cols());
  matmul_into(n.value, node(aid).value, node(bid).value);
  return Var(this, static_cast<std::int32_t>(size_ - 1));
}

Var Tape::add(Var a, Var b) {
  const Mat& va = node(a.id()).value;
  const Mat& vb = node(b.id()).value;
  if (!va.same_shape(vb) && vb.rows() == 1 && va.rows() > 1 && vb.cols() == va.cols())
    return binary(Op::kAddRow, a, b);
  return binary(Op::kAdd, a, b);
}

Var Tape::sub(Var a, Var b) { return binary(Op::kSub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(Op::kMul, a, b); }
Var Tape::div(Var a, Var b) { return binary(Op::kDiv, a, b); }
Var Tape::relu(Var x) { return unary(Op::kRelu, x); }
Var Tape::exp(Var x) { return unary(Op::kExp, x); }
Var Tape::log(Var x) { return unary(Op::kLog, x); }
Var Tape::square(Var x) { return unary(Op::kSquare, x); }
Var Tape::scale(Var x, double k) { return unary(Op::kScale, x, k); }
Var Tape::clamp_min(Var x, double floor) { return unary(Op::kClampMin, x, floor); }
Var Tape::mean(Var x) { return unary(Op::kMean, x); }
Var Tape::col(Var x, std::size_t j) { return unary(Op::kCol, x, static_cast<double>(j)); }

std::pair<Var, Var> Tape::mean_and_variance(std::span<const Var> samples, bool unbiased) {
  const std::size_t m = samples.size();
  if (m < 2) throw ConfigError("mean_and_variance requires at least 2 samples");
  for (Var s : samples) check_owned(s);
  for (Var s : samples)
    if (!node(s.id()).value.same_shape(node(samples[0].id()).value))
      throw ShapeError("mean_and_variance: sample shapes differ");

  Var acc = samples[0];
  for (std::size_t j = 1; j < m; ++j) acc = add(acc, samples[j]);
  Var mu = scale(acc, 1.0 / static_cast<double>(m));

  Var sq_acc = square(sub(samples[0], mu));
  for (std::size_t j = 1; j < m; ++j) sq_acc = add(sq_acc, square(sub(samples[j], mu)));
  const double divisor = unbiased ? static_cast<double>(m - 1) : static_cast<double>(m);
  Var var = scale(sq_acc, 1.0 / divisor);
  return {mu, var};
}

void Tape::backward(Var root) {
  check_owned(root);
  if (backward_done_)
    throw std::logic_error("backward already run on this tape; call zero_grad() first");
  const Node& r = node(root.id());
  if (r.value.rows() != 1 || r.value.cols() != 1)
    throw ShapeError("backward root must be scalar, got " + r.value.shape_str());
  backward_done_ = true;

  nodes_[static_cast<std::size_t>(root.id())].grad(0, 0) += 1.0;

  for (std::int32_t id = root.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.op == Op::kLeaf) continue;
    const Mat& g = n.grad;
    Mat& ga = nodes_[static_cast<std::size_t>(n.a)].grad;
    const Mat& va = nodes_[static_cast<std::size_t>(n.a)].value;
    switch (n.op) {
      case Op::kAdd: {
        Mat& gb = nodes_[static_cast<std::size_t>(n.b)].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga.storage()[i] += g.storage()[i];
          gb.storage()[i] += g.storage()[i];
        }
        break;
      }
      case Op::kAddRow: {
        Mat& gb = nodes_[static_cast<std::size_t>(n.b)].grad;
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) {
            ga(i, j) += g(i, j);
            gb(0, j) += g(i, j);
          }
        break;
      }
      case Op::kSub: {
        Mat& gb = nodes_[static_cast<std::size_t>(n.b)].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga.storage()[i] += g.storage()[i];
          gb.storage()[i] -= g.storage()[i];
        }
        break;
      }
      case Op::kMul: {
        Mat& gb = nodes_[static_cast<std::size_t>(n.b)].grad;
        const Mat& vb = nodes_[static_cast<std::size_t>(n.b)].value;
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga.storage()[i] += g.storage()[i] * vb.storage()[i];
          gb.storage()[i] += g.storage()[i] * va.storage()[i];
        }
        break;
      }
      case Op::kDiv: {
        Mat& gb = nodes_[static_cast<std::size_t>(n.b)].grad;
        const Mat& vb = nodes_[static_cast<std::size_t>(n.b)].value;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double inv = 1.0 / vb.storage()[i];
          ga.storage()[i] += g.storage()[i] * inv;
          gb.storage()[i] -= g.storage()[i] * va.storage()[i] * inv * inv;
        }
        break;
      }
      case Op::kRelu:
        // derivative at exactly 0 is defined as 0
        for (std::size_t i = 0; i < g.size(); ++i)
          if (va.storage()[i] > 0.0) ga.storage()[i] += g.storage()[i];
        break;
      case Op::kExp:
        for (std::size_t i = 0; i < g.size(); ++i)
          ga.storage()[i] += g.storage()[i] * n.value.storage()[i];
        break;
      case Op::kLog:
        for (std::size_t i = 0; i < g.size(); ++i)
          ga.storage()[i] += g.storage()[i] / va.storage()[i];
        break;
      case Op::kSquare:
        for (std::size_t i = 0; i < g.size(); ++i)
          ga.storage()[i] += 2.0 * g.storage()[i] * va.storage()[i];
        break;
      case Op::kScale:
        for (std::size_t i = 0; i < g.size(); ++i) ga.storage()[i] += n.c * g.storage()[i];
        break;
      case Op::kClampMin:
        for (std::size_t i = 0; i < g.size(); ++i)
          if (va.storage()[i] > n.c) ga.storage()[i] += g.storage()[i];
        break;
      case Op::kMatmul: {
        Mat& gb = nodes_[static_cast<std::size_t>(n.b)].grad;
        const Mat& vb = nodes_[static_cast<std::size_t>(n.b)].value;
        add_matmul_nt(ga, g, vb);  // ga += g * vb^T
        add_matmul_tn(gb, va, g);  // gb += va^T * g
        break;
      }
      case Op::kMean: {
        const double s = g(0, 0) / static_cast<double>(va.size());
        for (std::size_t i = 0; i < va.size(); ++i) ga.storage()[i] += s;
        break;
      }
      case Op::kCol: {
        const auto j = static_cast<std::size_t>(n.c);
        for (std::size_t i = 0; i < g.rows(); ++i) ga(i, j) += g(i, 0);
        break;
      }
      case Op::kLeaf:
        break;
    }
  }
}

void Tape::zero_grad() {
  for (std::size_t i = 0; i < size_; ++i) nodes_[i].grad.zero();
  backward_done_ = false;
}

void Tape::clear() {
  size_ = 0;
  backward_done_ = false;
}

}  // namespace hetcal::ad
