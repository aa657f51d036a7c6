#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "hetcal/matrix.hpp"

namespace hetcal::ad {

enum class Op : std::uint8_t {
  kLeaf,
  kAdd,           // same-shape elementwise
  kAddRow,        // (m x n) + (1 x n) row broadcast
  kSub,
  kMul,
  kDiv,
  kRelu,
  kExp,
  kLog,
  kSquare,
  kScale,         // x * scalar
  kClampMin,      // max(x, scalar)
  kMatmul,
  kMean,          // mean over all entries -> 1x1
  kCol,           // column extraction -> m x 1
};

struct Node {
  Mat value;
  Mat grad;                  // same shape as value, zero until backward
  Op op = Op::kLeaf;
  std::int32_t a = -1;       // input node ids; creation order guarantees a,b < own id
  std::int32_t b = -1;
  double c = 0.0;            // scale factor / clamp floor / column index
};

class Tape;

// Cheap handle into a tape; valid for the lifetime of the tape's current graph.
class Var {
 public:
  Var() = default;

  const Mat& value() const;
  const Mat& grad() const;
  std::int32_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::int32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::int32_t id_ = -1;
};

// Records a computation graph in creation (topological) order and replays it
// in reverse to accumulate gradients. Single-threaded by design; independent
// training runs own independent tapes. clear() keeps node buffers around, so
// rebuilding a structurally identical graph (the per-batch training pattern)
// allocates nothing.
class Tape {
 public:
  Var leaf(const Mat& value);
  Var leaf_scalar(double v);
  Var detach(Var x);  // leaf copy of x's value; cuts the gradient path

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);  // same shape, or b a 1 x n row vector broadcast over a's rows
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var relu(Var x);
  Var exp(Var x);
  Var log(Var x);
  Var square(Var x);
  Var scale(Var x, double k);
  Var clamp_min(Var x, double floor);
  Var mean(Var x);
  Var col(Var x, std::size_t j);

  // Monte-Carlo moments across M >= 2 same-shape sample nodes. Mean is the
  // arithmetic average; variance uses the population divisor M unless
  // `unbiased` asks for M-1. Both outputs carry gradients to every sample.
  std::pair<Var, Var> mean_and_variance(std::span<const Var> samples, bool unbiased = false);

  // Accumulates d(root)/d(node) into every node's grad. Root must be scalar.
  // Calling backward twice without zero_grad() in between is an error.
  void backward(Var root);

  void zero_grad();
  void clear();

  std::size_t size() const { return size_; }
  Node& node(std::int32_t id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)]; }

 private:
  // Reuses a recycled slot when one exists; value contents are left for the
  // caller to overwrite, grad comes back zeroed.
  Node& alloc_node(Op op, std::int32_t a, std::int32_t b, double c, std::size_t rows,
                   std::size_t cols);
  Var unary(Op op, Var x, double c = 0.0);
  Var binary(Op op, Var a, Var b);
  void check_owned(Var v) const;

  std::vector<Node> nodes_;
  std::size_t size_ = 0;  // logical node count; nodes_ beyond it are recycled storage
  bool backward_done_ = false;
};

inline const Mat& Var::value() const { return tape_->node(id_).value; }
inline const Mat& Var::grad() const { return tape_->node(id_).grad; }

}  // namespace hetcal::ad
