#pragma once

#include <functional>
#include <vector>

#include "sphynx/array.hpp"

namespace sphynx::ad {

class Tape;

// Lightweight handle into a tape. Valid only for the tape that produced it.
struct Var {
  int id = -1;
};

// Reverse-mode tape over dense Arrays. Ops append nodes (so node ids are a
// topological order) and record a pull-back closure; backward() walks the
// tape once in reverse.
class Tape {
 public:
  Var leaf(Array value, bool requires_grad = false);

  Var matmul(Var a, Var b);                 // [m,k] x [k,n]
  Var add(Var a, Var b);                    // same shape, or b a row bias [n]
  Var sub(Var a, Var b);                    // same shape
  Var mul(Var a, Var b);                    // same shape, elementwise
  Var scale(Var x, Var s);                  // s scalar, broadcasts over x
  Var mul_const(Var x, double k);
  Var relu(Var x);                          // subgradient 0 at the kink
  Var softmax(Var x);                       // row-wise on rank 2, else whole
  Var logv(Var x);
  Var mean(Var x);                          // scalar
  Var sum(Var x);                           // scalar
  // Mean over the batch of -log softmax(logits)[label].
  Var cross_entropy(Var logits, const std::vector<int>& labels);

  // Raw node constructor for ops defined outside this file (gumbel).
  Var raw(Array value, bool requires_grad, std::vector<int> parents,
          std::function<void(Tape&, int)> backward);

  void backward(Var root) { backward_seeded(root, 1.0); }
  // Seed the root (a scalar) with an arbitrary upstream gradient.
  void backward_seeded(Var root, double seed);

  const Array& value(Var v) const { return nodes_[v.id].value; }
  bool has_grad(Var v) const { return nodes_[v.id].grad_live; }
  const Array& grad(Var v) const;
  Array& grad_mut(int id);
  bool requires_grad(int id) const { return nodes_[id].needs_grad; }
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Array value;
    Array grad;
    bool needs_grad = false;
    bool grad_live = false;
    std::vector<int> parents;
    std::function<void(Tape&, int)> backward;
  };
  std::vector<Node> nodes_;

  int push(Array value, bool needs, std::vector<int> parents,
           std::function<void(Tape&, int)> backward);
  friend std::vector<double> softmax_rows(const Array&);
};

// Plain-array helpers shared with the search code.
void softmax_inplace(std::vector<double>& v);
std::vector<double> softmax_copy(const std::vector<double>& v);

// Distillation objective: cross-entropy plus the mean over the batch of the
// squared distance between student and teacher logits. Exactly cross-entropy
// when the teacher matches the student.
Var kd_loss(Tape& t, Var student_logits, const Array& teacher_logits,
            const std::vector<int>& labels);

}  // namespace sphynx::ad
