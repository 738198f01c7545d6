#include "sphynx/autograd.hpp"

#include <cmath>
#include <stdexcept>

#include "sphynx/kernels.hpp"

namespace sphynx::ad {

int Tape::push(Array value, bool needs, std::vector<int> parents,
               std::function<void(Tape&, int)> backward) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs;
  n.parents = std::move(parents);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::leaf(Array value, bool requires_grad) {
  return {push(std::move(value), requires_grad, {}, nullptr)};
}

Var Tape::raw(Array value, bool requires_grad, std::vector<int> parents,
              std::function<void(Tape&, int)> backward) {
  return {push(std::move(value), requires_grad, std::move(parents), std::move(backward))};
}

Array& Tape::grad_mut(int id) {
  Node& n = nodes_[id];
  if (!n.grad_live) {
    n.grad = Array(n.value.shape);
    n.grad_live = true;
  }
  return n.grad;
}

const Array& Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (!n.grad_live) throw std::logic_error("grad: no gradient was accumulated");
  return n.grad;
}

void Tape::backward_seeded(Var root, double seed) {
  Node& r = nodes_[root.id];
  if (r.value.size() != 1) throw std::logic_error("backward: root must be scalar");
  grad_mut(root.id).data[0] = seed;
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.grad_live || !n.backward) continue;
    bool any = false;
    for (int p : n.parents) any = any || nodes_[p].needs_grad;
    if (any) n.backward(*this, id);
  }
}

namespace {
bool either_requires(const Tape& t, Var a, Var b) {
  return t.requires_grad(a.id) || t.requires_grad(b.id);
}
}  // namespace

Var Tape::matmul(Var a, Var b) {
  const Array& av = value(a);
  const Array& bv = value(b);
  if (av.shape.size() != 2 || bv.shape.size() != 2 || av.shape[1] != bv.shape[0])
    throw std::invalid_argument("matmul: shape mismatch");
  const int m = av.shape[0], k = av.shape[1], n = bv.shape[1];
  Array out({m, n});
  kernels::matmul(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
  auto back = [a, b, m, k, n](Tape& t, int self) {
    const Array& g = t.grad_mut(self);
    const Array& av2 = t.value(a);
    const Array& bv2 = t.value(b);
    if (t.requires_grad(a.id)) {
      // dA = g * B^T
      Array bt({n, k});
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) bt.data[static_cast<size_t>(j) * k + i] = bv2.data[static_cast<size_t>(i) * n + j];
      kernels::matmul_acc(g.data.data(), bt.data.data(), t.grad_mut(a.id).data.data(), m, n, k);
    }
    if (t.requires_grad(b.id)) {
      // dB = A^T * g
      Array at({k, m});
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) at.data[static_cast<size_t>(j) * m + i] = av2.data[static_cast<size_t>(i) * k + j];
      kernels::matmul_acc(at.data.data(), g.data.data(), t.grad_mut(b.id).data.data(), k, m, n);
    }
  };
  return {push(std::move(out), either_requires(*this, a, b), {a.id, b.id}, back)};
}

Var Tape::add(Var a, Var b) {
  const Array& av = value(a);
  const Array& bv = value(b);
  const bool bias = av.shape.size() == 2 && bv.shape.size() == 1 && bv.shape[0] == av.shape[1];
  if (!bias && !av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch");
  Array out = av;
  if (bias) {
    const int n = bv.shape[0];
    for (size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i % n];
  } else {
    for (size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
  }
  auto back = [a, b, bias](Tape& t, int self) {
    const Array& g = t.grad_mut(self);
    if (t.requires_grad(a.id)) {
      Array& ga = t.grad_mut(a.id);
      for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
    }
    if (t.requires_grad(b.id)) {
      Array& gb = t.grad_mut(b.id);
      if (bias) {
        const size_t n = gb.size();
        for (size_t i = 0; i < g.size(); ++i) gb.data[i % n] += g.data[i];
      } else {
        for (size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i];
      }
    }
  };
  return {push(std::move(out), either_requires(*this, a, b), {a.id, b.id}, back)};
}

Var Tape::sub(Var a, Var b) {
  const Array& av = value(a);
  const Array& bv = value(b);
  if (!av.same_shape(bv)) throw std::invalid_argument("sub: shape mismatch");
  Array out = av;
  for (size_t i = 0; i < out.size(); ++i) out.data[i] -= bv.data[i];
  auto back = [a, b](Tape& t, int self) {
    const Array& g = t.grad_mut(self);
    if (t.requires_grad(a.id)) {
      Array& ga = t.grad_mut(a.id);
      for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
    }
    if (t.requires_grad(b.id)) {
      Array& gb = t.grad_mut(b.id);
      for (size_t i = 0; i < g.size(); ++i) gb.data[i] -= g.data[i];
    }
  };
  return {push(std::move(out), either_requires(*this, a, b), {a.id, b.id}, back)};
}

Var Tape::mul(Var a, Var b) {
  const Array& av = value(a);
  const Array& bv = value(b);
  if (!av.same_shape(bv)) throw std::invalid_argument("mul: shape mismatch");
  Array out = av;
  for (size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
  auto back = [a, b](Tape& t, int self) {
    const Array& g = t.grad_mut(self);
    const Array& av2 = t.value(a);
    const Array& bv2 = t.value(b);
    if (t.requires_grad(a.id)) {
      Array& ga = t.grad_mut(a.id);
      for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * bv2.data[i];
    }
    if (t.requires_grad(b.id)) {
      Array& gb = t.grad_mut(b.id);
      for (size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * av2.data[i];
    }
  };
  return {push(std::move(out), either_requires(*this, a, b), {a.id, b.id}, back)};
}

Var Tape::scale(Var x, Var s) {
  const Array& xv = value(x);
  const Array& sv = value(s);
  if (sv.size() != 1) throw std::invalid_argument("scale: s must be scalar");
  Array out = xv;
  for (double& v : out.data) v *= sv.data[0];
  auto back = [x, s](Tape& t, int self) {
    const Array& g = t.grad_mut(self);
    const Array& xv2 = t.value(x);
    const double sc = t.value(s).data[0];
    if (t.requires_grad(x.id)) {
      Array& gx = t.grad_mut(x.id);
      for (size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i] * sc;
    }
    if (t.requires_grad(s.id)) {
      double acc = 0.0;
      for (size_t i = 0; i < g.size(); ++i) acc += g.data[i] * xv2.data[i];
      t.grad_mut(s.id).data[0] += acc;
    }
  };
  return {push(std::move(out), either_requires(*this, x, s), {x.id, s.id}, back)};
}

Var Tape::mul_const(Var x, double k) {
  Array out = value(x);
  for (double& v : out.data) v *= k;
  auto back = [x, k](Tape& t, int self) {
    if (!t.requires_grad(x.id)) return;
    const Array& g = t.grad_mut(self);
    Array& gx = t.grad_mut(x.id);
    for (size_t i = 0; i < g.size(); ++i) gx.data[i] += k * g.data[i];
  };
  return {push(std::move(out), requires_grad(x.id), {x.id}, back)};
}

Var Tape::relu(Var x) {
  Array out = value(x);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  auto back = [x](Tape& t, int self) {
    if (!t.requires_grad(x.id)) return;
    const Array& g = t.grad_mut(self);
    const Array& xv = t.value(x);
    Array& gx = t.grad_mut(x.id);
    for (size_t i = 0; i < g.size(); ++i)
      if (xv.data[i] > 0.0) gx.data[i] += g.data[i];
  };
  return {push(std::move(out), requires_grad(x.id), {x.id}, back)};
}

namespace {
void softmax_row(const double* x, double* y, int n) {
  double mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - mx);
    z += y[i];
  }
  for (int i = 0; i < n; ++i) y[i] /= z;
}
}  // namespace

Var Tape::softmax(Var x) {
  const Array& xv = value(x);
  const int cols = xv.shape.size() == 2 ? xv.shape[1] : static_cast<int>(xv.size());
  const int rows = static_cast<int>(xv.size()) / cols;
  Array out(xv.shape);
  for (int r = 0; r < rows; ++r)
    softmax_row(xv.data.data() + static_cast<size_t>(r) * cols,
                out.data.data() + static_cast<size_t>(r) * cols, cols);
  auto back = [x, rows, cols](Tape& t, int self) {
    if (!t.requires_grad(x.id)) return;
    const Array& g = t.grad_mut(self);
    const Array& y = t.value({self});
    Array& gx = t.grad_mut(x.id);
    for (int r = 0; r < rows; ++r) {
      const size_t off = static_cast<size_t>(r) * cols;
      double dot = 0.0;
      for (int i = 0; i < cols; ++i) dot += g.data[off + i] * y.data[off + i];
      for (int i = 0; i < cols; ++i)
        gx.data[off + i] += y.data[off + i] * (g.data[off + i] - dot);
    }
  };
  return {push(std::move(out), requires_grad(x.id), {x.id}, back)};
}

Var Tape::logv(Var x) {
  Array out = value(x);
  for (double& v : out.data) v = std::log(v);
  auto back = [x](Tape& t, int self) {
    if (!t.requires_grad(x.id)) return;
    const Array& g = t.grad_mut(self);
    const Array& xv = t.value(x);
    Array& gx = t.grad_mut(x.id);
    for (size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i] / xv.data[i];
  };
  return {push(std::move(out), requires_grad(x.id), {x.id}, back)};
}

Var Tape::mean(Var x) {
  const Array& xv = value(x);
  double acc = 0.0;
  for (double v : xv.data) acc += v;
  const double inv = 1.0 / static_cast<double>(xv.size());
  Array out = Array::scalar(acc * inv);
  auto back = [x, inv](Tape& t, int self) {
    if (!t.requires_grad(x.id)) return;
    const double g = t.grad_mut(self).data[0];
    Array& gx = t.grad_mut(x.id);
    for (double& v : gx.data) v += g * inv;
  };
  return {push(std::move(out), requires_grad(x.id), {x.id}, back)};
}

Var Tape::sum(Var x) {
  const Array& xv = value(x);
  double acc = 0.0;
  for (double v : xv.data) acc += v;
  Array out = Array::scalar(acc);
  auto back = [x](Tape& t, int self) {
    if (!t.requires_grad(x.id)) return;
    const double g = t.grad_mut(self).data[0];
    Array& gx = t.grad_mut(x.id);
    for (double& v : gx.data) v += g;
  };
  return {push(std::move(out), requires_grad(x.id), {x.id}, back)};
}

Var Tape::cross_entropy(Var logits, const std::vector<int>& labels) {
  const Array& lv = value(logits);
  if (lv.shape.size() != 2 || static_cast<size_t>(lv.shape[0]) != labels.size())
    throw std::invalid_argument("cross_entropy: logits [B,C] with B labels");
  const int b = lv.shape[0], c = lv.shape[1];
  double loss = 0.0;
  Array probs({b, c});
  for (int r = 0; r < b; ++r) {
    const double* row = lv.data.data() + static_cast<size_t>(r) * c;
    double* prow = probs.data.data() + static_cast<size_t>(r) * c;
    softmax_row(row, prow, c);
    if (labels[r] < 0 || labels[r] >= c)
      throw std::invalid_argument("cross_entropy: label out of range");
    loss -= std::log(prow[labels[r]]);
  }
  loss /= b;
  auto back = [logits, labels, probs, b, c](Tape& t, int self) {
    if (!t.requires_grad(logits.id)) return;
    const double g = t.grad_mut(self).data[0];
    Array& gx = t.grad_mut(logits.id);
    const double inv = g / b;
    for (int r = 0; r < b; ++r)
      for (int i = 0; i < c; ++i) {
        const size_t idx = static_cast<size_t>(r) * c + i;
        gx.data[idx] += inv * (probs.data[idx] - (labels[r] == i ? 1.0 : 0.0));
      }
  };
  return {push(Array::scalar(loss), requires_grad(logits.id), {logits.id}, back)};
}

void softmax_inplace(std::vector<double>& v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double z = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    z += x;
  }
  for (double& x : v) x /= z;
}

std::vector<double> softmax_copy(const std::vector<double>& v) {
  std::vector<double> out = v;
  softmax_inplace(out);
  return out;
}

Var kd_loss(Tape& t, Var student_logits, const Array& teacher_logits,
            const std::vector<int>& labels) {
  // Copy the column count up front: growing the tape below can reallocate
  // node storage and invalidate references returned by value().
  if (!t.value(student_logits).same_shape(teacher_logits))
    throw std::invalid_argument("kd_loss: student/teacher shape mismatch");
  const double cols = static_cast<double>(t.value(student_logits).shape[1]);
  Var ce = t.cross_entropy(student_logits, labels);
  Var teacher = t.leaf(teacher_logits, false);
  Var diff = t.sub(student_logits, teacher);
  Var sq = t.mul(diff, diff);
  // mean over elements * C = mean over the batch of the per-sample squared norm
  Var penalty = t.mul_const(t.mean(sq), cols);
  return t.add(ce, penalty);
}

}  // namespace sphynx::ad
