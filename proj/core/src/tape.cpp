// core/src/tape.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "slt/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace slt::ad {

namespace {

// Right operand may be a trailing-suffix shape of the left one; the flat
// index then wraps, which is exactly leading-extent broadcast in row-major.
void check_broadcast(const Tensor& a, const Tensor& b, const std::string& op) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sb.size() > sa.size() ||
      !std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
    throw ShapeError(op + ": shapes " + a.shape_str() + " and " +
                     b.shape_str() + " do not conform");
  }
}

std::size_t row_count(const Tensor& t) {
  return t.rank() == 1 ? 1 : t.extent(0);
}

std::size_t row_width(const Tensor& t) {
  return t.shape().back();
}

}  // namespace

void Tape::check_finite(const Tensor& t, const std::string& op) const {
  if (!t.all_finite()) {
    throw NumericError("non-finite output from op '" + op + "'");
  }
}

int Tape::push(Tensor value, bool needs_grad,
               std::function<void(Tape&, int)> bp, const std::string& op) {
  check_finite(value, op);
  nodes_.push_back(Node{std::move(value), Tensor(), needs_grad, std::move(bp), op});
  return static_cast<int>(nodes_.size() - 1);
}

Tensor& Tape::grad_slot(int id) { return nodes_[id].grad; }

void Tape::accumulate(int id, const Tensor& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) n.grad = Tensor(n.value.shape());
  for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

int Tape::leaf(const Tensor& t) { return push(t, true, nullptr, "leaf"); }

int Tape::constant(const Tensor& t) { return push(t, false, nullptr, "constant"); }

void Tape::backward(int loss_id) {
  const Node& loss = nodes_.at(loss_id);
  if (loss.value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " +
                     loss.value.shape_str());
  }
  nodes_[loss_id].grad = Tensor::Scalar(1.0);
  for (int id = loss_id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() != 0 && n.backprop) n.backprop(*this, id);
  }
  for (auto& n : nodes_) {
    if (n.needs_grad && n.grad.size() == 0) n.grad = Tensor(n.value.shape());
  }
}

int Tape::add(int a, int b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  check_broadcast(va, vb, "add");
  Tensor out(va.shape());
  const std::size_t nb = vb.size();
  for (std::size_t i = 0; i < va.size(); ++i) out[i] = va[i] + vb[i % nb];
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  auto bp = [a, b, nb](Tape& t, int self) {
    const Tensor& g = t.grad_slot(self);
    if (t.nodes_[a].needs_grad) t.accumulate(a, g);
    if (t.nodes_[b].needs_grad) {
      Tensor gb(t.value(b).shape());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] += g[i];
      t.accumulate(b, gb);
    }
  };
  return push(std::move(out), ng, ng ? bp : std::function<void(Tape&, int)>(),
              "add");
}

int Tape::sub(int a, int b) { return add(a, scale(b, -1.0)); }

int Tape::mul(int a, int b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  check_broadcast(va, vb, "mul");
  Tensor out(va.shape());
  const std::size_t nb = vb.size();
  for (std::size_t i = 0; i < va.size(); ++i) out[i] = va[i] * vb[i % nb];
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  auto bp = [a, b, nb](Tape& t, int self) {
    const Tensor& g = t.grad_slot(self);
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    if (t.nodes_[a].needs_grad) {
      Tensor ga(va.shape());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * vb[i % nb];
      t.accumulate(a, ga);
    }
    if (t.nodes_[b].needs_grad) {
      Tensor gb(vb.shape());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] += g[i] * va[i];
      t.accumulate(b, gb);
    }
  };
  return push(std::move(out), ng, ng ? bp : std::function<void(Tape&, int)>(),
              "mul");
}

namespace {

// C += A * B over raw 2-D buffers, optional transposes.
void gemm_acc(const Tensor& A, bool ta, const Tensor& B, bool tb, Tensor& C) {
  const std::size_t m = C.rows(), n = C.cols();
  const std::size_t k = ta ? A.rows() : A.cols();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? A.at(p, i) : A.at(i, p);
      if (av == 0.0) continue;
      const double* brow = tb ? nullptr : &B.vec()[p * n];
      if (!tb) {
        double* crow = &C.vec()[i * n];
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) C.at(i, j) += av * B.at(j, p);
      }
    }
  }
}

}  // namespace

int Tape::matmul(int a, int b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.rank() != 2 || vb.rank() != 2 || va.cols() != vb.rows()) {
    throw ShapeError("matmul: shapes " + va.shape_str() + " and " +
                     vb.shape_str() + " do not conform");
  }
  Tensor out({va.rows(), vb.cols()});
  gemm_acc(va, false, vb, false, out);
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  auto bp = [a, b](Tape& t, int self) {
    const Tensor& g = t.grad_slot(self);
    if (t.nodes_[a].needs_grad) {
      Tensor ga(t.value(a).shape());
      gemm_acc(g, false, t.value(b), true, ga);
      t.accumulate(a, ga);
    }
    if (t.nodes_[b].needs_grad) {
      Tensor gb(t.value(b).shape());
      gemm_acc(t.value(a), true, g, false, gb);
      t.accumulate(b, gb);
    }
  };
  return push(std::move(out), ng, ng ? bp : std::function<void(Tape&, int)>(),
              "matmul");
}

int Tape::transpose(int a) {
  const Tensor& va = value(a);
  if (va.rank() != 2) {
    throw ShapeError("transpose: needs rank 2, got " + va.shape_str());
  }
  Tensor out({va.cols(), va.rows()});
  for (std::size_t i = 0; i < va.rows(); ++i)
    for (std::size_t j = 0; j < va.cols(); ++j) out.at(j, i) = va.at(i, j);
  bool ng = nodes_[a].needs_grad;
  auto bp = [a](Tape& t, int self) {
    const Tensor& g = t.grad_slot(self);
    Tensor ga(t.value(a).shape());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga.at(j, i) = g.at(i, j);
    t.accumulate(a, ga);
  };
  return push(std::move(out), ng, ng ? bp : std::function<void(Tape&, int)>(),
              "transpose");
}

int Tape::tanh(int a) {
  Tensor out(value(a).shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(value(a)[i]);
  bool ng = nodes_[a].needs_grad;
  auto bp = [a](Tape& t, int self) {
    const Tensor& g = t.grad_slot(self);
    const Tensor& y = t.value(self);
    Tensor ga(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] = g[i] * (1.0 - y[i] * y[i]);
    t.accumulate(a, ga);
  };
  return push(std::move(out), ng, ng ? bp : std::function<void(Tape&, int)>(),
              "tanh");
}

int Tape::sigmoid(int a) {
  Tensor out(value(a).shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = value(a)[i];
    out[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                    : std::exp(x) / (1.0 + std::exp(x));
  }
  bool ng = nodes_[a].needs_grad;
  auto bp = [a](Tape& t, int self) {
    const Tensor& g = t.grad_slot(self);
    const Tensor& y = t.value(self);
    Tensor ga(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i)
      ga[i] = g[i] * y[i] * (1.0 - y[i]);
    t.accumulate(a, ga);
  };
  return push(std::move(out), ng, ng ? bp : std::function<void(Tape&, int)>(),
              "sigmoid");
}

int Tape::softmax(int a) {
  const Tensor& va = value(a);
  const std::size_t rows = row_count(va), n = row_width(va);
  Tensor out(va.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &va.vec()[r * n];
    double* y = &out.vec()[r * n];
    double mx = *std::max_element(x, x + n);
    double sum = 0;
    for (std::size_t j = 0; j < n; ++j) sum += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= sum;
  }
  bool ng = nodes_[a].needs_grad;
  auto bp = [a, rows, n](Tape& t, int self) {
    const Tensor& g = t.grad_slot(self);
    const Tensor& y = t.value(self);
    Tensor ga(y.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j)
        ga[r * n + j] = y[r * n + j] * (g[r * n + j] - dot);
    }
    t.accumulate(a, ga);
  };
  return push(std::move(out), ng, ng ? bp : std::function<void(Tape&, int)>(),
              "softmax");
}

int Tape::log_softmax(int a) {
  const Tensor& va = value(a);
  const std::size_t rows = row_count(va), n = row_width(va);
  Tensor out(va.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &va.vec()[r * n];
    double* y = &out.vec()[r * n];
    double mx = *std::max_element(x, x + n);
    double sum = 0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(x[j] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < n; ++j) y[j] = x[j] - lse;
  }
  bool ng = nodes_[a].needs_grad;
  auto bp = [a, rows, n](Tape& t, int self) {
    const Tensor& g = t.grad_slot(self);
    const Tensor& y = t.value(self);
    Tensor ga(y.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      double gsum = 0;
      for (std::size_t j = 0; j < n; ++j) gsum += g[r * n + j];
      for (std::size_t j = 0; j < n; ++j)
        ga[r * n + j] = g[r * n + j] - std::exp(y[r * n + j]) * gsum;
    }
    t.accumulate(a, ga);
  };
  return push(std::move(out), ng, ng ? bp : std::function<void(Tape&, int)>(),
              "log_softmax");
}

int Tape::logsumexp(int a) {
  const Tensor& va = value(a);
  const std::size_t rows = row_count(va), n = row_width(va);
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &va.vec()[r * n];
    double mx = *std::max_element(x, x + n);
    double sum = 0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(x[j] - mx);
    out[r] = mx + std::log(sum);
  }
  bool ng = nodes_[a].needs_grad;
  auto bp = [a, rows, n](Tape& t, int self) {
    const Tensor& g = t.grad_slot(self);
    const Tensor& y = t.value(self);
    const Tensor& x = t.value(a);
    Tensor ga(x.shape());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < n; ++j)
        ga[r * n + j] = g[r] * std::exp(x[r * n + j] - y[r]);
    t.accumulate(a, ga);
  };
  return push(std::move(out), ng, ng ? bp : std::function<void(Tape&, int)>(),
              "logsumexp");
}

int Tape::layer_norm(int x, int gain, int bias) {
  constexpr double kEps = 1e-5;
  const Tensor& vx = value(x);
  const std::size_t rows = row_count(vx), n = row_width(vx);
  const Tensor& vg = value(gain);
  const Tensor& vb = value(bias);
  if (vg.size() != n || vb.size() != n) {
    throw ShapeError("layer_norm: gain/bias width mismatch with " +
                     vx.shape_str());
  }
  Tensor out(vx.shape());
  // Saved normalized rows and inverse stddevs for the backward pass.
  auto xhat = std::make_shared<std::vector<double>>(rows * n);
  auto istd = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = &vx.vec()[r * n];
    double mean = 0;
    for (std::size_t j = 0; j < n; ++j) mean += xi[j];
    mean /= static_cast<double>(n);
    double var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + kEps);
    (*istd)[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xi[j] - mean) * is;
      (*xhat)[r * n + j] = h;
      out[r * n + j] = vg[j] * h + vb[j];
    }
  }
  bool ng = nodes_[x].needs_grad || nodes_[gain].needs_grad ||
            nodes_[bias].needs_grad;
  auto bp = [x, gain, bias, rows, n, xhat, istd](Tape& t, int self) {
    const Tensor& g = t.grad_slot(self);
    const Tensor& vg = t.value(gain);
    if (t.nodes_[gain].needs_grad || t.nodes_[bias].needs_grad) {
      Tensor dgain({n}), dbias({n});
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) {
          dgain[j] += g[r * n + j] * (*xhat)[r * n + j];
          dbias[j] += g[r * n + j];
        }
      t.accumulate(gain, dgain);
      t.accumulate(bias, dbias);
    }
    if (t.nodes_[x].needs_grad) {
      Tensor gx(t.value(x).shape());
      for (std::size_t r = 0; r < rows; ++r) {
        double m1 = 0, m2 = 0;
        for (std::size_t j = 0; j < n; ++j) {
          const double dh = g[r * n + j] * vg[j];
          m1 += dh;
          m2 += dh * (*xhat)[r * n + j];
        }
        m1 /= static_cast<double>(n);
        m2 /= static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
          const double dh = g[r * n + j] * vg[j];
          gx[r * n + j] = (dh - m1 - (*xhat)[r * n + j] * m2) * (*istd)[r];
        }
      }
      t.accumulate(x, gx);
    }
  };
  return push(std::move(out), ng, ng ? bp : std::function<void(Tape&, int)>(),
              "layer_norm");
}

int Tape::embedding(int table, const std::vector<int>& ids) {
  const Tensor& vt = value(table);
  if (vt.rank() != 2) {
    throw ShapeError("embedding: table must be rank 2, got " + vt.shape_str());
  }
  const std::size_t e = vt.cols();
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vt.rows()) {
      throw ShapeError("embedding: id out of range");
    }
  }
  Tensor out({ids.size(), e});
  for (std::size_t r = 0; r < ids.size(); ++r)
    for (std::size_t j = 0; j < e; ++j)
      out.at(r, j) = vt.at(static_cast<std::size_t>(ids[r]), j);
  bool ng = nodes_[table].needs_grad;
  auto bp = [table, ids, e](Tape& t, int self) {
    const Tensor& g = t.grad_slot(self);
    Tensor gt(t.value(table).shape());
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t j = 0; j < e; ++j)
        gt.at(static_cast<std::size_t>(ids[r]), j) += g.at(r, j);
    t.accumulate(table, gt);
  };
  return push(std::move(out), ng, ng ? bp : std::function<void(Tape&, int)>(),
              "embedding");
}

int Tape::concat_rows(const std::vector<int>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t n = value(parts[0]).cols();
  std::size_t rows = 0;
  bool ng = false;
  for (int p : parts) {
    const Tensor& v = value(p);
    if (v.rank() != 2 || v.cols() != n) {
      throw ShapeError("concat_rows: column mismatch, " + v.shape_str());
    }
    rows += v.rows();
    ng = ng || nodes_[p].needs_grad;
  }
  Tensor out({rows, n});
  std::size_t r0 = 0;
  for (int p : parts) {
    const Tensor& v = value(p);
    std::copy(v.vec().begin(), v.vec().end(), out.vec().begin() + r0 * n);
    r0 += v.rows();
  }
  auto bp = [parts, n](Tape& t, int self) {
    const Tensor& g = t.grad_slot(self);
    std::size_t r0 = 0;
    for (int p : parts) {
      const Tensor& v = t.value(p);
      if (t.nodes_[p].needs_grad) {
        Tensor gp(v.shape());
        std::copy(g.vec().begin() + r0 * n,
                  g.vec().begin() + (r0 + v.rows()) * n, gp.vec().begin());
        t.accumulate(p, gp);
      }
      r0 += v.rows();
    }
  };
  return push(std::move(out), ng, ng ? bp : std::function<void(Tape&, int)>(),
              "concat_rows");
}

int Tape::concat_cols(const std::vector<int>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = value(parts[0]).rows();
  std::size_t n = 0;
  bool ng = false;
  for (int p : parts) {
    const Tensor& v = value(p);
    if (v.rank() != 2 || v.rows() != rows) {
      throw ShapeError("concat_cols: row mismatch, " + v.shape_str());
    }
    n += v.cols();
    ng = ng || nodes_[p].needs_grad;
  }
  Tensor out({rows, n});
  std::size_t c0 = 0;
  for (int p : parts) {
    const Tensor& v = value(p);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < v.cols(); ++j)
        out.at(r, c0 + j) = v.at(r, j);
    c0 += v.cols();
  }
  auto bp = [parts, rows](Tape& t, int self) {
    const Tensor& g = t.grad_slot(self);
    std::size_t c0 = 0;
    for (int p : parts) {
      const Tensor& v = t.value(p);
      if (t.nodes_[p].needs_grad) {
        Tensor gp(v.shape());
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < v.cols(); ++j)
            gp.at(r, j) = g.at(r, c0 + j);
        t.accumulate(p, gp);
      }
      c0 += v.cols();
    }
  };
  return push(std::move(out), ng, ng ? bp : std::function<void(Tape&, int)>(),
              "concat_cols");
}

int Tape::slice_rows(int a, std::size_t row0, std::size_t row1) {
  const Tensor& va = value(a);
  if (va.rank() != 2 || row1 > va.rows() || row0 >= row1) {
    throw ShapeError("slice_rows: bad range on " + va.shape_str());
  }
  const std::size_t n = va.cols();
  Tensor out({row1 - row0, n});
  std::copy(va.vec().begin() + row0 * n, va.vec().begin() + row1 * n,
            out.vec().begin());
  bool ng = nodes_[a].needs_grad;
  auto bp = [a, row0, n](Tape& t, int self) {
    const Tensor& g = t.grad_slot(self);
    Tensor ga(t.value(a).shape());
    std::copy(g.vec().begin(), g.vec().end(), ga.vec().begin() + row0 * n);
    t.accumulate(a, ga);
  };
  return push(std::move(out), ng, ng ? bp : std::function<void(Tape&, int)>(),
              "slice_rows");
}

int Tape::reduce_sum(int a) {
  const Tensor& va = value(a);
  double s = 0;
  for (double v : va.vec()) s += v;
  bool ng = nodes_[a].needs_grad;
  auto bp = [a](Tape& t, int self) {
    const double g = t.grad_slot(self)[0];
    Tensor ga(t.value(a).shape(), g);
    t.accumulate(a, ga);
  };
  return push(Tensor::Scalar(s), ng, ng ? bp : std::function<void(Tape&, int)>(),
              "reduce_sum");
}

int Tape::reduce_mean(int a) {
  return scale(reduce_sum(a), 1.0 / static_cast<double>(value(a).size()));
}

int Tape::scale(int a, double c) {
  const Tensor& va = value(a);
  Tensor out(va.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * c;
  bool ng = nodes_[a].needs_grad;
  auto bp = [a, c](Tape& t, int self) {
    const Tensor& g = t.grad_slot(self);
    Tensor ga(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * c;
    t.accumulate(a, ga);
  };
  return push(std::move(out), ng, ng ? bp : std::function<void(Tape&, int)>(),
              "scale");
}

int Tape::reshape(int a, std::vector<std::size_t> shape) {
  const Tensor& va = value(a);
  if (shape_size(shape) != va.size()) {
    throw ShapeError("reshape: " + va.shape_str() + " has wrong element count");
  }
  Tensor out(shape, va.vec());
  bool ng = nodes_[a].needs_grad;
  auto bp = [a](Tape& t, int self) {
    const Tensor& g = t.grad_slot(self);
    Tensor ga(t.value(a).shape(), g.vec());
    t.accumulate(a, ga);
  };
  return push(std::move(out), ng, ng ? bp : std::function<void(Tape&, int)>(),
              "reshape");
}

int Tape::l2_normalize_rows(int a) {
  const Tensor& va = value(a);
  const std::size_t rows = row_count(va), n = row_width(va);
  Tensor out(va.shape());
  auto inorm = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0;
    for (std::size_t j = 0; j < n; ++j) ss += va[r * n + j] * va[r * n + j];
    if (ss == 0.0) {
      throw NumericError("l2_normalize_rows: zero-norm row " +
                         std::to_string(r));
    }
    const double in = 1.0 / std::sqrt(ss);
    (*inorm)[r] = in;
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = va[r * n + j] * in;
  }
  bool ng = nodes_[a].needs_grad;
  auto bp = [a, rows, n, inorm](Tape& t, int self) {
    const Tensor& g = t.grad_slot(self);
    const Tensor& y = t.value(self);
    Tensor ga(y.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j)
        ga[r * n + j] = (g[r * n + j] - y[r * n + j] * dot) * (*inorm)[r];
    }
    t.accumulate(a, ga);
  };
  return push(std::move(out), ng, ng ? bp : std::function<void(Tape&, int)>(),
              "l2_normalize_rows");
}

int Tape::custom_scalar(double value,
                        std::vector<std::pair<int, Tensor>> input_grads,
                        const std::string& name) {
  bool ng = false;
  for (const auto& [id, g] : input_grads) {
    if (!this->value(id).same_shape(g)) {
      throw ShapeError(name + ": custom gradient shape " + g.shape_str() +
                       " does not match input " +
                       this->value(id).shape_str());
    }
    ng = ng || nodes_[id].needs_grad;
  }
  auto saved = std::make_shared<std::vector<std::pair<int, Tensor>>>(
      std::move(input_grads));
  auto bp = [saved](Tape& t, int self) {
    const double g = t.grad_slot(self)[0];
    for (const auto& [id, gt] : *saved) {
      if (!t.nodes_[id].needs_grad) continue;
      Tensor gi(gt.shape());
      for (std::size_t i = 0; i < gt.size(); ++i) gi[i] = g * gt[i];
      t.accumulate(id, gi);
    }
  };
  return push(Tensor::Scalar(value), ng,
              ng ? bp : std::function<void(Tape&, int)>(), name);
}

ParamBinding bind_params(Tape& tape, const ParamStore& store) {
  ParamBinding binding;
  for (const auto& name : store.names()) {
    binding[name] = tape.leaf(store.get(name));
  }
  return binding;
}

int pnode(const ParamBinding& binding, const std::string& name) {
  auto it = binding.find(name);
  if (it == binding.end()) {
    throw std::runtime_error("unbound parameter: " + name);
  }
  return it->second;
}

double grad_check(
    const std::function<int(Tape&, const std::vector<int>&)>& build,
    const std::vector<Tensor>& points, double step) {
  // Analytic pass.
  Tape tape;
  std::vector<int> ids;
  for (const auto& p : points) ids.push_back(tape.leaf(p));
  int loss = build(tape, ids);
  tape.backward(loss);
  std::vector<Tensor> analytic;
  for (int id : ids) analytic.push_back(tape.grad(id));

  auto value_at = [&](const std::vector<Tensor>& pts) {
    Tape t;
    std::vector<int> lids;
    for (const auto& p : pts) lids.push_back(t.leaf(p));
    return t.value(build(t, lids)).scalar();
  };

  double max_err = 0;
  std::vector<Tensor> pts = points;
  for (std::size_t p = 0; p < pts.size(); ++p) {
    for (std::size_t i = 0; i < pts[p].size(); ++i) {
      const double orig = pts[p][i];
      pts[p][i] = orig + step;
      const double up = value_at(pts);
      pts[p][i] = orig - step;
      const double dn = value_at(pts);
      pts[p][i] = orig;
      const double numeric = (up - dn) / (2 * step);
      const double a = analytic[p][i];
      const double denom =
          std::max({std::abs(a), std::abs(numeric), 1e-12});
      max_err = std::max(max_err, std::abs(a - numeric) / denom);
    }
  }
  return max_err;
}

}  // namespace slt::ad
