// core/include/slt/tape.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SLT_TAPE_HPP_
#define SLT_TAPE_HPP_

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "slt/tensor.hpp"

namespace slt::ad {

/// Reverse-mode tape over dense float64 tensors.  Nodes are created in
/// topological order; backward() walks them once in reverse.
///
/// Elementwise binary ops accept equal shapes, or a right operand whose
/// shape is a trailing suffix of the left one (broadcast over the leading
/// extents only).  Every primitive checks its output for NaN/Inf and
/// throws NumericError immediately.
class Tape {
 public:
  // Leaves participate in gradients; constants do not.
  int leaf(const Tensor& t);
  int constant(const Tensor& t);
  int constant_scalar(double v) { return constant(Tensor::Scalar(v)); }

  const Tensor& value(int id) const { return nodes_.at(id).value; }
  // Valid after backward(); zero tensor if the node was never reached.
  const Tensor& grad(int id) const { return nodes_.at(id).grad; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Accumulates d(loss)/d(node) for every node.  loss must be scalar.
  void backward(int loss_id);

  // ----- primitives -----
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);  // elementwise gate
  int matmul(int a, int b);
  int transpose(int a);
  int tanh(int a);
  int sigmoid(int a);
  int softmax(int a);      // per row (rank 1 = one row)
  int log_softmax(int a);  // per row
  int logsumexp(int a);    // per row -> [rows]; rank 1 -> scalar
  int layer_norm(int x, int gain, int bias);
  int embedding(int table, const std::vector<int>& ids);
  int concat_rows(const std::vector<int>& parts);
  int concat_cols(const std::vector<int>& parts);
  int slice_rows(int a, std::size_t row0, std::size_t row1);  // [row0,row1)
  int reduce_sum(int a);   // -> scalar
  int reduce_mean(int a);  // -> scalar
  int scale(int a, double c);
  int reshape(int a, std::vector<std::size_t> shape);  // same element count
  int l2_normalize_rows(int a);

  /// Scalar output with analytic gradients supplied by the caller; used by
  /// the lattice losses instead of taping their DP loops.
  int custom_scalar(double value,
                    std::vector<std::pair<int, Tensor>> input_grads,
                    const std::string& name);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::function<void(Tape&, int)> backprop;  // nullptr for leaves/constants
    std::string op;
  };

  int push(Tensor value, bool needs_grad, std::function<void(Tape&, int)> bp,
           const std::string& op);
  void accumulate(int id, const Tensor& g);
  Tensor& grad_slot(int id);
  void check_finite(const Tensor& t, const std::string& op) const;

  std::vector<Node> nodes_;

  friend struct TapeTestPeer;
};

/// Leaf node per parameter, so a whole ParamStore can join one tape.
using ParamBinding = std::map<std::string, int>;
ParamBinding bind_params(Tape& tape, const ParamStore& store);
int pnode(const ParamBinding& binding, const std::string& name);

/// Max over coordinates of |analytic - central difference| /
/// max(|analytic|, |central|, 1e-12) for a scalar-valued expression built
/// by `build` from leaves at `points`.  The repo-wide gradient oracle.
double grad_check(
    const std::function<int(Tape&, const std::vector<int>&)>& build,
    const std::vector<Tensor>& points, double step = 1e-5);

}  // namespace slt::ad

#endif  // SLT_TAPE_HPP_
