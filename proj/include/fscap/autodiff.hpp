// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over row-major matrices.
//
// A Tape records every operation of one forward pass. Parameter leaves read
// their values straight out of a ParamStore and, on backward(), accumulate
// gradients into a Gradients buffer, skipping frozen groups entirely. A tape
// built with record=false evaluates values only and stores no closures.
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "fscap/matrix.hpp"
#include "fscap/params.hpp"

namespace fscap {

struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const { return id != std::numeric_limits<std::uint32_t>::max(); }
};

template <typename T>
class Tape {
 public:
  explicit Tape(const ParamStore<T>* store = nullptr, Gradients<T>* grads = nullptr, bool record = true);

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Matrix<T> m);
  /// Leaf whose gradient can be read back with grad().
  Var input(Matrix<T> m);
  Var param(ParamId id);

  const Matrix<T>& value(Var v) const;
  T scalar(Var v) const { return value(v)(0, 0); }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  /// Gradient of the last backward() target with respect to v; a zero matrix
  /// when nothing flowed into v.
  Matrix<T> grad(Var v) const;

  /// Propagate d(loss)/d(loss) = seed. `loss` must be 1x1.
  void backward(Var loss, T seed = T{1});

  std::size_t node_count() const { return nodes_.size(); }

  // ---- operations --------------------------------------------------------
  Var matmul(Var a, Var b);     // a * b
  Var matmul_nt(Var a, Var b);  // a * b^T
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var add_row(Var a, Var row);  // row (1 x n) broadcast over every row of a
  Var scale(Var a, T s);
  Var gelu(Var a);
  Var layer_norm(Var x, Var gamma, Var beta, T eps = T(1e-5));
  /// Multi-head scaled dot-product attention; q is n x d, k and v are m x d.
  /// With causal=true, query row i only sees key rows j <= i.
  Var attention(Var q, Var k, Var v, std::size_t heads, bool causal);
  Var gather_rows(Var table, std::span<const int> ids);
  Var concat_rows(Var a, Var b);
  Var slice_rows(Var a, std::size_t begin, std::size_t end);
  Var mean_rows(Var a);
  Var softmax_rows(Var a);
  /// Throws std::domain_error on a zero-norm row.
  Var l2_normalize_rows(Var a);
  /// Summed negative log-likelihood; rows whose target is negative are skipped.
  Var cross_entropy(Var logits, std::span<const int> targets);
  Var sum(Var a);
  Var sum_squares(Var a);
  /// sum_i weights[i] * terms[i] over 1x1 terms.
  Var weighted_sum(std::span<const Var> terms, std::span<const T> weights);

 private:
  struct Node {
    Matrix<T> own;
    const Matrix<T>* ext = nullptr;
    Matrix<T> grad;
    bool has_grad = false;
    bool needs_grad = false;
    std::int64_t param = -1;
    std::function<void(Tape&, const Matrix<T>&)> back;
  };

  Var push(Matrix<T> value, bool needs_grad, std::function<void(Tape&, const Matrix<T>&)> back);
  bool any_grad(std::initializer_list<Var> vars) const;
  Matrix<T>& grad_ref(Var v);

  const ParamStore<T>* store_;
  Gradients<T>* grads_;
  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace fscap
