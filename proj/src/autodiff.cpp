// SPDX-License-Identifier: Apache-2.0
#include "fscap/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include "fscap/kernels.hpp"

namespace fscap {

namespace {

template <typename T>
void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

template <typename T>
Tape<T>::Tape(const ParamStore<T>* store, Gradients<T>* grads, bool record)
    : store_(store), grads_(grads), record_(record) {
  nodes_.reserve(512);
}

template <typename T>
Var Tape<T>::push(Matrix<T> value, bool needs_grad, std::function<void(Tape&, const Matrix<T>&)> back) {
  Node n;
  n.own = std::move(value);
  n.needs_grad = record_ && needs_grad;
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
bool Tape<T>::any_grad(std::initializer_list<Var> vars) const {
  if (!record_) return false;
  for (Var v : vars) {
    if (nodes_[v.id].needs_grad) return true;
  }
  return false;
}

template <typename T>
Matrix<T>& Tape<T>::grad_ref(Var v) {
  Node& n = nodes_[v.id];
  if (!n.has_grad) {
    const auto& val = n.ext != nullptr ? *n.ext : n.own;
    n.grad = Matrix<T>(val.rows(), val.cols());
    n.has_grad = true;
  }
  return n.grad;
}

template <typename T>
Var Tape<T>::constant(Matrix<T> m) {
  return push(std::move(m), false, nullptr);
}

template <typename T>
Var Tape<T>::input(Matrix<T> m) {
  Var v = push(std::move(m), true, nullptr);
  return v;
}

template <typename T>
Var Tape<T>::param(ParamId id) {
  if (store_ == nullptr) throw std::logic_error("Tape::param without a ParamStore");
  Node n;
  n.ext = &(*store_)[id].value;
  n.needs_grad = record_ && grads_ != nullptr && store_->trainable(id);
  n.param = id.index;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
const Matrix<T>& Tape<T>::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.ext != nullptr ? *n.ext : n.own;
}

template <typename T>
Matrix<T> Tape<T>::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.has_grad) return n.grad;
  const auto& val = value(v);
  return Matrix<T>(val.rows(), val.cols());
}

template <typename T>
void Tape<T>::backward(Var loss, T seed) {
  if (!record_) throw std::logic_error("backward on a non-recording tape");
  const auto& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) throw std::invalid_argument("backward: loss must be 1x1");
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Matrix<T>();
  }
  if (!nodes_[loss.id].needs_grad) return;
  grad_ref(loss)(0, 0) = seed;
  for (std::int64_t i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.has_grad) continue;
    if (n.back) n.back(*this, n.grad);
    if (n.param >= 0 && grads_ != nullptr) {
      auto& dst = (*grads_)[ParamId{static_cast<std::uint32_t>(n.param)}];
      kernels::axpy<T>(dst.size(), T{1}, n.grad.data(), dst.data());
    }
  }
}

// ---------------------------------------------------------------------------

template <typename T>
Var Tape<T>::matmul(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.cols() != B.rows()) {
    throw std::invalid_argument("matmul: shape mismatch " + shape_string(A.rows(), A.cols()) + " * " +
                                shape_string(B.rows(), B.cols()));
  }
  Matrix<T> C(A.rows(), B.cols());
  kernels::gemm_nn<T>(A.rows(), B.cols(), A.cols(), A.data(), B.data(), C.data());
  return push(std::move(C), any_grad({a, b}), [a, b](Tape& t, const Matrix<T>& g) {
    const auto& A = t.value(a);
    const auto& B = t.value(b);
    if (t.nodes_[a.id].needs_grad) {
      kernels::gemm_nt<T>(A.rows(), A.cols(), B.cols(), g.data(), B.data(), t.grad_ref(a).data());
    }
    if (t.nodes_[b.id].needs_grad) {
      kernels::gemm_tn<T>(B.rows(), B.cols(), A.rows(), A.data(), g.data(), t.grad_ref(b).data());
    }
  });
}

template <typename T>
Var Tape<T>::matmul_nt(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.cols() != B.cols()) {
    throw std::invalid_argument("matmul_nt: shape mismatch " + shape_string(A.rows(), A.cols()) + " * " +
                                shape_string(B.rows(), B.cols()) + "^T");
  }
  Matrix<T> C(A.rows(), B.rows());
  kernels::gemm_nt<T>(A.rows(), B.rows(), A.cols(), A.data(), B.data(), C.data());
  return push(std::move(C), any_grad({a, b}), [a, b](Tape& t, const Matrix<T>& g) {
    const auto& A = t.value(a);
    const auto& B = t.value(b);
    if (t.nodes_[a.id].needs_grad) {
      kernels::gemm_nn<T>(A.rows(), A.cols(), B.rows(), g.data(), B.data(), t.grad_ref(a).data());
    }
    if (t.nodes_[b.id].needs_grad) {
      kernels::gemm_tn<T>(B.rows(), B.cols(), A.rows(), g.data(), A.data(), t.grad_ref(b).data());
    }
  });
}

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  require<T>(A.same_shape(B), "add: shape mismatch");
  Matrix<T> C = A;
  kernels::axpy<T>(C.size(), T{1}, B.data(), C.data());
  return push(std::move(C), any_grad({a, b}), [a, b](Tape& t, const Matrix<T>& g) {
    if (t.nodes_[a.id].needs_grad) kernels::axpy<T>(g.size(), T{1}, g.data(), t.grad_ref(a).data());
    if (t.nodes_[b.id].needs_grad) kernels::axpy<T>(g.size(), T{1}, g.data(), t.grad_ref(b).data());
  });
}

template <typename T>
Var Tape<T>::sub(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  require<T>(A.same_shape(B), "sub: shape mismatch");
  Matrix<T> C = A;
  kernels::axpy<T>(C.size(), T{-1}, B.data(), C.data());
  return push(std::move(C), any_grad({a, b}), [a, b](Tape& t, const Matrix<T>& g) {
    if (t.nodes_[a.id].needs_grad) kernels::axpy<T>(g.size(), T{1}, g.data(), t.grad_ref(a).data());
    if (t.nodes_[b.id].needs_grad) kernels::axpy<T>(g.size(), T{-1}, g.data(), t.grad_ref(b).data());
  });
}

template <typename T>
Var Tape<T>::add_row(Var a, Var row) {
  const auto& A = value(a);
  const auto& R = value(row);
  if (R.rows() != 1 || R.cols() != A.cols()) {
    throw std::invalid_argument("add_row: width mismatch " + shape_string(A.rows(), A.cols()) + " + " +
                                shape_string(R.rows(), R.cols()));
  }
  Matrix<T> C = A;
  for (std::size_t i = 0; i < C.rows(); ++i) kernels::axpy<T>(C.cols(), T{1}, R.data(), C.row(i).data());
  return push(std::move(C), any_grad({a, row}), [a, row](Tape& t, const Matrix<T>& g) {
    if (t.nodes_[a.id].needs_grad) kernels::axpy<T>(g.size(), T{1}, g.data(), t.grad_ref(a).data());
    if (t.nodes_[row.id].needs_grad) {
      auto& gr = t.grad_ref(row);
      for (std::size_t i = 0; i < g.rows(); ++i) kernels::axpy<T>(g.cols(), T{1}, g.row(i).data(), gr.data());
    }
  });
}

template <typename T>
Var Tape<T>::scale(Var a, T s) {
  Matrix<T> C = value(a);
  for (auto& v : C.flat()) v *= s;
  return push(std::move(C), any_grad({a}), [a, s](Tape& t, const Matrix<T>& g) {
    kernels::axpy<T>(g.size(), s, g.data(), t.grad_ref(a).data());
  });
}

template <typename T>
Var Tape<T>::gelu(Var a) {
  constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = T(0.044715);
  Matrix<T> C = value(a);
  for (auto& x : C.flat()) x = T(0.5) * x * (T(1) + std::tanh(kC * (x + kA * x * x * x)));
  return push(std::move(C), any_grad({a}), [a](Tape& t, const Matrix<T>& g) {
    const auto& X = t.value(a);
    auto& gx = t.grad_ref(a);
    for (std::size_t i = 0; i < X.size(); ++i) {
      const T x = X.data()[i];
      const T th = std::tanh(kC * (x + kA * x * x * x));
      const T d = T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * kC * (T(1) + T(3) * kA * x * x);
      gx.data()[i] += g.data()[i] * d;
    }
  });
}

template <typename T>
Var Tape<T>::layer_norm(Var x, Var gamma, Var beta, T eps) {
  const auto& X = value(x);
  const auto& G = value(gamma);
  const auto& B = value(beta);
  const std::size_t n = X.rows(), d = X.cols();
  require<T>(G.rows() == 1 && G.cols() == d && B.same_shape(G), "layer_norm: parameter shape mismatch");
  Matrix<T> Y(n, d);
  Matrix<T> xhat(n, d);
  std::vector<T> rstd(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto xr = X.row(i);
    T mean{0};
    for (T v : xr) mean += v;
    mean /= T(d);
    T var{0};
    for (T v : xr) var += (v - mean) * (v - mean);
    var /= T(d);
    rstd[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat(i, j) = (xr[j] - mean) * rstd[i];
      Y(i, j) = xhat(i, j) * G(0, j) + B(0, j);
    }
  }
  const bool ng = any_grad({x, gamma, beta});
  return push(std::move(Y), ng,
              [x, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd)](Tape& t, const Matrix<T>& g) {
                const std::size_t n = xhat.rows(), d = xhat.cols();
                const auto& G = t.value(gamma);
                if (t.nodes_[gamma.id].needs_grad || t.nodes_[beta.id].needs_grad) {
                  const bool wg = t.nodes_[gamma.id].needs_grad, wb = t.nodes_[beta.id].needs_grad;
                  Matrix<T>* gg = wg ? &t.grad_ref(gamma) : nullptr;
                  Matrix<T>* gb = wb ? &t.grad_ref(beta) : nullptr;
                  for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < d; ++j) {
                      if (gg) (*gg)(0, j) += g(i, j) * xhat(i, j);
                      if (gb) (*gb)(0, j) += g(i, j);
                    }
                  }
                }
                if (t.nodes_[x.id].needs_grad) {
                  auto& gx = t.grad_ref(x);
                  std::vector<T> dxh(d);
                  for (std::size_t i = 0; i < n; ++i) {
                    T m1{0}, m2{0};
                    for (std::size_t j = 0; j < d; ++j) {
                      dxh[j] = g(i, j) * G(0, j);
                      m1 += dxh[j];
                      m2 += dxh[j] * xhat(i, j);
                    }
                    m1 /= T(d);
                    m2 /= T(d);
                    for (std::size_t j = 0; j < d; ++j) gx(i, j) += rstd[i] * (dxh[j] - m1 - xhat(i, j) * m2);
                  }
                }
              });
}

template <typename T>
Var Tape<T>::attention(Var q, Var k, Var v, std::size_t heads, bool causal) {
  const auto& Q = value(q);
  const auto& K = value(k);
  const auto& V = value(v);
  const std::size_t n = Q.rows(), m = K.rows(), d = Q.cols();
  require<T>(K.cols() == d && V.cols() == d && V.rows() == m, "attention: shape mismatch");
  require<T>(heads >= 1 && d % heads == 0, "attention: width not divisible by heads");
  require<T>(!causal || n <= m, "attention: causal mask needs n <= m");
  const std::size_t dh = d / heads;
  const T sc = T(1) / std::sqrt(T(dh));
  Matrix<T> P(heads * n, m);
  Matrix<T> O(n, d);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      auto prow = P.row(h * n + i);
      const std::size_t lim = causal ? i + 1 : m;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < lim; ++j) {
        prow[j] = sc * kernels::dot<T>(dh, Q.row(i).data() + h * dh, K.row(j).data() + h * dh);
        mx = std::max(mx, prow[j]);
      }
      T z{0};
      for (std::size_t j = 0; j < lim; ++j) {
        prow[j] = std::exp(prow[j] - mx);
        z += prow[j];
      }
      for (std::size_t j = 0; j < lim; ++j) prow[j] /= z;
      for (std::size_t j = lim; j < m; ++j) prow[j] = T{0};
      T* orow = O.row(i).data() + h * dh;
      for (std::size_t j = 0; j < lim; ++j) kernels::axpy<T>(dh, prow[j], V.row(j).data() + h * dh, orow);
    }
  }
  return push(std::move(O), any_grad({q, k, v}),
              [q, k, v, heads, causal, P = std::move(P)](Tape& t, const Matrix<T>& g) {
                const auto& Q = t.value(q);
                const auto& K = t.value(k);
                const auto& V = t.value(v);
                const std::size_t n = Q.rows(), m = K.rows(), d = Q.cols();
                const std::size_t dh = d / heads;
                const T sc = T(1) / std::sqrt(T(dh));
                const bool wq = t.nodes_[q.id].needs_grad, wk = t.nodes_[k.id].needs_grad,
                           wv = t.nodes_[v.id].needs_grad;
                Matrix<T>* gq = wq ? &t.grad_ref(q) : nullptr;
                Matrix<T>* gk = wk ? &t.grad_ref(k) : nullptr;
                Matrix<T>* gv = wv ? &t.grad_ref(v) : nullptr;
                std::vector<T> dp(m);
                for (std::size_t h = 0; h < heads; ++h) {
                  for (std::size_t i = 0; i < n; ++i) {
                    auto prow = P.row(h * n + i);
                    const std::size_t lim = causal ? i + 1 : m;
                    const T* grow = g.row(i).data() + h * dh;
                    T acc{0};
                    for (std::size_t j = 0; j < lim; ++j) {
                      if (gv) kernels::axpy<T>(dh, prow[j], grow, gv->row(j).data() + h * dh);
                      dp[j] = kernels::dot<T>(dh, grow, V.row(j).data() + h * dh);
                      acc += dp[j] * prow[j];
                    }
                    for (std::size_t j = 0; j < lim; ++j) {
                      const T ds = prow[j] * (dp[j] - acc) * sc;
                      if (ds == T{0}) continue;
                      if (gq) kernels::axpy<T>(dh, ds, K.row(j).data() + h * dh, gq->row(i).data() + h * dh);
                      if (gk) kernels::axpy<T>(dh, ds, Q.row(i).data() + h * dh, gk->row(j).data() + h * dh);
                    }
                  }
                }
              });
}

template <typename T>
Var Tape<T>::gather_rows(Var table, std::span<const int> ids) {
  const auto& E = value(table);
  Matrix<T> out(ids.size(), E.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= E.rows()) {
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                              std::to_string(E.rows()) + " rows");
    }
    auto src = E.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<int> keep(ids.begin(), ids.end());
  return push(std::move(out), any_grad({table}), [table, keep = std::move(keep)](Tape& t, const Matrix<T>& g) {
    auto& ge = t.grad_ref(table);
    for (std::size_t i = 0; i < keep.size(); ++i) {
      kernels::axpy<T>(g.cols(), T{1}, g.row(i).data(), ge.row(static_cast<std::size_t>(keep[i])).data());
    }
  });
}

template <typename T>
Var Tape<T>::concat_rows(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  require<T>(A.cols() == B.cols(), "concat_rows: width mismatch");
  Matrix<T> C(A.rows() + B.rows(), A.cols());
  std::copy(A.flat().begin(), A.flat().end(), C.data());
  std::copy(B.flat().begin(), B.flat().end(), C.data() + A.size());
  return push(std::move(C), any_grad({a, b}), [a, b](Tape& t, const Matrix<T>& g) {
    const std::size_t na = t.value(a).size();
    if (t.nodes_[a.id].needs_grad) kernels::axpy<T>(na, T{1}, g.data(), t.grad_ref(a).data());
    if (t.nodes_[b.id].needs_grad) {
      kernels::axpy<T>(g.size() - na, T{1}, g.data() + na, t.grad_ref(b).data());
    }
  });
}

template <typename T>
Var Tape<T>::slice_rows(Var a, std::size_t begin, std::size_t end) {
  const auto& A = value(a);
  require<T>(begin <= end && end <= A.rows(), "slice_rows: range out of bounds");
  Matrix<T> C(end - begin, A.cols());
  std::copy(A.data() + begin * A.cols(), A.data() + end * A.cols(), C.data());
  return push(std::move(C), any_grad({a}), [a, begin](Tape& t, const Matrix<T>& g) {
    auto& ga = t.grad_ref(a);
    kernels::axpy<T>(g.size(), T{1}, g.data(), ga.data() + begin * ga.cols());
  });
}

template <typename T>
Var Tape<T>::mean_rows(Var a) {
  const auto& A = value(a);
  require<T>(A.rows() >= 1, "mean_rows: empty input");
  Matrix<T> C(1, A.cols());
  for (std::size_t i = 0; i < A.rows(); ++i) kernels::axpy<T>(A.cols(), T{1}, A.row(i).data(), C.data());
  const T inv = T(1) / T(A.rows());
  for (auto& v : C.flat()) v *= inv;
  return push(std::move(C), any_grad({a}), [a](Tape& t, const Matrix<T>& g) {
    auto& ga = t.grad_ref(a);
    const T inv = T(1) / T(ga.rows());
    for (std::size_t i = 0; i < ga.rows(); ++i) kernels::axpy<T>(ga.cols(), inv, g.data(), ga.row(i).data());
  });
}

template <typename T>
Var Tape<T>::softmax_rows(Var a) {
  Matrix<T> Y = value(a);
  for (std::size_t i = 0; i < Y.rows(); ++i) {
    auto r = Y.row(i);
    const T mx = *std::max_element(r.begin(), r.end());
    T z{0};
    for (auto& v : r) {
      v = std::exp(v - mx);
      z += v;
    }
    for (auto& v : r) v /= z;
  }
  Var out = push(std::move(Y), any_grad({a}), nullptr);
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].back = [a, out](Tape& t, const Matrix<T>& g) {
      const auto& Y = t.value(out);
      auto& ga = t.grad_ref(a);
      for (std::size_t i = 0; i < Y.rows(); ++i) {
        const T s = kernels::dot<T>(Y.cols(), g.row(i).data(), Y.row(i).data());
        for (std::size_t j = 0; j < Y.cols(); ++j) ga(i, j) += Y(i, j) * (g(i, j) - s);
      }
    };
  }
  return out;
}

template <typename T>
Var Tape<T>::l2_normalize_rows(Var a) {
  const auto& A = value(a);
  Matrix<T> Y(A.rows(), A.cols());
  std::vector<T> norms(A.rows());
  for (std::size_t i = 0; i < A.rows(); ++i) {
    const T nrm = std::sqrt(kernels::dot<T>(A.cols(), A.row(i).data(), A.row(i).data()));
    if (!(nrm > T{0})) throw std::domain_error("l2_normalize_rows: zero-norm row");
    norms[i] = nrm;
    for (std::size_t j = 0; j < A.cols(); ++j) Y(i, j) = A(i, j) / nrm;
  }
  Var out = push(std::move(Y), any_grad({a}), nullptr);
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].back = [a, out, norms = std::move(norms)](Tape& t, const Matrix<T>& g) {
      const auto& Y = t.value(out);
      auto& ga = t.grad_ref(a);
      for (std::size_t i = 0; i < Y.rows(); ++i) {
        const T s = kernels::dot<T>(Y.cols(), g.row(i).data(), Y.row(i).data());
        for (std::size_t j = 0; j < Y.cols(); ++j) ga(i, j) += (g(i, j) - Y(i, j) * s) / norms[i];
      }
    };
  }
  return out;
}

template <typename T>
Var Tape<T>::cross_entropy(Var logits, std::span<const int> targets) {
  const auto& L = value(logits);
  require<T>(targets.size() == L.rows(), "cross_entropy: target count != logit rows");
  Matrix<T> probs(L.rows(), L.cols());
  T total{0};
  for (std::size_t i = 0; i < L.rows(); ++i) {
    if (targets[i] < 0) continue;
    if (static_cast<std::size_t>(targets[i]) >= L.cols()) throw std::out_of_range("cross_entropy: target id");
    auto r = L.row(i);
    const T mx = *std::max_element(r.begin(), r.end());
    T z{0};
    for (std::size_t j = 0; j < L.cols(); ++j) {
      probs(i, j) = std::exp(r[j] - mx);
      z += probs(i, j);
    }
    for (std::size_t j = 0; j < L.cols(); ++j) probs(i, j) /= z;
    total += -(r[static_cast<std::size_t>(targets[i])] - mx - std::log(z));
  }
  std::vector<int> tg(targets.begin(), targets.end());
  return push(Matrix<T>(1, 1, total), any_grad({logits}),
              [logits, tg = std::move(tg), probs = std::move(probs)](Tape& t, const Matrix<T>& g) {
                auto& gl = t.grad_ref(logits);
                const T s = g(0, 0);
                for (std::size_t i = 0; i < tg.size(); ++i) {
                  if (tg[i] < 0) continue;
                  kernels::axpy<T>(gl.cols(), s, probs.row(i).data(), gl.row(i).data());
                  gl(i, static_cast<std::size_t>(tg[i])) -= s;
                }
              });
}

template <typename T>
Var Tape<T>::sum(Var a) {
  T acc{0};
  for (T v : value(a).flat()) acc += v;
  return push(Matrix<T>(1, 1, acc), any_grad({a}), [a](Tape& t, const Matrix<T>& g) {
    for (auto& v : t.grad_ref(a).flat()) v += g(0, 0);
  });
}

template <typename T>
Var Tape<T>::sum_squares(Var a) {
  const auto& A = value(a);
  const T acc = kernels::dot<T>(A.size(), A.data(), A.data());
  return push(Matrix<T>(1, 1, acc), any_grad({a}), [a](Tape& t, const Matrix<T>& g) {
    const auto& A = t.value(a);
    kernels::axpy<T>(A.size(), T(2) * g(0, 0), A.data(), t.grad_ref(a).data());
  });
}

template <typename T>
Var Tape<T>::weighted_sum(std::span<const Var> terms, std::span<const T> weights) {
  require<T>(terms.size() == weights.size(), "weighted_sum: size mismatch");
  T acc{0};
  bool ng = false;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const auto& v = value(terms[i]);
    require<T>(v.rows() == 1 && v.cols() == 1, "weighted_sum: terms must be 1x1");
    acc += weights[i] * v(0, 0);
    ng = ng || (record_ && nodes_[terms[i].id].needs_grad);
  }
  std::vector<Var> ts(terms.begin(), terms.end());
  std::vector<T> ws(weights.begin(), weights.end());
  return push(Matrix<T>(1, 1, acc), ng, [ts = std::move(ts), ws = std::move(ws)](Tape& t, const Matrix<T>& g) {
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (t.nodes_[ts[i].id].needs_grad) t.grad_ref(ts[i])(0, 0) += ws[i] * g(0, 0);
    }
  });
}

template class Tape<float>;
template class Tape<double>;

}  // namespace fscap
