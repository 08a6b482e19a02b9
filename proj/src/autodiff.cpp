#include "ghost/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace ghost::ad {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<EMat>;
using MapConst = Eigen::Map<const EMat>;

MapConst as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return MapConst(t.data(), static_cast<Eigen::Index>(rows),
                  static_cast<Eigen::Index>(cols));
}

MapMat as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MapMat(t.data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}

NodePtr make_node(Tensor value, std::vector<NodePtr> parents,
                  std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents) {
    if (p->requires_grad) n->requires_grad = true;
  }
  if (n->requires_grad) n->backprop = std::move(backprop);
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.value().shape_str() + " vs " +
                                b.value().shape_str());
  }
}

// Elementwise unary op with derivative computed from (input, output) pairs.
template <typename Fwd, typename Dfn>
Var unary_elementwise(const Var& a, Fwd f, Dfn dfdx) {
  Tensor out(a.value().shape());
  const double* x = a.value().data();
  double* y = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) y[i] = f(x[i]);
  auto pa = a.node();
  return Var::from_node(make_node(
      std::move(out), {pa}, [pa, dfdx](Node& self) {
        if (!pa->requires_grad) return;
        Tensor& g = pa->grad_buffer();
        const double* x = pa->value.data();
        const double* y = self.value.data();
        const double* gy = self.grad.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
          g.at(i) += gy[i] * dfdx(x[i], y[i]);
        }
      }));
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (!grad_ready) {
    grad = Tensor(value.shape());
    grad_ready = true;
  }
  return grad;
}

Var::Var(Tensor value, bool requires_grad) {
  node_ = std::make_shared<Node>();
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

const Tensor& Var::grad() const {
  static const Tensor kEmpty;
  if (!node_ || !node_->grad_ready) return kEmpty;
  return node_->grad;
}

Var constant(Tensor value) { return Var(std::move(value), false); }

Var make_op(Tensor value, std::vector<NodePtr> parents,
            std::function<void(Node&)> backprop) {
  return Var::from_node(
      make_node(std::move(value), std::move(parents), std::move(backprop)));
}

void backward(const Var& root) {
  if (!root.defined()) throw std::logic_error("backward on undefined Var");
  if (root.value().size() != 1) {
    throw std::logic_error("backward requires a scalar root, got shape " +
                           root.value().shape_str());
  }
  // Iterative post-order DFS for the topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  root.node()->grad_buffer().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->grad_ready) n->backprop(*n);
  }
}

void zero_grad(std::span<const Var> params) {
  for (const Var& p : params) {
    if (p.defined() && p.node()->grad_ready) p.node()->grad.fill(0.0);
  }
}

// ---- arithmetic -------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a.value();
  const double* bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out.at(i) += bv[i];
  auto pa = a.node(), pb = b.node();
  return Var::from_node(make_node(std::move(out), {pa, pb}, [pa, pb](Node& self) {
    const double* g = self.grad.data();
    for (const auto& p : {pa, pb}) {
      if (!p->requires_grad) continue;
      Tensor& pg = p->grad_buffer();
      for (std::size_t i = 0; i < pg.size(); ++i) pg.at(i) += g[i];
    }
  }));
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a.value();
  const double* bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out.at(i) -= bv[i];
  auto pa = a.node(), pb = b.node();
  return Var::from_node(make_node(std::move(out), {pa, pb}, [pa, pb](Node& self) {
    const double* g = self.grad.data();
    if (pa->requires_grad) {
      Tensor& pg = pa->grad_buffer();
      for (std::size_t i = 0; i < pg.size(); ++i) pg.at(i) += g[i];
    }
    if (pb->requires_grad) {
      Tensor& pg = pb->grad_buffer();
      for (std::size_t i = 0; i < pg.size(); ++i) pg.at(i) -= g[i];
    }
  }));
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a.value();
  const double* bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out.at(i) *= bv[i];
  auto pa = a.node(), pb = b.node();
  return Var::from_node(make_node(std::move(out), {pa, pb}, [pa, pb](Node& self) {
    const double* g = self.grad.data();
    if (pa->requires_grad) {
      Tensor& pg = pa->grad_buffer();
      const double* bv = pb->value.data();
      for (std::size_t i = 0; i < pg.size(); ++i) pg.at(i) += g[i] * bv[i];
    }
    if (pb->requires_grad) {
      Tensor& pg = pb->grad_buffer();
      const double* av = pa->value.data();
      for (std::size_t i = 0; i < pg.size(); ++i) pg.at(i) += g[i] * av[i];
    }
  }));
}

Var add_rowvec(const Var& m, const Var& row) {
  if (m.value().rank() != 2 || row.value().rank() != 1 ||
      m.value().cols() != row.value().extent(0)) {
    throw std::invalid_argument("add_rowvec: need (N,C) and (C)");
  }
  const std::size_t n = m.value().rows(), c = m.value().cols();
  Tensor out = m.value();
  const double* rv = row.value().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) o[j] += rv[j];
  }
  auto pm = m.node(), pr = row.node();
  return Var::from_node(make_node(std::move(out), {pm, pr}, [pm, pr, n, c](Node& self) {
    const double* g = self.grad.data();
    if (pm->requires_grad) {
      Tensor& pg = pm->grad_buffer();
      for (std::size_t i = 0; i < pg.size(); ++i) pg.at(i) += g[i];
    }
    if (pr->requires_grad) {
      Tensor& pg = pr->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        const double* gi = g + i * c;
        for (std::size_t j = 0; j < c; ++j) pg.at(j) += gi[j];
      }
    }
  }));
}

Var scale(const Var& a, double k) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.at(i) *= k;
  auto pa = a.node();
  return Var::from_node(make_node(std::move(out), {pa}, [pa, k](Node& self) {
    if (!pa->requires_grad) return;
    Tensor& pg = pa->grad_buffer();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < pg.size(); ++i) pg.at(i) += k * g[i];
  }));
}

Var add_const(const Var& a, double k) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.at(i) += k;
  auto pa = a.node();
  return Var::from_node(make_node(std::move(out), {pa}, [pa](Node& self) {
    if (!pa->requires_grad) return;
    Tensor& pg = pa->grad_buffer();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < pg.size(); ++i) pg.at(i) += g[i];
  }));
}

// ---- matrix products --------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 ||
      a.value().cols() != b.value().rows()) {
    throw std::invalid_argument("matmul: incompatible shapes " +
                                a.value().shape_str() + " x " +
                                b.value().shape_str());
  }
  const std::size_t n = a.value().rows(), k = a.value().cols(),
                    m = b.value().cols();
  Tensor out({n, m});
  as_matrix(out, n, m).noalias() =
      as_matrix(a.value(), n, k) * as_matrix(b.value(), k, m);
  auto pa = a.node(), pb = b.node();
  return Var::from_node(make_node(std::move(out), {pa, pb}, [pa, pb, n, k, m](Node& self) {
    auto gout = as_matrix(self.grad, n, m);
    if (pa->requires_grad) {
      as_matrix(pa->grad_buffer(), n, k).noalias() +=
          gout * as_matrix(pb->value, k, m).transpose();
    }
    if (pb->requires_grad) {
      as_matrix(pb->grad_buffer(), k, m).noalias() +=
          as_matrix(pa->value, n, k).transpose() * gout;
    }
  }));
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 ||
      a.value().cols() != b.value().cols()) {
    throw std::invalid_argument("matmul_nt: incompatible shapes");
  }
  const std::size_t n = a.value().rows(), k = a.value().cols(),
                    m = b.value().rows();
  Tensor out({n, m});
  as_matrix(out, n, m).noalias() =
      as_matrix(a.value(), n, k) * as_matrix(b.value(), m, k).transpose();
  auto pa = a.node(), pb = b.node();
  return Var::from_node(make_node(std::move(out), {pa, pb}, [pa, pb, n, k, m](Node& self) {
    auto gout = as_matrix(self.grad, n, m);
    if (pa->requires_grad) {
      as_matrix(pa->grad_buffer(), n, k).noalias() +=
          gout * as_matrix(pb->value, m, k);
    }
    if (pb->requires_grad) {
      as_matrix(pb->grad_buffer(), m, k).noalias() +=
          gout.transpose() * as_matrix(pa->value, n, k);
    }
  }));
}

// ---- activations ------------------------------------------------------------

Var relu(const Var& a) {
  return unary_elementwise(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var hinge(const Var& a) { return relu(a); }

Var leaky_relu(const Var& a, double slope) {
  return unary_elementwise(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var tanh_act(const Var& a) {
  return unary_elementwise(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var exp_elem(const Var& a) {
  return unary_elementwise(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var log_elem(const Var& a) {
  return unary_elementwise(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

// ---- reductions -------------------------------------------------------------

Var sum(const Var& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) s += a.value().at(i);
  auto pa = a.node();
  return Var::from_node(make_node(Tensor::scalar(s), {pa}, [pa](Node& self) {
    if (!pa->requires_grad) return;
    Tensor& pg = pa->grad_buffer();
    const double g = self.grad.at(0);
    for (std::size_t i = 0; i < pg.size(); ++i) pg.at(i) += g;
  }));
}

Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw std::invalid_argument("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var row_sum(const Var& a) {
  if (a.value().rank() != 2) throw std::invalid_argument("row_sum needs 2D");
  const std::size_t n = a.value().rows(), c = a.value().cols();
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    const double* r = a.value().data() + i * c;
    for (std::size_t j = 0; j < c; ++j) s += r[j];
    out.at(i) = s;
  }
  auto pa = a.node();
  return Var::from_node(make_node(std::move(out), {pa}, [pa, n, c](Node& self) {
    if (!pa->requires_grad) return;
    Tensor& pg = pa->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = self.grad.at(i);
      double* r = pg.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) r[j] += g;
    }
  }));
}

// ---- structural ops ---------------------------------------------------------

Var gather_rows(const Var& m, std::vector<std::size_t> rows) {
  if (m.value().rank() != 2) throw std::invalid_argument("gather_rows needs 2D");
  const std::size_t c = m.value().cols();
  Tensor out = m.value().gather_rows(rows);
  auto pm = m.node();
  return Var::from_node(
      make_node(std::move(out), {pm}, [pm, rows = std::move(rows), c](Node& self) {
        if (!pm->requires_grad) return;
        Tensor& pg = pm->grad_buffer();
        for (std::size_t i = 0; i < rows.size(); ++i) {
          const double* g = self.grad.data() + i * c;
          double* dst = pg.data() + rows[i] * c;
          for (std::size_t j = 0; j < c; ++j) dst[j] += g[j];
        }
      }));
}

Var concat_cols(const Var& a, const Var& b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 ||
      a.value().rows() != b.value().rows()) {
    throw std::invalid_argument("concat_cols: row mismatch");
  }
  const std::size_t n = a.value().rows(), ca = a.value().cols(),
                    cb = b.value().cols();
  Tensor out({n, ca + cb});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(a.value().data() + i * ca, a.value().data() + (i + 1) * ca,
              out.data() + i * (ca + cb));
    std::copy(b.value().data() + i * cb, b.value().data() + (i + 1) * cb,
              out.data() + i * (ca + cb) + ca);
  }
  auto pa = a.node(), pb = b.node();
  return Var::from_node(make_node(std::move(out), {pa, pb}, [pa, pb, n, ca, cb](Node& self) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* g = self.grad.data() + i * (ca + cb);
      if (pa->requires_grad) {
        double* ga = pa->grad_buffer().data() + i * ca;
        for (std::size_t j = 0; j < ca; ++j) ga[j] += g[j];
      }
      if (pb->requires_grad) {
        double* gb = pb->grad_buffer().data() + i * cb;
        for (std::size_t j = 0; j < cb; ++j) gb[j] += g[ca + j];
      }
    }
  }));
}

Var reshape(const Var& a, std::vector<std::size_t> shape) {
  Tensor out = a.value().reshaped(shape);
  auto pa = a.node();
  return Var::from_node(make_node(std::move(out), {pa}, [pa](Node& self) {
    if (!pa->requires_grad) return;
    Tensor& pg = pa->grad_buffer();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < pg.size(); ++i) pg.at(i) += g[i];
  }));
}

Var select_cols(const Var& m, std::vector<std::size_t> cols) {
  if (m.value().rank() != 2 || cols.size() != m.value().rows()) {
    throw std::invalid_argument("select_cols: need one column per row");
  }
  const std::size_t n = m.value().rows(), c = m.value().cols();
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) {
    if (cols[i] >= c) throw std::out_of_range("select_cols: column index");
    out.at(i) = m.value().at(i, cols[i]);
  }
  auto pm = m.node();
  return Var::from_node(
      make_node(std::move(out), {pm}, [pm, cols = std::move(cols), c](Node& self) {
        if (!pm->requires_grad) return;
        Tensor& pg = pm->grad_buffer();
        for (std::size_t i = 0; i < cols.size(); ++i) {
          pg.data()[i * c + cols[i]] += self.grad.at(i);
        }
      }));
}

Var masked_logsumexp(const Var& m, Tensor mask) {
  if (!m.value().same_shape(mask)) {
    throw std::invalid_argument("masked_logsumexp: mask shape mismatch");
  }
  const std::size_t n = m.value().rows(), c = m.value().cols();
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = m.value().data() + i * c;
    const double* w = mask.data() + i * c;
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      if (w[j] != 0.0 && x[j] > hi) hi = x[j];
    }
    if (!std::isfinite(hi)) {
      throw std::invalid_argument("masked_logsumexp: empty mask row");
    }
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (w[j] != 0.0) s += w[j] * std::exp(x[j] - hi);
    }
    out.at(i) = hi + std::log(s);
  }
  auto pm = m.node();
  return Var::from_node(
      make_node(std::move(out), {pm}, [pm, mask = std::move(mask), n, c](Node& self) {
        if (!pm->requires_grad) return;
        Tensor& pg = pm->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          const double g = self.grad.at(i);
          if (g == 0.0) continue;
          const double lse = self.value.at(i);
          const double* x = pm->value.data() + i * c;
          const double* w = mask.data() + i * c;
          double* dst = pg.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) {
            if (w[j] != 0.0) dst[j] += g * w[j] * std::exp(x[j] - lse);
          }
        }
      }));
}

// ---- norms ------------------------------------------------------------------

Var row_norm(const Var& a, double eps) {
  if (a.value().rank() != 2) throw std::invalid_argument("row_norm needs 2D");
  const std::size_t n = a.value().rows(), c = a.value().cols();
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    const double* r = a.value().data() + i * c;
    for (std::size_t j = 0; j < c; ++j) s += r[j] * r[j];
    out.at(i) = std::sqrt(s) + eps;
  }
  auto pa = a.node();
  return Var::from_node(make_node(std::move(out), {pa}, [pa, eps, n, c](Node& self) {
    if (!pa->requires_grad) return;
    Tensor& pg = pa->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      const double norm = self.value.at(i) - eps;
      if (norm == 0.0) continue;  // subgradient 0 at the origin
      const double g = self.grad.at(i) / norm;
      const double* r = pa->value.data() + i * c;
      double* dst = pg.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) dst[j] += g * r[j];
    }
  }));
}

Var normalize_rows(const Var& a, double eps) {
  if (a.value().rank() != 2) {
    throw std::invalid_argument("normalize_rows needs 2D");
  }
  const std::size_t n = a.value().rows(), c = a.value().cols();
  Tensor out({n, c});
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    const double* r = a.value().data() + i * c;
    for (std::size_t j = 0; j < c; ++j) s += r[j] * r[j];
    const double norm = std::sqrt(s);
    norms[i] = norm;
    const double inv = norm == 0.0 ? 0.0 : 1.0 / (norm + eps);
    double* o = out.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) o[j] = r[j] * inv;
  }
  auto pa = a.node();
  return Var::from_node(make_node(
      std::move(out), {pa}, [pa, norms = std::move(norms), eps, n, c](Node& self) {
        if (!pa->requires_grad) return;
        Tensor& pg = pa->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          const double norm = norms[i];
          if (norm == 0.0) continue;  // zero rows stay constant
          const double denom = norm + eps;
          const double* r = pa->value.data() + i * c;
          const double* g = self.grad.data() + i * c;
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += g[j] * r[j];
          const double k = dot / (denom * denom * norm);
          double* dst = pg.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) {
            dst[j] += g[j] / denom - k * r[j];
          }
        }
      }));
}

Var cosine_scores(const Var& features, const Var& proxies, double eps) {
  const Tensor& f = features.value();
  const Tensor& p = proxies.value();
  if (f.rank() != 2 || p.rank() != 2 || f.cols() != p.cols()) {
    throw std::invalid_argument("cosine_scores: need (N,d) and (C,d)");
  }
  const std::size_t n = f.rows(), d = f.cols(), cc = p.rows();
  std::vector<double> fn(n), pn(cc);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += f.at(i, j) * f.at(i, j);
    fn[i] = std::sqrt(s);
    if (fn[i] == 0.0) {
      throw std::domain_error("cosine_scores: zero-norm feature row");
    }
  }
  for (std::size_t i = 0; i < cc; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += p.at(i, j) * p.at(i, j);
    pn[i] = std::sqrt(s);
    if (pn[i] == 0.0) {
      throw std::domain_error("cosine_scores: zero-norm proxy row");
    }
  }
  Tensor out({n, cc});
  as_matrix(out, n, cc).noalias() =
      as_matrix(f, n, d) * as_matrix(p, cc, d).transpose();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < cc; ++j) {
      out.at(i, j) /= (fn[i] + eps) * (pn[j] + eps);
    }
  }
  auto pf = features.node(), pp = proxies.node();
  return Var::from_node(make_node(
      std::move(out), {pf, pp},
      [pf, pp, fn = std::move(fn), pn = std::move(pn), eps, n, d, cc](Node& self) {
        // S = U/(ab); dU = dS/(ab); da_i = -(1/a_i) sum_c dS*S
        Tensor du({n, cc});
        std::vector<double> da(n, 0.0), db(cc, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          const double a = fn[i] + eps;
          for (std::size_t j = 0; j < cc; ++j) {
            const double b = pn[j] + eps;
            const double gs = self.grad.at(i, j);
            du.at(i, j) = gs / (a * b);
            const double gss = gs * self.value.at(i, j);
            da[i] -= gss / a;
            db[j] -= gss / b;
          }
        }
        if (pf->requires_grad) {
          Tensor& g = pf->grad_buffer();
          as_matrix(g, n, d).noalias() +=
              as_matrix(du, n, cc) * as_matrix(pp->value, cc, d);
          for (std::size_t i = 0; i < n; ++i) {
            const double k = da[i] / fn[i];
            for (std::size_t j = 0; j < d; ++j) {
              g.at(i, j) += k * pf->value.at(i, j);
            }
          }
        }
        if (pp->requires_grad) {
          Tensor& g = pp->grad_buffer();
          as_matrix(g, cc, d).noalias() +=
              as_matrix(du, n, cc).transpose() * as_matrix(pf->value, n, d);
          for (std::size_t i = 0; i < cc; ++i) {
            const double k = db[i] / pn[i];
            for (std::size_t j = 0; j < d; ++j) {
              g.at(i, j) += k * pp->value.at(i, j);
            }
          }
        }
      }));
}

// ---- convolution ------------------------------------------------------------

namespace {

struct ConvDims {
  std::size_t n, cin, h, w, cout, k, oh, ow;
  int stride, pad;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernel, int stride,
                   int pad) {
  if (input.rank() != 4 || kernel.rank() != 4) {
    throw std::invalid_argument("conv2d: need NCHW input and FCKK kernel");
  }
  ConvDims d;
  d.n = input.extent(0);
  d.cin = input.extent(1);
  d.h = input.extent(2);
  d.w = input.extent(3);
  d.cout = kernel.extent(0);
  d.k = kernel.extent(2);
  if (kernel.extent(1) != d.cin || kernel.extent(3) != d.k) {
    throw std::invalid_argument("conv2d: kernel/input channel mismatch");
  }
  d.stride = stride;
  d.pad = pad;
  const long oh = (static_cast<long>(d.h) + 2 * pad - static_cast<long>(d.k)) / stride + 1;
  const long ow = (static_cast<long>(d.w) + 2 * pad - static_cast<long>(d.k)) / stride + 1;
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: empty output");
  d.oh = static_cast<std::size_t>(oh);
  d.ow = static_cast<std::size_t>(ow);
  return d;
}

// col is (cin*k*k) x (n*oh*ow), row-major.
void im2col(const Tensor& input, const ConvDims& d, Tensor& col) {
  const std::size_t L = d.oh * d.ow;
  const std::size_t cols = d.n * L;
  for (std::size_t c = 0; c < d.cin; ++c) {
    for (std::size_t ki = 0; ki < d.k; ++ki) {
      for (std::size_t kj = 0; kj < d.k; ++kj) {
        const std::size_t r = (c * d.k + ki) * d.k + kj;
        double* dst = col.data() + r * cols;
        for (std::size_t n = 0; n < d.n; ++n) {
          const double* img = input.data() + (n * d.cin + c) * d.h * d.w;
          for (std::size_t oy = 0; oy < d.oh; ++oy) {
            const long iy = static_cast<long>(oy) * d.stride - d.pad + static_cast<long>(ki);
            double* out = dst + n * L + oy * d.ow;
            if (iy < 0 || iy >= static_cast<long>(d.h)) {
              std::fill(out, out + d.ow, 0.0);
              continue;
            }
            const double* src = img + static_cast<std::size_t>(iy) * d.w;
            for (std::size_t ox = 0; ox < d.ow; ++ox) {
              const long ix = static_cast<long>(ox) * d.stride - d.pad + static_cast<long>(kj);
              out[ox] = (ix < 0 || ix >= static_cast<long>(d.w))
                            ? 0.0
                            : src[static_cast<std::size_t>(ix)];
            }
          }
        }
      }
    }
  }
}

void col2im_add(const Tensor& col, const ConvDims& d, Tensor& dinput) {
  const std::size_t L = d.oh * d.ow;
  const std::size_t cols = d.n * L;
  for (std::size_t c = 0; c < d.cin; ++c) {
    for (std::size_t ki = 0; ki < d.k; ++ki) {
      for (std::size_t kj = 0; kj < d.k; ++kj) {
        const std::size_t r = (c * d.k + ki) * d.k + kj;
        const double* src = col.data() + r * cols;
        for (std::size_t n = 0; n < d.n; ++n) {
          double* img = dinput.data() + (n * d.cin + c) * d.h * d.w;
          for (std::size_t oy = 0; oy < d.oh; ++oy) {
            const long iy = static_cast<long>(oy) * d.stride - d.pad + static_cast<long>(ki);
            if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
            const double* g = src + n * L + oy * d.ow;
            double* drow = img + static_cast<std::size_t>(iy) * d.w;
            for (std::size_t ox = 0; ox < d.ow; ++ox) {
              const long ix = static_cast<long>(ox) * d.stride - d.pad + static_cast<long>(kj);
              if (ix >= 0 && ix < static_cast<long>(d.w)) {
                drow[static_cast<std::size_t>(ix)] += g[ox];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& input, const Var& kernel, const Var& bias, int stride,
           int pad) {
  const ConvDims d = conv_dims(input.value(), kernel.value(), stride, pad);
  if (bias.value().rank() != 1 || bias.value().extent(0) != d.cout) {
    throw std::invalid_argument("conv2d: bias must be (cout)");
  }
  const std::size_t K = d.cin * d.k * d.k;
  const std::size_t L = d.oh * d.ow;
  auto col = std::make_shared<Tensor>(Tensor({K, d.n * L}));
  im2col(input.value(), d, *col);

  // (cout x K) * (K x n*L) in one GEMM, then scatter to NCHW.
  Tensor flat({d.cout, d.n * L});
  as_matrix(flat, d.cout, d.n * L).noalias() =
      as_matrix(kernel.value(), d.cout, K) * as_matrix(*col, K, d.n * L);
  Tensor out({d.n, d.cout, d.oh, d.ow});
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t f = 0; f < d.cout; ++f) {
      const double b = bias.value().at(f);
      const double* src = flat.data() + f * (d.n * L) + n * L;
      double* dst = out.data() + (n * d.cout + f) * L;
      for (std::size_t l = 0; l < L; ++l) dst[l] = src[l] + b;
    }
  }
  auto pi = input.node(), pk = kernel.node(), pb = bias.node();
  return Var::from_node(make_node(
      std::move(out), {pi, pk, pb}, [pi, pk, pb, col, d, K, L](Node& self) {
        // regroup dout to (cout x n*L)
        Tensor gflat({d.cout, d.n * L});
        for (std::size_t n = 0; n < d.n; ++n) {
          for (std::size_t f = 0; f < d.cout; ++f) {
            const double* src = self.grad.data() + (n * d.cout + f) * L;
            double* dst = gflat.data() + f * (d.n * L) + n * L;
            std::copy(src, src + L, dst);
          }
        }
        if (pb->requires_grad) {
          Tensor& gb = pb->grad_buffer();
          for (std::size_t f = 0; f < d.cout; ++f) {
            const double* row = gflat.data() + f * (d.n * L);
            double s = 0.0;
            for (std::size_t i = 0; i < d.n * L; ++i) s += row[i];
            gb.at(f) += s;
          }
        }
        if (pk->requires_grad) {
          as_matrix(pk->grad_buffer(), d.cout, K).noalias() +=
              as_matrix(gflat, d.cout, d.n * L) *
              as_matrix(*col, K, d.n * L).transpose();
        }
        if (pi->requires_grad) {
          Tensor dcol({K, d.n * L});
          as_matrix(dcol, K, d.n * L).noalias() =
              as_matrix(pk->value, d.cout, K).transpose() *
              as_matrix(gflat, d.cout, d.n * L);
          col2im_add(dcol, d, pi->grad_buffer());
        }
      }));
}

Var max_pool2d(const Var& input, int window) {
  const Tensor& x = input.value();
  if (x.rank() != 4) throw std::invalid_argument("max_pool2d: need NCHW");
  const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2),
                    w = x.extent(3);
  const std::size_t win = static_cast<std::size_t>(window);
  if (win == 0 || h % win != 0 || w % win != 0) {
    throw std::invalid_argument("max_pool2d: extents must divide by window");
  }
  const std::size_t oh = h / win, ow = w / win;
  Tensor out({n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  std::size_t oi = 0;
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    const double* plane = x.data() + nc * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++oi) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t dy = 0; dy < win; ++dy) {
          const std::size_t iy = oy * win + dy;
          for (std::size_t dx = 0; dx < win; ++dx) {
            const std::size_t idx = iy * w + ox * win + dx;
            if (plane[idx] > best) {
              best = plane[idx];
              best_idx = nc * h * w + idx;
            }
          }
        }
        out.data()[oi] = best;
        (*argmax)[oi] = best_idx;
      }
    }
  }
  auto pi = input.node();
  return Var::from_node(make_node(std::move(out), {pi}, [pi, argmax](Node& self) {
    if (!pi->requires_grad) return;
    Tensor& g = pi->grad_buffer();
    for (std::size_t i = 0; i < argmax->size(); ++i) {
      g.data()[(*argmax)[i]] += self.grad.data()[i];
    }
  }));
}

Var pool_width_sum(const Var& a) {
  const Tensor& x = a.value();
  if (x.rank() != 4) throw std::invalid_argument("pool_width_sum: need NCHW");
  const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2),
                    w = x.extent(3);
  Tensor out({n, c * h});
  for (std::size_t i = 0; i < n * c * h; ++i) {
    const double* row = x.data() + i * w;
    double s = 0.0;
    for (std::size_t j = 0; j < w; ++j) s += row[j];
    out.data()[i] = s;
  }
  auto pa = a.node();
  return Var::from_node(make_node(std::move(out), {pa, }, [pa, n, c, h, w](Node& self) {
    if (!pa->requires_grad) return;
    Tensor& g = pa->grad_buffer();
    for (std::size_t i = 0; i < n * c * h; ++i) {
      const double gi = self.grad.data()[i];
      double* row = g.data() + i * w;
      for (std::size_t j = 0; j < w; ++j) row[j] += gi;
    }
  }));
}

Var pool_height_sum(const Var& a) {
  const Tensor& x = a.value();
  if (x.rank() != 4) throw std::invalid_argument("pool_height_sum: need NCHW");
  const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2),
                    w = x.extent(3);
  Tensor out({n, c * w});
  out.fill(0.0);
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    const double* plane = x.data() + nc * h * w;
    double* dst = out.data() + nc * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t j = 0; j < w; ++j) dst[j] += plane[y * w + j];
    }
  }
  auto pa = a.node();
  return Var::from_node(make_node(std::move(out), {pa}, [pa, n, c, h, w](Node& self) {
    if (!pa->requires_grad) return;
    Tensor& g = pa->grad_buffer();
    for (std::size_t nc = 0; nc < n * c; ++nc) {
      const double* gs = self.grad.data() + nc * w;
      double* plane = g.data() + nc * h * w;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t j = 0; j < w; ++j) plane[y * w + j] += gs[j];
      }
    }
  }));
}

}  // namespace ghost::ad
