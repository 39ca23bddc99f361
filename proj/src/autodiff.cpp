#include "glitchloc/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace glitchloc::ad {

namespace {

std::atomic<std::uint64_t> g_next_id{1};

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> values) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

void require_same_shape(const char* op, const Array& a, const Array& b) {
  if (a.shape() != b.shape()) {
    shape_fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_2d(const char* op, const Array& a) {
  if (a.shape().size() != 2) shape_fail(op, "expected 2-D array, got " + shape_str(a.shape()));
}

Array make_op(Shape shape, std::vector<double> values,
              std::vector<std::shared_ptr<Node>> parents, BackwardFn fn) {
  auto n = new_node(std::move(shape), std::move(values));
  bool req = false;
  for (const auto& p : parents) req = req || p->requires_grad;
  n->requires_grad = req;
  if (req) {
    n->parents = std::move(parents);
    n->backward = std::move(fn);
  }
  return Array::wrap(std::move(n));
}

bool wants_grad(const Node& self, std::size_t parent) {
  return self.parents[parent]->requires_grad;
}

}  // namespace

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("shape with non-positive dimension " + shape_str(s));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i > 0) os << "x";
    os << s[i];
  }
  os << ")";
  return os.str();
}

std::vector<double>& GradSink::buffer(const Node& n) {
  auto it = grads_.find(&n);
  if (it == grads_.end()) {
    it = grads_.emplace(&n, std::vector<double>(n.values.size(), 0.0)).first;
  }
  return it->second;
}

const std::vector<double>* GradSink::find(const Node& n) const {
  auto it = grads_.find(&n);
  return it == grads_.end() ? nullptr : &it->second;
}

std::vector<double>& BackwardCtx::grad_of(Node& n) {
  if (sink_ != nullptr && n.is_param) return sink_->buffer(n);
  if (n.grad.size() != n.values.size()) n.grad.assign(n.values.size(), 0.0);
  return n.grad;
}

Array Array::constant(Shape shape, std::vector<double> values) {
  if (shape_size(shape) != values.size()) {
    shape_fail("constant", "value count " + std::to_string(values.size()) +
                               " does not match shape " + shape_str(shape));
  }
  return Array::wrap(new_node(std::move(shape), std::move(values)));
}

Array Array::full(Shape shape, double value) {
  std::vector<double> v(shape_size(shape), value);
  return Array::wrap(new_node(std::move(shape), std::move(v)));
}

Array Array::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Array Array::scalar_value(double value) { return constant({1}, {value}); }

Array Array::param(Shape shape, std::vector<double> values) {
  Array a = constant(std::move(shape), std::move(values));
  a.node_->requires_grad = true;
  a.node_->is_param = true;
  return a;
}

Array Array::wrap(std::shared_ptr<Node> node) { return Array(std::move(node)); }

double Array::scalar() const {
  if (size() != 1) throw std::invalid_argument("scalar(): array has shape " + shape_str(shape()));
  return node_->values[0];
}

double Array::at(int r, int c) const {
  const auto& s = node_->shape;
  if (s.size() != 2) throw std::invalid_argument("at(r,c) on shape " + shape_str(s));
  return node_->values[static_cast<std::size_t>(r) * static_cast<std::size_t>(s[1]) +
                       static_cast<std::size_t>(c)];
}

// ---- elementwise ------------------------------------------------------------

namespace {

template <class Fwd>
Array binary_elementwise(const char* name, const Array& a, const Array& b, Fwd fwd,
                         BackwardFn back) {
  require_same_shape(name, a, b);
  std::vector<double> out(a.size());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  return make_op(a.shape(), std::move(out), {a.node(), b.node()}, std::move(back));
}

}  // namespace

Array add(const Array& a, const Array& b) {
  return binary_elementwise(
      "add", a, b, [](double x, double y) { return x + y; },
      [](Node& self, BackwardCtx& ctx) {
        const auto& g = ctx.grad_of(self);
        if (wants_grad(self, 0)) {
          auto& ga = ctx.grad_of(*self.parents[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (wants_grad(self, 1)) {
          auto& gb = ctx.grad_of(*self.parents[1]);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
      });
}

Array sub(const Array& a, const Array& b) {
  return binary_elementwise(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](Node& self, BackwardCtx& ctx) {
        const auto& g = ctx.grad_of(self);
        if (wants_grad(self, 0)) {
          auto& ga = ctx.grad_of(*self.parents[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (wants_grad(self, 1)) {
          auto& gb = ctx.grad_of(*self.parents[1]);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
      });
}

Array mul(const Array& a, const Array& b) {
  return binary_elementwise(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](Node& self, BackwardCtx& ctx) {
        const auto& g = ctx.grad_of(self);
        const auto& av = self.parents[0]->values;
        const auto& bv = self.parents[1]->values;
        if (wants_grad(self, 0)) {
          auto& ga = ctx.grad_of(*self.parents[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (wants_grad(self, 1)) {
          auto& gb = ctx.grad_of(*self.parents[1]);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
      });
}

Array div(const Array& a, const Array& b) {
  return binary_elementwise(
      "div", a, b, [](double x, double y) { return x / y; },
      [](Node& self, BackwardCtx& ctx) {
        const auto& g = ctx.grad_of(self);
        const auto& av = self.parents[0]->values;
        const auto& bv = self.parents[1]->values;
        if (wants_grad(self, 0)) {
          auto& ga = ctx.grad_of(*self.parents[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv[i];
        }
        if (wants_grad(self, 1)) {
          auto& gb = ctx.grad_of(*self.parents[1]);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
        }
      });
}

Array add_scalar(const Array& a, double c) {
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c;
  return make_op(a.shape(), std::move(out), {a.node()}, [](Node& self, BackwardCtx& ctx) {
    const auto& g = ctx.grad_of(self);
    auto& ga = ctx.grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Array mul_scalar(const Array& a, double c) {
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  return make_op(a.shape(), std::move(out), {a.node()}, [c](Node& self, BackwardCtx& ctx) {
    const auto& g = ctx.grad_of(self);
    auto& ga = ctx.grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

// ---- linear algebra ---------------------------------------------------------

Array matmul(const Array& a, const Array& b) {
  require_2d("matmul", a);
  require_2d("matmul", b);
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    shape_fail("matmul", "inner dimensions differ: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = av[static_cast<std::size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[static_cast<std::size_t>(p) * n];
      double* orow = &out[static_cast<std::size_t>(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return make_op({m, n}, std::move(out), {a.node(), b.node()},
                 [m, k, n](Node& self, BackwardCtx& ctx) {
                   const auto& g = ctx.grad_of(self);
                   const auto& av = self.parents[0]->values;
                   const auto& bv = self.parents[1]->values;
                   if (wants_grad(self, 0)) {
                     auto& ga = ctx.grad_of(*self.parents[0]);
                     // gA = g * B^T
                     for (int i = 0; i < m; ++i) {
                       for (int p = 0; p < k; ++p) {
                         double s = 0.0;
                         const double* grow = &g[static_cast<std::size_t>(i) * n];
                         const double* brow = &bv[static_cast<std::size_t>(p) * n];
                         for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
                         ga[static_cast<std::size_t>(i) * k + p] += s;
                       }
                     }
                   }
                   if (wants_grad(self, 1)) {
                     auto& gb = ctx.grad_of(*self.parents[1]);
                     // gB = A^T * g
                     for (int p = 0; p < k; ++p) {
                       for (int i = 0; i < m; ++i) {
                         const double aip = av[static_cast<std::size_t>(i) * k + p];
                         if (aip == 0.0) continue;
                         const double* grow = &g[static_cast<std::size_t>(i) * n];
                         double* gbrow = &gb[static_cast<std::size_t>(p) * n];
                         for (int j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
                       }
                     }
                   }
                 });
}

Array conv1d(const Array& x, const Array& w, const Array& b, int pad) {
  require_2d("conv1d", x);
  if (w.shape().size() != 3) shape_fail("conv1d", "weight must be 3-D, got " + shape_str(w.shape()));
  if (b.shape().size() != 1) shape_fail("conv1d", "bias must be 1-D, got " + shape_str(b.shape()));
  const int c_in = x.dim(0), t_in = x.dim(1);
  const int c_out = w.dim(0), wc = w.dim(1), kk = w.dim(2);
  if (wc != c_in) {
    shape_fail("conv1d", "input channels " + std::to_string(c_in) + " vs weight " +
                             shape_str(w.shape()));
  }
  if (b.dim(0) != c_out) shape_fail("conv1d", "bias size does not match output channels");
  const int p = pad < 0 ? (kk - 1) / 2 : pad;
  const int t_out = t_in + 2 * p - kk + 1;
  if (t_out <= 0) shape_fail("conv1d", "kernel longer than padded input");

  std::vector<double> out(static_cast<std::size_t>(c_out) * t_out);
  const auto xv = x.values();
  const auto wv = w.values();
  const auto bv = b.values();
  for (int o = 0; o < c_out; ++o) {
    double* orow = &out[static_cast<std::size_t>(o) * t_out];
    std::fill(orow, orow + t_out, bv[o]);
    for (int c = 0; c < c_in; ++c) {
      const double* xrow = &xv[static_cast<std::size_t>(c) * t_in];
      for (int q = 0; q < kk; ++q) {
        const double wgt = wv[(static_cast<std::size_t>(o) * c_in + c) * kk + q];
        if (wgt == 0.0) continue;
        const int t_lo = std::max(0, p - q);
        const int t_hi = std::min(t_out, t_in + p - q);
        for (int t = t_lo; t < t_hi; ++t) orow[t] += wgt * xrow[t + q - p];
      }
    }
  }
  return make_op(
      {c_out, t_out}, std::move(out), {x.node(), w.node(), b.node()},
      [c_in, t_in, c_out, kk, p, t_out](Node& self, BackwardCtx& ctx) {
        const auto& g = ctx.grad_of(self);
        const auto& xv = self.parents[0]->values;
        const auto& wv = self.parents[1]->values;
        if (wants_grad(self, 0)) {
          auto& gx = ctx.grad_of(*self.parents[0]);
          for (int o = 0; o < c_out; ++o) {
            const double* grow = &g[static_cast<std::size_t>(o) * t_out];
            for (int c = 0; c < c_in; ++c) {
              double* gxrow = &gx[static_cast<std::size_t>(c) * t_in];
              for (int q = 0; q < kk; ++q) {
                const double wgt = wv[(static_cast<std::size_t>(o) * c_in + c) * kk + q];
                if (wgt == 0.0) continue;
                const int t_lo = std::max(0, p - q);
                const int t_hi = std::min(t_out, t_in + p - q);
                for (int t = t_lo; t < t_hi; ++t) gxrow[t + q - p] += wgt * grow[t];
              }
            }
          }
        }
        if (wants_grad(self, 1)) {
          auto& gw = ctx.grad_of(*self.parents[1]);
          for (int o = 0; o < c_out; ++o) {
            const double* grow = &g[static_cast<std::size_t>(o) * t_out];
            for (int c = 0; c < c_in; ++c) {
              const double* xrow = &xv[static_cast<std::size_t>(c) * t_in];
              for (int q = 0; q < kk; ++q) {
                const int t_lo = std::max(0, p - q);
                const int t_hi = std::min(t_out, t_in + p - q);
                double s = 0.0;
                for (int t = t_lo; t < t_hi; ++t) s += grow[t] * xrow[t + q - p];
                gw[(static_cast<std::size_t>(o) * c_in + c) * kk + q] += s;
              }
            }
          }
        }
        if (wants_grad(self, 2)) {
          auto& gb = ctx.grad_of(*self.parents[2]);
          for (int o = 0; o < c_out; ++o) {
            const double* grow = &g[static_cast<std::size_t>(o) * t_out];
            double s = 0.0;
            for (int t = 0; t < t_out; ++t) s += grow[t];
            gb[o] += s;
          }
        }
      });
}

// ---- structure --------------------------------------------------------------

Array concat(const std::vector<Array>& parts, int axis) {
  if (parts.empty()) shape_fail("concat", "no inputs");
  if (axis != 0 && axis != 1) shape_fail("concat", "axis must be 0 or 1");
  for (const auto& p : parts) require_2d("concat", p);
  const int fixed = axis == 0 ? parts[0].dim(1) : parts[0].dim(0);
  int total = 0;
  for (const auto& p : parts) {
    const int f = axis == 0 ? p.dim(1) : p.dim(0);
    if (f != fixed) {
      shape_fail("concat", "incompatible shapes " + shape_str(parts[0].shape()) + " vs " +
                               shape_str(p.shape()));
    }
    total += axis == 0 ? p.dim(0) : p.dim(1);
  }
  const int rows = axis == 0 ? total : fixed;
  const int cols = axis == 0 ? fixed : total;
  std::vector<double> out(static_cast<std::size_t>(rows) * cols);
  std::vector<std::shared_ptr<Node>> parents;
  std::vector<int> offsets;
  parents.reserve(parts.size());
  int off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const auto pv = p.values();
    if (axis == 0) {
      std::copy(pv.begin(), pv.end(), out.begin() + static_cast<std::ptrdiff_t>(off) * cols);
      off += p.dim(0);
    } else {
      const int pc = p.dim(1);
      for (int r = 0; r < rows; ++r) {
        std::copy(pv.begin() + static_cast<std::ptrdiff_t>(r) * pc,
                  pv.begin() + static_cast<std::ptrdiff_t>(r + 1) * pc,
                  out.begin() + static_cast<std::ptrdiff_t>(r) * cols + off);
      }
      off += pc;
    }
    parents.push_back(p.node());
  }
  return make_op({rows, cols}, std::move(out), std::move(parents),
                 [axis, rows, cols, offsets](Node& self, BackwardCtx& ctx) {
                   const auto& g = ctx.grad_of(self);
                   for (std::size_t k = 0; k < self.parents.size(); ++k) {
                     if (!wants_grad(self, k)) continue;
                     auto& gp = ctx.grad_of(*self.parents[k]);
                     const auto& ps = self.parents[k]->shape;
                     const int off = offsets[k];
                     if (axis == 0) {
                       const std::size_t n = gp.size();
                       for (std::size_t i = 0; i < n; ++i) {
                         gp[i] += g[static_cast<std::size_t>(off) * cols + i];
                       }
                     } else {
                       const int pc = ps[1];
                       for (int r = 0; r < rows; ++r) {
                         for (int c = 0; c < pc; ++c) {
                           gp[static_cast<std::size_t>(r) * pc + c] +=
                               g[static_cast<std::size_t>(r) * cols + off + c];
                         }
                       }
                     }
                   }
                 });
}

Array slice_rows(const Array& x, int row0, int row1) {
  require_2d("slice_rows", x);
  const int rows = x.dim(0), cols = x.dim(1);
  if (row0 < 0 || row1 > rows || row0 >= row1) {
    shape_fail("slice_rows", "range [" + std::to_string(row0) + ", " + std::to_string(row1) +
                                 ") out of " + shape_str(x.shape()));
  }
  const int out_rows = row1 - row0;
  const auto xv = x.values();
  std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(row0) * cols,
                          xv.begin() + static_cast<std::ptrdiff_t>(row1) * cols);
  return make_op({out_rows, cols}, std::move(out), {x.node()},
                 [row0, cols](Node& self, BackwardCtx& ctx) {
                   const auto& g = ctx.grad_of(self);
                   auto& gx = ctx.grad_of(*self.parents[0]);
                   const std::size_t base = static_cast<std::size_t>(row0) * cols;
                   for (std::size_t i = 0; i < g.size(); ++i) gx[base + i] += g[i];
                 });
}

Array transpose(const Array& x) {
  require_2d("transpose", x);
  const int rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      out[static_cast<std::size_t>(c) * rows + r] = xv[static_cast<std::size_t>(r) * cols + c];
    }
  }
  return make_op({cols, rows}, std::move(out), {x.node()},
                 [rows, cols](Node& self, BackwardCtx& ctx) {
                   const auto& g = ctx.grad_of(self);
                   auto& gx = ctx.grad_of(*self.parents[0]);
                   for (int r = 0; r < rows; ++r) {
                     for (int c = 0; c < cols; ++c) {
                       gx[static_cast<std::size_t>(r) * cols + c] +=
                           g[static_cast<std::size_t>(c) * rows + r];
                     }
                   }
                 });
}

Array tile_rows(const Array& x, int n) {
  require_2d("tile_rows", x);
  if (x.dim(0) != 1) shape_fail("tile_rows", "expected {1,T}, got " + shape_str(x.shape()));
  if (n < 1) shape_fail("tile_rows", "replica count must be positive");
  const int cols = x.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n) * cols);
  const auto xv = x.values();
  for (int r = 0; r < n; ++r) {
    std::copy(xv.begin(), xv.end(), out.begin() + static_cast<std::ptrdiff_t>(r) * cols);
  }
  return make_op({n, cols}, std::move(out), {x.node()},
                 [n, cols](Node& self, BackwardCtx& ctx) {
                   const auto& g = ctx.grad_of(self);
                   auto& gx = ctx.grad_of(*self.parents[0]);
                   for (int r = 0; r < n; ++r) {
                     for (int c = 0; c < cols; ++c) gx[c] += g[static_cast<std::size_t>(r) * cols + c];
                   }
                 });
}

Array tile_cols(const Array& x, int n) {
  require_2d("tile_cols", x);
  if (x.dim(1) != 1) shape_fail("tile_cols", "expected {C,1}, got " + shape_str(x.shape()));
  if (n < 1) shape_fail("tile_cols", "replica count must be positive");
  const int rows = x.dim(0);
  std::vector<double> out(static_cast<std::size_t>(rows) * n);
  const auto xv = x.values();
  for (int r = 0; r < rows; ++r) std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(r) * n, n, xv[r]);
  return make_op({rows, n}, std::move(out), {x.node()},
                 [rows, n](Node& self, BackwardCtx& ctx) {
                   const auto& g = ctx.grad_of(self);
                   auto& gx = ctx.grad_of(*self.parents[0]);
                   for (int r = 0; r < rows; ++r) {
                     double s = 0.0;
                     for (int c = 0; c < n; ++c) s += g[static_cast<std::size_t>(r) * n + c];
                     gx[r] += s;
                   }
                 });
}

// ---- nonlinearities ----------------------------------------------------------

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

Array sigmoid(const Array& x) {
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(xv[i]);
  return make_op(x.shape(), std::move(out), {x.node()}, [](Node& self, BackwardCtx& ctx) {
    const auto& g = ctx.grad_of(self);
    auto& gx = ctx.grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = self.values[i];
      gx[i] += g[i] * s * (1.0 - s);
    }
  });
}

Array softplus(const Array& x) {
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_softplus(xv[i]);
  return make_op(x.shape(), std::move(out), {x.node()}, [](Node& self, BackwardCtx& ctx) {
    const auto& g = ctx.grad_of(self);
    const auto& xv = self.parents[0]->values;
    auto& gx = ctx.grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * stable_sigmoid(xv[i]);
  });
}

Array relu(const Array& x) {
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return make_op(x.shape(), std::move(out), {x.node()}, [](Node& self, BackwardCtx& ctx) {
    const auto& g = ctx.grad_of(self);
    const auto& xv = self.parents[0]->values;
    auto& gx = ctx.grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += g[i];
    }
  });
}

Array softmax(const Array& x, int axis) {
  require_2d("softmax", x);
  if (axis != 0 && axis != 1) shape_fail("softmax", "axis must be 0 or 1");
  const int rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(x.size());
  const auto xv = x.values();
  const int slices = axis == 1 ? rows : cols;
  const int len = axis == 1 ? cols : rows;
  const int stride = axis == 1 ? 1 : cols;
  auto slice_base = [&](int s) { return axis == 1 ? static_cast<std::size_t>(s) * cols : static_cast<std::size_t>(s); };
  for (int s = 0; s < slices; ++s) {
    const std::size_t base = slice_base(s);
    double mx = xv[base];
    for (int i = 1; i < len; ++i) mx = std::max(mx, xv[base + static_cast<std::size_t>(i) * stride]);
    double z = 0.0;
    for (int i = 0; i < len; ++i) {
      const double e = std::exp(xv[base + static_cast<std::size_t>(i) * stride] - mx);
      out[base + static_cast<std::size_t>(i) * stride] = e;
      z += e;
    }
    for (int i = 0; i < len; ++i) out[base + static_cast<std::size_t>(i) * stride] /= z;
  }
  return make_op(x.shape(), std::move(out), {x.node()},
                 [axis, rows, cols](Node& self, BackwardCtx& ctx) {
                   const auto& g = ctx.grad_of(self);
                   auto& gx = ctx.grad_of(*self.parents[0]);
                   const int slices = axis == 1 ? rows : cols;
                   const int len = axis == 1 ? cols : rows;
                   const int stride = axis == 1 ? 1 : cols;
                   for (int s = 0; s < slices; ++s) {
                     const std::size_t base =
                         axis == 1 ? static_cast<std::size_t>(s) * cols : static_cast<std::size_t>(s);
                     double dot = 0.0;
                     for (int i = 0; i < len; ++i) {
                       const std::size_t idx = base + static_cast<std::size_t>(i) * stride;
                       dot += g[idx] * self.values[idx];
                     }
                     for (int i = 0; i < len; ++i) {
                       const std::size_t idx = base + static_cast<std::size_t>(i) * stride;
                       gx[idx] += self.values[idx] * (g[idx] - dot);
                     }
                   }
                 });
}

Array layer_norm_channels(const Array& x) {
  require_2d("layer_norm_channels", x);
  constexpr double kEps = 1e-5;
  const int rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(x.size());
  std::vector<double> inv_std(static_cast<std::size_t>(cols));
  const auto xv = x.values();
  for (int c = 0; c < cols; ++c) {
    double mean = 0.0;
    for (int r = 0; r < rows; ++r) mean += xv[static_cast<std::size_t>(r) * cols + c];
    mean /= rows;
    double var = 0.0;
    for (int r = 0; r < rows; ++r) {
      const double d = xv[static_cast<std::size_t>(r) * cols + c] - mean;
      var += d * d;
    }
    var /= rows;
    const double is = 1.0 / std::sqrt(var + kEps);
    inv_std[static_cast<std::size_t>(c)] = is;
    for (int r = 0; r < rows; ++r) {
      const std::size_t idx = static_cast<std::size_t>(r) * cols + c;
      out[idx] = (xv[idx] - mean) * is;
    }
  }
  return make_op(x.shape(), std::move(out), {x.node()},
                 [rows, cols, inv_std](Node& self, BackwardCtx& ctx) {
                   const auto& g = ctx.grad_of(self);
                   auto& gx = ctx.grad_of(*self.parents[0]);
                   for (int c = 0; c < cols; ++c) {
                     double gmean = 0.0, gydot = 0.0;
                     for (int r = 0; r < rows; ++r) {
                       const std::size_t idx = static_cast<std::size_t>(r) * cols + c;
                       gmean += g[idx];
                       gydot += g[idx] * self.values[idx];
                     }
                     gmean /= rows;
                     gydot /= rows;
                     const double is = inv_std[static_cast<std::size_t>(c)];
                     for (int r = 0; r < rows; ++r) {
                       const std::size_t idx = static_cast<std::size_t>(r) * cols + c;
                       gx[idx] += is * (g[idx] - gmean - self.values[idx] * gydot);
                     }
                   }
                 });
}

// ---- reductions --------------------------------------------------------------

Array sum_all(const Array& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_op({1}, {s}, {x.node()}, [](Node& self, BackwardCtx& ctx) {
    const double g = ctx.grad_of(self)[0];
    auto& gx = ctx.grad_of(*self.parents[0]);
    for (double& v : gx) v += g;
  });
}

Array mean_all(const Array& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  return make_op({1}, {s * inv}, {x.node()}, [inv](Node& self, BackwardCtx& ctx) {
    const double g = ctx.grad_of(self)[0] * inv;
    auto& gx = ctx.grad_of(*self.parents[0]);
    for (double& v : gx) v += g;
  });
}

Array mean_rows(const Array& x) {
  require_2d("mean_rows", x);
  const int rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(static_cast<std::size_t>(cols), 0.0);
  const auto xv = x.values();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(c)] += xv[static_cast<std::size_t>(r) * cols + c];
  }
  const double inv = 1.0 / rows;
  for (double& v : out) v *= inv;
  return make_op({1, cols}, std::move(out), {x.node()},
                 [rows, cols, inv](Node& self, BackwardCtx& ctx) {
                   const auto& g = ctx.grad_of(self);
                   auto& gx = ctx.grad_of(*self.parents[0]);
                   for (int r = 0; r < rows; ++r) {
                     for (int c = 0; c < cols; ++c) {
                       gx[static_cast<std::size_t>(r) * cols + c] += g[static_cast<std::size_t>(c)] * inv;
                     }
                   }
                 });
}

Array l2norm_channels(const Array& x) {
  require_2d("l2norm_channels", x);
  const int rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(static_cast<std::size_t>(cols), 0.0);
  const auto xv = x.values();
  for (int c = 0; c < cols; ++c) {
    double s = 0.0;
    for (int r = 0; r < rows; ++r) {
      const double v = xv[static_cast<std::size_t>(r) * cols + c];
      s += v * v;
    }
    out[static_cast<std::size_t>(c)] = std::sqrt(s);
  }
  return make_op({1, cols}, std::move(out), {x.node()},
                 [rows, cols](Node& self, BackwardCtx& ctx) {
                   const auto& g = ctx.grad_of(self);
                   const auto& xv = self.parents[0]->values;
                   auto& gx = ctx.grad_of(*self.parents[0]);
                   for (int c = 0; c < cols; ++c) {
                     const double d = self.values[static_cast<std::size_t>(c)];
                     if (d <= 0.0) continue;  // zero column: subgradient 0
                     const double gc = g[static_cast<std::size_t>(c)] / d;
                     for (int r = 0; r < rows; ++r) {
                       const std::size_t idx = static_cast<std::size_t>(r) * cols + c;
                       gx[idx] += gc * xv[idx];
                     }
                   }
                 });
}

// ---- losses-oriented elementwise ops ------------------------------------------

Array squared_error(const Array& a, const Array& b) {
  return binary_elementwise(
      "squared_error", a, b, [](double x, double y) { return (x - y) * (x - y); },
      [](Node& self, BackwardCtx& ctx) {
        const auto& g = ctx.grad_of(self);
        const auto& av = self.parents[0]->values;
        const auto& bv = self.parents[1]->values;
        if (wants_grad(self, 0)) {
          auto& ga = ctx.grad_of(*self.parents[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * (av[i] - bv[i]) * g[i];
        }
        if (wants_grad(self, 1)) {
          auto& gb = ctx.grad_of(*self.parents[1]);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= 2.0 * (av[i] - bv[i]) * g[i];
        }
      });
}

namespace {
constexpr double kBceLo = 1e-7;
constexpr double kBceHi = 1.0 - 1e-7;
}  // namespace

Array bce(const Array& pred, const Array& target) {
  require_same_shape("bce", pred, target);
  std::vector<double> out(pred.size());
  const auto pv = pred.values();
  const auto yv = target.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double p = std::clamp(pv[i], kBceLo, kBceHi);
    out[i] = -(yv[i] * std::log(p) + (1.0 - yv[i]) * std::log(1.0 - p));
  }
  return make_op(pred.shape(), std::move(out), {pred.node(), target.node()},
                 [](Node& self, BackwardCtx& ctx) {
                   const auto& g = ctx.grad_of(self);
                   const auto& pv = self.parents[0]->values;
                   const auto& yv = self.parents[1]->values;
                   if (wants_grad(self, 0)) {
                     auto& gp = ctx.grad_of(*self.parents[0]);
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       if (pv[i] <= kBceLo || pv[i] >= kBceHi) continue;  // clamp region
                       gp[i] += g[i] * (pv[i] - yv[i]) / (pv[i] * (1.0 - pv[i]));
                     }
                   }
                 });
}

// ---- backward -----------------------------------------------------------------

namespace {

std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  if (!root->requires_grad) return order;
  // Iterative post-order DFS over parents that require grad.
  struct Frame {
    Node* node;
    std::size_t next;
  };
  std::unordered_set<Node*> pushed;
  std::vector<Frame> stack;
  stack.push_back({root, 0});
  pushed.insert(root);
  while (!stack.empty()) {
    Frame& top = stack.back();
    if (top.next == top.node->parents.size()) {
      order.push_back(top.node);
      stack.pop_back();
      continue;
    }
    Node* p = top.node->parents[top.next].get();
    ++top.next;
    if (p->requires_grad && pushed.insert(p).second) {
      stack.push_back({p, 0});  // invalidates `top`; re-fetched next iteration
    }
  }
  return order;
}

void backward_impl(const Array& root, GradSink* sink) {
  if (!root.defined() || root.size() != 1) {
    throw std::invalid_argument("backward: root must be a scalar array");
  }
  Node* r = root.node().get();
  const std::vector<Node*> order = topo_order(r);
  for (Node* n : order) {
    if (sink != nullptr && n->is_param) continue;
    n->grad.assign(n->values.size(), 0.0);
  }
  if (order.empty()) return;  // constant root; nothing depends on parameters
  BackwardCtx ctx(sink);
  ctx.grad_of(*r)[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n, ctx);
  }
}

}  // namespace

void backward(const Array& root) { backward_impl(root, nullptr); }

void backward(const Array& root, GradSink& sink) { backward_impl(root, &sink); }

// ---- gradient checking ----------------------------------------------------------

GradCheckReport grad_check(const std::function<Array(const std::vector<Array>&)>& fn,
                           std::vector<Array> point, double epsilon) {
  if (epsilon <= 0.0) throw std::invalid_argument("grad_check: epsilon must be positive");
  Array out = fn(point);
  if (out.size() != 1) throw std::invalid_argument("grad_check: function must return a scalar");
  if (!std::isfinite(out.scalar())) throw std::runtime_error("grad_check: non-finite output");
  for (auto& p : point) p.node()->grad.assign(p.size(), 0.0);
  backward(out);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(point.size());
  for (const auto& p : point) {
    auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(p.size(), 0.0);
  }

  GradCheckReport report;
  report.per_parameter.assign(point.size(), 0.0);
  for (std::size_t pi = 0; pi < point.size(); ++pi) {
    auto& vals = point[pi].mutable_values();
    for (std::size_t j = 0; j < vals.size(); ++j) {
      const double orig = vals[j];
      vals[j] = orig + epsilon;
      const double fp = fn(point).scalar();
      vals[j] = orig - epsilon;
      const double fm = fn(point).scalar();
      vals[j] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw std::runtime_error("grad_check: non-finite output at perturbed point");
      }
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double a = analytic[pi][j];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-8});
      report.per_parameter[pi] = std::max(report.per_parameter[pi], rel);
    }
    report.max_relative_error = std::max(report.max_relative_error, report.per_parameter[pi]);
  }
  return report;
}

}  // namespace glitchloc::ad
