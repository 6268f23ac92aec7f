#include "ibn/tensor.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_set>

#ifdef IBN_USE_CBLAS
#include <cblas.h>
#endif

namespace ibn {

static bool g_finite_checks = false;
static thread_local bool g_grad_enabled = true;

void set_finite_checks(bool on) { g_finite_checks = on; }
bool finite_checks_enabled() { return g_finite_checks; }
bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

static int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

static void check_finite(const char* op, const std::vector<double>& v) {
  if (!g_finite_checks) return;
  for (double x : v)
    if (!std::isfinite(x))
      throw std::runtime_error(std::string(op) + ": non-finite value");
}

static void ensure_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::runtime_error(std::string(op) + ": shape mismatch");
}

// ---------------------------------------------------------------- factories

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->v.assign(size_t(shape_numel(shape)), 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(impl);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (auto& x : t.values()) x = value;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != int64_t(values.size()))
    throw std::runtime_error("Tensor::from: size mismatch");
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->v = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(impl);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (auto& x : t.values()) x = rng.normal() * stddev;
  return t;
}

Tensor Tensor::rand_uniform(Shape shape, Rng& rng, double lo, double hi,
                            bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (auto& x : t.values()) x = rng.uniform(lo, hi);
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw std::runtime_error("Tensor::item: not a scalar");
  return impl_->v[0];
}

std::vector<double>& Tensor::grad() {
  impl_->ensure_grad();
  return impl_->grad;
}

// ---------------------------------------------------------------- backward

void Tensor::backward() const {
  if (size() != 1) throw std::runtime_error("backward: root must be scalar");
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  // iterative post-order DFS (graphs can be thousands of nodes deep)
  std::vector<std::pair<TensorImpl*, size_t>> stack;
  if (impl_->node) stack.push_back({impl_.get(), 0});
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    if (next == 0) {
      if (seen.count(t)) {
        stack.pop_back();
        continue;
      }
      seen.insert(t);
    }
    if (next < t->node->parents.size()) {
      TensorImpl* p = t->node->parents[next].get();
      ++next;
      if (p->node && !seen.count(p)) stack.push_back({p, 0});
    } else {
      order.push_back(t);
      stack.pop_back();
    }
  }
  impl_->ensure_grad();
  impl_->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = *it;
    if (t->grad.empty()) continue;  // nothing flowed into this output
    t->node->backward(*t);
  }
  if (g_finite_checks) {
    for (TensorImpl* t : order)
      for (auto& p : t->node->parents)
        if (!p->grad.empty()) check_finite("backward", p->grad);
  }
}

// ------------------------------------------------------------- op plumbing

static Tensor make_out(Shape shape) {
  auto impl = std::make_shared<TensorImpl>();
  impl->v.assign(size_t(shape_numel(shape)), 0.0);
  impl->shape = std::move(shape);
  return Tensor(impl);
}

static void attach(const char* op, Tensor& out,
                   std::vector<std::shared_ptr<TensorImpl>> parents,
                   std::function<void(const TensorImpl&)> backward) {
  check_finite(op, out.values());
  if (!g_grad_enabled) return;
  bool any = false;
  for (auto& p : parents) any = any || p->requires_grad;
  if (!any) return;
  out.impl()->requires_grad = true;
  auto node = std::make_shared<Node>();
  node->op = op;
  node->parents = std::move(parents);
  node->backward = std::move(backward);
  out.impl()->node = node;
}

template <class F, class DF>
static Tensor unary(const char* op, const Tensor& x, F f, DF df) {
  Tensor out = make_out(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (size_t i = 0; i < xv.size(); ++i) ov[i] = f(xv[i]);
  auto xi = x.impl();
  attach(op, out, {xi}, [xi, df](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    for (size_t i = 0; i < o.v.size(); ++i)
      xi->grad[i] += o.grad[i] * df(xi->v[i], o.v[i]);
  });
  return out;
}

template <class F, class DA, class DB>
static Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f,
                     DA da, DB db) {
  ensure_same_shape(op, a, b);
  Tensor out = make_out(a.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < av.size(); ++i) ov[i] = f(av[i], bv[i]);
  auto ai = a.impl();
  auto bi = b.impl();
  attach(op, out, {ai, bi}, [ai, bi, da, db](const TensorImpl& o) {
    if (ai->requires_grad) {
      ai->ensure_grad();
      for (size_t i = 0; i < o.v.size(); ++i)
        ai->grad[i] += o.grad[i] * da(ai->v[i], bi->v[i], o.v[i]);
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (size_t i = 0; i < o.v.size(); ++i)
        bi->grad[i] += o.grad[i] * db(ai->v[i], bi->v[i], o.v[i]);
    }
  });
  return out;
}

// ------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double z) { return -z / y; });
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  if (b.ndim() != 1 || b.dim(0) != x.shape().back())
    throw std::runtime_error("add_bias: bias must span the last axis");
  Tensor out = make_out(x.shape());
  int64_t n = b.dim(0);
  int64_t rows = x.size() / n;
  const auto& xv = x.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < n; ++j) ov[r * n + j] = xv[r * n + j] + bv[j];
  auto xi = x.impl();
  auto bi = b.impl();
  attach("add_bias", out, {xi, bi}, [xi, bi, rows, n](const TensorImpl& o) {
    if (xi->requires_grad) {
      xi->ensure_grad();
      for (size_t i = 0; i < o.v.size(); ++i) xi->grad[i] += o.grad[i];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < n; ++j) bi->grad[j] += o.grad[r * n + j];
    }
  });
  return out;
}

Tensor scale(const Tensor& x, double c) {
  return unary(
      "scale", x, [c](double v) { return c * v; },
      [c](double, double) { return c; });
}

Tensor add_const(const Tensor& x, double c) {
  return unary(
      "add_const", x, [c](double v) { return v + c; },
      [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor exp_t(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log_t(const Tensor& x) {
  return unary(
      "log", x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor tanh_t(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

static double sigmoid_stable(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x, sigmoid_stable,
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
  return unary(
      "softplus", x,
      [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v))); },
      [](double v, double) { return sigmoid_stable(v); });
}

Tensor gelu(const Tensor& x) {
  constexpr double k0 = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k1 = 0.044715;
  return unary(
      "gelu", x,
      [](double v) {
        double t = std::tanh(k0 * (v + k1 * v * v * v));
        return 0.5 * v * (1.0 + t);
      },
      [](double v, double) {
        double t = std::tanh(k0 * (v + k1 * v * v * v));
        double du = k0 * (1.0 + 3.0 * k1 * v * v);
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
      });
}

Tensor square(const Tensor& x) {
  return unary(
      "square", x, [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      "clamp", x,
      [lo, hi](double v) { return std::min(std::max(v, lo), hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary(
      "minimum", a, b, [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

Tensor sign_st(const Tensor& x) {
  // Hard binarization; gradients pass through unchanged.
  return unary(
      "sign_st", x, [](double v) { return v >= 0.0 ? 1.0 : -1.0; },
      [](double, double) { return 1.0; });
}

// ----------------------------------------------------------- matrix kernels

static void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k,
                 const double* a, int64_t lda, const double* b, int64_t ldb,
                 double beta, double* c, int64_t ldc) {
#ifdef IBN_USE_CBLAS
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, int(m), int(n), int(k), 1.0, a,
              int(lda), b, int(ldb), beta, c, int(ldc));
#else
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) {
        double av = ta ? a[p * lda + i] : a[i * lda + p];
        double bv = tb ? b[j * ldb + p] : b[p * ldb + j];
        acc += av * bv;
      }
      c[i * ldc + j] = beta * c[i * ldc + j] + acc;
    }
#endif
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw std::runtime_error("matmul: expected (M,K) x (K,N)");
  int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  Tensor out = make_out({M, N});
  gemm(false, false, M, N, K, a.data(), K, b.data(), N, 0.0,
       out.data(), N);
  auto ai = a.impl();
  auto bi = b.impl();
  attach("matmul", out, {ai, bi}, [ai, bi, M, K, N](const TensorImpl& o) {
    if (ai->requires_grad) {
      ai->ensure_grad();
      gemm(false, true, M, K, N, o.grad.data(), N, bi->v.data(), N, 1.0,
           ai->grad.data(), K);
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      gemm(true, false, K, N, M, ai->v.data(), K, o.grad.data(), N, 1.0,
           bi->grad.data(), N);
    }
  });
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(1))
    throw std::runtime_error("bmm: expected (B,M,K) x (B,K,N)");
  int64_t B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
  Tensor out = make_out({B, M, N});
  for (int64_t i = 0; i < B; ++i)
    gemm(false, false, M, N, K, a.data() + i * M * K, K,
         b.data() + i * K * N, N, 0.0, out.data() + i * M * N, N);
  auto ai = a.impl();
  auto bi = b.impl();
  attach("bmm", out, {ai, bi}, [ai, bi, B, M, K, N](const TensorImpl& o) {
    for (int64_t i = 0; i < B; ++i) {
      const double* og = o.grad.data() + i * M * N;
      if (ai->requires_grad) {
        ai->ensure_grad();
        gemm(false, true, M, K, N, og, N, bi->v.data() + i * K * N, N, 1.0,
             ai->grad.data() + i * M * K, K);
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        gemm(true, false, K, N, M, ai->v.data() + i * M * K, K, og, N, 1.0,
             bi->grad.data() + i * K * N, N);
      }
    }
  });
  return out;
}

Tensor bmm_nt(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(2))
    throw std::runtime_error("bmm_nt: expected (B,M,K) x (B,N,K)");
  int64_t B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(1);
  Tensor out = make_out({B, M, N});
  for (int64_t i = 0; i < B; ++i)
    gemm(false, true, M, N, K, a.data() + i * M * K, K,
         b.data() + i * N * K, K, 0.0, out.data() + i * M * N, N);
  auto ai = a.impl();
  auto bi = b.impl();
  attach("bmm_nt", out, {ai, bi}, [ai, bi, B, M, K, N](const TensorImpl& o) {
    for (int64_t i = 0; i < B; ++i) {
      const double* og = o.grad.data() + i * M * N;
      if (ai->requires_grad) {
        ai->ensure_grad();
        gemm(false, false, M, K, N, og, N, bi->v.data() + i * N * K, K, 1.0,
             ai->grad.data() + i * M * K, K);
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        gemm(true, false, N, K, M, og, N, ai->v.data() + i * M * K, K, 1.0,
             bi->grad.data() + i * N * K, K);
      }
    }
  });
  return out;
}

// ------------------------------------------------------------------- shape

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size())
    throw std::runtime_error("reshape: size mismatch");
  Tensor out = make_out(std::move(shape));
  out.values() = x.values();
  auto xi = x.impl();
  attach("reshape", out, {xi}, [xi](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    for (size_t i = 0; i < o.v.size(); ++i) xi->grad[i] += o.grad[i];
  });
  return out;
}

Tensor narrow1(const Tensor& x, int64_t lo, int64_t hi) {
  if (x.ndim() != 3 || lo < 0 || hi > x.dim(1) || lo >= hi)
    throw std::runtime_error("narrow1: bad slice");
  int64_t B = x.dim(0), M = x.dim(1), N = x.dim(2), L = hi - lo;
  Tensor out = make_out({B, L, N});
  for (int64_t b = 0; b < B; ++b)
    std::memcpy(out.data() + b * L * N, x.data() + (b * M + lo) * N,
                size_t(L * N) * sizeof(double));
  auto xi = x.impl();
  attach("narrow1", out, {xi}, [xi, B, M, N, lo, L](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t i = 0; i < L * N; ++i)
        xi->grad[(b * M + lo) * N + i] += o.grad[b * L * N + i];
  });
  return out;
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::runtime_error("concat_last: no inputs");
  int64_t rows = parts[0].size() / parts[0].shape().back();
  int64_t total = 0;
  for (const auto& p : parts) {
    if (p.size() / p.shape().back() != rows)
      throw std::runtime_error("concat_last: leading dims differ");
    total += p.shape().back();
  }
  Shape shape = parts[0].shape();
  shape.back() = total;
  Tensor out = make_out(std::move(shape));
  std::vector<std::shared_ptr<TensorImpl>> impls;
  int64_t off = 0;
  for (const auto& p : parts) {
    int64_t n = p.shape().back();
    for (int64_t r = 0; r < rows; ++r)
      std::memcpy(out.data() + r * total + off, p.data() + r * n,
                  size_t(n) * sizeof(double));
    off += n;
    impls.push_back(p.impl());
  }
  attach("concat_last", out, impls, [impls, rows, total](const TensorImpl& o) {
    int64_t off = 0;
    for (auto& pi : impls) {
      int64_t n = pi->size() / rows;
      if (pi->requires_grad) {
        pi->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < n; ++j)
            pi->grad[r * n + j] += o.grad[r * total + off + j];
      }
      off += n;
    }
  });
  return out;
}

// ------------------------------------------------- reductions and normalizers

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor out = make_out({1});
  out.values()[0] = s;
  auto xi = x.impl();
  attach("sum", out, {xi}, [xi](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    for (auto& g : xi->grad) g += o.grad[0];
  });
  return out;
}

Tensor mean(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  int64_t n = x.size();
  Tensor out = make_out({1});
  out.values()[0] = s / double(n);
  auto xi = x.impl();
  attach("mean", out, {xi}, [xi, n](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    double g = o.grad[0] / double(n);
    for (auto& gi : xi->grad) gi += g;
  });
  return out;
}

Tensor sum_last(const Tensor& x) {
  if (x.ndim() < 2) throw std::runtime_error("sum_last: need >= 2 dims");
  int64_t n = x.shape().back();
  int64_t rows = x.size() / n;
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  Tensor out = make_out(std::move(shape));
  for (int64_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) s += x.data()[r * n + j];
    out.data()[r] = s;
  }
  auto xi = x.impl();
  attach("sum_last", out, {xi}, [xi, rows, n](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t j = 0; j < n; ++j) xi->grad[r * n + j] += o.grad[r];
  });
  return out;
}

Tensor softmax_last(const Tensor& x) {
  int64_t n = x.shape().back();
  int64_t rows = x.size() / n;
  Tensor out = make_out(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * n;
    double* yr = out.data() + r * n;
    double m = xr[0];
    for (int64_t j = 1; j < n; ++j) m = std::max(m, xr[j]);
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - m);
      s += yr[j];
    }
    for (int64_t j = 0; j < n; ++j) yr[j] /= s;
  }
  auto xi = x.impl();
  attach("softmax_last", out, {xi}, [xi, rows, n](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const double* y = o.v.data() + r * n;
      const double* g = o.grad.data() + r * n;
      double dot = 0.0;
      for (int64_t j = 0; j < n; ++j) dot += g[j] * y[j];
      for (int64_t j = 0; j < n; ++j)
        xi->grad[r * n + j] += y[j] * (g[j] - dot);
    }
  });
  return out;
}

Tensor layernorm_last(const Tensor& x, const Tensor& gain, const Tensor& bias,
                      double eps) {
  int64_t n = x.shape().back();
  if (gain.size() != n || bias.size() != n)
    throw std::runtime_error("layernorm_last: gain/bias must span last axis");
  int64_t rows = x.size() / n;
  Tensor out = make_out(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * n;
    double* yr = out.data() + r * n;
    double mu = 0.0;
    for (int64_t j = 0; j < n; ++j) mu += xr[j];
    mu /= double(n);
    double var = 0.0;
    for (int64_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= double(n);
    double inv = 1.0 / std::sqrt(var + eps);
    for (int64_t j = 0; j < n; ++j)
      yr[j] = (xr[j] - mu) * inv * gain.data()[j] + bias.data()[j];
  }
  auto xi = x.impl();
  auto gi = gain.impl();
  auto bi = bias.impl();
  attach("layernorm_last", out, {xi, gi, bi},
         [xi, gi, bi, rows, n, eps](const TensorImpl& o) {
    for (int64_t r = 0; r < rows; ++r) {
      const double* xr = xi->v.data() + r * n;
      const double* g = o.grad.data() + r * n;
      double mu = 0.0;
      for (int64_t j = 0; j < n; ++j) mu += xr[j];
      mu /= double(n);
      double var = 0.0;
      for (int64_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
      var /= double(n);
      double inv = 1.0 / std::sqrt(var + eps);
      if (gi->requires_grad) gi->ensure_grad();
      if (bi->requires_grad) bi->ensure_grad();
      if (xi->requires_grad) xi->ensure_grad();
      // dxhat = g * gain; dx = inv*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
      double m1 = 0.0, m2 = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        double xh = (xr[j] - mu) * inv;
        double dxh = g[j] * gi->v[j];
        m1 += dxh;
        m2 += dxh * xh;
        if (gi->requires_grad) gi->grad[j] += g[j] * xh;
        if (bi->requires_grad) bi->grad[j] += g[j];
      }
      m1 /= double(n);
      m2 /= double(n);
      if (xi->requires_grad)
        for (int64_t j = 0; j < n; ++j) {
          double xh = (xr[j] - mu) * inv;
          xi->grad[r * n + j] += inv * (g[j] * gi->v[j] - m1 - xh * m2);
        }
    }
  });
  return out;
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  ensure_same_shape("mse", pred, target);
  int64_t n = pred.size();
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double d = pred.data()[i] - target.data()[i];
    s += d * d;
  }
  Tensor out = make_out({1});
  out.values()[0] = s / double(n);
  auto pi = pred.impl();
  auto ti = target.impl();
  attach("mse", out, {pi, ti}, [pi, ti, n](const TensorImpl& o) {
    double c = 2.0 * o.grad[0] / double(n);
    if (pi->requires_grad) {
      pi->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        pi->grad[i] += c * (pi->v[i] - ti->v[i]);
    }
    if (ti->requires_grad) {
      ti->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        ti->grad[i] -= c * (pi->v[i] - ti->v[i]);
    }
  });
  return out;
}

}  // namespace ibn
