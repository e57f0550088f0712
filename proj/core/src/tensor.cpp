#include "vsgg/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "vsgg/errors.hpp"

namespace vsgg {

namespace {

std::atomic<uint64_t> g_next_node_id{1};

std::shared_ptr<TensorNode> make_node(Shape shape) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->values.assign(static_cast<size_t>(shape_numel(n->shape)), 0.0);
  n->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

void ensure_grad(TensorNode& n) {
  if (n.grad.empty()) n.grad.assign(n.values.size(), 0.0);
}

TensorNode& parent(TensorNode& n, size_t i) { return *n.parents[i]; }

bool wants_grad(const std::vector<Tensor>& inputs) {
  for (const auto& t : inputs) {
    if (t.requires_grad()) return true;
  }
  return false;
}

Tensor finish_op(std::shared_ptr<TensorNode> n,
                 const std::vector<Tensor>& inputs,
                 std::function<void(TensorNode&)> backprop) {
  n->parents.reserve(inputs.size());
  for (const auto& t : inputs) n->parents.push_back(t.node());
  n->requires_grad = wants_grad(inputs);
  if (n->requires_grad) n->backprop = std::move(backprop);
  return Tensor(std::move(n));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void check_defined(const Tensor& a, const char* op) {
  if (!a.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

}  // namespace

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw DimensionError("negative extent in shape");
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = make_node(std::move(shape));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.values().begin(), t.values().end(), value);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
    throw DimensionError("Tensor::from: " + shape_str(shape) +
                         " does not hold " + std::to_string(values.size()) +
                         " values");
  }
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  n->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }
int64_t Tensor::size() const {
  return static_cast<int64_t>(node_->values.size());
}
int64_t Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) throw DimensionError("dim: axis out of range");
  return node_->shape[static_cast<size_t>(axis)];
}
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

std::vector<double>& Tensor::values() { return node_->values; }
const std::vector<double>& Tensor::values() const { return node_->values; }

double Tensor::value() const {
  if (size() != 1) {
    throw ContractError("value(): tensor is not scalar, shape " +
                        shape_str(shape()));
  }
  return node_->values[0];
}

double Tensor::at(int64_t r, int64_t c) const {
  if (rank() != 2) throw ContractError("at(row,col): tensor is not rank-2");
  return node_->values[static_cast<size_t>(r * dim(1) + c)];
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::vector<double>& Tensor::grad() {
  ensure_grad(*node_);
  return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw ContractError("grad(): no gradient populated");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty())
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

uint64_t Tensor::id() const { return node_ ? node_->id : 0; }

// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_defined(a, "add");
  check_defined(b, "add");
  check_same_shape(a, b, "add");
  auto n = make_node(a.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < av.size(); ++i) n->values[i] = av[i] + bv[i];
  return finish_op(std::move(n), {a, b}, [](TensorNode& out) {
    for (size_t p = 0; p < 2; ++p) {
      TensorNode& in = parent(out, p);
      if (!in.requires_grad) continue;
      ensure_grad(in);
      for (size_t i = 0; i < out.grad.size(); ++i) in.grad[i] += out.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_defined(a, "sub");
  check_defined(b, "sub");
  check_same_shape(a, b, "sub");
  auto n = make_node(a.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < av.size(); ++i) n->values[i] = av[i] - bv[i];
  return finish_op(std::move(n), {a, b}, [](TensorNode& out) {
    TensorNode& ia = parent(out, 0);
    TensorNode& ib = parent(out, 1);
    if (ia.requires_grad) {
      ensure_grad(ia);
      for (size_t i = 0; i < out.grad.size(); ++i) ia.grad[i] += out.grad[i];
    }
    if (ib.requires_grad) {
      ensure_grad(ib);
      for (size_t i = 0; i < out.grad.size(); ++i) ib.grad[i] -= out.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_defined(a, "mul");
  check_defined(b, "mul");
  check_same_shape(a, b, "mul");
  auto n = make_node(a.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < av.size(); ++i) n->values[i] = av[i] * bv[i];
  return finish_op(std::move(n), {a, b}, [](TensorNode& out) {
    TensorNode& ia = parent(out, 0);
    TensorNode& ib = parent(out, 1);
    if (ia.requires_grad) {
      ensure_grad(ia);
      for (size_t i = 0; i < out.grad.size(); ++i)
        ia.grad[i] += out.grad[i] * ib.values[i];
    }
    if (ib.requires_grad) {
      ensure_grad(ib);
      for (size_t i = 0; i < out.grad.size(); ++i)
        ib.grad[i] += out.grad[i] * ia.values[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  check_defined(a, "scale");
  auto n = make_node(a.shape());
  const auto& av = a.values();
  for (size_t i = 0; i < av.size(); ++i) n->values[i] = av[i] * s;
  return finish_op(std::move(n), {a}, [s](TensorNode& out) {
    TensorNode& in = parent(out, 0);
    ensure_grad(in);
    for (size_t i = 0; i < out.grad.size(); ++i) in.grad[i] += s * out.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  check_defined(a, "add_scalar");
  auto n = make_node(a.shape());
  const auto& av = a.values();
  for (size_t i = 0; i < av.size(); ++i) n->values[i] = av[i] + c;
  return finish_op(std::move(n), {a}, [](TensorNode& out) {
    TensorNode& in = parent(out, 0);
    ensure_grad(in);
    for (size_t i = 0; i < out.grad.size(); ++i) in.grad[i] += out.grad[i];
  });
}

Tensor rsub_scalar(double c, const Tensor& a) {
  check_defined(a, "rsub_scalar");
  auto n = make_node(a.shape());
  const auto& av = a.values();
  for (size_t i = 0; i < av.size(); ++i) n->values[i] = c - av[i];
  return finish_op(std::move(n), {a}, [](TensorNode& out) {
    TensorNode& in = parent(out, 0);
    ensure_grad(in);
    for (size_t i = 0; i < out.grad.size(); ++i) in.grad[i] -= out.grad[i];
  });
}

Tensor square(const Tensor& a) { return mul(a, a); }

void gemm_acc(const double* a, const double* b, double* c, int64_t m,
              int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt_acc(const double* a, const double* b, double* c, int64_t m,
                 int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

void gemm_tn_acc(const double* a, const double* b, double* c, int64_t m,
                 int64_t k, int64_t n) {
  for (int64_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (int64_t i = 0; i < m; ++i) {
      double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul: expects rank-2 operands, got " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dims differ, " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  }
  const int64_t m = a.dim(0), k = a.dim(1), nn = b.dim(1);
  auto n = make_node({m, nn});
  gemm_acc(a.values().data(), b.values().data(), n->values.data(), m, k, nn);
  return finish_op(std::move(n), {a, b}, [m, k, nn](TensorNode& out) {
    TensorNode& ia = parent(out, 0);
    TensorNode& ib = parent(out, 1);
    if (ia.requires_grad) {
      ensure_grad(ia);
      // dA += G * B^T
      gemm_nt_acc(out.grad.data(), ib.values.data(), ia.grad.data(), m, nn, k);
    }
    if (ib.requires_grad) {
      ensure_grad(ib);
      // dB += A^T * G
      gemm_tn_acc(ia.values.data(), out.grad.data(), ib.grad.data(), k, m, nn);
    }
  });
}

Tensor transpose(const Tensor& a) {
  check_defined(a, "transpose");
  if (a.rank() != 2) throw DimensionError("transpose: expects rank-2");
  const int64_t r = a.dim(0), c = a.dim(1);
  auto n = make_node({c, r});
  const auto& av = a.values();
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) n->values[j * r + i] = av[i * c + j];
  return finish_op(std::move(n), {a}, [r, c](TensorNode& out) {
    TensorNode& in = parent(out, 0);
    ensure_grad(in);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j)
        in.grad[i * c + j] += out.grad[j * r + i];
  });
}

Tensor sigmoid(const Tensor& a) {
  check_defined(a, "sigmoid");
  auto n = make_node(a.shape());
  const auto& av = a.values();
  for (size_t i = 0; i < av.size(); ++i) {
    double x = av[i];
    n->values[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                            : std::exp(x) / (1.0 + std::exp(x));
  }
  return finish_op(std::move(n), {a}, [](TensorNode& out) {
    TensorNode& in = parent(out, 0);
    ensure_grad(in);
    for (size_t i = 0; i < out.grad.size(); ++i) {
      double y = out.values[i];
      in.grad[i] += out.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor relu(const Tensor& a) {
  check_defined(a, "relu");
  auto n = make_node(a.shape());
  const auto& av = a.values();
  for (size_t i = 0; i < av.size(); ++i) n->values[i] = av[i] > 0.0 ? av[i] : 0.0;
  return finish_op(std::move(n), {a}, [](TensorNode& out) {
    TensorNode& in = parent(out, 0);
    ensure_grad(in);
    for (size_t i = 0; i < out.grad.size(); ++i)
      if (in.values[i] > 0.0) in.grad[i] += out.grad[i];
  });
}

Tensor log(const Tensor& a) {
  check_defined(a, "log");
  auto n = make_node(a.shape());
  const auto& av = a.values();
  for (size_t i = 0; i < av.size(); ++i) n->values[i] = std::log(av[i]);
  return finish_op(std::move(n), {a}, [](TensorNode& out) {
    TensorNode& in = parent(out, 0);
    ensure_grad(in);
    for (size_t i = 0; i < out.grad.size(); ++i)
      in.grad[i] += out.grad[i] / in.values[i];
  });
}

Tensor sqrt(const Tensor& a) {
  check_defined(a, "sqrt");
  auto n = make_node(a.shape());
  const auto& av = a.values();
  for (size_t i = 0; i < av.size(); ++i) n->values[i] = std::sqrt(av[i]);
  return finish_op(std::move(n), {a}, [](TensorNode& out) {
    TensorNode& in = parent(out, 0);
    ensure_grad(in);
    for (size_t i = 0; i < out.grad.size(); ++i) {
      double y = out.values[i];
      if (y > 0.0) in.grad[i] += out.grad[i] * 0.5 / y;
    }
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  check_defined(a, "clamp");
  if (lo > hi) throw ContractError("clamp: lo > hi");
  auto n = make_node(a.shape());
  const auto& av = a.values();
  for (size_t i = 0; i < av.size(); ++i)
    n->values[i] = std::min(hi, std::max(lo, av[i]));
  return finish_op(std::move(n), {a}, [lo, hi](TensorNode& out) {
    TensorNode& in = parent(out, 0);
    ensure_grad(in);
    for (size_t i = 0; i < out.grad.size(); ++i) {
      double x = in.values[i];
      if (x > lo && x < hi) in.grad[i] += out.grad[i];
    }
  });
}

namespace {

// Decomposes a shape around `axis` into outer x extent x inner strides.
struct AxisSplit {
  int64_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, int axis) {
  int r = static_cast<int>(shape.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw DimensionError("axis out of range");
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<size_t>(i)];
  s.extent = shape[static_cast<size_t>(axis)];
  for (int i = axis + 1; i < r; ++i) s.inner *= shape[static_cast<size_t>(i)];
  return s;
}

}  // namespace

Tensor softmax(const Tensor& a, int axis) {
  check_defined(a, "softmax");
  for (double v : a.values()) {
    if (std::isnan(v)) throw NumericError("softmax: NaN input");
  }
  AxisSplit s = split_axis(a.shape(), axis);
  if (s.extent < 1) throw DimensionError("softmax: empty axis");
  auto n = make_node(a.shape());
  const auto& av = a.values();
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t in = 0; in < s.inner; ++in) {
      const int64_t base = o * s.extent * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t e = 0; e < s.extent; ++e)
        mx = std::max(mx, av[static_cast<size_t>(base + e * s.inner)]);
      double total = 0.0;
      for (int64_t e = 0; e < s.extent; ++e) {
        size_t idx = static_cast<size_t>(base + e * s.inner);
        double ex = std::exp(av[idx] - mx);
        n->values[idx] = ex;
        total += ex;
      }
      for (int64_t e = 0; e < s.extent; ++e)
        n->values[static_cast<size_t>(base + e * s.inner)] /= total;
    }
  }
  return finish_op(std::move(n), {a}, [s](TensorNode& out) {
    TensorNode& in = parent(out, 0);
    ensure_grad(in);
    for (int64_t o = 0; o < s.outer; ++o) {
      for (int64_t inr = 0; inr < s.inner; ++inr) {
        const int64_t base = o * s.extent * s.inner + inr;
        double dot = 0.0;
        for (int64_t e = 0; e < s.extent; ++e) {
          size_t idx = static_cast<size_t>(base + e * s.inner);
          dot += out.grad[idx] * out.values[idx];
        }
        for (int64_t e = 0; e < s.extent; ++e) {
          size_t idx = static_cast<size_t>(base + e * s.inner);
          in.grad[idx] += out.values[idx] * (out.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  check_defined(x, "layer_norm");
  check_defined(gain, "layer_norm");
  check_defined(bias, "layer_norm");
  if (x.rank() < 1) throw DimensionError("layer_norm: rank-0 input");
  const int64_t width = x.dim(-1);
  if (width < 1) throw DimensionError("layer_norm: last extent must be >= 1");
  if (gain.size() != width || bias.size() != width) {
    throw DimensionError("layer_norm: gain/bias extent mismatch");
  }
  const int64_t rows = x.size() / width;
  auto n = make_node(x.shape());
  std::vector<double> xhat(static_cast<size_t>(rows * width));
  std::vector<double> inv_std(static_cast<size_t>(rows));
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * width;
    double mean = 0.0;
    for (int64_t j = 0; j < width; ++j) mean += xr[j];
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (int64_t j = 0; j < width; ++j) {
      double d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(width);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(r)] = is;
    for (int64_t j = 0; j < width; ++j) {
      double xh = (xr[j] - mean) * is;
      xhat[static_cast<size_t>(r * width + j)] = xh;
      n->values[static_cast<size_t>(r * width + j)] = gv[j] * xh + bv[j];
    }
  }
  return finish_op(
      std::move(n), {x, gain, bias},
      [rows, width, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](TensorNode& out) {
        TensorNode& ix = parent(out, 0);
        TensorNode& ig = parent(out, 1);
        TensorNode& ib = parent(out, 2);
        const auto& gv = ig.values;
        if (ig.requires_grad) ensure_grad(ig);
        if (ib.requires_grad) ensure_grad(ib);
        if (ix.requires_grad) ensure_grad(ix);
        for (int64_t r = 0; r < rows; ++r) {
          const double* g = out.grad.data() + r * width;
          const double* xh = xhat.data() + r * width;
          if (ig.requires_grad || ib.requires_grad) {
            for (int64_t j = 0; j < width; ++j) {
              if (ig.requires_grad) ig.grad[j] += g[j] * xh[j];
              if (ib.requires_grad) ib.grad[j] += g[j];
            }
          }
          if (ix.requires_grad) {
            double mean_h = 0.0, mean_hx = 0.0;
            for (int64_t j = 0; j < width; ++j) {
              double h = gv[j] * g[j];
              mean_h += h;
              mean_hx += h * xh[j];
            }
            mean_h /= static_cast<double>(width);
            mean_hx /= static_cast<double>(width);
            double is = inv_std[static_cast<size_t>(r)];
            double* dx = ix.grad.data() + r * width;
            for (int64_t j = 0; j < width; ++j) {
              double h = gv[j] * g[j];
              dx[j] += is * (h - mean_h - xh[j] * mean_hx);
            }
          }
        }
      });
}

Tensor sum_all(const Tensor& a) {
  check_defined(a, "sum_all");
  auto n = make_node({});
  double total = 0.0;
  for (double v : a.values()) total += v;
  n->values[0] = total;
  return finish_op(std::move(n), {a}, [](TensorNode& out) {
    TensorNode& in = parent(out, 0);
    ensure_grad(in);
    double g = out.grad[0];
    for (auto& gi : in.grad) gi += g;
  });
}

Tensor mean_all(const Tensor& a) {
  check_defined(a, "mean_all");
  if (a.size() == 0) throw ContractError("mean_all: empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sum_last(const Tensor& a) {
  check_defined(a, "sum_last");
  if (a.rank() < 1) throw DimensionError("sum_last: rank-0 input");
  const int64_t width = a.dim(-1);
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  const int64_t rows = a.size() / std::max<int64_t>(width, 1);
  auto n = make_node(std::move(out_shape));
  const auto& av = a.values();
  for (int64_t r = 0; r < rows; ++r) {
    double total = 0.0;
    for (int64_t j = 0; j < width; ++j)
      total += av[static_cast<size_t>(r * width + j)];
    n->values[static_cast<size_t>(r)] = total;
  }
  return finish_op(std::move(n), {a}, [rows, width](TensorNode& out) {
    TensorNode& in = parent(out, 0);
    ensure_grad(in);
    for (int64_t r = 0; r < rows; ++r) {
      double g = out.grad[static_cast<size_t>(r)];
      for (int64_t j = 0; j < width; ++j)
        in.grad[static_cast<size_t>(r * width + j)] += g;
    }
  });
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  check_defined(m, "add_rowvec");
  check_defined(v, "add_rowvec");
  if (m.rank() != 2 || v.rank() != 1 || v.dim(0) != m.dim(1)) {
    throw DimensionError("add_rowvec: want [R,C] + [C], got " +
                         shape_str(m.shape()) + " + " + shape_str(v.shape()));
  }
  const int64_t rows = m.dim(0), cols = m.dim(1);
  auto n = make_node(m.shape());
  const auto& mv = m.values();
  const auto& vv = v.values();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c)
      n->values[static_cast<size_t>(r * cols + c)] =
          mv[static_cast<size_t>(r * cols + c)] + vv[static_cast<size_t>(c)];
  return finish_op(std::move(n), {m, v}, [rows, cols](TensorNode& out) {
    TensorNode& im = parent(out, 0);
    TensorNode& iv = parent(out, 1);
    if (im.requires_grad) {
      ensure_grad(im);
      for (size_t i = 0; i < out.grad.size(); ++i) im.grad[i] += out.grad[i];
    }
    if (iv.requires_grad) {
      ensure_grad(iv);
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c)
          iv.grad[static_cast<size_t>(c)] +=
              out.grad[static_cast<size_t>(r * cols + c)];
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  const int64_t cols = parts[0].dim(1);
  int64_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(1) != cols)
      throw DimensionError("concat_rows: column mismatch");
    rows += p.dim(0);
  }
  auto n = make_node({rows, cols});
  int64_t at = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(),
              n->values.begin() + at * cols);
    at += p.dim(0);
  }
  return finish_op(std::move(n), parts, [cols](TensorNode& out) {
    int64_t at = 0;
    for (size_t p = 0; p < out.parents.size(); ++p) {
      TensorNode& in = parent(out, p);
      int64_t prows = in.shape[0];
      if (in.requires_grad) {
        ensure_grad(in);
        for (size_t i = 0; i < in.grad.size(); ++i)
          in.grad[i] += out.grad[static_cast<size_t>(at * cols) + i];
      }
      at += prows;
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  const int64_t rows = parts[0].dim(0);
  int64_t cols = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != rows)
      throw DimensionError("concat_cols: row mismatch");
    cols += p.dim(1);
  }
  auto n = make_node({rows, cols});
  int64_t at = 0;
  for (const auto& p : parts) {
    const int64_t pc = p.dim(1);
    const auto& pv = p.values();
    for (int64_t r = 0; r < rows; ++r)
      std::copy(pv.begin() + r * pc, pv.begin() + (r + 1) * pc,
                n->values.begin() + r * cols + at);
    at += pc;
  }
  return finish_op(std::move(n), parts, [rows, cols](TensorNode& out) {
    int64_t at = 0;
    for (size_t p = 0; p < out.parents.size(); ++p) {
      TensorNode& in = parent(out, p);
      const int64_t pc = in.shape[1];
      if (in.requires_grad) {
        ensure_grad(in);
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t c = 0; c < pc; ++c)
            in.grad[static_cast<size_t>(r * pc + c)] +=
                out.grad[static_cast<size_t>(r * cols + at + c)];
      }
      at += pc;
    }
  });
}

Tensor stack_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("stack_last: no parts");
  const Shape& base = parts[0].shape();
  for (const auto& p : parts) {
    if (p.shape() != base) throw DimensionError("stack_last: shape mismatch");
  }
  const int64_t k = static_cast<int64_t>(parts.size());
  const int64_t inner = parts[0].size();
  Shape out_shape = base;
  out_shape.push_back(k);
  auto n = make_node(std::move(out_shape));
  for (int64_t p = 0; p < k; ++p) {
    const auto& pv = parts[static_cast<size_t>(p)].values();
    for (int64_t i = 0; i < inner; ++i)
      n->values[static_cast<size_t>(i * k + p)] = pv[static_cast<size_t>(i)];
  }
  return finish_op(std::move(n), parts, [k, inner](TensorNode& out) {
    for (int64_t p = 0; p < k; ++p) {
      TensorNode& in = parent(out, static_cast<size_t>(p));
      if (!in.requires_grad) continue;
      ensure_grad(in);
      for (int64_t i = 0; i < inner; ++i)
        in.grad[static_cast<size_t>(i)] +=
            out.grad[static_cast<size_t>(i * k + p)];
    }
  });
}

Tensor repeat_last(const Tensor& a, int64_t k) {
  check_defined(a, "repeat_last");
  if (k < 1) throw DimensionError("repeat_last: k must be >= 1");
  Shape out_shape = a.shape();
  out_shape.push_back(k);
  const int64_t inner = a.size();
  auto n = make_node(std::move(out_shape));
  const auto& av = a.values();
  for (int64_t i = 0; i < inner; ++i)
    for (int64_t p = 0; p < k; ++p)
      n->values[static_cast<size_t>(i * k + p)] = av[static_cast<size_t>(i)];
  return finish_op(std::move(n), {a}, [k, inner](TensorNode& out) {
    TensorNode& in = parent(out, 0);
    ensure_grad(in);
    for (int64_t i = 0; i < inner; ++i) {
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p)
        acc += out.grad[static_cast<size_t>(i * k + p)];
      in.grad[static_cast<size_t>(i)] += acc;
    }
  });
}

Tensor slice_rows(const Tensor& a, int64_t begin, int64_t end) {
  check_defined(a, "slice_rows");
  if (a.rank() != 2) throw DimensionError("slice_rows: expects rank-2");
  if (begin < 0 || end > a.dim(0) || begin >= end)
    throw DimensionError("slice_rows: bad range");
  const int64_t cols = a.dim(1);
  auto n = make_node({end - begin, cols});
  std::copy(a.values().begin() + begin * cols, a.values().begin() + end * cols,
            n->values.begin());
  return finish_op(std::move(n), {a}, [begin, cols](TensorNode& out) {
    TensorNode& in = parent(out, 0);
    ensure_grad(in);
    for (size_t i = 0; i < out.grad.size(); ++i)
      in.grad[static_cast<size_t>(begin * cols) + i] += out.grad[i];
  });
}

Tensor row(const Tensor& a, int64_t index) {
  return slice_rows(a, index, index + 1);
}

Tensor gather_rows(const Tensor& table, const std::vector<int64_t>& indices) {
  check_defined(table, "gather_rows");
  if (table.rank() != 2) throw DimensionError("gather_rows: expects rank-2");
  const int64_t rows = table.dim(0), cols = table.dim(1);
  for (int64_t i : indices) {
    if (i < 0 || i >= rows) throw ContractError("gather_rows: index out of range");
  }
  auto n = make_node({static_cast<int64_t>(indices.size()), cols});
  const auto& tv = table.values();
  for (size_t r = 0; r < indices.size(); ++r)
    std::copy(tv.begin() + indices[r] * cols, tv.begin() + (indices[r] + 1) * cols,
              n->values.begin() + static_cast<int64_t>(r) * cols);
  return finish_op(std::move(n), {table}, [indices, cols](TensorNode& out) {
    TensorNode& in = parent(out, 0);
    ensure_grad(in);
    for (size_t r = 0; r < indices.size(); ++r)
      for (int64_t c = 0; c < cols; ++c)
        in.grad[static_cast<size_t>(indices[r] * cols + c)] +=
            out.grad[r * static_cast<size_t>(cols) + static_cast<size_t>(c)];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  check_defined(a, "reshape");
  if (shape_numel(shape) != a.size())
    throw DimensionError("reshape: element count mismatch");
  auto n = make_node(std::move(shape));
  n->values = a.values();
  return finish_op(std::move(n), {a}, [](TensorNode& out) {
    TensorNode& in = parent(out, 0);
    ensure_grad(in);
    for (size_t i = 0; i < out.grad.size(); ++i) in.grad[i] += out.grad[i];
  });
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward: undefined loss");
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative DFS post-order; order is deterministic given the graph.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node().get(), 0});
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorNode* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  for (TensorNode* n : order) ensure_grad(*n);
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

}  // namespace vsgg
