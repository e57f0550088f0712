#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace vsgg {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// One node of the dynamically built computation graph. Values are written
// once during the forward pass and treated as immutable afterwards; only
// leaf parameters are mutated (by the optimizer, between steps).
struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated lazily; same length as values
  bool requires_grad = false;
  uint64_t id = 0;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Pulls this node's grad into the parents' grads. Null for leaves.
  std::function<void(TensorNode&)> backprop;
};

// Shared handle to a graph node. Copies alias the same node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const;
  int64_t size() const;
  int64_t dim(int axis) const;
  bool requires_grad() const;

  std::vector<double>& values();
  const std::vector<double>& values() const;
  // Scalar accessor; throws unless the tensor has exactly one element.
  double value() const;
  double at(int64_t row, int64_t col) const;  // rank-2 accessor

  bool has_grad() const;
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  std::shared_ptr<TensorNode> node() const { return node_; }
  uint64_t id() const;

  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

// ---- graph-building operations ------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double c);
Tensor rsub_scalar(double c, const Tensor& a);  // c - a
Tensor square(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]x[k,n] -> [m,n]
Tensor transpose(const Tensor& a);                // rank-2

Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

// Softmax along `axis` (negative counts from the back), max-stabilized.
// Throws NumericError on NaN input.
Tensor softmax(const Tensor& a, int axis = -1);

// Normalizes along the last axis to zero mean / unit variance (population
// variance, eps-guarded), then applies the affine map gain*x + bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

Tensor sum_all(const Tensor& a);   // -> scalar (shape {})
Tensor mean_all(const Tensor& a);  // -> scalar
Tensor sum_last(const Tensor& a);  // [..., n] -> [...]

// [R,C] + [C] with the row vector broadcast across rows.
Tensor add_rowvec(const Tensor& m, const Tensor& v);

Tensor concat_rows(const std::vector<Tensor>& parts);  // rank-2, same cols
Tensor concat_cols(const std::vector<Tensor>& parts);  // rank-2, same rows
// K same-shape tensors -> shape + trailing axis of extent K.
Tensor stack_last(const std::vector<Tensor>& parts);
// [..] -> [.., K] by repetition along a new trailing axis.
Tensor repeat_last(const Tensor& a, int64_t k);

Tensor slice_rows(const Tensor& a, int64_t begin, int64_t end);  // rank-2
Tensor row(const Tensor& a, int64_t index);                      // [1,C]
// Embedding lookup: rows of `table` selected by `indices`; gradients
// scatter-add back into the table.
Tensor gather_rows(const Tensor& table, const std::vector<int64_t>& indices);

Tensor reshape(const Tensor& a, Shape shape);

// ---- backward -------------------------------------------------------------

// Reverse-mode sweep from a scalar loss. Every reachable requires_grad node
// ends up with a populated (possibly zero) grad buffer. Gradients accumulate
// across uses; call zero_grad on parameters between steps.
void backward(const Tensor& loss);

// ---- raw kernels (shared by forward, backward and test oracles) -----------

// C[m,n] += A[m,k] * B[k,n]
void gemm_acc(const double* a, const double* b, double* c, int64_t m,
              int64_t k, int64_t n);
// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt_acc(const double* a, const double* b, double* c, int64_t m,
                 int64_t k, int64_t n);
// C[m,n] += A[k,m]^T * B[k,n]
void gemm_tn_acc(const double* a, const double* b, double* c, int64_t m,
                 int64_t k, int64_t n);

}  // namespace vsgg
