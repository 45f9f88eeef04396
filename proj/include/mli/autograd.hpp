#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace mli::nn {

using Matrix = Eigen::MatrixXd;

// Per-parameter gradient accumulator. Slots are lazily sized on first write.
class GradStore {
 public:
  explicit GradStore(int n_params) : grads_(n_params) {}

  Matrix& accumulate(int param_id, const Matrix& shape_like) {
    Matrix& g = grads_.at(param_id);
    if (g.size() == 0) g = Matrix::Zero(shape_like.rows(), shape_like.cols());
    return g;
  }
  Matrix& at(int param_id) { return grads_.at(param_id); }
  const Matrix& at(int param_id) const { return grads_.at(param_id); }
  int size() const { return static_cast<int>(grads_.size()); }
  void clear() {
    for (auto& g : grads_) g.setZero();
  }
  double global_norm() const;

 private:
  std::vector<Matrix> grads_;
};

// Dynamic reverse-mode tape over dense matrices. Node order is topological
// by construction; backward() walks it in reverse. Parameter leaves scatter
// their gradients straight into a GradStore so tapes never copy parameters.
class Tape {
 public:
  using BackFn = std::function<void(Tape&, int self)>;

  int constant(Matrix v);

  // Parameter-bound ops; the referenced matrices must outlive the tape.
  int matmul_param(int a, const Matrix& w, int param_id, GradStore* sink);
  int add_rowvec_param(int a, const Matrix& b, int param_id, GradStore* sink);
  int embedding_rows(const Matrix& table, int param_id, GradStore* sink,
                     const std::vector<int>& ids);
  int layer_norm(int a, const Matrix& gain, int gain_id, const Matrix& bias, int bias_id,
                 GradStore* sink, double eps = 1e-5);

  int matmul(int a, int b);
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);  // elementwise
  int scale(int a, double c);
  int add_const(int a, const Matrix& c);
  int transpose(int a);
  int slice_cols(int a, int c0, int c1);
  int concat_cols(const std::vector<int>& parts);
  int gather_rows(int a, const std::vector<int>& rows);
  int softmax_rows(int a, int valid_cols);  // columns >= valid_cols are masked out
  int gelu(int a);
  int exp_(int a);
  int square(int a);
  int clamp(int a, double lo, double hi);
  int sum(int a);  // 1×1

  // Loss reductions (all return 1×1 sums over rows).
  int ce_logits_sum(int logits, const std::vector<int>& targets);
  int gaussian_nll_sum(int mean, int logstd, const Eigen::VectorXd& targets);
  int bernoulli_nll_sum(int logits, const Eigen::VectorXd& targets);

  // Scalar with an externally supplied gradient d(value)/d(src).
  int external(double value, int src, Matrix dval_dsrc);

  const Matrix& val(int id) const { return nodes_[id].val; }
  Matrix& grad(int id) { return nodes_[id].grad; }

  // Seeds d(out)/d(out) = 1 and propagates. `out` must be 1×1.
  void backward(int out);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix val;
    Matrix grad;
    BackFn back;  // null for constants
  };
  std::vector<Node> nodes_;
  int push(Matrix v, BackFn back);

  friend struct TapeAccess;

 public:
  // Internal accessors used by backward closures.
  Matrix& node_val(int id) { return nodes_[id].val; }
  Matrix& node_grad(int id) { return nodes_[id].grad; }
};

}  // namespace mli::nn
