#include "mli/autograd.hpp"

#include <cmath>
#include <stdexcept>

namespace mli::nn {

double GradStore::global_norm() const {
  double sq = 0;
  for (const auto& g : grads_)
    if (g.size()) sq += g.squaredNorm();
  return std::sqrt(sq);
}

int Tape::push(Matrix v, BackFn back) {
  nodes_.push_back({std::move(v), Matrix(), std::move(back)});
  Node& n = nodes_.back();
  n.grad = Matrix::Zero(n.val.rows(), n.val.cols());
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::constant(Matrix v) { return push(std::move(v), nullptr); }

int Tape::matmul_param(int a, const Matrix& w, int param_id, GradStore* sink) {
  Matrix v = val(a) * w;
  const Matrix* wp = &w;
  return push(std::move(v), [a, wp, param_id, sink](Tape& t, int self) {
    const Matrix& g = t.node_grad(self);
    t.node_grad(a).noalias() += g * wp->transpose();
    if (sink) sink->accumulate(param_id, *wp).noalias() += t.node_val(a).transpose() * g;
  });
}

int Tape::add_rowvec_param(int a, const Matrix& b, int param_id, GradStore* sink) {
  Matrix v = val(a).rowwise() + b.row(0);
  const Matrix* bp = &b;
  return push(std::move(v), [a, bp, param_id, sink](Tape& t, int self) {
    const Matrix& g = t.node_grad(self);
    t.node_grad(a) += g;
    if (sink) sink->accumulate(param_id, *bp).row(0) += g.colwise().sum();
  });
}

int Tape::embedding_rows(const Matrix& table, int param_id, GradStore* sink,
                         const std::vector<int>& ids) {
  Matrix v(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (size_t i = 0; i < ids.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = table.row(ids[i]);
  const Matrix* tp = &table;
  return push(std::move(v), [ids, tp, param_id, sink](Tape& t, int self) {
    if (!sink) return;
    const Matrix& g = t.node_grad(self);
    Matrix& acc = sink->accumulate(param_id, *tp);
    for (size_t i = 0; i < ids.size(); ++i)
      acc.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

int Tape::matmul(int a, int b) {
  Matrix v = val(a) * val(b);
  return push(std::move(v), [a, b](Tape& t, int self) {
    const Matrix& g = t.node_grad(self);
    t.node_grad(a).noalias() += g * t.node_val(b).transpose();
    t.node_grad(b).noalias() += t.node_val(a).transpose() * g;
  });
}

int Tape::add(int a, int b) {
  Matrix v = val(a) + val(b);
  return push(std::move(v), [a, b](Tape& t, int self) {
    const Matrix& g = t.node_grad(self);
    t.node_grad(a) += g;
    t.node_grad(b) += g;
  });
}

int Tape::sub(int a, int b) {
  Matrix v = val(a) - val(b);
  return push(std::move(v), [a, b](Tape& t, int self) {
    const Matrix& g = t.node_grad(self);
    t.node_grad(a) += g;
    t.node_grad(b) -= g;
  });
}

int Tape::mul(int a, int b) {
  Matrix v = val(a).cwiseProduct(val(b));
  return push(std::move(v), [a, b](Tape& t, int self) {
    const Matrix& g = t.node_grad(self);
    t.node_grad(a) += g.cwiseProduct(t.node_val(b));
    t.node_grad(b) += g.cwiseProduct(t.node_val(a));
  });
}

int Tape::scale(int a, double c) {
  Matrix v = val(a) * c;
  return push(std::move(v), [a, c](Tape& t, int self) {
    t.node_grad(a) += t.node_grad(self) * c;
  });
}

int Tape::add_const(int a, const Matrix& c) {
  Matrix v = val(a) + c;
  return push(std::move(v), [a](Tape& t, int self) { t.node_grad(a) += t.node_grad(self); });
}

int Tape::transpose(int a) {
  Matrix v = val(a).transpose();
  return push(std::move(v), [a](Tape& t, int self) {
    t.node_grad(a) += t.node_grad(self).transpose();
  });
}

int Tape::slice_cols(int a, int c0, int c1) {
  Matrix v = val(a).middleCols(c0, c1 - c0);
  return push(std::move(v), [a, c0, c1](Tape& t, int self) {
    t.node_grad(a).middleCols(c0, c1 - c0) += t.node_grad(self);
  });
}

int Tape::concat_cols(const std::vector<int>& parts) {
  Eigen::Index rows = val(parts[0]).rows(), cols = 0;
  for (int p : parts) cols += val(p).cols();
  Matrix v(rows, cols);
  Eigen::Index off = 0;
  for (int p : parts) {
    v.middleCols(off, val(p).cols()) = val(p);
    off += val(p).cols();
  }
  return push(std::move(v), [parts](Tape& t, int self) {
    const Matrix& g = t.node_grad(self);
    Eigen::Index off = 0;
    for (int p : parts) {
      Eigen::Index w = t.node_val(p).cols();
      t.node_grad(p) += g.middleCols(off, w);
      off += w;
    }
  });
}

int Tape::gather_rows(int a, const std::vector<int>& rows) {
  Matrix v(static_cast<Eigen::Index>(rows.size()), val(a).cols());
  for (size_t i = 0; i < rows.size(); ++i)
    v.row(static_cast<Eigen::Index>(i)) = val(a).row(rows[i]);
  return push(std::move(v), [a, rows](Tape& t, int self) {
    const Matrix& g = t.node_grad(self);
    for (size_t i = 0; i < rows.size(); ++i)
      t.node_grad(a).row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

int Tape::softmax_rows(int a, int valid_cols) {
  const Matrix& x = val(a);
  Matrix v = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = x.row(r).head(valid_cols).maxCoeff();
    double z = 0;
    for (int c = 0; c < valid_cols; ++c) {
      v(r, c) = std::exp(x(r, c) - mx);
      z += v(r, c);
    }
    v.row(r).head(valid_cols) /= z;
  }
  return push(std::move(v), [a, valid_cols](Tape& t, int self) {
    const Matrix& g = t.node_grad(self);
    const Matrix& p = t.node_val(self);
    Matrix& ga = t.node_grad(a);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      double dot = 0;
      for (int c = 0; c < valid_cols; ++c) dot += g(r, c) * p(r, c);
      for (int c = 0; c < valid_cols; ++c) ga(r, c) += p(r, c) * (g(r, c) - dot);
    }
  });
}

int Tape::layer_norm(int a, const Matrix& gain, int gain_id, const Matrix& bias, int bias_id,
                     GradStore* sink, double eps) {
  const Matrix& x = val(a);
  const Eigen::Index n = x.rows(), d = x.cols();
  Matrix xhat(n, d), v(n, d);
  Eigen::VectorXd inv_sigma(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    double mu = x.row(r).mean();
    double var = (x.row(r).array() - mu).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_sigma(r) = is;
    xhat.row(r) = ((x.row(r).array() - mu) * is).matrix();
    v.row(r) = xhat.row(r).cwiseProduct(gain.row(0)) + bias.row(0);
  }
  int xhat_node = constant(std::move(xhat));
  const Matrix* gp = &gain;
  const Matrix* bp = &bias;
  return push(std::move(v),
              [a, xhat_node, inv_sigma, gp, bp, gain_id, bias_id, sink](Tape& t, int self) {
    const Matrix& g = t.node_grad(self);
    const Matrix& xh = t.node_val(xhat_node);
    Matrix& ga = t.node_grad(a);
    if (sink) {
      sink->accumulate(gain_id, *gp).row(0) += g.cwiseProduct(xh).colwise().sum();
      sink->accumulate(bias_id, *bp).row(0) += g.colwise().sum();
    }
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      Eigen::RowVectorXd dxhat = g.row(r).cwiseProduct(gp->row(0));
      double mean_dxhat = dxhat.mean();
      double mean_dxhat_xhat = dxhat.cwiseProduct(xh.row(r)).mean();
      ga.row(r) +=
          (inv_sigma(r) *
           (dxhat.array() - mean_dxhat - xh.row(r).array() * mean_dxhat_xhat))
              .matrix();
    }
  });
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;
}  // namespace

int Tape::gelu(int a) {
  Matrix v = val(a).unaryExpr([](double t) { return 0.5 * t * (1.0 + std::erf(t * kInvSqrt2)); });
  return push(std::move(v), [a](Tape& t, int self) {
    const Matrix& g = t.node_grad(self);
    const Matrix& x = t.node_val(a);
    t.node_grad(a) += g.cwiseProduct(x.unaryExpr([](double u) {
      double phi = 0.5 * (1.0 + std::erf(u * kInvSqrt2));
      double pdf = kInvSqrt2Pi * std::exp(-0.5 * u * u);
      return phi + u * pdf;
    }));
  });
}

int Tape::exp_(int a) {
  Matrix v = val(a).array().exp();
  return push(std::move(v), [a](Tape& t, int self) {
    t.node_grad(a) += t.node_grad(self).cwiseProduct(t.node_val(self));
  });
}

int Tape::square(int a) {
  Matrix v = val(a).array().square();
  return push(std::move(v), [a](Tape& t, int self) {
    t.node_grad(a) += 2.0 * t.node_grad(self).cwiseProduct(t.node_val(a));
  });
}

int Tape::clamp(int a, double lo, double hi) {
  Matrix v = val(a).array().min(hi).max(lo);
  return push(std::move(v), [a, lo, hi](Tape& t, int self) {
    const Matrix& g = t.node_grad(self);
    const Matrix& x = t.node_val(a);
    t.node_grad(a) += g.binaryExpr(x, [lo, hi](double gv, double xv) {
      return (xv > lo && xv < hi) ? gv : 0.0;
    });
  });
}

int Tape::sum(int a) {
  Matrix v(1, 1);
  v(0, 0) = val(a).sum();
  return push(std::move(v), [a](Tape& t, int self) {
    t.node_grad(a).array() += t.node_grad(self)(0, 0);
  });
}

int Tape::ce_logits_sum(int logits, const std::vector<int>& targets) {
  const Matrix& x = val(logits);
  double total = 0;
  Matrix probs(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = x.row(r).maxCoeff();
    Eigen::RowVectorXd e = (x.row(r).array() - mx).exp();
    double z = e.sum();
    probs.row(r) = e / z;
    total += std::log(z) + mx - x(r, targets[r]);
  }
  int probs_node = constant(std::move(probs));
  Matrix v(1, 1);
  v(0, 0) = total;
  return push(std::move(v), [logits, probs_node, targets](Tape& t, int self) {
    double g = t.node_grad(self)(0, 0);
    const Matrix& p = t.node_val(probs_node);
    Matrix& gl = t.node_grad(logits);
    gl += g * p;
    for (Eigen::Index r = 0; r < p.rows(); ++r) gl(r, targets[r]) -= g;
  });
}

int Tape::gaussian_nll_sum(int mean, int logstd, const Eigen::VectorXd& targets) {
  const Matrix& mu = val(mean);
  const Matrix& ls = val(logstd);
  double total = 0;
  for (Eigen::Index r = 0; r < mu.rows(); ++r) {
    double z = (targets(r) - mu(r, 0)) * std::exp(-ls(r, 0));
    total += 0.5 * std::log(2.0 * M_PI) + ls(r, 0) + 0.5 * z * z;
  }
  Matrix v(1, 1);
  v(0, 0) = total;
  return push(std::move(v), [mean, logstd, targets](Tape& t, int self) {
    double g = t.node_grad(self)(0, 0);
    const Matrix& mu = t.node_val(mean);
    const Matrix& ls = t.node_val(logstd);
    for (Eigen::Index r = 0; r < mu.rows(); ++r) {
      double inv = std::exp(-ls(r, 0));
      double z = (targets(r) - mu(r, 0)) * inv;
      t.node_grad(mean)(r, 0) += g * (-z * inv);
      t.node_grad(logstd)(r, 0) += g * (1.0 - z * z);
    }
  });
}

int Tape::bernoulli_nll_sum(int logits, const Eigen::VectorXd& targets) {
  const Matrix& l = val(logits);
  auto softplus = [](double x) { return x > 30 ? x : std::log1p(std::exp(x)); };
  double total = 0;
  for (Eigen::Index r = 0; r < l.rows(); ++r) total += softplus(l(r, 0)) - targets(r) * l(r, 0);
  Matrix v(1, 1);
  v(0, 0) = total;
  return push(std::move(v), [logits, targets](Tape& t, int self) {
    double g = t.node_grad(self)(0, 0);
    const Matrix& l = t.node_val(logits);
    for (Eigen::Index r = 0; r < l.rows(); ++r) {
      double sig = 1.0 / (1.0 + std::exp(-l(r, 0)));
      t.node_grad(logits)(r, 0) += g * (sig - targets(r));
    }
  });
}

int Tape::external(double value, int src, Matrix dval_dsrc) {
  Matrix v(1, 1);
  v(0, 0) = value;
  return push(std::move(v), [src, d = std::move(dval_dsrc)](Tape& t, int self) {
    t.node_grad(src) += t.node_grad(self)(0, 0) * d;
  });
}

void Tape::backward(int out) {
  if (val(out).rows() != 1 || val(out).cols() != 1)
    throw std::invalid_argument("backward: output node must be a scalar");
  nodes_[out].grad(0, 0) = 1.0;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.back && n.grad.size() && n.grad.cwiseAbs().maxCoeff() != 0.0) n.back(*this, i);
  }
}

}  // namespace mli::nn
