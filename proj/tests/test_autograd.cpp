#include <doctest.h>

#include <cmath>
#include <functional>

#include "mli/autograd.hpp"
#include "mli/rng.hpp"

using namespace mli;
using nn::GradStore;
using nn::Matrix;
using nn::Tape;

namespace {

Matrix random_matrix(int r, int c, Rng& rng) {
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

// Central-difference check of d(loss)/d(W) against the tape gradient, where
// `loss` rebuilds the graph from the current W.
void fd_check(Matrix& w, const std::function<double(GradStore*)>& loss, double tol = 1e-6) {
  GradStore sink(8);
  loss(&sink);
  const Matrix grad = sink.at(0);
  REQUIRE(grad.size() == w.size());
  const double h = 1e-5;
  for (int i = 0; i < w.rows(); ++i) {
    for (int j = 0; j < w.cols(); ++j) {
      double keep = w(i, j);
      w(i, j) = keep + h;
      double up = loss(nullptr);
      w(i, j) = keep - h;
      double dn = loss(nullptr);
      w(i, j) = keep;
      double fd = (up - dn) / (2 * h);
      CHECK(grad(i, j) == doctest::Approx(fd).epsilon(tol).scale(1.0));
    }
  }
}

}  // namespace

TEST_CASE("quadratic toy loss has gradient W") {
  Rng rng(1);
  Matrix w = random_matrix(3, 4, rng);
  GradStore sink(1);
  Tape t;
  Matrix eye = Matrix::Identity(3, 3);
  int node = t.matmul_param(t.constant(eye), w, 0, &sink);
  int loss = t.scale(t.sum(t.square(node)), 0.5);
  t.backward(loss);
  CHECK((sink.at(0) - w).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("loss independent of a parameter gives zero gradient") {
  Rng rng(2);
  Matrix w = random_matrix(2, 2, rng);
  Matrix u = random_matrix(2, 2, rng);
  GradStore sink(2);
  Tape t;
  t.matmul_param(t.constant(Matrix::Identity(2, 2)), w, 0, &sink);  // unused branch
  int node = t.matmul_param(t.constant(Matrix::Identity(2, 2)), u, 1, &sink);
  t.backward(t.sum(node));
  CHECK(sink.at(0).size() == 0);  // never touched
  CHECK(sink.at(1).cwiseAbs().maxCoeff() == doctest::Approx(1.0));
}

TEST_CASE("matmul, add, mul, transpose, slice, concat gradients") {
  Rng rng(3);
  Matrix w = random_matrix(4, 6, rng);
  Matrix a = random_matrix(3, 4, rng);
  Matrix b = random_matrix(3, 6, rng);
  fd_check(w, [&](GradStore* sink) {
    Tape t;
    int wn = t.matmul_param(t.constant(a), w, 0, sink);  // 3×6
    int s = t.mul(t.add(wn, t.constant(b)), t.constant(b));
    int left = t.slice_cols(s, 0, 3);
    int right = t.slice_cols(s, 3, 6);
    int cat = t.concat_cols({right, left});
    int tr = t.transpose(cat);
    int out = t.sum(t.square(tr));
    if (sink) t.backward(out);
    return t.val(out)(0, 0);
  });
}

TEST_CASE("softmax rows: probabilities and gradient") {
  Rng rng(4);
  Matrix w = random_matrix(3, 5, rng);
  {
    Tape t;
    int p = t.softmax_rows(t.matmul_param(t.constant(Matrix::Identity(3, 3)), w, 0, nullptr), 5);
    for (int r = 0; r < 3; ++r)
      CHECK(t.val(p).row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
  Matrix mix = random_matrix(5, 2, rng);
  fd_check(w, [&](GradStore* sink) {
    Tape t;
    int wn = t.matmul_param(t.constant(Matrix::Identity(3, 3)), w, 0, sink);
    int p = t.softmax_rows(wn, 4);  // mask the last column
    int out = t.sum(t.square(t.matmul(p, t.constant(mix))));
    if (sink) t.backward(out);
    return t.val(out)(0, 0);
  });
}

TEST_CASE("layer norm gradient wrt input, gain and bias") {
  Rng rng(5);
  Matrix x = random_matrix(4, 6, rng);
  Matrix gain = Matrix::Ones(1, 6) + 0.1 * random_matrix(1, 6, rng);
  Matrix bias = 0.1 * random_matrix(1, 6, rng);
  Matrix mix = random_matrix(6, 3, rng);

  auto loss = [&](GradStore* sink) {
    Tape t;
    int xn = t.matmul_param(t.constant(Matrix::Identity(4, 4)), x, 0, sink);
    int y = t.layer_norm(xn, gain, 1, bias, 2, sink);
    int out = t.sum(t.square(t.matmul(y, t.constant(mix))));
    if (sink) t.backward(out);
    return t.val(out)(0, 0);
  };
  fd_check(x, loss, 1e-5);

  GradStore sink(3);
  loss(&sink);
  Matrix ggain = sink.at(1), gbias = sink.at(2);
  const double h = 1e-6;
  for (int j = 0; j < 6; ++j) {
    double keep = gain(0, j);
    gain(0, j) = keep + h;
    double up = loss(nullptr);
    gain(0, j) = keep - h;
    double dn = loss(nullptr);
    gain(0, j) = keep;
    CHECK(ggain(0, j) == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-5));
  }
  for (int j = 0; j < 6; ++j) {
    double keep = bias(0, j);
    bias(0, j) = keep + h;
    double up = loss(nullptr);
    bias(0, j) = keep - h;
    double dn = loss(nullptr);
    bias(0, j) = keep;
    CHECK(gbias(0, j) == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("gelu, exp, clamp gradients") {
  Rng rng(6);
  Matrix w = random_matrix(3, 3, rng);
  fd_check(w, [&](GradStore* sink) {
    Tape t;
    int wn = t.matmul_param(t.constant(Matrix::Identity(3, 3)), w, 0, sink);
    int out = t.sum(t.mul(t.gelu(wn), t.exp_(t.scale(wn, 0.3))));
    if (sink) t.backward(out);
    return t.val(out)(0, 0);
  });

  // Clamp kills the gradient outside the range.
  Matrix c(1, 3);
  c << -5.0, 0.5, 9.0;
  GradStore sink(1);
  Tape t;
  int cn = t.matmul_param(t.constant(Matrix::Identity(1, 1)), c, 0, &sink);
  t.backward(t.sum(t.clamp(cn, -1.0, 1.0)));
  CHECK(sink.at(0)(0, 0) == 0.0);
  CHECK(sink.at(0)(0, 1) == 1.0);
  CHECK(sink.at(0)(0, 2) == 0.0);
}

TEST_CASE("cross-entropy over logits matches finite differences") {
  Rng rng(7);
  Matrix w = random_matrix(4, 7, rng);
  std::vector<int> targets{2, 0, 6, 3};
  fd_check(w, [&](GradStore* sink) {
    Tape t;
    int logits = t.matmul_param(t.constant(Matrix::Identity(4, 4)), w, 0, sink);
    int out = t.ce_logits_sum(logits, targets);
    if (sink) t.backward(out);
    return t.val(out)(0, 0);
  });
}

TEST_CASE("gaussian and bernoulli NLL gradients") {
  Rng rng(8);
  Matrix w = random_matrix(5, 2, rng);
  Eigen::VectorXd targets(5);
  targets << 0.5, -1.2, 3.0, 0.0, 2.2;
  fd_check(w, [&](GradStore* sink) {
    Tape t;
    int p2 = t.matmul_param(t.constant(Matrix::Identity(5, 5)), w, 0, sink);
    int out = t.gaussian_nll_sum(t.slice_cols(p2, 0, 1), t.slice_cols(p2, 1, 2), targets);
    if (sink) t.backward(out);
    return t.val(out)(0, 0);
  });

  Matrix logits = random_matrix(4, 1, rng);
  Eigen::VectorXd bt(4);
  bt << 1, 0, 1, 1;
  fd_check(logits, [&](GradStore* sink) {
    Tape t;
    int l = t.matmul_param(t.constant(Matrix::Identity(4, 4)), logits, 0, sink);
    int out = t.bernoulli_nll_sum(l, bt);
    if (sink) t.backward(out);
    return t.val(out)(0, 0);
  });
}

TEST_CASE("external scalar routes the supplied gradient") {
  Matrix w(2, 1);
  w << 0.3, -0.7;
  GradStore sink(1);
  Tape t;
  int z = t.matmul_param(t.constant(Matrix::Identity(2, 2)), w, 0, &sink);
  Matrix dv(2, 1);
  dv << 2.0, -3.0;
  int ext = t.external(5.0, z, dv);
  t.backward(t.scale(ext, 0.5));
  CHECK(t.val(ext)(0, 0) == 5.0);
  CHECK(sink.at(0)(0, 0) == doctest::Approx(1.0));
  CHECK(sink.at(0)(1, 0) == doctest::Approx(-1.5));
}

TEST_CASE("gather and embedding rows accumulate duplicates") {
  Matrix table(3, 2);
  table << 1, 2, 3, 4, 5, 6;
  GradStore sink(1);
  Tape t;
  int rows = t.embedding_rows(table, 0, &sink, {1, 1, 2});
  t.backward(t.sum(rows));
  CHECK(sink.at(0)(0, 0) == 0.0);
  CHECK(sink.at(0)(1, 0) == 2.0);  // row 1 gathered twice
  CHECK(sink.at(0)(2, 1) == 1.0);
}
