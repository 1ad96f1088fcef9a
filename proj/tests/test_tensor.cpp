#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rosita/ops.hpp"
#include "rosita/tensor.hpp"

using namespace rosita;

TEST_CASE("square at x=3 has gradient 6") {
  auto x = Tensor<double>::scalar(3.0, true);
  auto y = mul(x, x);
  backward(y);
  CHECK(y.item() == doctest::Approx(9.0));
  CHECK(x.grad()(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("softmax cross-entropy gradient is probabilities minus one-hot") {
  MatrixD logits(2, 4);
  logits << 0.3, -1.2, 2.0, 0.5, -0.7, 0.1, 0.0, 1.4;
  auto z = Tensor<double>::from_matrix(logits, true);
  auto loss = sum_all(cross_entropy_rows(z, {2, 0}));
  backward(loss);

  MatrixD probs(2, 4);
  for (Index i = 0; i < 2; ++i) {
    Eigen::RowVectorXd e = (logits.row(i).array() - logits.row(i).maxCoeff()).exp();
    probs.row(i) = e / e.sum();
  }
  probs(0, 2) -= 1.0;
  probs(1, 0) -= 1.0;
  CHECK((z.grad() - probs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fan-out accumulates gradients, matching finite differences") {
  // y = x*x + 3x uses x on two paths; dy/dx = 2x + 3.
  auto run = [](double v) {
    auto x = Tensor<double>::scalar(v, true);
    auto y = add(mul(x, x), scale(x, 3.0));
    return std::pair{x, y};
  };
  auto [x, y] = run(1.7);
  backward(y);
  const double eps = 1e-6;
  double numeric = (run(1.7 + eps).second.item() - run(1.7 - eps).second.item()) / (2 * eps);
  CHECK(x.grad()(0, 0) == doctest::Approx(numeric).epsilon(1e-8));
  CHECK(x.grad()(0, 0) == doctest::Approx(2 * 1.7 + 3));
}

TEST_CASE("diamond-shaped graph backpropagates each node once") {
  // s = sum(a*b) + sum(a+b); both paths share a and b.
  MatrixD av(2, 2), bv(2, 2);
  av << 1, 2, 3, 4;
  bv << 5, 6, 7, 8;
  auto a = Tensor<double>::from_matrix(av, true);
  auto b = Tensor<double>::from_matrix(bv, true);
  auto s = add(sum_all(mul(a, b)), sum_all(add(a, b)));
  backward(s);
  // d/da = b + 1, d/db = a + 1; double-visiting any node would inflate these.
  CHECK((a.grad() - (bv.array() + 1).matrix()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((b.grad() - (av.array() + 1).matrix()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("backward requires a scalar loss") {
  auto x = Tensor<double>::from_vector({1.0, 2.0}, {2}, true);
  auto y = scale(x, 2.0);
  CHECK_THROWS_AS(backward(y), Error);
}

TEST_CASE("parameters not reachable from the loss keep no gradient") {
  auto used = Tensor<double>::scalar(2.0, true);
  auto unused = Tensor<double>::scalar(5.0, true);
  auto y = mul(used, used);
  backward(y);
  CHECK(used.has_grad());
  CHECK_FALSE(unused.has_grad());
}

TEST_CASE("NoGradGuard suppresses graph construction") {
  auto x = Tensor<double>::scalar(3.0, true);
  NoGradGuard guard;
  auto y = mul(x, x);
  CHECK(y.item() == doctest::Approx(9.0));
  CHECK_FALSE(y.requires_grad());
  CHECK_THROWS_AS(backward(y), Error);
}

TEST_CASE("two backward calls accumulate into existing grads") {
  auto x = Tensor<double>::scalar(3.0, true);
  auto y1 = mul(x, x);
  backward(y1);
  auto y2 = mul(x, x);
  backward(y2);
  CHECK(x.grad()(0, 0) == doctest::Approx(12.0));
  x.zero_grad();
  CHECK(x.grad()(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("construction validates data length against shape") {
  CHECK_THROWS_AS(Tensor<double>::from_vector({1.0, 2.0, 3.0}, {2, 2}, false), Error);
  CHECK_NOTHROW(Tensor<double>::from_vector({1.0, 2.0, 3.0, 4.0}, {2, 2}, false));
}

TEST_CASE("item refuses multi-element tensors") {
  auto x = Tensor<double>::from_vector({1.0, 2.0}, {2}, false);
  CHECK_THROWS_AS(x.item(), Error);
}

TEST_CASE("rank-1 and rank-2 shapes map onto rows and columns") {
  auto v = Tensor<double>::from_vector({1, 2, 3}, {3}, false);
  CHECK(v.rows() == 3);
  CHECK(v.cols() == 1);
  auto m = Tensor<double>::from_vector({1, 2, 3, 4, 5, 6}, {2, 3}, false);
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  auto r = reshape(m, {3, 2});
  CHECK(r.value()(0, 0) == 1);
  CHECK(r.value()(0, 1) == 2);
  CHECK(r.value()(1, 0) == 3);
}

TEST_CASE("float and double instantiations coexist") {
  auto xf = Tensor<float>::scalar(2.0f, true);
  auto yf = mul(xf, xf);
  backward(yf);
  CHECK(xf.grad()(0, 0) == doctest::Approx(4.0f));
}
