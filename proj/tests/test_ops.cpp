#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "rosita/grad_check.hpp"
#include "rosita/ops.hpp"
#include "rosita/random.hpp"

using namespace rosita;

namespace {

constexpr int kSeeds = 20;

MatrixD rand_mat(Rng& rng, Index r, Index c, double lo = -1.5, double hi = 1.5) {
  MatrixD m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

Tensor<double> param(Rng& rng, Index r, Index c, double lo = -1.5, double hi = 1.5) {
  return Tensor<double>::from_matrix(rand_mat(rng, r, c, lo, hi), true);
}

// Scalar readout with fixed random weights so element permutations are caught.
std::function<Tensor<double>(const Tensor<double>&)> readout(Rng& rng, Index r,
                                                             Index c) {
  auto w = Tensor<double>::from_matrix(rand_mat(rng, r, c));
  return [w](const Tensor<double>& t) { return sum_all(mul(t, w)); };
}

using Case = std::pair<std::vector<std::pair<std::string, Tensor<double>>>,
                       std::function<Tensor<double>()>>;

void run_case(const char* name, int seed, const Case& c) {
  auto rep = grad_check(c.first, c.second, 1e-4);
  INFO(name, " seed ", seed, "\n", rep.describe());
  CHECK(rep.pass(1e-3));
}

template <class MakeCase>
void check_op(const char* name, MakeCase make) {
  for (int s = 0; s < kSeeds; ++s) {
    Rng rng(4000 + s);
    run_case(name, s, make(rng));
  }
}

}  // namespace

TEST_CASE("elementwise ops pass finite-difference checks") {
  check_op("add", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    auto a = param(rng, r, c), b = param(rng, r, c);
    auto out = readout(rng, r, c);
    return {{{"a", a}, {"b", b}}, [=] { return out(add(a, b)); }};
  });
  check_op("sub", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    auto a = param(rng, r, c), b = param(rng, r, c);
    auto out = readout(rng, r, c);
    return {{{"a", a}, {"b", b}}, [=] { return out(sub(a, b)); }};
  });
  check_op("mul", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    auto a = param(rng, r, c), b = param(rng, r, c);
    auto out = readout(rng, r, c);
    return {{{"a", a}, {"b", b}}, [=] { return out(mul(a, b)); }};
  });
  check_op("scale", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    auto a = param(rng, r, c);
    double k = rng.uniform(-2, 2);
    auto out = readout(rng, r, c);
    return {{{"a", a}}, [=] { return out(scale(a, k)); }};
  });
  check_op("add_rowvec", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    auto a = param(rng, r, c), b = param(rng, 1, c);
    auto out = readout(rng, r, c);
    return {{{"a", a}, {"b", b}}, [=] { return out(add_rowvec(a, b)); }};
  });
  check_op("add_colvec", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    auto a = param(rng, r, c), b = param(rng, r, 1);
    auto out = readout(rng, r, c);
    return {{{"a", a}, {"b", b}}, [=] { return out(add_colvec(a, b)); }};
  });
  check_op("mul_colvec", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    auto a = param(rng, r, c), m = param(rng, r, 1);
    auto out = readout(rng, r, c);
    return {{{"a", a}, {"m", m}}, [=] { return out(mul_colvec(a, m)); }};
  });
  check_op("mul_scalar", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    auto a = param(rng, r, c), s = param(rng, 1, 1);
    auto out = readout(rng, r, c);
    return {{{"a", a}, {"s", s}}, [=] { return out(mul_scalar(a, s)); }};
  });
}

TEST_CASE("matmul and transpose pass finite-difference checks") {
  check_op("matmul", [](Rng& rng) -> Case {
    Index m = 1 + rng.integer(4), k = 1 + rng.integer(4), n = 1 + rng.integer(4);
    auto a = param(rng, m, k), b = param(rng, k, n);
    auto out = readout(rng, m, n);
    return {{{"a", a}, {"b", b}}, [=] { return out(matmul(a, b)); }};
  });
  check_op("transpose", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    auto a = param(rng, r, c);
    auto out = readout(rng, c, r);
    return {{{"a", a}}, [=] { return out(transpose(a)); }};
  });
}

TEST_CASE("structural ops pass finite-difference checks") {
  check_op("concat_rows", [](Rng& rng) -> Case {
    Index c = 1 + rng.integer(4);
    Index r1 = 1 + rng.integer(3), r2 = 1 + rng.integer(3);
    auto a = param(rng, r1, c), b = param(rng, r2, c);
    auto out = readout(rng, r1 + r2, c);
    return {{{"a", a}, {"b", b}},
            [=] { return out(concat_rows<double>({a, b})); }};
  });
  check_op("concat_cols", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4);
    Index c1 = 1 + rng.integer(3), c2 = 1 + rng.integer(3);
    auto a = param(rng, r, c1), b = param(rng, r, c2);
    auto out = readout(rng, r, c1 + c2);
    return {{{"a", a}, {"b", b}},
            [=] { return out(concat_cols<double>({a, b})); }};
  });
  check_op("slice_rows", [](Rng& rng) -> Case {
    Index r = 2 + rng.integer(4), c = 1 + rng.integer(4);
    Index start = rng.integer(r - 1), count = 1 + rng.integer(r - start - 1 + 1);
    auto a = param(rng, r, c);
    auto out = readout(rng, count, c);
    return {{{"a", a}}, [=] { return out(slice_rows(a, start, count)); }};
  });
  check_op("slice_cols", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 2 + rng.integer(4);
    Index start = rng.integer(c - 1), count = 1 + rng.integer(c - start - 1 + 1);
    auto a = param(rng, r, c);
    auto out = readout(rng, r, count);
    return {{{"a", a}}, [=] { return out(slice_cols(a, start, count)); }};
  });
  check_op("gather_rows", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    Index k = 1 + rng.integer(6);
    std::vector<Index> ids;
    for (Index i = 0; i < k; ++i) ids.push_back(rng.integer(r));  // duplicates allowed
    auto a = param(rng, r, c);
    auto out = readout(rng, k, c);
    return {{{"a", a}}, [=] { return out(gather_rows(a, ids)); }};
  });
  check_op("reshape", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    auto a = param(rng, r, c);
    auto out = readout(rng, r * c, 1);
    return {{{"a", a}}, [=] { return out(reshape(a, {r * c})); }};
  });
  check_op("pick", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    Index i = rng.integer(r), j = rng.integer(c);
    auto a = param(rng, r, c);
    return {{{"a", a}}, [=] { return pick(a, i, j); }};
  });
}

TEST_CASE("nonlinearities pass finite-difference checks") {
  check_op("tanh", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    auto a = param(rng, r, c);
    auto out = readout(rng, r, c);
    return {{{"a", a}}, [=] { return out(tanh_t(a)); }};
  });
  check_op("sigmoid", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    auto a = param(rng, r, c);
    auto out = readout(rng, r, c);
    return {{{"a", a}}, [=] { return out(sigmoid(a)); }};
  });
  check_op("relu", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    // keep entries away from the kink, where finite differences disagree
    MatrixD m = rand_mat(rng, r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j)
        if (std::abs(m(i, j)) < 1e-2) m(i, j) = 0.5;
    auto a = Tensor<double>::from_matrix(m, true);
    auto out = readout(rng, r, c);
    return {{{"a", a}}, [=] { return out(relu(a)); }};
  });
  check_op("exp", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    auto a = param(rng, r, c);
    auto out = readout(rng, r, c);
    return {{{"a", a}}, [=] { return out(exp_t(a)); }};
  });
  check_op("log", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    auto a = param(rng, r, c, 0.3, 3.0);
    auto out = readout(rng, r, c);
    return {{{"a", a}}, [=] { return out(log_t(a)); }};
  });
}

TEST_CASE("reductions and softmax family pass finite-difference checks") {
  check_op("sum_all", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    auto a = param(rng, r, c);
    return {{{"a", a}}, [=] { return sum_all(a); }};
  });
  check_op("mean_all", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    auto a = param(rng, r, c);
    return {{{"a", a}}, [=] { return mean_all(a); }};
  });
  check_op("row_sum", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    auto a = param(rng, r, c);
    auto out = readout(rng, r, 1);
    return {{{"a", a}}, [=] { return out(row_sum(a)); }};
  });
  check_op("softmax_rows", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    auto a = param(rng, r, c, -3, 3);
    auto out = readout(rng, r, c);
    return {{{"a", a}}, [=] { return out(softmax_rows(a)); }};
  });
  check_op("log_softmax_rows", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    auto a = param(rng, r, c, -3, 3);
    auto out = readout(rng, r, c);
    return {{{"a", a}}, [=] { return out(log_softmax_rows(a)); }};
  });
  check_op("logsumexp_rows", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 1 + rng.integer(4);
    auto a = param(rng, r, c, -3, 3);
    auto out = readout(rng, r, 1);
    return {{{"a", a}}, [=] { return out(logsumexp_rows(a)); }};
  });
  check_op("group_col_max", [](Rng& rng) -> Case {
    Index group = 2 + rng.integer(3), groups = 1 + rng.integer(3);
    Index c = 1 + rng.integer(4);
    // separate entries so eps never flips an argmax
    MatrixD m = rand_mat(rng, groups * group, c, -8, 8);
    for (Index j = 0; j < c; ++j)
      for (Index g = 0; g < groups; ++g)
        for (Index r2 = 0; r2 < group; ++r2)
          m(g * group + r2, j) = std::round(m(g * group + r2, j) * 4) / 4.0 +
                                 1e-3 * static_cast<double>(r2);
    auto a = Tensor<double>::from_matrix(m, true);
    auto out = readout(rng, groups, c);
    return {{{"a", a}}, [=] { return out(group_col_max(a, group)); }};
  });
  check_op("cross_entropy_rows", [](Rng& rng) -> Case {
    Index r = 1 + rng.integer(4), c = 2 + rng.integer(4);
    std::vector<Index> targets;
    for (Index i = 0; i < r; ++i) targets.push_back(rng.integer(c));
    auto a = param(rng, r, c, -3, 3);
    auto out = readout(rng, r, 1);
    return {{{"a", a}}, [=] { return out(cross_entropy_rows(a, targets)); }};
  });
}

TEST_CASE("softmax rows sum to one and cross-entropy matches log-softmax") {
  Rng rng(7);
  auto a = param(rng, 5, 7, -4, 4);
  auto sm = softmax_rows(a);
  for (Index i = 0; i < 5; ++i)
    CHECK(sm.value().row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<Index> targets = {1, 0, 6, 3, 2};
  auto ce = cross_entropy_rows(a, targets);
  auto ls = log_softmax_rows(a);
  for (Index i = 0; i < 5; ++i)
    CHECK(ce.value()(i, 0) ==
          doctest::Approx(-ls.value()(i, targets[static_cast<std::size_t>(i)]))
              .epsilon(1e-12));
}

TEST_CASE("dropout: identity at eval, inverted scaling at train") {
  Rng rng(11);
  auto a = param(rng, 30, 40);
  auto eval_out = dropout(a, 0.5, false, rng);
  CHECK(eval_out.node() == a.node());  // same tensor, no copy
  auto zero_p = dropout(a, 0.0, true, rng);
  CHECK(zero_p.node() == a.node());

  auto train_out = dropout(a, 0.5, true, rng);
  Index zeros = 0;
  for (Index i = 0; i < 30; ++i)
    for (Index j = 0; j < 40; ++j) {
      double v = train_out.value()(i, j);
      double x = a.value()(i, j);
      bool dropped = v == 0.0;
      bool kept = std::abs(v - 2.0 * x) < 1e-12;
      CHECK((dropped || kept));
      zeros += dropped;
    }
  CHECK(zeros > 400);  // ~600 expected at p=0.5
  CHECK(zeros < 800);
}

TEST_CASE("shape mismatches are rejected with errors") {
  Rng rng(3);
  auto a = param(rng, 2, 3), b = param(rng, 3, 2);
  CHECK_THROWS_AS(add(a, b), Error);
  CHECK_THROWS_AS(mul(a, b), Error);
  CHECK_THROWS_AS(matmul(a, a), Error);
  CHECK_THROWS_AS(slice_rows(a, 1, 5), Error);
  CHECK_THROWS_AS(gather_rows(a, {0, 2}), Error);
  CHECK_THROWS_AS(reshape(a, {4, 2}), Error);
  CHECK_THROWS_AS(cross_entropy_rows(a, {0}), Error);
  CHECK_THROWS_AS(cross_entropy_rows(a, {0, 3}), Error);
  CHECK_THROWS_AS(group_col_max(a, 4), Error);
}
