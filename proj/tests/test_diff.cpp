#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fd_suite.hpp"
#include "testutil.hpp"
#include "upr/diff.hpp"

using namespace upr;
using namespace upr::diff;
using uprtest::fd_gradient;
using uprtest::max_rel_err;
using uprtest::random_tensor;

TEST_CASE("softmax of zero logits is uniform; rows sum to one") {
  Tape t;
  Var y = t.softmax_rows(t.constant(Tensor(2, 5)));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 5; ++j) CHECK(y.value().at(i, j) == doctest::Approx(0.2).epsilon(1e-14));

  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    Tape t2;
    Var s = t2.softmax_rows(t2.constant(random_tensor(rng, 4, 7, -30, 30)));
    for (int i = 0; i < 4; ++i) {
      double row = 0.0;
      for (int j = 0; j < 7; ++j) {
        row += s.value().at(i, j);
        CHECK(s.value().at(i, j) >= 0.0);
      }
      CHECK(std::fabs(row - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("1-d conv with identity kernel reproduces the input") {
  Rng rng(5);
  Tape t;
  const int C = 3, k = 3;
  Var x = t.constant(random_tensor(rng, 6, C));
  Tensor w(C, k * C);  // out channel c: single 1 at the center tap, in channel c
  for (int c = 0; c < C; ++c) w.at(c, 1 * C + c) = 1.0;
  Var y = t.conv1d(x, t.constant(std::move(w)), t.constant(Tensor(1, C)), k);
  for (std::size_t i = 0; i < x.value().size(); ++i)
    CHECK(y.value().v[i] == doctest::Approx(x.value().v[i]).epsilon(1e-15));
}

TEST_CASE("affine with zero weights is the bias") {
  Tape t;
  Var x = t.constant(Tensor::from(2, 3, {1, 2, 3, 4, 5, 6}));
  Var b = t.constant(Tensor::from(1, 4, {0.5, -1, 2, 0}));
  Var y = t.affine(x, t.constant(Tensor(4, 3)), b);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) CHECK(y.value().at(i, j) == b.value().v[j]);
}

TEST_CASE("basic gradients: x^2 and constants") {
  Tape t;
  Var x = t.parameter(Tensor::scalar(3.0));
  Var f = t.mul(x, x);
  CHECK(t.gradient(f, x).value().item() == doctest::Approx(6.0));

  // gradient of a constant w.r.t. anything is zero
  Tape t2;
  Var p = t2.parameter(Tensor::from(2, 2, {1, 2, 3, 4}));
  Var c = t2.sum_all(t2.constant(Tensor::scalar(5.0)));
  Var g = t2.gradient(c, p);
  for (double v : g.value().v) CHECK(v == 0.0);
}

TEST_CASE("gradient requires scalar output") {
  Tape t;
  Var p = t.parameter(Tensor(2, 2));
  CHECK_THROWS_AS((void)t.gradient(p, p), ShapeError);
}

TEST_CASE("forward is referentially transparent") {
  Rng rng(11);
  const Tensor x = random_tensor(rng, 4, 3);
  const Tensor w = random_tensor(rng, 5, 9);
  auto run = [&]() {
    Tape t;
    Var h = t.conv1d(t.constant(x), t.constant(w), t.constant(Tensor(1, 5)), 3);
    return t.sum_all(t.tanh(h)).value().item();
  };
  const double a = run();
  CHECK(run() == a);
  CHECK(run() == a);
}

TEST_CASE("gradient linearity") {
  Rng rng(17);
  Tape t;
  Var p = t.parameter(random_tensor(rng, 3, 3));
  Var f = t.sum_all(t.tanh(p));
  Var g = t.sum_all(t.mul(p, p));
  Var combo = t.add(t.scale(f, 2.5), t.scale(g, -1.5));

  Var gf = t.gradient(f, p);
  Var gg = t.gradient(g, p);
  Var gc = t.gradient(combo, p);
  for (std::size_t i = 0; i < gc.value().size(); ++i)
    CHECK(gc.value().v[i] ==
          doctest::Approx(2.5 * gf.value().v[i] - 1.5 * gg.value().v[i]).epsilon(1e-12));
}

TEST_CASE("every operator matches finite differences") {
  auto report = uprtest::run_op_fd_suite(/*instances_per_case=*/5, /*seed=*/20240810);
  INFO("instances: ", report.instances, " worst: ", report.worst_case);
  CHECK(report.instances >= 100);
  CHECK(report.max_err <= 1e-4);
}

TEST_CASE("straight-through: one-hot forward, identity backward") {
  Rng rng(23);
  Tape t;
  Var p = t.parameter(random_tensor(rng, 4, 6));
  Var st = t.straight_through(p);
  for (int i = 0; i < 4; ++i) {
    double row = 0.0;
    int ones = 0;
    for (int j = 0; j < 6; ++j) {
      row += st.value().at(i, j);
      if (st.value().at(i, j) == 1.0) ++ones;
    }
    CHECK(row == 1.0);
    CHECK(ones == 1);
  }
  // backward treats the op as identity
  Tensor c = random_tensor(rng, 4, 6);
  Var f = t.sum_all(t.mul(st, t.constant(c)));
  Var g = t.gradient(f, p);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(g.value().v[i] == c.v[i]);
}

TEST_CASE("gradient penalty: linear discriminator with unit-norm weights") {
  // D(p) = w . p with ||w|| = 1: the input gradient is w, the penalty 0
  const int n = 4;
  Tensor w0(1, n);
  for (int j = 0; j < n; ++j) w0.v[j] = 0.5;  // ||w|| = 1
  Rng rng(31);
  const Tensor input = random_tensor(rng, 1, n, 0.0, 1.0);

  Tape t;
  Var w = t.parameter(w0);
  Var x = t.constant(input);
  Var f = t.sum_all(t.mul(x, w));
  Var pen = t.gradient_penalty(f, x);
  CHECK(pen.value().item() == doctest::Approx(0.0).epsilon(1e-12));

  Var g = t.gradient(pen, w);
  auto feval = [&](const std::vector<double>& th) {
    Tape t2;
    Tensor tw(1, n);
    tw.v = th;
    Var w2 = t2.parameter(std::move(tw));
    Var x2 = t2.constant(input);
    Var f2 = t2.sum_all(t2.mul(x2, w2));
    return t2.gradient_penalty(f2, x2).value().item();
  };
  const auto fd = fd_gradient(feval, w0.v);
  CHECK(max_rel_err(g.value().v, fd) <= 1e-6);
}

TEST_CASE("gradient penalty: D(p) = c * sum(p) closed form") {
  // grad_p D = c * ones(n); penalty = (c*sqrt(n) - 1)^2
  const int n = 6;
  const double c0 = 2.0;
  Rng rng(37);
  const Tensor input = random_tensor(rng, 1, n, 0.0, 1.0);

  auto build = [&](Tape& t, Var cv) {
    Var x = t.constant(input);
    Var f = t.mul(cv, t.sum_all(x));
    return std::pair{f, x};
  };

  Tape t;
  Var cv = t.parameter(Tensor::scalar(c0));
  auto [f, x] = build(t, cv);
  Var pen = t.gradient_penalty(f, x);
  const double expected = std::pow(c0 * std::sqrt(double(n)) - 1.0, 2.0);
  CHECK(pen.value().item() == doctest::Approx(expected).epsilon(1e-10));

  // analytic d/dc = 2 (c sqrt(n) - 1) sqrt(n)
  Var g = t.gradient(pen, cv);
  const double analytic = 2.0 * (c0 * std::sqrt(double(n)) - 1.0) * std::sqrt(double(n));
  CHECK(g.value().item() == doctest::Approx(analytic).epsilon(1e-8));

  auto feval = [&](const std::vector<double>& th) {
    Tape t2;
    Var c2 = t2.parameter(Tensor::scalar(th[0]));
    auto [f2, x2] = build(t2, c2);
    return t2.gradient_penalty(f2, x2).value().item();
  };
  const auto fd = fd_gradient(feval, {c0});
  CHECK(uprtest::rel_err(g.value().item(), fd[0]) <= 1e-8);
}

TEST_CASE("gradient penalty on a random conv discriminator matches FD") {
  auto report = uprtest::run_gp_fd_suite(/*instances=*/5, /*seed=*/20240812);
  INFO("worst: ", report.worst_case);
  CHECK(report.max_err <= 1e-3);
}

TEST_CASE("gradient penalty rejects non-smooth operators on the path") {
  Rng rng(41);
  Tape t;
  Var x = t.constant(random_tensor(rng, 3, 4));
  Var w = t.parameter(random_tensor(rng, 2, 4));
  Var f = t.sum_all(t.relu(t.matmul_nt(x, w)));
  CHECK_THROWS_AS((void)t.gradient_penalty(f, x), UnsupportedOperatorError);

  // relu off the input->output path is fine
  Tape t2;
  Var x2 = t2.constant(random_tensor(rng, 3, 4));
  Var w2 = t2.parameter(random_tensor(rng, 2, 4));
  Var side = t2.sum_all(t2.relu(w2));  // does not involve x2
  Var f2 = t2.add(t2.sum_all(t2.tanh(t2.matmul_nt(x2, w2))), side);
  CHECK_NOTHROW((void)t2.gradient_penalty(f2, x2));
}

TEST_CASE("shape errors name the operator") {
  Tape t;
  Var a = t.constant(Tensor(2, 3));
  Var b = t.constant(Tensor(3, 2));
  try {
    (void)t.add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("add") != std::string::npos);
  }
}
