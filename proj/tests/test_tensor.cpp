#include <catch2/catch_amalgamated.hpp>

#include "oracle.hpp"
#include "shortcut/tensor.hpp"

using namespace shortcut;

TEST_CASE("matmul identity and analytic cases") {
  Tape tape;
  Tensor I(2, 2);
  I.at(0, 0) = I.at(1, 1) = 1.0f;
  Tensor A(2, 2);
  A.at(0, 0) = 1;
  A.at(0, 1) = 2;
  A.at(1, 0) = 3;
  A.at(1, 1) = 4;
  auto out = tape.matmul(tape.leaf(I), tape.leaf(A));
  for (int i = 0; i < 4; ++i) CHECK(tape.value(out).data[i] == A.data[i]);

  Tensor v(2, 1);
  v.at(0, 0) = 0;
  v.at(1, 0) = 1;
  auto out2 = tape.matmul(tape.leaf(A), tape.leaf(v));
  CHECK(tape.value(out2).at(0, 0) == 2.0f);
  CHECK(tape.value(out2).at(1, 0) == 4.0f);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  Tape tape;
  auto a = tape.leaf(Tensor::zeros(2, 3));
  auto b = tape.leaf(Tensor::zeros(4, 2));
  CHECK_THROWS_AS(tape.matmul(a, b), DimensionError);
  CHECK_THROWS_WITH(tape.matmul(a, b), Catch::Matchers::ContainsSubstring("2x3"));
}

TEST_CASE("matmul gradient of sum equals ones times b^T, FD checked") {
  Rng rng(7);
  Tensor a = Tensor::randn(3, 4, rng);
  Tensor b = Tensor::randn(4, 2, rng);
  Tape tape;
  auto ida = tape.leaf(a, true);
  auto loss = tape.sum(tape.matmul(ida, tape.leaf(b)));
  tape.backward(loss);
  const Tensor& g = tape.grad(ida);

  // analytic: grad = ones(3x2) * b^T
  auto db = oracle::from_tensor(b);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) {
      double expect = 0.0;
      for (int j = 0; j < 2; ++j) expect += db[c][j];
      CHECK_THAT(g.at(r, c), Catch::Matchers::WithinRel(expect, 1e-5));
    }

  // finite differences against a double-precision matmul
  auto da = oracle::from_tensor(a);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) {
      double fdv = oracle::fd(
          [&](double x) {
            auto pa = da;
            pa[r][c] = x;
            auto out = oracle::dmatmul(pa, db);
            double s = 0.0;
            for (auto& row : out)
              for (double v : row) s += v;
            return s;
          },
          da[r][c]);
      CHECK(oracle::rel_err(g.at(r, c), fdv) < 1e-3);
    }
}

TEST_CASE("elementwise add identity, silu(0), square gradient") {
  Rng rng(3);
  Tensor x = Tensor::randn(2, 3, rng);
  Tape tape;
  auto idx = tape.leaf(x);
  auto added = tape.add(idx, tape.leaf(Tensor::zeros(2, 3)));
  for (int i = 0; i < x.size(); ++i) CHECK(tape.value(added).data[i] == x.data[i]);

  auto sil = tape.silu(tape.leaf(Tensor::zeros(1, 1)));
  CHECK(tape.value(sil).data[0] == 0.0f);

  Tape t2;
  auto w = t2.leaf(Tensor::scalar(3.0f), true);
  auto loss = t2.sum(t2.square(w));
  t2.backward(loss);
  double fdv = oracle::fd([](double v) { return v * v; }, 3.0);
  CHECK(oracle::rel_err(t2.grad(w).data[0], 6.0) < 1e-5);
  CHECK(oracle::rel_err(t2.grad(w).data[0], fdv) < 1e-3);
}

TEST_CASE("elementwise shape mismatch raises dimension error") {
  Tape tape;
  auto a = tape.leaf(Tensor::zeros(2, 2));
  auto b = tape.leaf(Tensor::zeros(2, 3));
  CHECK_THROWS_AS(tape.add(a, b), DimensionError);
  CHECK_THROWS_AS(tape.mul(a, b), DimensionError);
  CHECK_THROWS_AS(tape.mse(a, b), DimensionError);
}

TEST_CASE("mse identity, analytic value, gradient") {
  Rng rng(11);
  Tensor x = Tensor::randn(3, 3, rng);
  Tape tape;
  auto a = tape.leaf(x, true);
  CHECK(tape.value(tape.mse(a, tape.leaf(x))).data[0] == 0.0f);

  Tensor p(1, 2), q(1, 2);
  p.at(0, 0) = 1;
  q.at(0, 1) = 1;
  auto m = tape.mse(tape.leaf(p), tape.leaf(q));
  CHECK(tape.value(m).data[0] == 1.0f);

  Tensor b = Tensor::randn(3, 3, rng);
  Tape t2;
  auto ida = t2.leaf(x, true);
  auto loss = t2.mse(ida, t2.leaf(b));
  t2.backward(loss);
  for (int i = 0; i < x.size(); ++i) {
    double expect = 2.0 * (static_cast<double>(x.data[i]) - b.data[i]) / x.size();
    CHECK(oracle::rel_err(t2.grad(ida).data[i], expect) < 1e-4);
  }
}

TEST_CASE("backward of sum is all ones; non-scalar loss rejected") {
  Tape tape;
  auto w = tape.leaf(Tensor::full(2, 3, 0.5f), true);
  auto loss = tape.sum(w);
  tape.backward(loss);
  for (float g : tape.grad(w).data) CHECK(g == 1.0f);
  CHECK_THROWS_AS(tape.backward(w), ContractError);
}

TEST_CASE("backward through mse(w*x, y) matches analytic 2x(wx-y)") {
  float wv = 0.7f, xv = 1.3f, yv = -0.4f;
  Tape tape;
  auto w = tape.leaf(Tensor::scalar(wv), true);
  auto x = tape.leaf(Tensor::scalar(xv));
  auto y = tape.leaf(Tensor::scalar(yv));
  auto loss = tape.mse(tape.mul(w, x), y);
  tape.backward(loss);
  double expect = 2.0 * xv * (static_cast<double>(wv) * xv - yv);
  CHECK(oracle::rel_err(tape.grad(w).data[0], expect) < 1e-4);
  double fdv = oracle::fd(
      [&](double v) {
        double d = v * xv - yv;
        return d * d;
      },
      wv);
  CHECK(oracle::rel_err(tape.grad(w).data[0], fdv) < 1e-3);
}

TEST_CASE("stopgrad keeps forward value bitwise and blocks gradients") {
  Rng rng(5);
  Tensor x = Tensor::randn(4, 2, rng);
  Tape tape;
  auto idx = tape.leaf(x, true);
  auto stopped = tape.stopgrad(idx);
  for (int i = 0; i < x.size(); ++i) CHECK(tape.value(stopped).data[i] == x.data[i]);

  // mse(stopgrad(f(w)), f(w)): only the live branch carries gradient
  Tape t2;
  auto w = t2.leaf(Tensor::scalar(1.5f), true);
  auto f = t2.square(w);
  auto frozen = t2.stopgrad(f);
  auto loss = t2.mse(frozen, t2.scale(f, 2.0f));
  t2.backward(loss);
  // d/dw (c - 2w^2)^2 with c = w^2 treated constant: 2(c-2w^2)(-4w)
  double c = 1.5 * 1.5;
  double expect = 2.0 * (c - 2.0 * c) * (-4.0 * 1.5);
  CHECK(oracle::rel_err(t2.grad(w).data[0], expect) < 1e-4);
}

TEST_CASE("stopgrad branch parameters get exactly zero gradient") {
  Tape tape;
  auto w1 = tape.leaf(Tensor::scalar(0.8f), true);
  auto w2 = tape.leaf(Tensor::scalar(-0.3f), true);
  auto target = tape.stopgrad(tape.square(w2));
  auto loss = tape.mse(tape.square(w1), target);
  tape.backward(loss);
  CHECK(tape.grad(w2).data[0] == 0.0f);
  CHECK(tape.grad(w1).data[0] != 0.0f);
}

TEST_CASE("gradients of unused outputs are zero") {
  Tape tape;
  auto w = tape.leaf(Tensor::scalar(2.0f), true);
  auto unused = tape.square(w);
  auto loss = tape.sum(w);
  tape.backward(loss);
  CHECK(tape.grad(unused).data[0] == 0.0f);
  CHECK(tape.grad(w).data[0] == 1.0f);
}

TEST_CASE("backward is linear: grad of summed losses equals summed grads") {
  Rng rng(17);
  Tensor x = Tensor::randn(2, 2, rng);
  Tensor y = Tensor::randn(2, 2, rng);

  auto run = [&](bool joint) {
    Tape tape;
    auto w = tape.leaf(x, true);
    auto l1 = tape.mse(w, tape.leaf(y));
    auto l2 = tape.sum(tape.square(w));
    if (joint) {
      tape.backward(tape.add(l1, l2));
      return tape.grad(w);
    }
    tape.backward(l1);
    Tensor g = tape.grad(w);
    tape.backward(l2);
    for (int i = 0; i < g.size(); ++i) g.data[i] += tape.grad(w).data[i];
    return g;
  };
  Tensor joint = run(true);
  Tensor split = run(false);
  for (int i = 0; i < joint.size(); ++i)
    CHECK_THAT(joint.data[i], Catch::Matchers::WithinAbs(split.data[i], 1e-6));
}

TEST_CASE("property: analytic gradients match FD on random inputs in [-2,2]") {
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a(2, 2), b(2, 2);
    for (auto& v : a.data) v = static_cast<float>(rng.uniform() * 4.0 - 2.0);
    for (auto& v : b.data) v = static_cast<float>(rng.uniform() * 4.0 - 2.0);

    Tape tape;
    auto ida = tape.leaf(a, true);
    auto loss = tape.mse(tape.silu(tape.matmul(ida, tape.leaf(b))), tape.leaf(Tensor::zeros(2, 2)));
    tape.backward(loss);

    auto da = oracle::from_tensor(a);
    auto db = oracle::from_tensor(b);
    auto f = [&](const oracle::DMat& pa) {
      auto out = oracle::dmatmul(pa, db);
      double acc = 0.0;
      for (auto& row : out)
        for (double v : row) {
          double s = oracle::dsilu(v);
          acc += s * s;
        }
      return acc / 4.0;
    };
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) {
        double fdv = oracle::fd(
            [&](double x) {
              auto pa = da;
              pa[r][c] = x;
              return f(pa);
            },
            da[r][c]);
        CHECK(oracle::rel_err(tape.grad(ida).at(r, c), fdv, 1e-3) < 1e-3);
      }
  }
}
