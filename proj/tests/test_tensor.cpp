#include <catch2/catch_amalgamated.hpp>

#include <thread>

#include "latentode/tensor.hpp"
#include "latentode/rng.hpp"
#include "test_support.hpp"

using namespace latentode;
using Catch::Approx;

TEST_CASE("tensor basics and shape invariant") {
  Tensor t(Shape{2, 3}, 1.5);
  REQUIRE(t.size() == 6);
  REQUIRE(t.shape() == Shape{2, 3});
  REQUIRE_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1.0}), ShapeError);
  REQUIRE(Tensor::scalar(4.0).item() == 4.0);
  REQUIRE_THROWS_AS(t.item(), ShapeError);
}

TEST_CASE("matmul identity") {
  Rng rng(1);
  Tensor eye(Shape{3, 3});
  for (int i = 0; i < 3; ++i) eye(i, i) = 1.0;
  Tensor m(Shape{3, 3});
  for (auto& v : m.values()) v = rng.uniform(-2, 2);
  Tensor out = matmul(eye, m);
  for (std::size_t k = 0; k < 9; ++k) REQUIRE(out[k] == m[k]);
}

TEST_CASE("activation fixed points") {
  REQUIRE(tanh(Tensor::scalar(0.0)).item() == 0.0);
  REQUIRE(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  // ELU(x) = alpha (e^x - 1) for x < 0, alpha = 1
  REQUIRE(elu(Tensor::scalar(-1.0)).item() == Approx(-0.6321205588285577).epsilon(1e-12));
  REQUIRE(relu(Tensor::scalar(-3.0)).item() == 0.0);
  REQUIRE(relu(Tensor::scalar(2.0)).item() == 2.0);
}

TEST_CASE("shape mismatch errors name both shapes") {
  Tensor a(Shape{3, 2});
  Tensor b(Shape{4});
  try {
    add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    REQUIRE(msg.find("[3x2]") != std::string::npos);
    REQUIRE(msg.find("[4]") != std::string::npos);
  }
  REQUIRE_THROWS_AS(matmul(Tensor(Shape{2, 3}), Tensor(Shape{4, 2})), ShapeError);
}

TEST_CASE("non-finite results raise a numeric error") {
  REQUIRE_THROWS_AS(exp(Tensor::scalar(1e4)), NumericError);
  Tensor big(Shape{2}, 1e308);
  REQUIRE_THROWS_AS(mul(big, big), NumericError);
}

TEST_CASE("scalar broadcast in elementwise ops") {
  Tensor v(Shape{3}, {1.0, 2.0, 3.0});
  Tensor s = Tensor::scalar(2.0);
  Tensor out = mul(v, s);
  REQUIRE(out.values() == std::vector<double>{2.0, 4.0, 6.0});
  REQUIRE(add(s, v)[2] == 5.0);
}

TEST_CASE("backward: dx^2/dx = 2x") {
  ParamSet ps;
  ps.add("x", Tensor::scalar(3.0)).set_requires_grad(true);
  Tape tape;
  Tape::Scope scope(tape);
  Tensor loss = mul(ps.at("x"), ps.at("x"));
  ParamSet g = tape.backward(loss, ps);
  REQUIRE(g.at("x").item() == Approx(6.0).epsilon(1e-14));
}

TEST_CASE("backward: bilinear symmetry of sum(x*y)") {
  Rng rng(7);
  ParamSet ps;
  Tensor x(Shape{5}), y(Shape{5});
  for (auto& v : x.values()) v = rng.uniform(-1, 1);
  for (auto& v : y.values()) v = rng.uniform(-1, 1);
  ps.add("x", x).set_requires_grad(true);
  ps.add("y", y).set_requires_grad(true);
  Tape tape;
  Tape::Scope scope(tape);
  ParamSet g = tape.backward(sum(mul(ps.at("x"), ps.at("y"))), ps);
  for (std::size_t i = 0; i < 5; ++i) {
    REQUIRE(g.at("x")[i] == Approx(y[i]).epsilon(1e-14));
    REQUIRE(g.at("y")[i] == Approx(x[i]).epsilon(1e-14));
  }
}

static double mlp2_loss(const ParamSet& p, const Tensor& input) {
  Tensor h = tanh(linear(input, p.at("w0"), p.at("b0")));
  Tensor o = linear(h, p.at("w1"), p.at("b1"));
  return sum(mul(o, o)).item();
}

TEST_CASE("backward vs central differences on a 2-layer tanh MLP") {
  Rng rng(11);
  ParamSet ps;
  auto init = [&](const std::string& name, Shape shape) {
    Tensor t(shape);
    for (auto& v : t.values()) v = rng.uniform(-0.8, 0.8);
    ps.add(name, t).set_requires_grad(true);
  };
  init("w0", {6, 4});
  init("b0", {6});
  init("w1", {3, 6});
  init("b1", {3});
  Tensor input(Shape{4});
  for (auto& v : input.values()) v = rng.uniform(-1, 1);

  Tape tape;
  ParamSet analytic;
  {
    Tape::Scope scope(tape);
    Tensor h = tanh(linear(input, ps.at("w0"), ps.at("b0")));
    Tensor o = linear(h, ps.at("w1"), ps.at("b1"));
    analytic = tape.backward(sum(mul(o, o)), ps);
  }
  ParamSet numeric = finite_diff([&](const ParamSet& p) { return mlp2_loss(p, input); }, ps, 1e-6);
  REQUIRE(lode_test::grad_map_rel_error(analytic, numeric) < 1e-5);
}

TEST_CASE("finite_diff: constant function gives a zero map") {
  ParamSet ps;
  ps.add("x", Tensor(Shape{3}, {1.0, 2.0, 3.0}));
  ParamSet g = finite_diff([](const ParamSet&) { return 42.0; }, ps, 1e-6);
  for (double v : g.at("x").values()) REQUIRE(v == 0.0);
}

TEST_CASE("finite_diff: d(x^3)/dx at 2 is 12") {
  ParamSet ps;
  ps.add("x", Tensor::scalar(2.0));
  ParamSet g = finite_diff(
      [](const ParamSet& p) {
        const double x = p.at("x").item();
        return x * x * x;
      },
      ps, 1e-4);
  REQUIRE(g.at("x").item() == Approx(12.0).margin(1e-5));
}

TEST_CASE("finite_diff matches backward on a linear layer to 1e-7") {
  Rng rng(3);
  ParamSet ps;
  Tensor w(Shape{3, 4}), b(Shape{3});
  for (auto& v : w.values()) v = rng.uniform(-1, 1);
  for (auto& v : b.values()) v = rng.uniform(-1, 1);
  ps.add("w", w).set_requires_grad(true);
  ps.add("b", b).set_requires_grad(true);
  Tensor x(Shape{4});
  for (auto& v : x.values()) v = rng.uniform(-1, 1);
  Tensor c(Shape{3});
  for (auto& v : c.values()) v = rng.uniform(-1, 1);

  Tape tape;
  ParamSet analytic;
  {
    Tape::Scope scope(tape);
    analytic = tape.backward(sum(mul(c, linear(x, ps.at("w"), ps.at("b")))), ps);
  }
  ParamSet numeric = finite_diff(
      [&](const ParamSet& p) { return sum(mul(c, linear(x, p.at("w"), p.at("b")))).item(); }, ps,
      1e-5);
  for (std::size_t i = 0; i < analytic.size(); ++i)
    for (std::size_t k = 0; k < analytic.tensor(i).size(); ++k)
      REQUIRE(analytic.tensor(i)[k] ==
              Approx(numeric.at(analytic.name(i))[k]).margin(1e-7));
}

TEST_CASE("backward contract errors") {
  ParamSet ps;
  ps.add("x", Tensor(Shape{2}, {1.0, 2.0})).set_requires_grad(true);
  Tape tape;
  Tape::Scope scope(tape);
  Tensor vec = mul(ps.at("x"), ps.at("x"));
  REQUIRE_THROWS_AS(tape.backward(vec, ps), TapeError);  // non-scalar loss
  Tensor loss = sum(vec);
  tape.backward(loss, ps);
  REQUIRE_THROWS_AS(tape.backward(loss, ps), TapeError);  // backward twice
}

TEST_CASE("unreached parameters get zero gradients") {
  ParamSet ps;
  ps.add("used", Tensor::scalar(2.0)).set_requires_grad(true);
  ps.add("unused", Tensor(Shape{3}, 1.0)).set_requires_grad(true);
  Tape tape;
  Tape::Scope scope(tape);
  ParamSet g = tape.backward(mul(ps.at("used"), ps.at("used")), ps);
  for (double v : g.at("unused").values()) REQUIRE(v == 0.0);
  REQUIRE(g.at("used").item() == 4.0);
}

TEST_CASE("gradient-check property on random composite graphs") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    lode_test::RandomGraph graph(seed * 977);
    Tape tape;
    ParamSet analytic;
    {
      Tape::Scope scope(tape);
      Tensor loss = graph.eval_tensor(graph.params());
      analytic = tape.backward(loss, graph.params());
    }
    ParamSet numeric =
        finite_diff([&](const ParamSet& p) { return graph.eval(p); }, graph.params(), 1e-6);
    INFO("graph seed " << seed * 977);
    REQUIRE(lode_test::grad_map_rel_error(analytic, numeric) < 1e-4);
  }
}

TEST_CASE("linearity of the backward pass") {
  lode_test::RandomGraph g1(404), g2(505);
  ParamSet ps = g1.params();  // shared leaves for both losses
  const double a = 1.7, b = -0.6;

  auto grads_of = [&](bool combined, double ca, double cb) {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor l1 = g1.eval_tensor(ps);
    Tensor l2 = g2.eval_tensor(ps);
    Tensor loss = combined ? add(scale(l1, ca), scale(l2, cb)) : (ca != 0.0 ? l1 : l2);
    return tape.backward(loss, ps);
  };
  ParamSet combined = grads_of(true, a, b);
  ParamSet only1 = grads_of(false, 1.0, 0.0);
  ParamSet only2 = grads_of(false, 0.0, 1.0);
  for (std::size_t i = 0; i < combined.size(); ++i)
    for (std::size_t k = 0; k < combined.tensor(i).size(); ++k) {
      const double expect = a * only1.tensor(i)[k] + b * only2.tensor(i)[k];
      REQUIRE(combined.tensor(i)[k] == Approx(expect).margin(1e-12));
    }
}

TEST_CASE("bitwise determinism of gradients") {
  auto run = [] {
    lode_test::RandomGraph graph(2024);
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = graph.eval_tensor(graph.params());
    return tape.backward(loss, graph.params());
  };
  ParamSet g1 = run();
  ParamSet g2 = run();
  for (std::size_t i = 0; i < g1.size(); ++i)
    REQUIRE(g1.tensor(i).values() == g2.tensor(i).values());
}

TEST_CASE("slice and concat round trip with gradients") {
  ParamSet ps;
  ps.add("x", Tensor(Shape{2, 4}, {1, 2, 3, 4, 5, 6, 7, 8})).set_requires_grad(true);
  Tape tape;
  Tape::Scope scope(tape);
  Tensor left = slice(ps.at("x"), 1, 0, 2);
  Tensor right = slice(ps.at("x"), 1, 2, 4);
  REQUIRE(left.shape() == Shape{2, 2});
  REQUIRE(right(1, 1) == 8.0);
  ParamSet g = tape.backward(sum(mul(left, left)), ps);
  REQUIRE(g.at("x")(0, 0) == 2.0);
  REQUIRE(g.at("x")(0, 2) == 0.0);
}

TEST_CASE("independent tapes on separate threads do not interfere") {
  auto grads_serial = [] {
    lode_test::RandomGraph graph(314);
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = graph.eval_tensor(graph.params());
    return tape.backward(loss, graph.params());
  };
  ParamSet expected = grads_serial();
  std::vector<ParamSet> results(4);
  {
    std::vector<std::thread> workers;
    for (int w = 0; w < 4; ++w)
      workers.emplace_back([&, w] { results[w] = grads_serial(); });
    for (auto& th : workers) th.join();
  }
  for (const auto& got : results)
    for (std::size_t i = 0; i < expected.size(); ++i)
      REQUIRE(got.tensor(i).values() == expected.tensor(i).values());
}

TEST_CASE("ParamSet iteration order is stable and names unique") {
  ParamSet ps;
  ps.add("b", Tensor::scalar(1));
  ps.add("a", Tensor::scalar(2));
  REQUIRE(ps.name(0) == "b");
  REQUIRE(ps.name(1) == "a");
  REQUIRE_THROWS(ps.add("a", Tensor::scalar(3)));
  const auto flat = ps.flatten();
  REQUIRE(flat == std::vector<double>{1.0, 2.0});
  ParamSet back = ps.unflatten_like({5.0, 6.0});
  REQUIRE(back.at("b").item() == 5.0);
  REQUIRE(back.at("a").item() == 6.0);
}
