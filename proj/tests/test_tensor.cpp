#include <random>

#include "doctest.h"
#include "spikehar/autodiff.hpp"
#include "spikehar/errors.hpp"
#include "spikehar/tensor.hpp"

using namespace spikehar;

TEST_SUITE("tensor") {

TEST_CASE("shape and data stay consistent") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
}

TEST_CASE("scalar accessor requires a single element") {
  CHECK(Tensor::scalar(3.5).scalar_value() == 3.5);
  CHECK_THROWS_AS(Tensor({2}).scalar_value(), ContractError);
}

TEST_CASE("uniform fill is deterministic under a seed") {
  std::mt19937_64 a(42), b(42);
  Tensor x = Tensor::uniform({4, 4}, -1.0, 1.0, a);
  Tensor y = Tensor::uniform({4, 4}, -1.0, 1.0, b);
  for (int64_t i = 0; i < x.size(); ++i) CHECK(x[i] == y[i]);
}

TEST_CASE("grad accumulator matches parameter shape") {
  Parameter p("w", Tensor({3, 2}));
  CHECK(p.grad.same_shape(p.value));
  p.grad.fill(2.0);
  p.zero_grad();
  CHECK(p.grad[0] == 0.0);
}

TEST_CASE("loss = sum(x) gives all-ones gradient") {
  Parameter p("x", Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  Tape tape;
  Var x = tape.leaf(p);
  tape.backward(sum(x));
  for (int64_t i = 0; i < p.grad.size(); ++i) CHECK(p.grad[i] == 1.0);
}

TEST_CASE("loss = sum(x*x)/2 gives gradient x") {
  Parameter p("x", Tensor({4}, {0.5, -1.0, 2.0, 3.0}));
  Tape tape;
  Var x = tape.leaf(p);
  tape.backward(scale(sum(mul(x, x)), 0.5));
  for (int64_t i = 0; i < p.grad.size(); ++i) CHECK(p.grad[i] == doctest::Approx(p.value[i]).epsilon(1e-14));
}

TEST_CASE("backward requires a scalar loss") {
  Parameter p("x", Tensor({3}, {1, 2, 3}));
  Tape tape;
  Var x = tape.leaf(p);
  CHECK_THROWS_AS(tape.backward(x), ContractError);
}

TEST_CASE("tape nodes appear in topological order") {
  Parameter p("x", Tensor({3}, {1, 2, 3}));
  Tape tape;
  Var x = tape.leaf(p);
  Var y = mul(x, x);
  Var z = sum(add(y, x));
  for (size_t id = 0; id < tape.num_nodes(); ++id) {
    for (int in : tape.node(static_cast<int>(id)).inputs) {
      CHECK(in < static_cast<int>(id));
    }
  }
  tape.backward(z);
}

TEST_CASE("a single backward visits each reachable node exactly once") {
  Parameter p("x", Tensor({3}, {1, 2, 3}));
  Tape tape;
  Var x = tape.leaf(p);
  Var y = mul(x, x);      // consumed twice below
  Var loss = sum(add(y, mul(y, x)));
  tape.backward(loss);
  // reachable differentiable nodes: leaf, mul, mul, add, sum = 5
  CHECK(tape.backward_visits() == 5);
  CHECK_THROWS_AS(tape.backward(loss), ContractError);  // one pass per tape
}

TEST_CASE("fan-out accumulates gradients from all consumers") {
  Parameter p("x", Tensor({2}, {3.0, -2.0}));
  Tape tape;
  Var x = tape.leaf(p);
  Var loss = sum(add(x, x));  // dL/dx = 2
  tape.backward(loss);
  CHECK(p.grad[0] == 2.0);
  CHECK(p.grad[1] == 2.0);
}

TEST_CASE("constants do not accumulate gradients") {
  Parameter p("x", Tensor({2}, {1.0, 1.0}));
  Tape tape;
  Var x = tape.leaf(p);
  Var c = tape.constant(Tensor({2}, {5.0, 5.0}));
  tape.backward(sum(mul(x, c)));
  CHECK(p.grad[0] == 5.0);
  CHECK_FALSE(tape.requires_grad(c.id));
}

TEST_CASE("slice and concat round-trip with gradients") {
  Parameter p("x", Tensor({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8}));
  Tape tape;
  Var x = tape.leaf(p);
  Var a = slice(x, 1, 0, 2);
  Var b = slice(x, 1, 2, 2);
  Var back = concat({a, b}, 1);
  for (int64_t i = 0; i < 8; ++i) CHECK(back.value()[i] == p.value[i]);
  tape.backward(sum(back));
  for (int64_t i = 0; i < 8; ++i) CHECK(p.grad[i] == 1.0);
}

TEST_CASE("mean_axis averages and distributes gradient") {
  Parameter p("x", Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  Tape tape;
  Var m = mean_axis(tape.leaf(p), 1);
  CHECK(m.value().shape() == Shape{2});
  CHECK(m.value()[0] == doctest::Approx(2.0));
  CHECK(m.value()[1] == doctest::Approx(5.0));
  tape.backward(sum(m));
  for (int64_t i = 0; i < 6; ++i) CHECK(p.grad[i] == doctest::Approx(1.0 / 3.0));
}

}  // TEST_SUITE
