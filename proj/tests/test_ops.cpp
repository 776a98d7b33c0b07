#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "spikehar/autodiff.hpp"
#include "spikehar/errors.hpp"

using namespace spikehar;

namespace {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return Tensor::uniform(shape, lo, hi, rng);
}

double dot(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

TEST_SUITE("ops") {

TEST_CASE("conv3d: zero input stays zero") {
  Tape tape;
  std::mt19937_64 rng(7);
  Var x = tape.constant(Tensor({1, 2, 2, 3, 4}));
  Var k = tape.constant(random_tensor({3, 2, 1, 1, 3}, rng));
  Var y = conv3d(x, k, {1, 1, 1}, {0, 0, 1});
  for (int64_t i = 0; i < y.value().size(); ++i) CHECK(y.value()[i] == 0.0);
}

TEST_CASE("conv3d: hand-evaluated sliding dot product with zero pad") {
  Tape tape;
  Var x = tape.constant(Tensor({1, 1, 1, 1, 3}, {1, 2, 3}));
  Var k = tape.constant(Tensor({1, 1, 1, 1, 3}, {1, 0, -1}));
  Var y = conv3d(x, k, {1, 1, 1}, {0, 0, 1});
  REQUIRE(y.value().size() == 3);
  CHECK(y.value()[0] == -2.0);
  CHECK(y.value()[1] == -2.0);
  CHECK(y.value()[2] == 2.0);
}

TEST_CASE("conv3d: identity delta kernel preserves the input") {
  Tape tape;
  std::mt19937_64 rng(3);
  Tensor xv = random_tensor({2, 1, 2, 3, 5}, rng);
  Var x = tape.constant(xv);
  Tensor kv({1, 1, 1, 1, 3});
  kv[1] = 1.0;  // center tap
  Var y = conv3d(x, tape.constant(kv), {1, 1, 1}, {0, 0, 1});
  for (int64_t i = 0; i < xv.size(); ++i) CHECK(y.value()[i] == xv[i]);
}

TEST_CASE("conv3d: channel mismatch names both shapes") {
  Tape tape;
  Var x = tape.constant(Tensor({1, 3, 2, 2, 2}));
  Var k = tape.constant(Tensor({1, 2, 1, 1, 1}));
  bool threw = false;
  try {
    conv3d(x, k, {1, 1, 1}, {0, 0, 0});
  } catch (const DimensionError& e) {
    threw = true;
    std::string msg = e.what();
    CHECK(msg.find("(1,3,2,2,2)") != std::string::npos);
    CHECK(msg.find("(1,2,1,1,1)") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("conv3d matches the padded-buffer oracle on random cases") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    std::uniform_int_distribution<int64_t> d(1, 4);
    int64_t cin = d(rng), cout = d(rng);
    Shape xs{d(rng), cin, d(rng) + 1, d(rng) + 1, d(rng) + 2};
    Triple k{1 + rng() % 2, 1 + rng() % 2, 1 + rng() % 3};
    Triple stride{1 + static_cast<int64_t>(rng() % 2), 1, 1 + static_cast<int64_t>(rng() % 2)};
    Triple pad{static_cast<int64_t>(rng() % 2), static_cast<int64_t>(rng() % 2),
               static_cast<int64_t>(rng() % 2)};
    Tensor xv = random_tensor(xs, rng);
    Tensor kv = random_tensor({cout, cin, k[0], k[1], k[2]}, rng);
    Tape tape;
    Var y = conv3d(tape.constant(xv), tape.constant(kv), stride, pad);
    Tensor ref = oracles::conv3d_oracle(xv, kv, stride, pad);
    REQUIRE(y.value().shape() == ref.shape());
    for (int64_t i = 0; i < ref.size(); ++i) {
      CHECK(y.value()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("transposed_conv3d is the exact adjoint of conv3d") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    std::uniform_int_distribution<int64_t> d(1, 3);
    int64_t cin = d(rng), cout = d(rng);
    Triple k{1, 1 + rng() % 2, 1 + rng() % 3};
    Triple stride{1, 1 + static_cast<int64_t>(rng() % 2), 1 + static_cast<int64_t>(rng() % 2)};
    Triple pad{0, static_cast<int64_t>(rng() % 2), static_cast<int64_t>(rng() % 2)};
    // sample output dims and derive tight input dims, so the conv discards
    // nothing and the adjoint pair has matching shapes
    Shape xs{d(rng), cin, 0, 0, 0};
    for (int i = 0; i < 3; ++i) {
      int64_t od = d(rng) + 1;
      xs[static_cast<size_t>(2 + i)] =
          (od - 1) * stride[static_cast<size_t>(i)] + k[static_cast<size_t>(i)] -
          2 * pad[static_cast<size_t>(i)];
      if (xs[static_cast<size_t>(2 + i)] < 1) xs[static_cast<size_t>(2 + i)] += stride[static_cast<size_t>(i)];
    }
    Tensor kv = random_tensor({cout, cin, k[0], k[1], k[2]}, rng);
    Tensor xv = random_tensor(xs, rng);

    Tape tape;
    Var cy = conv3d(tape.constant(xv), tape.constant(kv), stride, pad);
    Tensor yv = random_tensor(cy.value().shape(), rng);
    Var ty = transposed_conv3d(tape.constant(yv), tape.constant(kv), stride, pad);
    REQUIRE(ty.value().shape() == xs);

    double lhs = dot(cy.value(), yv);
    double rhs = dot(xv, ty.value());
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("transposed_conv3d: stride 1, same-pad, delta kernel is the identity") {
  Tape tape;
  std::mt19937_64 rng(9);
  Tensor xv = random_tensor({1, 1, 2, 2, 4}, rng);
  Tensor kv({1, 1, 1, 1, 3});
  kv[1] = 1.0;
  Var y = transposed_conv3d(tape.constant(xv), tape.constant(kv), {1, 1, 1}, {0, 0, 1});
  REQUIRE(y.value().shape() == xv.shape());
  for (int64_t i = 0; i < xv.size(); ++i) CHECK(y.value()[i] == doctest::Approx(xv[i]));
}

TEST_CASE("avg_pool3d: constants, window means, and output dims") {
  Tape tape;
  Var c = tape.constant(Tensor::full({1, 1, 2, 4, 4}, 3.25));
  Var pooled = avg_pool3d(c, {1, 2, 2}, {1, 2, 2});
  for (int64_t i = 0; i < pooled.value().size(); ++i) CHECK(pooled.value()[i] == 3.25);

  Var row = tape.constant(Tensor({1, 1, 1, 1, 6}, {1, 2, 3, 4, 5, 6}));
  Var m = avg_pool3d(row, {1, 1, 4}, {1, 2, 2});
  REQUIRE(m.value().size() == 2);
  CHECK(m.value()[0] == 2.5);
  CHECK(m.value()[1] == 4.5);

  Var ten = tape.constant(Tensor({1, 1, 1, 1, 10}));
  CHECK(avg_pool3d(ten, {1, 1, 1}, {1, 1, 2}).value().dim(4) == 5);

  CHECK_THROWS_AS(avg_pool3d(row, {1, 1, 7}, {1, 1, 1}), DimensionError);
}

TEST_CASE("linear: identity, hand matmul, zero input") {
  Tape tape;
  Var x = tape.constant(Tensor({1, 2}, {1, 2}));
  Var w_id = tape.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  Var b0 = tape.constant(Tensor({2}));
  Var same = linear(x, w_id, b0);
  CHECK(same.value()[0] == 1.0);
  CHECK(same.value()[1] == 2.0);

  Var w = tape.constant(Tensor({2, 2}, {1, 1, 0, 1}));
  Var b = tape.constant(Tensor({2}, {0, 1}));
  Var y = linear(x, w, b);
  CHECK(y.value()[0] == 3.0);
  CHECK(y.value()[1] == 3.0);

  Var z = linear(tape.constant(Tensor({3, 2})), w, b);
  for (int64_t r = 0; r < 3; ++r) {
    CHECK(z.value()[r * 2 + 0] == 0.0);
    CHECK(z.value()[r * 2 + 1] == 1.0);
  }

  CHECK_THROWS_AS(linear(x, tape.constant(Tensor({2, 3})), b), DimensionError);
}

TEST_CASE("batch_norm: train-mode normalization and eval closed form") {
  std::mt19937_64 rng(13);
  Tensor xv = random_tensor({4, 3, 2, 2, 2}, rng, -2.0, 5.0);
  BatchNormStats stats;
  Tape tape;
  Var gamma = tape.constant(Tensor::full({3}, 1.0));
  Var beta = tape.constant(Tensor({3}));
  Var y = batch_norm(tape.constant(xv), gamma, beta, stats, BnMode::Train, 1e-5, 0.1);

  // per-channel mean ~0, variance ~1
  const int64_t inner = 8, batch = 4, channels = 3;
  for (int64_t c = 0; c < channels; ++c) {
    double mean = 0.0, var = 0.0;
    for (int64_t b = 0; b < batch; ++b) {
      for (int64_t i = 0; i < inner; ++i) mean += y.value()[(b * channels + c) * inner + i];
    }
    mean /= static_cast<double>(batch * inner);
    for (int64_t b = 0; b < batch; ++b) {
      for (int64_t i = 0; i < inner; ++i) {
        double d = y.value()[(b * channels + c) * inner + i] - mean;
        var += d * d;
      }
    }
    var /= static_cast<double>(batch * inner);
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }

  // constant input normalizes to zeros (eps keeps it finite)
  Tape t2;
  BatchNormStats stats2;
  Var yc = batch_norm(t2.constant(Tensor::full({2, 1, 1, 1, 4}, 7.0)), t2.constant(Tensor::full({1}, 1.0)),
                      t2.constant(Tensor({1})), stats2, BnMode::Train);
  for (int64_t i = 0; i < yc.value().size(); ++i) CHECK(yc.value()[i] == doctest::Approx(0.0));

  // eval mode applies the closed form with the running stats
  BatchNormStats stats3;
  stats3.running_mean = Tensor({2}, {1.0, -1.0});
  stats3.running_var = Tensor({2}, {4.0, 0.25});
  Tape t3;
  Var g3 = t3.constant(Tensor({2}, {2.0, 1.0}));
  Var b3 = t3.constant(Tensor({2}, {0.5, 0.0}));
  Tensor xe({1, 2, 1, 1, 2}, {3.0, 5.0, 0.0, 1.0});
  Var ye = batch_norm(t3.constant(xe), g3, b3, stats3, BnMode::Eval, 1e-5);
  CHECK(ye.value()[0] == doctest::Approx((3.0 - 1.0) / std::sqrt(4.0 + 1e-5) * 2.0 + 0.5));
  CHECK(ye.value()[2] == doctest::Approx((0.0 + 1.0) / std::sqrt(0.25 + 1e-5)));
}

TEST_CASE("softmax_nll: uniform counts give ln C") {
  Tape tape;
  Var counts = tape.constant(Tensor({1, 4}, {3, 3, 3, 3}));
  Var loss = softmax_nll(counts, {2}, {1.0, 1.0, 1.0, 1.0});
  CHECK(loss.value().scalar_value() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("mse examples") {
  Tape tape;
  Var a = tape.constant(Tensor({2}, {0, 1}));
  Var b = tape.constant(Tensor({2}, {1, 1}));
  CHECK(mse(a, b).value().scalar_value() == 0.5);
  CHECK(mse(b, a).value().scalar_value() == 0.5);
  CHECK(mse(a, a).value().scalar_value() == 0.0);
  CHECK_THROWS_AS(mse(a, tape.constant(Tensor({3}))), DimensionError);
}

TEST_CASE("grad_check validates every differentiable op on random shapes") {
  std::mt19937_64 rng(21);
  // exact case: f = sum over small integers with a representable step
  {
    auto f = [](Tape&, std::vector<Var>& xs) { return sum(xs[0]); };
    auto rep = grad_check(f, {Tensor({3, 2}, {1, 2, 3, 4, 5, 6})}, 0.5, 1e-12);
    CHECK(rep.pass);
    CHECK(rep.max_rel_err == 0.0);
  }
  // composite through conv, pooling, linear, sigmoid
  {
    auto f = [](Tape& t, std::vector<Var>& xs) {
      Var y = conv3d(xs[0], xs[1], {1, 1, 1}, {0, 0, 1});
      y = add_channel_bias(y, xs[2]);
      y = avg_pool3d(y, {1, 1, 2}, {1, 1, 2});
      y = sigmoid(y);
      (void)t;
      return mean(mul(y, y));
    };
    std::vector<Tensor> inputs = {random_tensor({2, 2, 2, 2, 4}, rng),
                                  random_tensor({3, 2, 1, 1, 3}, rng), random_tensor({3}, rng)};
    auto rep = grad_check(f, inputs, 1e-5, 1e-4);
    INFO(rep.worst, " err=", rep.max_rel_err);
    CHECK(rep.pass);
  }
  // batch norm in train mode passes at 1e-3
  {
    BatchNormStats stats;
    auto f = [&stats](Tape& t, std::vector<Var>& xs) {
      (void)t;
      Var y = batch_norm(xs[0], xs[1], xs[2], stats, BnMode::Train);
      return mean(mul(y, add(y, xs[0])));
    };
    std::vector<Tensor> inputs = {random_tensor({3, 2, 1, 2, 2}, rng), random_tensor({2}, rng, 0.5, 1.5),
                                  random_tensor({2}, rng)};
    auto rep = grad_check(f, inputs, 1e-5, 1e-3);
    INFO(rep.worst, " err=", rep.max_rel_err);
    CHECK(rep.pass);
  }
}

TEST_CASE("grad_check flags non-finite evaluations") {
  auto f = [](Tape& t, std::vector<Var>& xs) {
    Tensor bad = Tensor::scalar(std::numeric_limits<double>::quiet_NaN());
    return mul(sum(xs[0]), t.constant(bad));
  };
  std::mt19937_64 rng(2);
  auto rep = grad_check(f, {random_tensor({2}, rng)}, 1e-5, 1e-4);
  CHECK_FALSE(rep.pass);
  CHECK_FALSE(rep.finite);
}

}  // TEST_SUITE
