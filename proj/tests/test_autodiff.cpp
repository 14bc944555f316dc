#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "tdet/autodiff.hpp"

using namespace tdet;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("gradient of sum is all ones") {
  Tape tape;
  const Var w = tape.trainable(Tensor({2, 2}, {0.3, -1.0, 2.0, 5.0}));
  const Gradients g = tape.backward(tape.sum(w));
  CHECK(g[w] == Tensor({2, 2}, 1.0));
}

TEST_CASE("gradient of a quadratic") {
  Tape tape;
  const Var w = tape.trainable(Tensor({2}, {1.0, 2.0}));
  const Gradients g = tape.backward(tape.sum(tape.mul(w, w)));
  CHECK(g[w] == Tensor({2}, {2.0, 4.0}));
}

TEST_CASE("backward requires a scalar loss") {
  Tape tape;
  const Var w = tape.trainable(Tensor({2}, 1.0));
  CHECK_THROWS_AS(tape.backward(w), ContractError);
}

TEST_CASE("constants receive no gradient entry") {
  Tape tape;
  const Var w = tape.trainable(Tensor({3}, 2.0));
  const Var c = tape.constant(Tensor({3}, 3.0));
  const Gradients g = tape.backward(tape.sum(tape.mul(w, c)));
  CHECK(g.contains(w));
  CHECK_FALSE(g.contains(c));
  CHECK(g.size() == 1);
  CHECK(g[w] == Tensor({3}, 3.0));
  CHECK_THROWS(g[c]);
}

TEST_CASE("unreached trainable leaves get zero gradients") {
  Tape tape;
  const Var used = tape.trainable(Tensor({2}, 1.0));
  const Var unused = tape.trainable(Tensor({2}, 1.0));
  const Gradients g = tape.backward(tape.sum(used));
  CHECK(g[unused] == Tensor({2}, 0.0));
}

TEST_CASE("gradients accumulate over shared uses") {
  Tape tape;
  const Var w = tape.trainable(Tensor({1}, {3.0}));
  const Var y = tape.add(tape.mul(w, w), w);  // w^2 + w
  const Gradients g = tape.backward(tape.sum(y));
  CHECK(g[w][0] == 7.0);
}

TEST_CASE("grad_check on exact and smooth cases") {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({3, 2}, rng);
  CHECK(grad_check([](Tape& t, Var v) { return t.sum(v); }, x, 1e-5) < 1e-10);
  CHECK(grad_check([](Tape& t, Var v) { return t.sum(t.sigmoid(v)); }, Tensor({4}, 0.0), 1e-5) <
        1e-6);
}

TEST_CASE("composite graphs match central differences") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Tensor> inputs = {
        random_tensor({2, 4, 4}, rng),        // x
        random_tensor({3, 2, 3, 3}, rng),     // conv kernels
        random_tensor({3}, rng),              // bias
        random_tensor({3, 2, 2}, rng),        // multiplier
        random_tensor({1, 2, 2}, rng),        // concat partner
    };
    const MultiTapeFn f = [](Tape& t, std::span<const Var> v) {
      const Var conv = t.add_channel_bias(t.conv2d(v[0], v[1], 2, 1), v[2]);
      const Var act = t.tanh(t.mul(conv, v[3]));
      const Var joined = t.concat_channels(act, t.sigmoid(v[4]));
      const Var part = t.slice_channels(joined, 1, 4);
      return t.sum(t.mul(part, t.sub(part, t.leaky_relu(part))));
    };
    CHECK(grad_check(f, inputs, 1e-5) < 1e-6);
  }
}

TEST_CASE("leaky relu gradient on both sides of the kink") {
  const Tensor x({4}, {-2.0, -0.5, 0.5, 2.0});
  CHECK(grad_check([](Tape& t, Var v) { return t.sum(t.mul(t.leaky_relu(v), v)); }, x, 1e-5) <
        1e-6);
  Tape tape;
  const Var v = tape.trainable(x);
  const Gradients g = tape.backward(tape.sum(tape.leaky_relu(v)));
  CHECK(g[v] == Tensor({4}, {0.1, 0.1, 1.0, 1.0}));
}

TEST_CASE("custom nodes participate in backward") {
  Tape tape;
  const Var w = tape.trainable(Tensor({2}, {1.0, -2.0}));
  const Tensor& wv = tape.value(w);
  const Var cube = tape.custom({w}, Tensor({2}, {wv[0] * wv[0] * wv[0], wv[1] * wv[1] * wv[1]}),
                               [w](Tape& t, const Tensor& g) {
                                 const Tensor& x = t.value(w);
                                 t.accumulate(w, Tensor({2}, {3 * x[0] * x[0] * g[0],
                                                              3 * x[1] * x[1] * g[1]}));
                               });
  const Gradients g = tape.backward(tape.sum(cube));
  CHECK(g[w] == Tensor({2}, {3.0, 12.0}));
}
