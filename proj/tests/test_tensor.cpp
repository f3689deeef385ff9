#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "uuconv/errors.hpp"
#include "uuconv/ops.hpp"
#include "uuconv/rng.hpp"
#include "uuconv/tensor.hpp"

using namespace uuconv;

TEST_CASE("tensor construction and invariants") {
  Tensor t = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.extent(1) == 3);
  CHECK_THROWS_AS(Tensor::from_values({2, 2}, {1.0}), ValidationError);
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), ValidationError);
  CHECK_THROWS_AS(t.item(), ValidationError);
  CHECK(Tensor::scalar(4.5).item() == 4.5);
}

TEST_CASE("backward of sum gives all-ones gradient") {
  Tensor x = Tensor::from_values({2, 3}, {1, -2, 3, 0, 5, -6}, true);
  Tape tape;
  Tensor loss = sum_all(&tape, x);
  tape.backward(loss);
  REQUIRE(x.grad_allocated());
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward of sum(x*x) matches analytic 2x") {
  Tensor x = Tensor::from_values({2}, {1, 2}, true);
  Tape tape;
  Tensor loss = sum_all(&tape, mul(&tape, x, x));
  CHECK(loss.item() == doctest::Approx(5.0));
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("backward rejects misuse") {
  Tensor x = Tensor::from_values({3}, {1, 2, 3}, true);

  SUBCASE("non-scalar loss") {
    Tape tape;
    Tensor y = scale(&tape, x, 2.0);
    CHECK_THROWS_AS(tape.backward(y), ValidationError);
  }
  SUBCASE("repeated backward is rejected") {
    Tape tape;
    Tensor loss = sum_all(&tape, x);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), ValidationError);
  }
  SUBCASE("loss from another tape is rejected") {
    Tape tape1, tape2;
    Tensor loss = sum_all(&tape1, x);
    CHECK_THROWS_AS(tape2.backward(loss), ValidationError);
    tape1.backward(loss);  // still valid on its own tape
    CHECK(x.grad_allocated());
  }
  SUBCASE("leaf tensor is not a tape product") {
    Tape tape;
    Tensor leaf = Tensor::scalar(1.0, true);
    CHECK_THROWS_AS(tape.backward(leaf), ValidationError);
  }
}

TEST_CASE("gradients only accumulate into requires_grad leaves") {
  Tensor a = Tensor::from_values({2}, {1, 2}, true);
  Tensor b = Tensor::from_values({2}, {3, 4}, false);
  Tape tape;
  Tensor loss = sum_all(&tape, mul(&tape, a, b));
  tape.backward(loss);
  CHECK(a.grad_allocated());
  CHECK_FALSE(b.grad_allocated());
  CHECK(a.grad()[0] == 3.0);
  CHECK(a.grad()[1] == 4.0);
}

TEST_CASE("zero_grad deallocates and accumulation restarts from zero") {
  Tensor x = Tensor::from_values({2}, {1, 1}, true);
  {
    Tape tape;
    tape.backward(sum_all(&tape, x));
  }
  CHECK(x.grad()[0] == 1.0);
  x.zero_grad();
  CHECK_FALSE(x.grad_allocated());
  {
    Tape tape;
    tape.backward(sum_all(&tape, scale(&tape, x, 3.0)));
  }
  CHECK(x.grad()[0] == 3.0);
}

TEST_CASE("fixed seed makes op sequences bit-reproducible") {
  auto run = [] {
    Rng rng(77);
    Tensor x = Tensor::zeros({4, 4}, true);
    for (double& v : x.values()) v = rng.normal();
    Tensor w = Tensor::zeros({4, 4});
    for (double& v : w.values()) v = rng.normal();
    Tape tape;
    Tensor y = gelu(&tape, mul(&tape, x, w));
    Tensor loss = sum_all(&tape, y);
    tape.backward(loss);
    std::vector<double> out = y.values();
    out.push_back(loss.item());
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("rng serialization round-trips the stream") {
  Rng a(123);
  (void)a.normal();
  (void)a.below(17);
  Rng b = Rng::deserialize(a.serialize());
  for (int i = 0; i < 16; ++i) CHECK(a.next_u64() == b.next_u64());
}
