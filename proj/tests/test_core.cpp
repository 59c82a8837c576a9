#include <doctest.h>

#include <cstring>
#include <set>
#include <vector>

#include "ecf/ops.hpp"
#include "ecf/rng.hpp"
#include "ecf/tensor.hpp"

using namespace ecf;

TEST_SUITE("core") {
  TEST_CASE("crc32 matches the standard check value") {
    const char* s = "123456789";
    CHECK(crc32(s, std::strlen(s)) == 0xCBF43926u);
    CHECK(crc32("", 0) == 0u);
  }

  TEST_CASE("fnv1a64 matches published vectors") {
    CHECK(fnv1a64("") == 14695981039346656037ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  }

  TEST_CASE("rng streams are deterministic and substreams are independent") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform(0, 1) == b.uniform(0, 1));

    Rng root(7);
    Rng s1 = root.substream("init:x");
    Rng s2 = root.substream("init:y");
    Rng s1_again = Rng(7).substream("init:x");
    CHECK(s1.uniform(0, 1) == s1_again.uniform(0, 1));
    CHECK(s1.uniform(0, 1) != s2.uniform(0, 1));
  }

  TEST_CASE("rng state round-trips") {
    Rng a(9);
    for (int i = 0; i < 5; ++i) a.uniform(0, 1);
    const auto st = a.state();
    Rng b(0);
    b.set_state(st);
    for (int i = 0; i < 20; ++i) CHECK(a.uniform(0, 1) == b.uniform(0, 1));
  }

  TEST_CASE("uniform stays in range and normal has sane moments") {
    Rng rng(3);
    double sum = 0, sum2 = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform(-2, 5);
      CHECK(u >= -2);
      CHECK(u < 5);
      const double g = rng.normal();
      sum += g;
      sum2 += g * g;
    }
    CHECK(std::abs(sum / n) < 0.05);
    CHECK(std::abs(sum2 / n - 1.0) < 0.05);
  }

  TEST_CASE("parallel_for covers every index exactly once") {
    const int64_t n = 10000;
    std::vector<int> hits(n, 0);
    parallel_for(n, [&](int64_t b, int64_t e) {
      for (int64_t i = b; i < e; ++i) hits[i] += 1;
    });
    for (int64_t i = 0; i < n; ++i) CHECK(hits[i] == 1);
  }

  TEST_CASE("tensor construction and grad buffer semantics") {
    auto t = make_tensor<float>({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    CHECK(t->size() == 6);
    CHECK(t->dim(0) == 2);
    CHECK_FALSE(t->has_grad());
    t->ensure_grad();
    CHECK(t->has_grad());
    CHECK(t->grad[0] == 0.0f);
    t->zero_grad();
    CHECK_FALSE(t->has_grad());

    CHECK_THROWS_AS(make_tensor<float>({2, 2}, {1.0f, 2.0f, 3.0f}), ShapeError);
  }

  TEST_CASE("tape skips branches that received no gradient") {
    auto x = make_tensor<double>({2}, {1.0, 2.0}, true);
    Tape<double> tape;
    auto used = mul_scalar(x, 3.0, &tape);
    auto dead = mul_scalar(x, 100.0, &tape);  // never reaches the loss
    auto loss = sum_all(used, &tape);
    tape.backward(loss);
    REQUIRE(x->has_grad());
    CHECK(x->grad[0] == doctest::Approx(3.0));
    CHECK(x->grad[1] == doctest::Approx(3.0));
    CHECK_FALSE(dead->has_grad());
  }

  TEST_CASE("tape refuses a second backward") {
    auto x = make_tensor<double>({1}, {2.0}, true);
    Tape<double> tape;
    auto y = mul_scalar(x, 2.0, &tape);
    tape.backward(y);
    CHECK(tape.used());
    CHECK_THROWS_AS(tape.backward(y), ConfigError);
  }

  TEST_CASE("first_non_finite names the first bad node") {
    auto x = make_tensor<double>({1}, {1e308}, true);
    Tape<double> tape;
    auto a = mul_scalar(x, 2.0, &tape);  // overflows to inf
    auto b = mul_scalar(a, 0.5, &tape);
    (void)b;
    CHECK(tape.first_non_finite() == "mul_scalar");
    Tape<double> clean;
    auto c = mul_scalar(x, 0.5, &clean);
    (void)c;
    CHECK(clean.first_non_finite().empty());
  }

  TEST_CASE("requires_grad propagates through ops") {
    auto a = make_tensor<double>({2}, {1.0, 2.0}, true);
    auto b = make_tensor<double>({2}, {3.0, 4.0}, false);
    Tape<double> tape;
    auto c = add(a, b, &tape);
    CHECK(c->requires_grad);
    auto d = add(b, b, &tape);
    CHECK_FALSE(d->requires_grad);
  }

  TEST_CASE("cast_tensor converts values and drops autodiff state") {
    auto a = make_tensor<double>({3}, {0.5, -1.25, 2.0}, true);
    auto f = cast_tensor<float>(a);
    CHECK(f->values[1] == -1.25f);
    CHECK_FALSE(f->requires_grad);
  }
}
