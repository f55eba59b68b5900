#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"

#include "bima/error.hpp"
#include "bima/functional.hpp"
#include "bima/grad_check.hpp"
#include "bima/tape.hpp"
#include "oracles.hpp"

using namespace bima;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

// Checks d(sum(w * f(params)))/d params against central differences.
double op_grad_error(nn::ParamStore& store, const std::function<Var(Tape&, std::vector<Var>&)>& op,
                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor weights;
  auto loss = [&](nn::ParamStore& ps, bool with_gradient) {
    Tape tape;
    std::vector<Var> in;
    for (std::size_t i = 0; i < ps.size(); ++i) in.push_back(tape.param(ps, i));
    Var out = op(tape, in);
    if (weights.empty()) weights = oracle::random_tensor(tape.value(out).shape(), rng);
    Var l = nn::weighted_sum(tape, out, weights);
    if (with_gradient) tape.backward(l);
    return tape.value(l)[0];
  };
  return nn::grad_check(store, loss).max_relative_error;
}

nn::ParamStore store_of(std::initializer_list<nn::Shape> shapes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  nn::ParamStore store;
  int i = 0;
  for (const auto& s : shapes) store.add("p" + std::to_string(i++), oracle::random_tensor(s, rng));
  return store;
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  t.at(1, 2) = 4.0;
  CHECK(t[5] == 4.0);
  t.reshape({3, 2});
  CHECK(t.at(2, 1) == 4.0);
  CHECK_THROWS(t.reshape({4, 2}));
  CHECK_THROWS(Tensor({2, 2}, std::vector<double>{1.0}));
  CHECK(nn::shape_to_string({2, 3}) == "[2 x 3]");
  t[0] = std::nan("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("matmul, linear and transpose match the naive oracle") {
  std::mt19937_64 rng(1);
  const Tensor a = oracle::random_tensor({5, 7}, rng), b = oracle::random_tensor({7, 3}, rng);
  const Tensor bias = oracle::random_tensor({3}, rng);
  const auto ref = oracle::matmul(a.storage(), b.storage(), 5, 7, 3);
  const Tensor c = nn::matmul(a, b);
  const Tensor y = nn::linear_forward(a, b, bias);
  for (std::size_t i = 0; i < 15; ++i) {
    CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-13));
    CHECK(y[i] == doctest::Approx(ref[i] + bias[i % 3]).epsilon(1e-13));
  }
  const Tensor at = nn::transpose(a);
  CHECK(at.shape() == nn::Shape{7, 5});
  CHECK(at.at(6, 4) == a.at(4, 6));
  CHECK_THROWS_AS(nn::matmul(a, a), ShapeError);
}

TEST_CASE("layer norm normalizes each row") {
  std::mt19937_64 rng(2);
  const Tensor x = oracle::random_tensor({4, 9}, rng, 3.0);
  const Tensor y = nn::layer_norm_forward(x, Tensor({9}, 1.0), Tensor({9}, 0.0));
  for (std::size_t r = 0; r < 4; ++r) {
    double mean = 0.0, var = 0.0, xm = 0.0, xv = 0.0;
    for (std::size_t c = 0; c < 9; ++c) xm += x.at(r, c) / 9.0;
    for (std::size_t c = 0; c < 9; ++c) xv += (x.at(r, c) - xm) * (x.at(r, c) - xm) / 9.0;
    for (std::size_t c = 0; c < 9; ++c) {
      mean += y.at(r, c) / 9.0;
      CHECK(y.at(r, c) == doctest::Approx((x.at(r, c) - xm) / std::sqrt(xv + 1e-5)).epsilon(1e-12));
    }
    for (std::size_t c = 0; c < 9; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean) / 9.0;
    CHECK(std::fabs(mean) < 1e-12);
    CHECK(var == doctest::Approx(xv / (xv + 1e-5)).epsilon(1e-12));
  }
}

TEST_CASE("gelu is the exact erf form") {
  for (double x = -6.0; x <= 6.0; x += 0.37) {
    CHECK(nn::gelu(x) == doctest::Approx(x * 0.5 * std::erfc(-x / std::numbers::sqrt2)).epsilon(1e-14));
    const double h = 1e-6;
    CHECK(nn::gelu_derivative(x) == doctest::Approx((nn::gelu(x + h) - nn::gelu(x - h)) / (2 * h)).epsilon(1e-7));
  }
  CHECK(nn::gelu(0.0) == 0.0);
}

TEST_CASE("softmax rows sum to one and handle -inf-like entries") {
  const Tensor x({2, 3}, std::vector<double>{1.0, 2.0, 3.0, -1e9, 0.0, -1e9});
  const Tensor s = nn::softmax_rows(x);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(s.at(0, 0) == doctest::Approx(std::exp(1.0) / z).epsilon(1e-15));
  CHECK(s.at(0, 2) == doctest::Approx(std::exp(3.0) / z).epsilon(1e-15));
  CHECK(s.at(1, 0) == 0.0);
  CHECK(s.at(1, 1) == 1.0);
}

TEST_CASE("cross entropy value and gradient") {
  const Tensor logits({2, 3}, std::vector<double>{0.0, 0.0, 0.0, 2.0, 0.0, -1.0});
  const std::vector<int> labels = {1, 0};
  const auto ce = nn::cross_entropy(logits, labels);
  const double lse = std::log(std::exp(2.0) + 1.0 + std::exp(-1.0));
  CHECK(ce.loss == doctest::Approx((std::log(3.0) + lse - 2.0) / 2.0).epsilon(1e-14));
  CHECK(ce.grad.at(0, 1) == doctest::Approx((1.0 / 3.0 - 1.0) / 2.0).epsilon(1e-14));
  CHECK(ce.grad.at(1, 2) == doctest::Approx(std::exp(-1.0 - lse) / 2.0).epsilon(1e-14));
  const std::vector<int> bad = {3, 0};
  CHECK_THROWS(nn::cross_entropy(logits, bad));
}

TEST_CASE("inverted dropout") {
  nn::Rng rng(3);
  const Tensor x({100, 100}, 1.0);
  std::vector<double> mask;
  const Tensor y = nn::dropout_forward(x, 0.5, true, rng, &mask);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK((y[i] == 0.0 || y[i] == 2.0));
    CHECK(mask[i] == y[i]);
    kept += y[i] != 0.0;
  }
  CHECK(kept > 4800);
  CHECK(kept < 5200);
  CHECK(nn::dropout_forward(x, 0.5, false, rng) == x);
  CHECK(nn::dropout_forward(x, 0.0, true, rng) == x);
  nn::Rng r1(9), r2(9);
  CHECK(nn::dropout_forward(x, 0.3, true, r1) == nn::dropout_forward(x, 0.3, true, r2));
}

TEST_CASE("tape gradients match central differences for every op") {
  const double bound = 1e-7;
  SUBCASE("matmul") {
    auto s = store_of({{4, 5}, {5, 3}}, 10);
    CHECK(op_grad_error(s, [](Tape& t, auto& in) { return nn::matmul(t, in[0], in[1]); }, 1) < bound);
  }
  SUBCASE("linear with and without bias") {
    auto s = store_of({{4, 5}, {5, 3}, {3}}, 11);
    CHECK(op_grad_error(s, [](Tape& t, auto& in) { return nn::linear(t, in[0], in[1], in[2]); }, 2) < bound);
    auto s2 = store_of({{4, 5}, {5, 3}}, 12);
    CHECK(op_grad_error(s2, [](Tape& t, auto& in) { return nn::linear(t, in[0], in[1], Var{}); }, 3) < bound);
  }
  SUBCASE("add, transpose, concat, flatten") {
    auto s = store_of({{3, 4}, {3, 4}, {2, 4}}, 13);
    CHECK(op_grad_error(
              s,
              [](Tape& t, auto& in) {
                Var sum = nn::add(t, in[0], in[1]);
                Var tr = nn::transpose(t, nn::concat_rows(t, sum, in[2]));
                return nn::flatten(t, nn::matmul(t, tr, nn::transpose(t, tr)));
              },
              4) < bound);
  }
  SUBCASE("layer norm") {
    auto s = store_of({{3, 6}, {6}, {6}}, 14);
    CHECK(op_grad_error(s, [](Tape& t, auto& in) { return nn::layer_norm(t, in[0], in[1], in[2]); }, 5) < bound);
  }
  SUBCASE("gelu") {
    auto s = store_of({{4, 4}}, 15);
    CHECK(op_grad_error(s, [](Tape& t, auto& in) { return nn::gelu(t, in[0]); }, 6) < bound);
  }
  SUBCASE("dropout with a fixed mask") {
    auto s = store_of({{4, 4}}, 16);
    CHECK(op_grad_error(
              s,
              [](Tape& t, auto& in) {
                nn::Rng rng(77);
                return nn::dropout(t, in[0], 0.4, true, rng);
              },
              7) < bound);
  }
  SUBCASE("cross entropy") {
    auto s = store_of({{3, 5}}, 17);
    const std::vector<int> labels = {4, 0, 2};
    CHECK(op_grad_error(s, [&](Tape& t, auto& in) { return nn::cross_entropy(t, in[0], labels); }, 8) < bound);
  }
  SUBCASE("multi-head attention, masked and plain") {
    for (bool mask : {true, false}) {
      auto s = store_of({{6, 4}, {6, 4}, {6, 4}}, 18);
      CHECK(op_grad_error(
                s,
                [&](Tape& t, auto& in) { return nn::multi_head_attention(t, in[0], in[1], in[2], 2, mask, -1e9); },
                9) < 1e-6);
    }
  }
}

TEST_CASE("tape bookkeeping") {
  Tape tape;
  Var c = tape.constant(Tensor({1}, 2.0));
  Var l = tape.leaf(Tensor({1}, 3.0));
  CHECK_FALSE(tape.requires_grad(c));
  CHECK(tape.requires_grad(l));
  Var p = nn::matmul(tape, nn::flatten(tape, c), nn::flatten(tape, l));
  tape.backward(p, 0.5);
  CHECK(tape.grad(l)[0] == 1.0);
  CHECK_THROWS(tape.backward(p));
  tape.clear();
  CHECK(tape.size() == 0);
}

TEST_CASE("param store") {
  nn::ParamStore s;
  s.add("a", Tensor({2, 2}, 1.0));
  s.add("b", Tensor({3}, 0.0));
  CHECK(s.num_scalars() == 7);
  CHECK(s.index("b") == 1);
  CHECK_FALSE(s.find("c").has_value());
  CHECK_THROWS_AS(s.index("c"), LookupError);
  s.grad(0).fill(5.0);
  s.zero_grad();
  CHECK(s.grad(0) == Tensor({2, 2}, 0.0));
}
