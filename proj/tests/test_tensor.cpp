#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "curec/common.hpp"
#include "curec/gradcheck.hpp"
#include "curec/rng.hpp"
#include "curec/tensor.hpp"

using namespace curec;

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, double stddev = 1.0) {
  return Tensor::randn(std::move(shape), rng, stddev);
}

}  // namespace

TEST_CASE("matmul basics") {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor out = matmul(eye, a);
  CHECK(out.data() == std::vector<double>{1, 2, 3, 4});

  Tensor row = Tensor::from({1, 2}, {1, 2});
  Tensor col = Tensor::from({2, 1}, {3, 4});
  CHECK(matmul(row, col).item() == 11.0);

  CHECK_THROWS_WITH_AS(matmul(row, row), doctest::Contains("shape mismatch"), NumericError);
}

TEST_CASE("matmul gradient vs finite differences") {
  Rng rng(11);
  Tensor a = rand_tensor({3, 4}, rng);
  Tensor b = rand_tensor({4, 2}, rng);
  auto report = check_gradients([&] { return sum_all(matmul(a, b)); }, {a, b}, 1e-6, 1e-6);
  CHECK(report.passed);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("softmax rows") {
  Tensor flat = softmax_rows(Tensor::from({1, 3}, {0, 0, 0}));
  for (double v : flat.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

  // stabilization: large equal logits must not overflow
  Tensor big = softmax_rows(Tensor::from({1, 2}, {1e4, 1e4}));
  CHECK(big.data()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::isfinite(big.data()[1]));

  // high-precision long double oracle for an asymmetric row
  Tensor sm = softmax_rows(Tensor::from({1, 3}, {1, 2, 3}));
  long double ex[3], sum = 0;
  for (int i = 0; i < 3; ++i) {
    ex[i] = expl(static_cast<long double>(i + 1));
    sum += ex[i];
  }
  for (int i = 0; i < 3; ++i)
    CHECK(sm.data()[static_cast<size_t>(i)] ==
          doctest::Approx(static_cast<double>(ex[i] / sum)).epsilon(1e-14));

  CHECK_THROWS_AS(softmax_rows(Tensor::from({1, 2}, {std::nan(""), 0})), NumericError);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(5);
  Tensor x = rand_tensor({7, 9}, rng, 10.0);
  Tensor y = softmax_rows(x);
  for (int64_t i = 0; i < 7; ++i) {
    double s = 0;
    for (int64_t j = 0; j < 9; ++j) s += y.at({i, j});
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("l2_normalize") {
  Tensor v = l2_normalize(Tensor::from({2}, {3, 4}));
  CHECK(v.data()[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(v.data()[1] == doctest::Approx(0.8).epsilon(1e-15));

  Tensor unit = Tensor::from({2}, {0, 1});
  CHECK(l2_normalize(unit).data() == unit.data());

  // guarded division keeps the zero vector at zero
  Tensor zero = l2_normalize(Tensor::from({3}, {0, 0, 0}));
  CHECK(zero.data() == std::vector<double>{0, 0, 0});

  // idempotence away from the guard
  Rng rng(3);
  Tensor x = rand_tensor({4, 6}, rng);
  Tensor once = l2_normalize(x);
  Tensor twice = l2_normalize(once);
  for (int64_t i = 0; i < once.size(); ++i)
    CHECK(std::abs(once.data()[static_cast<size_t>(i)] -
                   twice.data()[static_cast<size_t>(i)]) < 1e-12);
}

TEST_CASE("max_over_axis values, ties, gradients") {
  Tensor x = Tensor::from({2, 2}, {1, 5, 7, 2});
  auto m = max_over_axis(x, 1);
  CHECK(m.values.data() == std::vector<double>{5, 7});
  CHECK(m.argmax == std::vector<int64_t>{1, 0});

  // tie: gradient reaches the first occurrence only
  Tensor t = Tensor::from({1, 3}, {2, 2, 2}).set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    auto r = max_over_axis(t, 1);
    tape.backward(sum_all(r.values));
  }
  CHECK(t.grad() == std::vector<double>{1, 0, 0});

  Rng rng(17);
  Tensor y = rand_tensor({4, 6}, rng);
  auto report = check_gradients([&] { return sum_all(max_over_axis(y, 1).values); },
                                {y}, 1e-6, 1e-6);
  CHECK(report.passed);
}

TEST_CASE("masked_row_max sentinel and routing") {
  Tensor x = Tensor::from({2, 3}, {5, 9, 1, 4, 8, 6});
  std::vector<uint8_t> allowed = {1, 0, 1, 0, 0, 0};
  auto m = masked_row_max(x, allowed);
  CHECK(m.values.data()[0] == 5);
  CHECK(m.values.data()[1] == kNegInf);
  CHECK(m.argmax == std::vector<int64_t>{0, -1});
}

TEST_CASE("primitive gradients on randomized shapes") {
  Rng rng(23);
  for (int trial = 0; trial < 3; ++trial) {
    Tensor a = rand_tensor({3, 5}, rng);
    Tensor b = rand_tensor({3, 5}, rng);
    Tensor bias = rand_tensor({5}, rng);
    Tensor pos = add_scalar(mul(a, a), 0.5);  // strictly positive for log

    struct Case {
      const char* name;
      std::function<Tensor()> f;
      std::vector<Tensor> inputs;
    };
    std::vector<Case> cases = {
        {"add", [&] { return sum_all(add(a, b)); }, {a, b}},
        {"sub_mul", [&] { return sum_all(mul(sub(a, b), b)); }, {a, b}},
        {"scale", [&] { return sum_all(scale(a, -1.7)); }, {a}},
        {"add_rows", [&] { return sum_all(add_rows(a, bias)); }, {a, bias}},
        {"relu", [&] { return sum_all(relu(a)); }, {a}},
        {"tanh", [&] { return sum_all(tanh_op(a)); }, {a}},
        {"log", [&] { return sum_all(log_op(pos)); }, {pos}},
        {"softmax", [&] { return sum_all(mul(softmax_rows(a), b)); }, {a}},
        {"log_softmax", [&] { return sum_all(mul(log_softmax_rows(a), b)); }, {a}},
        {"l2_normalize", [&] { return sum_all(mul(l2_normalize(a), b)); }, {a}},
        {"mean_axis", [&] { return sum_all(mul(mean_over_axis(a, 0), bias)); }, {a}},
        {"sum_last", [&] { return mean_all(sum_last_axis(a)); }, {a}},
        {"transpose", [&] { return sum_all(mul(transpose(a), transpose(b))); }, {a}},
        {"gather", [&] { return sum_all(gather_rows(a, {2, 2, 0})); }, {a}},
        {"slice", [&] { return sum_all(slice_rows(a, 1, 3)); }, {a}},
        {"pick", [&] { return sum_all(pick_per_row(a, {4, 0, 2})); }, {a}},
        {"stack", [&] { return sum_all(stack({a, b})); }, {a, b}},
        {"concat", [&] { return sum_all(concat_rows({a, b})); }, {a, b}},
        {"reshape", [&] { return sum_all(mul(reshape(a, {5, 3}), transpose(b))); }, {a}},
        {"clamp", [&] { return sum_all(clamp(a, -0.5, 0.5)); }, {a}},
    };
    for (auto& c : cases) {
      auto report = check_gradients(c.f, c.inputs, 1e-6, 1e-5);
      INFO(c.name);
      CHECK(report.passed);
    }
  }
}

TEST_CASE("gather accumulates duplicated rows") {
  Tensor h = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6}).set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor g = gather_rows(h, {2, 2});
    tape.backward(sum_all(g));
  }
  CHECK(h.grad() == std::vector<double>{0, 0, 0, 0, 2, 2});
}

TEST_CASE("bitwise determinism of forward+backward") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = rand_tensor({4, 4}, rng);
    Tensor w = rand_tensor({4, 4}, rng).set_requires_grad(true);
    Tape tape;
    TapeScope scope(tape);
    Tensor y = softmax_rows(matmul(relu(matmul(a, w)), transpose(w)));
    Tensor loss = mean_all(mul(y, y));
    tape.backward(loss);
    std::vector<double> out = y.data();
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    out.push_back(loss.item());
    return out;
  };
  auto r1 = run(99), r2 = run(99);
  CHECK(std::memcmp(r1.data(), r2.data(), r1.size() * sizeof(double)) == 0);
}

TEST_CASE("check_gradients analytic example and negative control") {
  // f(x) = sum(x^2), grad = 2x
  Tensor x = Tensor::from({2}, {1, 2});
  auto report = check_gradients([&] { return sum_all(mul(x, x)); }, {x}, 1e-6, 1e-8);
  CHECK(report.passed);

  // deliberately corrupted adjoint must be flagged with its coordinate
  auto bad_scale = [](const Tensor& in) {
    Tensor out = Tensor::zeros(in.shape());
    for (int64_t i = 0; i < in.size(); ++i) out.data()[static_cast<size_t>(i)] = 2.0 * in.data()[static_cast<size_t>(i)];
    if (Tape::active() && in.requires_grad()) {
      out.set_requires_grad(true);
      Tape::active()->record([ii = in.impl(), oi = out.impl()] {
        for (size_t i = 0; i < oi->grad.size(); ++i) ii->grad[i] += 1.9 * oi->grad[i];  // wrong
      });
    }
    return out;
  };
  Tensor y = Tensor::from({2}, {1.0, -3.0});
  auto bad = check_gradients([&] { return sum_all(bad_scale(y)); }, {y}, 1e-6, 1e-4);
  CHECK_FALSE(bad.passed);
  REQUIRE(bad.failures.size() == 2);
  CHECK(bad.failures[0].coord == 0);
  CHECK(bad.failures[0].analytic == doctest::Approx(1.9));
  CHECK(bad.failures[0].numeric == doctest::Approx(2.0));
}

TEST_CASE("tape rejects non-scalar loss") {
  Tensor x = Tensor::from({2}, {1, 2}).set_requires_grad(true);
  Tape tape;
  TapeScope scope(tape);
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), NumericError);
}
