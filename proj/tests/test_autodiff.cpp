#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "kdseq/common.hpp"
#include "kdseq/tensor.hpp"

using namespace kdseq;

namespace {

Tensor randt(Rng& rng, size_t r, size_t c, bool grad = false, double lo = -1.5, double hi = 1.5) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(r, c, std::move(v), grad);
}

}  // namespace

TEST_CASE("matmul by identity returns the input") {
  Rng rng(7);
  Tensor i3(3, 3, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor a = randt(rng, 3, 3);
  Tensor out = matmul(i3, a);
  for (size_t k = 0; k < 9; k++) CHECK(out.values()[k] == doctest::Approx(a.values()[k]).epsilon(1e-15));
}

TEST_CASE("sigmoid and tanh at zero") {
  Tensor z(1, 2, std::vector<double>{0.0, 0.0});
  CHECK(sigmoid(z).values()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(tanh_t(z).values()[1] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("concat over the last dimension") {
  Tensor a(1, 2, std::vector<double>{1, 2});
  Tensor b(1, 1, std::vector<double>{3});
  Tensor c = concat_cols({a, b});
  REQUIRE(c.cols() == 3);
  CHECK(c.values() == std::vector<double>{1, 2, 3});
}

TEST_CASE("backward of sum gives all-ones gradient") {
  ParameterSet ps;
  Tensor& w = ps.add("w", Tensor(1, 3, std::vector<double>{2, -1, 4}, true));
  backward(sum_all(w), ps);
  CHECK(w.grad() == std::vector<double>{1, 1, 1});
}

TEST_CASE("backward of mean of squares") {
  // d/dw_i mean(w^2) = w_i for two entries
  ParameterSet ps;
  Tensor& w = ps.add("w", Tensor(1, 2, std::vector<double>{1, 2}, true));
  backward(mean_all(mul(w, w)), ps);
  CHECK(w.grad()[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(w.grad()[1] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("parameter off the tape gets an exact zero gradient") {
  ParameterSet ps;
  Tensor& w = ps.add("w", Tensor(1, 2, std::vector<double>{1, 1}, true));
  Tensor& dangling = ps.add("unused", Tensor(1, 2, std::vector<double>{5, 5}, true));
  backward(sum_all(w), ps);
  CHECK(dangling.grad() == std::vector<double>{0, 0});
}

TEST_CASE("backward rejects a non-scalar loss") {
  ParameterSet ps;
  Tensor& w = ps.add("w", Tensor(1, 3, std::vector<double>{1, 2, 3}, true));
  CHECK_THROWS_AS(backward(mul(w, w), ps), contract_error);
}

TEST_CASE("double backward on the same root is a state error") {
  ParameterSet ps;
  Tensor& w = ps.add("w", Tensor(1, 2, std::vector<double>{1, 2}, true));
  Tensor loss = sum_all(mul(w, w));
  backward(loss, ps);
  CHECK_THROWS_AS(backward(loss, ps), state_error);
}

TEST_CASE("distinct roots over a shared graph are each walkable once") {
  ParameterSet ps;
  Tensor& w = ps.add("w", Tensor(1, 2, std::vector<double>{0.5, -0.3}, true));
  Tensor shared = mul(w, w);
  Tensor r1 = sum_all(shared);
  Tensor r2 = mean_all(shared);
  backward(r1, ps);
  std::vector<double> g1 = w.grad();
  ps.zero_grad();
  backward(r2, ps);  // must not throw
  CHECK(w.grad()[0] == doctest::Approx(g1[0] / 2).epsilon(1e-14));
}

TEST_CASE("log of a non-positive value is a domain error") {
  Tensor bad(1, 1, std::vector<double>{-0.25});
  CHECK_THROWS_AS(log_t(bad), numeric_domain_error);
}

TEST_CASE("shape mismatch names the kernel") {
  Tensor a(2, 3, 1.0);
  Tensor b(3, 3, 1.0);
  try {
    add(a, b);
    FAIL("expected shape_error");
  } catch (const shape_error& e) {
    CHECK(std::string(e.what()).find("add") != std::string::npos);
  }
}

TEST_CASE("grad_check is exact for a linear function") {
  Rng rng(3);
  ParameterSet ps;
  ps.add("w", randt(rng, 2, 3, true));
  auto f = [](ParameterSet& p) { return sum_all(p.at("w")); };
  GradCheck gc = grad_check(f, ps);
  CHECK(gc.ok);
  CHECK(gc.max_rel_err <= 1e-10);
}

TEST_CASE("every kernel passes finite-difference checks at random points") {
  // Each closure exercises one kernel inside a scalarizing wrapper.
  struct KernelCase {
    const char* name;
    std::function<Tensor(ParameterSet&)> f;
    size_t rows, cols;
  };
  Rng rng(11);
  std::vector<KernelCase> cases;
  cases.push_back({"matmul", [](ParameterSet& p) {
                     Tensor c(3, 2, std::vector<double>{0.3, -0.7, 1.1, 0.2, -0.4, 0.9});
                     return sum_all(matmul(p.at("w"), c));
                   }, 2, 3});
  cases.push_back({"add", [](ParameterSet& p) {
                     Tensor c(2, 2, std::vector<double>{0.5, -0.5, 1.5, 2.0});
                     return sum_all(mul(add(p.at("w"), c), p.at("w")));
                   }, 2, 2});
  cases.push_back({"mul", [](ParameterSet& p) { return mean_all(mul(p.at("w"), p.at("w"))); }, 2, 3});
  cases.push_back({"concat", [](ParameterSet& p) {
                     Tensor c(2, 1, std::vector<double>{0.4, -0.9});
                     return sum_all(mul(concat_cols({p.at("w"), c}), concat_cols({p.at("w"), c})));
                   }, 2, 2});
  cases.push_back({"slice", [](ParameterSet& p) {
                     return sum_all(mul(slice_cols(p.at("w"), 1, 3), slice_cols(p.at("w"), 0, 2)));
                   }, 2, 3});
  cases.push_back({"sigmoid", [](ParameterSet& p) { return sum_all(sigmoid(p.at("w"))); }, 2, 3});
  cases.push_back({"tanh", [](ParameterSet& p) { return sum_all(tanh_t(p.at("w"))); }, 2, 3});
  cases.push_back({"exp", [](ParameterSet& p) { return mean_all(exp_t(p.at("w"))); }, 2, 3});
  cases.push_back({"log", [](ParameterSet& p) {
                     return sum_all(log_t(add_const(mul(p.at("w"), p.at("w")), 0.5)));
                   }, 2, 3});
  cases.push_back({"mean", [](ParameterSet& p) { return mean_all(mul(p.at("w"), p.at("w"))); }, 3, 3});
  cases.push_back({"sum", [](ParameterSet& p) { return sum_all(mul(p.at("w"), p.at("w"))); }, 3, 3});
  cases.push_back({"max", [](ParameterSet& p) { return sum_all(row_max(p.at("w"))); }, 3, 4});
  cases.push_back({"broadcast-scale", [](ParameterSet& p) {
                     return sum_all(mul(scale(p.at("w"), 2.5), p.at("w")));
                   }, 2, 3});
  cases.push_back({"softmax", [](ParameterSet& p) {
                     Tensor q = softmax_rows(p.at("w"));
                     return sum_all(mul(q, q));
                   }, 3, 4});
  cases.push_back({"log-softmax", [](ParameterSet& p) {
                     Tensor q = log_softmax_rows(p.at("w"));
                     return mean_all(mul(q, q));
                   }, 3, 4});
  cases.push_back({"row-cosine", [](ParameterSet& p) {
                     Tensor c(3, 4, std::vector<double>{0.2, -1.0, 0.5, 0.7, 1.2, 0.1, -0.3, 0.8,
                                                        -0.6, 0.9, 0.4, -0.2});
                     return row_cosine_mean(p.at("w"), c);
                   }, 3, 4});
  for (const auto& kc : cases) {
    CAPTURE(kc.name);
    size_t points = 0;
    for (int inst = 0; inst < 64 && points < 120; inst++) {
      ParameterSet ps;
      ps.add("w", randt(rng, kc.rows, kc.cols, true, -1.2, 1.2));
      GradCheck gc = grad_check(kc.f, ps);
      CHECK_MESSAGE(gc.ok, kc.name, " rel err ", gc.max_rel_err, " at ", gc.worst_param, "[",
                    gc.worst_index, "]");
      points += kc.rows * kc.cols;
    }
    CHECK(points >= 100);
  }
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(23);
  for (int inst = 0; inst < 10; inst++) {
    double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    std::vector<double> init(6);
    for (auto& x : init) x = rng.uniform(-1, 1);

    auto grads_of = [&](const std::function<Tensor(Tensor&)>& mk) {
      ParameterSet ps;
      Tensor& w = ps.add("w", Tensor(2, 3, init, true));
      backward(mk(w), ps);
      return w.grad();
    };
    auto f = [](Tensor& w) { return sum_all(mul(w, w)); };
    auto g = [](Tensor& w) { return mean_all(sigmoid(w)); };
    auto combo = [&](Tensor& w) { return add(scale(f(w), a), scale(g(w), b)); };

    std::vector<double> gf = grads_of(f), gg = grads_of(g), gc = grads_of(combo);
    for (size_t i = 0; i < gf.size(); i++)
      CHECK(gc[i] == doctest::Approx(a * gf[i] + b * gg[i]).epsilon(1e-12));
  }
}

TEST_CASE("forward and gradients are deterministic") {
  auto run = [] {
    Rng rng(99);
    ParameterSet ps;
    ps.add("w", randt(rng, 4, 4, true));
    Tensor loss = mean_all(sigmoid(matmul(ps.at("w"), tanh_t(ps.at("w")))));
    backward(loss, ps);
    std::pair<double, std::vector<double>> out{loss.item(), ps.at("w").grad()};
    return out;
  };
  auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("no tape is recorded under NoGradGuard") {
  ParameterSet ps;
  Tensor& w = ps.add("w", Tensor(1, 2, std::vector<double>{1, 2}, true));
  Tensor loss;
  {
    NoGradGuard ng;
    loss = sum_all(mul(w, w));
  }
  CHECK_FALSE(loss.requires_grad());
}

TEST_CASE("gradients accumulate across fan-out and clear on zero_grad") {
  ParameterSet ps;
  Tensor& w = ps.add("w", Tensor(1, 1, std::vector<double>{3}, true));
  backward(add(mul(w, w), mul(w, w)), ps);  // d/dw 2w^2 = 4w
  CHECK(w.grad()[0] == doctest::Approx(12.0).epsilon(1e-14));
  ps.zero_grad();
  CHECK(w.grad()[0] == 0.0);
}
