#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "pfl/errors.hpp"
#include "pfl/numerics/adam.hpp"
#include "pfl/numerics/gradcheck.hpp"
#include "pfl/numerics/ops.hpp"
#include "pfl/rng.hpp"

using namespace pfl;
using namespace pfl::num;

namespace {

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    Tensor t = Tensor::matrix(r, c);
    for (double& v : t.values()) {
        v = scale * rng.normal();
    }
    return t;
}

// Plain second-order central difference, written independently of the
// library's gradcheck so the op tests do not share a code path with it.
double central_difference(const std::function<double()>& f, double& x, double h) {
    const double x0 = x;
    x = x0 + h;
    const double fp = f();
    x = x0 - h;
    const double fm = f();
    x = x0;
    return (fp - fm) / (2.0 * h);
}

// Checks the gradient of sum(w * op(inputs)) for random weights w, so every
// output coordinate participates with a distinct sensitivity.
void check_op(const std::function<Var(Tape&, std::vector<Var>&)>& op, std::vector<Parameter>& inputs,
              std::uint64_t seed, double tol = 1e-6) {
    Rng rng(seed);
    Tensor weights;
    {
        Tape probe;
        std::vector<Var> vars;
        for (auto& p : inputs) {
            vars.push_back(probe.param(p));
        }
        const Tensor& out = op(probe, vars).value();
        weights = random_matrix(rng, out.rows(), out.cols());
    }
    auto build = [&](Tape& tape) {
        std::vector<Var> vars;
        for (auto& p : inputs) {
            vars.push_back(tape.param(p));
        }
        Var out = op(tape, vars);
        return sum(mul(out, tape.constant(weights)));
    };
    Tape tape;
    Var loss = build(tape);
    tape.backward(loss);
    auto value = [&]() {
        Tape t;
        return build(t).value().item();
    };
    for (auto& p : inputs) {
        const Tensor* g = tape.gradient(p);
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double numeric = central_difference(value, p.value[i], 1e-6);
            const double analytic = g != nullptr ? (*g)[i] : 0.0;
            CHECK(std::abs(analytic - numeric) <= tol * std::max(1.0, std::abs(numeric)));
        }
    }
}

std::vector<Parameter> params(std::initializer_list<Tensor> values) {
    std::vector<Parameter> out;
    int k = 0;
    for (const auto& v : values) {
        out.emplace_back("p" + std::to_string(k++), v, true);
    }
    return out;
}

}  // namespace

TEST_CASE("tensor invariants") {
    Tensor t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.rows() == 2);
    CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3, 0.0)), DimensionError);
    CHECK_THROWS_AS(Tensor({4}).rows(), DimensionError);
}

TEST_CASE("matmul hand example") {
    Tape tape;
    Var a = tape.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
    Var b = tape.constant(Tensor::from_rows({{1}, {1}}));
    const Tensor& y = matmul(a, b).value();
    CHECK(y == Tensor::from_rows({{3}, {7}}));
}

TEST_CASE("shape mismatch names the op") {
    Tape tape;
    Var a = tape.constant(Tensor::matrix(2, 3));
    Var b = tape.constant(Tensor::matrix(2, 3));
    try {
        matmul(a, b);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("matmul") != std::string::npos);
        CHECK(std::string(e.what()).find("[2x3]") != std::string::npos);
    }
    CHECK_THROWS_AS(add(a, tape.constant(Tensor::matrix(3, 2))), DimensionError);
}

TEST_CASE("concat along axis 0 stacks rows") {
    Tape tape;
    Var a = tape.constant(Tensor::matrix(6, 12));
    Var b = tape.constant(Tensor::matrix(15, 12));
    Var c = concat({a, b}, 0);
    CHECK(c.value().rows() == 21);
    CHECK(c.value().cols() == 12);
}

TEST_CASE("softmax of zeros is uniform") {
    Tape tape;
    const Tensor& y = softmax(tape.constant(Tensor::from_rows({{0, 0}})), 1).value();
    CHECK(y[0] == doctest::Approx(0.5));
    CHECK(y[1] == doctest::Approx(0.5));
}

TEST_CASE("activation derivatives at zero") {
    std::vector<Parameter> x = params({Tensor::scalar(0.0)});
    {
        Tape tape;
        Var out = sigmoid(tape.param(x[0]));
        tape.backward(out);
        CHECK((*tape.gradient(x[0]))[0] == doctest::Approx(0.25).epsilon(1e-15));
    }
    {
        Tape tape;
        Var out = tanh(tape.param(x[0]));
        tape.backward(out);
        CHECK((*tape.gradient(x[0]))[0] == doctest::Approx(1.0).epsilon(1e-15));
    }
}

TEST_CASE("backward requires a scalar loss") {
    Tape tape;
    Parameter p("p", Tensor::matrix(2, 2, 1.0));
    Var v = tanh(tape.param(p));
    CHECK_THROWS_AS(tape.backward(v), ContractError);
}

TEST_CASE("frozen parameters receive no gradient") {
    Parameter w("w", Tensor::from_rows({{1, 2}, {3, 4}}), false);
    Parameter x("x", Tensor::from_rows({{1}, {-1}}), true);
    Tape tape;
    Var loss = sum_squares(matmul(tape.param(w), tape.param(x)));
    tape.backward(loss);
    CHECK(tape.gradient(w) == nullptr);
    CHECK(tape.gradient(x) != nullptr);
}

TEST_CASE("every op matches finite differences on small random tensors") {
    Rng rng(7);
    SUBCASE("matmul") {
        auto in = params({random_matrix(rng, 5, 4), random_matrix(rng, 4, 3)});
        check_op([](Tape&, std::vector<Var>& v) { return matmul(v[0], v[1]); }, in, 1);
    }
    SUBCASE("matmul_nt") {
        auto in = params({random_matrix(rng, 5, 4), random_matrix(rng, 6, 4)});
        check_op([](Tape&, std::vector<Var>& v) { return matmul_nt(v[0], v[1]); }, in, 2);
    }
    SUBCASE("add sub mul scale") {
        auto in = params({random_matrix(rng, 3, 4), random_matrix(rng, 3, 4)});
        check_op([](Tape&, std::vector<Var>& v) { return add(v[0], v[1]); }, in, 3);
        check_op([](Tape&, std::vector<Var>& v) { return sub(v[0], v[1]); }, in, 4);
        check_op([](Tape&, std::vector<Var>& v) { return mul(v[0], v[1]); }, in, 5);
        check_op([](Tape&, std::vector<Var>& v) { return scale(v[0], -2.5); }, in, 6);
    }
    SUBCASE("row and column expansion") {
        auto in = params({random_matrix(rng, 4, 3), random_matrix(rng, 1, 3), random_matrix(rng, 4, 1)});
        check_op([](Tape&, std::vector<Var>& v) { return add_row(v[0], v[1]); }, in, 7);
        check_op([](Tape&, std::vector<Var>& v) { return broadcast_rows(v[1], 5); }, in, 8);
        check_op([](Tape&, std::vector<Var>& v) { return broadcast_cols(v[2], 6); }, in, 9);
    }
    SUBCASE("concat slice transpose") {
        auto in = params({random_matrix(rng, 3, 4), random_matrix(rng, 2, 4), random_matrix(rng, 3, 2)});
        check_op([](Tape&, std::vector<Var>& v) { return concat_rows({v[0], v[1], v[0]}); }, in, 10);
        check_op([](Tape&, std::vector<Var>& v) { return concat_cols({v[0], v[2]}); }, in, 11);
        check_op([](Tape&, std::vector<Var>& v) { return slice_rows(v[0], 1, 3); }, in, 12);
        check_op([](Tape&, std::vector<Var>& v) { return slice_cols(v[0], 1, 4); }, in, 13);
        check_op([](Tape&, std::vector<Var>& v) { return transpose(v[2]); }, in, 14);
    }
    SUBCASE("softmax both axes") {
        auto in = params({random_matrix(rng, 4, 5)});
        check_op([](Tape&, std::vector<Var>& v) { return softmax(v[0], 1); }, in, 15);
        check_op([](Tape&, std::vector<Var>& v) { return softmax(v[0], 0); }, in, 16);
    }
    SUBCASE("layer norm") {
        auto in = params({random_matrix(rng, 4, 6), random_matrix(rng, 1, 6), random_matrix(rng, 1, 6)});
        check_op([](Tape&, std::vector<Var>& v) { return layer_norm(v[0], v[1], v[2]); }, in, 17);
    }
    SUBCASE("pointwise nonlinearities") {
        auto in = params({random_matrix(rng, 5, 5)});
        check_op([](Tape&, std::vector<Var>& v) { return tanh(v[0]); }, in, 18);
        check_op([](Tape&, std::vector<Var>& v) { return sigmoid(v[0]); }, in, 19);
        check_op([](Tape&, std::vector<Var>& v) { return gelu(v[0]); }, in, 20);
        check_op([](Tape&, std::vector<Var>& v) { return relu(v[0]); }, in, 21);
    }
    SUBCASE("reductions") {
        auto in = params({random_matrix(rng, 3, 4), random_matrix(rng, 3, 4)});
        check_op([](Tape&, std::vector<Var>& v) { return sum(v[0], 0); }, in, 22);
        check_op([](Tape&, std::vector<Var>& v) { return sum(v[0], 1); }, in, 23);
        check_op([](Tape&, std::vector<Var>& v) { return mean(v[0]); }, in, 24);
        check_op([](Tape&, std::vector<Var>& v) { return sum_squares(v[0]); }, in, 25);
        check_op([](Tape&, std::vector<Var>& v) { return mse(v[0], v[1]); }, in, 26);
    }
}

TEST_CASE("slice backward routes gradient to exactly the sliced coordinates") {
    Rng rng(11);
    Parameter x("x", random_matrix(rng, 8, 3));
    Tensor upstream_a = random_matrix(rng, 3, 3);
    Tensor upstream_b = random_matrix(rng, 5, 3);
    Tape tape;
    Var xv = tape.param(x);
    Var a = slice_rows(xv, 0, 3);
    Var b = slice_rows(xv, 3, 8);
    Var loss = add(sum(mul(a, tape.constant(upstream_a))), sum(mul(b, tape.constant(upstream_b))));
    tape.backward(loss);
    const Tensor& g = *tape.gradient(x);
    const double routed = squared_norm(g);
    const double upstream = squared_norm(upstream_a) + squared_norm(upstream_b);
    CHECK(routed == doctest::Approx(upstream).epsilon(1e-14));
}

TEST_CASE("eval is pure: identical inputs give bit-identical outputs") {
    Rng rng(3);
    Tensor a = random_matrix(rng, 6, 6);
    Tensor b = random_matrix(rng, 6, 6);
    auto run = [&]() {
        Tape tape;
        Var x = tape.constant(a);
        Var y = tape.constant(b);
        return softmax(add(matmul(x, y), tanh(x)), 1).value();
    };
    CHECK(run() == run());
}

TEST_CASE("mean-squared loss of Wx matches finite differences") {
    Rng rng(5);
    Parameter w("w", random_matrix(rng, 4, 6));
    Tensor x = random_matrix(rng, 6, 1);
    Tensor target = random_matrix(rng, 4, 1);
    auto build = [&](Tape& tape) { return mse(matmul(tape.param(w), tape.constant(x)), tape.constant(target)); };
    Tape tape;
    tape.backward(build(tape));
    const Tensor g = *tape.gradient(w);
    auto value = [&]() {
        Tape t;
        return build(t).value().item();
    };
    for (std::size_t i = 0; i < w.value.size(); ++i) {
        const double h = 1e-6 * std::max(1.0, std::abs(w.value[i]));
        CHECK(relative_error(g[i], central_difference(value, w.value[i], h)) < 1e-6);
    }
}

TEST_CASE("finite_diff_check") {
    SUBCASE("x squared at 3") {
        Parameter x("x", Tensor::scalar(3.0));
        Parameter* ps[] = {&x};
        auto r = finite_diff_check([&](Tape& t) { return sum_squares(t.param(x)); }, ps);
        CHECK(r.max_rel_error < 1e-8);
        CHECK(r.worst_analytic == doctest::Approx(6.0));
    }
    SUBCASE("constant function") {
        Parameter x("x", Tensor::matrix(2, 2, 1.0));
        Parameter* ps[] = {&x};
        auto r = finite_diff_check([&](Tape& t) { return t.constant(Tensor::scalar(4.0)); }, ps);
        CHECK(r.max_rel_error == 0.0);
        CHECK(r.coordinates == 4);
    }
    SUBCASE("non-finite output") {
        Parameter x("x", Tensor::scalar(1.0));
        Parameter* ps[] = {&x};
        Tensor g = Tensor::scalar(0.0);
        CHECK_THROWS_AS(finite_diff_check([] { return std::nan(""); }, ps, std::span<const Tensor>(&g, 1), 1e-3),
                        NumericError);
    }
}

TEST_CASE("adam") {
    SUBCASE("first step with unit gradient") {
        Parameter p("p", Tensor::scalar(0.0));
        p.grad = Tensor::scalar(1.0);
        Parameter* ps[] = {&p};
        adam_step(ps, AdamConfig{}, 1);
        // m_hat = v_hat = 1 at t = 1, so the step is -lr / (1 + eps).
        CHECK(p.value[0] == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
        CHECK(p.value[0] == doctest::Approx(-9.99999e-4).epsilon(1e-6));
    }
    SUBCASE("zero gradient leaves parameters unchanged") {
        Parameter p("p", Tensor::from_rows({{1.0, -2.0}}));
        p.grad = Tensor::matrix(1, 2, 0.0);
        const Tensor before = p.value;
        Parameter* ps[] = {&p};
        adam_step(ps, AdamConfig{}, 1);
        CHECK(p.value == before);
    }
    SUBCASE("frozen parameter is never updated") {
        Parameter p("p", Tensor::scalar(2.0), false);
        p.grad = Tensor::scalar(5.0);
        Parameter* ps[] = {&p};
        adam_step(ps, AdamConfig{}, 1);
        CHECK(p.value[0] == 2.0);
    }
    SUBCASE("non-finite gradient aborts") {
        Parameter p("p", Tensor::scalar(2.0));
        p.grad = Tensor::scalar(std::nan(""));
        Parameter* ps[] = {&p};
        CHECK_THROWS_AS(adam_step(ps, AdamConfig{}, 1), NumericError);
        CHECK(p.value[0] == 2.0);
    }
}

TEST_CASE("non-finite op output is an error") {
    Tape tape;
    Var a = tape.constant(Tensor::scalar(1e308));
    CHECK_THROWS_AS(scale(a, 10.0), NumericError);
}
