#include <doctest.h>

#include "jointsgait/autodiff.hpp"
#include "jointsgait/tensor.hpp"

using namespace jointsgait;

namespace {

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            for (int p = 0; p < k; ++p)
                c.at({i, j}) += a.at({i, p}) * b.at({p, j});
    return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape == b.shape);
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::fabs(a.data[static_cast<size_t>(i)] - b.data[static_cast<size_t>(i)]));
    return m;
}

}  // namespace

TEST_CASE("matmul identity") {
    Rng rng(7);
    Tensor m = rng.normal_tensor({3, 3});
    Tensor out = matmul(Tensor::eye(3), m);
    CHECK(max_abs_diff(out, m) == doctest::Approx(0.0));
}

TEST_CASE("matmul hand arithmetic") {
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor b({2, 1}, {0, 1});
    Tensor c = matmul(a, b);
    CHECK(c.at({0, 0}) == 2.0);
    CHECK(c.at({1, 0}) == 4.0);
}

TEST_CASE("matmul agrees with triple-loop oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 1 + static_cast<int>(rng.below(8));
        const int k = 1 + static_cast<int>(rng.below(8));
        const int n = 1 + static_cast<int>(rng.below(8));
        Tensor a = rng.normal_tensor({m, k});
        Tensor b = rng.normal_tensor({k, n});
        CHECK(max_abs_diff(matmul(a, b), naive_matmul(a, b)) < 1e-12);
    }
    // one larger instance, ~10^4 elements
    Tensor a = rng.normal_tensor({100, 40});
    Tensor b = rng.normal_tensor({40, 110});
    CHECK(max_abs_diff(matmul(a, b), naive_matmul(a, b)) < 1e-12);
}

TEST_CASE("matmul shape errors name both shapes") {
    Tensor a({2, 3});
    Tensor b({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("(2,3)"), ShapeError);
}

TEST_CASE("batched matmul leading dimension") {
    Rng rng(3);
    Tensor a = rng.normal_tensor({4, 2, 3});
    Tensor b = rng.normal_tensor({4, 3, 5});
    Tensor c = matmul(a, b);
    CHECK(c.shape == Shape{4, 2, 5});
    for (int s = 0; s < 4; ++s) {
        Tensor as({2, 3}), bs({3, 5});
        std::copy_n(a.data.begin() + s * 6, 6, as.data.begin());
        std::copy_n(b.data.begin() + s * 15, 15, bs.data.begin());
        Tensor cs = naive_matmul(as, bs);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 5; ++j)
                CHECK(c.at({s, i, j}) == doctest::Approx(cs.at({i, j})).epsilon(1e-12));
    }
}

TEST_CASE("rng determinism: equal seeds, equal sequences") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    Rng c(42), d(43);
    bool all_equal = true;
    for (int i = 0; i < 10; ++i) all_equal = all_equal && (c.next_u64() == d.next_u64());
    CHECK_FALSE(all_equal);
}

TEST_CASE("rng uniform in range and normal finite") {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(std::isfinite(rng.normal()));
    }
}

TEST_CASE("rng below is unbiased enough and in range") {
    Rng rng(9);
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 5000; ++i) ++counts[static_cast<size_t>(rng.below(5))];
    for (int c : counts) CHECK(c > 800);
}

TEST_CASE("grad_check on sum of squares") {
    Rng rng(1);
    auto op = [](const std::vector<Var>& xs) { return sum_all(mul(xs[0], xs[0])); };
    Tensor x({3}, {1, 2, 3});
    const double err = grad_check(op, {x}, 1e-5);
    CHECK(err < 1e-8);
}

TEST_CASE("grad_check rejects non-scalar ops") {
    auto op = [](const std::vector<Var>& xs) { return xs[0]; };
    CHECK_THROWS_AS(grad_check(op, {Tensor({2}, {1, 2})}, 1e-5), ContractError);
}

TEST_CASE("parameter gradient shape matches value and zeroes") {
    Rng rng(2);
    Parameter p("w", rng.normal_tensor({3, 4}));
    CHECK(p.gradient.shape == p.value.shape);
    p.gradient.data[5] = 3.0;
    p.zero_grad();
    CHECK(p.gradient.max_abs() == 0.0);
}

TEST_CASE("adam drives a quadratic toward its minimum") {
    Parameter p("x", Tensor({2}, {5.0, -3.0}));
    std::vector<Parameter*> params{&p};
    Adam opt({0.05, 0.9, 0.999, 1e-8});
    for (int i = 0; i < 500; ++i) {
        p.zero_grad();
        for (int j = 0; j < 2; ++j) p.gradient.data[static_cast<size_t>(j)] = 2.0 * p.value.data[static_cast<size_t>(j)];
        opt.step(params);
    }
    CHECK(p.value.max_abs() < 1e-2);
}
