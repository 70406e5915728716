#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "comevl/gradcheck.hpp"

using namespace comevl;
using namespace comevl::grad;

TEST(Fd, QuadraticLinearAndSine) {
    const Tensor x({3}, {0.7, -1.2, 2.0});
    const Tensor e1({3}, {1, 0, 0});
    auto sq = [](const Tensor& t) { return inner(t, t); };
    EXPECT_NEAR(fd_directional(sq, x, e1), 1.4, 1e-9);
    auto lin = [](const Tensor& t) { return 3 * t[0] - 2 * t[1] + t[2]; };
    for (double h : {1e-2, 1e-5, 1.0}) EXPECT_NEAR(fd_directional(lin, x, Tensor({3}, {1, 1, 1}), h), 2.0, 1e-9);
    const Tensor s({1}, {0.3});
    EXPECT_NEAR(fd_directional([](const Tensor& t) { return std::sin(t[0]); }, s, Tensor({1}, {1.0})), std::cos(0.3),
                1e-9);
    EXPECT_THROW(fd_directional(sq, x, e1, 0.0), Error);
    EXPECT_THROW(fd_directional([](const Tensor&) { return NAN; }, x, e1), Error);
}

TEST(JvpMixing, ShiftDirectionIsZeroAndHandValue) {
    Rng rng(1);
    const std::vector<Tensor> v{rng.normal_tensor({2, 3}), rng.normal_tensor({2, 3})};
    const Tensor zero = jvp_mixing({0.4, -0.1}, {1.0, 1.0}, v);
    for (double x : zero.data()) EXPECT_NEAR(x, 0.0, 1e-16);
    const Tensor d = jvp_mixing({0.0, 0.0}, {1.0, 0.0}, v);
    EXPECT_LE(max_abs_difference(d, scale(sub(v[0], v[1]), 0.25)), 1e-16);
}

TEST(JvpCayley, AtZeroEqualsDirection) {
    Rng rng(2);
    const Tensor e = skew_project(rng.normal_tensor({5, 5}));
    EXPECT_LE(max_abs_difference(jvp_cayley(Tensor({5, 5}), e), e), 1e-15);
}

TEST(JvpCayley, PlanarRotationFamily) {
    // Q(t) = rotation by 2 atan(t/2), so dQ/dt = R'(theta) / (1 + t^2/4).
    const double t = 0.8;
    const Tensor a = Tensor::matrix({{0, -t}, {t, 0}});
    const Tensor e = Tensor::matrix({{0, -1}, {1, 0}});
    const double th = 2 * std::atan(t / 2), dth = 1 / (1 + t * t / 4);
    const Tensor want = Tensor::matrix({{-std::sin(th) * dth, -std::cos(th) * dth}, {std::cos(th) * dth, -std::sin(th) * dth}});
    EXPECT_LE(max_abs_difference(jvp_cayley(a, e), want), 1e-15);
}

TEST(JvpCayley, MatchesFiniteDifference) {
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor a = skew_project(rng.normal_tensor({6, 6}));
        const Tensor e = skew_project(rng.normal_tensor({6, 6}));
        const Tensor probe = rng.normal_tensor({6, 6});
        const double fd = fd_directional([&](const Tensor& x) { return inner(probe, cayley(x)); }, a, e);
        const double an = inner(probe, jvp_cayley(a, e));
        EXPECT_LE(std::abs(an - fd) / std::abs(fd), 1e-7);
    }
}

TEST(JvpGate, ValuesAtZeroSaturationAndFd) {
    Rng rng(4);
    const Tensor x = rng.normal_tensor({3, 2});
    EXPECT_EQ(jvp_gate(0.0, 1.0, x), x);
    const Tensor sat = jvp_gate(20.0, 1.0, x);
    for (double v : sat.data()) EXPECT_LE(std::abs(v), 1e-12);
    const double fd = (std::tanh(0.7 + 1e-5) - std::tanh(0.7 - 1e-5)) / 2e-5;
    EXPECT_NEAR(jvp_gate(0.7, 1.0, x)(0, 0) / x(0, 0), fd, 1e-6 * std::abs(fd));
}

TEST(JvpProjection, LinearIsExact) {
    Rng rng(5);
    const Projection p{{}, rng.normal_tensor({4, 3})};
    const Tensor x = rng.normal_tensor({2, 4}), dw = rng.normal_tensor({4, 3});
    EXPECT_EQ(jvp_projection(p, x, {}, dw), matmul(x, dw));
    EXPECT_THROW(jvp_projection(Projection{}, x, {}, dw), Error);
}

TEST(Suite, AllComponentsPassAndAreDeterministic) {
    const auto a = gradcheck_suite();
    const auto b = gradcheck_suite();
    EXPECT_EQ(report_csv(a), report_csv(b));
    EXPECT_TRUE(all_pass(a)) << report_csv(a);
    std::set<std::string> components;
    for (const auto& r : a) components.insert(r.component + "/" + r.param);
    for (const char* want : {"mixing/logits", "cayley/A", "gate/gamma", "ortho_layer/A", "cross_attention/W_Q",
                             "cross_attention/W_K", "cross_attention/W_V", "cross_attention/W_out",
                             "projection/W_proj", "projection/W_proj_in"})
        EXPECT_TRUE(components.count(want)) << want;
    for (const auto& r : a) {
        if (r.param == "W_V" || r.param == "W_out" || r.param == "W_proj") {
            EXPECT_LE(r.rel_err, 1e-9) << r.param;
        }
    }
    EXPECT_TRUE(std::is_sorted(a.begin(), a.end(),
                               [](const GradReport& x, const GradReport& y) { return x.component < y.component; }));
}

TEST(Suite, StableAcrossSteps) {
    for (double h : {1e-4, 1e-5, 1e-6}) {
        SuiteOptions opt;
        opt.step = h;
        EXPECT_TRUE(all_pass(gradcheck_suite(opt))) << "h=" << h;
    }
}

TEST(Suite, CsvHeader) {
    SuiteOptions opt;
    opt.instances = 1;
    const std::string csv = report_csv(gradcheck_suite(opt));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "component,param,analytic,fd,rel_err,pass");
}
