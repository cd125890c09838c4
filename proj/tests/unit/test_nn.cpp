#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "test_support.hpp"
#include "tlsfd/errors.hpp"
#include "tlsfd/nn.hpp"

using namespace tlsfd;
using namespace tlsfd::nn;

namespace {

ProjectionHead small_head(std::size_t in, std::uint64_t seed, double dropout = 0.1) {
    ProjectionHead h = ProjectionHead::init(in, 8, dropout, seed);
    // Non-trivial biases and gains so every parameter carries gradient.
    Rng rng = make_rng(seed, {42});
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (double& v : h.b1) v = u(rng);
    for (double& v : h.b2) v = u(rng);
    for (double& v : h.ln_gain) v = 1.0 + u(rng);
    for (double& v : h.ln_bias) v = u(rng);
    return h;
}

Vec random_vec(std::size_t n, std::uint64_t seed) {
    Rng rng = make_rng(seed, {7});
    std::normal_distribution<double> g;
    Vec v(n);
    for (double& x : v) x = g(rng);
    return v;
}

// Loss = z . w over the head parameters, as a flat-vector function.
double head_fd_error(std::uint64_t seed, Mode mode) {
    ProjectionHead head = small_head(12, seed);
    const Vec x = random_vec(12, seed + 1);
    const Vec w = random_vec(8, seed + 2);
    auto blocks = parameter_blocks(head);
    Vec flat;
    for (const auto& b : blocks) flat.insert(flat.end(), b.values.begin(), b.values.end());
    const LossWithGradient loss = [&](std::span<const double> p, std::span<double> grad) {
        std::size_t k = 0;
        for (auto& b : blocks) {
            for (double& v : b.values) v = p[k++];
        }
        ++head.version;
        Rng rng = make_rng(seed, {99});
        const ForwardCache cache = head_forward(head, x, mode, &rng);
        if (!grad.empty()) {
            HeadGradients g = HeadGradients::zeros_like(head);
            head_backward(head, cache, w, g);
            std::size_t j = 0;
            for (const auto& b : g.blocks()) {
                for (double v : b.values) grad[j++] = v;
            }
        }
        return dot(cache.output, w);
    };
    return grad_check(loss, flat, 1e-4, seed);
}

}  // namespace

TEST_CASE("gelu matches the erf definition") {
    CHECK(gelu(0.0) == 0.0);
    CHECK(gelu(1.0) == doctest::Approx(0.5 * (1.0 + std::erf(1.0 / std::numbers::sqrt2))).epsilon(1e-15));
    CHECK(std::abs(gelu(1.0) - 0.841345) < 1e-6);
    CHECK(gelu(-10.0) <= 0.0);
    CHECK(gelu(-10.0) > -1e-20);
}

TEST_CASE("gelu derivative agrees with central differences") {
    for (double x = -6.0; x <= 6.0; x += 0.37) {
        const double h = 1e-5;
        const double fd = (gelu(x + h) - gelu(x - h)) / (2 * h);
        CHECK(gelu_derivative(x) == doctest::Approx(fd).epsilon(1e-7));
    }
}

TEST_CASE("layer norm examples") {
    const Vec one{1.0, 1.0};
    const Vec zero{0.0, 0.0};
    const Vec constant = layer_norm(Vec{3.0, 3.0, 3.0}, Vec{1, 1, 1}, Vec{0, 0, 0});
    for (double v : constant) CHECK(v == 0.0);

    const Vec out = layer_norm(Vec{1.0, -1.0}, one, zero);
    const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(out[0] == doctest::Approx(expect).epsilon(1e-15));
    CHECK(out[1] == doctest::Approx(-expect).epsilon(1e-15));
}

TEST_CASE("layer norm is permutation equivariant and standardises") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Vec x = random_vec(17, seed);
        const Vec g(17, 1.0);
        const Vec b(17, 0.0);
        const Vec y = layer_norm(x, g, b);
        double mean = 0.0;
        for (double v : y) mean += v;
        mean /= 17.0;
        double var = 0.0;
        for (double v : y) var += (v - mean) * (v - mean);
        var /= 17.0;
        CHECK(std::abs(mean) < 1e-9);
        CHECK(var <= 1.0);
        CHECK(var >= 1.0 - 1e-3);

        std::vector<std::size_t> perm(17);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        Rng rng = make_rng(seed, {5});
        std::shuffle(perm.begin(), perm.end(), rng);
        Vec xp(17);
        for (std::size_t i = 0; i < 17; ++i) xp[i] = x[perm[i]];
        const Vec yp = layer_norm(xp, g, b);
        for (std::size_t i = 0; i < 17; ++i) CHECK(yp[i] == doctest::Approx(y[perm[i]]).epsilon(1e-14));
    }
}

TEST_CASE("head init follows the stated scheme") {
    const ProjectionHead h = ProjectionHead::init(768, 64, 0.1, 3);
    const double limit = std::sqrt(6.0 / (768.0 + 64.0));
    CHECK(h.w1.rows == 64);
    CHECK(h.w1.cols == 768);
    for (double v : h.w1.data) CHECK(std::abs(v) <= limit);
    const double limit2 = std::sqrt(6.0 / 128.0);
    for (double v : h.w2.data) CHECK(std::abs(v) <= limit2);
    for (double v : h.b1) CHECK(v == 0.0);
    for (double v : h.b2) CHECK(v == 0.0);
    for (double v : h.ln_gain) CHECK(v == 1.0);
    for (double v : h.ln_bias) CHECK(v == 0.0);
    CHECK(h == ProjectionHead::init(768, 64, 0.1, 3));
    CHECK_FALSE(h == ProjectionHead::init(768, 64, 0.1, 4));
    CHECK(h.parameter_count() == 64 * 768 + 64 + 64 * 64 + 64 + 64 + 64);
}

TEST_CASE("head forward examples") {
    ProjectionHead h = small_head(12, 1);
    const Vec x = random_vec(12, 2);
    CHECK(head_forward(h, x, Mode::Infer).output == head_forward(h, x, Mode::Infer).output);

    ProjectionHead no_drop = h;
    no_drop.dropout_rate = 0.0;
    Rng rng = make_rng(1);
    CHECK(head_forward(no_drop, x, Mode::Train, &rng).output == head_forward(no_drop, x, Mode::Infer).output);

    Rng r1 = make_rng(9);
    Rng r2 = make_rng(9);
    CHECK(head_forward(h, x, Mode::Train, &r1).output == head_forward(h, x, Mode::Train, &r2).output);

    ProjectionHead zero = ProjectionHead::init(12, 8, 0.1, 5);
    for (double& v : zero.ln_bias) v = 0.25;
    const auto z = head_forward(zero, Vec(12, 0.0), Mode::Infer).output;
    for (double v : z) CHECK(v == 0.25);
}

TEST_CASE("train-mode forward needs an rng") {
    ProjectionHead h = small_head(12, 1);
    CHECK_THROWS(head_forward(h, random_vec(12, 3), Mode::Train, nullptr));
    CHECK_THROWS_AS(head_forward(h, random_vec(11, 3), Mode::Infer), ShapeError);
}

TEST_CASE("dropout keeps or scales units") {
    ProjectionHead h = small_head(12, 1, 0.5);
    Rng rng = make_rng(4);
    const auto cache = head_forward(h, random_vec(12, 3), Mode::Train, &rng);
    for (double k : cache.keep_scale) CHECK((k == 0.0 || k == 2.0));
}

TEST_CASE("head backward: zero upstream, linearity, finite differences") {
    ProjectionHead h = small_head(12, 3);
    const Vec x = random_vec(12, 4);
    Rng rng = make_rng(6);
    const auto cache = head_forward(h, x, Mode::Train, &rng);

    HeadGradients g0 = HeadGradients::zeros_like(h);
    const Vec dx0 = head_backward(h, cache, Vec(8, 0.0), g0);
    for (const auto& b : g0.blocks()) {
        for (double v : b.values) CHECK(v == 0.0);
    }
    for (double v : dx0) CHECK(v == 0.0);

    const Vec u = random_vec(8, 5);
    Vec u3 = u;
    for (double& v : u3) v *= 3.0;
    HeadGradients g1 = HeadGradients::zeros_like(h);
    HeadGradients g3 = HeadGradients::zeros_like(h);
    const Vec dx1 = head_backward(h, cache, u, g1);
    const Vec dx3 = head_backward(h, cache, u3, g3);
    auto b1 = g1.blocks();
    auto b3 = g3.blocks();
    for (std::size_t k = 0; k < b1.size(); ++k) {
        for (std::size_t i = 0; i < b1[k].values.size(); ++i) {
            CHECK(b3[k].values[i] == doctest::Approx(3.0 * b1[k].values[i]).epsilon(1e-12));
        }
    }
    for (std::size_t i = 0; i < dx1.size(); ++i) CHECK(dx3[i] == doctest::Approx(3.0 * dx1[i]).epsilon(1e-12));

    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        CHECK(head_fd_error(seed, Mode::Infer) < 1e-4);
        CHECK(head_fd_error(seed, Mode::Train) < 1e-4);
    }
}

TEST_CASE("input gradient agrees with finite differences") {
    ProjectionHead h = small_head(12, 8);
    const Vec w = random_vec(8, 9);
    Vec x = random_vec(12, 10);
    const auto cache = head_forward(h, x, Mode::Infer);
    HeadGradients g = HeadGradients::zeros_like(h);
    const Vec dx = head_backward(h, cache, w, g);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double o = x[i];
        x[i] = o + 1e-5;
        const double up = dot(head_forward(h, x, Mode::Infer).output, w);
        x[i] = o - 1e-5;
        const double down = dot(head_forward(h, x, Mode::Infer).output, w);
        x[i] = o;
        CHECK(dx[i] == doctest::Approx((up - down) / 2e-5).epsilon(1e-6));
    }
}

TEST_CASE("stale forward cache is rejected") {
    ProjectionHead h = small_head(12, 3);
    const auto cache = head_forward(h, random_vec(12, 1), Mode::Infer);
    ++h.version;
    HeadGradients g = HeadGradients::zeros_like(h);
    CHECK_THROWS_AS(head_backward(h, cache, random_vec(8, 2), g), ContractError);
}

TEST_CASE("adam examples") {
    Vec p{1.0, -2.0, 3.0};
    Vec g{0.0, 0.0, 0.0};
    Adam adam;
    const std::vector<ParamBlock> params{{"p", p}};
    const std::vector<ParamBlock> grads{{"g", g}};
    adam.step(params, grads);
    CHECK(p == Vec{1.0, -2.0, 3.0});
    CHECK(adam.steps() == 1);
    adam.step(params, grads);
    CHECK(adam.steps() == 2);

    // Constant gradient: bias-corrected moments make every step exactly
    // lr * g / (|g| + eps), approaching lr in magnitude against sign(g).
    Vec q{0.0, 0.0};
    Vec gq{0.5, -2.0};
    Adam a2(AdamConfig{.lr = 1e-3});
    for (int i = 0; i < 200; ++i) {
        const Vec before = q;
        a2.step({{"q", q}}, {{"g", gq}});
        CHECK(q[0] < before[0]);
        CHECK(q[1] > before[1]);
        CHECK(before[0] - q[0] == doctest::Approx(1e-3).epsilon(1e-6));
        CHECK(q[1] - before[1] == doctest::Approx(1e-3).epsilon(1e-6));
    }
}

TEST_CASE("adam rejects non-finite gradients atomically") {
    Vec p{1.0, 2.0};
    Vec r{5.0};
    Vec g{0.1, 0.2};
    Vec gr{std::nan("")};
    Adam adam;
    CHECK_THROWS_AS(adam.step({{"p", p}, {"r", r}}, {{"g", g}, {"gr", gr}}), NumericError);
    CHECK(p == Vec{1.0, 2.0});
    CHECK(r == Vec{5.0});
    CHECK(adam.steps() == 0);
}

TEST_CASE("grad_check on a quadratic") {
    const LossWithGradient quad = [](std::span<const double> p, std::span<double> grad) {
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            s += 0.5 * p[i] * p[i];
            if (!grad.empty()) grad[i] = p[i];
        }
        return s;
    };
    // Magnitudes kept away from zero: near p = 0 the relative error is all
    // rounding noise.
    Rng rng = make_rng(11, {});
    std::uniform_real_distribution<double> mag(0.5, 2.0);
    Vec p(100);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = (i % 2 == 0 ? 1.0 : -1.0) * mag(rng);
    CHECK(grad_check(quad, p, 1e-4, 1) < 1e-9);
    CHECK(grad_check(quad, p, 1e-2, 1) < 1e-9);

    // A wrong gradient is caught.
    const LossWithGradient wrong = [&](std::span<const double> x, std::span<double> grad) {
        const double v = quad(x, grad);
        if (!grad.empty()) grad[0] += 1.0;
        return v;
    };
    Vec small = random_vec(50, 12);
    CHECK(grad_check(wrong, small, 1e-4, 1) > 0.1);
}

TEST_CASE("grad_check error shrinks with h when truncation dominates") {
    // A quadratic has no truncation error, so its fine/coarse comparison is
    // decided by rounding alone. A quartic has O(h^2) truncation error.
    const LossWithGradient quartic = [](std::span<const double> p, std::span<double> grad) {
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            s += 0.25 * p[i] * p[i] * p[i] * p[i];
            if (!grad.empty()) grad[i] = p[i] * p[i] * p[i];
        }
        return s;
    };
    Rng rng = make_rng(13, {});
    std::uniform_real_distribution<double> mag(0.5, 2.0);
    Vec p(100);
    for (double& v : p) v = mag(rng);
    const double fine = grad_check(quartic, p, 1e-4, 1);
    const double coarse = grad_check(quartic, p, 1e-2, 1);
    CHECK(fine <= coarse);
    CHECK(fine < 1e-7);
    // Central difference of x^4/4 is x^3 + x h^2 exactly.
    double expected = 0.0;
    for (double x : p) expected = std::max(expected, x * 1e-4 / (2.0 * x * x * x + x * 1e-4));
    CHECK(coarse == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("composed pipeline passes the gradient check") {
    for (std::uint64_t seed : {101u, 102u}) {
        CHECK(testing::end_to_end_grad_check(seed, 4, 1e-4, Mode::Train) < 1e-4);
    }
    CHECK(testing::end_to_end_grad_check(103, 4, 1e-4, Mode::Infer) < 1e-4);
}
