#include "doctest.h"

#include <cmath>
#include <functional>

#include "core/nn.hpp"
#include "core/rng.hpp"

using namespace ltew;

namespace {

Tensor<double> random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Scalar probe loss: sum of outputs weighted by a fixed random projection, so
// the upstream gradient of the probe is the projection itself.
double probe_loss(const Tensor<double>& y, const Tensor<double>& r) {
    double s = 0.0;
    for (size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
}

// Central finite differences of loss() w.r.t. every element of t.
Tensor<double> fd_grad(Tensor<double>& t, const std::function<double()>& loss, double h = 1e-5) {
    Tensor<double> g = Tensor<double>::zeros_like(t);
    for (size_t i = 0; i < t.size(); ++i) {
        const double keep = t[i];
        t[i] = keep + h;
        const double up = loss();
        t[i] = keep - h;
        const double dn = loss();
        t[i] = keep;
        g[i] = (up - dn) / (2.0 * h);
    }
    return g;
}

double rel_error(const Tensor<double>& a, const Tensor<double>& b) {
    double diff = 0.0, norm = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        norm = std::max(norm, std::abs(b[i]));
    }
    return diff / (norm + 1e-12);
}

}  // namespace

TEST_CASE("conv3x3 identity kernel and ones kernel") {
    Rng rng(1ULL);
    const auto x = random_tensor({2, 4, 5}, rng);
    Tensor<double> w({2, 2, 3, 3});
    // Identity: each output channel copies its own input channel.
    for (int c = 0; c < 2; ++c) w[((static_cast<size_t>(c) * 2 + static_cast<size_t>(c)) * 3 + 1) * 3 + 1] = 1.0;
    Tensor<double> b({2});
    const auto y = conv3x3_forward(x, w, b);
    REQUIRE(y.same_shape(x));
    for (size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);

    Tensor<double> ones_x({1, 5, 5});
    for (size_t i = 0; i < ones_x.size(); ++i) ones_x[i] = 1.0;
    Tensor<double> ones_w({1, 1, 3, 3});
    for (size_t i = 0; i < 9; ++i) ones_w[i] = 1.0;
    Tensor<double> zb({1});
    const auto s = conv3x3_forward(ones_x, ones_w, zb);
    CHECK(s.at3(0, 2, 2) == doctest::Approx(9.0));
    CHECK(s.at3(0, 0, 0) == doctest::Approx(4.0));  // corner sees a 2x2 window
    CHECK(s.at3(0, 0, 2) == doctest::Approx(6.0));  // edge sees a 2x3 window
}

TEST_CASE("conv3x3 gradient matches finite differences") {
    Rng rng(2ULL);
    auto x = random_tensor({2, 4, 3}, rng);
    auto w = random_tensor({3, 2, 3, 3}, rng);
    auto b = random_tensor({3}, rng);
    const auto r = random_tensor({3, 4, 3}, rng);
    auto loss = [&] { return probe_loss(conv3x3_forward(x, w, b), r); };

    Tensor<double> dx, dw, db;
    conv3x3_backward(x, w, r, dx, dw, db);
    CHECK(rel_error(dx, fd_grad(x, loss)) < 1e-6);
    CHECK(rel_error(dw, fd_grad(w, loss)) < 1e-6);
    CHECK(rel_error(db, fd_grad(b, loss)) < 1e-6);
}

TEST_CASE("conv3x3 rejects mismatched shapes") {
    Tensor<double> x({2, 4, 4});
    Tensor<double> w({3, 1, 3, 3});
    Tensor<double> b({3});
    CHECK_THROWS_AS((void)conv3x3_forward(x, w, b), std::invalid_argument);
    Tensor<double> w5({3, 2, 5, 5});
    CHECK_THROWS_AS((void)conv3x3_forward(x, w5, b), std::invalid_argument);
}

TEST_CASE("linear trivial forms and gradient") {
    Rng rng(3ULL);
    Tensor<double> eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.at2(i, i) = 1.0;
    Tensor<double> zb({3});
    const auto x0 = random_tensor({4, 3}, rng);
    const auto y0 = linear_forward(x0, eye, zb);
    for (size_t i = 0; i < x0.size(); ++i) CHECK(y0[i] == x0[i]);

    Tensor<double> zeros({2, 3});
    const auto bias = random_tensor({5}, rng);
    const auto wb = random_tensor({5, 3}, rng);
    const auto yb = linear_forward(zeros, wb, bias);
    for (int row = 0; row < 2; ++row)
        for (int o = 0; o < 5; ++o) CHECK(yb.at2(row, o) == bias[static_cast<size_t>(o)]);

    auto x = random_tensor({4, 6}, rng);
    auto w = random_tensor({5, 6}, rng);
    auto b = random_tensor({5}, rng);
    const auto r = random_tensor({4, 5}, rng);
    auto loss = [&] { return probe_loss(linear_forward(x, w, b), r); };
    Tensor<double> dx, dw, db;
    linear_backward(x, w, r, dx, dw, db);
    CHECK(rel_error(dx, fd_grad(x, loss)) < 1e-6);
    CHECK(rel_error(dw, fd_grad(w, loss)) < 1e-6);
    CHECK(rel_error(db, fd_grad(b, loss)) < 1e-6);
}

TEST_CASE("activation forms and gradients") {
    Tensor<double> x({3});
    x[0] = -1.0;
    x[1] = 0.0;
    x[2] = 2.0;
    const auto y = relu_forward(x);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.0);
    CHECK(y[2] == 2.0);
    // Subgradient at 0 is 0.
    Tensor<double> up({3});
    up[0] = up[1] = up[2] = 1.0;
    const auto dx0 = relu_backward(x, up);
    CHECK(dx0[0] == 0.0);
    CHECK(dx0[1] == 0.0);
    CHECK(dx0[2] == 1.0);

    Tensor<double> half({1});
    half[0] = 0.5;
    CHECK(sinpi_forward(half)[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(cospi_forward(half)[0] == doctest::Approx(0.0));

    Rng rng(4ULL);
    auto xr = random_tensor({17}, rng);
    // Keep relu probes away from the kink where FD is invalid.
    for (size_t i = 0; i < xr.size(); ++i)
        if (std::abs(xr[i]) < 0.05) xr[i] += 0.1;
    const auto r = random_tensor({17}, rng);
    {
        auto loss = [&] { return probe_loss(relu_forward(xr), r); };
        CHECK(rel_error(relu_backward(xr, r), fd_grad(xr, loss)) < 1e-6);
    }
    {
        auto loss = [&] { return probe_loss(sinpi_forward(xr), r); };
        CHECK(rel_error(sinpi_backward(xr, r), fd_grad(xr, loss)) < 1e-6);
    }
    {
        auto loss = [&] { return probe_loss(cospi_forward(xr), r); };
        CHECK(rel_error(cospi_backward(xr, r), fd_grad(xr, loss)) < 1e-6);
    }
}

TEST_CASE("adam zero gradient leaves parameters untouched") {
    Rng rng(5ULL);
    auto p = random_tensor({7}, rng);
    const auto keep = p;
    Tensor<double> g = Tensor<double>::zeros_like(p);
    AdamState<double> st;
    adam_update(p, g, st, 1e-3, "p");
    for (size_t i = 0; i < p.size(); ++i) CHECK(p[i] == keep[i]);
}

TEST_CASE("adam first step is a bias-corrected lr move") {
    Tensor<double> p({1});
    p[0] = 1.0;
    Tensor<double> g({1});
    g[0] = 1.0;
    AdamState<double> st;
    const double lr = 0.01;
    adam_update(p, g, st, lr, "p");
    CHECK(std::abs((1.0 - p[0]) - lr) < 1e-9);  // mhat/sqrt(vhat) = 1 at step 1
}

TEST_CASE("adam drives a quadratic toward zero") {
    Tensor<double> p({1});
    p[0] = 1.0;
    AdamState<double> st;
    for (int i = 0; i < 100; ++i) {
        Tensor<double> g({1});
        g[0] = 2.0 * p[0];
        adam_update(p, g, st, 0.1, "p");
    }
    CHECK(std::abs(p[0]) < 0.5);
}

TEST_CASE("adam rejects non-finite gradients by name") {
    Tensor<double> p({2});
    Tensor<double> g({2});
    g[1] = std::numeric_limits<double>::quiet_NaN();
    AdamState<double> st;
    CHECK_THROWS_WITH_AS(adam_update(p, g, st, 1e-3, "decoder.layer0.w"),
                         doctest::Contains("decoder.layer0.w"), NumericError);
}
