#include <doctest.h>

#include "madf/gradcheck.hpp"
#include "madf/ops.hpp"
#include "oracles.hpp"

using namespace madf;

TEST_CASE("conv2d scalar product") {
    Graph<double> g;
    auto x = g.leaf(Tensor4<double>::scalar(3.0), false);
    auto w = g.leaf(Tensor4<double>::scalar(2.0), false);
    auto y = conv2d(g, x, w, ConvSpec{1, 1, 0, 1, 1});
    CHECK(y->value.data[0] == 6.0);
}

TEST_CASE("conv2d centered delta kernel is the identity") {
    Graph<double> g;
    auto x = g.leaf(oracle::random_tensor<double>(2, 3, 6, 7, 1), false);
    Tensor4<double> delta(3, 3, 3, 3);
    for (int c = 0; c < 3; ++c) delta.at(c, c, 1, 1) = 1.0;
    auto y = conv2d(g, x, g.constant(delta), ConvSpec{3, 1, 1, 3, 3});
    CHECK(oracle::max_abs_diff(y->value, x->value) == 0.0);
}

TEST_CASE("conv2d matches the sliding-window oracle") {
    ConvSpec sp{3, 2, 1, 2, 3};
    auto x = oracle::random_tensor<double>(1, 2, 5, 5, 2);
    auto w = oracle::random_tensor<double>(3, 2, 3, 3, 3);
    Graph<double> g;
    auto y = conv2d(g, g.constant(x), g.constant(w), sp);
    CHECK(oracle::max_abs_diff(y->value, oracle::conv2d(x, w, sp)) <= 1e-12);
}

TEST_CASE("conv2d random configurations vs oracle") {
    Rng rng(99);
    for (int trial = 0; trial < 12; ++trial) {
        const int k = 1 + 2 * rng.uniform_int(0, 2);
        ConvSpec sp{k, rng.uniform_int(1, 2), rng.uniform_int(0, k / 2 + 1),
                    rng.uniform_int(1, 3), rng.uniform_int(1, 4)};
        const int h = k + rng.uniform_int(2, 6), w = k + rng.uniform_int(2, 6);
        auto x = oracle::random_tensor<double>(rng.uniform_int(1, 2), sp.c_in, h, w,
                                               100 + trial);
        auto wt = oracle::random_tensor<double>(sp.c_out, sp.c_in, k, k, 200 + trial);
        Graph<double> g;
        auto y = conv2d(g, g.constant(x), g.constant(wt), sp);
        CHECK(oracle::max_abs_diff(y->value, oracle::conv2d(x, wt, sp)) <= 1e-12);
    }
}

TEST_CASE("conv2d dimension and numeric errors") {
    Graph<double> g;
    auto x = g.constant(Tensor4<double>(1, 2, 4, 4));
    auto w = g.constant(Tensor4<double>(3, 2, 3, 3));
    CHECK_THROWS_AS(conv2d(g, x, w, ConvSpec{3, 1, 1, 3, 3}), ConfigError);
    Tensor4<double> bad(1, 2, 4, 4);
    bad.data[5] = std::nan("");
    auto xb = g.constant(std::move(bad));
    CHECK_THROWS_AS(conv2d(g, xb, w, ConvSpec{3, 1, 1, 2, 3}), NumericError);
}

TEST_CASE("conv2d_transpose single input cell scatter") {
    ConvSpec sp{4, 2, 1, 1, 1};
    Tensor4<double> x = Tensor4<double>::scalar(1.0);
    Tensor4<double> w = Tensor4<double>::full(1, 1, 4, 4, 1.0);
    Graph<double> g;
    auto y = conv2d_transpose(g, g.constant(x), g.constant(w), sp);
    CHECK(y->value.h == 2);
    CHECK(y->value.w == 2);
    CHECK(oracle::max_abs_diff(y->value, oracle::conv2d_transpose(x, w, sp)) == 0.0);
}

TEST_CASE("conv2d_transpose zeros stay zero") {
    ConvSpec sp{4, 2, 1, 3, 2};
    Graph<double> g;
    auto y = conv2d_transpose(g, g.constant(Tensor4<double>(2, 3, 3, 3)),
                              g.constant(oracle::random_tensor<double>(3, 2, 4, 4, 4)), sp);
    for (const double v : y->value.data) CHECK(v == 0.0);
}

TEST_CASE("conv2d_transpose matches the scatter-add oracle") {
    ConvSpec sp{4, 2, 1, 2, 3};
    auto x = oracle::random_tensor<double>(2, 2, 4, 5, 5);
    auto w = oracle::random_tensor<double>(2, 3, 4, 4, 6);
    Graph<double> g;
    auto y = conv2d_transpose(g, g.constant(x), g.constant(w), sp);
    CHECK(oracle::max_abs_diff(y->value, oracle::conv2d_transpose(x, w, sp)) <= 1e-12);
}

TEST_CASE("transpose forward equals conv2d backward-data") {
    // d/dt <conv2d(t, w), x> equals conv2d_transpose(x, w): the same
    // (2, 3, 4, 4) weight read as (c_out=2, c_in=3) by the conv.
    ConvSpec sp{4, 2, 1, 2, 3};  // transpose: 2 -> 3 channels
    auto x = oracle::random_tensor<double>(1, 2, 4, 4, 7);
    auto w = oracle::random_tensor<double>(2, 3, 4, 4, 8);
    Graph<double> g;
    auto tconv = conv2d_transpose(g, g.constant(x), g.constant(w), sp);

    auto t = g.leaf(Tensor4<double>(1, 3, tconv->value.h, tconv->value.w), true);
    auto z = conv2d(g, t, g.constant(w), ConvSpec{4, 2, 1, 3, 2});
    auto s = sum_all(g, mul(g, z, g.constant(x)));
    g.backward(s);
    CHECK(oracle::max_abs_diff(t->grad, tconv->value) <= 1e-12);
}

TEST_CASE("activation values and gradient at a smooth point") {
    Graph<double> g;
    Tensor4<double> x(1, 1, 1, 3);
    x.data = {-1.5, -1.0, 2.0};
    auto leaf = g.leaf(x, true);
    auto r = relu(g, leaf);
    CHECK(r->value.data[0] == 0.0);
    auto l = leaky_relu(g, leaf);
    CHECK(l->value.data[1] == doctest::Approx(-0.2).epsilon(1e-15));

    auto report = grad_check({x}, [](Graph<double>& gg, const std::vector<Var<double>>& in) {
        return leaky_relu(gg, in[0]);
    });
    CHECK(report.max_rel_err < 1e-6);
    // analytic slope at x = 2.0 is exactly 1
    auto s = sum_all(g, l);
    g.backward(s);
    CHECK(leaf->grad.data[2] == 1.0);
    CHECK(leaf->grad.data[1] == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("concat_channels dims, gradient split and slice-back") {
    Graph<double> g;
    auto a = g.leaf(oracle::random_tensor<double>(1, 2, 4, 4, 9), true);
    auto b = g.leaf(Tensor4<double>(1, 3, 4, 4), true);
    auto y = concat_channels(g, a, b);
    CHECK(y->value.c == 5);
    auto s = sum_all(g, y);
    g.backward(s);
    for (const double v : a->grad.data) CHECK(v == 1.0);

    // slice-back equality on a random pair
    auto bb = oracle::random_tensor<double>(1, 3, 4, 4, 10);
    Graph<double> g2;
    auto y2 = concat_channels(g2, g2.constant(a->value), g2.constant(bb));
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 16; ++i)
            CHECK(y2->value.data[c * 16 + i] == a->value.data[c * 16 + i]);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 16; ++i)
            CHECK(y2->value.data[(2 + c) * 16 + i] == bb.data[c * 16 + i]);

    CHECK_THROWS_AS(concat_channels(g, a, g.constant(Tensor4<double>(1, 1, 3, 4))),
                    ConfigError);
}

TEST_CASE("upsample_nearest2x replication and block-sum gradient") {
    Graph<double> g;
    auto x = g.leaf(Tensor4<double>::scalar(5.0), true);
    auto y = upsample_nearest2x(g, x);
    CHECK(y->value.h == 2);
    for (const double v : y->value.data) CHECK(v == 5.0);
    g.backward(sum_all(g, y));
    CHECK(x->grad.data[0] == 4.0);

    // index-mapping oracle on a random instance
    auto xr = oracle::random_tensor<double>(2, 3, 3, 4, 11);
    Graph<double> g2;
    auto yr = upsample_nearest2x(g2, g2.constant(xr));
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 3; ++c)
            for (int yy = 0; yy < 6; ++yy)
                for (int xx = 0; xx < 8; ++xx)
                    CHECK(yr->value.at(n, c, yy, xx) == xr.at(n, c, yy / 2, xx / 2));
}

TEST_CASE("linearity of conv2d in its input") {
    ConvSpec sp{3, 1, 1, 2, 3};
    auto x = oracle::random_tensor<double>(1, 2, 5, 5, 12);
    auto y = oracle::random_tensor<double>(1, 2, 5, 5, 13);
    auto w = oracle::random_tensor<double>(3, 2, 3, 3, 14);
    const double alpha = 0.37, beta = -1.25;
    Tensor4<double> mix(1, 2, 5, 5);
    for (std::size_t i = 0; i < mix.numel(); ++i)
        mix.data[i] = alpha * x.data[i] + beta * y.data[i];
    Graph<double> g;
    auto wc = g.constant(w);
    auto lhs = conv2d(g, g.constant(mix), wc, sp);
    auto cx = conv2d(g, g.constant(x), wc, sp);
    auto cy = conv2d(g, g.constant(y), wc, sp);
    double worst = 0.0;
    for (std::size_t i = 0; i < lhs->value.numel(); ++i)
        worst = std::max(worst, std::abs(lhs->value.data[i] - alpha * cx->value.data[i] -
                                         beta * cy->value.data[i]));
    CHECK(worst <= 1e-10);
}

TEST_CASE("adjointness of conv2d and its data-backward") {
    ConvSpec sp{3, 2, 1, 2, 3};
    auto x = oracle::random_tensor<double>(1, 2, 6, 6, 15);
    auto w = oracle::random_tensor<double>(3, 2, 3, 3, 16);
    Graph<double> g;
    auto xl = g.leaf(x, true);
    auto y = conv2d(g, xl, g.constant(w), sp);
    auto gproj = oracle::random_tensor<double>(1, 3, y->value.h, y->value.w, 17);
    auto s = sum_all(g, mul(g, y, g.constant(gproj)));
    g.backward(s);
    // <conv(x), g> == <x, conv_backward_data(g)>
    double lhs = 0.0;
    for (std::size_t i = 0; i < y->value.numel(); ++i)
        lhs += y->value.data[i] * gproj.data[i];
    double rhs = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) rhs += x.data[i] * xl->grad.data[i];
    CHECK(std::abs(lhs - rhs) <= 1e-10);
}

TEST_CASE("determinism of forward results") {
    ConvSpec sp{5, 2, 2, 3, 4};
    auto x = oracle::random_tensor<double>(2, 3, 8, 8, 18);
    auto w = oracle::random_tensor<double>(4, 3, 5, 5, 19);
    Graph<double> g1, g2;
    auto y1 = conv2d(g1, g1.constant(x), g1.constant(w), sp);
    auto y2 = conv2d(g2, g2.constant(x), g2.constant(w), sp);
    CHECK(y1->value.data == y2->value.data);
}

TEST_CASE("grad_check across random shapes") {
    // conv2d and transpose over random shapes, plus pooling; at least 20
    // shapes all told when combined with the activation/concat checks.
    Rng rng(4242);
    for (int trial = 0; trial < 8; ++trial) {
        const int k = 1 + 2 * rng.uniform_int(0, 1);
        ConvSpec sp{k, rng.uniform_int(1, 2), rng.uniform_int(0, 1), rng.uniform_int(1, 2),
                    rng.uniform_int(1, 2)};
        const int h = k + rng.uniform_int(1, 3), w = k + rng.uniform_int(1, 3);
        auto x = oracle::random_tensor<double>(1, sp.c_in, h, w, 300 + trial);
        auto wt = oracle::random_tensor<double>(sp.c_out, sp.c_in, k, k, 400 + trial);
        auto rep = grad_check({x, wt},
                              [sp](Graph<double>& g, const std::vector<Var<double>>& in) {
                                  return conv2d(g, in[0], in[1], sp);
                              });
        CHECK(rep.max_rel_err < 1e-5);
    }
    for (int trial = 0; trial < 6; ++trial) {
        ConvSpec sp{rng.uniform_int(2, 4), rng.uniform_int(1, 2), rng.uniform_int(0, 1),
                    rng.uniform_int(1, 2), rng.uniform_int(1, 2)};
        auto x = oracle::random_tensor<double>(1, sp.c_in, rng.uniform_int(2, 4),
                                               rng.uniform_int(2, 4), 500 + trial);
        auto wt =
            oracle::random_tensor<double>(sp.c_in, sp.c_out, sp.k, sp.k, 600 + trial);
        auto rep = grad_check({x, wt},
                              [sp](Graph<double>& g, const std::vector<Var<double>>& in) {
                                  return conv2d_transpose(g, in[0], in[1], sp);
                              });
        CHECK(rep.max_rel_err < 1e-5);
    }
    for (int trial = 0; trial < 6; ++trial) {
        auto x = oracle::random_tensor<double>(rng.uniform_int(1, 2), rng.uniform_int(1, 3),
                                               2 * rng.uniform_int(1, 3),
                                               2 * rng.uniform_int(1, 3), 700 + trial);
        auto rep = grad_check({x}, [](Graph<double>& g, const std::vector<Var<double>>& in) {
            return avg_pool2x2(g, upsample_nearest2x(g, in[0]));
        });
        CHECK(rep.max_rel_err < 1e-5);
    }
}
