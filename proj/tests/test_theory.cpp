#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "xsa/theory.hpp"

using xsa::Layer;
using xsa::Matrix;
using xsa::Network;
using xsa::Tensor;

namespace {

// random dense layer with strictly admissible columns (p_k > |n_k| > 0)
Layer admissible_layer(std::size_t out_n, std::size_t in_n, xsa::Rng& rng, Tensor& activations) {
    activations = Tensor({in_n});
    for (double& v : activations.values()) v = rng.uniform(0.1, 1.0);
    Tensor w({out_n, in_n});
    for (double& v : w.values()) v = rng.gaussian();
    for (std::size_t k = 0; k < out_n; ++k) {
        // positive anchor plus a guaranteed mixed sign
        w[k * in_n] = std::abs(w[k * in_n]) + 0.3;
        if (in_n > 1 && w[k * in_n + 1] > 0.0) w[k * in_n + 1] = -0.2 * w[k * in_n + 1] - 0.01;
        for (int guard = 0; guard < 400; ++guard) {
            double p = 0.0, n = 0.0;
            for (std::size_t j = 0; j < in_n; ++j) {
                const double c = activations[j] * w[k * in_n + j];
                (c > 0.0 ? p : n) += c;
            }
            if (p > 0.0 && -n < 0.98 * p) break;
            for (std::size_t j = 0; j < in_n; ++j)
                if (w[k * in_n + j] < 0.0) w[k * in_n + j] *= 0.7;
        }
    }
    return Layer::dense(std::move(w));
}

}  // namespace

TEST_CASE("explicit layer matrix: hand case at gamma 0") {
    // a = [1,1], weights (out x in) [[1,-0.5],[1,1]]; column 0 denominator
    // 1 - 0.5 = 0.5, entries [2, -1]
    Layer layer = Layer::dense(Tensor({2, 2}, {1, -0.5, 1, 1}));
    Tensor a({2}, {1, 1});
    Matrix m = xsa::explicit_layer_matrix(layer, a, 0.0);
    REQUIRE(m.rows() == 2);
    REQUIRE(m.cols() == 2);
    REQUIRE(m(0, 0) == Catch::Approx(2.0).margin(1e-12));
    REQUIRE(m(1, 0) == Catch::Approx(-1.0).margin(1e-12));
    REQUIRE(m(0, 0) + m(1, 0) == Catch::Approx(1.0).margin(1e-12));
    // column 1 is all-positive: [0.5, 0.5]
    REQUIRE(m(0, 1) == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(m(1, 1) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("explicit layer matrix: all-positive weights are gamma independent") {
    Layer layer = Layer::dense(Tensor({2, 3}, {1, 2, 0.5, 0.3, 0.4, 1.5}));
    Tensor a({3}, {0.5, 1.0, 0.2});
    Matrix m0 = xsa::explicit_layer_matrix(layer, a, 0.0);
    Matrix m5 = xsa::explicit_layer_matrix(layer, a, 5.0);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            REQUIRE(m0(i, j) == Catch::Approx(m5(i, j)).margin(1e-12));
    // columns are contribution fractions
    const double denom = 0.5 * 1 + 1.0 * 2 + 0.2 * 0.5;
    REQUIRE(m0(0, 0) == Catch::Approx(0.5 / denom).margin(1e-12));
}

TEST_CASE("explicit layer matrix: huge gamma reaches the z+ limit") {
    Layer layer = Layer::dense(Tensor({2, 2}, {1, -0.5, 1, 1}));
    Tensor a({2}, {1, 1});
    Matrix m = xsa::explicit_layer_matrix(layer, a, 1e6);
    REQUIRE(m(0, 0) == Catch::Approx(1.0).margin(1e-4));
    REQUIRE(m(1, 0) == Catch::Approx(0.0).margin(1e-4));
}

TEST_CASE("explicit layer matrix: conv agrees with the propagation step") {
    // unrolled conv matrix columns must reproduce lrp conv propagation
    xsa::Rng rng(55);
    Tensor w({2, 1, 3, 3});
    for (double& v : w.values()) v = rng.gaussian();
    Layer conv = Layer::conv2d(std::move(w), {}, 1, 1);
    Tensor a({1, 4, 4});
    for (double& v : a.values()) v = rng.uniform(0.05, 1.0);

    const double gamma = 0.3;
    Matrix m = xsa::explicit_layer_matrix(conv, a, gamma);
    REQUIRE(m.rows() == 16);
    REQUIRE(m.cols() == 2 * 4 * 4);

    Network net;
    net.input_shape = {1, 4, 4};
    net.output_dim = 32;
    net.layers.push_back(conv);
    net.layers.push_back(Layer::flatten());
    net.validate();
    const auto trace = xsa::forward(net, a);
    const auto plan = xsa::LrpRulePlan::uniform_gamma(net, gamma, 0.0);
    for (std::size_t k : {std::size_t(0), std::size_t(7), std::size_t(21), std::size_t(31)}) {
        std::vector<double> y(32, 0.0);
        y[k] = 1.0;
        Tensor prop = xsa::lrp_propagate(net, trace, y, plan);
        for (std::size_t i = 0; i < 16; ++i)
            REQUIRE(m(i, k) == Catch::Approx(prop[i]).margin(1e-10));
    }
}

TEST_CASE("analytic l1 formula arithmetic") {
    REQUIRE(xsa::analytic_column_l1(0.5, 0.0) == Catch::Approx(3.0));
    REQUIRE(xsa::analytic_column_l1(0.0, 0.0) == Catch::Approx(1.0));
    REQUIRE(xsa::analytic_column_l1(0.0, 7.3) == Catch::Approx(1.0));
}

TEST_CASE("analytic l1 equals the numeric operator norm on admissible layers") {
    xsa::Rng rng(56);
    for (int trial = 0; trial < 25; ++trial) {
        Tensor a;
        Layer layer = admissible_layer(2 + rng.below(49), 2 + rng.below(10), rng, a);
        const double gamma = rng.uniform(0.0, 2.0);
        auto report = xsa::analytic_l1_norm(layer, a, gamma);
        REQUIRE(report.saturated.empty());
        REQUIRE(report.inactive.empty());
        REQUIRE(report.c >= 0.0);
        REQUIRE(report.c < 1.0);
        REQUIRE(report.analytic_l1 == Catch::Approx(report.numeric_l1).margin(1e-8));
    }
}

TEST_CASE("analytic l1: no admissible column is an error") {
    Layer layer = Layer::dense(Tensor({1, 2}, {-1.0, -2.0}));
    Tensor a({2}, {1.0, 1.0});
    REQUIRE_THROWS_AS(xsa::analytic_l1_norm(layer, a, 0.1), xsa::Error);
}

TEST_CASE("gamma monotonicity: all-positive layer is constant") {
    Layer layer = Layer::dense(Tensor({2, 3}, {1, 2, 0.5, 0.3, 0.4, 1.5}));
    Tensor a({3}, {0.5, 1.0, 0.2});
    auto report = xsa::gamma_monotonicity_check(layer, a, {0.0, 0.25, 1.0, 10.0});
    REQUIRE(report.all_ok());
    for (std::size_t i = 1; i < report.l1_norms.size(); ++i)
        REQUIRE(report.l1_norms[i] == Catch::Approx(report.l1_norms[0]).margin(1e-12));
}

TEST_CASE("gamma monotonicity: mixed-sign hand layer strictly decreases") {
    Layer layer = Layer::dense(Tensor({2, 2}, {1, -0.5, 1, 1}));
    Tensor a({2}, {1, 1});
    auto report = xsa::gamma_monotonicity_check(layer, a, {0.0, 0.25, 1.0, 10.0});
    REQUIRE(report.all_ok());
    for (std::size_t i = 1; i < report.l1_norms.size(); ++i)
        REQUIRE(report.l1_norms[i] < report.l1_norms[i - 1]);
    // the negative entry of column 0 shrinks in magnitude
    Matrix g0 = xsa::explicit_layer_matrix(layer, a, 0.0);
    Matrix g1 = xsa::explicit_layer_matrix(layer, a, 1.0);
    REQUIRE(std::abs(g1(1, 0)) < std::abs(g0(1, 0)));
}

TEST_CASE("gamma monotonicity: randomized property run has zero violations") {
    xsa::Rng rng(57);
    const std::vector<double> gammas{0.0, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 10.0};
    for (int trial = 0; trial < 100; ++trial) {
        Tensor a;
        Layer layer = admissible_layer(2 + rng.below(8), 2 + rng.below(8), rng, a);
        auto report = xsa::gamma_monotonicity_check(layer, a, gammas);
        if (!report.all_ok()) {
            INFO("violation: " << (report.counterexample ? report.counterexample->what : ""));
        }
        REQUIRE(report.entrywise_ok);
        REQUIRE(report.l1_nonincreasing);
        REQUIRE(report.argmax_constant);
    }
}

TEST_CASE("gamma limit: operator norm approaches 1") {
    xsa::Rng rng(58);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor a;
        Layer layer = admissible_layer(4 + rng.below(20), 3 + rng.below(8), rng, a);
        auto report = xsa::analytic_l1_norm(layer, a, 1e6);
        if (report.c < 0.99) {
            REQUIRE(report.analytic_l1 == Catch::Approx(1.0).margin(1e-4));
            REQUIRE(report.numeric_l1 == Catch::Approx(1.0).margin(1e-4));
        }
    }
}

TEST_CASE("network bound: single layer collapses to its analytic norm") {
    Network net;
    net.input_shape = {3};
    net.output_dim = 2;
    net.layers.push_back(Layer::dense(Tensor({2, 3}, {0.8, -0.2, 0.5, 0.4, 0.6, -0.1})));
    net.validate();
    const Tensor x({3}, {0.5, 0.8, 0.9});
    auto report = xsa::network_bound_report(net, x, 0.2);
    REQUIRE(report.per_layer.size() == 1);
    auto layer_report = xsa::analytic_l1_norm(net.layers[0], x, 0.2);
    REQUIRE(report.product_bound == Catch::Approx(layer_report.analytic_l1).margin(1e-12));
    REQUIRE(report.bound_holds);
}

TEST_CASE("network bound: deep all-positive net has bound 1") {
    Network net;
    net.input_shape = {3};
    net.output_dim = 2;
    net.layers.push_back(Layer::dense(Tensor({4, 3}, {0.5, 0.2, 0.3, 0.1, 0.6, 0.2,
                                                      0.4, 0.3, 0.2, 0.2, 0.2, 0.5})));
    net.layers.push_back(Layer::relu());
    net.layers.push_back(Layer::dense(Tensor({2, 4}, {0.3, 0.4, 0.2, 0.1, 0.5, 0.1, 0.2, 0.2})));
    net.validate();
    const Tensor x({3}, {1.0, 0.5, 0.7});
    auto report = xsa::network_bound_report(net, x, 0.5);
    REQUIRE(report.product_bound == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(report.max_realized <= 1.0 + 1e-9);
    REQUIRE(report.bound_holds);
}

TEST_CASE("network bound: full chain of inequalities on an admissible net") {
    // dense(4->5) relu dense(5->3), crafted so every column (including the
    // logit layer's) is admissible at the probe point
    xsa::Rng rng(59);
    Network net;
    net.input_shape = {4};
    net.output_dim = 3;
    Tensor a_probe({4}, {0.9, 0.6, 0.8, 0.7});

    Tensor w1({5, 4});
    for (double& v : w1.values()) v = rng.uniform(-0.25, 1.0);
    net.layers.push_back(Layer::dense(std::move(w1)));
    net.layers.push_back(Layer::relu());
    Tensor w2({3, 5});
    for (double& v : w2.values()) v = rng.uniform(-0.25, 1.0);
    net.layers.push_back(Layer::dense(std::move(w2)));
    net.validate();

    const double gamma = 0.15;
    const auto trace = xsa::forward(net, a_probe);
    for (std::size_t li : {std::size_t(0), std::size_t(2)}) {
        const auto stats = xsa::layer_column_stats(net.layers[li], trace.layer_input(li));
        for (std::size_t k = 0; k < stats.p.size(); ++k) {
            REQUIRE(stats.p[k] > 0.0);
            REQUIRE(-stats.n[k] < stats.p[k]);
        }
    }

    Matrix m1 = xsa::explicit_layer_matrix(net.layers[0], trace.layer_input(0), gamma);
    Matrix m2 = xsa::explicit_layer_matrix(net.layers[2], trace.layer_input(2), gamma);
    Matrix chain = xsa::matmul(m1, m2);

    const double numeric_full = xsa::l1_operator_norm(chain);
    const double numeric_product =
        xsa::l1_operator_norm(m1) * xsa::l1_operator_norm(m2);
    const double analytic_product =
        xsa::analytic_l1_norm(net.layers[0], trace.layer_input(0), gamma, false).analytic_l1 *
        xsa::analytic_l1_norm(net.layers[2], trace.layer_input(2), gamma, false).analytic_l1;

    auto report = xsa::network_bound_report(net, a_probe, gamma, 0.0);
    REQUIRE(report.max_realized <= numeric_full * (1 + 1e-9));
    REQUIRE(numeric_full <= numeric_product * (1 + 1e-9));
    REQUIRE(numeric_product <= analytic_product * (1 + 1e-9));
    REQUIRE(report.product_bound == Catch::Approx(analytic_product).margin(1e-9));
    REQUIRE(report.bound_holds);
}
