#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "xsa/explainers.hpp"
#include "xsa/network.hpp"

using xsa::Attribution;
using xsa::Layer;
using xsa::LrpRule;
using xsa::LrpRulePlan;
using xsa::Network;
using xsa::Tensor;

namespace {

Network linear_net(std::vector<double> w, std::size_t out, std::size_t in) {
    Network net;
    net.input_shape = {in};
    net.output_dim = out;
    net.layers.push_back(Layer::dense(Tensor({out, in}, std::move(w))));
    net.validate();
    return net;
}

// 4 -> 3 -> 2 bias-free ReLU net whose preactivations are positive at probe_x
Network relu_net_no_bias() {
    Network net;
    net.input_shape = {4};
    net.output_dim = 2;
    net.layers.push_back(Layer::dense(
        Tensor({3, 4}, {0.5, -0.2, 0.3, 0.1, 0.2, 0.4, -0.1, 0.3, -0.1, 0.2, 0.5, 0.2})));
    net.layers.push_back(Layer::relu());
    net.layers.push_back(Layer::dense(Tensor({2, 3}, {0.6, -0.3, 0.2, -0.2, 0.5, 0.4})));
    net.validate();
    return net;
}

const Tensor probe_x({4}, {1.0, 0.8, 0.9, 1.1});

// d=8 toy ReLU net for Shapley oracle comparisons
Network toy8_net() {
    xsa::Rng rng(808);
    Network net;
    net.input_shape = {8};
    net.output_dim = 3;
    Tensor w1({6, 8});
    for (double& v : w1.values()) v = 0.5 * rng.gaussian();
    net.layers.push_back(Layer::dense(std::move(w1), Tensor({6})));
    net.layers.push_back(Layer::relu());
    Tensor w2({3, 6});
    for (double& v : w2.values()) v = 0.5 * rng.gaussian();
    net.layers.push_back(Layer::dense(std::move(w2)));
    net.validate();
    return net;
}

// Exhaustive Shapley values over all 2^d coalitions.
std::vector<double> exhaustive_shapley(const Network& net, const Tensor& x, std::size_t target,
                                       double baseline) {
    const std::size_t d = x.size();
    const std::size_t masks = std::size_t(1) << d;
    std::vector<double> value(masks);
    Tensor probe(x.shape());
    for (std::size_t mask = 0; mask < masks; ++mask) {
        for (std::size_t i = 0; i < d; ++i)
            probe[i] = (mask >> i) & 1 ? x[i] : baseline;
        value[mask] = xsa::forward(net, probe).output()[target];
    }
    std::vector<double> fact(d + 1, 1.0);
    for (std::size_t i = 1; i <= d; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
    std::vector<double> phi(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t mask = 0; mask < masks; ++mask) {
            if ((mask >> i) & 1) continue;
            const int s = __builtin_popcountll(mask);
            const double weight = fact[s] * fact[d - s - 1] / fact[d];
            phi[i] += weight * (value[mask | (std::size_t(1) << i)] - value[mask]);
        }
    }
    return phi;
}

}  // namespace

TEST_CASE("gradient x input: linear model and zero input") {
    Network net = linear_net({2, -1, 0.5, 3}, 2, 2);
    Tensor x({2}, {0.7, -0.4});
    auto a0 = xsa::gradient_x_input(net, x, 0);
    REQUIRE(a0.values[0] == Catch::Approx(2 * 0.7).margin(1e-15));
    REQUIRE(a0.values[1] == Catch::Approx(-1 * -0.4).margin(1e-15));

    Tensor zero({2});
    auto az = xsa::gradient_x_input(net, zero, 1);
    REQUIRE(az.values[0] == 0.0);
    REQUIRE(az.values[1] == 0.0);
}

TEST_CASE("lrp: hand-evaluated mixed-sign layer at gamma 0.25") {
    // Single dense layer, a = [1, 2, 0.5], weights (out x in):
    //   output 0: [0.3, -0.2, 0.5]   output 1: [-0.1, 0.4, -0.3]
    // rho(w) = w + 0.25 w+ per entry. Column 0: contributions
    // [0.375, -0.4, 0.3125], denominator 0.2875 = 23/80, entries
    // [30/23, -32/23, 25/23]. Column 1: [-0.1, 1.0, -0.15]/0.75.
    Network net = linear_net({0.3, -0.2, 0.5, -0.1, 0.4, -0.3}, 2, 3);
    const Tensor a({3}, {1.0, 2.0, 0.5});

    LrpRulePlan plan = LrpRulePlan::uniform_gamma(net, 0.25, 0.0);
    const auto trace = xsa::forward(net, a);
    const double z0 = 0.3 - 0.4 + 0.25;   // 0.15
    const double z1 = -0.1 + 0.8 - 0.15;  // 0.55
    REQUIRE(trace.output()[0] == Catch::Approx(z0).margin(1e-15));
    REQUIRE(trace.output()[1] == Catch::Approx(z1).margin(1e-15));

    const double col0[3] = {30.0 / 23.0, -32.0 / 23.0, 25.0 / 23.0};
    const double col1[3] = {-0.1 / 0.75, 1.0 / 0.75, -0.2};
    auto e0 = xsa::lrp(net, trace, 0, plan);
    auto e1 = xsa::lrp(net, trace, 1, plan);
    for (std::size_t j = 0; j < 3; ++j) {
        REQUIRE(e0.values[j] == Catch::Approx(col0[j] * z0).margin(1e-12));
        REQUIRE(e1.values[j] == Catch::Approx(col1[j] * z1).margin(1e-12));
    }
}

TEST_CASE("lrp: single positive dense layer is gamma-independent") {
    Network net = linear_net({1, 2, 3, 0.5, 0.25, 1}, 2, 3);
    const Tensor a({3}, {0.4, 1.0, 0.2});
    const auto trace = xsa::forward(net, a);
    Attribution at_zero = xsa::lrp(net, trace, 0, LrpRulePlan::uniform_gamma(net, 0.0, 0.0));
    Attribution at_two = xsa::lrp(net, trace, 0, LrpRulePlan::uniform_gamma(net, 2.0, 0.0));
    for (std::size_t j = 0; j < 3; ++j)
        REQUIRE(at_zero.values[j] == Catch::Approx(at_two.values[j]).margin(1e-12));
    // attribution proportional to a_j w_jk
    const double denom = 0.4 * 1 + 1.0 * 2 + 0.2 * 3;
    REQUIRE(at_zero.values[0] == Catch::Approx(0.4 * 1 / denom * denom).margin(1e-12));
}

TEST_CASE("lrp: conservation through a positive two-layer net") {
    Network net;
    net.input_shape = {3};
    net.output_dim = 2;
    net.layers.push_back(Layer::dense(Tensor({4, 3}, {1, 0.5, 0.2, 0.3, 1, 0.1, 0.7, 0.2, 1, 0.4, 0.4, 0.4})));
    net.layers.push_back(Layer::relu());
    net.layers.push_back(Layer::dense(Tensor({2, 4}, {1, 2, 0.5, 0.1, 0.3, 0.7, 1.5, 0.9})));
    net.validate();
    const Tensor x({3}, {0.5, 1.0, 0.25});
    const auto trace = xsa::forward(net, x);
    LrpRulePlan plan = LrpRulePlan::uniform_gamma(net, 0.3, 0.0);
    for (std::size_t j = 0; j < 2; ++j) {
        auto e = xsa::lrp(net, trace, j, plan);
        REQUIRE(xsa::sum(e.values.values()) ==
                Catch::Approx(trace.output()[j]).margin(1e-6 * std::abs(trace.output()[j])));
    }
}

TEST_CASE("lrp: conservation on random bias-free relu nets for all targets") {
    xsa::Rng rng(61);
    for (int trial = 0; trial < 10; ++trial) {
        Network net;
        net.input_shape = {5};
        net.output_dim = 3;
        Tensor w1({6, 5});
        // positively skewed weights keep denominators alive
        for (double& v : w1.values()) v = rng.uniform(-0.3, 1.0);
        net.layers.push_back(Layer::dense(std::move(w1)));
        net.layers.push_back(Layer::relu());
        Tensor w2({3, 6});
        for (double& v : w2.values()) v = rng.uniform(-0.3, 1.0);
        net.layers.push_back(Layer::dense(std::move(w2)));
        net.validate();

        Tensor x({5});
        for (double& v : x.values()) v = rng.uniform(0.1, 1.0);
        const auto trace = xsa::forward(net, x);
        LrpRulePlan plan = LrpRulePlan::uniform_gamma(net, rng.uniform(0.0, 1.0), 0.0);
        for (std::size_t j = 0; j < 3; ++j) {
            auto e = xsa::lrp(net, trace, j, plan);
            const double zj = trace.output()[j];
            REQUIRE(xsa::sum(e.values.values()) ==
                    Catch::Approx(zj).margin(1e-4 * std::max(1e-6, std::abs(zj))));
        }
    }
}

TEST_CASE("lrp: gamma to infinity matches the z+ rule") {
    Network net = relu_net_no_bias();
    const auto trace = xsa::forward(net, probe_x);
    LrpRulePlan plan = LrpRulePlan::uniform_gamma(net, 1e6, 0.0);
    auto e = xsa::lrp(net, trace, 0, plan);

    // z+ reference: redistribute through positive contributions only
    const auto zplus_step = [](const Layer& layer, const Tensor& a, const Tensor& r) {
        const std::size_t out_n = layer.weights.extent(0), in_n = layer.weights.extent(1);
        Tensor out(a.shape());
        for (std::size_t k = 0; k < out_n; ++k) {
            double p = 0.0;
            for (std::size_t j = 0; j < in_n; ++j)
                p += std::max(a[j] * layer.weights[k * in_n + j], 0.0);
            if (p == 0.0) continue;
            for (std::size_t j = 0; j < in_n; ++j)
                out[j] += std::max(a[j] * layer.weights[k * in_n + j], 0.0) / p * r[k];
        }
        return out;
    };
    Tensor r({2});
    r[0] = trace.output()[0];
    Tensor expected = zplus_step(net.layers[2], trace.layer_input(2), r);
    expected = zplus_step(net.layers[0], trace.layer_input(0), expected);
    for (std::size_t j = 0; j < 4; ++j)
        REQUIRE(e.values[j] == Catch::Approx(expected[j]).margin(1e-4));
}

TEST_CASE("lrp: gamma zero equals gradient x input on a bias-free relu net") {
    Network net = relu_net_no_bias();
    const auto trace = xsa::forward(net, probe_x);
    // fixture sanity: every hidden preactivation strictly positive
    for (double v : trace.layer_output(0).values()) REQUIRE(v > 0.0);
    LrpRulePlan plan = LrpRulePlan::uniform_gamma(net, 0.0, 0.0);
    for (std::size_t j = 0; j < 2; ++j) {
        auto e = xsa::lrp(net, trace, j, plan);
        auto gxi = xsa::gradient_x_input(net, probe_x, j);
        for (std::size_t i = 0; i < 4; ++i)
            REQUIRE(e.values[i] == Catch::Approx(gxi.values[i]).margin(1e-8));
    }
}

TEST_CASE("lrp: z^B first layer conserves and needs bounds") {
    Network net;
    net.input_shape = {3};
    net.output_dim = 2;
    net.layers.push_back(Layer::dense(Tensor({2, 3}, {0.8, -0.4, 0.3, -0.2, 0.9, 0.1})));
    net.validate();
    const Tensor x({3}, {0.6, 0.2, 0.9});

    LrpRulePlan plan = LrpRulePlan::uniform_gamma(net, 0.0, 0.0);
    plan.rules[0] = LrpRule::ZB();
    REQUIRE_THROWS_AS(xsa::lrp(net, xsa::forward(net, x), 0, plan), xsa::InvalidInput);

    net.input_low = Tensor({3});
    net.input_high = Tensor({3});
    net.input_high.fill(1.0);
    const auto trace = xsa::forward(net, x);
    for (std::size_t j = 0; j < 2; ++j) {
        auto e = xsa::lrp(net, trace, j, plan);
        REQUIRE(xsa::sum(e.values.values()) ==
                Catch::Approx(trace.output()[j]).margin(1e-9));
    }
}

TEST_CASE("lrp: z^B may only sit on the first weighted layer") {
    Network net = relu_net_no_bias();
    net.input_low = Tensor({4});
    net.input_high = Tensor({4});
    net.input_high.fill(1.0);
    LrpRulePlan plan = LrpRulePlan::uniform_gamma(net, 0.1, 0.0);
    plan.rules[2] = LrpRule::ZB();
    REQUIRE_THROWS_AS(xsa::lrp(net, xsa::forward(net, probe_x), 0, plan), xsa::InvalidInput);
}

TEST_CASE("lrp: exactly zero denominator raises DegenerateNeuron") {
    Network net = linear_net({1.0, -1.0}, 1, 2);
    const Tensor x({2}, {1.0, 1.0});
    const auto trace = xsa::forward(net, x);
    LrpRulePlan plan = LrpRulePlan::uniform_gamma(net, 0.0, 0.0);
    std::vector<double> y{1.0};
    try {
        xsa::lrp_propagate(net, trace, y, plan);
        FAIL("expected DegenerateNeuron");
    } catch (const xsa::DegenerateNeuron& e) {
        REQUIRE(e.layer_index == 0);
        REQUIRE(e.neuron == 0);
    }
    // zero incoming relevance passes the dead column safely
    std::vector<double> zero{0.0};
    Tensor out = xsa::lrp_propagate(net, trace, zero, plan);
    REQUIRE(out[0] == 0.0);
    REQUIRE(out[1] == 0.0);
}

TEST_CASE("smoothgrad: zero noise equals the plain gradient exactly") {
    Network net = relu_net_no_bias();
    auto base = xsa::input_gradient(net, probe_x, 1);
    auto sg = xsa::smoothgrad(net, probe_x, 1, 0.0, 25, 99);
    for (std::size_t i = 0; i < 4; ++i) REQUIRE(sg.values[i] == base[i]);
}

TEST_CASE("smoothgrad: linear model is noise-invariant") {
    Network net = linear_net({1.5, -2.0, 0.25}, 1, 3);
    const Tensor x({3}, {0.3, 0.6, -0.2});
    auto sg = xsa::smoothgrad(net, x, 0, 0.5, 40, 7);
    REQUIRE(sg.values[0] == Catch::Approx(1.5).margin(1e-12));
    REQUIRE(sg.values[1] == Catch::Approx(-2.0).margin(1e-12));
    REQUIRE(sg.values[2] == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("smoothgrad: equals the mean of individually recomputed gradients") {
    Network net = relu_net_no_bias();
    const std::uint64_t seed = 4242;
    auto sg = xsa::smoothgrad(net, probe_x, 0, 0.1, 10, seed);

    Tensor mean({4});
    for (int i = 0; i < 10; ++i) {
        xsa::Rng rng(xsa::sub_seed(seed, static_cast<std::uint64_t>(i)));
        Tensor noisy = probe_x;
        for (double& v : noisy.values()) v += 0.1 * rng.gaussian();
        Tensor g = xsa::input_gradient(net, noisy, 0);
        for (std::size_t k = 0; k < 4; ++k) mean[k] += g[k];
    }
    for (std::size_t k = 0; k < 4; ++k)
        REQUIRE(sg.values[k] == Catch::Approx(mean[k] / 10.0).margin(1e-15));
}

TEST_CASE("smoothgrad: s to zero continuity") {
    Network net = relu_net_no_bias();
    auto base = xsa::input_gradient(net, probe_x, 0);
    auto sg = xsa::smoothgrad(net, probe_x, 0, 1e-8, 10, 5);
    for (std::size_t i = 0; i < 4; ++i)
        REQUIRE(sg.values[i] == Catch::Approx(base[i]).margin(1e-5));
}

TEST_CASE("integrated gradients: linear model is exact for any step count") {
    Network net = linear_net({1.5, -2.0, 0.25}, 1, 3);
    const Tensor x({3}, {0.3, 0.6, -0.2});
    Tensor baseline({3});
    for (int steps : {1, 7, 64}) {
        auto ig = xsa::integrated_gradients(net, x, 0, steps, baseline);
        REQUIRE(ig.values[0] == Catch::Approx(1.5 * 0.3).margin(1e-12));
        REQUIRE(ig.values[1] == Catch::Approx(-2.0 * 0.6).margin(1e-12));
        REQUIRE(ig.values[2] == Catch::Approx(0.25 * -0.2).margin(1e-12));
    }
}

TEST_CASE("integrated gradients: x equals baseline gives zero attribution") {
    Network net = relu_net_no_bias();
    auto ig = xsa::integrated_gradients(net, probe_x, 0, 16, probe_x);
    for (std::size_t i = 0; i < 4; ++i) REQUIRE(ig.values[i] == 0.0);
}

TEST_CASE("integrated gradients: completeness within 1% at 512 steps") {
    Network net = toy8_net();
    xsa::Rng rng(71);
    Tensor x({8});
    for (double& v : x.values()) v = rng.uniform(-1.0, 1.0);
    Tensor baseline({8});
    auto ig = xsa::integrated_gradients(net, x, 1, 512, baseline);
    const double zx = xsa::forward(net, x).output()[1];
    const double zb = xsa::forward(net, baseline).output()[1];
    const double total = xsa::sum(ig.values.values());
    REQUIRE(std::abs(total - (zx - zb)) <= 0.01 * std::max(1.0, std::abs(zx - zb)));
}

TEST_CASE("integrated gradients: doubling steps never worsens completeness") {
    Network net = toy8_net();
    xsa::Rng rng(72);
    Tensor x({8});
    for (double& v : x.values()) v = rng.uniform(-1.0, 1.0);
    Tensor baseline({8});
    const double zx = xsa::forward(net, x).output()[0];
    const double zb = xsa::forward(net, baseline).output()[0];
    double prev_err = -1.0;
    for (int steps : {16, 32, 64, 128, 256, 512}) {
        auto ig = xsa::integrated_gradients(net, x, 0, steps, baseline);
        const double err = std::abs(xsa::sum(ig.values.values()) - (zx - zb));
        if (prev_err >= 0.0) REQUIRE(err <= prev_err + 1e-9);
        prev_err = err;
    }
}

TEST_CASE("shapley: linear model is exact for any cycle count") {
    Network net = linear_net({1.5, -2.0, 0.25}, 1, 3);
    const Tensor x({3}, {0.3, 0.6, -0.2});
    auto sh = xsa::shapley_sampling(net, x, 0, 3, 0.0, 17);
    REQUIRE(sh.values[0] == Catch::Approx(1.5 * 0.3).margin(1e-12));
    REQUIRE(sh.values[1] == Catch::Approx(-2.0 * 0.6).margin(1e-12));
    REQUIRE(sh.values[2] == Catch::Approx(0.25 * -0.2).margin(1e-12));
}

TEST_CASE("shapley: efficiency holds exactly per permutation") {
    Network net = toy8_net();
    xsa::Rng rng(73);
    Tensor x({8});
    for (double& v : x.values()) v = rng.uniform(-1.0, 1.0);
    Tensor baseline({8});
    const double zx = xsa::forward(net, x).output()[2];
    const double zb = xsa::forward(net, baseline).output()[2];
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
        auto sh = xsa::shapley_sampling(net, x, 2, 1, 0.0, seed);
        REQUIRE(xsa::sum(sh.values.values()) == Catch::Approx(zx - zb).margin(1e-10));
    }
}

TEST_CASE("shapley: sampling matches the exhaustive oracle within 0.02") {
    Network net = toy8_net();
    xsa::Rng rng(74);
    Tensor x({8});
    for (double& v : x.values()) v = rng.uniform(-1.0, 1.0);
    const auto exact = exhaustive_shapley(net, x, 0, 0.0);
    auto sh = xsa::shapley_sampling(net, x, 0, 5000, 0.0, 2024);
    for (std::size_t i = 0; i < 8; ++i)
        REQUIRE(sh.values[i] == Catch::Approx(exact[i]).margin(0.02));
}

TEST_CASE("shapley: estimator is unbiased across independent seeds") {
    Network net = toy8_net();
    xsa::Rng rng(75);
    Tensor x({8});
    for (double& v : x.values()) v = rng.uniform(-1.0, 1.0);
    const auto exact = exhaustive_shapley(net, x, 1, 0.0);

    const int runs = 50, cycles = 100;
    std::vector<std::vector<double>> estimates;
    for (int r = 0; r < runs; ++r) {
        auto sh = xsa::shapley_sampling(net, x, 1, cycles, 0.0, 10000 + r);
        estimates.push_back(sh.values.values());
    }
    for (std::size_t i = 0; i < 8; ++i) {
        double mean = 0.0;
        for (const auto& e : estimates) mean += e[i];
        mean /= runs;
        double var = 0.0;
        for (const auto& e : estimates) var += (e[i] - mean) * (e[i] - mean);
        var /= (runs - 1);
        const double se = std::sqrt(var / runs);
        REQUIRE(std::abs(mean - exact[i]) <= 4.0 * se + 1e-4);
    }
}

TEST_CASE("shapley: patch units spread marginals and stay efficient") {
    Network net;
    net.input_shape = {1, 4, 4};
    net.output_dim = 2;
    net.layers.push_back(Layer::flatten());
    xsa::Rng rng(76);
    Tensor w({2, 16});
    for (double& v : w.values()) v = rng.gaussian();
    net.layers.push_back(Layer::dense(std::move(w)));
    net.validate();
    Tensor x({1, 4, 4});
    for (double& v : x.values()) v = rng.uniform();
    auto sh = xsa::shapley_sampling(net, x, 0, 4, 0.0, 5, 2);
    const double zx = xsa::forward(net, x).output()[0];
    REQUIRE(xsa::sum(sh.values.values()) == Catch::Approx(zx).margin(1e-10));
}

TEST_CASE("attribution matrix columns equal single-target calls") {
    Network net = relu_net_no_bias();
    xsa::MethodParams params;
    params.seed = 31337;
    params.noise_std = 0.05;
    params.samples = 4;
    params.steps = 8;
    params.cycles = 3;
    params.gamma = 0.2;

    SECTION("lrp") {
        LrpRulePlan plan = LrpRulePlan::uniform_gamma(net, 0.2, 0.0);
        auto m = xsa::attribution_matrix(net, probe_x, xsa::Method::Lrp, params, &plan);
        const auto trace = xsa::forward(net, probe_x);
        for (std::size_t j = 0; j < 2; ++j) {
            auto e = xsa::lrp(net, trace, j, plan);
            for (std::size_t i = 0; i < 4; ++i) REQUIRE(m(i, j) == e.values[i]);
        }
    }
    SECTION("smoothgrad") {
        auto m = xsa::attribution_matrix(net, probe_x, xsa::Method::SmoothGrad, params);
        for (std::size_t j = 0; j < 2; ++j) {
            auto e = xsa::smoothgrad(net, probe_x, j, params.noise_std, params.samples, params.seed);
            for (std::size_t i = 0; i < 4; ++i)
                REQUIRE(m(i, j) == Catch::Approx(e.values[i]).margin(1e-15));
        }
    }
    SECTION("integrated gradients") {
        auto m = xsa::attribution_matrix(net, probe_x, xsa::Method::IntegratedGradients, params);
        Tensor baseline(probe_x.shape());
        for (std::size_t j = 0; j < 2; ++j) {
            auto e = xsa::integrated_gradients(net, probe_x, j, params.steps, baseline);
            for (std::size_t i = 0; i < 4; ++i)
                REQUIRE(m(i, j) == Catch::Approx(e.values[i]).margin(1e-15));
        }
    }
    SECTION("shapley") {
        auto m = xsa::attribution_matrix(net, probe_x, xsa::Method::ShapleySampling, params);
        for (std::size_t j = 0; j < 2; ++j) {
            auto e = xsa::shapley_sampling(net, probe_x, j, params.cycles, params.baseline_value,
                                           params.seed);
            for (std::size_t i = 0; i < 4; ++i) REQUIRE(m(i, j) == e.values[i]);
        }
    }
    SECTION("gradient x input") {
        auto m = xsa::attribution_matrix(net, probe_x, xsa::Method::GradientXInput, params);
        for (std::size_t j = 0; j < 2; ++j) {
            auto e = xsa::gradient_x_input(net, probe_x, j);
            for (std::size_t i = 0; i < 4; ++i) REQUIRE(m(i, j) == e.values[i]);
        }
    }
}
