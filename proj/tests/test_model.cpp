#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "xsa/idx.hpp"
#include "xsa/model_io.hpp"
#include "xsa/network.hpp"
#include "xsa/synth.hpp"
#include "xsa/train.hpp"

using xsa::Layer;
using xsa::Network;
using xsa::Tensor;

namespace {

Network linear_2x2() {
    Network net;
    net.input_shape = {2};
    net.output_dim = 2;
    net.layers.push_back(Layer::dense(Tensor({2, 2}, {2, 0, 0, 3})));
    net.validate();
    return net;
}

// small random CNN used by gradient checks: 6x6 input, conv, relu, pool, dense
Network small_cnn(std::uint64_t seed) {
    xsa::Rng rng(seed);
    Network net;
    net.input_shape = {1, 6, 6};
    net.output_dim = 3;
    Tensor w({2, 1, 3, 3});
    for (double& v : w.values()) v = rng.gaussian();
    Tensor b({2});
    for (double& v : b.values()) v = 0.1 * rng.gaussian();
    net.layers.push_back(Layer::conv2d(std::move(w), std::move(b), 1, 1));
    net.layers.push_back(Layer::relu());
    net.layers.push_back(Layer::maxpool(2));
    net.layers.push_back(Layer::flatten());
    Tensor dw({3, 18});
    for (double& v : dw.values()) v = rng.gaussian();
    net.layers.push_back(Layer::dense(std::move(dw), Tensor({3})));
    net.validate();
    return net;
}

xsa::Dataset blob_dataset(std::size_t n, std::uint64_t seed) {
    // two gaussian blobs on an 8x8 canvas: class 0 top-left, class 1 bottom-right
    xsa::Rng rng(seed);
    xsa::Dataset ds;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);
        const double cx = label ? 5.5 : 2.5, cy = label ? 5.5 : 2.5;
        Tensor img({1, 8, 8});
        const double jx = rng.uniform(-0.8, 0.8), jy = rng.uniform(-0.8, 0.8);
        for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t x = 0; x < 8; ++x) {
                const double dx = x - cx - jx, dy = y - cy - jy;
                img.at3(0, y, x) = std::exp(-(dx * dx + dy * dy) / 3.0) +
                                   0.05 * rng.gaussian();
            }
        ds.images.push_back(std::move(img));
        ds.labels.push_back(label);
    }
    return ds;
}

}  // namespace

TEST_CASE("forward: single dense layer hand case") {
    auto trace = xsa::forward(linear_2x2(), Tensor({2}, {1, 1}));
    REQUIRE(trace.output()[0] == 2.0);
    REQUIRE(trace.output()[1] == 3.0);
    REQUIRE(trace.activations.size() == 2);
}

TEST_CASE("forward: relu clips negatives") {
    Network net;
    net.input_shape = {2};
    net.output_dim = 2;
    net.layers.push_back(Layer::relu());
    net.validate();
    auto trace = xsa::forward(net, Tensor({2}, {-1, 2}));
    REQUIRE(trace.output()[0] == 0.0);
    REQUIRE(trace.output()[1] == 2.0);
}

TEST_CASE("forward: shape mismatch is rejected") {
    REQUIRE_THROWS_AS(xsa::forward(linear_2x2(), Tensor({3})), xsa::ShapeError);
}

TEST_CASE("forward: digit CNN matches the naive reference on zero and random input") {
    Network net = xsa::make_digit_cnn(5);
    Tensor zero({1, 28, 28});
    auto trace = xsa::forward(net, zero);
    Tensor expected = oracle::naive_forward(net, zero);
    REQUIRE(trace.output().size() == 10);
    for (std::size_t i = 0; i < 10; ++i)
        REQUIRE(trace.output()[i] == Catch::Approx(expected[i]).margin(1e-12));

    xsa::Rng rng(9);
    Tensor x({1, 28, 28});
    for (double& v : x.values()) v = rng.uniform();
    auto t2 = xsa::forward(net, x);
    Tensor e2 = oracle::naive_forward(net, x);
    for (std::size_t i = 0; i < 10; ++i)
        REQUIRE(t2.output()[i] == Catch::Approx(e2[i]).margin(1e-10));
}

TEST_CASE("input gradient: linear model gives the weight row") {
    Network net = linear_2x2();
    for (std::size_t j = 0; j < 2; ++j) {
        Tensor g = xsa::input_gradient(net, Tensor({2}, {0.7, -1.3}), j);
        REQUIRE(g[j] == (j == 0 ? 2.0 : 3.0));
        REQUIRE(g[1 - j] == 0.0);
    }
}

TEST_CASE("input gradient: relu network with positive preactivations is the weight product") {
    Network net;
    net.input_shape = {2};
    net.output_dim = 1;
    net.layers.push_back(Layer::dense(Tensor({2, 2}, {1, 0.5, 0.25, 1})));
    net.layers.push_back(Layer::relu());
    net.layers.push_back(Layer::dense(Tensor({1, 2}, {1, 2})));
    net.validate();
    // x strictly positive keeps both hidden units active
    Tensor g = xsa::input_gradient(net, Tensor({2}, {1, 1}), 0);
    // W2 * W1 = [1 2] * [[1 0.5],[0.25 1]] = [1.5, 2.5]
    REQUIRE(g[0] == Catch::Approx(1.5).margin(1e-14));
    REQUIRE(g[1] == Catch::Approx(2.5).margin(1e-14));
}

TEST_CASE("input gradient matches central finite differences on a small CNN") {
    Network net = small_cnn(21);
    xsa::Rng rng(22);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x({1, 6, 6});
        for (double& v : x.values()) v = rng.uniform(-1.0, 1.0);
        const auto trace = xsa::forward(net, x);
        for (std::size_t j = 0; j < 3; ++j) {
            Tensor g = xsa::input_gradient(net, trace, j);
            Tensor fd = oracle::finite_difference_gradient(net, x, j);
            for (std::size_t i = 0; i < x.size(); ++i) {
                // skip coordinates near a relu/pool switching surface
                if (std::abs(g[i] - fd[i]) > 1e-5 * std::max(1.0, std::abs(fd[i]))) {
                    Tensor hi = x, lo = x;
                    hi[i] += 1e-5;
                    lo[i] -= 1e-5;
                    Tensor ghi = xsa::input_gradient(net, hi, j);
                    Tensor glo = xsa::input_gradient(net, lo, j);
                    const bool switching = std::abs(ghi[i] - glo[i]) > 1e-9;
                    INFO("coordinate " << i << " grad " << g[i] << " fd " << fd[i]);
                    REQUIRE(switching);
                }
            }
        }
    }
}

TEST_CASE("gradient check across layer types on 20 random inputs") {
    Network net = small_cnn(33);
    xsa::Rng rng(34);
    std::size_t checked = 0, skipped = 0;
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x({1, 6, 6});
        for (double& v : x.values()) v = rng.uniform(-1.0, 1.0);
        Tensor g = xsa::input_gradient(net, x, trial % 3);
        Tensor fd = oracle::finite_difference_gradient(net, x, trial % 3);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double rel = std::abs(g[i] - fd[i]) / std::max(1.0, std::abs(fd[i]));
            if (rel <= 1e-4) {
                ++checked;
            } else {
                ++skipped;  // switching surface; verified sparse below
            }
        }
    }
    REQUIRE(checked > 0);
    REQUIRE(skipped < checked / 10);
}

TEST_CASE("max-pool ties route to the first element in row-major order") {
    Network net;
    net.input_shape = {1, 2, 2};
    net.output_dim = 1;
    net.layers.push_back(Layer::maxpool(2));
    net.layers.push_back(Layer::flatten());
    net.validate();
    Tensor x({1, 2, 2}, {0.5, 0.5, 0.5, 0.5});
    Tensor g = xsa::input_gradient(net, x, 0);
    REQUIRE(g[0] == 1.0);
    REQUIRE(g[1] == 0.0);
    REQUIRE(g[2] == 0.0);
    REQUIRE(g[3] == 0.0);
}

TEST_CASE("piecewise linearity in a pattern-preserving neighborhood") {
    Network net = small_cnn(41);
    xsa::Rng rng(42);
    Tensor x({1, 6, 6});
    for (double& v : x.values()) v = rng.uniform(0.2, 1.0);
    const auto z = [&](double alpha) {
        Tensor xs = x;
        for (double& v : xs.values()) v *= alpha;
        return xsa::forward(net, xs).output();
    };
    // with biases the map is affine in alpha only if activation patterns are
    // stable AND biases act linearly -> compare slopes of secants instead
    const auto za = z(0.999), zb = z(1.0), zc = z(1.001);
    for (std::size_t j = 0; j < 3; ++j) {
        const double left = (zb[j] - za[j]) / 0.001;
        const double right = (zc[j] - zb[j]) / 0.001;
        REQUIRE(left == Catch::Approx(right).margin(1e-6 * std::max(1.0, std::abs(left))));
    }
}

TEST_CASE("forward determinism: identical bits in, identical bits out") {
    Network net = xsa::make_digit_cnn(77);
    Tensor x = xsa::render_synth_digit(3, 123);
    const auto a = xsa::forward(net, x).output();
    const auto b = xsa::forward(net, x).output();
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
}

TEST_CASE("idx: zero image round-trip and format arithmetic") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "xsa_idx_test";
    fs::create_directories(dir);

    // 1 all-zero image
    xsa::save_idx_images((dir / "zero.idx").string(), {Tensor({1, 28, 28})});
    auto imgs = xsa::load_idx_images((dir / "zero.idx").string());
    REQUIRE(imgs.size() == 1);
    REQUIRE(imgs[0].shape() == std::vector<std::size_t>{1, 28, 28});
    for (double v : imgs[0].values()) REQUIRE(v == 0.0);

    // header says 2 images, payload has exactly 2*784 bytes
    {
        std::ofstream out(dir / "two.idx", std::ios::binary);
        const unsigned char header[16] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28};
        out.write(reinterpret_cast<const char*>(header), 16);
        std::vector<char> payload(2 * 784, 7);
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    }
    auto two = xsa::load_idx_images((dir / "two.idx").string());
    REQUIRE(two.size() == 2);
    REQUIRE(two[1][0] == Catch::Approx(7.0 / 255.0));

    // bad magic
    {
        std::ofstream out(dir / "bad.idx", std::ios::binary);
        const unsigned char header[16] = {0, 0, 9, 9, 0, 0, 0, 1, 0, 0, 0, 28, 0, 0, 0, 28};
        out.write(reinterpret_cast<const char*>(header), 16);
    }
    REQUIRE_THROWS_AS(xsa::load_idx_images((dir / "bad.idx").string()), xsa::IoError);

    // truncated payload
    {
        std::ofstream out(dir / "trunc.idx", std::ios::binary);
        const unsigned char header[16] = {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 28, 0, 0, 0, 28};
        out.write(reinterpret_cast<const char*>(header), 16);
        std::vector<char> payload(100, 1);
        out.write(payload.data(), 100);
    }
    REQUIRE_THROWS_AS(xsa::load_idx_images((dir / "trunc.idx").string()), xsa::IoError);

    fs::remove_all(dir);
}

TEST_CASE("idx: official MNIST test file when provided") {
    const char* mnist_dir = std::getenv("XSA_MNIST_DIR");
    if (!mnist_dir) {
        SUCCEED("XSA_MNIST_DIR not set; skipping official-file check");
        return;
    }
    const std::string images = std::string(mnist_dir) + "/t10k-images-idx3-ubyte";
    const std::string labels = std::string(mnist_dir) + "/t10k-labels-idx1-ubyte";
    auto ds = xsa::load_idx(images, labels);
    REQUIRE(ds.images.size() == 10000);
    REQUIRE(ds.labels[0] == 7);
}

TEST_CASE("model io: save/load/save is byte-identical and forward survives within 1e-6") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "xsa_model_io_test";
    fs::remove_all(dir);

    Network net = xsa::make_digit_cnn(13);
    xsa::save_model(net, (dir / "a").string());
    Network loaded = xsa::load_model((dir / "a").string());
    xsa::save_model(loaded, (dir / "b").string());

    for (const char* file : {"manifest.json", "weights.bin"}) {
        std::ifstream fa(dir / "a" / file, std::ios::binary);
        std::ifstream fb(dir / "b" / file, std::ios::binary);
        std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
        std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
        REQUIRE(ca == cb);
        REQUIRE(!ca.empty());
    }

    Tensor x = xsa::render_synth_digit(5, 999);
    const auto za = xsa::forward(net, x).output();
    const auto zb = xsa::forward(loaded, x).output();
    for (std::size_t i = 0; i < za.size(); ++i)
        REQUIRE(za[i] == Catch::Approx(zb[i]).margin(1e-6 * std::max(1.0, std::abs(za[i]))));

    fs::remove_all(dir);
}

TEST_CASE("model io: manifest offset past EOF fails to load") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "xsa_model_corrupt";
    fs::remove_all(dir);

    Network net;
    net.input_shape = {2};
    net.output_dim = 2;
    net.layers.push_back(Layer::dense(Tensor({2, 2}, {1, 2, 3, 4})));
    net.validate();
    xsa::save_model(net, dir.string());

    // truncate weights.bin: offsets in the manifest now point past EOF
    fs::resize_file(dir / "weights.bin", 4);
    REQUIRE_THROWS_AS(xsa::load_model(dir.string()), xsa::IoError);
    fs::remove_all(dir);
}

TEST_CASE("training: blob MLP reaches 99% and is bit-reproducible") {
    const auto data = blob_dataset(400, 1);

    const auto make_mlp = [](std::uint64_t seed) {
        xsa::Rng rng(seed);
        Network net;
        net.input_shape = {1, 8, 8};
        net.output_dim = 2;
        net.layers.push_back(Layer::flatten());
        Tensor w1({16, 64});
        for (double& v : w1.values()) v = 0.3 * rng.gaussian();
        net.layers.push_back(Layer::dense(std::move(w1), Tensor({16})));
        net.layers.push_back(Layer::relu());
        Tensor w2({2, 16});
        for (double& v : w2.values()) v = 0.3 * rng.gaussian();
        net.layers.push_back(Layer::dense(std::move(w2), Tensor({2})));
        net.validate();
        return net;
    };

    xsa::TrainConfig cfg;
    cfg.epochs = 100;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.1;
    cfg.seed = 3;
    cfg.target_accuracy = 0.99;
    auto result = xsa::train(make_mlp(3), data, cfg);
    REQUIRE(result.holdout_accuracy.back() >= 0.99);
    REQUIRE(result.loss_history.size() < 100);

    // full train-set accuracy
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    REQUIRE(xsa::accuracy(result.net, data, all) >= 0.99);

    // bit-identical reproduction, also across worker counts
    auto again = xsa::train(make_mlp(3), data, cfg);
    xsa::TrainConfig cfg1 = cfg;
    cfg1.workers = 1;
    auto serial = xsa::train(make_mlp(3), data, cfg1);
    for (std::size_t li = 0; li < result.net.layers.size(); ++li) {
        const auto& a = result.net.layers[li].weights.values();
        const auto& b = again.net.layers[li].weights.values();
        const auto& c = serial.net.layers[li].weights.values();
        REQUIRE(a == b);
        REQUIRE(a == c);
    }
}

TEST_CASE("training: failure carries the loss history") {
    const auto data = blob_dataset(64, 2);
    Network net;
    net.input_shape = {1, 8, 8};
    net.output_dim = 2;
    net.layers.push_back(Layer::flatten());
    net.layers.push_back(Layer::dense(Tensor({2, 64}), Tensor({2})));  // zero init, lr 0
    net.validate();
    xsa::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.learning_rate = 0.0;
    cfg.target_accuracy = 0.99;
    cfg.seed = 5;
    try {
        xsa::train(net, data, cfg);
        FAIL("expected TrainingFailure");
    } catch (const xsa::TrainingFailure& e) {
        REQUIRE(e.loss_history.size() == 2);
    }
}

TEST_CASE("synthetic digits are balanced, bounded and reproducible") {
    auto ds = xsa::make_synth_digits(40, 7);
    REQUIRE(ds.size() == 40);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        REQUIRE(ds.labels[i] == static_cast<int>(i % 10));
        for (double v : ds.images[i].values()) {
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
        }
    }
    auto again = xsa::make_synth_digits(40, 7);
    for (std::size_t i = 0; i < ds.size(); ++i)
        REQUIRE(ds.images[i].values() == again.images[i].values());
}
