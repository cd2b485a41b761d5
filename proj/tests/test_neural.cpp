#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "oracles.hpp"
#include "uavtrack/errors.hpp"
#include "uavtrack/neural.hpp"

using namespace uavtrack;
namespace fs = std::filesystem;

namespace {

template <typename T>
Tensor<T> random_batch(const Shape& input, std::size_t n, Rng& rng) {
    Shape s{n};
    s.insert(s.end(), input.begin(), input.end());
    Tensor<T> t(s);
    for (auto& v : t.data) v = static_cast<T>(uniform_real(rng, -1, 1));
    return t;
}

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("uavtrack_test_" + name);
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

void spit(const fs::path& p, const std::vector<char>& bytes) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Small random architectures: an MLP or a conv stack with odd geometry.
template <typename T>
Network<T> random_net(Rng& rng, int variant) {
    if (variant % 2 == 0) {
        const std::size_t in = 2 + uniform_index(rng, 5), hid = 3 + uniform_index(rng, 6);
        Network<T> net({in}, {LayerSpec::dense(in, hid), LayerSpec::relu(), LayerSpec::dense(hid, hid),
                              LayerSpec::relu(), LayerSpec::dense(hid, 6)});
        net.init(rng);
        return net;
    }
    const std::size_t c = 1 + uniform_index(rng, 2), hw = 5 + uniform_index(rng, 3);
    const std::size_t stride = 1 + uniform_index(rng, 2), pad = uniform_index(rng, 2);
    Network<T> probe({c, hw, hw}, {LayerSpec::conv2d(c, 3, 3, stride, pad), LayerSpec::relu(), LayerSpec::flatten()});
    const std::size_t flat = probe.output_size();
    Network<T> net({c, hw, hw}, {LayerSpec::conv2d(c, 3, 3, stride, pad), LayerSpec::relu(), LayerSpec::flatten(),
                                 LayerSpec::dense(flat, 6)});
    net.init(rng);
    return net;
}

template <typename T>
void randomize_biases(Network<T>& net, Rng& rng) {
    for (std::size_t li = 0; li < net.specs().size(); ++li) {
        if (net.first_param(li) == Network<T>::npos) continue;
        for (auto& b : net.parameters()[net.first_param(li) + 1]) b = static_cast<T>(uniform_real(rng, -0.1, 0.1));
    }
}

}  // namespace

TEST_CASE("zero final layer gives zero values") {
    Rng rng(1);
    auto net = make_mlp_qnet(5, 8, false);
    net.init(rng);
    const std::size_t last = net.specs().size() - 1;
    for (auto& w : net.parameters()[net.first_param(last)]) w = 0;
    for (auto& b : net.parameters()[net.first_param(last) + 1]) b = 0;
    const std::vector<float> obs{0.3f, -1, 0.5f, 0.9f, 0.1f};
    for (float q : forward(net, std::span<const float>(obs))) CHECK(q == 0.0f);
}

TEST_CASE("identity dense layer") {
    QNetwork net({6}, {LayerSpec::dense(6, 6)});
    auto& w = net.parameters()[0];
    std::fill(w.begin(), w.end(), 0.0f);
    for (std::size_t i = 0; i < 6; ++i) w[i * 6 + i] = 1.0f;
    std::vector<float> e3(6, 0.0f);
    e3[3] = 1.0f;
    CHECK(forward(net, std::span<const float>(e3)) == e3);
}

TEST_CASE("forward is deterministic and checks shapes") {
    Rng rng(2);
    auto net = make_conv_qnet({4, 9, 9}, 4, 16, false);
    net.init(rng);
    const auto x = random_batch<float>({4, 9, 9}, 1, rng);
    const auto before = net;
    CHECK(net.forward(x).data == net.forward(x).data);
    CHECK(net == before);
    const std::vector<float> wrong(10, 0.0f);
    CHECK_THROWS_WITH_AS(forward(net, std::span<const float>(wrong)), doctest::Contains("expected input shape"),
                         ShapeError);
}

TEST_CASE("layer shapes follow padding and stride") {
    Network<float> net({2, 7, 9}, {LayerSpec::conv2d(2, 3, 3, 2, 1), LayerSpec::relu(), LayerSpec::flatten()});
    // floor((7 + 2 - 3) / 2) + 1 = 4, floor((9 + 2 - 3) / 2) + 1 = 5
    CHECK(net.layer_input_shape(1) == Shape{3, 4, 5});
    CHECK(net.output_shape() == Shape{60});
    CHECK_THROWS_AS(Network<float>({4}, {LayerSpec::dense(5, 6)}), ShapeError);
    CHECK_THROWS_AS(Network<float>({1, 2, 2}, {LayerSpec::conv2d(1, 1, 3)}), ShapeError);
}

TEST_CASE("relu output is nonnegative") {
    Rng rng(3);
    Network<float> net({8}, {LayerSpec::dense(8, 16), LayerSpec::relu()});
    net.init(rng);
    for (int i = 0; i < 50; ++i)
        for (float v : net.forward(random_batch<float>({8}, 4, rng)).data) CHECK(v >= 0.0f);
}

TEST_CASE("parameter counts") {
    CHECK(param_count(Network<float>({4}, {LayerSpec::dense(4, 8), LayerSpec::relu(), LayerSpec::dense(8, 6)})) ==
          94);
    CHECK(Network<float>().param_count() == 0);
    CHECK(param_count(Network<float>({1, 5, 5}, {LayerSpec::conv2d(1, 2, 3)})) == 20);
    CHECK(param_count(Network<float>({1, 5, 5}, {LayerSpec::conv2d(1, 2, 3), LayerSpec::batchnorm(2)})) == 24);
}

TEST_CASE("zero residual gives zero gradient") {
    Rng rng(4);
    auto net = make_mlp_qnet(4, 8, false);
    net.init(rng);
    const std::vector<float> obs{0.1f, 0.2f, -0.3f, 0.4f};
    const auto q = forward(net, std::span<const float>(obs));
    const auto g = backward(net, std::span<const float>(obs), 2, double(q[2]));
    for (const auto& p : g.params)
        for (float v : p) CHECK(v == 0.0f);
}

TEST_CASE("hand-sized dense gradient") {
    Network<double> net({2}, {LayerSpec::dense(2, 2)});
    net.parameters()[0] = {0.5, -0.25, 1.0, 2.0};
    net.parameters()[1] = {0.0, 0.0};
    const std::vector<double> x{1.0, 1.0};
    const auto q = forward(net, std::span<const double>(x));
    REQUIRE(q[0] == 0.25);
    const auto g = backward(net, std::span<const double>(x), 0, 1.0);
    // dL/dQ0 = Q0 - y = -0.75; dQ0/dW0j = x_j, dQ0/db0 = 1; row 1 untouched.
    CHECK(g.params[0] == std::vector<double>{-0.75, -0.75, 0.0, 0.0});
    CHECK(g.params[1] == std::vector<double>{-0.75, 0.0});
    CHECK(g.loss == doctest::Approx(0.5 * 0.75 * 0.75));
}

TEST_CASE("non-finite targets are rejected") {
    Rng rng(5);
    auto net = make_mlp_qnet(3, 4, false);
    net.init(rng);
    const std::vector<float> obs{0, 0, 0};
    CHECK_THROWS_AS(backward(net, std::span<const float>(obs), 0, std::numeric_limits<double>::quiet_NaN()),
                    NumericError);
    CHECK_THROWS_AS(backward(net, std::span<const float>(obs), 0, std::numeric_limits<double>::infinity()),
                    NumericError);
}

TEST_CASE("analytic gradients match finite differences in double precision") {
    Rng rng(6);
    for (int i = 0; i < 20; ++i) {
        auto net = random_net<double>(rng, i);
        randomize_biases(net, rng);
        const auto batch = random_batch<double>(net.input_shape(), 3, rng);
        std::vector<std::size_t> actions{0, 3, 5};
        std::vector<double> targets{uniform_real(rng, -2, 2), uniform_real(rng, -2, 2), uniform_real(rng, -2, 2)};
        const auto r = oracle::check_gradients(net, batch, actions, targets, 1e-5);
        CHECK(r.checked > r.skipped);
        CHECK(r.max_rel_error < 1e-6);
    }
}

TEST_CASE("analytic gradients match finite differences in single precision") {
    Rng rng(7);
    for (int i = 0; i < 20; ++i) {
        auto net = random_net<float>(rng, i);
        randomize_biases(net, rng);
        const auto batch = random_batch<float>(net.input_shape(), 3, rng);
        std::vector<std::size_t> actions{1, 2, 4};
        std::vector<double> targets{uniform_real(rng, -2, 2), uniform_real(rng, -2, 2), uniform_real(rng, -2, 2)};
        const auto r = oracle::check_gradients(net, batch, actions, targets, 1e-4);
        CHECK(r.checked > r.skipped);
        CHECK(r.max_rel_error < 1e-3);
    }
}

TEST_CASE("batchnorm gradients match finite differences") {
    Rng rng(8);
    Network<double> net({4}, {LayerSpec::dense(4, 5), LayerSpec::batchnorm(5), LayerSpec::relu(),
                              LayerSpec::dense(5, 6)});
    net.init(rng);
    randomize_biases(net, rng);
    const auto batch = random_batch<double>({4}, 6, rng);
    const auto r = oracle::check_gradients(net, batch, {0, 1, 2, 3, 4, 5}, {1, -1, 0.5, 2, 0, -0.5}, 1e-5);
    CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("sgd step") {
    Rng rng(9);
    auto net = make_mlp_qnet(3, 4, false);
    net.init(rng);
    const std::vector<float> obs{0.2f, 0.4f, 0.6f};
    const auto g = backward(net, std::span<const float>(obs), 1, 5.0);
    auto same = net;
    sgd_step(same, g, 0.0);
    CHECK(same == net);

    Network<float> scalar({1}, {LayerSpec::dense(1, 1)});
    scalar.parameters()[0] = {1.0f};
    Gradients<float> gs;
    gs.params = {{2.0f}, {0.0f}};
    sgd_step(scalar, gs, 0.01);
    CHECK(scalar.parameters()[0][0] == doctest::Approx(0.98f));
}

TEST_CASE("gradient descent on a quadratic never increases the loss") {
    Network<double> net({1}, {LayerSpec::dense(1, 1)});
    net.parameters()[0] = {0.0};
    net.parameters()[1] = {0.0};
    const std::vector<double> x{1.5};
    double prev = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 100; ++i) {
        const auto g = backward(net, std::span<const double>(x), 0, 3.0);
        CHECK(g.loss <= prev);
        prev = g.loss;
        sgd_step(net, g, 0.1);
    }
    CHECK(prev < 1e-6);
}

TEST_CASE("batchnorm running statistics move only in training steps") {
    Rng rng(10);
    auto net = make_mlp_qnet(4, 6, true);
    net.init(rng);
    const auto buffers = net.buffers();
    const auto batch = random_batch<float>({4}, 8, rng);
    const auto q_before = net.forward(batch);
    CHECK(net.buffers() == buffers);
    const auto g = td_gradients(net, batch, std::vector<std::size_t>(8, 0), std::vector<double>(8, 1.0));
    sgd_step(net, g, 0.01);
    CHECK(net.buffers() != buffers);
    (void)q_before;
}

TEST_CASE("clones are isolated") {
    Rng rng(11);
    auto src = make_mlp_qnet(4, 8, false);
    src.init(rng);
    const auto copy = clone_params(src);
    CHECK(param_count(copy) == param_count(src));
    for (int i = 0; i < 100; ++i) {
        const auto x = random_batch<float>({4}, 1, rng);
        CHECK(copy.forward(x).data == src.forward(x).data);
    }
    const auto x = random_batch<float>({4}, 1, rng);
    const auto before = copy.forward(x);
    const std::vector<float> obs(x.data.begin(), x.data.end());
    sgd_step(src, backward(src, std::span<const float>(obs), 0, 10.0), 0.1);
    CHECK(copy.forward(x).data == before.data);
    CHECK(src.forward(x).data != before.data);
}

TEST_CASE("weights round-trip bit for bit") {
    Rng rng(12);
    auto net = make_conv_qnet({3, 7, 7}, 4, 8, true);
    net.init(rng);
    randomize_biases(net, rng);
    for (auto& b : net.buffers())
        for (auto& v : b) v = static_cast<float>(uniform_real(rng, 0.5, 1.5));
    const auto path = temp_file("roundtrip.bin");
    save_weights(net, path);
    const auto back = load_weights<float>(path);
    CHECK(back == net);
    const auto x = random_batch<float>({3, 7, 7}, 2, rng);
    CHECK(back.forward(x).data == net.forward(x).data);
    fs::remove(path);
}

TEST_CASE("corrupt weight files are rejected with distinct errors") {
    Rng rng(13);
    QNetwork net({4}, {LayerSpec::dense(4, 8), LayerSpec::relu(), LayerSpec::dense(8, 6)});
    net.init(rng);
    const auto path = temp_file("corrupt.bin");
    save_weights(net, path);
    const auto good = slurp(path);

    auto bad = good;
    bad[0] = 'X';
    spit(path, bad);
    CHECK_THROWS_WITH_AS(load_weights<float>(path), doctest::Contains("bad magic"), FormatError);

    bad = good;
    bad[4] = 9;
    spit(path, bad);
    CHECK_THROWS_WITH_AS(load_weights<float>(path), doctest::Contains("unsupported weights version"), FormatError);

    bad.assign(good.begin(), good.end() - 7);
    spit(path, bad);
    CHECK_THROWS_WITH_AS(load_weights<float>(path), doctest::Contains("truncated"), FormatError);

    // Second dense layer claims 7 inputs while the first produces 8.
    const std::size_t second_dense = 4 + 2 + 4 + 4 + 4 + (1 + 4 + 8) + (4 * 8 + 8) * 4 + (1 + 4);
    bad = good;
    REQUIRE(bad[second_dense] == char(LayerKind::dense));
    bad[second_dense + 5] = 7;
    spit(path, bad);
    CHECK_THROWS_AS(load_weights<float>(path), ShapeError);
    fs::remove(path);
}
