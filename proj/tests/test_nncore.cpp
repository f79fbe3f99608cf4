#include <doctest.h>

#include <cmath>
#include <random>

#include "issm/errors.hpp"
#include "issm/nncore.hpp"
#include "support/oracles.hpp"

using namespace issm;
using namespace issm::nn;

namespace {

DenseNet scalar_identity(double w, double b) {
    return DenseNet({Layer{(Matrix(1, 1) << w).finished(), (Vector(1) << b).finished(), Activation::identity}});
}

}  // namespace

TEST_CASE("forward examples") {
    DenseNet zero({Layer{Matrix::Zero(4, 3), Vector::Zero(4), Activation::relu},
                   Layer{Matrix::Zero(2, 4), Vector::Zero(2), Activation::relu}});
    CHECK(zero.forward(Vector::Ones(3)).isZero(0.0));
    CHECK(scalar_identity(2.0, 1.0).forward((Vector(1) << 3.0).finished())[0] == 7.0);

    Rng rng(123);
    const auto net = DenseNet::glorot({2, 5, 3}, {Activation::relu, Activation::softmax}, rng);
    const Vector x = (Vector(2) << 1.0, -1.0).finished();
    CHECK((net.forward(x) - oracle::forward_by_hand(net, x)).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(std::abs(net.forward(x).sum() - 1.0) <= 1e-12);
}

TEST_CASE("layer validation and shape errors") {
    CHECK_THROWS_AS(DenseNet({Layer{Matrix::Zero(2, 3), Vector::Zero(2), Activation::relu},
                              Layer{Matrix::Zero(1, 3), Vector::Zero(1), Activation::identity}}),
                    ShapeError);
    CHECK_THROWS(DenseNet({Layer{Matrix::Zero(2, 3), Vector::Zero(2), Activation::softmax},
                           Layer{Matrix::Zero(1, 2), Vector::Zero(1), Activation::identity}}));
    CHECK_THROWS_AS(scalar_identity(1.0, 0.0).forward(Vector::Zero(2)), ShapeError);
}

TEST_CASE("softmax survives very large logits") {
    DenseNet net({Layer{(Matrix(2, 1) << 1000.0, 990.0).finished(), Vector::Zero(2), Activation::softmax}});
    const Vector p = net.forward((Vector(1) << 1.0).finished());
    CHECK(p.allFinite());
    CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
    CHECK(p[0] > p[1]);
}

TEST_CASE("backward examples") {
    Rng rng(5);
    const auto net = DenseNet::glorot({3, 4, 2}, {Activation::relu, Activation::identity}, rng);
    const auto tr = net.trace(Vector(Vector::Ones(3)));
    CHECK(net.backward(tr, Vector(Vector::Zero(2))).max_abs() == 0.0);

    // L = (w x + b)^2 at x = 1: dL/dw = 2 (w + b), dL/db = 2 (w + b).
    const DenseNet lin = scalar_identity(0.7, 0.0);
    const auto t1 = lin.trace((Vector(1) << 1.0).finished());
    const double y = t1.output()(0, 0);
    const Gradients g = lin.backward(t1, (Vector(1) << 2.0 * y).finished());
    CHECK(g.weight[0](0, 0) == doctest::Approx(2.0 * 0.7));
    CHECK(g.bias[0][0] == doctest::Approx(2.0 * 0.7));
}

TEST_CASE("stale traces are rejected") {
    Rng rng(6);
    auto net = DenseNet::glorot({2, 3, 1}, {Activation::relu, Activation::identity}, rng);
    const auto tr = net.trace(Vector(Vector::Ones(2)));
    net.set_flat_parameters(net.flat_parameters() * 0.5);
    CHECK_THROWS_AS(net.backward(tr, Vector(Vector::Ones(1))), UsageError);
    const DenseNet other = net;
    CHECK_THROWS_AS(other.backward(tr, Vector(Vector::Ones(1))), UsageError);
}

TEST_CASE("backprop matches central finite differences (property)") {
    std::mt19937_64 rng(99);
    for (int n = 0; n < 10; ++n) {
        const DenseNet net = oracle::random_net(rng, n % 2 == 1);
        Matrix x(net.input_dim(), 3), t(net.output_dim(), 3);
        std::normal_distribution<double> g(0.0, 1.0);
        for (auto& v : x.reshaped()) v = g(rng);
        for (auto& v : t.reshaped()) v = g(rng);
        const auto check = oracle::finite_difference_check(net, x, t);
        CHECK(check.max_relative_error <= 1e-4);
        CHECK(check.checked > 0);
    }
}

TEST_CASE("cross-entropy gradient with respect to logits") {
    Rng rng(8);
    const auto net = DenseNet::glorot({3, 4}, {Activation::softmax}, rng);
    const Vector x = (Vector(3) << 0.3, -0.2, 1.0).finished();
    const Vector onehot = (Vector(4) << 0, 0, 1, 0).finished();
    const auto tr = net.trace(x);
    const Gradients g = net.backward(tr, Vector(tr.output().col(0) - onehot), GradientWrt::logits);
    // Finite differences of -log p_2.
    DenseNet probe = net;
    const Vector params = net.flat_parameters();
    const Vector analytic = gradients_to_flat(g);
    for (Eigen::Index p = 0; p < params.size(); ++p) {
        Vector a = params, b = params;
        a[p] += 1e-6;
        b[p] -= 1e-6;
        probe.set_flat_parameters(a);
        const double la = -std::log(probe.forward(x)[2]);
        probe.set_flat_parameters(b);
        const double lb = -std::log(probe.forward(x)[2]);
        CHECK(analytic[p] == doctest::Approx((la - lb) / 2e-6).epsilon(1e-5));
    }
}

TEST_CASE("optimizer examples") {
    DenseNet net = scalar_identity(0.5, -0.25);
    OptimizerState st(net, AdamConfig{0.1, 0.9, 0.999, 1e-8});
    optimizer_step(net, net.zero_gradients(), st);
    CHECK(net.layer(0).weight(0, 0) == 0.5);
    CHECK(st.step_count == 1);

    DenseNet frozen = scalar_identity(0.5, 0.0);
    OptimizerState st0(frozen, AdamConfig{0.0, 0.9, 0.999, 1e-8});
    Gradients g = frozen.zero_gradients();
    g.weight[0](0, 0) = 3.0;
    optimizer_step(frozen, g, st0);
    CHECK(frozen.layer(0).weight(0, 0) == 0.5);

    DenseNet one = scalar_identity(1.0, 0.0);
    OptimizerState st1(one, AdamConfig{0.1, 0.9, 0.999, 1e-8});
    Gradients unit = one.zero_gradients();
    unit.weight[0](0, 0) = 1.0;
    optimizer_step(one, unit, st1);
    CHECK(one.layer(0).weight(0, 0) - 1.0 == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adam descends a convex quadratic monotonically after warm-up") {
    DenseNet net({Layer{(Matrix(1, 3) << 2.0, -1.5, 0.7).finished(), (Vector(1) << 0.3).finished(),
                        Activation::identity}});
    OptimizerState st(net, AdamConfig{0.01, 0.9, 0.999, 1e-8});
    const Vector target = (Vector(4) << 1.0, -1.0, 0.5, 0.0).finished();
    const Matrix x = (Matrix(3, 4) << 1, 0, 0, 1, 0, 1, 0, 1, 0, 0, 1, 1).finished();
    double prev = 1e300;
    for (int step = 0; step < 200; ++step) {
        const auto tr = net.trace(x);
        const Matrix err = tr.output() - target.transpose();
        const double loss = err.squaredNorm();
        if (step >= 10) CHECK(loss <= prev);
        prev = loss;
        optimizer_step(net, net.backward(tr, Matrix(2.0 * err)), st);
    }
}

TEST_CASE("identical seeds give bit-identical training trajectories") {
    auto run = [] {
        Rng rng(77);
        auto net = DenseNet::glorot({4, 8, 2}, {Activation::relu, Activation::softmax}, rng);
        OptimizerState st(net, AdamConfig{});
        Matrix x(4, 6);
        std::normal_distribution<double> g;
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
        for (int i = 0; i < 20; ++i) {
            const auto tr = net.trace(x);
            optimizer_step(net, net.backward(tr, Matrix(tr.output().array() - 0.5)), st);
        }
        return net.flat_parameters();
    };
    CHECK(run() == run());
}

TEST_CASE("nncore_v1 checkpoint round trip") {
    Rng rng(4);
    const auto net = DenseNet::glorot({3, 5, 2}, {Activation::relu, Activation::softmax}, rng);
    const auto j = net.to_json();
    CHECK(j.at("format") == "nncore_v1");
    CHECK(DenseNet::from_json(nlohmann::json::parse(j.dump())) == net);
    auto bad = j;
    bad["format"] = "other";
    CHECK_THROWS(DenseNet::from_json(bad));
}

TEST_CASE("flat parameter layout is row-major weights then bias") {
    DenseNet net({Layer{(Matrix(2, 2) << 1, 2, 3, 4).finished(), (Vector(2) << 5, 6).finished(),
                        Activation::identity}});
    const Vector flat = net.flat_parameters();
    CHECK(flat == (Vector(6) << 1, 2, 3, 4, 5, 6).finished());
    CHECK(net.param_count() == 6);
    CHECK(gradients_to_flat(flat_to_gradients(net, flat)) == flat);
}
