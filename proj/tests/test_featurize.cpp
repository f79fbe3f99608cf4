#include <doctest.h>

#include <cmath>
#include <random>

#include "issm/errors.hpp"
#include "issm/featurize.hpp"

using namespace issm;

namespace {

FeatureMatrix rows(const Matrix& m) { return FeatureMatrix(m, FeatureOrigin::unlabeled); }

RecognizerSnapshot small_recognizer(std::uint64_t seed) {
    Rng rng(seed);
    return RecognizerSnapshot(
        nn::DenseNet::glorot({3, 5, 4}, {nn::Activation::relu, nn::Activation::softmax}, rng));
}

}  // namespace

TEST_CASE("marginal index examples") {
    CHECK(marginal_index((Vector(3) << 1, 0, 0).finished()) == 0.0);
    CHECK(marginal_index((Vector(3) << 1.0 / 3, 1.0 / 3, 1.0 / 3).finished()) == doctest::Approx(1.0));
    CHECK(marginal_index((Vector(3) << 0.5, 0.3, 0.2).finished()) == doctest::Approx(0.8));
    CHECK(marginal_index((Vector(3) << 0.4, 0.4, 0.2).finished()) == 1.0);
    CHECK_THROWS_AS(marginal_index((Vector(1) << 1.0).finished()), ConfigError);
    CHECK_THROWS_AS(marginal_index((Vector(2) << 0.7, 0.7).finished()), InvalidInputError);
    CHECK_THROWS_AS(marginal_index((Vector(2) << 1.2, -0.2).finished()), InvalidInputError);
}

TEST_CASE("histogram examples") {
    const Matrix u = (Matrix(3, 2) << 1, 0, 0, 1, -1, 0).finished();
    const Vector h = representativeness_histogram((Vector(2) << 1, 0).finished(), rows(u), 4);
    CHECK(h.isApprox((Vector(4) << 1.0 / 3, 0, 1.0 / 3, 1.0 / 3).finished()));

    const Matrix parallel = (Matrix(3, 2) << 2, 2, 1, 1, 5, 5).finished();
    const Vector hp = representativeness_histogram((Vector(2) << 1, 1).finished(), rows(parallel), 10);
    CHECK(hp[9] == doctest::Approx(1.0));

    const Vector one = representativeness_histogram((Vector(2) << 0.3, -1).finished(),
                                                    rows((Matrix(1, 2) << 1, 1).finished()), 5);
    CHECK(one.sum() == doctest::Approx(1.0));
    CHECK(one.maxCoeff() == 1.0);

    // Zero-norm embeddings land at similarity 0.
    const Vector zero = representativeness_histogram(Vector::Zero(2), rows(u), 4);
    CHECK(zero[2] == doctest::Approx(1.0));
    CHECK_THROWS_AS(representativeness_histogram(Vector::Zero(3), rows(u), 4), ShapeError);
    CHECK_THROWS_AS(representativeness_histogram(Vector::Zero(2), rows(u), 1), ConfigError);
}

TEST_CASE("histogram mass is conserved (property)") {
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<int> n(1, 60), bins(2, 16);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix u(n(rng), 4);
        for (auto& v : u.reshaped()) v = g(rng);
        Vector x(4);
        for (auto& v : x) v = g(rng);
        const Vector h = representativeness_histogram(x, rows(u), bins(rng));
        CHECK(std::abs(h.sum() - 1.0) <= 1e-9);
        CHECK(h.minCoeff() >= 0.0);
    }
}

TEST_CASE("batched histograms equal the single-row form") {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix u(30, 5), c(7, 5);
    for (auto& v : u.reshaped()) v = g(rng);
    for (auto& v : c.reshaped()) v = g(rng);
    const Matrix all = representativeness_histograms(c, rows(u), 8);
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
        CHECK(all.row(i).transpose() == representativeness_histogram(Vector(c.row(i).transpose()), rows(u), 8));
    }
}

TEST_CASE("state examples") {
    const Matrix a = (Matrix(3, 2) << 0, 1, 1, 0, 2, 2).finished();
    const AgentState same = build_state(rows(a), rows(a), 0, 10, KernelConfig::median(), Curvature{1.0});
    CHECK(std::abs(same.mmd_hyp) <= 1e-12);
    CHECK(same.budget_ratio == 0.0);

    // sl={[0]}, su={[1]} with sigma chosen so the MMD equals 0.5: 2 - 2 exp(-1/(2 s^2)) = 0.5.
    const double sigma = std::sqrt(-1.0 / (2.0 * std::log(0.75)));
    const AgentState s = build_state(rows((Matrix(1, 1) << 0).finished()), rows((Matrix(1, 1) << 1).finished()), 7,
                                     7, KernelConfig::fixed(sigma), Curvature{1.0});
    CHECK(s.mmd_raw == doctest::Approx(0.5));
    CHECK(s.mmd_hyp == doctest::Approx(0.4621172).epsilon(1e-7));
    CHECK(s.budget_ratio == 1.0);
    CHECK(build_state(rows(a), rows(a), 25, 100, KernelConfig::median(), Curvature{1.0}).budget_ratio == 0.25);
    CHECK_THROWS(build_state(rows(a), rows(a), 11, 10, KernelConfig::median(), Curvature{1.0}));
    CHECK(exhausted_state(4, 8).mmd_hyp == 0.0);
}

TEST_CASE("state is deterministic bitwise") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix a(12, 3), b(20, 3);
    for (auto& v : a.reshaped()) v = g(rng);
    for (auto& v : b.reshaped()) v = g(rng) + 0.3;
    const auto s1 = build_state(rows(a), rows(b), 3, 9, KernelConfig::median(), Curvature{1.0});
    const auto s2 = build_state(rows(a), rows(b), 3, 9, KernelConfig::median(), Curvature{1.0});
    CHECK(s1 == s2);
}

TEST_CASE("action features") {
    const auto ar = small_recognizer(3);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix inputs(6, 3);
    for (auto& v : inputs.reshaped()) v = g(rng);
    const Matrix u = ar.embed_rows(inputs);
    const IdList ids{10, 11, 12, 13, 14, 15};
    const auto actions = build_actions(inputs, ids, ar, rows(u), 10, Curvature{1.0});
    REQUIRE(actions.size() == 6);
    for (std::size_t i = 0; i < actions.size(); ++i) {
        const Vector x = inputs.row(static_cast<Eigen::Index>(i)).transpose();
        const ActionFeatures single = build_action(x, ids[i], ar, rows(u), 10, Curvature{1.0});
        CHECK(single == actions[i]);
        CHECK(actions[i].candidate_id == ids[i]);
        const double mi = marginal_index(ar.predict_proba(x));
        CHECK(actions[i].mi_hyp == doctest::Approx(std::tanh(mi)));
        CHECK(validate_in_ball(actions[i].hist_hyp, Curvature{1.0}));
    }
    // MI order is preserved through the projection.
    for (std::size_t i = 0; i < actions.size(); ++i) {
        for (std::size_t j = 0; j < actions.size(); ++j) {
            const double mi_i = marginal_index(ar.predict_proba(Vector(inputs.row(static_cast<Eigen::Index>(i)).transpose())));
            const double mi_j = marginal_index(ar.predict_proba(Vector(inputs.row(static_cast<Eigen::Index>(j)).transpose())));
            if (mi_i > mi_j) CHECK(actions[i].mi_hyp > actions[j].mi_hyp);
        }
    }
}

TEST_CASE("projected one-hot histogram and q input layout") {
    const BallPoint p = exp_map_origin((Vector(3) << 0, 1, 0).finished(), Curvature{1.0});
    CHECK(p.coords()[1] == doctest::Approx(0.7615942).epsilon(1e-7));
    CHECK(p.coords()[0] == 0.0);

    AgentState s;
    s.mmd_hyp = 0.1;
    s.budget_ratio = 0.2;
    ActionFeatures a;
    a.mi_hyp = 0.3;
    a.hist_hyp = (Vector(2) << 0.4, 0.5).finished();
    CHECK(q_input(s, a) == (Vector(5) << 0.1, 0.2, 0.3, 0.4, 0.5).finished());
    CHECK(q_input_dim(10) == 13);
}
