#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "issm/alsim.hpp"
#include "issm/errors.hpp"
#include "support/worlds.hpp"

using namespace issm;

namespace {

void check_disjoint(const PoolEnvironment& env) {
    std::set<SampleId> seen;
    std::size_t total = 0;
    for (const IdList* part : {&env.labeled(), &env.unlabeled(), &env.reward_set()}) {
        seen.insert(part->begin(), part->end());
        total += part->size();
    }
    CHECK(seen.size() == total);
    CHECK(total == env.dataset().size());
}

}  // namespace

TEST_CASE("environment step accounting") {
    PoolEnvironment env = testing::tiny_env(1);
    CHECK(env.next_batch_size() == 5);
    const double before = env.reward_accuracy();
    const IdList pick(env.unlabeled().begin(), env.unlabeled().begin() + 5);
    const StepResult r = env.step(pick);
    CHECK(r.reward == doctest::Approx(env.reward_accuracy() - before).epsilon(1e-15));
    CHECK_FALSE(r.terminal);
    CHECK(env.spent() == 5);
    CHECK(env.labeled().size() == 11);
    check_disjoint(env);
    CHECK(r.next_state.budget_ratio == doctest::Approx(0.5));

    const IdList rest(env.unlabeled().begin(), env.unlabeled().begin() + 5);
    CHECK(env.step(rest).terminal);
    CHECK(env.spent() == env.budget());
}

TEST_CASE("environment protocol errors") {
    PoolEnvironment env = testing::tiny_env(2);
    const IdList& u = env.unlabeled();
    CHECK_THROWS_AS(env.step({}), ProtocolError);
    CHECK_THROWS_AS(env.step({u[0], u[1]}), ProtocolError);
    CHECK_THROWS_AS(env.step({env.labeled()[0], u[0], u[1], u[2], u[3]}), ProtocolError);
    CHECK_THROWS_AS(env.step({env.reward_set()[0], u[0], u[1], u[2], u[3]}), ProtocolError);
    CHECK_THROWS_AS(env.step({u[0], u[0], u[1], u[2], u[3]}), ProtocolError);
    CHECK(env.spent() == 0);

    auto data = testing::tiny_dataset(2);
    PoolSplit overlap = split_pools(*data, 6, 6, 2);
    overlap.reward.push_back(overlap.labeled.front());
    CHECK_THROWS_AS(PoolEnvironment(data, overlap, testing::tiny_env_config(10, 5, 2)), ProtocolError);
}

TEST_CASE("environment step replays deterministically from a copy") {
    PoolEnvironment env = testing::tiny_env(3);
    PoolEnvironment copy = env;
    const IdList pick = uniform_select(env, 5, 9);
    const StepResult a = env.step(pick);
    const StepResult b = copy.step(pick);
    CHECK(a.reward == b.reward);
    CHECK(a.next_state == b.next_state);
    CHECK(env.labeled_embeddings() == copy.labeled_embeddings());
}

TEST_CASE("budget larger than the pool is clamped") {
    auto data = testing::tiny_dataset(4, 2, 6);
    const PoolSplit split = split_pools(*data, 3, 3, 4);
    PoolEnvironment env(data, split, testing::tiny_env_config(100, 4, 4));
    CHECK(env.budget_clamped());
    CHECK(env.budget() == 6);
    const EpisodeLog log = run_selector_episode(
        env, [](const PoolEnvironment& e, int n, int) { return margin_select(e, n); }, "margin", 4);
    CHECK(log.total_selected() == 6);
    CHECK(log.iterations.size() == 2);
    CHECK(env.unlabeled().empty());
}

TEST_CASE("frozen episode: two iterations, parameters untouched") {
    PoolEnvironment env = testing::tiny_env(5);
    QAgent agent(testing::tiny_agent_config(5));
    const nn::DenseNet online = agent.online();
    const nn::DenseNet target = agent.target();
    EpisodeOptions opts;
    opts.mode = EpisodeMode::frozen;
    const EpisodeLog log = run_episode(env, agent, nullptr, opts);
    CHECK(log.iterations.size() == 2);
    CHECK(agent.online() == online);
    CHECK(agent.target() == target);
    CHECK(agent.update_count() == 0);
    CHECK(agent.explore_steps() == 0);
}

TEST_CASE("episodes keep accounting invariants (property)") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        PoolEnvironment env = testing::tiny_env(seed, 12 + static_cast<int>(seed), 3 + static_cast<int>(seed % 3));
        const int pool = static_cast<int>(env.unlabeled().size());
        const int expected = std::min(env.budget(), pool);
        QAgent agent(testing::tiny_agent_config(seed));
        ReplayBuffer replay(100, seed);
        EpisodeOptions opts;
        opts.mode = EpisodeMode::train;
        opts.storage = seed % 2 ? TransitionStorage::every_selected : TransitionStorage::first_selected;
        opts.seed = seed;
        const EpisodeLog log = run_episode(env, agent, &replay, opts);

        CHECK(std::abs(log.total_reward() - (log.final_accuracy() - log.initial_accuracy)) <= 1e-9);
        CHECK(log.total_selected() == expected);
        CHECK(env.spent() == expected);
        check_disjoint(env);
        for (SampleId id : env.reward_set()) CHECK(env.training_audit().count(id) == 0);
        CHECK(env.training_audit() == std::set<SampleId>(env.labeled().begin(), env.labeled().end()));
        double prev = log.initial_accuracy;
        std::set<SampleId> picked;
        for (const auto& it : log.iterations) {
            CHECK(it.accuracy >= 0.0);
            CHECK(it.accuracy <= 1.0);
            CHECK(std::abs(it.reward - (it.accuracy - prev)) <= 1e-12);
            prev = it.accuracy;
            for (SampleId id : it.selected) CHECK(picked.insert(id).second);
        }
        const std::size_t per_step = opts.storage == TransitionStorage::every_selected ? 0 : 1;
        if (per_step == 1) CHECK(replay.size() == log.iterations.size());
        else CHECK(replay.size() == static_cast<std::size_t>(expected));
        CHECK(agent.update_count() == static_cast<std::int64_t>(log.iterations.size()));
    }
}

TEST_CASE("episode log csv and summary") {
    PoolEnvironment env = testing::tiny_env(6);
    const EpisodeLog log =
        run_selector_episode(env, [](const PoolEnvironment& e, int n, int) { return uniform_select(e, n, 1); },
                             "uniform", 6);
    std::ostringstream out;
    log.write_csv(out);
    std::istringstream in(out.str());
    std::string header, row;
    std::getline(in, header);
    CHECK(header == "iter,spent,mmd,reward,accuracy,selected_ids,millis");
    std::getline(in, row);
    CHECK(std::count(row.begin(), row.end(), ';') == 4);
    const auto j = log.summary();
    for (const char* key : {"method", "seed", "final_accuracy", "auc_of_accuracy_curve"}) CHECK(j.contains(key));
    CHECK(j["method"] == "uniform");
    CHECK(log.auc_of_accuracy_curve() >= 0.0);
    CHECK(log.auc_of_accuracy_curve() <= 1.0);
}

TEST_CASE("auc of a hand-built curve") {
    EpisodeLog log;
    log.budget = 10;
    log.initial_evaluation_accuracy = 0.5;
    IterationRecord a;
    a.spent = 5;
    a.evaluation_accuracy = 0.7;
    IterationRecord b;
    b.spent = 10;
    b.evaluation_accuracy = 0.9;
    log.iterations = {a, b};
    CHECK(log.auc_of_accuracy_curve() == doctest::Approx(0.5 * (0.5 + 0.7) / 2 + 0.5 * (0.7 + 0.9) / 2));
}

TEST_CASE("uniform_select: full pool, reproducibility, frequencies") {
    PoolEnvironment env = testing::tiny_env(7);
    const IdList& pool = env.unlabeled();
    IdList all = uniform_select(env, static_cast<int>(pool.size()), 3);
    std::sort(all.begin(), all.end());
    CHECK(all == pool);
    CHECK(uniform_select(env, 5, 11) == uniform_select(env, 5, 11));

    const int trials = 10000, n = 5;
    std::map<SampleId, int> freq;
    for (int t = 0; t < trials; ++t) {
        for (SampleId id : uniform_select(env, n, static_cast<std::uint64_t>(t))) ++freq[id];
    }
    const double p = static_cast<double>(n) / pool.size();
    const double mean = trials * p, sd = std::sqrt(trials * p * (1 - p));
    // Bonferroni over the pool keeps the family-wise false alarm rate small.
    for (SampleId id : pool) CHECK(std::abs(freq[id] - mean) <= 4.0 * sd);
    int within3 = 0;
    for (SampleId id : pool) within3 += std::abs(freq[id] - mean) <= 3.0 * sd;
    CHECK(within3 >= static_cast<int>(pool.size()) - 1);
}

TEST_CASE("top_scoring ranks by score then id") {
    CHECK(top_scoring({10, 11, 12}, {0.8, 0.3, 0.8}, 2) == IdList{10, 12});
    CHECK(top_scoring({12, 11, 10}, {0.8, 0.3, 0.8}, 1) == IdList{10});
    CHECK(top_scoring({1, 2, 3}, {0.1, 0.2, 0.3}, 3) == IdList{3, 2, 1});
    CHECK_THROWS_AS(top_scoring({1, 2}, {0.1}, 1), ShapeError);
}

TEST_CASE("margin_select agrees with recomputed marginal indices") {
    PoolEnvironment env = testing::tiny_env(8);
    const Matrix probs = env.unlabeled_probabilities();
    std::vector<double> mi;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) mi.push_back(marginal_index(probs.row(i).transpose()));
    const IdList picked = margin_select(env, 4);
    CHECK(picked == top_scoring(env.unlabeled(), mi, 4));
    CHECK(margin_select(env, 4) == picked);
    IdList all = margin_select(env, static_cast<int>(env.unlabeled().size()));
    std::sort(all.begin(), all.end());
    CHECK(all == env.unlabeled());
}

TEST_CASE("k-center greedy examples") {
    const Matrix labeled = (Matrix(1, 1) << 0.0).finished();
    const Matrix unlabeled = (Matrix(3, 1) << 1.0, 5.0, 6.0).finished();
    CHECK(kcenter_greedy(labeled, unlabeled, {1, 5, 6}, 1, 0) == IdList{6});
    CHECK(kcenter_greedy(labeled, unlabeled, {1, 5, 6}, 2, 0) == IdList{6, 1});

    const Matrix same = Matrix::Zero(3, 1);
    CHECK(kcenter_greedy(labeled, same, {9, 4, 7}, 3, 0) == IdList{4, 7, 9});
    const Matrix none(0, 1);
    CHECK(kcenter_greedy(none, unlabeled, {1, 5, 6}, 2, 3) == kcenter_greedy(none, unlabeled, {1, 5, 6}, 2, 3));
}

TEST_CASE("k-center greedy reduces the coverage radius monotonically (property)") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 20; ++trial) {
        Matrix l(3, 2), u(15, 2);
        for (Eigen::Index i = 0; i < l.size(); ++i) l.data()[i] = g(rng);
        for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = g(rng);
        IdList ids(15);
        std::iota(ids.begin(), ids.end(), SampleId{0});
        const IdList picks = kcenter_greedy(l, u, ids, 8, trial);
        std::set<SampleId> uniq(picks.begin(), picks.end());
        CHECK(uniq.size() == picks.size());
        auto radius = [&](std::size_t k) {
            double worst = 0.0;
            for (Eigen::Index i = 0; i < u.rows(); ++i) {
                double near = (l.rowwise() - u.row(i)).rowwise().norm().minCoeff();
                for (std::size_t j = 0; j < k; ++j) near = std::min(near, (u.row(picks[j]) - u.row(i)).norm());
                worst = std::max(worst, near);
            }
            return worst;
        };
        for (std::size_t k = 1; k <= picks.size(); ++k) CHECK(radius(k) <= radius(k - 1) + 1e-12);
    }
}

TEST_CASE("coreset_select is a pure function of the environment") {
    PoolEnvironment env = testing::tiny_env(9);
    const IdList a = coreset_select(env, 5, 1);
    CHECK(a == coreset_select(env, 5, 1));
    CHECK(a.size() == 5);
}
