#pragma once

// Double-DQN on the deterministic chain MDP, with (state, action) one-hot
// encoded in the histogram slots of the Q-network input.

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "issm/agent.hpp"
#include "support/oracles.hpp"

namespace oracle {

inline issm::ActionFeatures chain_action(int state, int action, int states) {
    issm::ActionFeatures a;
    a.candidate_id = action;
    a.hist_hyp = issm::Vector::Zero(2 * states);
    a.hist_hyp[2 * state + action] = 1.0;
    return a;
}

inline issm::AgentState chain_state() { return issm::AgentState{}; }

struct ChainOutcome {
    bool policy_optimal = true;
    double max_abs_error = 0.0;
    std::vector<std::array<double, 2>> q;
};

/// Fills a replay buffer with uniformly explored transitions, then runs
/// `updates` td_update calls on minibatches.
inline ChainOutcome train_chain(std::uint64_t seed, int updates, double lr = 1e-3) {
    const ChainMdp mdp;
    issm::AgentConfig cfg;
    cfg.gamma = mdp.gamma;
    cfg.n_bins = 2 * mdp.states;
    cfg.learning_rate = lr;
    cfg.seed = seed;
    issm::QAgent agent(cfg);
    issm::ReplayBuffer replay(cfg.replay_capacity, seed + 1);

    std::mt19937_64 rng(seed + 2);
    std::uniform_int_distribution<int> pick_state(0, mdp.states - 1), pick_action(0, 1);
    for (int i = 0; i < 2000; ++i) {
        const int s = pick_state(rng);
        const int a = pick_action(rng);
        const auto o = mdp.step(s, a);
        auto next = std::make_shared<issm::CandidateList>();
        if (!o.terminal) next = std::make_shared<issm::CandidateList>(issm::CandidateList{
                             chain_action(o.next, 0, mdp.states), chain_action(o.next, 1, mdp.states)});
        replay.push(issm::Transition{chain_state(), chain_action(s, a, mdp.states), o.reward, chain_state(), next,
                                     o.terminal});
    }
    for (int u = 0; u < updates; ++u) agent.td_update(replay.sample(static_cast<std::size_t>(cfg.batch_size)));

    ChainOutcome out;
    const auto qstar = mdp.optimal_q();
    for (int s = 0; s < mdp.states; ++s) {
        std::array<double, 2> q{};
        for (int a = 0; a < 2; ++a) {
            q[static_cast<std::size_t>(a)] =
                agent.q_value(chain_state(), chain_action(s, a, mdp.states), issm::Network::online);
            out.max_abs_error = std::max(out.max_abs_error,
                                         std::abs(q[static_cast<std::size_t>(a)] -
                                                  qstar[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]));
        }
        const auto& qs = qstar[static_cast<std::size_t>(s)];
        const int best = qs[1] > qs[0] ? 1 : 0;
        const int greedy = q[1] > q[0] ? 1 : 0;
        if (best != greedy) out.policy_optimal = false;
        out.q.push_back(q);
    }
    return out;
}

}  // namespace oracle
