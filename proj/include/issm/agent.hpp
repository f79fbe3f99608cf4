#pragma once

// The informative sample selection model: a Q-network over (state, candidate)
// pairs trained with Double-DQN temporal-difference updates.

#include <cstdint>
#include <deque>
#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "issm/featurize.hpp"
#include "issm/nncore.hpp"
#include "issm/rng.hpp"

namespace issm {

struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.05;
    std::int64_t decay_steps = 1;

    /// Linear interpolation from start to end over decay_steps, then flat.
    double at(std::int64_t step) const;
};

struct AgentConfig {
    double gamma = 0.9;
    EpsilonSchedule epsilon;
    int sync_period = 50;
    std::size_t replay_capacity = 10000;
    int batch_size = 32;
    std::vector<Eigen::Index> hidden{64, 32};
    int n_bins = 10;
    double curvature = 1.0;
    double learning_rate = 1e-4;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static AgentConfig from_json(const nlohmann::json& j);
};

using CandidateList = std::vector<ActionFeatures>;

struct Transition {
    AgentState state;
    ActionFeatures action;
    double reward = 0.0;
    AgentState next_state;
    std::shared_ptr<const CandidateList> next_candidates;
    bool terminal = false;
};

enum class Network { online, target };

/// Builds the Q-network layout [3 + n_bins, hidden..., 1].
nn::DenseNet make_q_network(const AgentConfig& cfg, Rng& rng);

class QAgent {
public:
    explicit QAgent(AgentConfig cfg);
    /// Starts from given online parameters; the target is a copy of them.
    QAgent(AgentConfig cfg, nn::DenseNet online);

    const AgentConfig& config() const noexcept { return cfg_; }
    const nn::DenseNet& online() const noexcept { return online_; }
    const nn::DenseNet& target() const noexcept { return target_; }
    const nn::OptimizerState& optimizer() const noexcept { return opt_; }
    std::int64_t update_count() const noexcept { return updates_; }
    std::int64_t explore_steps() const noexcept { return explore_steps_; }
    double epsilon() const { return cfg_.epsilon.at(explore_steps_); }

    double q_value(const AgentState& s, const ActionFeatures& a, Network which) const;
    Vector q_values(const AgentState& s, const CandidateList& candidates, Network which) const;

    /// Top-n candidate ids by online Q (ties to the lowest id). In explore mode each
    /// slot is instead filled by a uniform draw with probability epsilon().
    IdList select_batch(const AgentState& s, const CandidateList& candidates, int n, bool explore);

    /// r + gamma * Q_target(s', argmax_a Q_online(s', a)); r when terminal.
    double td_target(const Transition& tr) const;

    /// One optimizer step on the mean squared TD error of the batch. Returns the
    /// loss before the step. Copies online into target every sync_period calls.
    double td_update(const std::vector<Transition>& batch);

    /// Mean squared TD error of the batch without updating anything.
    double td_loss(const std::vector<Transition>& batch) const;

    void sync_target();
    /// Replace the online parameters (target follows); optimizer moments reset.
    void reset_parameters(const nn::DenseNet& online);
    void set_learning_rate(double lr) { opt_.config.learning_rate = lr; }
    void reseed_exploration(std::uint64_t seed) { explore_rng_.seed(seed); }

    // Instrumentation: network evaluations performed, by network.
    std::uint64_t online_evaluations() const noexcept { return online_evals_; }
    std::uint64_t target_evaluations() const noexcept { return target_evals_; }

    nlohmann::json to_json() const;
    static QAgent from_json(const nlohmann::json& j);

private:
    const nn::DenseNet& net(Network which) const { return which == Network::online ? online_ : target_; }
    Matrix inputs_for(const AgentState& s, const CandidateList& candidates) const;
    void count(Network which, std::uint64_t n) const;

    AgentConfig cfg_;
    nn::DenseNet online_;
    nn::DenseNet target_;
    nn::OptimizerState opt_;
    std::int64_t updates_ = 0;
    std::int64_t explore_steps_ = 0;
    Rng explore_rng_;
    mutable std::uint64_t online_evals_ = 0;
    mutable std::uint64_t target_evals_ = 0;
};

/// Bounded FIFO of transitions with seeded uniform sampling without replacement.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, std::uint64_t seed);

    void push(Transition tr);
    std::vector<Transition> sample(std::size_t k);

    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    bool empty() const noexcept { return entries_.empty(); }
    const std::deque<Transition>& entries() const noexcept { return entries_; }

private:
    std::size_t capacity_;
    std::deque<Transition> entries_;
    Rng rng_;
};

inline constexpr const char* kAgentCheckpointFormat = "issm_agent_v1";

}  // namespace issm
