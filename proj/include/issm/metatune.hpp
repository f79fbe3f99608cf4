#pragma once

// First-order meta tuning of the Q-network initialization: adapt a copy on a
// virtual-train episode, score the adapted copy on a virtual-test trajectory,
// and move the initialization against that score's gradient.

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "issm/agent.hpp"
#include "issm/alsim.hpp"
#include "issm/datagen.hpp"
#include "issm/nncore.hpp"

namespace issm {

struct MetaConfig {
    int horizon = 10;
    double meta_lr = 1e-3;
    int inner_steps = 5;
    double inner_lr = 1e-3;
    double split_fraction = 0.3;
    int iterations = 200;

    void validate() const;
    nlohmann::json to_json() const;
    static MetaConfig from_json(const nlohmann::json& j);
};

/// Seeded disjoint (virtual_train, virtual_test) index split of `labels`, with
/// virtual_train of size round(fraction * n) clamped to [1, n - 1]. Stratified
/// by class when every class has at least two members.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_virtual(const std::vector<int>& labels,
                                                                            double fraction, std::uint64_t seed);
std::pair<IdList, IdList> split_virtual(const Dataset& ds, const IdList& initial, double fraction,
                                        std::uint64_t seed);

/// inner_steps TD updates on the whole episode, starting from a copy of meta_init.
nn::DenseNet inner_update(const nn::DenseNet& meta_init, const AgentConfig& agent_cfg,
                          const std::vector<Transition>& episode, const MetaConfig& cfg);

struct TrajectoryStep {
    AgentState state;
    ActionFeatures action;
    double reward = 0.0;  // reward received after taking `action`
};

/// H consecutive (state, action, reward) steps plus the (state, action) that
/// followed the last one; `tail` is absent when the episode terminated.
struct Trajectory {
    std::vector<TrajectoryStep> steps;
    std::optional<std::pair<AgentState, ActionFeatures>> tail;
};

/// Sum over the horizon of (Q(s_t,a_t) - r_{t+1} - gamma Q(s_{t+1},a_{t+1}))^2,
/// both Q terms under adapted_net.
double meta_loss(const nn::DenseNet& adapted_net, const Trajectory& traj, int horizon, double gamma);

/// Semi-gradient of meta_loss: the bootstrap term is held constant.
nn::Gradients meta_loss_gradient(const nn::DenseNet& adapted_net, const Trajectory& traj, int horizon, double gamma);

/// meta_init <- meta_init - step * grad.
void meta_update(nn::DenseNet& meta_init, const nn::Gradients& grad, double step);

struct MetaTask {
    std::vector<Transition> train_episode;
    /// Rolls the adapted network out on the virtual-test side.
    std::function<Trajectory(const nn::DenseNet& adapted_net)> rollout_test;
};

/// Builds the task of one meta-iteration; the virtual-train episode may depend
/// on the current initialization.
using MetaTaskSource = std::function<MetaTask(int iteration, const nn::DenseNet& meta_init)>;

struct MetaIterationRecord {
    int iteration = 0;
    double meta_loss = 0.0;
    double inner_loss_before = 0.0;
    double inner_loss_after = 0.0;
};

struct MetaResult {
    nn::DenseNet init;
    std::vector<MetaIterationRecord> history;
};

MetaResult meta_train(nn::DenseNet start, const AgentConfig& agent_cfg, const MetaConfig& cfg,
                      const MetaTaskSource& tasks);

/// Transitions of one episode of `q_net` in a copy of `env`, exploring with a
/// constant epsilon and without any parameter updates.
std::vector<Transition> collect_episode(PoolEnvironment env, const nn::DenseNet& q_net, const AgentConfig& agent_cfg,
                                        double epsilon, std::uint64_t seed, std::size_t max_next_candidates = 256);

/// Greedy H-step rollout of `q_net` in a copy of `env`.
Trajectory rollout_greedy(PoolEnvironment env, const nn::DenseNet& q_net, const AgentConfig& agent_cfg, int horizon);

/// Inner TD steps needed, starting from `init`, until the TD loss on `episode`
/// drops to `threshold` (0 when already there); max_steps + 1 if never.
int steps_to_threshold(const nn::DenseNet& init, const AgentConfig& agent_cfg, const std::vector<Transition>& episode,
                       double threshold, int max_steps);

inline constexpr const char* kMetaCheckpointFormat = "issm_meta_v1";

nlohmann::json meta_checkpoint(const nn::DenseNet& params, const MetaConfig& cfg, const AgentConfig& agent_cfg);

}  // namespace issm
