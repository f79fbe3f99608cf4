#pragma once

// Tiny synthetic environments for episode-level tests.

#include <memory>

#include "issm/alsim.hpp"
#include "issm/datagen.hpp"

namespace testing {

inline std::shared_ptr<const issm::Dataset> tiny_dataset(std::uint64_t seed, int classes = 3, int per_class = 20) {
    issm::SyntheticSpec s;
    s.class_count = classes;
    s.samples_per_class = per_class;
    s.joints = 3;
    s.dims = 2;
    s.frames = 8;
    s.class_separation = 0.6;
    s.seed = seed;
    return std::make_shared<const issm::Dataset>(issm::Dataset::from_sequences(issm::generate(s)));
}

inline issm::EnvConfig tiny_env_config(int budget, int batch_n, std::uint64_t seed) {
    issm::EnvConfig cfg;
    cfg.budget = budget;
    cfg.batch_n = batch_n;
    cfg.n_bins = 4;
    cfg.recognizer.hidden = {8, 4};
    cfg.recognizer.epochs = 5;
    cfg.recognizer.seed = seed;
    return cfg;
}

inline issm::PoolEnvironment tiny_env(std::uint64_t seed, int budget = 10, int batch_n = 5) {
    auto data = tiny_dataset(seed);
    const issm::PoolSplit split = issm::split_pools(*data, 6, 6, seed);
    return issm::PoolEnvironment(data, split, tiny_env_config(budget, batch_n, seed));
}

inline issm::AgentConfig tiny_agent_config(std::uint64_t seed) {
    issm::AgentConfig cfg;
    cfg.n_bins = 4;
    cfg.hidden = {8, 4};
    cfg.batch_size = 4;
    cfg.sync_period = 3;
    cfg.epsilon = issm::EpsilonSchedule{1.0, 0.1, 4};
    cfg.seed = seed;
    return cfg;
}

}  // namespace testing
