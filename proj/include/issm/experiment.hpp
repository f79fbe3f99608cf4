#pragma once

// Experiment configuration and the runs behind the command-line tool: agent
// training, meta tuning, and method comparison over a list of seeds.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "issm/agent.hpp"
#include "issm/alsim.hpp"
#include "issm/datagen.hpp"
#include "issm/metatune.hpp"

namespace issm {

enum class DatasetSource { synthetic, feature_file };

struct DatasetBlock {
    DatasetSource source = DatasetSource::synthetic;
    SyntheticSpec synthetic;  // seed is derived per run seed unless fixed_seed is set
    std::optional<std::uint64_t> fixed_seed;
    std::filesystem::path path;
    FeatureFormat format = FeatureFormat::csv;
};

struct PoolsBlock {
    std::size_t init_labeled_n = 10;
    std::optional<std::size_t> reward_n;
    std::size_t test_n = 0;
    int budget = 10;
    int batch_n = 5;

    /// Configured value, else max(10, 15% of init_labeled_n).
    std::size_t resolved_reward_n() const;
};

struct TrainBlock {
    int episodes_per_seed = 1;
    int updates_per_step = 1;
    TransitionStorage storage = TransitionStorage::first_selected;
    std::size_t max_next_candidates = 256;
    /// Share of all training selections over which epsilon decays.
    double epsilon_decay_fraction = 0.6;
    /// Seeds for training episodes; empty means the top-level seed list.
    std::vector<std::uint64_t> seeds;
    /// Optional meta checkpoint to start from instead of a random network.
    std::filesystem::path init_from;
};

struct MetaBlock {
    bool enabled = false;
    MetaConfig config;
    /// Size of the labeled set that is split into virtual-train / virtual-test.
    std::size_t pool_n = 200;
    std::size_t init_labeled_n = 10;
    std::size_t reward_n = 20;
    int batch_n = 5;
    /// Exploration while collecting the virtual-train episode.
    double collect_epsilon = 0.3;
};

struct ExperimentConfig {
    DatasetBlock dataset;
    PoolsBlock pools;
    AgentConfig agent;
    RecognizerConfig recognizer;
    KernelConfig kernel;
    TrainBlock train;
    MetaBlock meta;
    std::vector<std::uint64_t> seeds{0};
    std::vector<std::string> methods{"issm", "uniform", "margin", "coreset"};
    std::filesystem::path checkpoint;
    bool record_wall_time = false;

    /// Strict parse: unknown keys, wrong types and out-of-range values are all
    /// collected and reported together in one ConfigError.
    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    const std::vector<std::uint64_t>& train_seeds() const { return train.seeds.empty() ? seeds : train.seeds; }
};

/// Dataset plus the held-out test ids and the ids available for pools.
struct World {
    std::shared_ptr<const Dataset> data;
    IdList universe;
    IdList test;
};

World build_world(const ExperimentConfig& cfg, std::uint64_t seed);
EnvConfig environment_config(const ExperimentConfig& cfg, std::uint64_t seed);
/// Seeded pool split of the world; `stream` separates training episodes from evaluation.
PoolEnvironment make_environment(const ExperimentConfig& cfg, const World& world, std::uint64_t seed,
                                 const std::string& stream, std::uint64_t index);

/// Agent config with the seed and epsilon decay length filled in.
AgentConfig resolved_agent_config(const ExperimentConfig& cfg);

struct TrainedEpisode {
    std::uint64_t seed = 0;
    int episode = 0;
    EpisodeLog log;
};

struct TrainResult {
    QAgent agent;
    std::vector<TrainedEpisode> episodes;
};

TrainResult train_agent(const ExperimentConfig& cfg, const std::optional<nn::DenseNet>& init = std::nullopt);

MetaResult run_metatune(const ExperimentConfig& cfg);

struct ComparisonRow {
    std::string method;
    std::uint64_t seed = 0;
    EpisodeLog log;
};

struct MethodSummary {
    std::string method;
    std::size_t runs = 0;
    double mean_final_accuracy = 0.0;
    double sd_final_accuracy = 0.0;
    double mean_auc = 0.0;
    double sd_auc = 0.0;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;
    std::vector<MethodSummary> summary;

    const MethodSummary& of(const std::string& method) const;
    void write_csv(std::ostream& out) const;
    void write_text(std::ostream& out) const;
};

/// Frozen-deployment episode for every method x seed on identical initial pools.
ComparisonReport run_comparison(const ExperimentConfig& cfg, const QAgent* agent);

MethodSummary summarize(const std::string& method, const std::vector<const EpisodeLog*>& logs);

/// Loads the Q-network from an agent checkpoint or a meta checkpoint.
nn::DenseNet load_q_network(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

std::string format_real(double v);

}  // namespace issm
