#pragma once

// Pool-based active-learning environment, the ISSM episode driver, and the
// uniform / margin / core-set baseline selectors.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "issm/agent.hpp"
#include "issm/datagen.hpp"
#include "issm/discrepancy.hpp"
#include "issm/featurize.hpp"
#include "issm/recognizer.hpp"

namespace issm {

struct EnvConfig {
    int budget = 1;
    int batch_n = 1;
    int n_bins = 10;
    double curvature = 1.0;
    KernelConfig kernel;
    RecognizerConfig recognizer;

    void validate() const;
};

struct StepResult {
    double reward = 0.0;
    AgentState next_state;
    bool terminal = false;
};

/// Labeled / unlabeled / reward pools over a shared dataset. The recognizer is
/// retrained from scratch (same seed) on the labeled pool after every step.
/// Copies are independent environments sharing only the immutable dataset.
class PoolEnvironment {
public:
    /// `test_ids` is an optional held-out evaluation set; it never influences
    /// selection or reward.
    PoolEnvironment(std::shared_ptr<const Dataset> data, PoolSplit split, EnvConfig cfg, IdList test_ids = {});

    const Dataset& dataset() const noexcept { return *data_; }
    const EnvConfig& config() const noexcept { return cfg_; }
    const IdList& labeled() const noexcept { return labeled_; }
    const IdList& unlabeled() const noexcept { return unlabeled_; }
    const IdList& reward_set() const noexcept { return reward_; }
    const IdList& test_set() const noexcept { return test_; }
    int budget() const noexcept { return budget_; }
    /// True when the configured budget exceeded the unlabeled pool and was clamped.
    bool budget_clamped() const noexcept { return clamped_; }
    int spent() const noexcept { return spent_; }
    bool terminal() const noexcept { return spent_ >= budget_ || unlabeled_.empty(); }
    /// min(batch_n, budget - spent, |unlabeled|).
    int next_batch_size() const;

    const RecognizerSnapshot& recognizer() const { return *recognizer_; }
    /// Reward-set accuracy of the current recognizer.
    double reward_accuracy() const noexcept { return last_accuracy_; }
    /// Test-set accuracy when a test set exists, otherwise reward-set accuracy.
    double evaluation_accuracy() const;
    /// Every id the recognizer has ever been trained on.
    const std::set<SampleId>& training_audit() const noexcept { return audit_; }

    Matrix labeled_embeddings() const { return labeled_embs_; }
    Matrix unlabeled_embeddings() const { return unlabeled_embs_; }
    /// Class probabilities of the unlabeled pool, rows in unlabeled() order.
    Matrix unlabeled_probabilities() const;

    AgentState state() const;
    /// Action features of every unlabeled sample, in unlabeled() order.
    CandidateList candidates() const;

    /// Moves `selected` into the labeled pool, retrains, and returns the accuracy delta.
    StepResult step(const IdList& selected);

private:
    void retrain();

    std::shared_ptr<const Dataset> data_;
    EnvConfig cfg_;
    IdList labeled_;
    IdList unlabeled_;
    IdList reward_;
    IdList test_;
    Matrix reward_inputs_;
    std::vector<int> reward_labels_;
    int budget_ = 0;
    bool clamped_ = false;
    int spent_ = 0;
    std::shared_ptr<const RecognizerSnapshot> recognizer_;
    Matrix labeled_embs_;
    Matrix unlabeled_embs_;
    double last_accuracy_ = 0.0;
    std::set<SampleId> audit_;
};

struct IterationRecord {
    int iter = 0;
    int spent = 0;
    double mmd = 0.0;  // Euclidean MMD of the post-step state
    double reward = 0.0;
    double accuracy = 0.0;             // reward-set accuracy after the step
    double evaluation_accuracy = 0.0;  // test-set accuracy when available
    IdList selected;
    AgentState state;
    std::int64_t millis = 0;
};

struct EpisodeLog {
    std::string method;
    std::uint64_t seed = 0;
    double initial_accuracy = 0.0;
    double initial_evaluation_accuracy = 0.0;
    std::string evaluation_set;  // "test" or "reward"
    int budget = 0;
    std::vector<IterationRecord> iterations;

    double final_accuracy() const;
    double final_evaluation_accuracy() const;
    double total_reward() const;
    int total_selected() const;
    /// Trapezoid area under evaluation accuracy vs. spent / budget, in [0, 1].
    double auc_of_accuracy_curve() const;

    void write_csv(std::ostream& out) const;
    nlohmann::json summary() const;
};

enum class EpisodeMode { train, frozen };

/// How a selected batch becomes replay transitions: only the first-selected
/// action, or one transition per selected sample sharing the batch reward.
enum class TransitionStorage { first_selected, every_selected };

TransitionStorage transition_storage_from_string(const std::string& s);
std::string to_string(TransitionStorage t);

struct EpisodeOptions {
    EpisodeMode mode = EpisodeMode::frozen;
    TransitionStorage storage = TransitionStorage::first_selected;
    int updates_per_step = 1;
    /// Next-state candidates stored per transition; larger lists are subsampled.
    std::size_t max_next_candidates = 256;
    std::uint64_t seed = 0;
    /// Fill IterationRecord::millis with wall time; off keeps logs byte-reproducible.
    bool record_wall_time = false;
};

/// Runs until the environment is terminal. Train mode explores, pushes
/// transitions and performs TD updates; frozen mode is greedy with no updates.
EpisodeLog run_episode(PoolEnvironment& env, QAgent& agent, ReplayBuffer* replay, const EpisodeOptions& opts);

using Selector = std::function<IdList(const PoolEnvironment& env, int n, int iteration)>;

/// Episode driven by an arbitrary selector (used for the baselines).
EpisodeLog run_selector_episode(PoolEnvironment& env, const Selector& select, const std::string& method,
                                std::uint64_t seed, bool record_wall_time = false);

/// The n ids with the highest score; ties go to the lowest id.
IdList top_scoring(const IdList& ids, const std::vector<double>& scores, int n);

IdList uniform_select(const PoolEnvironment& env, int n, std::uint64_t seed);
/// Top-n marginal index under the current recognizer; ties to the lowest id.
IdList margin_select(const PoolEnvironment& env, int n);
/// k-center greedy in recognizer embedding space.
IdList coreset_select(const PoolEnvironment& env, int n, std::uint64_t seed);

/// k-center greedy on explicit embeddings (rows). Seeds the first pick with
/// `seed` when `labeled` has no rows; ties go to the lowest id.
IdList kcenter_greedy(const Matrix& labeled, const Matrix& unlabeled, const IdList& unlabeled_ids, int n,
                      std::uint64_t seed);

}  // namespace issm
