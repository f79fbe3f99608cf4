#include "issm/alsim.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_map>

#include "issm/errors.hpp"
#include "issm/rng.hpp"

namespace issm {

void EnvConfig::validate() const {
    if (budget < 0) throw ConfigError("budget must be >= 0");
    if (batch_n < 1) throw ConfigError("batch_n must be >= 1");
    if (n_bins < 2) throw ConfigError("n_bins must be >= 2");
    Curvature{curvature};
    if (recognizer.epochs < 1 || recognizer.batch_size < 1 || !(recognizer.learning_rate > 0.0)) {
        throw ConfigError("recognizer epochs, batch_size and learning_rate must be positive");
    }
}

PoolEnvironment::PoolEnvironment(std::shared_ptr<const Dataset> data, PoolSplit split, EnvConfig cfg, IdList test_ids)
    : data_(std::move(data)),
      cfg_(std::move(cfg)),
      labeled_(std::move(split.labeled)),
      unlabeled_(std::move(split.unlabeled)),
      reward_(std::move(split.reward)),
      test_(std::move(test_ids)) {
    if (!data_) throw InvalidInputError("environment needs a dataset");
    cfg_.validate();
    if (labeled_.empty()) throw InsufficientDataError("initial labeled set is empty");
    if (reward_.empty()) throw InsufficientDataError("reward set is empty");
    if (data_->class_count() < 2) throw InsufficientDataError("at least two classes are required");
    for (auto* ids : {&labeled_, &unlabeled_, &reward_, &test_}) std::sort(ids->begin(), ids->end());

    std::set<SampleId> seen;
    for (const auto* ids : {&labeled_, &unlabeled_, &reward_, &test_}) {
        for (SampleId id : *ids) {
            if (!data_->contains(id)) throw InvalidInputError("unknown sample id " + std::to_string(id));
            if (!seen.insert(id).second) throw ProtocolError("sample " + std::to_string(id) + " is in two pools");
        }
    }
    reward_inputs_ = data_->inputs(reward_);
    reward_labels_ = data_->labels(reward_);
    data_->labels(labeled_);  // labeled pool must carry labels
    if (!test_.empty()) data_->labels(test_);

    budget_ = cfg_.budget;
    if (static_cast<std::size_t>(budget_) > unlabeled_.size()) {
        budget_ = static_cast<int>(unlabeled_.size());
        clamped_ = true;
    }
    retrain();
}

int PoolEnvironment::next_batch_size() const {
    const auto pool = static_cast<int>(std::min<std::size_t>(unlabeled_.size(), std::numeric_limits<int>::max()));
    return std::min({cfg_.batch_n, budget_ - spent_, pool});
}

void PoolEnvironment::retrain() {
    const Matrix inputs = data_->inputs(labeled_);
    const std::vector<int> labels = data_->labels(labeled_);
    audit_.insert(labeled_.begin(), labeled_.end());
    recognizer_ = std::make_shared<const RecognizerSnapshot>(
        train_recognizer(inputs, labels, data_->class_count(), cfg_.recognizer));
    labeled_embs_ = recognizer_->embed_rows(inputs);
    unlabeled_embs_ = unlabeled_.empty() ? Matrix(0, recognizer_->feature_dim())
                                         : recognizer_->embed_rows(data_->inputs(unlabeled_));
    last_accuracy_ = evaluate_accuracy(*recognizer_, reward_inputs_, reward_labels_);
}

double PoolEnvironment::evaluation_accuracy() const {
    if (test_.empty()) return last_accuracy_;
    return evaluate_accuracy(*recognizer_, data_->inputs(test_), data_->labels(test_));
}

Matrix PoolEnvironment::unlabeled_probabilities() const {
    if (unlabeled_.empty()) return Matrix(0, recognizer_->class_count());
    return recognizer_->predict_proba_rows(data_->inputs(unlabeled_));
}

AgentState PoolEnvironment::state() const {
    const int budget = std::max(budget_, 1);
    if (unlabeled_.empty()) return exhausted_state(spent_, budget);
    return build_state(FeatureMatrix(labeled_embs_, FeatureOrigin::labeled),
                       FeatureMatrix(unlabeled_embs_, FeatureOrigin::unlabeled), spent_, budget, cfg_.kernel,
                       Curvature{cfg_.curvature});
}

CandidateList PoolEnvironment::candidates() const {
    if (unlabeled_.empty()) return {};
    return build_actions(data_->inputs(unlabeled_), unlabeled_, *recognizer_,
                         FeatureMatrix(unlabeled_embs_, FeatureOrigin::unlabeled), cfg_.n_bins,
                         Curvature{cfg_.curvature});
}

StepResult PoolEnvironment::step(const IdList& selected) {
    const int expected = next_batch_size();
    if (selected.empty()) {
        if (expected > 0) throw ProtocolError("empty selection while budget remains");
        throw ProtocolError("episode is already terminal");
    }
    if (static_cast<int>(selected.size()) != expected) {
        throw ProtocolError("selected " + std::to_string(selected.size()) + " samples, expected " +
                            std::to_string(expected));
    }
    std::set<SampleId> chosen;
    for (SampleId id : selected) {
        if (!chosen.insert(id).second) throw ProtocolError("sample " + std::to_string(id) + " selected twice");
        if (std::binary_search(labeled_.begin(), labeled_.end(), id)) {
            throw ProtocolError("sample " + std::to_string(id) + " is already labeled");
        }
        if (!std::binary_search(unlabeled_.begin(), unlabeled_.end(), id)) {
            throw ProtocolError("sample " + std::to_string(id) + " is not in the unlabeled pool");
        }
    }
    const double before = last_accuracy_;
    IdList remaining;
    remaining.reserve(unlabeled_.size() - selected.size());
    for (SampleId id : unlabeled_) {
        if (!chosen.count(id)) remaining.push_back(id);
    }
    unlabeled_ = std::move(remaining);
    labeled_.insert(labeled_.end(), selected.begin(), selected.end());
    std::sort(labeled_.begin(), labeled_.end());
    spent_ += static_cast<int>(selected.size());
    retrain();

    StepResult out;
    out.reward = last_accuracy_ - before;
    out.next_state = state();
    out.terminal = terminal();
    return out;
}

// ---------------------------------------------------------------------------

double EpisodeLog::final_accuracy() const {
    return iterations.empty() ? initial_accuracy : iterations.back().accuracy;
}

double EpisodeLog::final_evaluation_accuracy() const {
    return iterations.empty() ? initial_evaluation_accuracy : iterations.back().evaluation_accuracy;
}

double EpisodeLog::total_reward() const {
    double sum = 0.0;
    for (const auto& it : iterations) sum += it.reward;
    return sum;
}

int EpisodeLog::total_selected() const {
    return iterations.empty() ? 0 : iterations.back().spent;
}

double EpisodeLog::auc_of_accuracy_curve() const {
    const int total = total_selected();
    if (total == 0) return initial_evaluation_accuracy;
    double area = 0.0;
    double x0 = 0.0;
    double y0 = initial_evaluation_accuracy;
    for (const auto& it : iterations) {
        const double x1 = static_cast<double>(it.spent) / static_cast<double>(total);
        const double y1 = it.evaluation_accuracy;
        area += 0.5 * (x1 - x0) * (y0 + y1);
        x0 = x1;
        y0 = y1;
    }
    return area;
}

namespace {

std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

void EpisodeLog::write_csv(std::ostream& out) const {
    out << "iter,spent,mmd,reward,accuracy,selected_ids,millis\n";
    for (const auto& it : iterations) {
        out << it.iter << ',' << it.spent << ',' << fmt(it.mmd) << ',' << fmt(it.reward) << ',' << fmt(it.accuracy)
            << ',';
        for (std::size_t i = 0; i < it.selected.size(); ++i) {
            if (i) out << ';';
            out << it.selected[i];
        }
        out << ',' << it.millis << '\n';
    }
}

nlohmann::json EpisodeLog::summary() const {
    return {{"method", method},
            {"seed", seed},
            {"final_accuracy", final_evaluation_accuracy()},
            {"auc_of_accuracy_curve", auc_of_accuracy_curve()},
            {"evaluation_set", evaluation_set},
            {"initial_accuracy", initial_evaluation_accuracy},
            {"final_reward_set_accuracy", final_accuracy()},
            {"total_reward", total_reward()},
            {"iterations", iterations.size()},
            {"budget", budget},
            {"total_selected", total_selected()}};
}

TransitionStorage transition_storage_from_string(const std::string& s) {
    if (s == "first_selected") return TransitionStorage::first_selected;
    if (s == "every_selected") return TransitionStorage::every_selected;
    throw ConfigError("unknown transition storage '" + s + "' (expected first_selected or every_selected)");
}

std::string to_string(TransitionStorage t) {
    return t == TransitionStorage::first_selected ? "first_selected" : "every_selected";
}

namespace {

EpisodeLog start_log(const PoolEnvironment& env, const std::string& method, std::uint64_t seed) {
    EpisodeLog log;
    log.method = method;
    log.seed = seed;
    log.initial_accuracy = env.reward_accuracy();
    log.initial_evaluation_accuracy = env.evaluation_accuracy();
    log.evaluation_set = env.test_set().empty() ? "reward" : "test";
    log.budget = env.budget();
    return log;
}

IterationRecord make_record(const PoolEnvironment& env, int iter, const IdList& selected, const StepResult& res,
                            std::int64_t millis) {
    IterationRecord rec;
    rec.iter = iter;
    rec.spent = env.spent();
    rec.mmd = res.next_state.mmd_raw;
    rec.reward = res.reward;
    rec.accuracy = env.reward_accuracy();
    rec.evaluation_accuracy = env.evaluation_accuracy();
    rec.selected = selected;
    rec.state = res.next_state;
    rec.millis = millis;
    return rec;
}

std::shared_ptr<const CandidateList> cap_candidates(CandidateList next, std::size_t cap, std::uint64_t seed) {
    if (cap == 0 || next.size() <= cap) return std::make_shared<const CandidateList>(std::move(next));
    std::vector<std::size_t> idx(next.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = 0; i < cap; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    CandidateList kept;
    kept.reserve(cap);
    for (std::size_t i : idx) kept.push_back(std::move(next[i]));
    return std::make_shared<const CandidateList>(std::move(kept));
}

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ms(Clock::time_point t0, bool record) {
    if (!record) return 0;
    return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count();
}

}  // namespace

EpisodeLog run_episode(PoolEnvironment& env, QAgent& agent, ReplayBuffer* replay, const EpisodeOptions& opts) {
    const bool train = opts.mode == EpisodeMode::train;
    if (train && replay == nullptr) throw UsageError("train mode needs a replay buffer");
    if (opts.updates_per_step < 0) throw ConfigError("updates_per_step must be >= 0");
    if (agent.config().n_bins != env.config().n_bins) {
        throw ConfigError("agent n_bins " + std::to_string(agent.config().n_bins) + " differs from environment " +
                          std::to_string(env.config().n_bins));
    }

    EpisodeLog log = start_log(env, "issm", opts.seed);
    AgentState s = env.state();
    CandidateList cands = env.candidates();
    int iter = 0;
    while (!env.terminal()) {
        const auto t0 = Clock::now();
        const int n = env.next_batch_size();
        const IdList selected = agent.select_batch(s, cands, n, train);
        const StepResult res = env.step(selected);
        CandidateList next = res.terminal ? CandidateList{} : env.candidates();

        if (train) {
            std::unordered_map<SampleId, std::size_t> where;
            for (std::size_t i = 0; i < cands.size(); ++i) where.emplace(cands[i].candidate_id, i);
            auto stored = cap_candidates(next, opts.max_next_candidates,
                                         derive_seed(opts.seed, "next_candidates", static_cast<std::uint64_t>(iter)));
            const std::size_t count = opts.storage == TransitionStorage::first_selected ? 1 : selected.size();
            for (std::size_t k = 0; k < count; ++k) {
                replay->push(Transition{s, cands[where.at(selected[k])], res.reward, res.next_state, stored,
                                        res.terminal});
            }
            const auto batch = static_cast<std::size_t>(agent.config().batch_size);
            for (int u = 0; u < opts.updates_per_step; ++u) {
                agent.td_update(replay->sample(std::min(batch, replay->size())));
            }
        }

        log.iterations.push_back(make_record(env, iter, selected, res, elapsed_ms(t0, opts.record_wall_time)));
        s = res.next_state;
        cands = std::move(next);
        ++iter;
    }
    return log;
}

EpisodeLog run_selector_episode(PoolEnvironment& env, const Selector& select, const std::string& method,
                                std::uint64_t seed, bool record_wall_time) {
    EpisodeLog log = start_log(env, method, seed);
    int iter = 0;
    while (!env.terminal()) {
        const auto t0 = Clock::now();
        const IdList selected = select(env, env.next_batch_size(), iter);
        const StepResult res = env.step(selected);
        log.iterations.push_back(make_record(env, iter, selected, res, elapsed_ms(t0, record_wall_time)));
        ++iter;
    }
    return log;
}

IdList uniform_select(const PoolEnvironment& env, int n, std::uint64_t seed) {
    IdList pool = env.unlabeled();
    if (n < 0 || static_cast<std::size_t>(n) > pool.size()) throw InvalidInputError("uniform_select: n out of range");
    Rng rng(seed);
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(static_cast<std::size_t>(n));
    return pool;
}

IdList top_scoring(const IdList& ids, const std::vector<double>& scores, int n) {
    if (ids.size() != scores.size()) throw ShapeError("top_scoring: one score per id required");
    if (n < 0 || static_cast<std::size_t>(n) > ids.size()) throw InvalidInputError("top_scoring: n out of range");
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ids[a] < ids[b];
    });
    IdList out;
    for (int i = 0; i < n; ++i) out.push_back(ids[order[static_cast<std::size_t>(i)]]);
    return out;
}

IdList margin_select(const PoolEnvironment& env, int n) {
    const IdList& pool = env.unlabeled();
    if (n < 0 || static_cast<std::size_t>(n) > pool.size()) throw InvalidInputError("margin_select: n out of range");
    const Matrix probs = env.unlabeled_probabilities();
    std::vector<double> mi(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        mi[i] = marginal_index(probs.row(static_cast<Eigen::Index>(i)).transpose());
    }
    return top_scoring(pool, mi, n);
}

IdList kcenter_greedy(const Matrix& labeled, const Matrix& unlabeled, const IdList& unlabeled_ids, int n,
                      std::uint64_t seed) {
    if (static_cast<Eigen::Index>(unlabeled_ids.size()) != unlabeled.rows()) {
        throw ShapeError("one id per unlabeled row required");
    }
    if (labeled.rows() > 0 && labeled.cols() != unlabeled.cols()) throw ShapeError("embedding widths differ");
    if (n < 0 || static_cast<std::size_t>(n) > unlabeled_ids.size()) {
        throw InvalidInputError("coreset_select: n out of range");
    }
    const auto m = static_cast<std::size_t>(unlabeled.rows());
    std::vector<double> nearest(m, std::numeric_limits<double>::infinity());
    auto absorb = [&](const Eigen::Ref<const Eigen::RowVectorXd>& center) {
        for (std::size_t i = 0; i < m; ++i) {
            const double d = (unlabeled.row(static_cast<Eigen::Index>(i)) - center).norm();
            nearest[i] = std::min(nearest[i], d);
        }
    };
    for (Eigen::Index r = 0; r < labeled.rows(); ++r) absorb(labeled.row(r));

    std::vector<bool> taken(m, false);
    IdList out;
    for (int k = 0; k < n; ++k) {
        std::size_t best = m;
        if (k == 0 && labeled.rows() == 0) {
            Rng rng(seed);
            best = std::uniform_int_distribution<std::size_t>(0, m - 1)(rng);
        } else {
            for (std::size_t i = 0; i < m; ++i) {
                if (taken[i]) continue;
                if (best == m || nearest[i] > nearest[best] ||
                    (nearest[i] == nearest[best] && unlabeled_ids[i] < unlabeled_ids[best])) {
                    best = i;
                }
            }
        }
        taken[best] = true;
        out.push_back(unlabeled_ids[best]);
        absorb(unlabeled.row(static_cast<Eigen::Index>(best)));
    }
    return out;
}

IdList coreset_select(const PoolEnvironment& env, int n, std::uint64_t seed) {
    return kcenter_greedy(env.labeled_embeddings(), env.unlabeled_embeddings(), env.unlabeled(), n, seed);
}

}  // namespace issm
