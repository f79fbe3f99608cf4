#include "issm/metatune.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "issm/errors.hpp"
#include "issm/rng.hpp"

namespace issm {

void MetaConfig::validate() const {
    if (horizon < 1) throw ConfigError("meta horizon must be >= 1");
    if (!(meta_lr >= 0.0) || !std::isfinite(meta_lr)) throw ConfigError("meta learning rate must be >= 0");
    if (inner_steps < 1) throw ConfigError("inner_steps must be >= 1");
    if (!(inner_lr >= 0.0) || !std::isfinite(inner_lr)) throw ConfigError("inner learning rate must be >= 0");
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw ConfigError("split_fraction must lie in (0, 1)");
    if (iterations < 0) throw ConfigError("meta iterations must be >= 0");
}

nlohmann::json MetaConfig::to_json() const {
    return {{"horizon", horizon},           {"meta_lr", meta_lr},
            {"inner_steps", inner_steps},   {"inner_lr", inner_lr},
            {"split_fraction", split_fraction}, {"iterations", iterations}};
}

MetaConfig MetaConfig::from_json(const nlohmann::json& j) {
    MetaConfig c;
    c.horizon = j.at("horizon").get<int>();
    c.meta_lr = j.at("meta_lr").get<double>();
    c.inner_steps = j.at("inner_steps").get<int>();
    c.inner_lr = j.at("inner_lr").get<double>();
    c.split_fraction = j.at("split_fraction").get<double>();
    c.iterations = j.at("iterations").get<int>();
    c.validate();
    return c;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_virtual(const std::vector<int>& labels,
                                                                            double fraction, std::uint64_t seed) {
    const std::size_t n = labels.size();
    if (n < 2) throw InsufficientDataError("virtual split needs at least two samples");
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split_fraction must lie in (0, 1)");
    const auto want = static_cast<std::size_t>(
        std::clamp<long long>(std::llround(fraction * static_cast<double>(n)), 1, static_cast<long long>(n) - 1));

    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) groups[labels[i]].push_back(i);
    // Stratifying keeps one member of every class on the test side, which only
    // fits when the requested train share leaves room for it.
    const bool stratify = std::all_of(groups.begin(), groups.end(), [](const auto& g) { return g.second.size() >= 2; }) &&
                          want + groups.size() <= n;

    Rng rng(seed);
    std::vector<std::size_t> train;
    if (stratify) {
        std::vector<std::pair<int, std::size_t>> quota;
        std::vector<std::pair<double, int>> remainders;
        std::size_t assigned = 0;
        for (auto& [cls, idx] : groups) {
            std::shuffle(idx.begin(), idx.end(), rng);
            const double exact = static_cast<double>(want) * static_cast<double>(idx.size()) / static_cast<double>(n);
            const auto base = std::min(static_cast<std::size_t>(std::floor(exact)), idx.size() - 1);
            quota.emplace_back(cls, base);
            remainders.emplace_back(exact - static_cast<double>(base), cls);
            assigned += base;
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t k = 0; assigned < want; k = (k + 1) % remainders.size()) {
            auto it = std::find_if(quota.begin(), quota.end(),
                                   [&](const auto& q) { return q.first == remainders[k].second; });
            if (it->second + 1 < groups[it->first].size()) {
                ++it->second;
                ++assigned;
            }
        }
        for (const auto& [cls, q] : quota) {
            const auto& idx = groups[cls];
            train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(q));
        }
    } else {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        std::shuffle(all.begin(), all.end(), rng);
        train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(want));
    }
    std::sort(train.begin(), train.end());
    std::vector<std::size_t> test;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::binary_search(train.begin(), train.end(), i)) test.push_back(i);
    }
    return {train, test};
}

std::pair<IdList, IdList> split_virtual(const Dataset& ds, const IdList& initial, double fraction,
                                        std::uint64_t seed) {
    IdList sorted = initial;
    std::sort(sorted.begin(), sorted.end());
    const auto [tr, te] = split_virtual(ds.labels(sorted), fraction, seed);
    IdList a, b;
    for (std::size_t i : tr) a.push_back(sorted[i]);
    for (std::size_t i : te) b.push_back(sorted[i]);
    return {a, b};
}

namespace {

QAgent inner_agent(const nn::DenseNet& params, AgentConfig cfg, double lr) {
    cfg.learning_rate = lr;
    return QAgent(std::move(cfg), params);
}

void check_horizon(const Trajectory& traj, int horizon) {
    if (horizon < 1 || traj.steps.size() != static_cast<std::size_t>(horizon)) {
        throw InvalidInputError("trajectory has " + std::to_string(traj.steps.size()) + " steps, horizon is " +
                                std::to_string(horizon));
    }
}

// Residuals Q(s_t,a_t) - r_{t+1} - gamma Q(s_{t+1},a_{t+1}) and the trace of the
// first term, for backpropagation.
struct Residuals {
    nn::ForwardTrace trace;
    Vector delta;
};

Residuals residuals(const nn::DenseNet& net, const Trajectory& traj, double gamma) {
    const auto h = static_cast<Eigen::Index>(traj.steps.size());
    Matrix x(net.input_dim(), h + 1);
    for (Eigen::Index t = 0; t < h; ++t) {
        const auto& st = traj.steps[static_cast<std::size_t>(t)];
        const Vector v = q_input(st.state, st.action);
        if (v.size() != net.input_dim()) throw ShapeError("trajectory features do not match the Q-network input");
        x.col(t) = v;
    }
    if (traj.tail) {
        x.col(h) = q_input(traj.tail->first, traj.tail->second);
    } else {
        x.col(h).setZero();
    }
    nn::ForwardTrace tr = net.trace(Matrix(x.leftCols(h)));
    const Vector q = tr.output().row(0).transpose();
    const double tail_q = traj.tail ? net.forward(x.col(h))[0] : 0.0;
    Vector delta(h);
    for (Eigen::Index t = 0; t < h; ++t) {
        const double next = t + 1 < h ? q[t + 1] : tail_q;
        delta[t] = q[t] - traj.steps[static_cast<std::size_t>(t)].reward - gamma * next;
    }
    return {std::move(tr), std::move(delta)};
}

}  // namespace

nn::DenseNet inner_update(const nn::DenseNet& meta_init, const AgentConfig& agent_cfg,
                          const std::vector<Transition>& episode, const MetaConfig& cfg) {
    if (episode.empty()) throw InsufficientDataError("inner update on an empty episode");
    QAgent agent = inner_agent(meta_init, agent_cfg, cfg.inner_lr);
    for (int k = 0; k < cfg.inner_steps; ++k) agent.td_update(episode);
    return agent.online();
}

double meta_loss(const nn::DenseNet& adapted_net, const Trajectory& traj, int horizon, double gamma) {
    check_horizon(traj, horizon);
    return residuals(adapted_net, traj, gamma).delta.squaredNorm();
}

nn::Gradients meta_loss_gradient(const nn::DenseNet& adapted_net, const Trajectory& traj, int horizon, double gamma) {
    check_horizon(traj, horizon);
    const Residuals r = residuals(adapted_net, traj, gamma);
    return adapted_net.backward(r.trace, Matrix(2.0 * r.delta.transpose()));
}

void meta_update(nn::DenseNet& meta_init, const nn::Gradients& grad, double step) {
    if (!(step >= 0.0) || !std::isfinite(step)) throw InvalidInputError("meta learning rate must be >= 0");
    meta_init.apply_delta(grad, step);
}

MetaResult meta_train(nn::DenseNet start, const AgentConfig& agent_cfg, const MetaConfig& cfg,
                      const MetaTaskSource& tasks) {
    cfg.validate();
    MetaResult out{std::move(start), {}};
    for (int it = 0; it < cfg.iterations; ++it) {
        const MetaTask task = tasks(it, out.init);
        MetaIterationRecord rec;
        rec.iteration = it;
        rec.inner_loss_before = inner_agent(out.init, agent_cfg, cfg.inner_lr).td_loss(task.train_episode);
        const nn::DenseNet adapted = inner_update(out.init, agent_cfg, task.train_episode, cfg);
        rec.inner_loss_after = inner_agent(adapted, agent_cfg, cfg.inner_lr).td_loss(task.train_episode);
        const Trajectory traj = task.rollout_test(adapted);
        rec.meta_loss = meta_loss(adapted, traj, cfg.horizon, agent_cfg.gamma);
        meta_update(out.init, meta_loss_gradient(adapted, traj, cfg.horizon, agent_cfg.gamma), cfg.meta_lr);
        out.history.push_back(rec);
    }
    return out;
}

std::vector<Transition> collect_episode(PoolEnvironment env, const nn::DenseNet& q_net, const AgentConfig& agent_cfg,
                                        double epsilon, std::uint64_t seed, std::size_t max_next_candidates) {
    AgentConfig cfg = agent_cfg;
    cfg.epsilon = EpsilonSchedule{epsilon, epsilon, 1};
    QAgent agent(cfg, q_net);
    agent.reseed_exploration(derive_seed(seed, "collect.exploration"));
    ReplayBuffer replay(std::max<std::size_t>(1, static_cast<std::size_t>(env.budget()) + 1),
                        derive_seed(seed, "collect.replay"));
    EpisodeOptions opts;
    opts.mode = EpisodeMode::train;
    opts.storage = TransitionStorage::every_selected;
    opts.updates_per_step = 0;
    opts.max_next_candidates = max_next_candidates;
    opts.seed = seed;
    run_episode(env, agent, &replay, opts);
    return {replay.entries().begin(), replay.entries().end()};
}

Trajectory rollout_greedy(PoolEnvironment env, const nn::DenseNet& q_net, const AgentConfig& agent_cfg, int horizon) {
    QAgent agent(agent_cfg, q_net);
    Trajectory traj;
    AgentState s = env.state();
    CandidateList cands = env.candidates();
    for (int t = 0; t < horizon; ++t) {
        if (env.terminal()) {
            throw InvalidInputError("environment terminated after " + std::to_string(t) + " of " +
                                    std::to_string(horizon) + " meta rollout steps");
        }
        const IdList picked = agent.select_batch(s, cands, env.next_batch_size(), false);
        const auto it = std::find_if(cands.begin(), cands.end(),
                                     [&](const ActionFeatures& a) { return a.candidate_id == picked.front(); });
        const StepResult res = env.step(picked);
        traj.steps.push_back(TrajectoryStep{s, *it, res.reward});
        s = res.next_state;
        cands = res.terminal ? CandidateList{} : env.candidates();
    }
    if (!env.terminal()) {
        const IdList next = agent.select_batch(s, cands, 1, false);
        const auto it = std::find_if(cands.begin(), cands.end(),
                                     [&](const ActionFeatures& a) { return a.candidate_id == next.front(); });
        traj.tail = std::make_pair(s, *it);
    }
    return traj;
}

int steps_to_threshold(const nn::DenseNet& init, const AgentConfig& agent_cfg, const std::vector<Transition>& episode,
                       double threshold, int max_steps) {
    QAgent agent(agent_cfg, init);
    for (int step = 0; step <= max_steps; ++step) {
        if (agent.td_loss(episode) <= threshold) return step;
        if (step < max_steps) agent.td_update(episode);
    }
    return max_steps + 1;
}

nlohmann::json meta_checkpoint(const nn::DenseNet& params, const MetaConfig& cfg, const AgentConfig& agent_cfg) {
    return {{"format", kMetaCheckpointFormat},
            {"meta", cfg.to_json()},
            {"agent", agent_cfg.to_json()},
            {"network", params.to_json()}};
}

}  // namespace issm
