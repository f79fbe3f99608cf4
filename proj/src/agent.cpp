#include "issm/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "issm/errors.hpp"

namespace issm {

double EpsilonSchedule::at(std::int64_t step) const {
    if (decay_steps <= 0 || step >= decay_steps) return end;
    const double frac = static_cast<double>(step) / static_cast<double>(decay_steps);
    return start + (end - start) * frac;
}

void AgentConfig::validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("agent.gamma must lie in [0, 1)");
    if (!(epsilon.start >= 0.0 && epsilon.start <= 1.0 && epsilon.end >= 0.0 && epsilon.end <= 1.0)) {
        throw ConfigError("agent epsilon schedule endpoints must lie in [0, 1]");
    }
    if (sync_period < 1) throw ConfigError("agent.sync_period must be >= 1");
    if (replay_capacity < 1) throw ConfigError("agent.replay_capacity must be >= 1");
    if (batch_size < 1) throw ConfigError("agent.batch_size must be >= 1");
    if (n_bins < 2) throw ConfigError("agent.n_bins must be >= 2");
    if (!(curvature > 0.0) || !std::isfinite(curvature)) throw ConfigError("agent.curvature must be positive");
    if (!(learning_rate >= 0.0)) throw ConfigError("agent.learning_rate must be >= 0");
    for (auto h : hidden) {
        if (h < 1) throw ConfigError("agent hidden widths must be positive");
    }
}

nlohmann::json AgentConfig::to_json() const {
    return {{"gamma", gamma},
            {"epsilon_start", epsilon.start},
            {"epsilon_end", epsilon.end},
            {"epsilon_decay_steps", epsilon.decay_steps},
            {"sync_period", sync_period},
            {"replay_capacity", replay_capacity},
            {"batch_size", batch_size},
            {"hidden", hidden},
            {"n_bins", n_bins},
            {"curvature", curvature},
            {"learning_rate", learning_rate},
            {"seed", seed}};
}

AgentConfig AgentConfig::from_json(const nlohmann::json& j) {
    AgentConfig c;
    c.gamma = j.at("gamma").get<double>();
    c.epsilon.start = j.at("epsilon_start").get<double>();
    c.epsilon.end = j.at("epsilon_end").get<double>();
    c.epsilon.decay_steps = j.at("epsilon_decay_steps").get<std::int64_t>();
    c.sync_period = j.at("sync_period").get<int>();
    c.replay_capacity = j.at("replay_capacity").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<int>();
    c.hidden = j.at("hidden").get<std::vector<Eigen::Index>>();
    c.n_bins = j.at("n_bins").get<int>();
    c.curvature = j.at("curvature").get<double>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
}

nn::DenseNet make_q_network(const AgentConfig& cfg, Rng& rng) {
    std::vector<Eigen::Index> widths{q_input_dim(cfg.n_bins)};
    std::vector<nn::Activation> acts;
    for (auto h : cfg.hidden) {
        widths.push_back(h);
        acts.push_back(nn::Activation::relu);
    }
    widths.push_back(1);
    acts.push_back(nn::Activation::identity);
    return nn::DenseNet::glorot(widths, acts, rng);
}

namespace {

nn::DenseNet fresh_network(const AgentConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, "agent.init"));
    return make_q_network(cfg, rng);
}

}  // namespace

QAgent::QAgent(AgentConfig cfg) : QAgent(cfg, fresh_network(cfg)) {}

QAgent::QAgent(AgentConfig cfg, nn::DenseNet online)
    : cfg_(std::move(cfg)), online_(std::move(online)), target_(online_),
      opt_(online_, nn::AdamConfig{cfg_.learning_rate}), explore_rng_(derive_seed(cfg_.seed, "exploration")) {
    cfg_.validate();
    if (online_.input_dim() != q_input_dim(cfg_.n_bins) || online_.output_dim() != 1) {
        throw ShapeError("Q-network must map " + std::to_string(q_input_dim(cfg_.n_bins)) + " inputs to 1 output");
    }
}

void QAgent::count(Network which, std::uint64_t n) const {
    (which == Network::online ? online_evals_ : target_evals_) += n;
}

Matrix QAgent::inputs_for(const AgentState& s, const CandidateList& candidates) const {
    const Eigen::Index dim = q_input_dim(cfg_.n_bins);
    Matrix x(dim, static_cast<Eigen::Index>(candidates.size()));
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const Vector v = q_input(s, candidates[i]);
        if (v.size() != dim) {
            throw ShapeError("state-action vector has " + std::to_string(v.size()) + " features, network expects " +
                             std::to_string(dim));
        }
        x.col(static_cast<Eigen::Index>(i)) = v;
    }
    return x;
}

double QAgent::q_value(const AgentState& s, const ActionFeatures& a, Network which) const {
    return q_values(s, CandidateList{a}, which)[0];
}

Vector QAgent::q_values(const AgentState& s, const CandidateList& candidates, Network which) const {
    if (candidates.empty()) return Vector(0);
    count(which, candidates.size());
    return net(which).forward_batch(inputs_for(s, candidates)).row(0).transpose();
}

IdList QAgent::select_batch(const AgentState& s, const CandidateList& candidates, int n, bool explore) {
    if (candidates.empty()) throw InsufficientDataError("no candidates to select from");
    if (n < 1 || static_cast<std::size_t>(n) > candidates.size()) {
        throw InvalidInputError("batch size " + std::to_string(n) + " outside [1, " +
                                std::to_string(candidates.size()) + "]");
    }
    const Vector q = q_values(s, candidates, Network::online);

    // Greedy order: descending Q, ascending id.
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double qa = q[static_cast<Eigen::Index>(a)];
        const double qb = q[static_cast<Eigen::Index>(b)];
        if (qa != qb) return qa > qb;
        return candidates[a].candidate_id < candidates[b].candidate_id;
    });

    IdList picked;
    picked.reserve(static_cast<std::size_t>(n));
    if (!explore) {
        for (int i = 0; i < n; ++i) picked.push_back(candidates[order[static_cast<std::size_t>(i)]].candidate_id);
        return picked;
    }

    const double eps = epsilon();
    ++explore_steps_;
    std::vector<bool> taken(candidates.size(), false);
    std::size_t cursor = 0;  // next greedy position in `order`
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (int slot = 0; slot < n; ++slot) {
        std::size_t chosen;
        if (coin(explore_rng_) < eps) {
            const std::size_t remaining = candidates.size() - static_cast<std::size_t>(slot);
            std::uniform_int_distribution<std::size_t> pick(0, remaining - 1);
            std::size_t k = pick(explore_rng_);
            chosen = 0;
            for (std::size_t i = 0; i < order.size(); ++i) {
                if (taken[order[i]]) continue;
                if (k-- == 0) {
                    chosen = order[i];
                    break;
                }
            }
        } else {
            while (taken[order[cursor]]) ++cursor;
            chosen = order[cursor];
        }
        taken[chosen] = true;
        picked.push_back(candidates[chosen].candidate_id);
    }
    return picked;
}

double QAgent::td_target(const Transition& tr) const {
    if (tr.terminal) return tr.reward;
    if (!tr.next_candidates || tr.next_candidates->empty()) {
        throw InvalidInputError("non-terminal transition without next candidates");
    }
    const CandidateList& next = *tr.next_candidates;
    const Vector q_online = q_values(tr.next_state, next, Network::online);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < q_online.size(); ++i) {
        if (q_online[i] > q_online[best]) best = i;
    }
    const double bootstrap = q_value(tr.next_state, next[static_cast<std::size_t>(best)], Network::target);
    return tr.reward + cfg_.gamma * bootstrap;
}

double QAgent::td_update(const std::vector<Transition>& batch) {
    if (batch.empty()) throw InsufficientDataError("td_update on an empty batch");
    const auto b = static_cast<Eigen::Index>(batch.size());
    Vector targets(b);
    const Eigen::Index dim = q_input_dim(cfg_.n_bins);
    Matrix x(dim, b);
    for (Eigen::Index i = 0; i < b; ++i) {
        const Transition& tr = batch[static_cast<std::size_t>(i)];
        targets[i] = td_target(tr);
        const Vector v = q_input(tr.state, tr.action);
        if (v.size() != dim) throw ShapeError("transition features do not match the Q-network input");
        x.col(i) = v;
    }
    count(Network::online, static_cast<std::uint64_t>(b));
    const nn::ForwardTrace trace = online_.trace(x);
    const Vector err = trace.output().row(0).transpose() - targets;
    const double loss = err.squaredNorm() / static_cast<double>(b);
    const Matrix grad = (2.0 / static_cast<double>(b)) * err.transpose();
    nn::optimizer_step(online_, online_.backward(trace, grad), opt_);
    ++updates_;
    if (updates_ % cfg_.sync_period == 0) sync_target();
    return loss;
}

double QAgent::td_loss(const std::vector<Transition>& batch) const {
    if (batch.empty()) throw InsufficientDataError("td_loss on an empty batch");
    double sum = 0.0;
    for (const Transition& tr : batch) {
        const double err = q_value(tr.state, tr.action, Network::online) - td_target(tr);
        sum += err * err;
    }
    return sum / static_cast<double>(batch.size());
}

void QAgent::sync_target() { target_ = online_; }

void QAgent::reset_parameters(const nn::DenseNet& online) {
    if (!online.same_shape(online_)) throw ShapeError("replacement Q-network has a different shape");
    online_ = online;
    target_ = online;
    opt_ = nn::OptimizerState(online_, opt_.config);
    updates_ = 0;
}

nlohmann::json QAgent::to_json() const {
    return {{"format", kAgentCheckpointFormat},
            {"hyperparameters", cfg_.to_json()},
            {"update_count", updates_},
            {"explore_steps", explore_steps_},
            {"online", online_.to_json()},
            {"target", target_.to_json()}};
}

QAgent QAgent::from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != kAgentCheckpointFormat) {
            throw InvalidInputError("not an agent checkpoint");
        }
        QAgent agent(AgentConfig::from_json(j.at("hyperparameters")), nn::DenseNet::from_json(j.at("online")));
        agent.target_ = nn::DenseNet::from_json(j.at("target"));
        if (!agent.target_.same_shape(agent.online_)) throw ShapeError("online and target networks differ in shape");
        agent.updates_ = j.at("update_count").get<std::int64_t>();
        agent.explore_steps_ = j.at("explore_steps").get<std::int64_t>();
        return agent;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInputError(std::string("malformed agent checkpoint: ") + e.what());
    }
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
    if (capacity_ < 1) throw ConfigError("replay capacity must be >= 1");
}

void ReplayBuffer::push(Transition tr) {
    if (entries_.size() == capacity_) entries_.pop_front();
    entries_.push_back(std::move(tr));
}

std::vector<Transition> ReplayBuffer::sample(std::size_t k) {
    if (entries_.empty()) throw InsufficientDataError("sampling from an empty replay buffer");
    if (k > entries_.size()) {
        throw InvalidInputError("cannot sample " + std::to_string(k) + " of " + std::to_string(entries_.size()) +
                                " transitions without replacement");
    }
    std::vector<std::size_t> idx(entries_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<Transition> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng_)]);
        out.push_back(entries_[idx[i]]);
    }
    return out;
}

}  // namespace issm
