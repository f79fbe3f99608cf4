#include "issm/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "issm/errors.hpp"
#include "issm/rng.hpp"

namespace issm {

namespace {

using nlohmann::json;

// Walks one JSON object, collecting type errors and unknown keys instead of
// stopping at the first problem.
class Reader {
public:
    Reader(const json* obj, std::string path, std::vector<std::string>& errors)
        : obj_(obj), path_(std::move(path)), errors_(errors) {
        if (obj_ && !obj_->is_object()) {
            errors_.push_back(path_ + ": expected an object");
            obj_ = nullptr;
        }
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return obj_ && obj_->contains(key);
    }

    template <typename T>
    bool get(const std::string& key, T& dst) {
        if (!has(key)) return false;
        try {
            dst = obj_->at(key).get<T>();
            return true;
        } catch (const json::exception&) {
            errors_.push_back(where(key) + ": wrong type (" + obj_->at(key).dump() + ")");
            return false;
        }
    }

    Reader child(const std::string& key) { return Reader(has(key) ? &obj_->at(key) : nullptr, where(key), errors_); }

    void finish() {
        if (!obj_) return;
        for (const auto& [key, value] : obj_->items()) {
            if (!seen_.count(key)) errors_.push_back(where(key) + ": unknown key");
        }
    }

    std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    void error(const std::string& key, const std::string& msg) { errors_.push_back(where(key) + ": " + msg); }

private:
    const json* obj_;
    std::string path_;
    std::vector<std::string>& errors_;
    std::set<std::string> seen_;
};

template <typename F>
void check(std::vector<std::string>& errors, F&& f) {
    try {
        f();
    } catch (const Error& e) {
        errors.emplace_back(e.what());
    }
}

}  // namespace

std::string format_real(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::size_t PoolsBlock::resolved_reward_n() const {
    if (reward_n) return *reward_n;
    return std::max<std::size_t>(10, static_cast<std::size_t>(std::ceil(0.15 * static_cast<double>(init_labeled_n))));
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    std::vector<std::string> errors;
    ExperimentConfig c;
    Reader root(&j, "", errors);

    {
        Reader r = root.child("dataset");
        std::string source = "synthetic";
        r.get("source", source);
        if (source == "synthetic") {
            c.dataset.source = DatasetSource::synthetic;
        } else if (source == "feature_file") {
            c.dataset.source = DatasetSource::feature_file;
        } else {
            r.error("source", "expected synthetic or feature_file, got '" + source + "'");
        }
        Reader s = r.child("synthetic");
        auto& sp = c.dataset.synthetic;
        s.get("class_count", sp.class_count);
        s.get("samples_per_class", sp.samples_per_class);
        s.get("joints", sp.joints);
        s.get("dims", sp.dims);
        s.get("frames", sp.frames);
        s.get("class_separation", sp.class_separation);
        s.get("noise_sigma", sp.noise_sigma);
        std::uint64_t fixed = 0;
        if (s.get("seed", fixed)) c.dataset.fixed_seed = fixed;
        s.finish();
        std::string path;
        if (r.get("path", path)) c.dataset.path = path;
        std::string format = "csv";
        if (r.get("format", format)) check(errors, [&] { c.dataset.format = feature_format_from_string(format); });
        r.finish();
        if (c.dataset.source == DatasetSource::synthetic) check(errors, [&] { sp.validate(); });
        if (c.dataset.source == DatasetSource::feature_file && c.dataset.path.empty()) {
            errors.emplace_back("dataset.path: required for feature_file datasets");
        }
    }
    {
        Reader r = root.child("pools");
        r.get("init_labeled_n", c.pools.init_labeled_n);
        std::size_t reward = 0;
        if (r.get("reward_n", reward)) c.pools.reward_n = reward;
        r.get("test_n", c.pools.test_n);
        r.get("budget", c.pools.budget);
        r.get("batch_n", c.pools.batch_n);
        r.finish();
        if (c.pools.init_labeled_n < 1) r.error("init_labeled_n", "must be >= 1");
        if (c.pools.resolved_reward_n() < 1) r.error("reward_n", "must be >= 1");
        if (c.pools.budget < 0) r.error("budget", "must be >= 0");
        if (c.pools.batch_n < 1) r.error("batch_n", "must be >= 1");
    }
    {
        Reader r = root.child("agent");
        auto& a = c.agent;
        r.get("gamma", a.gamma);
        r.get("epsilon_start", a.epsilon.start);
        r.get("epsilon_end", a.epsilon.end);
        r.get("sync_period", a.sync_period);
        r.get("replay_capacity", a.replay_capacity);
        r.get("batch_size", a.batch_size);
        r.get("hidden", a.hidden);
        r.get("n_bins", a.n_bins);
        r.get("curvature", a.curvature);
        r.get("learning_rate", a.learning_rate);
        r.finish();
        check(errors, [&] { a.validate(); });
    }
    {
        Reader r = root.child("recognizer");
        auto& rc = c.recognizer;
        r.get("epochs", rc.epochs);
        r.get("hidden", rc.hidden);
        r.get("learning_rate", rc.learning_rate);
        r.get("batch_size", rc.batch_size);
        r.get("standardize", rc.standardize);
        r.finish();
        if (rc.epochs < 1) r.error("epochs", "must be >= 1");
        if (rc.batch_size < 1) r.error("batch_size", "must be >= 1");
        if (!(rc.learning_rate > 0.0)) r.error("learning_rate", "must be positive");
        if (rc.hidden.empty()) r.error("hidden", "needs at least one layer (the last one is the embedding)");
        for (auto h : rc.hidden) {
            if (h < 1) r.error("hidden", "widths must be positive");
        }
    }
    {
        Reader r = root.child("kernel");
        if (r.has("bandwidth")) {
            json bw;
            r.get("bandwidth", bw);
            if (bw.is_string() && bw.get<std::string>() == "median") {
                c.kernel.mode = BandwidthMode::median_heuristic;
            } else if (bw.is_number() && bw.get<double>() > 0.0) {
                c.kernel = KernelConfig::fixed(bw.get<double>());
            } else {
                r.error("bandwidth", "expected \"median\" or a positive number");
            }
        }
        long long rows = c.kernel.max_rows_per_side;
        if (r.get("max_rows_per_side", rows)) {
            if (rows < 2) r.error("max_rows_per_side", "must be >= 2");
            c.kernel.max_rows_per_side = rows;
        }
        r.finish();
    }
    {
        Reader r = root.child("train");
        auto& t = c.train;
        r.get("episodes_per_seed", t.episodes_per_seed);
        r.get("updates_per_step", t.updates_per_step);
        std::string storage;
        if (r.get("transition_storage", storage)) {
            check(errors, [&] { t.storage = transition_storage_from_string(storage); });
        }
        r.get("max_next_candidates", t.max_next_candidates);
        r.get("epsilon_decay_fraction", t.epsilon_decay_fraction);
        r.get("seeds", t.seeds);
        std::string init;
        if (r.get("init_from", init)) t.init_from = init;
        r.finish();
        if (t.episodes_per_seed < 1) r.error("episodes_per_seed", "must be >= 1");
        if (t.updates_per_step < 0) r.error("updates_per_step", "must be >= 0");
        if (!(t.epsilon_decay_fraction > 0.0 && t.epsilon_decay_fraction <= 1.0)) {
            r.error("epsilon_decay_fraction", "must lie in (0, 1]");
        }
    }
    {
        Reader r = root.child("meta");
        auto& m = c.meta;
        r.get("enabled", m.enabled);
        r.get("horizon", m.config.horizon);
        r.get("meta_lr", m.config.meta_lr);
        r.get("inner_steps", m.config.inner_steps);
        r.get("inner_lr", m.config.inner_lr);
        r.get("split_fraction", m.config.split_fraction);
        r.get("iterations", m.config.iterations);
        r.get("pool_n", m.pool_n);
        r.get("init_labeled_n", m.init_labeled_n);
        r.get("reward_n", m.reward_n);
        r.get("batch_n", m.batch_n);
        r.get("collect_epsilon", m.collect_epsilon);
        r.finish();
        check(errors, [&] { m.config.validate(); });
        if (m.batch_n < 1) r.error("batch_n", "must be >= 1");
        if (m.init_labeled_n < 1 || m.reward_n < 1) r.error("init_labeled_n", "meta pools need labeled and reward samples");
        if (!(m.collect_epsilon >= 0.0 && m.collect_epsilon <= 1.0)) r.error("collect_epsilon", "must lie in [0, 1]");
    }
    root.get("seeds", c.seeds);
    if (c.seeds.empty()) errors.emplace_back("seeds: at least one seed is required");
    if (root.get("methods", c.methods)) {
        std::set<std::string> seen;
        for (const auto& m : c.methods) {
            if (m != "issm" && m != "uniform" && m != "margin" && m != "coreset") {
                errors.push_back("methods: unknown method '" + m + "'");
            }
            if (!seen.insert(m).second) errors.push_back("methods: '" + m + "' listed twice");
        }
    }
    std::string ckpt;
    if (root.get("checkpoint", ckpt)) c.checkpoint = ckpt;
    {
        Reader r = root.child("output");
        r.get("record_wall_time", c.record_wall_time);
        r.finish();
    }
    root.finish();

    if (!errors.empty()) {
        std::string report = "invalid configuration (" + std::to_string(errors.size()) + " problem" +
                             (errors.size() == 1 ? "" : "s") + "):";
        for (const auto& e : errors) report += "\n  - " + e;
        throw ConfigError(report);
    }
    return c;
}

json ExperimentConfig::to_json() const {
    json ds;
    ds["source"] = dataset.source == DatasetSource::synthetic ? "synthetic" : "feature_file";
    if (dataset.source == DatasetSource::synthetic) {
        const auto& s = dataset.synthetic;
        ds["synthetic"] = {{"class_count", s.class_count},         {"samples_per_class", s.samples_per_class},
                           {"joints", s.joints},                   {"dims", s.dims},
                           {"frames", s.frames},                   {"class_separation", s.class_separation},
                           {"noise_sigma", s.noise_sigma}};
        if (dataset.fixed_seed) ds["synthetic"]["seed"] = *dataset.fixed_seed;
    } else {
        ds["path"] = dataset.path.string();
        ds["format"] = dataset.format == FeatureFormat::csv ? "csv" : "jsonl";
    }
    json kernel_bw = kernel.mode == BandwidthMode::median_heuristic ? json("median") : json(kernel.sigma);
    json out = {
        {"dataset", ds},
        {"pools",
         {{"init_labeled_n", pools.init_labeled_n},
          {"reward_n", pools.resolved_reward_n()},
          {"test_n", pools.test_n},
          {"budget", pools.budget},
          {"batch_n", pools.batch_n}}},
        {"agent",
         {{"gamma", agent.gamma},
          {"epsilon_start", agent.epsilon.start},
          {"epsilon_end", agent.epsilon.end},
          {"sync_period", agent.sync_period},
          {"replay_capacity", agent.replay_capacity},
          {"batch_size", agent.batch_size},
          {"hidden", agent.hidden},
          {"n_bins", agent.n_bins},
          {"curvature", agent.curvature},
          {"learning_rate", agent.learning_rate}}},
        {"recognizer",
         {{"epochs", recognizer.epochs},
          {"hidden", recognizer.hidden},
          {"learning_rate", recognizer.learning_rate},
          {"batch_size", recognizer.batch_size},
          {"standardize", recognizer.standardize}}},
        {"kernel", {{"bandwidth", kernel_bw}, {"max_rows_per_side", kernel.max_rows_per_side}}},
        {"train",
         {{"episodes_per_seed", train.episodes_per_seed},
          {"updates_per_step", train.updates_per_step},
          {"transition_storage", to_string(train.storage)},
          {"max_next_candidates", train.max_next_candidates},
          {"epsilon_decay_fraction", train.epsilon_decay_fraction},
          {"seeds", train.seeds}}},
        {"meta",
         {{"enabled", meta.enabled},
          {"horizon", meta.config.horizon},
          {"meta_lr", meta.config.meta_lr},
          {"inner_steps", meta.config.inner_steps},
          {"inner_lr", meta.config.inner_lr},
          {"split_fraction", meta.config.split_fraction},
          {"iterations", meta.config.iterations},
          {"pool_n", meta.pool_n},
          {"init_labeled_n", meta.init_labeled_n},
          {"reward_n", meta.reward_n},
          {"batch_n", meta.batch_n},
          {"collect_epsilon", meta.collect_epsilon}}},
        {"seeds", seeds},
        {"methods", methods},
        {"output", {{"record_wall_time", record_wall_time}}}};
    if (!train.init_from.empty()) out["train"]["init_from"] = train.init_from.string();
    if (!checkpoint.empty()) out["checkpoint"] = checkpoint.string();
    return out;
}

World build_world(const ExperimentConfig& cfg, std::uint64_t seed) {
    World w;
    if (cfg.dataset.source == DatasetSource::synthetic) {
        SyntheticSpec spec = cfg.dataset.synthetic;
        spec.seed = cfg.dataset.fixed_seed ? *cfg.dataset.fixed_seed : derive_seed(seed, "dataset");
        w.data = std::make_shared<const Dataset>(Dataset::from_sequences(generate(spec)));
    } else {
        w.data = std::make_shared<const Dataset>(load_feature_file(cfg.dataset.path, cfg.dataset.format));
    }
    if (cfg.pools.test_n > 0) {
        auto [test, rest] = stratified_take(*w.data, w.data->ids(), cfg.pools.test_n, derive_seed(seed, "split", 0));
        w.test = std::move(test);
        w.universe = std::move(rest);
    } else {
        w.universe = w.data->ids();
    }
    return w;
}

EnvConfig environment_config(const ExperimentConfig& cfg, std::uint64_t seed) {
    EnvConfig e;
    e.budget = cfg.pools.budget;
    e.batch_n = cfg.pools.batch_n;
    e.n_bins = cfg.agent.n_bins;
    e.curvature = cfg.agent.curvature;
    e.kernel = cfg.kernel;
    e.kernel.subsample_seed = derive_seed(seed, "kernel");
    e.recognizer = cfg.recognizer;
    e.recognizer.seed = derive_seed(seed, "recognizer");
    return e;
}

PoolEnvironment make_environment(const ExperimentConfig& cfg, const World& world, std::uint64_t seed,
                                 const std::string& stream, std::uint64_t index) {
    PoolSplit split = split_pools(*world.data, world.universe, cfg.pools.init_labeled_n,
                                  cfg.pools.resolved_reward_n(), derive_seed(derive_seed(seed, "split"), stream, index));
    return PoolEnvironment(world.data, std::move(split), environment_config(cfg, seed), world.test);
}

AgentConfig resolved_agent_config(const ExperimentConfig& cfg) {
    AgentConfig a = cfg.agent;
    const std::uint64_t base = cfg.train_seeds().front();
    a.seed = derive_seed(base, "agent");
    const auto per_episode = (cfg.pools.budget + cfg.pools.batch_n - 1) / cfg.pools.batch_n;
    const double total = static_cast<double>(cfg.train_seeds().size()) * cfg.train.episodes_per_seed * per_episode;
    a.epsilon.decay_steps = std::max<std::int64_t>(1, std::llround(cfg.train.epsilon_decay_fraction * total));
    return a;
}

TrainResult train_agent(const ExperimentConfig& cfg, const std::optional<nn::DenseNet>& init) {
    const AgentConfig acfg = resolved_agent_config(cfg);
    const std::uint64_t base = cfg.train_seeds().front();
    TrainResult out{init ? QAgent(acfg, *init) : QAgent(acfg), {}};
    out.agent.reseed_exploration(derive_seed(base, "exploration"));
    ReplayBuffer replay(acfg.replay_capacity, derive_seed(base, "replay"));

    std::map<std::uint64_t, World> worlds;
    for (std::uint64_t s : cfg.train_seeds()) {
        if (!worlds.count(s)) worlds.emplace(s, build_world(cfg, s));
    }
    for (int e = 0; e < cfg.train.episodes_per_seed; ++e) {
        for (std::uint64_t s : cfg.train_seeds()) {
            PoolEnvironment env = make_environment(cfg, worlds.at(s), s, "train", static_cast<std::uint64_t>(e));
            EpisodeOptions opts;
            opts.mode = EpisodeMode::train;
            opts.storage = cfg.train.storage;
            opts.updates_per_step = cfg.train.updates_per_step;
            opts.max_next_candidates = cfg.train.max_next_candidates;
            opts.seed = derive_seed(s, "episode", static_cast<std::uint64_t>(e));
            opts.record_wall_time = cfg.record_wall_time;
            EpisodeLog log = run_episode(env, out.agent, &replay, opts);
            log.seed = s;
            out.episodes.push_back(TrainedEpisode{s, e, std::move(log)});
        }
    }
    return out;
}

MetaResult run_metatune(const ExperimentConfig& cfg) {
    const MetaBlock& mb = cfg.meta;
    if (!mb.enabled) throw UsageError("meta tuning is disabled in the configuration (meta.enabled = false)");
    const AgentConfig acfg = resolved_agent_config(cfg);
    const auto& seeds = cfg.train_seeds();
    const std::size_t need_test = mb.init_labeled_n + mb.reward_n +
                                  static_cast<std::size_t>(mb.config.horizon) * static_cast<std::size_t>(mb.batch_n);
    const std::size_t vte_size = mb.pool_n - static_cast<std::size_t>(std::llround(mb.config.split_fraction * mb.pool_n));
    if (vte_size < need_test) {
        throw ConfigError("meta.pool_n too small: virtual-test side holds " + std::to_string(vte_size) +
                          " samples but a horizon rollout needs " + std::to_string(need_test));
    }

    std::map<std::uint64_t, World> worlds;
    for (std::uint64_t s : seeds) {
        if (!worlds.count(s)) worlds.emplace(s, build_world(cfg, s));
    }
    auto side_env = [&](const World& w, const IdList& ids, std::uint64_t seed, int budget) {
        EnvConfig ec = environment_config(cfg, seed);
        ec.budget = budget;
        ec.batch_n = mb.batch_n;
        PoolSplit split = split_pools(*w.data, ids, mb.init_labeled_n, mb.reward_n, derive_seed(seed, "meta.pools"));
        return PoolEnvironment(w.data, std::move(split), ec);
    };

    MetaTaskSource tasks = [&](int it, const nn::DenseNet& params) {
        const std::uint64_t s = seeds[static_cast<std::size_t>(it) % seeds.size()];
        const World& w = worlds.at(s);
        const std::uint64_t task_seed = derive_seed(s, "meta.task", static_cast<std::uint64_t>(it));
        const IdList initial = stratified_take(*w.data, w.universe, mb.pool_n, derive_seed(task_seed, "pool")).first;
        const auto [vtr, vte] = split_virtual(*w.data, initial, mb.config.split_fraction, derive_seed(task_seed, "split"));
        const int horizon_budget = mb.config.horizon * mb.batch_n;
        if (vtr.size() < mb.init_labeled_n + mb.reward_n + 1) {
            throw ConfigError("meta.pool_n too small: virtual-train side cannot hold labeled, reward and unlabeled pools");
        }
        MetaTask task;
        task.train_episode = collect_episode(side_env(w, vtr, derive_seed(task_seed, "vtr"), horizon_budget), params,
                                             acfg, mb.collect_epsilon, derive_seed(task_seed, "collect"));
        auto test_env = std::make_shared<PoolEnvironment>(side_env(w, vte, derive_seed(task_seed, "vte"), horizon_budget));
        task.rollout_test = [test_env, acfg, h = mb.config.horizon](const nn::DenseNet& adapted) {
            return rollout_greedy(*test_env, adapted, acfg, h);
        };
        return task;
    };

    nn::DenseNet init;
    if (!cfg.train.init_from.empty()) {
        init = load_q_network(cfg.train.init_from);
    } else {
        Rng rng(acfg.seed);
        init = make_q_network(acfg, rng);
    }
    return meta_train(std::move(init), acfg, mb.config, tasks);
}

const MethodSummary& ComparisonReport::of(const std::string& method) const {
    for (const auto& s : summary) {
        if (s.method == method) return s;
    }
    throw InvalidInputError("no results for method '" + method + "'");
}

MethodSummary summarize(const std::string& method, const std::vector<const EpisodeLog*>& logs) {
    MethodSummary s;
    s.method = method;
    s.runs = logs.size();
    if (logs.empty()) return s;
    auto stats = [&](auto value, double& mean, double& sd) {
        double sum = 0.0;
        for (const auto* l : logs) sum += value(*l);
        mean = sum / static_cast<double>(logs.size());
        double sq = 0.0;
        for (const auto* l : logs) sq += (value(*l) - mean) * (value(*l) - mean);
        sd = logs.size() > 1 ? std::sqrt(sq / static_cast<double>(logs.size() - 1)) : 0.0;
    };
    stats([](const EpisodeLog& l) { return l.final_evaluation_accuracy(); }, s.mean_final_accuracy,
          s.sd_final_accuracy);
    stats([](const EpisodeLog& l) { return l.auc_of_accuracy_curve(); }, s.mean_auc, s.sd_auc);
    return s;
}

void ComparisonReport::write_csv(std::ostream& out) const {
    out << "row,method,seed,final_accuracy,final_accuracy_sd,auc_of_accuracy_curve,auc_sd\n";
    for (const auto& r : rows) {
        out << "episode," << r.method << ',' << r.seed << ',' << format_real(r.log.final_evaluation_accuracy())
            << ",," << format_real(r.log.auc_of_accuracy_curve()) << ",\n";
    }
    for (const auto& s : summary) {
        out << "summary," << s.method << ",," << format_real(s.mean_final_accuracy) << ','
            << format_real(s.sd_final_accuracy) << ',' << format_real(s.mean_auc) << ',' << format_real(s.sd_auc)
            << '\n';
    }
}

void ComparisonReport::write_text(std::ostream& out) const {
    out << std::left << std::setw(10) << "method" << std::setw(6) << "runs" << std::setw(24) << "final accuracy"
        << "accuracy-curve AUC\n";
    out << std::fixed << std::setprecision(4);
    for (const auto& s : summary) {
        std::ostringstream acc, auc;
        acc << std::fixed << std::setprecision(4) << s.mean_final_accuracy << " +/- " << s.sd_final_accuracy;
        auc << std::fixed << std::setprecision(4) << s.mean_auc << " +/- " << s.sd_auc;
        out << std::setw(10) << s.method << std::setw(6) << s.runs << std::setw(24) << acc.str() << auc.str() << '\n';
    }
    out.unsetf(std::ios::floatfield);
}

ComparisonReport run_comparison(const ExperimentConfig& cfg, const QAgent* agent) {
    const bool wants_issm = std::find(cfg.methods.begin(), cfg.methods.end(), "issm") != cfg.methods.end();
    if (wants_issm && agent == nullptr) throw UsageError("method issm requested but no agent checkpoint was given");
    ComparisonReport report;
    for (std::uint64_t s : cfg.seeds) {
        const World world = build_world(cfg, s);
        const PoolEnvironment start = make_environment(cfg, world, s, "evaluate", 0);
        for (const auto& method : cfg.methods) {
            PoolEnvironment env = start;
            EpisodeLog log;
            if (method == "issm") {
                QAgent frozen = *agent;
                EpisodeOptions opts;
                opts.mode = EpisodeMode::frozen;
                opts.seed = s;
                opts.record_wall_time = cfg.record_wall_time;
                log = run_episode(env, frozen, nullptr, opts);
            } else {
                Selector sel;
                if (method == "uniform") {
                    sel = [s](const PoolEnvironment& e, int n, int it) {
                        return uniform_select(e, n, derive_seed(s, "uniform", static_cast<std::uint64_t>(it)));
                    };
                } else if (method == "margin") {
                    sel = [](const PoolEnvironment& e, int n, int) { return margin_select(e, n); };
                } else {
                    sel = [s](const PoolEnvironment& e, int n, int it) {
                        return coreset_select(e, n, derive_seed(s, "coreset", static_cast<std::uint64_t>(it)));
                    };
                }
                log = run_selector_episode(env, sel, method, s, cfg.record_wall_time);
            }
            log.seed = s;
            report.rows.push_back(ComparisonRow{method, s, std::move(log)});
        }
    }
    for (const auto& method : cfg.methods) {
        std::vector<const EpisodeLog*> logs;
        for (const auto& r : report.rows) {
            if (r.method == method) logs.push_back(&r.log);
        }
        report.summary.push_back(summarize(method, logs));
    }
    return report;
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FilesystemError("cannot open for reading", path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        const auto upto = std::min<std::size_t>(e.byte, text.size());
        const auto line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n'));
        throw ParseError(path.string() + ": invalid JSON: " + e.what(), line);
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FilesystemError("cannot open for writing", path.string());
    out << text;
    if (!out) throw FilesystemError("write failed", path.string());
}

nn::DenseNet load_q_network(const std::filesystem::path& path) {
    const json j = read_json_file(path);
    try {
        const auto format = j.at("format").get<std::string>();
        if (format == kAgentCheckpointFormat) return nn::DenseNet::from_json(j.at("online"));
        if (format == kMetaCheckpointFormat) return nn::DenseNet::from_json(j.at("network"));
        if (format == "nncore_v1") return nn::DenseNet::from_json(j);
        throw InvalidInputError(path.string() + ": unsupported checkpoint format '" + format + "'");
    } catch (const json::exception& e) {
        throw InvalidInputError(path.string() + ": malformed checkpoint: " + e.what());
    }
}

}  // namespace issm
