// Command-line entry point: train, metatune, compare, generate-data.

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "issm/errors.hpp"
#include "issm/experiment.hpp"
#include "issm/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "1.0.0";
constexpr const char* kManifestFormat = "issm_manifest_v1";

std::string hex64(std::uint64_t v) {
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << v;
    return ss.str();
}

struct Outputs {
    fs::path dir;
    std::vector<std::pair<std::string, std::string>> files;  // relative path, content hash

    void write(const std::string& rel, const std::string& text) {
        issm::write_text_file(dir / rel, text);
        files.emplace_back(rel, hex64(issm::fnv1a64(text)));
    }
};

struct Invocation {
    std::string command;
    issm::ExperimentConfig cfg;
    json config_json;  // normalized config as recorded in the manifest
};

Invocation load(const std::string& command, const fs::path& path, std::optional<std::uint64_t> seed_override) {
    json j;
    try {
        j = issm::read_json_file(path);
    } catch (const issm::ParseError& e) {
        throw issm::ConfigError(std::string(e.what()) + " (line " + std::to_string(e.line()) + ")");
    }
    if (j.is_object() && j.contains("format") && j["format"] == kManifestFormat) {
        const auto recorded = j.value("command", std::string{});
        if (recorded != command) {
            throw issm::UsageError("manifest was written by '" + recorded + "', not '" + command + "'");
        }
        j = j.at("config");
    }
    Invocation inv{command, issm::ExperimentConfig::from_json(j), {}};
    if (seed_override) {
        inv.cfg.seeds = {*seed_override};
        inv.cfg.train.seeds.clear();
    }
    inv.config_json = inv.cfg.to_json();
    return inv;
}

void write_manifest(const Invocation& inv, Outputs& out) {
    const std::string config_text = inv.config_json.dump();
    json files = json::array();
    for (const auto& [rel, hash] : out.files) files.push_back({{"path", rel}, {"fnv1a64", hash}});
    const json manifest = {{"format", kManifestFormat},
                           {"command", inv.command},
                           {"tool_version", kToolVersion},
                           {"config_hash", hex64(issm::fnv1a64(config_text))},
                           {"seeds", inv.cfg.seeds},
                           {"train_seeds", inv.cfg.train_seeds()},
                           {"config", inv.config_json},
                           {"outputs", files}};
    issm::write_text_file(out.dir / "manifest.json", manifest.dump(2) + "\n");
}

std::string csv_of(const issm::EpisodeLog& log) {
    std::ostringstream ss;
    log.write_csv(ss);
    return ss.str();
}

void cmd_train(const Invocation& inv, Outputs& out) {
    const auto& cfg = inv.cfg;
    std::optional<issm::nn::DenseNet> init;
    if (!cfg.train.init_from.empty()) init = issm::load_q_network(cfg.train.init_from);
    issm::TrainResult result = issm::train_agent(cfg, init);
    for (const auto& ep : result.episodes) {
        if (ep.log.budget < cfg.pools.budget) {
            std::cerr << "warning: seed " << ep.seed << " episode " << ep.episode << ": budget " << cfg.pools.budget
                      << " exceeds the unlabeled pool; clamped to " << ep.log.budget << "\n";
        }
        out.write("logs/train_seed" + std::to_string(ep.seed) + "_ep" + std::to_string(ep.episode) + ".csv",
                  csv_of(ep.log));
        std::cout << "seed " << ep.seed << " episode " << ep.episode << ": total reward " << std::fixed
                  << std::setprecision(4) << ep.log.total_reward() << ", final accuracy "
                  << ep.log.final_evaluation_accuracy() << std::defaultfloat << "\n";
    }
    out.write("agent_checkpoint.json", result.agent.to_json().dump() + "\n");
}

void cmd_metatune(const Invocation& inv, Outputs& out) {
    const issm::MetaResult result = issm::run_metatune(inv.cfg);
    std::ostringstream csv;
    csv << "iteration,meta_loss,inner_loss_before,inner_loss_after\n";
    for (const auto& r : result.history) {
        csv << r.iteration << ',' << issm::format_real(r.meta_loss) << ',' << issm::format_real(r.inner_loss_before)
            << ',' << issm::format_real(r.inner_loss_after) << '\n';
    }
    out.write("meta_loss.csv", csv.str());
    out.write("meta_checkpoint.json",
              issm::meta_checkpoint(result.init, inv.cfg.meta.config, issm::resolved_agent_config(inv.cfg)).dump() +
                  "\n");
    if (!result.history.empty()) {
        std::cout << "meta loss: first " << issm::format_real(result.history.front().meta_loss) << ", last "
                  << issm::format_real(result.history.back().meta_loss) << "\n";
    }
}

void cmd_compare(const Invocation& inv, Outputs& out) {
    const auto& cfg = inv.cfg;
    std::optional<issm::QAgent> agent;
    const bool wants_issm = std::find(cfg.methods.begin(), cfg.methods.end(), "issm") != cfg.methods.end();
    if (wants_issm) {
        if (cfg.checkpoint.empty()) throw issm::UsageError("method issm requested but no checkpoint is configured");
        if (!fs::exists(cfg.checkpoint)) {
            throw issm::UsageError("agent checkpoint not found: " + cfg.checkpoint.string());
        }
        agent = issm::QAgent::from_json(issm::read_json_file(cfg.checkpoint));
    }
    const issm::ComparisonReport report = issm::run_comparison(cfg, agent ? &*agent : nullptr);
    for (const auto& row : report.rows) {
        const std::string stem = row.method + "_seed" + std::to_string(row.seed);
        out.write("logs/" + stem + ".csv", csv_of(row.log));
        out.write("logs/" + stem + ".json", row.log.summary().dump(2) + "\n");
    }
    std::ostringstream csv, text;
    report.write_csv(csv);
    report.write_text(text);
    out.write("comparison.csv", csv.str());
    out.write("comparison.txt", text.str());
    std::cout << text.str();
}

void cmd_generate(const Invocation& inv, Outputs& out) {
    const auto& cfg = inv.cfg;
    if (cfg.dataset.source != issm::DatasetSource::synthetic) {
        throw issm::ConfigError("generate-data needs a synthetic dataset block");
    }
    issm::SyntheticSpec spec = cfg.dataset.synthetic;
    const std::uint64_t seed = cfg.seeds.front();
    spec.seed = cfg.dataset.fixed_seed ? *cfg.dataset.fixed_seed : issm::derive_seed(seed, "dataset");
    const auto seqs = issm::generate(spec);
    const auto ds = issm::Dataset::from_sequences(seqs);
    fs::create_directories(out.dir);
    // Written through the datagen writers, then hashed for the manifest.
    auto record = [&](const std::string& rel, auto&& writer) {
        writer(out.dir / rel);
        std::ifstream in(out.dir / rel, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        out.files.emplace_back(rel, hex64(issm::fnv1a64(ss.str())));
    };
    record("features.csv", [&](const fs::path& p) { issm::write_feature_file(ds, p, issm::FeatureFormat::csv); });
    record("features.jsonl", [&](const fs::path& p) { issm::write_feature_file(ds, p, issm::FeatureFormat::jsonl); });
    record("sequences.jsonl", [&](const fs::path& p) { issm::write_sequence_file(seqs, p); });
    std::cout << "generated " << seqs.size() << " sequences (" << spec.class_count << " classes, " << spec.frames
              << "x" << spec.joints << "x" << spec.dims << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Informative sample selection for skeleton-based action recognition"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed_override;
    const std::map<std::string, std::string> commands = {
        {"train", "Train the selection agent over the configured seeds"},
        {"metatune", "Meta-tune the agent initialization"},
        {"compare", "Run frozen deployment episodes for every method and seed"},
        {"generate-data", "Write a synthetic skeleton dataset"}};
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON config or a manifest written by a previous run")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "Output directory")->required();
        sub->add_option("--seed-override", seed_override, "Replace every seed list with this single seed");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const Invocation inv = load(command, config_path, seed_override);
        Outputs out{out_dir, {}};
        fs::create_directories(out.dir);
        if (command == "train") {
            cmd_train(inv, out);
        } else if (command == "metatune") {
            cmd_metatune(inv, out);
        } else if (command == "compare") {
            cmd_compare(inv, out);
        } else {
            cmd_generate(inv, out);
        }
        write_manifest(inv, out);
        return 0;
    } catch (const issm::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const issm::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const issm::FilesystemError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
