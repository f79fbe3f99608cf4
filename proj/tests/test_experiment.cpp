#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "issm/errors.hpp"
#include "issm/experiment.hpp"
#include "support/tempdir.hpp"

using namespace issm;
using nlohmann::json;

namespace {

json tiny_config() {
    return json::parse(R"({
      "dataset": {"source": "synthetic",
                  "synthetic": {"class_count": 3, "samples_per_class": 20, "joints": 3, "dims": 2,
                                "frames": 8, "class_separation": 0.6, "noise_sigma": 1.0}},
      "pools": {"init_labeled_n": 6, "reward_n": 6, "test_n": 9, "budget": 10, "batch_n": 5},
      "agent": {"hidden": [8, 4], "n_bins": 4, "batch_size": 4, "sync_period": 3},
      "recognizer": {"epochs": 5, "hidden": [8, 4]},
      "train": {"episodes_per_seed": 2},
      "meta": {"enabled": true, "horizon": 1, "iterations": 3, "inner_steps": 2,
               "pool_n": 40, "split_fraction": 0.5, "init_labeled_n": 6, "reward_n": 6, "batch_n": 2},
      "seeds": [1, 2, 3],
      "methods": ["uniform", "margin"]
    })");
}

int run_cli(const std::string& args, const std::filesystem::path& log) {
    const std::string cmd = std::string(ISSM_CLI_PATH) + " " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string write_config(const testing::TempDir& dir, const json& j, const std::string& name = "config.json") {
    testing::write_file(dir / name, j.dump(2));
    return (dir / name).string();
}

}  // namespace

TEST_CASE("config parse reports every problem at once") {
    json j = tiny_config();
    j["pools"]["budgte"] = 5;
    j["agent"]["gamma"] = 1.5;
    j["recognizer"]["epochs"] = "many";
    j["colour"] = "blue";
    try {
        ExperimentConfig::from_json(j);
        FAIL("expected a configuration error");
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        CHECK(what.find("4 problems") != std::string::npos);
        for (const char* needle : {"budgte", "gamma", "epochs", "colour"}) CHECK(what.find(needle) != std::string::npos);
    }
}

TEST_CASE("config defaults and round trip") {
    json j = tiny_config();
    j["pools"].erase("reward_n");
    j["pools"]["init_labeled_n"] = 100;
    const ExperimentConfig c = ExperimentConfig::from_json(j);
    CHECK(c.pools.resolved_reward_n() == 15);
    j["pools"]["init_labeled_n"] = 20;
    CHECK(ExperimentConfig::from_json(j).pools.resolved_reward_n() == 10);
    CHECK(ExperimentConfig::from_json(c.to_json()).to_json() == c.to_json());
    CHECK(c.train_seeds() == std::vector<std::uint64_t>{1, 2, 3});

    json bad_method = tiny_config();
    bad_method["methods"] = {"uniform", "oracle"};
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad_method), ConfigError);
}

TEST_CASE("method summary uses the mean and sample deviation") {
    EpisodeLog a, b;
    a.initial_evaluation_accuracy = 0.5;
    b.initial_evaluation_accuracy = 0.5;
    IterationRecord ra, rb;
    ra.evaluation_accuracy = 0.6;
    rb.evaluation_accuracy = 0.8;
    ra.spent = rb.spent = a.budget = b.budget = 4;
    a.iterations = {ra};
    b.iterations = {rb};
    const MethodSummary s = summarize("uniform", {&a, &b});
    CHECK(s.runs == 2);
    CHECK(s.mean_final_accuracy == doctest::Approx(0.7));
    CHECK(s.sd_final_accuracy == doctest::Approx(std::sqrt(0.02)));
}

TEST_CASE("comparison covers every method and seed on shared pools") {
    json j = tiny_config();
    j["methods"] = {"uniform", "margin", "coreset"};
    j["seeds"] = {1, 2};
    const ExperimentConfig c = ExperimentConfig::from_json(j);
    const ComparisonReport r = run_comparison(c, nullptr);
    CHECK(r.rows.size() == 6);
    CHECK(r.summary.size() == 3);
    std::ostringstream csv;
    r.write_csv(csv);
    std::istringstream lines(csv.str());
    std::string line;
    int episodes = 0, summaries = 0;
    while (std::getline(lines, line)) {
        episodes += line.rfind("episode,", 0) == 0;
        summaries += line.rfind("summary,", 0) == 0;
    }
    CHECK(episodes == 6);
    CHECK(summaries == 3);
    for (const auto& row : r.rows) {
        CHECK(row.log.initial_evaluation_accuracy == r.rows[row.seed == 1 ? 0 : 3].log.initial_evaluation_accuracy);
        CHECK(row.log.evaluation_set == "test");
    }
    j["methods"] = {"issm"};
    CHECK_THROWS_AS(run_comparison(ExperimentConfig::from_json(j), nullptr), UsageError);
}

TEST_CASE("cli: exit codes") {
    testing::TempDir dir;
    json bad = tiny_config();
    bad["pools"]["batch_n"] = 0;
    CHECK(run_cli("train --config " + write_config(dir, bad) + " --out " + (dir / "o").string(), dir / "log") == 2);
    CHECK(testing::read_file(dir / "log").find("batch_n") != std::string::npos);
    CHECK(run_cli("train --out " + (dir / "o").string(), dir / "log") == 2);
    CHECK(run_cli("frobnicate", dir / "log") == 2);
    testing::write_file(dir / "broken.json", "{\"seeds\": [1,");
    CHECK(run_cli("train --config " + (dir / "broken.json").string() + " --out " + (dir / "o").string(),
                  dir / "log") == 2);

    json missing = tiny_config();
    missing["dataset"] = {{"source", "feature_file"}, {"path", (dir / "absent.csv").string()}, {"format", "csv"}};
    CHECK(run_cli("compare --config " + write_config(dir, missing) + " --out " + (dir / "o").string(), dir / "log") ==
          1);
}

TEST_CASE("cli: train, compare and rerun from the manifest") {
    testing::TempDir dir;
    const std::string cfg = write_config(dir, tiny_config());
    const auto train = dir / "train";
    REQUIRE(run_cli("train --config " + cfg + " --out " + train.string(), dir / "log") == 0);
    for (const char* f : {"manifest.json", "agent_checkpoint.json", "logs/train_seed1_ep0.csv",
                          "logs/train_seed3_ep1.csv"}) {
        CHECK(std::filesystem::exists(train / f));
    }

    json cmp = tiny_config();
    cmp["methods"] = {"issm", "uniform"};
    cmp["seeds"] = {7, 8, 9};
    cmp["checkpoint"] = (train / "agent_checkpoint.json").string();
    const auto out = dir / "cmp";
    REQUIRE(run_cli("compare --config " + write_config(dir, cmp, "cmp.json") + " --out " + out.string(),
                    dir / "log") == 0);
    const std::string table = testing::read_file(out / "comparison.csv");
    CHECK(std::count(table.begin(), table.end(), '\n') == 1 + 6 + 2);
    for (const char* f : {"logs/issm_seed7.csv", "logs/uniform_seed9.json", "comparison.txt"}) {
        CHECK(std::filesystem::exists(out / f));
    }

    const auto rerun = dir / "rerun";
    REQUIRE(run_cli("compare --config " + (out / "manifest.json").string() + " --out " + rerun.string(),
                    dir / "log") == 0);
    CHECK(testing::read_file(rerun / "comparison.csv") == table);
    CHECK(testing::read_file(rerun / "manifest.json") == testing::read_file(out / "manifest.json"));
    CHECK(run_cli("train --config " + (out / "manifest.json").string() + " --out " + (dir / "x").string(),
                  dir / "log") == 2);
}

TEST_CASE("cli: seed override, metatune and generate-data") {
    testing::TempDir dir;
    const std::string cfg = write_config(dir, tiny_config());
    REQUIRE(run_cli("metatune --config " + cfg + " --out " + (dir / "m").string() + " --seed-override 4",
                    dir / "log") == 0);
    const std::string loss = testing::read_file(dir / "m" / "meta_loss.csv");
    CHECK(std::count(loss.begin(), loss.end(), '\n') == 4);
    const json manifest = json::parse(testing::read_file(dir / "m" / "manifest.json"));
    CHECK(manifest["seeds"] == json::array({4}));
    CHECK(load_q_network(dir / "m" / "meta_checkpoint.json").input_dim() == 7);

    REQUIRE(run_cli("generate-data --config " + cfg + " --out " + (dir / "g").string(), dir / "log") == 0);
    const Dataset a = load_feature_file(dir / "g" / "features.csv", FeatureFormat::csv);
    CHECK(a.size() == 60);
    CHECK(a == load_feature_file(dir / "g" / "features.jsonl", FeatureFormat::jsonl));
}
