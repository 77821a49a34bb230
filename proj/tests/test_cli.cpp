#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "hhgat/hhgat.hpp"

namespace fs = std::filesystem;
using namespace hhgat;

namespace {

const char* kSmall = "kind=planted,classes=3,per_class=15,aux_per_class=5,feature_dim=6,seed=7";

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("hhgat_cli_" + std::to_string(::getpid()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        std::ofstream(dir_ / "small.json") << R"({"hidden_dim": 8, "embed_dim": 8, "max_metapath_length": 2,
            "epochs": 8, "patience": 8, "lr": 0.01, "seed": 3, "instance_cap": 32})";
    }
    void TearDown() override { fs::remove_all(dir_); }

    Result run(const std::string& args) const {
        const std::string cmd = std::string(HHGAT_CLI) + " " + args + " > '" + (dir_ / "stdout").string() + "' 2> '" +
                                (dir_ / "stderr").string() + "'";
        const int status = std::system(cmd.c_str());
        Result r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(dir_ / "stdout");
        r.err = slurp(dir_ / "stderr");
        return r;
    }

    std::string small_train(const std::string& out) const {
        return "train --synthetic " + std::string(kSmall) + " --config " + (dir_ / "small.json").string() +
               " --out " + (dir_ / out).string();
    }

    fs::path dir_;
};

void expect_metrics_close(const nlohmann::json& a, const nlohmann::json& b) {
    for (const char* key : {"macro_f1", "micro_f1", "nmi", "ari", "valid_macro_f1", "valid_micro_f1", "valid_loss",
                            "curvature"})
        EXPECT_NEAR(a.at(key).get<double>(), b.at(key).get<double>(), 1e-9) << key;
    EXPECT_EQ(a.at("best_epoch"), b.at("best_epoch"));
}

}  // namespace

TEST_F(Cli, TrainWritesRunDirectoryAndEvalReproducesMetrics) {
    const Result t = run(small_train("run"));
    ASSERT_EQ(t.code, 0) << t.err;
    for (const char* f : {"metrics.json", "loss_curve.tsv", "embeddings.tsv", "params.bin", "config.json"})
        EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
    const auto stored = nlohmann::json::parse(slurp(dir_ / "run" / "metrics.json"));
    EXPECT_EQ(nlohmann::json::parse(t.out), stored);

    const Result e = run("eval --run " + (dir_ / "run").string());
    ASSERT_EQ(e.code, 0) << e.err;
    expect_metrics_close(nlohmann::json::parse(e.out), stored);

    const std::string emb = slurp(dir_ / "run" / "embeddings.tsv");
    EXPECT_EQ(std::count(emb.begin(), emb.end(), '\n'), 45);
    const std::string first = emb.substr(0, emb.find('\n'));
    EXPECT_EQ(std::count(first.begin(), first.end(), '\t'), 8);
}

TEST_F(Cli, EvalOnAlternativeSplitRecomputes) {
    ASSERT_EQ(run(small_train("run")).code, 0);
    HeteroGraph g = make_synthetic(parse_synthetic_spec(kSmall).planted);
    nlohmann::json split;
    split["train"] = g.split.test;
    split["valid"] = g.split.valid;
    split["test"] = g.split.train;
    std::ofstream(dir_ / "swapped.json") << split.dump();

    const Result e = run("eval --run " + (dir_ / "run").string() + " --split " + (dir_ / "swapped.json").string());
    ASSERT_EQ(e.code, 0) << e.err;
    const auto got = nlohmann::json::parse(e.out);
    EXPECT_EQ(got.at("test_nodes"), g.split.train.size());

    const RunConfig cfg = load_run_config(dir_ / "run" / "config.json");
    load_split(g, dir_ / "swapped.json");
    const InstanceSet inst = sample_for(g, cfg);
    const ModelConfig mc = cfg.model_config(g);
    ModelParams params = init_params(mc, inst.metapaths, 0);
    io::apply_tensors(io::read_params(dir_ / "run" / "params.bin"), params);
    const EvalReport expected = evaluate(g, inst, params, mc, cfg.seed).report;
    EXPECT_NEAR(got.at("macro_f1").get<double>(), expected.macro_f1, 1e-12);
    EXPECT_NEAR(got.at("nmi").get<double>(), expected.nmi, 1e-12);
}

TEST_F(Cli, RerunIsIdempotent) {
    ASSERT_EQ(run(small_train("run")).code, 0);
    const std::string m1 = slurp(dir_ / "run" / "metrics.json");
    const std::string e1 = slurp(dir_ / "run" / "embeddings.tsv");
    const std::string p1 = slurp(dir_ / "run" / "params.bin");
    ASSERT_EQ(run(small_train("run")).code, 0);
    EXPECT_EQ(slurp(dir_ / "run" / "metrics.json"), m1);
    EXPECT_EQ(slurp(dir_ / "run" / "embeddings.tsv"), e1);
    EXPECT_EQ(slurp(dir_ / "run" / "params.bin"), p1);
}

TEST_F(Cli, MissingMetaJsonIsDataError) {
    const HeteroGraph g = make_synthetic(parse_synthetic_spec(kSmall).planted);
    write_dataset(g, dir_ / "data");
    fs::remove(dir_ / "data" / "meta.json");
    const Result r = run("train --data " + (dir_ / "data").string() + " --out " + (dir_ / "run").string());
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find((dir_ / "data" / "meta.json").string()), std::string::npos) << r.err;
}

TEST_F(Cli, TrainsFromDatasetDirectory) {
    const HeteroGraph g = make_synthetic(parse_synthetic_spec(kSmall).planted);
    write_dataset(g, dir_ / "data");
    const Result r = run("train --data " + (dir_ / "data").string() + " --config " + (dir_ / "small.json").string() +
                         " --out " + (dir_ / "run").string());
    ASSERT_EQ(r.code, 0) << r.err;
    ASSERT_EQ(run(small_train("syn")).code, 0);
    EXPECT_EQ(slurp(dir_ / "run" / "metrics.json"), slurp(dir_ / "syn" / "metrics.json"));
}

TEST_F(Cli, BadConfigNamesKey) {
    std::ofstream(dir_ / "bad.json") << R"({"hidden_dim": 8, "learning_rate": 0.1})";
    Result r = run("train --synthetic " + std::string(kSmall) + " --config " + (dir_ / "bad.json").string() +
                   " --out " + (dir_ / "run").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("learning_rate"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir_ / "run"));

    std::ofstream(dir_ / "broken.json") << R"({"hidden_dim": 8,)";
    r = run("train --synthetic " + std::string(kSmall) + " --config " + (dir_ / "broken.json").string() + " --out " +
            (dir_ / "run").string());
    EXPECT_EQ(r.code, 2);
}

TEST_F(Cli, UsageErrorsAreConfigErrors) {
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("train --synthetic x=1").code, 2);
    EXPECT_EQ(run("train --out " + (dir_ / "run").string()).code, 2);
    EXPECT_EQ(run("train --data a --synthetic b --out c").code, 2);
    EXPECT_EQ(run("sweep-curvature --synthetic " + std::string(kSmall) + " --grid 1:0:1").code, 2);
}

TEST_F(Cli, CorruptParamsIsDataError) {
    ASSERT_EQ(run(small_train("run")).code, 0);
    const fs::path params = dir_ / "run" / "params.bin";
    fs::resize_file(params, fs::file_size(params) - 5);
    Result r = run("eval --run " + (dir_ / "run").string());
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("params.bin"), std::string::npos) << r.err;

    fs::remove(params);
    r = run("eval --run " + (dir_ / "run").string());
    EXPECT_EQ(r.code, 3);
}

TEST_F(Cli, GradcheckDefaultToyPasses) {
    const Result r = run("gradcheck --out " + (dir_ / "gc").string());
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.err.find("max relative error"), std::string::npos);
    EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "parameter\tmax_rel_error");
    EXPECT_NE(r.out.find("curvature.theta"), std::string::npos);
    const auto j = nlohmann::json::parse(slurp(dir_ / "gc" / "gradcheck.json"));
    EXPECT_LT(j.at("max_rel_error").get<double>(), 1e-4);
}

TEST_F(Cli, SweepWritesOneRowPerGridValue) {
    const Result r = run("sweep-curvature --synthetic " + std::string(kSmall) + " --config " +
                         (dir_ / "small.json").string() + " --grid 0.5:2.0:0.5 --threads 2 --out " +
                         (dir_ / "sweep").string());
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string tsv = slurp(dir_ / "sweep" / "sweep.tsv");
    EXPECT_EQ(tsv, r.out);
    EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 4);
    const auto j = nlohmann::json::parse(slurp(dir_ / "sweep" / "sweep.json"));
    ASSERT_EQ(j.size(), 3u);
    EXPECT_EQ(j[2].at("curvature").get<double>(), 1.5);
    for (const auto& row : j) EXPECT_TRUE(row.at("ok").get<bool>());
}

TEST_F(Cli, SampleStatsWritesTables) {
    const Result r = run("sample-stats --synthetic kind=powerlaw,targets=200,aux=400 --out " + (dir_ / "st").string());
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir_ / "st" / "instance_stats.tsv"));
    const auto j = nlohmann::json::parse(slurp(dir_ / "st" / "instance_stats.json"));
    EXPECT_TRUE(j.contains("slope"));
    EXPECT_FALSE(j.at("metapaths").empty());
}

TEST_F(Cli, HelpListsEveryFlag) {
    const std::map<std::string, std::vector<std::string>> flags{
        {"train", {"--data", "--synthetic", "--config", "--threads", "--out"}},
        {"eval", {"--run", "--data", "--split", "--threads"}},
        {"sample-stats", {"--data", "--synthetic", "--config", "--threads", "--out"}},
        {"sweep-curvature", {"--data", "--synthetic", "--config", "--threads", "--grid", "--out"}},
        {"gradcheck", {"--data", "--synthetic", "--config", "--threads", "--out"}},
    };
    const Result top = run("--help");
    EXPECT_EQ(top.code, 0);
    for (const auto& [sub, list] : flags) {
        EXPECT_NE(top.out.find(sub), std::string::npos) << sub;
        const Result r = run(sub + " --help");
        EXPECT_EQ(r.code, 0);
        std::set<std::string> advertised;
        const std::regex flag("--[a-z][a-z-]*");
        for (auto it = std::sregex_iterator(r.out.begin(), r.out.end(), flag); it != std::sregex_iterator(); ++it)
            advertised.insert(it->str());
        std::set<std::string> expected(list.begin(), list.end());
        expected.insert("--help");
        EXPECT_EQ(advertised, expected) << sub;
    }
}
