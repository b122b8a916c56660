#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "cau/checkpoint.hpp"
#include "cau/errors.hpp"
#include "cau/pipeline.hpp"
#include "json.hpp"
#include "temp_dir.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string write_config(TempDir& tmp, const json& body, const std::string& name) {
    const std::string path = tmp.file(name);
    write_file(path, body.dump(2));
    return path;
}

json chain_json(const std::string& out) {
    return json{
        {"dataset",
         {{"synth",
           {{"sessions", 300}, {"items", 30}, {"sharpness", 8.0}, {"min_len", 3},
            {"max_len", 8}}}}},
        {"model",
         {{"embed_dim", 8}, {"max_prefix_len", 5}, {"learn_rate", 0.05}, {"train_batch", 8},
          {"unlearn_batch", 4}, {"epochs", 3}}},
        {"prep", {{"min_count", 2}, {"unlearn_ratio", 0.1}}},
        {"unlearn", {{"mode", "cau"}, {"epochs", 2}}},
        {"eval", {{"beta", 10.0}}},
        {"seed", 7},
        {"out", out},
    };
}

// Fraction of bigram mass sitting on each item's single most common successor.
double top_transition_share(const cau::Corpus& c) {
    std::map<int, std::map<int, int>> next;
    int total = 0;
    for (const auto& s : c.sessions)
        for (std::size_t i = 0; i + 1 < s.items.size(); ++i) {
            ++next[s.items[i]][s.items[i + 1]];
            ++total;
        }
    int top = 0;
    for (const auto& [a, row] : next) {
        int best = 0;
        for (const auto& [b, n] : row) best = std::max(best, n);
        top += best;
    }
    return static_cast<double>(top) / static_cast<double>(total);
}

} // namespace

TEST_CASE("an empty config falls back to every default") {
    TempDir tmp("cfg");
    const cau::ExperimentConfig cfg = cau::load_config(write_config(tmp, json::object(), "c.json"));
    CHECK(cfg.dataset.synthetic);
    CHECK(cfg.dataset.synth.n_sessions == 1000);
    CHECK(cfg.dataset.synth.n_items == 100);
    CHECK(cfg.hp.embed_dim == 64);
    CHECK(cfg.hp.unlearn_batch == 128);
    CHECK(cfg.train_epochs == 300);
    CHECK(cfg.prep.min_count == 5);
    CHECK(cfg.prep.unlearn_ratio == 0.1);
    CHECK(cfg.prep.max_per_session == 1);
    CHECK(cfg.unlearn.mode == cau::RunMode::kCau);
    CHECK(cfg.unlearn.curriculum.strategy == cau::CurriculumStrategy::kHard);
    CHECK(cfg.unlearn.curriculum.metric_kind == cau::DifficultyKind::kEmbedding);
    CHECK(cfg.unlearn.curriculum.batch == cfg.hp.unlearn_batch);
    CHECK(cfg.eval.beta == 10.0);
    CHECK(cfg.eval.use_forget);
    CHECK(cfg.eval.target == "app");
    CHECK(cfg.seed == 0);
    CHECK(cfg.threads == 0);
    CHECK(cfg.out_dir == "out");
}

TEST_CASE("configs parse every section and fan the seed out") {
    TempDir tmp("cfg");
    const json body{
        {"dataset",
         {{"synth",
           {{"sessions", 400}, {"items", 50}, {"sharpness", 2.5}, {"min_len", 4},
            {"max_len", 12}}}}},
        {"model",
         {{"embed_dim", 16}, {"max_prefix_len", 7}, {"learn_rate", 0.01}, {"train_batch", 32},
          {"unlearn_batch", 8}, {"adam_beta1", 0.8}, {"adam_beta2", 0.99}, {"adam_eps", 1e-7},
          {"init_scale", 0.2}, {"epochs", 25}}},
        {"prep", {{"min_count", 3}, {"unlearn_ratio", 0.25}, {"max_per_session", 2}}},
        {"unlearn",
         {{"mode", "equal_weights"}, {"strategy", "soft"}, {"metric", "gradient"},
          {"temperature", 1.5}, {"refresh_interval", 4}, {"epochs", 9}, {"total_steps", 17},
          {"pareto_tol", 1e-5}, {"pareto_max_iter", 55}, {"auxiliary_retain", true},
          {"auxiliary_batch", 6}, {"normalize_gradients", true}, {"soft_with_replacement", true},
          {"unlearn_floor", true}}},
        {"eval", {{"beta", 3.0}, {"use_forget", false}, {"target", "rec"}}},
        {"ablate",
         {{"modes", {"cau", "retrain"}}, {"batch_sizes", {4, 8}}, {"ratios", {0.1, 0.2}}}},
        {"seed", 42},
        {"threads", 2},
        {"out", "elsewhere"},
    };
    const cau::ExperimentConfig cfg = cau::load_config(write_config(tmp, body, "c.json"));
    CHECK(cfg.dataset.synth.n_sessions == 400);
    CHECK(cfg.dataset.synth.sharpness == 2.5);
    CHECK(cfg.hp.embed_dim == 16);
    CHECK(cfg.hp.max_prefix_len == 7);
    CHECK(cfg.hp.adam_beta1 == 0.8);
    CHECK(cfg.hp.init_scale == 0.2);
    CHECK(cfg.train_epochs == 25);
    CHECK(cfg.prep.unlearn_ratio == 0.25);
    CHECK(cfg.prep.max_per_session == 2);
    CHECK(cfg.unlearn.mode == cau::RunMode::kEqualWeights);
    CHECK(cfg.unlearn.curriculum.strategy == cau::CurriculumStrategy::kSoft);
    CHECK(cfg.unlearn.curriculum.metric_kind == cau::DifficultyKind::kGradient);
    CHECK(cfg.unlearn.curriculum.temperature == 1.5);
    CHECK(cfg.unlearn.curriculum.refresh_interval == 4);
    CHECK(cfg.unlearn.curriculum.batch == 8); // mirrors model.unlearn_batch
    CHECK(cfg.unlearn.epochs == 9);
    CHECK(cfg.unlearn.total_steps == 17);
    CHECK(cfg.unlearn.auxiliary_retain);
    CHECK(cfg.unlearn.auxiliary_batch == 6);
    CHECK(cfg.unlearn.normalize_gradients);
    CHECK(cfg.unlearn.soft_with_replacement);
    CHECK(cfg.unlearn.unlearn_floor);
    CHECK(cfg.eval.beta == 3.0);
    CHECK(!cfg.eval.use_forget);
    CHECK(cfg.eval.target == "rec");
    REQUIRE(cfg.ablate.modes.size() == 2);
    CHECK(cfg.ablate.modes[0] == cau::RunMode::kCau);
    CHECK(cfg.ablate.modes[1] == cau::RunMode::kRetrain);
    CHECK(cfg.ablate.batch_sizes == std::vector<int>{4, 8});
    CHECK(cfg.ablate.ratios == std::vector<double>{0.1, 0.2});
    CHECK(cfg.threads == 2);
    CHECK(cfg.out_dir == "elsewhere");
    CHECK(cfg.seed == 42);
    CHECK(cfg.dataset.synth.seed == 42);
    CHECK(cfg.hp.seed == 42);
    CHECK(cfg.unlearn.seed == 42);
    CHECK(cfg.unlearn.curriculum.seed == 42);
}

TEST_CASE("bad configs are rejected with usage errors") {
    TempDir tmp("cfg");
    auto expect_usage = [&](const json& body) {
        const std::string path = write_config(tmp, body, "bad.json");
        CHECK_THROWS_AS(cau::load_config(path), cau::UsageError);
    };
    expect_usage({{"modle", json::object()}});
    expect_usage({{"model", {{"hidden", 4}}}});
    expect_usage({{"model", {{"embed_dim", "big"}}}});
    expect_usage({{"model", {{"embed_dim", 0}}}});
    expect_usage({{"model", {{"learn_rate", 0.0}}}});
    expect_usage({{"model", {{"epochs", -1}}}});
    expect_usage({{"dataset", {{"synth", json::object()}, {"path", "x.tsv"}}}});
    expect_usage({{"dataset", {{"format", "session_lines"}}}});
    expect_usage({{"dataset", {{"path", "x.tsv"}, {"format", "csv"}}}});
    expect_usage({{"dataset", {{"synth", {{"length", 3}}}}}});
    expect_usage({{"prep", {{"unlearn_ratio", 0.6}}}});
    expect_usage({{"prep", {{"unlearn_ratio", 0.0}}}});
    expect_usage({{"prep", {{"min_count", 0}}}});
    expect_usage({{"unlearn", {{"mode", "softmax"}}}});
    expect_usage({{"unlearn", {{"strategy", "medium"}}}});
    expect_usage({{"unlearn", {{"metric", "loss"}}}});
    expect_usage({{"unlearn", {{"temperature", 0.0}}}});
    expect_usage({{"unlearn", {{"refresh_interval", 0}}}});
    expect_usage({{"unlearn", {{"pareto_tol", 0.0}}}});
    expect_usage({{"unlearn", {{"auxiliary_batch", -1}}}});
    expect_usage({{"eval", {{"beta", 0.0}}}});
    expect_usage({{"eval", {{"target", "both"}}}});
    expect_usage({{"ablate", {{"modes", {"cau", "fast"}}}}});
    expect_usage({{"ablate", {{"batch_sizes", {0}}}}});
    expect_usage({{"ablate", {{"ratios", {0.7}}}}});
    expect_usage({{"threads", -1}});
    expect_usage({{"out", ""}});

    CHECK_THROWS_AS(cau::load_config(tmp.file("absent.json")), cau::UsageError);
    const std::string broken = tmp.file("broken.json");
    write_file(broken, "{nope");
    CHECK_THROWS_AS(cau::load_config(broken), cau::ParseError);
}

TEST_CASE("seed overrides re-derive every stage seed") {
    cau::ExperimentConfig cfg;
    cau::apply_seed(cfg, 9);
    CHECK(cfg.seed == 9);
    CHECK(cfg.dataset.synth.seed == 9);
    CHECK(cfg.hp.seed == 9);
    CHECK(cfg.unlearn.seed == 9);
    CHECK(cfg.unlearn.curriculum.seed == 9);
}

TEST_CASE("synthetic corpora are seeded, validated and sharpness-shaped") {
    cau::SynthSpec spec;
    spec.n_sessions = 300;
    spec.n_items = 30;
    spec.seed = 11;

    SUBCASE("same seed, same corpus") {
        const cau::Corpus a = cau::synth_corpus(spec);
        const cau::Corpus b = cau::synth_corpus(spec);
        REQUIRE(a.sessions.size() == b.sessions.size());
        bool same = true;
        for (std::size_t i = 0; i < a.sessions.size(); ++i)
            same = same && a.sessions[i].items == b.sessions[i].items;
        CHECK(same);
        spec.seed = 12;
        const cau::Corpus c = cau::synth_corpus(spec);
        bool differ = false;
        for (std::size_t i = 0; i < a.sessions.size() && !differ; ++i)
            differ = a.sessions[i].items != c.sessions[i].items;
        CHECK(differ);
    }
    SUBCASE("bounds") {
        auto bad = spec;
        bad.n_items = 9;
        CHECK_THROWS_AS(cau::synth_corpus(bad), cau::UsageError);
        bad = spec;
        bad.n_sessions = 99;
        CHECK_THROWS_AS(cau::synth_corpus(bad), cau::UsageError);
        bad = spec;
        bad.min_len = 0;
        CHECK_THROWS_AS(cau::synth_corpus(bad), cau::UsageError);
        bad = spec;
        bad.max_len = bad.min_len - 1;
        CHECK_THROWS_AS(cau::synth_corpus(bad), cau::UsageError);
        bad = spec;
        bad.sharpness = 0.0;
        CHECK_THROWS_AS(cau::synth_corpus(bad), cau::UsageError);
    }
    SUBCASE("sharper transition rows concentrate the bigrams") {
        auto peaky = spec;
        peaky.sharpness = 50.0;
        peaky.n_sessions = 500;
        auto flat = peaky;
        flat.sharpness = 0.01;
        const double peaky_share = top_transition_share(cau::synth_corpus(peaky));
        const double flat_share = top_transition_share(cau::synth_corpus(flat));
        CHECK(peaky_share > flat_share + 0.15);
        CHECK(peaky_share > 0.5);
    }
}

TEST_CASE("the synth stage is reproducible byte for byte") {
    TempDir tmp("synth");
    cau::ExperimentConfig cfg =
        cau::load_config(write_config(tmp, chain_json(tmp.file("a")), "c.json"));
    cau::cmd_synth(cfg);
    cau::ExperimentConfig cfg2 = cfg;
    cfg2.out_dir = tmp.file("b");
    cau::cmd_synth(cfg2);
    CHECK(read_file(tmp.file("a/corpus_raw.txt")) == read_file(tmp.file("b/corpus_raw.txt")));
    CHECK(read_file(tmp.file("a/corpus_raw.txt.manifest.json")) ==
          read_file(tmp.file("b/corpus_raw.txt.manifest.json")));

    cau::ExperimentConfig ext = cfg;
    ext.dataset.synthetic = false;
    ext.dataset.path = "somewhere.tsv";
    CHECK_THROWS_AS(cau::cmd_synth(ext), cau::UsageError);
}

TEST_CASE("the staged chain runs end to end") {
    TempDir tmp("chain");
    const std::string out = tmp.file("out");
    const cau::ExperimentConfig cfg =
        cau::load_config(write_config(tmp, chain_json(out), "c.json"));
    cau::cmd_synth(cfg);
    cau::cmd_prep(cfg);
    cau::cmd_train(cfg);
    cau::cmd_unlearn(cfg);
    cau::cmd_eval(cfg);

    for (const char* name :
         {"corpus_raw.txt", "train.txt", "valid.txt", "test.txt", "forget.tsv",
          "theta_rec.ckpt", "theta_rec.ckpt.json", "theta_app_cau.ckpt", "alpha_cau.csv",
          "metrics_cau.csv", "metrics_cau.json", "timing_synth.json", "timing_prep.json",
          "timing_train.json", "timing_unlearn_cau.json", "timing_eval_cau.json"}) {
        CAPTURE(name);
        CHECK(fs::exists(fs::path(out) / name));
    }
    for (const char* name :
         {"train.txt", "forget.tsv", "theta_rec.ckpt", "theta_app_cau.ckpt", "metrics_cau.csv"}) {
        CAPTURE(name);
        CHECK(fs::exists(fs::path(out) / (std::string(name) + ".manifest.json")));
    }

    const json m = json::parse(read_file((fs::path(out) / "metrics_cau.json").string()));
    CHECK(m.at("run_id") == "cau");
    CHECK(m.at("recall@10").get<double>() >= 0.0);
    CHECK(m.at("recall@10").get<double>() <= 1.0);
    CHECK(m.contains("hit_u@1"));
    CHECK(m.at("beta") == 10.0);

    SUBCASE("prep reruns leave every chained byte unchanged") {
        std::map<std::string, std::string> before;
        for (const char* name : {"train.txt", "train.txt.manifest.json", "forget.tsv",
                                 "forget.tsv.manifest.json", "test.txt.manifest.json"})
            before[name] = read_file((fs::path(out) / name).string());
        cau::cmd_prep(cfg);
        for (const auto& [name, bytes] : before) {
            CAPTURE(name);
            CHECK(read_file((fs::path(out) / name).string()) == bytes);
        }
    }
    SUBCASE("evaluating the trained model needs no forget set") {
        cau::ExperimentConfig plain = cfg;
        plain.eval.use_forget = false;
        plain.eval.target = "rec";
        cau::cmd_eval(plain);
        const std::string csv = read_file((fs::path(out) / "metrics_rec.csv").string());
        CHECK(csv.find("hit_u") == std::string::npos);
        CHECK(csv.find("u_beta") == std::string::npos);
        CHECK(csv.find("rec,recall,10,") != std::string::npos);
        const json man =
            json::parse(read_file((fs::path(out) / "metrics_rec.csv.manifest.json").string()));
        CHECK(man.at("inputs").size() == 2);
    }
    SUBCASE("a tampered artifact stops the chain") {
        std::ofstream(fs::path(out) / "train.txt", std::ios::app) << "tamper\n";
        CHECK_THROWS_AS(cau::cmd_train(cfg), cau::DependencyError);
    }
    SUBCASE("a tampered upstream input stops later stages") {
        std::ofstream(fs::path(out) / "corpus_raw.txt", std::ios::app) << "tamper\n";
        CHECK_THROWS_AS(cau::cmd_train(cfg), cau::DependencyError);
    }
    SUBCASE("ablation enumerates its grid without a manifest") {
        cau::ExperimentConfig ab = cfg;
        ab.ablate.modes = {cau::RunMode::kOriginal, cau::RunMode::kGaOnly};
        ab.ablate.batch_sizes = {2, 4};
        ab.ablate.ratios = {0.1};
        ab.unlearn.epochs = 1;
        cau::cmd_ablate(ab);
        const std::string body = read_file((fs::path(out) / "ablate.csv").string());
        std::vector<std::string> lines;
        std::size_t start = 0;
        while (start < body.size()) {
            const std::size_t nl = body.find('\n', start);
            if (nl == std::string::npos) {
                lines.push_back(body.substr(start));
                break;
            }
            lines.push_back(body.substr(start, nl - start));
            start = nl + 1;
        }
        REQUIRE(lines.size() == 5);
        CHECK(lines[0] ==
              "mode,unlearn_batch,ratio,recall10,recall20,ndcg10,ndcg20,hit_u1,hit_u5,u_beta,"
              "wall_seconds");
        CHECK(lines[1].rfind("original,2,", 0) == 0);
        CHECK(lines[2].rfind("ga_only,2,", 0) == 0);
        CHECK(lines[3].rfind("original,4,", 0) == 0);
        CHECK(lines[4].rfind("ga_only,4,", 0) == 0);
        CHECK(!fs::exists(fs::path(out) / "ablate.csv.manifest.json"));
    }
}

TEST_CASE("missing upstream artifacts are refused") {
    TempDir tmp("deps");
    cau::ExperimentConfig cfg =
        cau::load_config(write_config(tmp, chain_json(tmp.file("out")), "c.json"));
    CHECK_THROWS_AS(cau::cmd_prep(cfg), cau::DependencyError);
    CHECK_THROWS_AS(cau::cmd_train(cfg), cau::DependencyError);
    CHECK_THROWS_AS(cau::cmd_unlearn(cfg), cau::DependencyError);
    CHECK_THROWS_AS(cau::cmd_eval(cfg), cau::DependencyError);
    CHECK_THROWS_AS(cau::cmd_ablate(cfg), cau::DependencyError);

    cau::ExperimentConfig ext = cfg;
    ext.dataset.synthetic = false;
    ext.dataset.path = tmp.file("no_such.tsv");
    CHECK_THROWS_AS(cau::cmd_prep(ext), cau::DependencyError);
}

TEST_CASE("external datasets flow through prep") {
    TempDir tmp("ext");
    const std::string tsv = tmp.file("events.tsv");
    std::string body;
    // 12 users x 4 events over a small loop of items, timestamps in order
    for (int u = 1; u <= 12; ++u)
        for (int t = 0; t < 4; ++t)
            body += std::to_string(u) + "\t" + std::to_string(1 + (u + t) % 5) + "\t" +
                    std::to_string(100 + t) + "\n";
    write_file(tsv, body);

    json cfgj = chain_json(tmp.file("out"));
    cfgj["dataset"] = {{"path", tsv}, {"format", "user_item_time"}};
    cfgj["prep"] = {{"min_count", 1}, {"unlearn_ratio", 0.5}};
    const cau::ExperimentConfig cfg = cau::load_config(write_config(tmp, cfgj, "c.json"));
    cau::cmd_prep(cfg);
    CHECK(fs::exists(tmp.file("out/train.txt")));
    const json man = json::parse(read_file(tmp.file("out/train.txt.manifest.json")));
    bool keyed_by_absolute = false;
    for (const auto& [k, v] : man.at("inputs").items())
        keyed_by_absolute = keyed_by_absolute || fs::path(k).is_absolute();
    CHECK(keyed_by_absolute);
}

TEST_CASE("checkpoints round-trip bitwise") {
    TempDir tmp("ckpt");
    cau::HyperParams hp;
    hp.embed_dim = 8;
    hp.max_prefix_len = 5;
    hp.learn_rate = 0.321;
    hp.seed = 3;
    const cau::ParamVector p = cau::init_params(hp, 30);
    const std::string path = tmp.file("m.ckpt");
    cau::save_checkpoint(p, hp, path);
    const cau::Checkpoint ck = cau::load_checkpoint(path);
    CHECK(ck.params.flat == p.flat);
    CHECK(ck.params.item_count == 30);
    CHECK(ck.params.d == 8);
    CHECK(ck.hp.embed_dim == 8);
    CHECK(ck.hp.max_prefix_len == 5);
    CHECK(ck.hp.learn_rate == 0.321);
    CHECK(ck.hp.seed == 3);

    SUBCASE("corrupt files are called out") {
        write_file(tmp.file("junk.ckpt"), "not a checkpoint at all");
        CHECK_THROWS_AS(cau::load_checkpoint(tmp.file("junk.ckpt")), cau::ParseError);
        write_file(tmp.file("trunc.ckpt"), read_file(path).substr(0, 10));
        CHECK_THROWS_AS(cau::load_checkpoint(tmp.file("trunc.ckpt")), cau::ParseError);
        CHECK_THROWS_AS(cau::load_checkpoint(tmp.file("void.ckpt")), cau::DependencyError);
        fs::remove(path + ".json");
        CHECK_THROWS_AS(cau::load_checkpoint(path), cau::DependencyError);
    }
}
