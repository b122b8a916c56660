#include "cau/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <sstream>
#include <string_view>

#include "json.hpp"

#include "cau/checkpoint.hpp"
#include "cau/errors.hpp"
#include "cau/eval.hpp"
#include "cau/log.hpp"
#include "cau/manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cau {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string opath(const ExperimentConfig& cfg, const std::string& name) {
    return (fs::path(cfg.out_dir) / name).string();
}

void ensure_out(const ExperimentConfig& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (!fs::is_directory(cfg.out_dir)) throw Error("cannot create output dir " + cfg.out_dir);
}

// Timing files live beside the artifacts but outside the manifest chain so
// reruns keep every chained byte identical.
void write_timing(const ExperimentConfig& cfg, const std::string& name, const std::string& stage,
                  double wall, json extra = json::object()) {
    extra["stage"] = stage;
    extra["wall_seconds"] = wall;
    const std::string path = opath(cfg, name);
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << extra.dump(2) << "\n";
}

const char* strategy_name(CurriculumStrategy s) {
    return s == CurriculumStrategy::kHard ? "hard" : "soft";
}

const char* metric_name(DifficultyKind k) {
    return k == DifficultyKind::kGradient ? "gradient" : "embedding";
}

CurriculumStrategy strategy_from_name(const std::string& s) {
    if (s == "hard") return CurriculumStrategy::kHard;
    if (s == "soft") return CurriculumStrategy::kSoft;
    throw UsageError("unknown curriculum strategy \"" + s + "\"");
}

DifficultyKind metric_from_name(const std::string& s) {
    if (s == "gradient") return DifficultyKind::kGradient;
    if (s == "embedding") return DifficultyKind::kEmbedding;
    throw UsageError("unknown difficulty metric \"" + s + "\"");
}

json hp_json(const HyperParams& hp) {
    return json{{"embed_dim", hp.embed_dim},
                {"max_prefix_len", hp.max_prefix_len},
                {"learn_rate", hp.learn_rate},
                {"train_batch", hp.train_batch},
                {"unlearn_batch", hp.unlearn_batch},
                {"adam_beta1", hp.adam_beta1},
                {"adam_beta2", hp.adam_beta2},
                {"adam_eps", hp.adam_eps},
                {"init_scale", hp.init_scale},
                {"seed", hp.seed}};
}

json unlearn_json(const UnlearnRunConfig& uc) {
    return json{{"mode", run_mode_name(uc.mode)},
                {"strategy", strategy_name(uc.curriculum.strategy)},
                {"metric", metric_name(uc.curriculum.metric_kind)},
                {"temperature", uc.curriculum.temperature},
                {"refresh_interval", uc.curriculum.refresh_interval},
                {"batch", uc.curriculum.batch},
                {"epochs", uc.epochs},
                {"total_steps", uc.total_steps},
                {"pareto_tol", uc.pareto_tol},
                {"pareto_max_iter", uc.pareto_max_iter},
                {"auxiliary_retain", uc.auxiliary_retain},
                {"auxiliary_batch", uc.auxiliary_batch},
                {"normalize_gradients", uc.normalize_gradients},
                {"soft_with_replacement", uc.soft_with_replacement},
                {"unlearn_floor", uc.unlearn_floor},
                {"seed", uc.seed}};
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) throw UsageError("config: " + where + " must be an object");
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (std::string_view a : allowed) {
            if (key == a) {
                known = true;
                break;
            }
        }
        if (!known) throw UsageError("config: unknown key \"" + key + "\" in " + where);
    }
}

template <typename T>
T get_field(const json& j, const std::string& where, const char* key, T def) {
    if (!j.contains(key)) return def;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw UsageError("config: bad value for \"" + std::string(key) + "\" in " + where);
    }
}

void parse_dataset(const json& d, ExperimentConfig& cfg) {
    check_keys(d, "dataset", {"synth", "path", "format"});
    if (d.contains("synth") && d.contains("path"))
        throw UsageError("config: dataset takes either synth or path, not both");
    if (d.contains("path")) {
        cfg.dataset.synthetic = false;
        cfg.dataset.path = get_field<std::string>(d, "dataset", "path", "");
        if (cfg.dataset.path.empty()) throw UsageError("config: dataset.path is empty");
        const std::string f = get_field<std::string>(d, "dataset", "format", "user_item_time");
        if (f == "user_item_time")
            cfg.dataset.format = TsvFormat::kUserItemTime;
        else if (f == "session_lines")
            cfg.dataset.format = TsvFormat::kSessionLines;
        else
            throw UsageError("config: unknown dataset format \"" + f + "\"");
        return;
    }
    if (d.contains("format"))
        throw UsageError("config: dataset.format applies only to external paths");
    cfg.dataset.synthetic = true;
    if (!d.contains("synth")) return;
    const json& s = d.at("synth");
    check_keys(s, "dataset.synth", {"sessions", "items", "sharpness", "min_len", "max_len"});
    SynthSpec& sp = cfg.dataset.synth;
    sp.n_sessions = get_field(s, "dataset.synth", "sessions", sp.n_sessions);
    sp.n_items = get_field(s, "dataset.synth", "items", sp.n_items);
    sp.sharpness = get_field(s, "dataset.synth", "sharpness", sp.sharpness);
    sp.min_len = get_field(s, "dataset.synth", "min_len", sp.min_len);
    sp.max_len = get_field(s, "dataset.synth", "max_len", sp.max_len);
}

void parse_model(const json& m, ExperimentConfig& cfg) {
    check_keys(m, "model",
               {"embed_dim", "max_prefix_len", "learn_rate", "train_batch", "unlearn_batch",
                "adam_beta1", "adam_beta2", "adam_eps", "init_scale", "epochs"});
    HyperParams& hp = cfg.hp;
    hp.embed_dim = get_field(m, "model", "embed_dim", hp.embed_dim);
    hp.max_prefix_len = get_field(m, "model", "max_prefix_len", hp.max_prefix_len);
    hp.learn_rate = get_field(m, "model", "learn_rate", hp.learn_rate);
    hp.train_batch = get_field(m, "model", "train_batch", hp.train_batch);
    hp.unlearn_batch = get_field(m, "model", "unlearn_batch", hp.unlearn_batch);
    hp.adam_beta1 = get_field(m, "model", "adam_beta1", hp.adam_beta1);
    hp.adam_beta2 = get_field(m, "model", "adam_beta2", hp.adam_beta2);
    hp.adam_eps = get_field(m, "model", "adam_eps", hp.adam_eps);
    hp.init_scale = get_field(m, "model", "init_scale", hp.init_scale);
    cfg.train_epochs = get_field(m, "model", "epochs", cfg.train_epochs);
    if (hp.embed_dim < 1) throw UsageError("config: model.embed_dim must be >= 1");
    if (hp.max_prefix_len < 1) throw UsageError("config: model.max_prefix_len must be >= 1");
    if (!(hp.learn_rate > 0.0)) throw UsageError("config: model.learn_rate must be > 0");
    if (hp.train_batch < 1 || hp.unlearn_batch < 1)
        throw UsageError("config: model batch sizes must be >= 1");
    if (cfg.train_epochs < 0) throw UsageError("config: model.epochs must be >= 0");
}

void parse_prep(const json& p, ExperimentConfig& cfg) {
    check_keys(p, "prep", {"min_count", "unlearn_ratio", "max_per_session"});
    cfg.prep.min_count = get_field(p, "prep", "min_count", cfg.prep.min_count);
    cfg.prep.unlearn_ratio = get_field(p, "prep", "unlearn_ratio", cfg.prep.unlearn_ratio);
    cfg.prep.max_per_session = get_field(p, "prep", "max_per_session", cfg.prep.max_per_session);
    if (cfg.prep.min_count < 1) throw UsageError("config: prep.min_count must be >= 1");
    if (!(cfg.prep.unlearn_ratio > 0.0) || cfg.prep.unlearn_ratio > 0.5)
        throw UsageError("config: prep.unlearn_ratio must be in (0, 0.5]");
    if (cfg.prep.max_per_session < 1)
        throw UsageError("config: prep.max_per_session must be >= 1");
}

void parse_unlearn(const json& u, ExperimentConfig& cfg) {
    check_keys(u, "unlearn",
               {"mode", "strategy", "metric", "temperature", "refresh_interval", "epochs",
                "total_steps", "pareto_tol", "pareto_max_iter", "auxiliary_retain",
                "auxiliary_batch", "normalize_gradients", "soft_with_replacement",
                "unlearn_floor"});
    UnlearnRunConfig& uc = cfg.unlearn;
    uc.mode = run_mode_from_name(get_field<std::string>(u, "unlearn", "mode", "cau"));
    uc.curriculum.strategy =
        strategy_from_name(get_field<std::string>(u, "unlearn", "strategy", "hard"));
    uc.curriculum.metric_kind =
        metric_from_name(get_field<std::string>(u, "unlearn", "metric", "embedding"));
    uc.curriculum.temperature =
        get_field(u, "unlearn", "temperature", uc.curriculum.temperature);
    uc.curriculum.refresh_interval =
        get_field(u, "unlearn", "refresh_interval", uc.curriculum.refresh_interval);
    uc.epochs = get_field(u, "unlearn", "epochs", uc.epochs);
    uc.total_steps = get_field(u, "unlearn", "total_steps", uc.total_steps);
    uc.pareto_tol = get_field(u, "unlearn", "pareto_tol", uc.pareto_tol);
    uc.pareto_max_iter = get_field(u, "unlearn", "pareto_max_iter", uc.pareto_max_iter);
    uc.auxiliary_retain = get_field(u, "unlearn", "auxiliary_retain", uc.auxiliary_retain);
    uc.auxiliary_batch = get_field(u, "unlearn", "auxiliary_batch", uc.auxiliary_batch);
    uc.normalize_gradients =
        get_field(u, "unlearn", "normalize_gradients", uc.normalize_gradients);
    uc.soft_with_replacement =
        get_field(u, "unlearn", "soft_with_replacement", uc.soft_with_replacement);
    uc.unlearn_floor = get_field(u, "unlearn", "unlearn_floor", uc.unlearn_floor);
    if (!(uc.curriculum.temperature > 0.0))
        throw UsageError("config: unlearn.temperature must be > 0");
    if (uc.curriculum.refresh_interval < 1)
        throw UsageError("config: unlearn.refresh_interval must be >= 1");
    if (uc.epochs < 0) throw UsageError("config: unlearn.epochs must be >= 0");
    if (uc.total_steps < 0) throw UsageError("config: unlearn.total_steps must be >= 0");
    if (!(uc.pareto_tol > 0.0)) throw UsageError("config: unlearn.pareto_tol must be > 0");
    if (uc.pareto_max_iter < 1) throw UsageError("config: unlearn.pareto_max_iter must be >= 1");
    if (uc.auxiliary_batch < 0) throw UsageError("config: unlearn.auxiliary_batch must be >= 0");
}

void parse_eval(const json& e, ExperimentConfig& cfg) {
    check_keys(e, "eval", {"beta", "use_forget", "target"});
    cfg.eval.beta = get_field(e, "eval", "beta", cfg.eval.beta);
    cfg.eval.use_forget = get_field(e, "eval", "use_forget", cfg.eval.use_forget);
    cfg.eval.target = get_field<std::string>(e, "eval", "target", cfg.eval.target);
    if (!(cfg.eval.beta > 0.0)) throw UsageError("config: eval.beta must be > 0");
    if (cfg.eval.target != "app" && cfg.eval.target != "rec")
        throw UsageError("config: eval.target must be \"app\" or \"rec\"");
}

void parse_ablate(const json& a, ExperimentConfig& cfg) {
    check_keys(a, "ablate", {"modes", "batch_sizes", "ratios"});
    if (a.contains("modes")) {
        for (const auto& m : get_field<std::vector<std::string>>(a, "ablate", "modes", {}))
            cfg.ablate.modes.push_back(run_mode_from_name(m));
    }
    cfg.ablate.batch_sizes = get_field<std::vector<int>>(a, "ablate", "batch_sizes", {});
    cfg.ablate.ratios = get_field<std::vector<double>>(a, "ablate", "ratios", {});
    for (int b : cfg.ablate.batch_sizes)
        if (b < 1) throw UsageError("config: ablate.batch_sizes entries must be >= 1");
    for (double r : cfg.ablate.ratios)
        if (!(r > 0.0) || r > 0.5)
            throw UsageError("config: ablate.ratios entries must be in (0, 0.5]");
}

} // namespace

void apply_seed(ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.seed = seed;
    cfg.dataset.synth.seed = seed;
    cfg.hp.seed = seed;
    cfg.unlearn.seed = seed;
    cfg.unlearn.curriculum.seed = seed;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    check_keys(j, "top level",
               {"dataset", "model", "prep", "unlearn", "eval", "ablate", "seed", "threads",
                "out"});
    ExperimentConfig cfg;
    cfg.seed = get_field<std::uint64_t>(j, "top level", "seed", 0);
    cfg.threads = get_field(j, "top level", "threads", 0);
    if (cfg.threads < 0) throw UsageError("config: threads must be >= 0");
    cfg.out_dir = get_field<std::string>(j, "top level", "out", cfg.out_dir);
    if (cfg.out_dir.empty()) throw UsageError("config: out is empty");
    if (j.contains("dataset")) parse_dataset(j.at("dataset"), cfg);
    if (j.contains("model")) parse_model(j.at("model"), cfg);
    if (j.contains("prep")) parse_prep(j.at("prep"), cfg);
    if (j.contains("unlearn")) parse_unlearn(j.at("unlearn"), cfg);
    if (j.contains("eval")) parse_eval(j.at("eval"), cfg);
    if (j.contains("ablate")) parse_ablate(j.at("ablate"), cfg);
    cfg.unlearn.curriculum.batch = cfg.hp.unlearn_batch;
    apply_seed(cfg, cfg.seed);
    return cfg;
}

void cmd_synth(const ExperimentConfig& cfg) {
    if (!cfg.dataset.synthetic) throw UsageError("synth: config selects an external dataset");
    ensure_out(cfg);
    const auto t0 = Clock::now();
    const Corpus corpus = synth_corpus(cfg.dataset.synth);
    const std::string path = opath(cfg, "corpus_raw.txt");
    save_corpus(corpus, path);
    const SynthSpec& s = cfg.dataset.synth;
    const json jc{{"sessions", s.n_sessions}, {"items", s.n_items},   {"sharpness", s.sharpness},
                  {"min_len", s.min_len},     {"max_len", s.max_len}, {"seed", s.seed}};
    write_manifest(path, "synth", jc, {});
    write_timing(cfg, "timing_synth.json", "synth", seconds_since(t0));
    log_info("synth: " + std::to_string(corpus.sessions.size()) + " sessions over " +
             std::to_string(corpus.item_count) + " items -> " + path);
}

void cmd_prep(const ExperimentConfig& cfg) {
    ensure_out(cfg);
    const auto t0 = Clock::now();
    Corpus raw;
    std::map<std::string, std::string> inputs;
    if (cfg.dataset.synthetic) {
        const std::string src = opath(cfg, "corpus_raw.txt");
        require_artifact(src);
        raw = load_corpus(src);
        inputs["corpus_raw.txt"] = file_digest_hex(src);
    } else {
        if (!fs::exists(cfg.dataset.path))
            throw DependencyError("missing dataset " + cfg.dataset.path);
        raw = load_interactions(cfg.dataset.path, cfg.dataset.format);
        inputs[fs::absolute(cfg.dataset.path).string()] = file_digest_hex(cfg.dataset.path);
    }
    const Corpus clean = preprocess(raw, cfg.prep.min_count);
    const SplitCorpus sp = split(clean, cfg.seed);
    const auto forget =
        select_unlearn(sp.train, cfg.prep.unlearn_ratio, cfg.seed, cfg.prep.max_per_session);
    const json jc{{"min_count", cfg.prep.min_count},
                  {"unlearn_ratio", cfg.prep.unlearn_ratio},
                  {"max_per_session", cfg.prep.max_per_session},
                  {"seed", cfg.seed}};
    const auto emit = [&](const char* name, const Corpus& part) {
        const std::string path = opath(cfg, name);
        save_corpus(part, path);
        write_manifest(path, "prep", jc, inputs);
    };
    emit("train.txt", sp.train);
    emit("valid.txt", sp.valid);
    emit("test.txt", sp.test);
    const std::string fpath = opath(cfg, "forget.tsv");
    save_unlearn_set(forget, fpath);
    auto finputs = inputs;
    finputs["train.txt"] = file_digest_hex(opath(cfg, "train.txt"));
    write_manifest(fpath, "prep", jc, finputs);
    write_timing(cfg, "timing_prep.json", "prep", seconds_since(t0));
    log_info("prep: train=" + std::to_string(sp.train.sessions.size()) +
             " valid=" + std::to_string(sp.valid.sessions.size()) +
             " test=" + std::to_string(sp.test.sessions.size()) +
             " forget=" + std::to_string(forget.size()) + " items=" +
             std::to_string(sp.train.item_count));
}

void cmd_train(const ExperimentConfig& cfg) {
    ensure_out(cfg);
    const std::string train_path = opath(cfg, "train.txt");
    const std::string valid_path = opath(cfg, "valid.txt");
    require_artifact(train_path);
    require_artifact(valid_path);
    const Corpus train_c = load_corpus(train_path);
    const Corpus valid_c = load_corpus(valid_path);
    const auto t0 = Clock::now();
    const ParamVector p0 = init_params(cfg.hp, train_c.item_count);
    const ParamVector p = train(p0, train_c, valid_c, cfg.hp, cfg.train_epochs);
    const double wall = seconds_since(t0);
    const std::string ck_path = opath(cfg, "theta_rec.ckpt");
    save_checkpoint(p, cfg.hp, ck_path);
    json jc = hp_json(cfg.hp);
    jc["epochs"] = cfg.train_epochs;
    write_manifest(ck_path, "train", jc,
                   {{"train.txt", file_digest_hex(train_path)},
                    {"valid.txt", file_digest_hex(valid_path)}});
    write_timing(cfg, "timing_train.json", "train", wall, json{{"epochs", cfg.train_epochs}});
    log_info("train: " + std::to_string(cfg.train_epochs) + " epochs in " + fmt(wall) + "s -> " +
             ck_path);
}

void cmd_unlearn(const ExperimentConfig& cfg) {
    ensure_out(cfg);
    const std::string rec_path = opath(cfg, "theta_rec.ckpt");
    const std::string train_path = opath(cfg, "train.txt");
    const std::string forget_path = opath(cfg, "forget.tsv");
    require_artifact(rec_path);
    require_artifact(train_path);
    require_artifact(forget_path);
    const Checkpoint ck = load_checkpoint(rec_path);
    const Corpus train_c = load_corpus(train_path);
    const auto forget = load_unlearn_set(forget_path, train_c);
    const RunMode mode = cfg.unlearn.mode;
    const std::string mode_name = run_mode_name(mode);
    const std::string app_path = opath(cfg, "theta_app_" + mode_name + ".ckpt");
    std::map<std::string, std::string> inputs{
        {"theta_rec.ckpt", file_digest_hex(rec_path)},
        {"train.txt", file_digest_hex(train_path)},
        {"forget.tsv", file_digest_hex(forget_path)}};
    json jc = unlearn_json(cfg.unlearn);
    double wall = 0.0;
    if (mode == RunMode::kOriginal) {
        save_checkpoint(ck.params, ck.hp, app_path);
    } else if (mode == RunMode::kRetrain) {
        const std::string valid_path = opath(cfg, "valid.txt");
        require_artifact(valid_path);
        const Corpus valid_c = load_corpus(valid_path);
        const auto t0 = Clock::now();
        const ParamVector p = retrain(train_c, valid_c, forget, ck.hp, cfg.train_epochs);
        wall = seconds_since(t0);
        save_checkpoint(p, ck.hp, app_path);
        inputs["valid.txt"] = file_digest_hex(valid_path);
        jc["train_epochs"] = cfg.train_epochs;
    } else {
        const RunArtifacts art = mode == RunMode::kCau
                                     ? unlearn_cau(ck.params, forget, cfg.unlearn, ck.hp, &train_c)
                                     : unlearn_variant(ck.params, forget, cfg.unlearn, ck.hp,
                                                       &train_c);
        wall = art.wall_seconds;
        save_checkpoint(art.params, ck.hp, app_path);
        const std::string alpha_path = opath(cfg, "alpha_" + mode_name + ".csv");
        save_alpha_trace(art.alpha_trace, alpha_path);
        write_manifest(alpha_path, "unlearn", jc, inputs);
    }
    write_manifest(app_path, "unlearn", jc, inputs);
    write_timing(cfg, "timing_unlearn_" + mode_name + ".json", "unlearn", wall,
                 json{{"mode", mode_name}});
    log_info("unlearn[" + mode_name + "]: " + std::to_string(forget.size()) + " samples in " +
             fmt(wall) + "s -> " + app_path);
}

void cmd_eval(const ExperimentConfig& cfg) {
    ensure_out(cfg);
    const bool rec_target = cfg.eval.target == "rec";
    const std::string run_id = rec_target ? "rec" : run_mode_name(cfg.unlearn.mode);
    const std::string ck_path =
        rec_target ? opath(cfg, "theta_rec.ckpt") : opath(cfg, "theta_app_" + run_id + ".ckpt");
    const std::string test_path = opath(cfg, "test.txt");
    require_artifact(ck_path);
    require_artifact(test_path);
    const Checkpoint ck = load_checkpoint(ck_path);
    const Corpus test_c = load_corpus(test_path);
    std::map<std::string, std::string> inputs{
        {fs::path(ck_path).filename().string(), file_digest_hex(ck_path)},
        {"test.txt", file_digest_hex(test_path)}};
    std::vector<UnlearnSample> forget;
    if (cfg.eval.use_forget) {
        const std::string forget_path = opath(cfg, "forget.tsv");
        const std::string train_path = opath(cfg, "train.txt");
        require_artifact(forget_path);
        require_artifact(train_path);
        const Corpus train_c = load_corpus(train_path);
        forget = load_unlearn_set(forget_path, train_c);
        inputs["forget.tsv"] = file_digest_hex(forget_path);
        inputs["train.txt"] = file_digest_hex(train_path);
    }
    const auto t0 = Clock::now();
    const MetricsReport r = report(ck.params, test_c, forget, cfg.eval.beta, ck.hp);
    const double wall = seconds_since(t0);
    const json jc{{"beta", cfg.eval.beta},
                  {"use_forget", cfg.eval.use_forget},
                  {"target", cfg.eval.target}};
    const std::string csv_path = opath(cfg, "metrics_" + run_id + ".csv");
    const std::string json_path = opath(cfg, "metrics_" + run_id + ".json");
    save_metrics_csv(r, run_id, csv_path);
    save_metrics_json(r, run_id, json_path);
    write_manifest(csv_path, "eval", jc, inputs);
    write_manifest(json_path, "eval", jc, inputs);
    write_timing(cfg, "timing_eval_" + run_id + ".json", "eval", wall, json{{"run", run_id}});
    std::string line = "eval[" + run_id + "]: recall@10=" + fmt(r.recall10) +
                       " ndcg@10=" + fmt(r.ndcg10);
    if (r.has_unlearn)
        line += " hit_u@1=" + fmt(r.hit_u1) + " u_beta=" + fmt(r.u_beta);
    log_info(line);
}

void cmd_ablate(const ExperimentConfig& cfg) {
    ensure_out(cfg);
    const std::string rec_path = opath(cfg, "theta_rec.ckpt");
    const std::string train_path = opath(cfg, "train.txt");
    const std::string valid_path = opath(cfg, "valid.txt");
    const std::string test_path = opath(cfg, "test.txt");
    require_artifact(rec_path);
    require_artifact(train_path);
    require_artifact(valid_path);
    require_artifact(test_path);
    const Checkpoint ck = load_checkpoint(rec_path);
    const Corpus train_c = load_corpus(train_path);
    const Corpus valid_c = load_corpus(valid_path);
    const Corpus test_c = load_corpus(test_path);
    std::vector<RunMode> modes = cfg.ablate.modes;
    if (modes.empty())
        modes = {RunMode::kCau,    RunMode::kEqualWeights, RunMode::kRandomOrder,
                 RunMode::kGaOnly, RunMode::kRetrain,      RunMode::kOriginal};
    std::vector<int> batches = cfg.ablate.batch_sizes;
    if (batches.empty()) batches = {cfg.hp.unlearn_batch};
    std::vector<double> ratios = cfg.ablate.ratios;
    if (ratios.empty()) ratios = {cfg.prep.unlearn_ratio};
    const auto t0 = Clock::now();
    std::ostringstream rows;
    rows << "mode,unlearn_batch,ratio,recall10,recall20,ndcg10,ndcg20,hit_u1,hit_u5,u_beta,"
            "wall_seconds\n";
    int count = 0;
    for (double ratio : ratios) {
        const auto forget =
            select_unlearn(train_c, ratio, cfg.seed, cfg.prep.max_per_session);
        for (int batch : batches) {
            for (RunMode mode : modes) {
                UnlearnRunConfig uc = cfg.unlearn;
                uc.mode = mode;
                uc.curriculum.batch = batch;
                ParamVector p;
                double wall = 0.0;
                if (mode == RunMode::kOriginal) {
                    p = ck.params;
                } else if (mode == RunMode::kRetrain) {
                    const auto tr0 = Clock::now();
                    p = retrain(train_c, valid_c, forget, ck.hp, cfg.train_epochs);
                    wall = seconds_since(tr0);
                } else {
                    RunArtifacts art = mode == RunMode::kCau
                                           ? unlearn_cau(ck.params, forget, uc, ck.hp, &train_c)
                                           : unlearn_variant(ck.params, forget, uc, ck.hp,
                                                             &train_c);
                    p = std::move(art.params);
                    wall = art.wall_seconds;
                }
                const MetricsReport r = report(p, test_c, forget, cfg.eval.beta, ck.hp);
                rows << run_mode_name(mode) << ',' << batch << ',' << fmt(ratio) << ','
                     << fmt(r.recall10) << ',' << fmt(r.recall20) << ',' << fmt(r.ndcg10) << ','
                     << fmt(r.ndcg20) << ',' << fmt(r.hit_u1) << ',' << fmt(r.hit_u5) << ','
                     << fmt(r.u_beta) << ',' << fmt(wall) << '\n';
                ++count;
                log_info(std::string("ablate[") + run_mode_name(mode) + " batch=" +
                         std::to_string(batch) + " ratio=" + fmt(ratio) + "]: recall@10=" +
                         fmt(r.recall10) + " hit_u@1=" + fmt(r.hit_u1) + " u_beta=" +
                         fmt(r.u_beta));
            }
        }
    }
    const std::string path = opath(cfg, "ablate.csv");
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << rows.str();
    if (!out) throw Error("write failed: " + path);
    write_timing(cfg, "timing_ablate.json", "ablate", seconds_since(t0),
                 json{{"rows", count}});
    log_info("ablate: " + std::to_string(count) + " rows -> " + path);
}

} // namespace cau
