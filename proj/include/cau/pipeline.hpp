#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cau/corpus.hpp"
#include "cau/engine.hpp"
#include "cau/model.hpp"
#include "cau/synth.hpp"

namespace cau {

struct DatasetConfig {
    bool synthetic = true;
    SynthSpec synth;
    std::string path; // external TSV when not synthetic
    TsvFormat format = TsvFormat::kUserItemTime;
};

struct PrepConfig {
    int min_count = 5;
    double unlearn_ratio = 0.1;
    int max_per_session = 1;
};

struct EvalConfig {
    double beta = 10.0;
    bool use_forget = true;     // false -> recommendation metrics only
    std::string target = "app"; // "app" = unlearned checkpoint, "rec" = trained one
};

struct AblateConfig {
    std::vector<RunMode> modes;   // empty -> all six modes
    std::vector<int> batch_sizes; // empty -> {model.unlearn_batch}
    std::vector<double> ratios;   // empty -> {prep.unlearn_ratio}
};

struct ExperimentConfig {
    DatasetConfig dataset;
    HyperParams hp;
    int train_epochs = 300;
    PrepConfig prep;
    UnlearnRunConfig unlearn;
    EvalConfig eval;
    AblateConfig ablate;
    std::uint64_t seed = 0;
    int threads = 0; // 0 = single-threaded
    std::string out_dir = "out";
};

// Parse and validate a JSON experiment config. The schema is strict: unknown
// keys and ill-typed values are usage errors. The global seed fans out to
// every stage; the unlearn batch size mirrors model.unlearn_batch.
ExperimentConfig load_config(const std::string& path);

// Override the global seed and re-derive every per-stage seed from it.
void apply_seed(ExperimentConfig& cfg, std::uint64_t seed);

// Pipeline stages. Each writes its artifacts plus chained manifests under
// cfg.out_dir and a per-stage timing file. Apart from the timing files every
// output byte is a pure function of (config, seed).
void cmd_synth(const ExperimentConfig& cfg);
void cmd_prep(const ExperimentConfig& cfg);
void cmd_train(const ExperimentConfig& cfg);
void cmd_unlearn(const ExperimentConfig& cfg);
void cmd_eval(const ExperimentConfig& cfg);
void cmd_ablate(const ExperimentConfig& cfg);

} // namespace cau
