#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cau/corpus.hpp"
#include "cau/curriculum.hpp"
#include "cau/model.hpp"

namespace cau {

enum class RunMode {
    kCau,          // Pareto weights + curriculum + retention losses
    kEqualWeights, // fixed alpha = 1/3 each (no Pareto solve)
    kRandomOrder,  // Pareto retained, batches shuffled (no curriculum)
    kGaOnly,       // gradient ascent on the unlearn loss alone (no retention)
    kRetrain,      // train from scratch on the spliced corpus
    kOriginal,     // untouched trained model
};

const char* run_mode_name(RunMode m);
RunMode run_mode_from_name(const std::string& name);

struct UnlearnRunConfig {
    CurriculumConfig curriculum;
    int epochs = 100;
    int total_steps = 0; // > 0 runs on a global step budget instead of epochs
    double pareto_tol = 1e-6;
    int pareto_max_iter = 100;
    RunMode mode = RunMode::kCau;
    bool auxiliary_retain = false; // feed extra retain pairs into the retention losses
    int auxiliary_batch = 0;       // retain pairs added per step when enabled
    bool normalize_gradients = false;    // per-task l2 normalization before the solve
    bool soft_with_replacement = false;  // independent per-step draws instead of
                                         // epoch-wide without-replacement coverage
    bool unlearn_floor = false; // stop pushing samples already below 1/(10|V|)
    std::uint64_t seed = 0;
};

struct AlphaRecord {
    int epoch = 0;
    int step = 0; // global step index
    std::array<double, 3> alpha{0.0, 0.0, 0.0};
};

struct EpochLoss {
    double unlearn = 0.0;
    double normal = 0.0;
    double kl = 0.0;
};

struct RunArtifacts {
    ParamVector params; // theta_app
    std::vector<AlphaRecord> alpha_trace;
    std::vector<EpochLoss> loss_trace;                          // batch-mean per epoch
    std::vector<std::vector<DifficultyScore>> difficulty_trace; // per-epoch snapshots
    double wall_seconds = 0.0;
    int epochs_run = 0;
};

// Curriculum-ordered multi-objective unlearning: per batch, solve the
// min-norm problem over the three task gradients and Adam-step along the
// common descent direction. Throws DivergenceError when the batch-mean
// normal loss exceeds 5x its starting level for 3 consecutive epochs.
// `retain` supplies auxiliary retain pairs and is only needed when
// cfg.auxiliary_retain is set.
RunArtifacts unlearn_cau(const ParamVector& theta_rec, const std::vector<UnlearnSample>& forget,
                         const UnlearnRunConfig& cfg, const HyperParams& hp,
                         const Corpus* retain = nullptr);

// Ablation variants: equal_weights, random_order, ga_only. ga_only is exempt
// from the divergence guard (its collapse is the expected outcome).
RunArtifacts unlearn_variant(const ParamVector& theta_rec,
                             const std::vector<UnlearnSample>& forget,
                             const UnlearnRunConfig& cfg, const HyperParams& hp,
                             const Corpus* retain = nullptr);

// Remove each forget target from its session (splice position t out); drop
// sessions shrinking below length 2. Item vocabulary is preserved.
Corpus splice_forget(const Corpus& train, const std::vector<UnlearnSample>& forget);

// Fresh training on the spliced corpus (exact unlearning baseline).
ParamVector retrain(const Corpus& train, const Corpus& valid,
                    const std::vector<UnlearnSample>& forget, const HyperParams& hp, int epochs);

// Uniform retain positions (prefix, next) from the training corpus that never
// coincide with a forget (session, position) pair.
std::vector<UnlearnSample> auxiliary_retain_batch(const Corpus& train,
                                                  const std::vector<UnlearnSample>& forget,
                                                  int size, std::uint64_t seed);

// CSV "epoch,step,alpha1,alpha2,alpha3".
void save_alpha_trace(const std::vector<AlphaRecord>& trace, const std::string& path);

} // namespace cau
