#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cau/corpus.hpp"
#include "cau/model.hpp"
#include "cau/rng.hpp"

namespace cau {

enum class DifficultyKind { kGradient, kEmbedding };
enum class CurriculumStrategy { kHard, kSoft };

struct CurriculumConfig {
    DifficultyKind metric_kind = DifficultyKind::kEmbedding;
    CurriculumStrategy strategy = CurriculumStrategy::kHard;
    double temperature = 2.0; // tau
    int refresh_interval = 1; // steps between score refreshes (soft); hard refreshes per epoch
    int batch = 128;
    std::uint64_t seed = 0;
};

struct DifficultyScore {
    std::size_t sample_ref = 0; // index into the forget set
    double score = 0.0;
    DifficultyKind kind = DifficultyKind::kEmbedding;
};

// -cos( grad L_unlearn , grad L_normal + grad L_kl ) on the current params;
// 0 when either vector is numerically zero. In [-1, 1]: -1 = easiest
// (aligned with retention), +1 = hardest (opposed).
double dif_gradient(const ParamVector& p, const ParamVector& ref, const UnlearnSample& s,
                    const HyperParams& hp);

// <session state of the prefix, embedding of the target>: how strongly the
// model currently favors the item being forgotten.
double dif_embedding(const ParamVector& p, const UnlearnSample& s, const HyperParams& hp);

// Score every sample of the forget set with the configured metric.
std::vector<DifficultyScore> score_all(const ParamVector& p, const ParamVector& ref,
                                       const std::vector<UnlearnSample>& forget,
                                       DifficultyKind kind, const HyperParams& hp);

// Ascending stable sort by score (ties keep sample order), chunked into
// consecutive batches: easy batches first.
std::vector<std::vector<std::size_t>> hard_schedule(const std::vector<DifficultyScore>& scores,
                                                    int batch);

// p_x proportional to exp( tau * (2t - 1) * (Dif(x) - mean Dif) ), computed
// in log space with max subtraction; sums to 1.
std::vector<double> soft_probabilities(const std::vector<DifficultyScore>& scores, double t,
                                       double tau);

// Weighted sampling without replacement via exponential keys
// k_x = u_x^(1/p_x): keep the `batch` largest keys. Deterministic per rng
// state.
std::vector<std::size_t> soft_draw_batch(const std::vector<DifficultyScore>& scores, double t,
                                         double tau, int batch, Rng& rng);

// Optional analysis dump: CSV "sample_id,kind,score,epoch".
void append_score_dump(const std::vector<DifficultyScore>& scores,
                       const std::vector<UnlearnSample>& forget, int epoch,
                       const std::string& path, bool truncate);

} // namespace cau
