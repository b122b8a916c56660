#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "cau/corpus.hpp"

namespace cau {

struct HyperParams {
    int embed_dim = 64;      // d
    int max_prefix_len = 10; // L: prefixes are left-truncated to the last L items
    double learn_rate = 1e-3;
    int train_batch = 256;
    int unlearn_batch = 128;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double init_scale = 0.0; // <= 0 means 1/sqrt(d)
    std::uint64_t seed = 0;
};

// Single-layer GRU recommender with tied output weights: item scores are
// dot products of the hidden state with the shared embedding table.
//
// Flat layout (fixed; the Pareto solver relies on a stable ordering):
//   E rows 0..|V| ((|V|+1)*d, row 0 = padding, kept at zero),
//   W_z, W_r, W_h, U_z, U_r, U_h (d*d each, row-major),
//   b_z, b_r, b_h (d each).
// Recurrence per consumed item x = E[v], previous state h:
//   z = sigmoid(W_z x + U_z h + b_z)
//   r = sigmoid(W_r x + U_r h + b_r)
//   c = tanh(W_h x + U_h (r .* h) + b_h)
//   h' = (1 - z) .* c + z .* h
struct ParamVector {
    int item_count = 0; // |V|
    int d = 0;
    std::vector<double> flat;

    static std::size_t flat_len_for(int item_count, int d) {
        const std::size_t dd = static_cast<std::size_t>(d);
        return (static_cast<std::size_t>(item_count) + 1) * dd + 6 * dd * dd + 3 * dd;
    }
    std::size_t flat_len() const { return flat_len_for(item_count, d); }
    std::size_t embed_size() const {
        return (static_cast<std::size_t>(item_count) + 1) * static_cast<std::size_t>(d);
    }

    const double* embed(int item) const {
        return flat.data() + static_cast<std::size_t>(item) * static_cast<std::size_t>(d);
    }
    double* embed(int item) {
        return flat.data() + static_cast<std::size_t>(item) * static_cast<std::size_t>(d);
    }
    // block 0..5 = W_z, W_r, W_h, U_z, U_r, U_h (row-major d*d)
    const double* mat(int block) const {
        return flat.data() + embed_size() +
               static_cast<std::size_t>(block) * static_cast<std::size_t>(d) * d;
    }
    double* mat(int block) {
        return flat.data() + embed_size() +
               static_cast<std::size_t>(block) * static_cast<std::size_t>(d) * d;
    }
    // block 0..2 = b_z, b_r, b_h
    const double* bias(int block) const {
        return flat.data() + embed_size() + 6 * static_cast<std::size_t>(d) * d +
               static_cast<std::size_t>(block) * static_cast<std::size_t>(d);
    }
    double* bias(int block) {
        return flat.data() + embed_size() + 6 * static_cast<std::size_t>(d) * d +
               static_cast<std::size_t>(block) * static_cast<std::size_t>(d);
    }
};

struct Forward {
    std::vector<double> state;     // final hidden state (d)
    std::vector<double> logits;    // item v at index v-1 (|V|)
    std::vector<double> log_probs; // stable log-softmax of logits (|V|)
};

enum class LossKind { kUnlearn, kNormal, kKl, kRec };

// Uniform(-s, +s) entries with s = init_scale (1/sqrt(d) when unset),
// seeded from hp.seed; padding row zeroed.
ParamVector init_params(const HyperParams& hp, int item_count);

// Empty prefix is defined: state 0, logits 0, log_probs uniform.
Forward forward(const ParamVector& p, const std::vector<int>& prefix, const HyperParams& hp);

// Mean over positions t=1..n-1 of -log P(v_{t+1} | v_{1:t}).
double loss_rec(const ParamVector& p, const Session& session, const HyperParams& hp);
// +log P(target | prefix): minimizing it ascends the training loss on the sample.
double loss_unlearn(const ParamVector& p, const UnlearnSample& s, const HyperParams& hp);
// -log P(successor | prefix): the skip-prediction retention term.
double loss_normal(const ParamVector& p, const UnlearnSample& s, const HyperParams& hp);
// KL(P_ref || P_theta) on the sample prefix; the reference side is constant.
double loss_kl(const ParamVector& p, const ParamVector& ref, const UnlearnSample& s,
               const HyperParams& hp);

// Exact batch-mean gradient via backpropagation through time. kKl requires
// ref_params; kRec is served by grad_rec.
std::vector<double> grad(const ParamVector& p, LossKind kind,
                         const std::vector<UnlearnSample>& batch, const HyperParams& hp,
                         const ParamVector* ref_params = nullptr);
std::vector<double> grad_rec(const ParamVector& p, const std::vector<const Session*>& batch,
                             const HyperParams& hp);

struct UnlearnLossValues {
    double unlearn = 0.0;
    double normal = 0.0;
    double kl = 0.0;
};

// Fused per-sample gradient work: one forward pass, three backward passes
// sharing the recorded activations. Gradients are ADDED to the accumulators
// (callers divide by batch size). ref_log_probs is the frozen reference
// distribution on the sample prefix (cacheable across epochs). Samples whose
// target log-probability already sits below unlearn_floor_logp contribute a
// zero unlearn gradient (loss values are still returned).
UnlearnLossValues accumulate_unlearn_grads(
    const ParamVector& p, const UnlearnSample& s, const std::vector<double>& ref_log_probs,
    const HyperParams& hp, std::vector<double>& g_unlearn, std::vector<double>& g_normal,
    std::vector<double>& g_kl,
    double unlearn_floor_logp = -std::numeric_limits<double>::infinity());

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long long step = 0;
};

AdamState make_adam(const ParamVector& p);
// Bias-corrected Adam; the padding embedding row is never touched.
void adam_step(ParamVector& p, AdamState& st, const std::vector<double>& g,
               const HyperParams& hp);

// Mini-batch Adam on loss_rec; returns the parameters with the best
// validation Recall@10 (earliest epoch on ties). Deterministic per hp.seed.
ParamVector train(const ParamVector& init, const Corpus& train_corpus,
                  const Corpus& valid_corpus, const HyperParams& hp, int epochs);

} // namespace cau
