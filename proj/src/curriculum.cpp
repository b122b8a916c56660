#include "cau/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "cau/errors.hpp"
#include "cau/parallel.hpp"

namespace cau {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

} // namespace

double dif_gradient(const ParamVector& p, const ParamVector& ref, const UnlearnSample& s,
                    const HyperParams& hp) {
    const std::size_t flat = p.flat_len();
    std::vector<double> gu(flat, 0.0), gn(flat, 0.0), gk(flat, 0.0);
    const Forward base = forward(ref, s.prefix, hp);
    accumulate_unlearn_grads(p, s, base.log_probs, hp, gu, gn, gk);
    for (std::size_t i = 0; i < flat; ++i) gn[i] += gk[i]; // retain sum
    const double nu = std::sqrt(dot(gu, gu));
    const double nr = std::sqrt(dot(gn, gn));
    if (nu < 1e-12 || nr < 1e-12) return 0.0; // degenerate gradients: neutral
    return -dot(gu, gn) / (nu * nr);
}

double dif_embedding(const ParamVector& p, const UnlearnSample& s, const HyperParams& hp) {
    const Forward f = forward(p, s.prefix, hp);
    const double* e = p.embed(s.target);
    double acc = 0.0;
    for (int j = 0; j < p.d; ++j) acc += f.state[static_cast<std::size_t>(j)] * e[j];
    return acc;
}

std::vector<DifficultyScore> score_all(const ParamVector& p, const ParamVector& ref,
                                       const std::vector<UnlearnSample>& forget,
                                       DifficultyKind kind, const HyperParams& hp) {
    std::vector<DifficultyScore> scores(forget.size());
    const std::size_t chunk = kind == DifficultyKind::kGradient ? kGradChunk : kEvalChunk;
    parallel_chunks(forget.size(), chunk, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            scores[i].sample_ref = i;
            scores[i].kind = kind;
            scores[i].score = kind == DifficultyKind::kGradient
                                  ? dif_gradient(p, ref, forget[i], hp)
                                  : dif_embedding(p, forget[i], hp);
        }
    });
    return scores;
}

std::vector<std::vector<std::size_t>> hard_schedule(const std::vector<DifficultyScore>& scores,
                                                    int batch) {
    if (scores.empty()) throw UsageError("hard_schedule needs a non-empty forget set");
    if (batch < 1) throw UsageError("batch must be >= 1");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a].score < scores[b].score;
    });
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(batch)) {
        const std::size_t b1 = std::min(b0 + static_cast<std::size_t>(batch), order.size());
        std::vector<std::size_t> chunk;
        chunk.reserve(b1 - b0);
        for (std::size_t i = b0; i < b1; ++i) chunk.push_back(scores[order[i]].sample_ref);
        batches.push_back(std::move(chunk));
    }
    return batches;
}

std::vector<double> soft_probabilities(const std::vector<DifficultyScore>& scores, double t,
                                       double tau) {
    if (scores.empty()) throw UsageError("soft_probabilities needs at least one score");
    if (!(tau > 0.0)) throw UsageError("temperature must be > 0");
    if (t < 0.0 || t > 1.0) throw UsageError("progress must lie in [0, 1]");
    const std::size_t n = scores.size();
    double mean = 0.0;
    for (const auto& s : scores) mean += s.score;
    mean /= static_cast<double>(n);

    // log p_x = tau * (2t - 1) * (Dif - mean), normalized with max
    // subtraction so hard-favoring late stages cannot overflow.
    const double coef = tau * (2.0 * t - 1.0);
    std::vector<double> logit(n);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        logit[i] = coef * (scores[i].score - mean);
        mx = std::max(mx, logit[i]);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        logit[i] = std::exp(logit[i] - mx);
        sum += logit[i];
    }
    for (double& v : logit) v /= sum;
    return logit;
}

std::vector<std::size_t> soft_draw_batch(const std::vector<DifficultyScore>& scores, double t,
                                         double tau, int batch, Rng& rng) {
    if (batch < 1) throw UsageError("batch must be >= 1");
    const std::size_t n = scores.size();
    if (static_cast<std::size_t>(batch) > n)
        throw UsageError("batch exceeds the number of candidates");
    const std::vector<double> p = soft_probabilities(scores, t, tau);

    // Exponential-key weighted sampling without replacement: the batch
    // largest keys u^(1/p) are exactly a p-weighted draw. Done in log space;
    // key ties (impossible almost surely) break to the lower index.
    struct Key {
        double logk;
        std::size_t idx;
    };
    std::vector<Key> keys(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform();
        keys[i] = {std::log(u) / p[i], i};
    }
    std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
        return a.logk != b.logk ? a.logk > b.logk : a.idx < b.idx;
    });
    std::vector<std::size_t> out;
    out.reserve(static_cast<std::size_t>(batch));
    for (int i = 0; i < batch; ++i)
        out.push_back(scores[keys[static_cast<std::size_t>(i)].idx].sample_ref);
    return out;
}

void append_score_dump(const std::vector<DifficultyScore>& scores,
                       const std::vector<UnlearnSample>& forget, int epoch,
                       const std::string& path, bool truncate) {
    std::ofstream out(path, truncate ? std::ios::trunc : std::ios::app);
    if (!out) throw Error("cannot write " + path);
    if (truncate) out << "sample_id,kind,score,epoch\n";
    for (const auto& s : scores) {
        const UnlearnSample& u = forget[s.sample_ref];
        out << u.session_id << '@' << u.position_t << ','
            << (s.kind == DifficultyKind::kGradient ? "gradient" : "embedding") << ','
            << s.score << ',' << epoch << '\n';
    }
    if (!out) throw Error("write failed: " + path);
}

} // namespace cau
