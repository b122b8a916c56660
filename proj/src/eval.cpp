#include "cau/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "cau/errors.hpp"
#include "cau/parallel.hpp"
#include "json.hpp"

namespace cau {

namespace {

// Per-chunk partial sums reduced in chunk order: results are independent of
// the worker count.
template <typename PerItem>
double mean_over(std::size_t n, PerItem per_item) {
    if (n == 0) return 0.0;
    const std::size_t chunks = chunk_count(n, kEvalChunk);
    std::vector<double> partial(chunks, 0.0);
    parallel_chunks(n, kEvalChunk, [&](std::size_t c, std::size_t b, std::size_t e) {
        double acc = 0.0;
        for (std::size_t i = b; i < e; ++i) acc += per_item(i);
        partial[c] = acc;
    });
    double total = 0.0;
    for (double x : partial) total += x;
    return total / static_cast<double>(n);
}

std::vector<const Session*> eligible_sessions(const Corpus& test) {
    std::vector<const Session*> out;
    for (const auto& s : test.sessions)
        if (s.items.size() >= 2) out.push_back(&s);
    return out;
}

int loo_rank(const ParamVector& p, const Session& s, const HyperParams& hp) {
    const std::vector<int> prefix(s.items.begin(), s.items.end() - 1);
    const Forward f = forward(p, prefix, hp);
    return rank_of_target(f.logits, s.items.back());
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

int rank_of_target(const std::vector<double>& logits, int target) {
    const double ts = logits[static_cast<std::size_t>(target) - 1];
    int rank = 1;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (id == target) continue;
        // Strictly higher score outranks; equal score outranks only with a
        // lower item id.
        if (logits[i] > ts || (logits[i] == ts && id < target)) ++rank;
    }
    return rank;
}

double recall_at_k(const ParamVector& p, const Corpus& test, int k, const HyperParams& hp) {
    const auto sessions = eligible_sessions(test);
    return mean_over(sessions.size(), [&](std::size_t i) {
        return loo_rank(p, *sessions[i], hp) <= k ? 1.0 : 0.0;
    });
}

double ndcg_at_k(const ParamVector& p, const Corpus& test, int k, const HyperParams& hp) {
    const auto sessions = eligible_sessions(test);
    return mean_over(sessions.size(), [&](std::size_t i) {
        const int rank = loo_rank(p, *sessions[i], hp);
        return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
    });
}

double hit_u_at_k(const ParamVector& p, const std::vector<UnlearnSample>& forget, int k,
                  const HyperParams& hp) {
    if (forget.empty()) throw UsageError("hit_u needs a non-empty forget set");
    return mean_over(forget.size(), [&](std::size_t i) {
        const Forward f = forward(p, forget[i].prefix, hp);
        return rank_of_target(f.logits, forget[i].target) <= k ? 1.0 : 0.0;
    });
}

double u_beta(double recall, double hit_u, double beta) {
    if (!(beta > 0.0)) throw UsageError("beta must be > 0");
    const double retain = recall;
    const double forget = 1.0 - hit_u;
    const double denom = beta * beta * retain + forget;
    if (denom <= 0.0) return 0.0;
    return (1.0 + beta * beta) * retain * forget / denom;
}

MetricsReport report(const ParamVector& p, const Corpus& test,
                     const std::vector<UnlearnSample>& forget, double beta,
                     const HyperParams& hp) {
    MetricsReport r;
    r.beta = beta;
    r.test_positions = eligible_sessions(test).size();
    r.recall10 = recall_at_k(p, test, 10, hp);
    r.recall20 = recall_at_k(p, test, 20, hp);
    r.ndcg10 = ndcg_at_k(p, test, 10, hp);
    r.ndcg20 = ndcg_at_k(p, test, 20, hp);
    r.unlearn_samples = forget.size();
    r.has_unlearn = !forget.empty();
    if (r.has_unlearn) {
        r.hit_u1 = hit_u_at_k(p, forget, 1, hp);
        r.hit_u5 = hit_u_at_k(p, forget, 5, hp);
        r.u_beta = u_beta(r.recall10, r.hit_u1, beta);
    }
    return r;
}

void save_metrics_csv(const MetricsReport& r, const std::string& run_id,
                      const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "run_id,metric,k,value\n";
    out << run_id << ",recall,10," << fmt(r.recall10) << "\n";
    out << run_id << ",recall,20," << fmt(r.recall20) << "\n";
    out << run_id << ",ndcg,10," << fmt(r.ndcg10) << "\n";
    out << run_id << ",ndcg,20," << fmt(r.ndcg20) << "\n";
    if (r.has_unlearn) {
        out << run_id << ",hit_u,1," << fmt(r.hit_u1) << "\n";
        out << run_id << ",hit_u,5," << fmt(r.hit_u5) << "\n";
        out << run_id << ",u_beta," << fmt(r.beta) << "," << fmt(r.u_beta) << "\n";
    }
    if (!out) throw Error("write failed: " + path);
}

void save_metrics_json(const MetricsReport& r, const std::string& run_id,
                       const std::string& path) {
    nlohmann::json j;
    j["run_id"] = run_id;
    j["recall@10"] = r.recall10;
    j["recall@20"] = r.recall20;
    j["ndcg@10"] = r.ndcg10;
    j["ndcg@20"] = r.ndcg20;
    j["test_positions"] = r.test_positions;
    if (r.has_unlearn) {
        j["hit_u@1"] = r.hit_u1;
        j["hit_u@5"] = r.hit_u5;
        j["u_beta"] = r.u_beta;
        j["beta"] = r.beta;
        j["unlearn_samples"] = r.unlearn_samples;
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << j.dump(2) << "\n";
    if (!out) throw Error("write failed: " + path);
}

} // namespace cau
