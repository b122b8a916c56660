#pragma once

#include <string>
#include <vector>

#include "cau/corpus.hpp"
#include "cau/model.hpp"

namespace cau {

struct MetricsReport {
    double recall10 = 0.0;
    double recall20 = 0.0;
    double ndcg10 = 0.0;
    double ndcg20 = 0.0;
    double hit_u1 = 0.0;
    double hit_u5 = 0.0;
    double u_beta = 0.0;
    double beta = 0.0;
    std::size_t test_positions = 0;
    std::size_t unlearn_samples = 0;
    bool has_unlearn = false; // false (empty forget set) leaves hit_u/u_beta unset
};

// Rank of target (1 = best) over items 1..|V|; ties go to the lower item id.
int rank_of_target(const std::vector<double>& logits, int target);

// Leave-one-out: predict each test session's final item from all preceding
// items; fraction of sessions ranking the ground truth within top-k.
double recall_at_k(const ParamVector& p, const Corpus& test, int k, const HyperParams& hp);
// Same protocol with gain 1/log2(rank+1) (single relevant item, ideal = 1).
double ndcg_at_k(const ParamVector& p, const Corpus& test, int k, const HyperParams& hp);
// Fraction of forget samples whose deleted target still ranks within top-k
// when scored from the prefix v_1..v_{t-1}; lower is better.
double hit_u_at_k(const ParamVector& p, const std::vector<UnlearnSample>& forget, int k,
                  const HyperParams& hp);
// (1+b^2) * recall * (1-hit) / (b^2 * recall + (1-hit)); 0 when the
// denominator vanishes. Convention: recall = Recall@10, hit = Hit_u@1.
double u_beta(double recall, double hit_u, double beta);

MetricsReport report(const ParamVector& p, const Corpus& test,
                     const std::vector<UnlearnSample>& forget, double beta,
                     const HyperParams& hp);

// CSV rows "run_id,metric,k,value" (u_beta row carries beta in the k column)
// and a JSON mirror of the report.
void save_metrics_csv(const MetricsReport& r, const std::string& run_id, const std::string& path);
void save_metrics_json(const MetricsReport& r, const std::string& run_id, const std::string& path);

} // namespace cau
