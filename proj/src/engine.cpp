#include "cau/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "cau/errors.hpp"
#include "cau/hash.hpp"
#include "cau/log.hpp"
#include "cau/parallel.hpp"
#include "cau/pareto.hpp"
#include "cau/rng.hpp"

namespace cau {

namespace {

struct BatchGrads {
    std::vector<std::vector<double>> g; // [unlearn, normal, kl], flat layout
    UnlearnLossValues losses;           // means over the unlearn batch
};

// Batch-mean task gradients with a deterministic chunked reduction. The
// unlearn gradient averages over the forget batch; the retention gradients
// average over forget batch plus auxiliary retain pairs (aux pairs carry no
// unlearn term).
BatchGrads batch_gradients(const ParamVector& theta, const ParamVector& ref,
                           const std::vector<UnlearnSample>& forget,
                           const std::vector<std::size_t>& batch,
                           const std::vector<std::vector<double>>& ref_lp,
                           const std::vector<UnlearnSample>& aux, const HyperParams& hp,
                           double floor_logp) {
    const std::size_t flat = theta.flat_len();
    const std::size_t B = batch.size();
    const std::size_t n = B + aux.size();
    const std::size_t chunks = chunk_count(n, kGradChunk);

    struct Part {
        std::vector<double> gu, gn, gk;
        double lu = 0.0, ln = 0.0, lk = 0.0;
    };
    std::vector<Part> part(chunks);
    parallel_chunks(n, kGradChunk, [&](std::size_t c, std::size_t b, std::size_t e) {
        Part& pt = part[c];
        pt.gu.assign(flat, 0.0);
        pt.gn.assign(flat, 0.0);
        pt.gk.assign(flat, 0.0);
        for (std::size_t i = b; i < e; ++i) {
            if (i < B) {
                const std::size_t ref_idx = batch[i];
                const UnlearnLossValues lv =
                    accumulate_unlearn_grads(theta, forget[ref_idx], ref_lp[ref_idx], hp, pt.gu,
                                             pt.gn, pt.gk, floor_logp);
                pt.lu += lv.unlearn;
                pt.ln += lv.normal;
                pt.lk += lv.kl;
            } else {
                const UnlearnSample& s = aux[i - B];
                const Forward base = forward(ref, s.prefix, hp);
                // +inf floor suppresses the unlearn backward pass entirely
                accumulate_unlearn_grads(theta, s, base.log_probs, hp, pt.gu, pt.gn, pt.gk,
                                         std::numeric_limits<double>::infinity());
            }
        }
    });

    BatchGrads out;
    out.g.assign(3, std::vector<double>(flat, 0.0));
    double lu = 0.0, ln = 0.0, lk = 0.0;
    for (const Part& pt : part) {
        for (std::size_t k = 0; k < flat; ++k) {
            out.g[0][k] += pt.gu[k];
            out.g[1][k] += pt.gn[k];
            out.g[2][k] += pt.gk[k];
        }
        lu += pt.lu;
        ln += pt.ln;
        lk += pt.lk;
    }
    const double inv_b = 1.0 / static_cast<double>(B);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < flat; ++k) {
        out.g[0][k] *= inv_b;
        out.g[1][k] *= inv_n;
        out.g[2][k] *= inv_n;
    }
    out.losses = {lu * inv_b, ln * inv_b, lk * inv_b};
    return out;
}

std::vector<std::vector<std::size_t>> chunk_indices(const std::vector<std::size_t>& order,
                                                    int batch) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(batch)) {
        const std::size_t b1 = std::min(b0 + static_cast<std::size_t>(batch), order.size());
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b0),
                         order.begin() + static_cast<std::ptrdiff_t>(b1));
    }
    return out;
}

// Pareto weights with zero-norm tasks dropped from the solve: a task whose
// batch gradient vanishes (the KL term at the very first step, exactly at
// theta_rec) would otherwise pin the min-norm point to zero and stall the
// whole run. Dropped tasks get weight 0.
std::array<double, 3> pareto_alpha(const std::vector<std::vector<double>>& g, double tol,
                                   int max_iter, bool normalize) {
    const GramMatrix M = gram(g);
    std::array<double, 3> norms{};
    std::vector<int> active;
    for (int i = 0; i < 3; ++i) {
        norms[static_cast<std::size_t>(i)] = std::sqrt(std::max(0.0, M[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)]));
        if (norms[static_cast<std::size_t>(i)] > 1e-10) active.push_back(i);
    }
    std::array<double, 3> alpha{0.0, 0.0, 0.0};
    if (active.empty()) {
        alpha = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
        return alpha;
    }
    if (active.size() == 1) {
        alpha[static_cast<std::size_t>(active[0])] = 1.0;
        return alpha;
    }
    GramMatrix sub(active.size(), std::vector<double>(active.size(), 0.0));
    for (std::size_t i = 0; i < active.size(); ++i)
        for (std::size_t j = 0; j < active.size(); ++j) {
            double v = M[static_cast<std::size_t>(active[i])][static_cast<std::size_t>(active[j])];
            if (normalize)
                v /= norms[static_cast<std::size_t>(active[i])] *
                     norms[static_cast<std::size_t>(active[j])];
            sub[i][j] = v;
        }
    const std::vector<double> a = solve_min_norm(sub, tol, max_iter);
    for (std::size_t i = 0; i < active.size(); ++i)
        alpha[static_cast<std::size_t>(active[i])] = a[i];
    return alpha;
}

std::vector<DifficultyScore> subset_scores(const std::vector<DifficultyScore>& scores,
                                           const std::vector<std::size_t>& keep) {
    std::vector<DifficultyScore> out;
    out.reserve(keep.size());
    for (std::size_t i : keep) out.push_back(scores[i]);
    return out;
}

RunArtifacts run_unlearn(const ParamVector& theta_rec, const std::vector<UnlearnSample>& forget,
                         const UnlearnRunConfig& cfg, const HyperParams& hp,
                         const Corpus* retain) {
    if (forget.empty()) throw UsageError("forget set is empty");
    if (cfg.epochs < 0 || cfg.total_steps < 0) throw UsageError("negative run length");
    if (cfg.curriculum.batch < 1) throw UsageError("unlearn batch must be >= 1");
    if (cfg.curriculum.refresh_interval < 1) throw UsageError("refresh interval must be >= 1");
    if (cfg.auxiliary_retain && cfg.auxiliary_batch > 0 && retain == nullptr)
        throw UsageError("auxiliary retain needs the training corpus");

    const auto t_start = std::chrono::steady_clock::now();
    RunArtifacts art;
    art.params = theta_rec;
    const ParamVector& ref = theta_rec;

    const std::size_t n = forget.size();
    const int batch = std::min<int>(cfg.curriculum.batch, static_cast<int>(n));
    const long long spe = static_cast<long long>((n + static_cast<std::size_t>(batch) - 1) /
                                                 static_cast<std::size_t>(batch));
    const long long total_steps =
        cfg.total_steps > 0 ? cfg.total_steps : static_cast<long long>(cfg.epochs) * spe;
    if (total_steps == 0) {
        art.wall_seconds = 0.0;
        return art; // zero-length run: theta_app = theta_rec
    }
    const int max_epochs = static_cast<int>((total_steps + spe - 1) / spe);

    // Frozen reference distributions, cached once per sample.
    std::vector<std::vector<double>> ref_lp(n);
    parallel_chunks(n, kEvalChunk, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) ref_lp[i] = forward(ref, forget[i].prefix, hp).log_probs;
    });

    // Divergence baseline: batch-mean normal loss at theta_rec.
    double baseline_normal = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        baseline_normal += -ref_lp[i][static_cast<std::size_t>(forget[i].successor) - 1];
    baseline_normal /= static_cast<double>(n);

    const double floor_logp =
        cfg.unlearn_floor ? std::log(1.0 / (10.0 * static_cast<double>(theta_rec.item_count)))
                          : -std::numeric_limits<double>::infinity();

    AdamState adam = make_adam(art.params);
    Rng rng(derive_seed(cfg.seed, fnv1a64("unlearn-run")));
    const bool use_curriculum = cfg.mode != RunMode::kRandomOrder;
    const bool use_pareto = cfg.mode == RunMode::kCau || cfg.mode == RunMode::kRandomOrder;

    long long global = 0;
    int divergent_epochs = 0;
    for (int epoch = 0; epoch < max_epochs && global < total_steps; ++epoch) {
        std::vector<DifficultyScore> scores;
        if (use_curriculum) {
            scores = score_all(art.params, ref, forget, cfg.curriculum.metric_kind, hp);
            art.difficulty_trace.push_back(scores);
        }

        double ep_lu = 0.0, ep_ln = 0.0, ep_lk = 0.0;
        std::size_t ep_samples = 0;

        auto process = [&](const std::vector<std::size_t>& idx) {
            std::vector<UnlearnSample> aux;
            if (cfg.auxiliary_retain && cfg.auxiliary_batch > 0) {
                aux = auxiliary_retain_batch(
                    *retain, forget, cfg.auxiliary_batch,
                    derive_seed(cfg.seed, fnv1a64("aux-step") ^ static_cast<std::uint64_t>(global)));
            }
            const BatchGrads bg =
                batch_gradients(art.params, ref, forget, idx, ref_lp, aux, hp, floor_logp);
            std::array<double, 3> alpha{};
            switch (cfg.mode) {
            case RunMode::kEqualWeights:
                alpha = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
                break;
            case RunMode::kGaOnly:
                alpha = {1.0, 0.0, 0.0};
                break;
            default:
                alpha = pareto_alpha(bg.g, cfg.pareto_tol, cfg.pareto_max_iter,
                                     cfg.normalize_gradients);
                break;
            }
            std::vector<double> weights(alpha.begin(), alpha.end());
            if (cfg.normalize_gradients && use_pareto) {
                // weights were solved on unit-norm gradients
                const GramMatrix M = gram(bg.g);
                for (int i = 0; i < 3; ++i) {
                    const double norm = std::sqrt(std::max(0.0, M[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)]));
                    if (norm > 1e-10) weights[static_cast<std::size_t>(i)] /= norm;
                }
            }
            const std::vector<double> d = combine(bg.g, weights);
            adam_step(art.params, adam, d, hp);
            art.alpha_trace.push_back({epoch, static_cast<int>(global), alpha});
            ep_lu += bg.losses.unlearn * static_cast<double>(idx.size());
            ep_ln += bg.losses.normal * static_cast<double>(idx.size());
            ep_lk += bg.losses.kl * static_cast<double>(idx.size());
            ep_samples += idx.size();
            ++global;
        };

        if (use_curriculum && cfg.curriculum.strategy == CurriculumStrategy::kSoft) {
            const int R = cfg.curriculum.refresh_interval;
            if (cfg.soft_with_replacement) {
                // Independent per-step draws over the full forget set.
                for (long long s = 0; s < spe && global < total_steps; ++s) {
                    if (s > 0 && s % R == 0)
                        scores = score_all(art.params, ref, forget, cfg.curriculum.metric_kind, hp);
                    const double t = static_cast<double>(global + 1) / static_cast<double>(total_steps);
                    process(soft_draw_batch(scores, t, cfg.curriculum.temperature, batch, rng));
                }
            } else {
                // Epoch-wide coverage: every sample drawn exactly once.
                std::vector<std::size_t> remaining(n);
                std::iota(remaining.begin(), remaining.end(), std::size_t{0});
                long long s = 0;
                while (!remaining.empty() && global < total_steps) {
                    if (s > 0 && s % R == 0)
                        scores = score_all(art.params, ref, forget, cfg.curriculum.metric_kind, hp);
                    const double t = static_cast<double>(global + 1) / static_cast<double>(total_steps);
                    const int b = std::min<int>(batch, static_cast<int>(remaining.size()));
                    const std::vector<std::size_t> drawn =
                        soft_draw_batch(subset_scores(scores, remaining), t,
                                        cfg.curriculum.temperature, b, rng);
                    process(drawn);
                    std::unordered_set<std::size_t> taken(drawn.begin(), drawn.end());
                    std::vector<std::size_t> rest;
                    rest.reserve(remaining.size() - drawn.size());
                    for (std::size_t i : remaining)
                        if (taken.find(i) == taken.end()) rest.push_back(i);
                    remaining = std::move(rest);
                    ++s;
                }
            }
        } else {
            std::vector<std::vector<std::size_t>> batches;
            if (use_curriculum) {
                batches = hard_schedule(scores, batch);
            } else {
                std::vector<std::size_t> order(n);
                std::iota(order.begin(), order.end(), std::size_t{0});
                rng.shuffle(order);
                batches = chunk_indices(order, batch);
            }
            for (const auto& idx : batches) {
                if (global >= total_steps) break;
                process(idx);
            }
        }

        const double mean_normal = ep_ln / static_cast<double>(ep_samples);
        art.loss_trace.push_back({ep_lu / static_cast<double>(ep_samples), mean_normal,
                                  ep_lk / static_cast<double>(ep_samples)});
        art.epochs_run = epoch + 1;
        log_debug("unlearn epoch " + std::to_string(epoch + 1) + " L_unlearn " +
                  std::to_string(art.loss_trace.back().unlearn) + " L_normal " +
                  std::to_string(mean_normal) + " L_kl " +
                  std::to_string(art.loss_trace.back().kl));

        if (cfg.mode != RunMode::kGaOnly) {
            if (mean_normal > 5.0 * baseline_normal && baseline_normal > 0.0)
                ++divergent_epochs;
            else
                divergent_epochs = 0;
            if (divergent_epochs >= 3) {
                throw DivergenceError(
                    "retention loss diverged: batch-mean normal loss " +
                    std::to_string(mean_normal) + " exceeded 5x its initial value " +
                    std::to_string(baseline_normal) + " for 3 consecutive epochs (epoch " +
                    std::to_string(epoch + 1) + ")");
            }
        }
    }

    art.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return art;
}

} // namespace

const char* run_mode_name(RunMode m) {
    switch (m) {
    case RunMode::kCau:
        return "cau";
    case RunMode::kEqualWeights:
        return "equal_weights";
    case RunMode::kRandomOrder:
        return "random_order";
    case RunMode::kGaOnly:
        return "ga_only";
    case RunMode::kRetrain:
        return "retrain";
    case RunMode::kOriginal:
        return "original";
    }
    return "unknown";
}

RunMode run_mode_from_name(const std::string& name) {
    if (name == "cau") return RunMode::kCau;
    if (name == "equal_weights") return RunMode::kEqualWeights;
    if (name == "random_order") return RunMode::kRandomOrder;
    if (name == "ga_only") return RunMode::kGaOnly;
    if (name == "retrain") return RunMode::kRetrain;
    if (name == "original") return RunMode::kOriginal;
    throw UsageError("unknown run mode \"" + name + "\"");
}

RunArtifacts unlearn_cau(const ParamVector& theta_rec, const std::vector<UnlearnSample>& forget,
                         const UnlearnRunConfig& cfg, const HyperParams& hp,
                         const Corpus* retain) {
    if (cfg.mode != RunMode::kCau) throw UsageError("unlearn_cau requires mode cau");
    return run_unlearn(theta_rec, forget, cfg, hp, retain);
}

RunArtifacts unlearn_variant(const ParamVector& theta_rec,
                             const std::vector<UnlearnSample>& forget,
                             const UnlearnRunConfig& cfg, const HyperParams& hp,
                             const Corpus* retain) {
    if (cfg.mode != RunMode::kEqualWeights && cfg.mode != RunMode::kRandomOrder &&
        cfg.mode != RunMode::kGaOnly) {
        throw UsageError("unlearn_variant requires mode equal_weights, random_order or ga_only");
    }
    return run_unlearn(theta_rec, forget, cfg, hp, retain);
}

Corpus splice_forget(const Corpus& train, const std::vector<UnlearnSample>& forget) {
    std::unordered_map<long long, std::vector<int>> removals;
    for (const auto& s : forget) removals[s.session_id].push_back(s.position_t);

    Corpus out;
    out.item_count = train.item_count;
    out.provenance = train.provenance;
    out.sessions.reserve(train.sessions.size());
    std::size_t matched = 0;
    for (const auto& session : train.sessions) {
        const auto it = removals.find(session.id);
        if (it == removals.end()) {
            out.sessions.push_back(session);
            continue;
        }
        ++matched;
        std::vector<int> cut = it->second; // 1-based positions to splice out
        std::sort(cut.begin(), cut.end());
        Session s;
        s.id = session.id;
        s.items.reserve(session.items.size() - cut.size());
        std::size_t ci = 0;
        for (std::size_t i = 0; i < session.items.size(); ++i) {
            const int pos = static_cast<int>(i) + 1;
            if (ci < cut.size() && cut[ci] == pos) {
                if (pos > static_cast<int>(session.items.size()))
                    throw UsageError("forget position outside its session");
                ++ci;
                continue;
            }
            s.items.push_back(session.items[i]);
        }
        if (ci != cut.size()) throw UsageError("forget position outside its session");
        if (s.items.size() >= 2) out.sessions.push_back(std::move(s));
    }
    if (matched != removals.size())
        throw UsageError("forget set references sessions missing from the corpus");
    return out;
}

ParamVector retrain(const Corpus& train, const Corpus& valid,
                    const std::vector<UnlearnSample>& forget, const HyperParams& hp,
                    int epochs) {
    const Corpus spliced = splice_forget(train, forget);
    const ParamVector init = init_params(hp, train.item_count);
    return cau::train(init, spliced, valid, hp, epochs);
}

std::vector<UnlearnSample> auxiliary_retain_batch(const Corpus& train,
                                                  const std::vector<UnlearnSample>& forget,
                                                  int size, std::uint64_t seed) {
    if (size <= 0) return {};
    std::unordered_map<long long, std::unordered_set<int>> forbidden;
    for (const auto& s : forget) forbidden[s.session_id].insert(s.position_t);

    struct Pos {
        std::size_t session;
        int t; // 1-based predicted position; prefix = items before it
    };
    std::vector<Pos> eligible;
    for (std::size_t i = 0; i < train.sessions.size(); ++i) {
        const Session& s = train.sessions[i];
        const auto fit = forbidden.find(s.id);
        for (int t = 2; t <= static_cast<int>(s.items.size()); ++t) {
            if (fit != forbidden.end() && fit->second.count(t)) continue;
            eligible.push_back({i, t});
        }
    }
    Rng rng(derive_seed(seed, fnv1a64("aux-retain")));
    rng.shuffle(eligible);
    const std::size_t take = std::min(eligible.size(), static_cast<std::size_t>(size));
    std::vector<UnlearnSample> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        const Session& s = train.sessions[eligible[i].session];
        UnlearnSample u;
        u.session_id = s.id;
        u.position_t = eligible[i].t;
        u.prefix.assign(s.items.begin(), s.items.begin() + (eligible[i].t - 1));
        u.target = s.items[static_cast<std::size_t>(eligible[i].t) - 1];
        u.successor = u.target; // the retained "next" item fills the successor slot
        out.push_back(std::move(u));
    }
    return out;
}

void save_alpha_trace(const std::vector<AlphaRecord>& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "epoch,step,alpha1,alpha2,alpha3\n";
    char buf[128];
    for (const auto& r : trace) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g\n", r.epoch, r.step, r.alpha[0],
                      r.alpha[1], r.alpha[2]);
        out << buf;
    }
    if (!out) throw Error("write failed: " + path);
}

} // namespace cau
