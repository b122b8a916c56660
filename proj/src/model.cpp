#include "cau/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "cau/errors.hpp"
#include "cau/eval.hpp"
#include "cau/hash.hpp"
#include "cau/log.hpp"
#include "cau/parallel.hpp"
#include "cau/rng.hpp"

namespace cau {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y += M v (row-major d x d)
inline void matvec_acc(const double* M, const double* v, int d, double* y) {
    for (int i = 0; i < d; ++i) {
        const double* row = M + static_cast<std::size_t>(i) * d;
        double acc = 0.0;
        for (int j = 0; j < d; ++j) acc += row[j] * v[j];
        y[i] += acc;
    }
}

// y += M^T v
inline void matvec_t_acc(const double* M, const double* v, int d, double* y) {
    for (int i = 0; i < d; ++i) {
        const double* row = M + static_cast<std::size_t>(i) * d;
        const double vi = v[i];
        for (int j = 0; j < d; ++j) y[j] += row[j] * vi;
    }
}

// G += a b^T
inline void outer_acc(const double* a, const double* b, int d, double* G) {
    for (int i = 0; i < d; ++i) {
        double* row = G + static_cast<std::size_t>(i) * d;
        const double ai = a[i];
        for (int j = 0; j < d; ++j) row[j] += ai * b[j];
    }
}

struct Window {
    const int* items;
    std::size_t len;
};

// Left-truncate to the last L items.
inline Window truncated(const std::vector<int>& prefix, int L) {
    const std::size_t keep = std::min(prefix.size(), static_cast<std::size_t>(L));
    return {prefix.data() + (prefix.size() - keep), keep};
}

struct Step {
    std::vector<double> z, r, c, rh; // gate outputs; rh = r .* h_prev
};

// Activations recorded by one forward pass; enough to run any number of
// backward passes without recomputation.
struct Trace {
    std::vector<int> items;             // consumed (already truncated) prefix
    std::vector<std::vector<double>> h; // h[0..T], h[0] = 0
    std::vector<Step> steps;            // steps[t] produced h[t+1]
};

void run_forward(const ParamVector& p, const int* items, std::size_t len, Trace& tr) {
    const int d = p.d;
    tr.items.assign(items, items + len);
    tr.h.assign(len + 1, std::vector<double>(static_cast<std::size_t>(d), 0.0));
    tr.steps.assign(len, Step{});
    const double* Wz = p.mat(0);
    const double* Wr = p.mat(1);
    const double* Wh = p.mat(2);
    const double* Uz = p.mat(3);
    const double* Ur = p.mat(4);
    const double* Uh = p.mat(5);
    const double* bz = p.bias(0);
    const double* br = p.bias(1);
    const double* bh = p.bias(2);
    std::vector<double> az(static_cast<std::size_t>(d)), ar(az.size()), ah(az.size());
    for (std::size_t t = 0; t < len; ++t) {
        const double* x = p.embed(items[t]);
        const double* hprev = tr.h[t].data();
        Step& st = tr.steps[t];
        st.z.resize(az.size());
        st.r.resize(az.size());
        st.c.resize(az.size());
        st.rh.resize(az.size());
        az.assign(bz, bz + d);
        ar.assign(br, br + d);
        matvec_acc(Wz, x, d, az.data());
        matvec_acc(Uz, hprev, d, az.data());
        matvec_acc(Wr, x, d, ar.data());
        matvec_acc(Ur, hprev, d, ar.data());
        for (int i = 0; i < d; ++i) {
            st.z[static_cast<std::size_t>(i)] = sigmoid(az[static_cast<std::size_t>(i)]);
            st.r[static_cast<std::size_t>(i)] = sigmoid(ar[static_cast<std::size_t>(i)]);
            st.rh[static_cast<std::size_t>(i)] = st.r[static_cast<std::size_t>(i)] * hprev[i];
        }
        ah.assign(bh, bh + d);
        matvec_acc(Wh, x, d, ah.data());
        matvec_acc(Uh, st.rh.data(), d, ah.data());
        std::vector<double>& hn = tr.h[t + 1];
        for (int i = 0; i < d; ++i) {
            st.c[static_cast<std::size_t>(i)] = std::tanh(ah[static_cast<std::size_t>(i)]);
            hn[static_cast<std::size_t>(i)] =
                (1.0 - st.z[static_cast<std::size_t>(i)]) * st.c[static_cast<std::size_t>(i)] +
                st.z[static_cast<std::size_t>(i)] * hprev[i];
        }
    }
}

// State-only pass for scoring paths that never backpropagate.
void run_state(const ParamVector& p, const int* items, std::size_t len, std::vector<double>& h) {
    const int d = p.d;
    h.assign(static_cast<std::size_t>(d), 0.0);
    const double* Wz = p.mat(0);
    const double* Wr = p.mat(1);
    const double* Wh = p.mat(2);
    const double* Uz = p.mat(3);
    const double* Ur = p.mat(4);
    const double* Uh = p.mat(5);
    const double* bz = p.bias(0);
    const double* br = p.bias(1);
    const double* bh = p.bias(2);
    std::vector<double> az(h.size()), ar(h.size()), ah(h.size()), rh(h.size());
    for (std::size_t t = 0; t < len; ++t) {
        const double* x = p.embed(items[t]);
        az.assign(bz, bz + d);
        ar.assign(br, br + d);
        matvec_acc(Wz, x, d, az.data());
        matvec_acc(Uz, h.data(), d, az.data());
        matvec_acc(Wr, x, d, ar.data());
        matvec_acc(Ur, h.data(), d, ar.data());
        for (int i = 0; i < d; ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            az[k] = sigmoid(az[k]);
            ar[k] = sigmoid(ar[k]);
            rh[k] = ar[k] * h[k];
        }
        ah.assign(bh, bh + d);
        matvec_acc(Wh, x, d, ah.data());
        matvec_acc(Uh, rh.data(), d, ah.data());
        for (int i = 0; i < d; ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            h[k] = (1.0 - az[k]) * std::tanh(ah[k]) + az[k] * h[k];
        }
    }
}

void scores_from_state(const ParamVector& p, const double* h, std::vector<double>& logits,
                       std::vector<double>& log_probs) {
    const int V = p.item_count;
    const int d = p.d;
    logits.resize(static_cast<std::size_t>(V));
    log_probs.resize(static_cast<std::size_t>(V));
    for (int v = 1; v <= V; ++v) {
        const double* e = p.embed(v);
        double acc = 0.0;
        for (int j = 0; j < d; ++j) acc += e[j] * h[j];
        logits[static_cast<std::size_t>(v) - 1] = acc;
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (double l : logits) mx = std::max(mx, l);
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t i = 0; i < logits.size(); ++i) log_probs[i] = logits[i] - lse;
}

// Backpropagate given dL/dlogits injected at selected states: dlogits_at[s]
// (s in 1..T) is the gradient wrt the logits scored from h[s], or empty.
// Adds the parameter gradient to g (same flat layout as p).
void backward(const ParamVector& p, const Trace& tr,
              const std::vector<std::vector<double>>& dlogits_at, std::vector<double>& g) {
    const int d = p.d;
    const int V = p.item_count;
    const std::size_t T = tr.items.size();
    auto gview = [&](const double* q) { return g.data() + (q - p.flat.data()); };
    double* gWz = gview(p.mat(0));
    double* gWr = gview(p.mat(1));
    double* gWh = gview(p.mat(2));
    double* gUz = gview(p.mat(3));
    double* gUr = gview(p.mat(4));
    double* gUh = gview(p.mat(5));
    double* gbz = gview(p.bias(0));
    double* gbr = gview(p.bias(1));
    double* gbh = gview(p.bias(2));

    const std::size_t dd = static_cast<std::size_t>(d);
    std::vector<double> dh(dd, 0.0), dhp(dd), dz(dd), dc(dd), dah(dd), daz(dd), dar(dd),
        tvec(dd), dr(dd);
    for (std::size_t s = T; s >= 1; --s) {
        if (s < dlogits_at.size() && !dlogits_at[s].empty()) {
            const std::vector<double>& dl = dlogits_at[s];
            const double* h = tr.h[s].data();
            for (int v = 1; v <= V; ++v) {
                const double coef = dl[static_cast<std::size_t>(v) - 1];
                if (coef == 0.0) continue;
                const double* e = p.embed(v);
                double* ge = g.data() + static_cast<std::size_t>(v) * dd;
                for (int j = 0; j < d; ++j) {
                    dh[static_cast<std::size_t>(j)] += coef * e[j];
                    ge[j] += coef * h[j];
                }
            }
        }
        const Step& st = tr.steps[s - 1];
        const double* hprev = tr.h[s - 1].data();
        const double* x = p.embed(tr.items[s - 1]);
        for (std::size_t i = 0; i < dd; ++i) {
            dz[i] = dh[i] * (hprev[i] - st.c[i]);
            dc[i] = dh[i] * (1.0 - st.z[i]);
            dah[i] = dc[i] * (1.0 - st.c[i] * st.c[i]);
            daz[i] = dz[i] * st.z[i] * (1.0 - st.z[i]);
        }
        for (std::size_t i = 0; i < dd; ++i) gbh[i] += dah[i];
        outer_acc(dah.data(), x, d, gWh);
        outer_acc(dah.data(), st.rh.data(), d, gUh);
        std::fill(tvec.begin(), tvec.end(), 0.0);
        matvec_t_acc(p.mat(5), dah.data(), d, tvec.data());
        for (std::size_t i = 0; i < dd; ++i) {
            dr[i] = tvec[i] * hprev[i];
            dar[i] = dr[i] * st.r[i] * (1.0 - st.r[i]);
            gbz[i] += daz[i];
            gbr[i] += dar[i];
        }
        outer_acc(daz.data(), x, d, gWz);
        outer_acc(daz.data(), hprev, d, gUz);
        outer_acc(dar.data(), x, d, gWr);
        outer_acc(dar.data(), hprev, d, gUr);
        double* gx = g.data() + static_cast<std::size_t>(tr.items[s - 1]) * dd;
        matvec_t_acc(p.mat(0), daz.data(), d, gx);
        matvec_t_acc(p.mat(1), dar.data(), d, gx);
        matvec_t_acc(p.mat(2), dah.data(), d, gx);
        for (std::size_t i = 0; i < dd; ++i) dhp[i] = dh[i] * st.z[i] + tvec[i] * st.r[i];
        matvec_t_acc(p.mat(3), daz.data(), d, dhp.data());
        matvec_t_acc(p.mat(4), dar.data(), d, dhp.data());
        dh.swap(dhp);
    }
}

void check_params(const ParamVector& p) {
    if (p.flat.size() != p.flat_len()) throw UsageError("parameter vector has wrong length");
}

// dlogits of the three forget-phase losses given current log-probs.
void dlogits_unlearn(const std::vector<double>& lp, int target, std::vector<double>& dl) {
    dl.resize(lp.size());
    for (std::size_t i = 0; i < lp.size(); ++i) dl[i] = -std::exp(lp[i]);
    dl[static_cast<std::size_t>(target) - 1] += 1.0;
}

void dlogits_normal(const std::vector<double>& lp, int successor, std::vector<double>& dl) {
    dl.resize(lp.size());
    for (std::size_t i = 0; i < lp.size(); ++i) dl[i] = std::exp(lp[i]);
    dl[static_cast<std::size_t>(successor) - 1] -= 1.0;
}

void dlogits_kl(const std::vector<double>& lp, const std::vector<double>& ref_lp,
                std::vector<double>& dl) {
    dl.resize(lp.size());
    for (std::size_t i = 0; i < lp.size(); ++i) dl[i] = std::exp(lp[i]) - std::exp(ref_lp[i]);
}

// Deterministic parallel map-reduce over flat gradient accumulators: each
// fixed-width chunk gets its own buffer, reduced afterwards in chunk order.
template <typename PerItem>
std::vector<double> reduce_grads(std::size_t n, std::size_t flat, PerItem per_item) {
    const std::size_t chunks = chunk_count(n, kGradChunk);
    std::vector<std::vector<double>> partial(chunks);
    parallel_chunks(n, kGradChunk,
                    [&](std::size_t c, std::size_t b, std::size_t e) {
                        partial[c].assign(flat, 0.0);
                        for (std::size_t i = b; i < e; ++i) per_item(i, partial[c]);
                    });
    std::vector<double> g(flat, 0.0);
    for (const auto& part : partial)
        for (std::size_t k = 0; k < flat; ++k) g[k] += part[k];
    const double inv = 1.0 / static_cast<double>(n);
    for (double& x : g) x *= inv;
    return g;
}

} // namespace

ParamVector init_params(const HyperParams& hp, int item_count) {
    if (item_count < 1) throw UsageError("item_count must be >= 1");
    if (hp.embed_dim < 1) throw UsageError("embed_dim must be >= 1");
    if (hp.max_prefix_len < 1) throw UsageError("max_prefix_len must be >= 1");
    if (!(hp.learn_rate > 0.0)) throw UsageError("learn_rate must be > 0");
    ParamVector p;
    p.item_count = item_count;
    p.d = hp.embed_dim;
    p.flat.assign(p.flat_len(), 0.0);
    const double s = hp.init_scale > 0.0 ? hp.init_scale : 1.0 / std::sqrt(static_cast<double>(p.d));
    Rng rng(derive_seed(hp.seed, fnv1a64("init")));
    for (std::size_t k = static_cast<std::size_t>(p.d); k < p.flat.size(); ++k)
        p.flat[k] = rng.uniform(-s, s);
    return p;
}

Forward forward(const ParamVector& p, const std::vector<int>& prefix, const HyperParams& hp) {
    check_params(p);
    const Window w = truncated(prefix, hp.max_prefix_len);
    Forward out;
    run_state(p, w.items, w.len, out.state);
    scores_from_state(p, out.state.data(), out.logits, out.log_probs);
    return out;
}

double loss_rec(const ParamVector& p, const Session& session, const HyperParams& hp) {
    const std::size_t n = session.items.size();
    if (n < 2) throw UsageError("loss_rec needs session length >= 2");
    double total = 0.0;
    std::vector<int> prefix;
    for (std::size_t t = 1; t < n; ++t) {
        prefix.assign(session.items.begin(), session.items.begin() + static_cast<std::ptrdiff_t>(t));
        const Forward f = forward(p, prefix, hp);
        total += -f.log_probs[static_cast<std::size_t>(session.items[t]) - 1];
    }
    return total / static_cast<double>(n - 1);
}

double loss_unlearn(const ParamVector& p, const UnlearnSample& s, const HyperParams& hp) {
    const Forward f = forward(p, s.prefix, hp);
    return f.log_probs[static_cast<std::size_t>(s.target) - 1];
}

double loss_normal(const ParamVector& p, const UnlearnSample& s, const HyperParams& hp) {
    const Forward f = forward(p, s.prefix, hp);
    return -f.log_probs[static_cast<std::size_t>(s.successor) - 1];
}

double loss_kl(const ParamVector& p, const ParamVector& ref, const UnlearnSample& s,
               const HyperParams& hp) {
    if (ref.item_count != p.item_count || ref.d != p.d)
        throw UsageError("reference parameters have mismatched shape");
    const Forward cur = forward(p, s.prefix, hp);
    const Forward base = forward(ref, s.prefix, hp);
    double kl = 0.0;
    for (std::size_t i = 0; i < cur.log_probs.size(); ++i)
        kl += std::exp(base.log_probs[i]) * (base.log_probs[i] - cur.log_probs[i]);
    return kl;
}

std::vector<double> grad(const ParamVector& p, LossKind kind,
                         const std::vector<UnlearnSample>& batch, const HyperParams& hp,
                         const ParamVector* ref_params) {
    check_params(p);
    if (batch.empty()) throw UsageError("gradient of an empty batch");
    if (kind == LossKind::kRec) throw UsageError("rec gradients take sessions; use grad_rec");
    if (kind == LossKind::kKl && ref_params == nullptr)
        throw UsageError("kl gradient needs reference parameters");

    return reduce_grads(batch.size(), p.flat_len(), [&](std::size_t i, std::vector<double>& g) {
        const UnlearnSample& s = batch[i];
        const Window w = truncated(s.prefix, hp.max_prefix_len);
        Trace tr;
        run_forward(p, w.items, w.len, tr);
        std::vector<double> logits, lp, dl;
        scores_from_state(p, tr.h[w.len].data(), logits, lp);
        switch (kind) {
        case LossKind::kUnlearn:
            dlogits_unlearn(lp, s.target, dl);
            break;
        case LossKind::kNormal:
            dlogits_normal(lp, s.successor, dl);
            break;
        case LossKind::kKl: {
            const Forward base = forward(*ref_params, s.prefix, hp);
            dlogits_kl(lp, base.log_probs, dl);
            break;
        }
        case LossKind::kRec:
            break; // unreachable
        }
        std::vector<std::vector<double>> dlogits_at(w.len + 1);
        dlogits_at[w.len] = std::move(dl);
        backward(p, tr, dlogits_at, g);
    });
}

std::vector<double> grad_rec(const ParamVector& p, const std::vector<const Session*>& batch,
                             const HyperParams& hp) {
    check_params(p);
    if (batch.empty()) throw UsageError("gradient of an empty batch");
    for (const Session* s : batch)
        if (s->items.size() < 2) throw UsageError("loss_rec needs session length >= 2");
    const int L = hp.max_prefix_len;

    return reduce_grads(batch.size(), p.flat_len(), [&](std::size_t i, std::vector<double>& g) {
        const std::vector<int>& items = batch[i]->items;
        const std::size_t n = items.size();
        const double inv_pos = 1.0 / static_cast<double>(n - 1);
        Trace tr;
        std::vector<double> logits, lp;

        // Positions t=1..min(n-1, L) share one recurrence; position t scores
        // target items[t] from state h[t].
        const std::size_t shared = std::min(n - 1, static_cast<std::size_t>(L));
        run_forward(p, items.data(), shared, tr);
        std::vector<std::vector<double>> dlogits_at(shared + 1);
        for (std::size_t s = 1; s <= shared; ++s) {
            scores_from_state(p, tr.h[s].data(), logits, lp);
            std::vector<double> dl(lp.size());
            for (std::size_t v = 0; v < lp.size(); ++v) dl[v] = std::exp(lp[v]) * inv_pos;
            dl[static_cast<std::size_t>(items[s]) - 1] -= inv_pos;
            dlogits_at[s] = std::move(dl);
        }
        backward(p, tr, dlogits_at, g);

        // Longer prefixes truncate, so each gets its own window pass.
        for (std::size_t t = static_cast<std::size_t>(L) + 1; t <= n - 1; ++t) {
            run_forward(p, items.data() + (t - static_cast<std::size_t>(L)),
                        static_cast<std::size_t>(L), tr);
            scores_from_state(p, tr.h[static_cast<std::size_t>(L)].data(), logits, lp);
            std::vector<double> dl(lp.size());
            for (std::size_t v = 0; v < lp.size(); ++v) dl[v] = std::exp(lp[v]) * inv_pos;
            dl[static_cast<std::size_t>(items[t]) - 1] -= inv_pos;
            std::vector<std::vector<double>> one(static_cast<std::size_t>(L) + 1);
            one[static_cast<std::size_t>(L)] = std::move(dl);
            backward(p, tr, one, g);
        }
    });
}

UnlearnLossValues accumulate_unlearn_grads(const ParamVector& p, const UnlearnSample& s,
                                           const std::vector<double>& ref_log_probs,
                                           const HyperParams& hp, std::vector<double>& g_unlearn,
                                           std::vector<double>& g_normal,
                                           std::vector<double>& g_kl, double unlearn_floor_logp) {
    check_params(p);
    if (ref_log_probs.size() != static_cast<std::size_t>(p.item_count))
        throw UsageError("reference distribution has wrong length");

    const Window w = truncated(s.prefix, hp.max_prefix_len);
    Trace tr;
    run_forward(p, w.items, w.len, tr);
    std::vector<double> logits, lp;
    scores_from_state(p, tr.h[w.len].data(), logits, lp);

    UnlearnLossValues out;
    out.unlearn = lp[static_cast<std::size_t>(s.target) - 1];
    out.normal = -lp[static_cast<std::size_t>(s.successor) - 1];
    out.kl = 0.0;
    for (std::size_t i = 0; i < lp.size(); ++i)
        out.kl += std::exp(ref_log_probs[i]) * (ref_log_probs[i] - lp[i]);

    std::vector<std::vector<double>> dlogits_at(w.len + 1);
    if (out.unlearn >= unlearn_floor_logp) {
        dlogits_unlearn(lp, s.target, dlogits_at[w.len]);
        backward(p, tr, dlogits_at, g_unlearn);
    }
    dlogits_normal(lp, s.successor, dlogits_at[w.len]);
    backward(p, tr, dlogits_at, g_normal);
    dlogits_kl(lp, ref_log_probs, dlogits_at[w.len]);
    backward(p, tr, dlogits_at, g_kl);
    return out;
}

AdamState make_adam(const ParamVector& p) {
    AdamState st;
    st.m.assign(p.flat_len(), 0.0);
    st.v.assign(p.flat_len(), 0.0);
    return st;
}

void adam_step(ParamVector& p, AdamState& st, const std::vector<double>& g,
               const HyperParams& hp) {
    check_params(p);
    if (g.size() != p.flat.size() || st.m.size() != g.size() || st.v.size() != g.size())
        throw UsageError("adam shapes mismatch");
    st.step += 1;
    const double b1 = hp.adam_beta1;
    const double b2 = hp.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
    // Padding row (first d entries) never moves.
    for (std::size_t k = static_cast<std::size_t>(p.d); k < g.size(); ++k) {
        st.m[k] = b1 * st.m[k] + (1.0 - b1) * g[k];
        st.v[k] = b2 * st.v[k] + (1.0 - b2) * g[k] * g[k];
        const double mhat = st.m[k] / c1;
        const double vhat = st.v[k] / c2;
        p.flat[k] -= hp.learn_rate * mhat / (std::sqrt(vhat) + hp.adam_eps);
    }
}

ParamVector train(const ParamVector& init, const Corpus& train_corpus,
                  const Corpus& valid_corpus, const HyperParams& hp, int epochs) {
    check_params(init);
    ParamVector p = init;
    if (epochs <= 0) return p;

    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < train_corpus.sessions.size(); ++i)
        if (train_corpus.sessions[i].items.size() >= 2) order.push_back(i);
    if (order.empty()) throw UsageError("train corpus has no session of length >= 2");

    bool has_valid = false;
    for (const auto& s : valid_corpus.sessions)
        if (s.items.size() >= 2) has_valid = true;

    AdamState adam = make_adam(p);
    Rng rng(derive_seed(hp.seed, fnv1a64("train-shuffle")));
    ParamVector best = p;
    double best_recall = -1.0;
    const std::size_t bs = static_cast<std::size_t>(std::max(hp.train_batch, 1));

    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t b0 = 0; b0 < order.size(); b0 += bs) {
            const std::size_t b1 = std::min(b0 + bs, order.size());
            std::vector<const Session*> batch;
            batch.reserve(b1 - b0);
            for (std::size_t i = b0; i < b1; ++i)
                batch.push_back(&train_corpus.sessions[order[i]]);
            const std::vector<double> g = grad_rec(p, batch, hp);
            adam_step(p, adam, g, hp);
        }
        if (has_valid) {
            const double r = recall_at_k(p, valid_corpus, 10, hp);
            log_debug("train epoch " + std::to_string(epoch + 1) + " valid recall@10 " +
                      std::to_string(r));
            if (r > best_recall) {
                best_recall = r;
                best = p;
            }
        }
    }
    return has_valid ? best : p;
}

} // namespace cau
