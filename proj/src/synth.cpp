#include "cau/synth.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "cau/errors.hpp"
#include "cau/hash.hpp"
#include "cau/rng.hpp"

namespace cau {

namespace {

// Index into a normalized weight row by inverse CDF walk.
int draw_categorical(const std::vector<double>& w, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        acc += w[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(w.size()) - 1; // rounding slack lands on the last item
}

} // namespace

Corpus synth_corpus(const SynthSpec& spec) {
    if (spec.n_items < 10) throw UsageError("synthetic corpus needs at least 10 items");
    if (spec.n_sessions < 100) throw UsageError("synthetic corpus needs at least 100 sessions");
    if (spec.min_len < 1 || spec.max_len < spec.min_len)
        throw UsageError("invalid session length range");
    if (!(spec.sharpness > 0.0)) throw UsageError("sharpness must be > 0");

    Rng rng(derive_seed(spec.seed, fnv1a64("synth")));
    const std::size_t V = static_cast<std::size_t>(spec.n_items);

    // Zipf initial popularity over items 1..V.
    std::vector<double> pop(V);
    double pop_sum = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
        pop[v] = 1.0 / static_cast<double>(v + 1);
        pop_sum += pop[v];
    }
    for (double& w : pop) w /= pop_sum;

    // Transition rows ~ Dirichlet(1/sharpness): small concentration puts
    // nearly all mass on a handful of successors.
    const double conc = 1.0 / spec.sharpness;
    std::vector<std::vector<double>> trans(V, std::vector<double>(V, 0.0));
    for (std::size_t i = 0; i < V; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < V; ++j) {
            trans[i][j] = rng.gamma(conc);
            sum += trans[i][j];
        }
        if (sum <= 0.0) {
            // pathological underflow: fall back to a point mass
            trans[i].assign(V, 0.0);
            trans[i][rng.below(V)] = 1.0;
        } else {
            for (double& w : trans[i]) w /= sum;
        }
    }

    Corpus corpus;
    corpus.item_count = spec.n_items;
    corpus.provenance = "synth(sessions=" + std::to_string(spec.n_sessions) +
                        ",items=" + std::to_string(spec.n_items) + ")";
    corpus.sessions.reserve(static_cast<std::size_t>(spec.n_sessions));
    for (int s = 0; s < spec.n_sessions; ++s) {
        const int len = rng.uniform_int(spec.min_len, spec.max_len);
        Session session;
        session.id = s + 1;
        session.items.reserve(static_cast<std::size_t>(len));
        int cur = draw_categorical(pop, rng);
        session.items.push_back(cur + 1);
        for (int i = 1; i < len; ++i) {
            cur = draw_categorical(trans[static_cast<std::size_t>(cur)], rng);
            session.items.push_back(cur + 1);
        }
        corpus.sessions.push_back(std::move(session));
    }
    return corpus;
}

} // namespace cau
