#pragma once

#include <cstdint>

#include "cau/corpus.hpp"

namespace cau {

// Seeded first-order Markov browsing model: transition rows drawn from a
// Dirichlet whose concentration is 1/sharpness (higher sharpness = peakier
// bigrams), initial items from a Zipf popularity curve, session lengths
// uniform in [min_len, max_len].
struct SynthSpec {
    int n_sessions = 1000;
    int n_items = 100;
    double sharpness = 4.0;
    int min_len = 3;
    int max_len = 10;
    std::uint64_t seed = 0;
};

Corpus synth_corpus(const SynthSpec& spec);

} // namespace cau
