#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "cau/corpus.hpp"
#include "cau/curriculum.hpp"
#include "cau/errors.hpp"
#include "cau/model.hpp"
#include "cau/rng.hpp"
#include "temp_dir.hpp"

using namespace cau;

namespace {

HyperParams small_hp(std::uint64_t seed = 5) {
    HyperParams hp;
    hp.embed_dim = 8;
    hp.max_prefix_len = 10;
    hp.seed = seed;
    return hp;
}

UnlearnSample sample_of(std::vector<int> items, int t) {
    Session s{1, std::move(items)};
    return make_unlearn_sample(s, t);
}

std::vector<DifficultyScore> score_vec(const std::vector<double>& v) {
    std::vector<DifficultyScore> out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back({i, v[i], DifficultyKind::kEmbedding});
    return out;
}

std::vector<UnlearnSample> random_samples(Rng& rng, int n, int item_count) {
    std::vector<UnlearnSample> out;
    for (int i = 0; i < n; ++i) {
        std::vector<int> items;
        const int len = 4 + static_cast<int>(rng.below(4));
        for (int k = 0; k < len; ++k)
            items.push_back(1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(item_count))));
        Session s{i + 1, items};
        out.push_back(make_unlearn_sample(s, 2 + static_cast<int>(rng.below(
                                                 static_cast<std::uint64_t>(len - 2)))));
    }
    return out;
}

} // namespace

TEST_CASE("gradient difficulty is the negated cosine of unlearn vs retention") {
    const HyperParams hp = small_hp();
    const ParamVector p = init_params(hp, 15);
    const ParamVector ref = init_params(small_hp(42), 15);
    Rng rng(3);
    for (const auto& s : random_samples(rng, 6, 15)) {
        const auto gu = grad(p, LossKind::kUnlearn, {s}, hp);
        const auto gn = grad(p, LossKind::kNormal, {s}, hp);
        const auto gk = grad(p, LossKind::kKl, {s}, hp, &ref);
        double dot = 0.0, nu = 0.0, nr = 0.0;
        for (std::size_t i = 0; i < gu.size(); ++i) {
            const double r = gn[i] + gk[i];
            dot += gu[i] * r;
            nu += gu[i] * gu[i];
            nr += r * r;
        }
        const double want = -dot / (std::sqrt(nu) * std::sqrt(nr));
        const double got = dif_gradient(p, ref, s, hp);
        CHECK(got == doctest::Approx(want).epsilon(1e-9));
        CHECK(got >= -1.0 - 1e-12);
        CHECK(got <= 1.0 + 1e-12);
    }
}

TEST_CASE("gradient difficulty of a gradient-free model is zero") {
    const HyperParams hp = small_hp();
    ParamVector p;
    p.item_count = 15;
    p.d = 8;
    p.flat.assign(p.flat_len(), 0.0); // frozen recurrence: every gradient vanishes
    const UnlearnSample s = sample_of({1, 2, 3, 4}, 2);
    CHECK(dif_gradient(p, p, s, hp) == 0.0);
}

TEST_CASE("embedding difficulty is the state-target dot product") {
    const HyperParams hp = small_hp();
    const ParamVector p = init_params(hp, 15);
    Rng rng(4);
    for (const auto& s : random_samples(rng, 6, 15)) {
        const Forward f = forward(p, s.prefix, hp);
        double want = 0.0;
        const double* e = p.embed(s.target);
        for (int i = 0; i < p.d; ++i) want += f.state[i] * e[i];
        CHECK(dif_embedding(p, s, hp) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("score_all indexes every sample with the configured metric") {
    const HyperParams hp = small_hp();
    const ParamVector p = init_params(hp, 15);
    const ParamVector ref = init_params(small_hp(42), 15);
    Rng rng(5);
    const auto forget = random_samples(rng, 9, 15);

    const auto se = score_all(p, ref, forget, DifficultyKind::kEmbedding, hp);
    REQUIRE(se.size() == forget.size());
    for (std::size_t i = 0; i < se.size(); ++i) {
        CHECK(se[i].sample_ref == i);
        CHECK(se[i].kind == DifficultyKind::kEmbedding);
        CHECK(se[i].score == doctest::Approx(dif_embedding(p, forget[i], hp)).epsilon(1e-12));
    }
    const auto sg = score_all(p, ref, forget, DifficultyKind::kGradient, hp);
    for (std::size_t i = 0; i < sg.size(); ++i)
        CHECK(sg[i].score ==
              doctest::Approx(dif_gradient(p, ref, forget[i], hp)).epsilon(1e-9));
}

TEST_CASE("hard schedule sorts ascending with stable ties and chunks in order") {
    const auto scores = score_vec({0.5, -1.0, 3.0, 0.0, 2.0, -1.0});
    const auto sched = hard_schedule(scores, 2);
    REQUIRE(sched.size() == 3);
    CHECK(sched[0] == std::vector<std::size_t>{1, 5}); // tied -1s keep index order
    CHECK(sched[1] == std::vector<std::size_t>{3, 0});
    CHECK(sched[2] == std::vector<std::size_t>{4, 2});

    SUBCASE("batches partition the samples") {
        std::set<std::size_t> seen;
        for (const auto& b : sched)
            for (std::size_t i : b) CHECK(seen.insert(i).second);
        CHECK(seen.size() == scores.size());
    }
    SUBCASE("batch means never decrease") {
        double prev = -1e300;
        for (const auto& b : sched) {
            double mean = 0.0;
            for (std::size_t i : b) mean += scores[i].score / static_cast<double>(b.size());
            CHECK(mean >= prev);
            prev = mean;
        }
    }
    SUBCASE("oversized batch is one chunk") {
        CHECK(hard_schedule(scores, 100).size() == 1);
    }
    SUBCASE("validation") {
        CHECK_THROWS_AS(hard_schedule(scores, 0), UsageError);
        CHECK_THROWS_AS(hard_schedule({}, 2), UsageError);
    }
}

TEST_CASE("halfway through training the soft distribution is exactly uniform") {
    const auto scores = score_vec({-3.0, 0.25, 11.0, 2.0, -0.5});
    const auto probs = soft_probabilities(scores, 0.5, 2.0);
    for (double p : probs) CHECK(std::abs(p - 0.2) < 1e-12);
}

TEST_CASE("the two-sample soft split at the start of training") {
    // easy = -1, hard = +1, tau = 2, t = 0: p_easy = 1 / (1 + e^-4)
    const auto scores = score_vec({-1.0, 1.0});
    const auto probs = soft_probabilities(scores, 0.0, 2.0);
    CHECK(probs[0] == doctest::Approx(0.9820137900379085).epsilon(1e-10));
    CHECK(std::abs(probs[0] - 0.98201) < 1e-5 + 5e-6);

    SUBCASE("the end of training mirrors it") {
        const auto late = soft_probabilities(scores, 1.0, 2.0);
        CHECK(late[1] == doctest::Approx(probs[0]).epsilon(1e-12));
    }
}

TEST_CASE("soft probabilities normalize, shift-invariantly, monotone in score") {
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> v(6);
        for (double& x : v) x = rng.uniform(-5.0, 5.0);
        const double t = rng.uniform();
        const auto probs = soft_probabilities(score_vec(v), t, 2.0);
        double sum = 0.0;
        for (double p : probs) {
            CHECK(p >= 0.0);
            sum += p;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

        std::vector<double> shifted = v;
        for (double& x : shifted) x += 100.0;
        const auto probs2 = soft_probabilities(score_vec(shifted), t, 2.0);
        for (std::size_t i = 0; i < probs.size(); ++i)
            CHECK(probs[i] == doctest::Approx(probs2[i]).epsilon(1e-9));
    }

    const auto early = soft_probabilities(score_vec({0.0, 1.0}), 0.1, 3.0);
    CHECK(early[0] > early[1]); // easy first
    const auto late = soft_probabilities(score_vec({0.0, 1.0}), 0.9, 3.0);
    CHECK(late[1] > late[0]); // hard last

    CHECK_THROWS_AS(soft_probabilities(score_vec({1.0}), -0.1, 2.0), UsageError);
    CHECK_THROWS_AS(soft_probabilities(score_vec({1.0}), 1.1, 2.0), UsageError);
    CHECK_THROWS_AS(soft_probabilities(score_vec({1.0}), 0.5, 0.0), UsageError);
    CHECK_THROWS_AS(soft_probabilities({}, 0.5, 2.0), UsageError);
}

TEST_CASE("soft draws are unique, complete, and seeded") {
    const auto scores = score_vec({-2.0, 0.0, 1.0, 3.0, -1.0});
    Rng rng(11);
    const auto batch = soft_draw_batch(scores, 0.3, 2.0, 3, rng);
    CHECK(batch.size() == 3);
    CHECK(std::set<std::size_t>(batch.begin(), batch.end()).size() == 3);

    Rng rng2(11);
    const auto again = soft_draw_batch(scores, 0.3, 2.0, 3, rng2);
    CHECK(batch == again);

    Rng rng3(11);
    const auto all = soft_draw_batch(scores, 0.3, 2.0, 5, rng3);
    CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == 5);

    Rng rng4(11);
    CHECK_THROWS_AS(soft_draw_batch(scores, 0.3, 2.0, 6, rng4), UsageError);
}

TEST_CASE("single-draw frequencies follow the soft distribution") {
    const auto scores = score_vec({-1.5, -0.5, 0.0, 1.0, 2.0});
    const double t = 0.2, tau = 1.5;
    const auto probs = soft_probabilities(scores, t, tau);
    const int n_draws = 10000;
    std::vector<int> hits(scores.size(), 0);
    Rng rng(17);
    for (int i = 0; i < n_draws; ++i) ++hits[soft_draw_batch(scores, t, tau, 1, rng)[0]];
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double freq = hits[i] / static_cast<double>(n_draws);
        const double sigma = std::sqrt(probs[i] * (1.0 - probs[i]) / n_draws);
        CHECK(std::abs(freq - probs[i]) <= 3.0 * sigma + 1e-12);
    }
}

TEST_CASE("pair-draw inclusion frequencies match sequential sampling odds") {
    // Drawing k by top exponential keys is sequential proportional sampling
    // without replacement, so for k=2: pi_x = p_x + sum_a p_a p_x / (1-p_a).
    const auto scores = score_vec({-1.0, 0.0, 0.5, 2.0});
    const double t = 0.7, tau = 2.0;
    const auto p = soft_probabilities(scores, t, tau);
    std::vector<double> pi(p.size(), 0.0);
    for (std::size_t x = 0; x < p.size(); ++x) {
        pi[x] = p[x];
        for (std::size_t a = 0; a < p.size(); ++a)
            if (a != x) pi[x] += p[a] * p[x] / (1.0 - p[a]);
    }
    const int n_draws = 8000;
    std::vector<int> hits(p.size(), 0);
    Rng rng(23);
    for (int i = 0; i < n_draws; ++i)
        for (std::size_t x : soft_draw_batch(scores, t, tau, 2, rng)) ++hits[x];
    for (std::size_t x = 0; x < p.size(); ++x) {
        const double freq = hits[x] / static_cast<double>(n_draws);
        const double sigma = std::sqrt(pi[x] * (1.0 - pi[x]) / n_draws);
        CHECK(std::abs(freq - pi[x]) <= 3.5 * sigma + 1e-12);
    }
}

TEST_CASE("score dumps append readable rows") {
    TempDir tmp("scores");
    const std::string path = tmp.file("scores.csv");
    std::vector<UnlearnSample> forget{sample_of({1, 2, 3, 4}, 2), sample_of({4, 3, 2, 1}, 3)};
    forget[0].session_id = 10;
    forget[1].session_id = 11;
    const std::vector<DifficultyScore> scores{{0, 0.5, DifficultyKind::kEmbedding},
                                              {1, -1.25, DifficultyKind::kGradient}};
    append_score_dump(scores, forget, 0, path, true);
    append_score_dump(scores, forget, 1, path, false);
    const std::string text = read_file(path);
    CHECK(text.find("sample_id,kind,score,epoch") != std::string::npos);
    CHECK(text.find("10@2,embedding,0.5,0") != std::string::npos);
    CHECK(text.find("11@3,gradient,-1.25,1") != std::string::npos);
    CHECK(text.find("10@2,embedding,0.5,1") != std::string::npos);
}
