#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cau {

// Item ids are dense integers 1..|V|; 0 is the padding token and never
// appears inside a stored session.

struct Session {
    long long id = 0;
    std::vector<int> items; // chronological
};

struct Corpus {
    std::vector<Session> sessions;
    int item_count = 0;     // |V|
    std::string provenance; // source path or generator note
};

struct SplitCorpus {
    Corpus train;
    Corpus valid;
    Corpus test;
    std::uint64_t seed = 0;
};

// One unlearning request: forget the interaction at position_t (1-based)
// of session session_id. prefix = v_1..v_{t-1}, target = v_t,
// successor = v_{t+1}; eligibility demands 2 <= t <= len-1 so both the
// prefix and the successor exist.
struct UnlearnSample {
    long long session_id = 0;
    int position_t = 0;
    std::vector<int> prefix;
    int target = 0;
    int successor = 0;
};

enum class TsvFormat {
    kUserItemTime, // "user<TAB>item<TAB>timestamp", one interaction per row
    kSessionLines, // one session of space-separated item tokens per line
};

// Read raw interactions and densely re-index items from 1 (ascending
// original id). user-item-time rows are grouped per user and sorted by
// timestamp; session-lines keeps file order with line-number ids.
Corpus load_interactions(const std::string& path, TsvFormat format);

// 5-core style filtering iterated to fixpoint: drop items with fewer than
// min_count occurrences and sessions shorter than max(min_count, 2), then
// re-index items densely. Idempotent on its own output.
Corpus preprocess(const Corpus& raw, int min_count = 5);

// Seeded shuffle then 8:1:1 partition by session (floor-sized valid/test,
// remainder to train). Requires >= 10 sessions.
SplitCorpus split(const Corpus& corpus, std::uint64_t seed);

// Uniformly sample eligible (session, position) pairs until
// ceil(ratio * eligible) are selected, at most max_per_session per session.
// Output sorted by (session_id, position_t).
std::vector<UnlearnSample> select_unlearn(const Corpus& train, double ratio,
                                          std::uint64_t seed, int max_per_session = 1);

// Canonical corpus file: header "items=<|V|> sessions=<n>", then one
// "id<TAB>item item ..." line per session.
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

// Unlearn set file: one "session_id<TAB>position_t" line per sample.
void save_unlearn_set(const std::vector<UnlearnSample>& samples, const std::string& path);
std::vector<UnlearnSample> load_unlearn_set(const std::string& path, const Corpus& train);

// Rebuild a sample from its session; validates eligibility.
UnlearnSample make_unlearn_sample(const Session& session, int position_t);

// Total number of interactions (sum of session lengths).
std::size_t interaction_count(const Corpus& corpus);

} // namespace cau
