#include "cau/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "cau/errors.hpp"
#include "cau/hash.hpp"
#include "cau/rng.hpp"

namespace cau {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
    return std::string(s.substr(b, e - b));
}

long long parse_ll(std::string_view tok, const std::string& path, std::size_t line_no) {
    long long v = 0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || p != last) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": expected integer, got \"" +
                         std::string(tok) + "\"");
    }
    return v;
}

double parse_time(std::string_view tok, const std::string& path, std::size_t line_no) {
    double v = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || p != last) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": expected timestamp, got \"" +
                         std::string(tok) + "\"");
    }
    return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

// Map original item ids to dense 1..|V| by ascending original id. Ascending
// order makes the mapping the identity on an already-dense corpus, which is
// what keeps preprocess idempotent.
int reindex_items(std::vector<Session>& sessions,
                  std::vector<std::vector<long long>>& raw_items) {
    std::vector<long long> ids;
    for (const auto& items : raw_items)
        for (long long id : items) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::unordered_map<long long, int> dense;
    dense.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) dense[ids[i]] = static_cast<int>(i) + 1;
    for (std::size_t s = 0; s < sessions.size(); ++s) {
        sessions[s].items.clear();
        sessions[s].items.reserve(raw_items[s].size());
        for (long long id : raw_items[s]) sessions[s].items.push_back(dense[id]);
    }
    return static_cast<int>(ids.size());
}

} // namespace

Corpus load_interactions(const std::string& path, TsvFormat format) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);

    std::vector<Session> sessions;
    std::vector<std::vector<long long>> raw_items;

    if (format == TsvFormat::kUserItemTime) {
        struct Row {
            double ts;
            std::size_t order;
            long long item;
        };
        std::map<long long, std::vector<Row>> by_user; // ascending user id
        std::string line;
        std::size_t line_no = 0, order = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            const auto cols = split_tabs(line);
            if (cols.size() != 3) {
                throw ParseError(path + ":" + std::to_string(line_no) +
                                 ": expected user<TAB>item<TAB>timestamp");
            }
            const long long user = parse_ll(trim(cols[0]), path, line_no);
            const long long item = parse_ll(trim(cols[1]), path, line_no);
            if (item < 0) {
                throw ParseError(path + ":" + std::to_string(line_no) + ": negative item id");
            }
            const double ts = parse_time(trim(cols[2]), path, line_no);
            by_user[user].push_back({ts, order++, item});
        }
        for (auto& [user, rows] : by_user) {
            std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
                return a.ts != b.ts ? a.ts < b.ts : a.order < b.order;
            });
            Session s;
            s.id = user;
            sessions.push_back(std::move(s));
            std::vector<long long> items;
            items.reserve(rows.size());
            for (const Row& r : rows) items.push_back(r.item);
            raw_items.push_back(std::move(items));
        }
    } else {
        std::string line;
        std::size_t line_no = 0;
        long long next_id = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            std::vector<long long> items;
            for (const auto& tok : split_ws(line)) {
                const long long item = parse_ll(tok, path, line_no);
                if (item < 0) {
                    throw ParseError(path + ":" + std::to_string(line_no) + ": negative item id");
                }
                items.push_back(item);
            }
            Session s;
            s.id = ++next_id;
            sessions.push_back(std::move(s));
            raw_items.push_back(std::move(items));
        }
    }

    if (sessions.empty()) throw ParseError(path + ": empty corpus");

    Corpus corpus;
    corpus.sessions = std::move(sessions);
    corpus.item_count = reindex_items(corpus.sessions, raw_items);
    corpus.provenance = path;
    return corpus;
}

Corpus preprocess(const Corpus& raw, int min_count) {
    if (min_count < 1) throw UsageError("min_count must be >= 1");
    const std::size_t min_len = static_cast<std::size_t>(std::max(min_count, 2));

    // Work on original ids so re-indexing happens exactly once at the end.
    std::vector<Session> sessions = raw.sessions;
    bool changed = true;
    while (changed) {
        changed = false;
        std::unordered_map<int, std::size_t> item_count;
        for (const auto& s : sessions)
            for (int it : s.items) ++item_count[it];
        std::vector<Session> kept;
        kept.reserve(sessions.size());
        for (auto& s : sessions) {
            std::vector<int> items;
            items.reserve(s.items.size());
            for (int it : s.items) {
                if (item_count[it] >= static_cast<std::size_t>(min_count))
                    items.push_back(it);
                else
                    changed = true;
            }
            if (items.size() < min_len) { // dropping a session is a change
                changed = true;
                continue;
            }
            s.items = std::move(items);
            kept.push_back(std::move(s));
        }
        sessions = std::move(kept);
        if (sessions.empty()) throw Error("corpus exhausted: filtering removed every session");
    }

    std::vector<std::vector<long long>> raw_items(sessions.size());
    for (std::size_t i = 0; i < sessions.size(); ++i)
        raw_items[i].assign(sessions[i].items.begin(), sessions[i].items.end());

    Corpus out;
    out.sessions = std::move(sessions);
    out.item_count = reindex_items(out.sessions, raw_items);
    out.provenance = raw.provenance;
    return out;
}

SplitCorpus split(const Corpus& corpus, std::uint64_t seed) {
    const std::size_t n = corpus.sessions.size();
    if (n < 10) throw UsageError("split needs >= 10 sessions, got " + std::to_string(n));

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(seed, fnv1a64("split")));
    rng.shuffle(order);

    const std::size_t n_valid = n / 10;
    const std::size_t n_test = n / 10;
    const std::size_t n_train = n - n_valid - n_test;

    auto take = [&](std::size_t begin, std::size_t count) {
        Corpus part;
        part.item_count = corpus.item_count;
        part.provenance = corpus.provenance;
        part.sessions.reserve(count);
        for (std::size_t i = 0; i < count; ++i)
            part.sessions.push_back(corpus.sessions[order[begin + i]]);
        return part;
    };

    SplitCorpus out;
    out.train = take(0, n_train);
    out.valid = take(n_train, n_valid);
    out.test = take(n_train + n_valid, n_test);
    out.seed = seed;
    return out;
}

UnlearnSample make_unlearn_sample(const Session& session, int position_t) {
    const int len = static_cast<int>(session.items.size());
    if (position_t < 2 || position_t > len - 1) {
        throw UsageError("position " + std::to_string(position_t) + " ineligible in session " +
                         std::to_string(session.id) + " of length " + std::to_string(len));
    }
    UnlearnSample s;
    s.session_id = session.id;
    s.position_t = position_t;
    s.prefix.assign(session.items.begin(), session.items.begin() + (position_t - 1));
    s.target = session.items[static_cast<std::size_t>(position_t) - 1];
    s.successor = session.items[static_cast<std::size_t>(position_t)];
    return s;
}

std::vector<UnlearnSample> select_unlearn(const Corpus& train, double ratio, std::uint64_t seed,
                                          int max_per_session) {
    if (!(ratio > 0.0 && ratio <= 0.5)) throw UsageError("unlearn ratio must be in (0, 0.5]");
    if (max_per_session < 1) throw UsageError("max_per_session must be >= 1");

    struct Pos {
        std::size_t session;
        int t;
    };
    std::vector<Pos> eligible;
    for (std::size_t i = 0; i < train.sessions.size(); ++i) {
        const int len = static_cast<int>(train.sessions[i].items.size());
        for (int t = 2; t <= len - 1; ++t) eligible.push_back({i, t});
    }
    if (eligible.empty()) throw UsageError("no eligible unlearn positions in corpus");

    const std::size_t want = static_cast<std::size_t>(
        std::ceil(ratio * static_cast<double>(eligible.size()) - 1e-9));

    Rng rng(derive_seed(seed, fnv1a64("unlearn-select")));
    rng.shuffle(eligible);

    std::unordered_map<std::size_t, int> per_session;
    std::vector<UnlearnSample> out;
    out.reserve(want);
    for (const Pos& p : eligible) {
        if (out.size() >= want) break;
        int& used = per_session[p.session];
        if (used >= max_per_session) continue;
        ++used;
        out.push_back(make_unlearn_sample(train.sessions[p.session], p.t));
    }
    std::sort(out.begin(), out.end(), [](const UnlearnSample& a, const UnlearnSample& b) {
        return a.session_id != b.session_id ? a.session_id < b.session_id
                                            : a.position_t < b.position_t;
    });
    return out;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "items=" << corpus.item_count << " sessions=" << corpus.sessions.size() << "\n";
    for (const auto& s : corpus.sessions) {
        out << s.id << '\t';
        for (std::size_t i = 0; i < s.items.size(); ++i) {
            if (i) out << ' ';
            out << s.items[i];
        }
        out << '\n';
    }
    if (!out) throw Error("write failed: " + path);
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);

    std::string header;
    if (!std::getline(in, header)) throw ParseError(path + ": missing header");
    int items = 0;
    std::size_t n_sessions = 0;
    {
        const auto toks = split_ws(header);
        if (toks.size() != 2 || toks[0].rfind("items=", 0) != 0 ||
            toks[1].rfind("sessions=", 0) != 0) {
            throw ParseError(path + ":1: expected header \"items=<V> sessions=<n>\"");
        }
        items = static_cast<int>(parse_ll(std::string_view(toks[0]).substr(6), path, 1));
        n_sessions = static_cast<std::size_t>(
            parse_ll(std::string_view(toks[1]).substr(9), path, 1));
    }

    Corpus corpus;
    corpus.item_count = items;
    corpus.provenance = path;
    std::unordered_set<long long> seen_ids;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cols = split_tabs(line);
        if (cols.size() != 2) {
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": expected id<TAB>items");
        }
        Session s;
        s.id = parse_ll(trim(cols[0]), path, line_no);
        if (!seen_ids.insert(s.id).second) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": duplicate session id " +
                             std::to_string(s.id));
        }
        for (const auto& tok : split_ws(cols[1])) {
            const long long it = parse_ll(tok, path, line_no);
            if (it < 1 || it > items) {
                throw ParseError(path + ":" + std::to_string(line_no) + ": item " +
                                 std::to_string(it) + " outside 1.." + std::to_string(items));
            }
            s.items.push_back(static_cast<int>(it));
        }
        if (s.items.empty()) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": empty session");
        }
        corpus.sessions.push_back(std::move(s));
    }
    if (corpus.sessions.size() != n_sessions) {
        throw ParseError(path + ": header says " + std::to_string(n_sessions) +
                         " sessions, file has " + std::to_string(corpus.sessions.size()));
    }
    return corpus;
}

void save_unlearn_set(const std::vector<UnlearnSample>& samples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    for (const auto& s : samples) out << s.session_id << '\t' << s.position_t << '\n';
    if (!out) throw Error("write failed: " + path);
}

std::vector<UnlearnSample> load_unlearn_set(const std::string& path, const Corpus& train) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);

    std::unordered_map<long long, std::size_t> by_id;
    for (std::size_t i = 0; i < train.sessions.size(); ++i) by_id[train.sessions[i].id] = i;

    std::vector<UnlearnSample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cols = split_tabs(line);
        if (cols.size() != 2) {
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": expected session_id<TAB>position");
        }
        const long long id = parse_ll(trim(cols[0]), path, line_no);
        const int t = static_cast<int>(parse_ll(trim(cols[1]), path, line_no));
        const auto it = by_id.find(id);
        if (it == by_id.end()) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": unknown session " +
                             std::to_string(id));
        }
        try {
            out.push_back(make_unlearn_sample(train.sessions[it->second], t));
        } catch (const UsageError& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::size_t interaction_count(const Corpus& corpus) {
    std::size_t n = 0;
    for (const auto& s : corpus.sessions) n += s.items.size();
    return n;
}

} // namespace cau
