#pragma once
// Dataset sources: a seeded synthetic conversation generator, a separable
// fixture for end-to-end learning checks, and JSON Lines persistence that
// any external retriever run can be exported into.
//
// The generator ties a latent per-turn retrieval quality u to both the
// relevant item's rank (geometric, success 0.2 + 0.75u) and the score
// decay (peaked for high u, flat for low u). Score shapes therefore carry
// statistical signal about list quality without exposing the relevant
// rank itself, which is what keeps leakage-free features learnable.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "convpol/core.hpp"
#include "convpol/rng.hpp"

namespace convpol {

struct GenParams {
    int n_conversations = 1000;
    int turns_min = 2;
    int turns_max = 10;
    int k = 100;                     // candidates per list
    double quality_drift = 0.15;     // per-turn improvement of retrieval quality
    double p_question_absent = 0.05; // chance a turn has no relevant question
    double noise_scale = 0.02;       // additive score noise
    std::uint64_t seed = 0;
};

inline void validate(const GenParams& p) {
    if (p.n_conversations < 0)
        throw std::invalid_argument("GenParams: n_conversations must be >= 0");
    if (p.turns_min < 1 || p.turns_min > p.turns_max || p.turns_max > kMaxTurns)
        throw std::invalid_argument("GenParams: turns range must satisfy 1 <= min <= max <= " +
                                    std::to_string(kMaxTurns));
    if (p.k < kShapeSize)
        throw std::invalid_argument("GenParams: k must be >= " + std::to_string(kShapeSize));
    if (!(p.p_question_absent >= 0.0 && p.p_question_absent <= 1.0))
        throw std::invalid_argument("GenParams: p_question_absent must lie in [0, 1]");
    if (!(p.noise_scale >= 0.0) || !std::isfinite(p.quality_drift))
        throw std::invalid_argument("GenParams: bad noise_scale or quality_drift");
}

namespace detail {

// rank = 1 + geometric(p) via inversion, truncated at k.
inline int geometric_rank(Rng& rng, double p, int k) {
    const double u = rng.uniform01();
    const int failures = static_cast<int>(std::floor(std::log(1.0 - u) / std::log(1.0 - p)));
    return std::min(k, 1 + std::max(0, failures));
}

// Score curve with decay constant 1 + 9*(1 - quality): high quality gives a
// peaked list, low quality a flat one.
inline std::vector<double> make_scores(Rng& rng, double quality, int k, double noise_scale) {
    const double decay = 1.0 + 9.0 * (1.0 - quality);
    std::vector<double> scores(k);
    for (int i = 0; i < k; ++i)
        scores[i] = std::exp(-i / decay) + noise_scale * (2.0 * rng.uniform01() - 1.0);
    std::sort(scores.begin(), scores.end(), std::greater<>());
    return scores;
}

inline double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

inline std::string padded_id(const char* prefix, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%06d", prefix, index);
    return buf;
}

}  // namespace detail

inline std::vector<ConversationRecord> generate_synthetic(const GenParams& params) {
    validate(params);
    std::vector<ConversationRecord> records;
    records.reserve(params.n_conversations);
    for (int i = 0; i < params.n_conversations; ++i) {
        Rng rng(derive_seed(params.seed, static_cast<std::uint64_t>(i)));
        ConversationRecord record;
        record.id = detail::padded_id("synth-", i);
        const int n = rng.uniform_int(params.turns_min, params.turns_max);
        double result_quality = rng.uniform01();
        double question_quality = rng.uniform01();
        for (int t = 1; t <= n; ++t) {
            const double jitter_r =
                0.5 * params.quality_drift * (2.0 * rng.uniform01() - 1.0);
            const double jitter_q =
                0.5 * params.quality_drift * (2.0 * rng.uniform01() - 1.0);
            result_quality =
                detail::clamp01(result_quality + params.quality_drift + jitter_r);
            question_quality =
                detail::clamp01(question_quality + params.quality_drift + jitter_q);

            TurnRetrieval turn;
            turn.result_list.relevant_rank =
                detail::geometric_rank(rng, 0.2 + 0.75 * result_quality, params.k);
            if (rng.bernoulli(params.p_question_absent))
                turn.question_list.relevant_rank.reset();
            else
                turn.question_list.relevant_rank =
                    detail::geometric_rank(rng, 0.2 + 0.75 * question_quality, params.k);
            turn.result_list.scores =
                detail::make_scores(rng, result_quality, params.k, params.noise_scale);
            turn.question_list.scores =
                detail::make_scores(rng, question_quality, params.k, params.noise_scale);
            turn.user_answer_available = t < n;
            record.turns.push_back(std::move(turn));
        }
        records.push_back(std::move(record));
    }
    return records;
}

// A two-case fixture with a known optimum. Even indices (case A): the
// relevant result already sits at rank 1 in turn 1, so returning at once is
// best for every alpha < 1. Odd indices (case B): turn 1 results are poor
// (rank 20) but the relevant question is at rank 1 and turn 2 results are
// perfect, so asking first wins whenever alpha > 1/20. The two cases have
// well-separated score shapes, so a score-shape policy can reach the
// oracle.
inline std::vector<ConversationRecord> make_separable_set(int n, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("make_separable_set: need n >= 2");
    constexpr int kK = 100;
    constexpr double kNoise = 0.02;
    constexpr double kPeaked = 0.9;
    constexpr double kFlat = 0.15;
    constexpr double kMid = 0.5;
    std::vector<ConversationRecord> records;
    records.reserve(n);
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        const bool case_a = (i % 2 == 0);
        ConversationRecord record;
        record.id = detail::padded_id(case_a ? "sep-a-" : "sep-b-", i);

        TurnRetrieval turn1, turn2;
        turn1.user_answer_available = true;
        turn2.user_answer_available = false;
        if (case_a) {
            turn1.result_list = {detail::make_scores(rng, kPeaked, kK, kNoise), 1};
            turn1.question_list = {detail::make_scores(rng, kMid, kK, kNoise), 3};
            turn2.result_list = {detail::make_scores(rng, kFlat, kK, kNoise), 50};
            turn2.question_list = {detail::make_scores(rng, kFlat, kK, kNoise), std::nullopt};
        } else {
            turn1.result_list = {detail::make_scores(rng, kFlat, kK, kNoise), 20};
            turn1.question_list = {detail::make_scores(rng, kPeaked, kK, kNoise), 1};
            turn2.result_list = {detail::make_scores(rng, kPeaked, kK, kNoise), 1};
            turn2.question_list = {detail::make_scores(rng, kFlat, kK, kNoise), std::nullopt};
        }
        record.turns = {std::move(turn1), std::move(turn2)};
        records.push_back(std::move(record));
    }
    return records;
}

// ---------------------------------------------------------------------------
// JSON Lines persistence. One conversation per line:
//   {"id": str, "turns": [{"result": {"scores": [...], "relevant_index": int},
//                          "question": {...}}]}
// relevant_index is 0-based; -1 means no relevant item. Doubles are written
// with round-trip-exact formatting.

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline nlohmann::json rank_list_to_json(const RankList& list) {
    nlohmann::json j;
    j["scores"] = list.scores;
    j["relevant_index"] = list.relevant_rank ? *list.relevant_rank - 1 : -1;
    return j;
}

inline RankList rank_list_from_json(const nlohmann::json& j, int line, const char* field,
                                    int& k_file) {
    const auto fail = [&](const std::string& what) {
        throw ParseError("line " + std::to_string(line) + ": " + field + "." + what);
    };
    if (!j.is_object()) fail("must be an object");
    if (!j.contains("scores") || !j["scores"].is_array()) fail("scores missing or not an array");
    if (!j.contains("relevant_index") || !j["relevant_index"].is_number_integer())
        fail("relevant_index missing or not an integer");
    RankList list;
    list.scores.reserve(j["scores"].size());
    for (const auto& v : j["scores"]) {
        if (!v.is_number()) fail("scores must be numeric");
        list.scores.push_back(v.get<double>());
    }
    const int k = static_cast<int>(list.scores.size());
    if (k < kShapeSize)
        fail("scores needs at least " + std::to_string(kShapeSize) + " entries, got " +
             std::to_string(k));
    if (k_file == 0) k_file = k;
    if (k != k_file)
        fail("scores has " + std::to_string(k) + " entries, expected " + std::to_string(k_file));
    for (int i = 0; i < k; ++i) {
        if (!std::isfinite(list.scores[i]))
            fail("scores has a non-finite value at position " + std::to_string(i));
        if (i > 0 && list.scores[i] > list.scores[i - 1])
            fail("scores not non-increasing at position " + std::to_string(i));
    }
    const int idx = j["relevant_index"].get<int>();
    if (idx < -1 || idx >= k)
        fail("relevant_index " + std::to_string(idx) + " outside -1.." + std::to_string(k - 1));
    if (idx >= 0) list.relevant_rank = idx + 1;
    return list;
}

}  // namespace detail

inline void save_records(const std::vector<ConversationRecord>& records,
                         const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    for (const ConversationRecord& record : records) {
        nlohmann::json turns = nlohmann::json::array();
        for (const TurnRetrieval& turn : record.turns) {
            nlohmann::json jt;
            jt["result"] = detail::rank_list_to_json(turn.result_list);
            jt["question"] = detail::rank_list_to_json(turn.question_list);
            turns.push_back(std::move(jt));
        }
        nlohmann::json j;
        j["id"] = record.id;
        j["turns"] = std::move(turns);
        out << j.dump() << '\n';
    }
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline std::vector<ConversationRecord> load_run_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    std::vector<ConversationRecord> records;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    int line_no = 0;
    int k_file = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
        }
        const auto fail = [&](const std::string& what) {
            throw ParseError("line " + std::to_string(line_no) + ": " + what);
        };
        if (!j.is_object()) fail("expected a JSON object");
        if (!j.contains("id") || !j["id"].is_string()) fail("id missing or not a string");
        if (!j.contains("turns") || !j["turns"].is_array()) fail("turns missing or not an array");

        ConversationRecord record;
        record.id = j["id"].get<std::string>();
        if (record.id.empty()) fail("id must be non-empty");
        if (!seen_ids.insert(record.id).second) fail("duplicate id '" + record.id + "'");
        const auto& turns = j["turns"];
        if (turns.empty() || turns.size() > static_cast<std::size_t>(kMaxTurns))
            fail("turns must have 1.." + std::to_string(kMaxTurns) + " entries, got " +
                 std::to_string(turns.size()));
        for (std::size_t t = 0; t < turns.size(); ++t) {
            const auto& jt = turns[t];
            if (!jt.is_object()) fail("turns[" + std::to_string(t) + "] must be an object");
            if (!jt.contains("result")) fail("turns[" + std::to_string(t) + "].result missing");
            if (!jt.contains("question"))
                fail("turns[" + std::to_string(t) + "].question missing");
            TurnRetrieval turn;
            turn.result_list = detail::rank_list_from_json(jt["result"], line_no, "result", k_file);
            turn.question_list =
                detail::rank_list_from_json(jt["question"], line_no, "question", k_file);
            turn.user_answer_available = t + 1 < turns.size();
            record.turns.push_back(std::move(turn));
        }
        records.push_back(std::move(record));
    }
    return records;
}

}  // namespace convpol
