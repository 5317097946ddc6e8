#pragma once
// Domain types for multi-turn conversational retrieval sessions, plus the
// deterministic score-shape features the policy and discriminator networks
// consume.
//
// Feature extraction reads ranking scores and the turn position, never the
// position of the relevant item. Relevance only enters through the
// evaluation metrics and the simulated user.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace convpol {

// Hard cap on conversation length; also the denominator of turn_fraction.
inline constexpr int kMaxTurns = 10;

// Number of leading scores summarized by a shape block.
inline constexpr int kShapeSize = 10;

inline constexpr int kStateDim = 1 + 2 * kShapeSize;  // turn + two shape blocks
inline constexpr int kActionDim = 2 + kShapeSize;     // turn + flag + chosen shape

// A scored candidate list in rank order: scores[0] belongs to rank 1.
struct RankList {
    std::vector<double> scores;        // non-increasing
    std::optional<int> relevant_rank;  // 1-based; nullopt = no relevant item

    bool operator==(const RankList&) const = default;
};

// Retrieval output of one logged (or synthetic) conversation turn.
struct TurnRetrieval {
    RankList result_list;
    RankList question_list;
    bool user_answer_available = false;  // a user reply exists, enabling a next turn

    bool operator==(const TurnRetrieval&) const = default;
};

struct ConversationRecord {
    std::string id;
    std::vector<TurnRetrieval> turns;  // 1..kMaxTurns entries

    bool operator==(const ConversationRecord&) const = default;
};

enum class Action { ReturnResults, AskQuestion };

inline constexpr int action_index(Action a) {
    return a == Action::AskQuestion ? 1 : 0;
}

// One realized policy run over a record: the question lists shown in the
// asked turns, then either a final result list or an abandonment marker.
// For an abandoned run question_lists also holds the list of the turn the
// run aborted on (the user saw it and left), so its length is stop_turn.
struct Trajectory {
    std::string record_id;
    std::vector<RankList> question_lists;
    std::optional<RankList> final_result_list;  // nullopt = abandoned
    int stop_turn = 1;  // turn where results were returned or the run aborted

    bool abandoned() const { return !final_result_list.has_value(); }

    bool operator==(const Trajectory&) const = default;
};

// Cascade user model: examine a shown list top-down, continuing past each
// item with probability alpha.
struct CascadeParams {
    double alpha = 0.5;  // in [0, 1]
};

// ---------------------------------------------------------------------------
// Validation

inline void validate(const RankList& list) {
    if (list.scores.size() < static_cast<std::size_t>(kShapeSize))
        throw std::invalid_argument("RankList: needs at least " +
                                    std::to_string(kShapeSize) + " scores, got " +
                                    std::to_string(list.scores.size()));
    for (std::size_t i = 0; i < list.scores.size(); ++i) {
        if (!std::isfinite(list.scores[i]))
            throw std::invalid_argument("RankList: non-finite score at position " +
                                        std::to_string(i));
        if (i > 0 && list.scores[i] > list.scores[i - 1])
            throw std::invalid_argument("RankList: scores increase at position " +
                                        std::to_string(i));
    }
    if (list.relevant_rank) {
        const int r = *list.relevant_rank;
        if (r < 1 || r > static_cast<int>(list.scores.size()))
            throw std::invalid_argument("RankList: relevant_rank " + std::to_string(r) +
                                        " outside 1.." + std::to_string(list.scores.size()));
    }
}

inline void validate(const ConversationRecord& record) {
    const auto n = record.turns.size();
    if (n < 1 || n > static_cast<std::size_t>(kMaxTurns))
        throw std::invalid_argument("ConversationRecord '" + record.id + "': turn count " +
                                    std::to_string(n) + " outside 1.." +
                                    std::to_string(kMaxTurns));
    for (const TurnRetrieval& turn : record.turns) {
        validate(turn.result_list);
        validate(turn.question_list);
    }
    if (record.turns.back().user_answer_available)
        throw std::invalid_argument("ConversationRecord '" + record.id +
                                    "': last turn cannot have a user answer");
}

inline void validate(const Trajectory& traj) {
    if (traj.stop_turn < 1)
        throw std::invalid_argument("Trajectory: stop_turn must be >= 1");
    const auto asked = traj.question_lists.size();
    const auto expected = static_cast<std::size_t>(traj.stop_turn) -
                          (traj.final_result_list ? 1u : 0u);
    if (asked != expected)
        throw std::invalid_argument("Trajectory: " + std::to_string(asked) +
                                    " question lists inconsistent with stop_turn " +
                                    std::to_string(traj.stop_turn));
    for (const RankList& q : traj.question_lists) validate(q);
    if (traj.final_result_list) validate(*traj.final_result_list);
}

inline void validate(const CascadeParams& params) {
    if (!(params.alpha >= 0.0 && params.alpha <= 1.0))
        throw std::invalid_argument("CascadeParams: alpha must lie in [0, 1]");
}

// ---------------------------------------------------------------------------
// Features

// Fixed-length view of a conversation state: where we are in the session
// plus the normalized score decay of both candidate lists.
struct StateFeatures {
    double turn_fraction = 0.0;  // (turn - 1) / kMaxTurns
    std::array<double, kShapeSize> result_shape{};
    std::array<double, kShapeSize> question_shape{};

    std::array<double, kStateDim> flat() const {
        std::array<double, kStateDim> out{};
        out[0] = turn_fraction;
        for (int i = 0; i < kShapeSize; ++i) {
            out[1 + i] = result_shape[i];
            out[1 + kShapeSize + i] = question_shape[i];
        }
        return out;
    }

    bool operator==(const StateFeatures&) const = default;
};

// Fixed-length view of one chosen action: the same turn position, a binary
// action flag, and the score shape of the chosen list.
struct ActionFeatures {
    double turn_fraction = 0.0;
    double action_flag = 0.0;  // 1 = ask question
    std::array<double, kShapeSize> chosen_shape{};

    std::array<double, kActionDim> flat() const {
        std::array<double, kActionDim> out{};
        out[0] = turn_fraction;
        out[1] = action_flag;
        for (int i = 0; i < kShapeSize; ++i) out[2 + i] = chosen_shape[i];
        return out;
    }

    bool operator==(const ActionFeatures&) const = default;
};

// A state with the action taken in it; the unit of expert demonstration.
struct StateAction {
    StateFeatures state;
    Action action = Action::ReturnResults;

    bool operator==(const StateAction&) const = default;
};

// A policy maps state features to a distribution over the two actions:
// index 0 = return results, index 1 = ask question.
using ActionDistribution = std::array<double, 2>;
using Policy = std::function<ActionDistribution(const StateFeatures&)>;

// Min-max normalization of the leading kShapeSize scores. A constant block
// maps to all zeros.
inline std::array<double, kShapeSize> score_shape(const std::vector<double>& scores) {
    if (scores.size() < static_cast<std::size_t>(kShapeSize))
        throw std::invalid_argument("score_shape: needs at least " +
                                    std::to_string(kShapeSize) + " scores");
    std::array<double, kShapeSize> shape{};
    double lo = scores[0], hi = scores[0];
    for (int i = 1; i < kShapeSize; ++i) {
        lo = std::min(lo, scores[i]);
        hi = std::max(hi, scores[i]);
    }
    const double range = hi - lo;
    if (range <= 0.0) return shape;
    for (int i = 0; i < kShapeSize; ++i) shape[i] = (scores[i] - lo) / range;
    return shape;
}

inline void check_turn_in_range(const ConversationRecord& record, int turn) {
    if (turn < 1 || turn > static_cast<int>(record.turns.size()))
        throw std::out_of_range("turn " + std::to_string(turn) + " outside 1.." +
                                std::to_string(record.turns.size()) + " of record '" +
                                record.id + "'");
}

inline StateFeatures extract_state_features(const ConversationRecord& record, int turn) {
    check_turn_in_range(record, turn);
    const TurnRetrieval& t = record.turns[turn - 1];
    StateFeatures f;
    f.turn_fraction = static_cast<double>(turn - 1) / kMaxTurns;
    f.result_shape = score_shape(t.result_list.scores);
    f.question_shape = score_shape(t.question_list.scores);
    return f;
}

// Action features are a projection of the state features: the chosen list's
// shape block plus the action flag.
inline ActionFeatures action_features_from_state(const StateFeatures& s, Action a) {
    ActionFeatures f;
    f.turn_fraction = s.turn_fraction;
    f.action_flag = static_cast<double>(action_index(a));
    f.chosen_shape = (a == Action::AskQuestion) ? s.question_shape : s.result_shape;
    return f;
}

inline ActionFeatures extract_action_features(const ConversationRecord& record, int turn,
                                              Action action) {
    return action_features_from_state(extract_state_features(record, turn), action);
}

}  // namespace convpol
