#pragma once
// The conversational MDP.
//
// Two actions per state: return results (ends the session) or ask the
// retrieved clarifying question (advances to the next logged turn). Asking
// when no relevant question exists, or at the final logged turn, ends the
// run as an abandonment. The cascade continuation probability is NOT
// sampled here; the metric carries alpha analytically, so transitions are
// deterministic and the learning signal is low-variance.
//
// RecordView is the relevance-stripped surface the training loop sees:
// per-turn state features plus a simulator-owned continuation bit. It
// contains no relevant ranks, so a training path built on it cannot read
// them.

#include <stdexcept>
#include <string>
#include <vector>

#include "convpol/core.hpp"
#include "convpol/rng.hpp"

namespace convpol {

struct EnvState {
    std::string record_id;
    int turn = 1;
    StateFeatures features;
    bool terminal = false;
    bool abandoned = false;  // terminal because an ask failed
};

inline EnvState reset(const ConversationRecord& record) {
    validate(record);
    return EnvState{record.id, 1, extract_state_features(record, 1), false, false};
}

inline EnvState step(const ConversationRecord& record, const EnvState& state, Action action) {
    if (state.terminal) throw std::logic_error("step: state is terminal");
    if (state.record_id != record.id)
        throw std::invalid_argument("step: state belongs to record '" + state.record_id +
                                    "', not '" + record.id + "'");
    check_turn_in_range(record, state.turn);

    EnvState next = state;
    if (action == Action::ReturnResults) {
        next.terminal = true;
        return next;
    }
    const int n = static_cast<int>(record.turns.size());
    const TurnRetrieval& turn_data = record.turns[state.turn - 1];
    const bool can_continue = state.turn < n && turn_data.user_answer_available &&
                              turn_data.question_list.relevant_rank.has_value();
    if (!can_continue) {
        next.terminal = true;
        next.abandoned = true;
        return next;
    }
    next.turn = state.turn + 1;
    next.features = extract_state_features(record, next.turn);
    return next;
}

// Pick an action from a distribution: sample with the given stream, or take
// the argmax (ties go to returning results).
inline Action decide(const ActionDistribution& dist, bool sample, Rng& rng) {
    if (!(dist[0] >= 0.0) || !(dist[1] >= 0.0))
        throw std::invalid_argument("decide: malformed action distribution");
    if (sample) return rng.uniform01() < dist[0] ? Action::ReturnResults : Action::AskQuestion;
    return dist[1] > dist[0] ? Action::AskQuestion : Action::ReturnResults;
}

// ---------------------------------------------------------------------------
// Relevance-stripped training view

struct TurnView {
    StateFeatures state;
    bool ask_continues = false;  // asking here reaches the next turn

    bool operator==(const TurnView&) const = default;
};

struct RecordView {
    std::string id;
    std::vector<TurnView> turns;

    bool operator==(const RecordView&) const = default;
};

inline RecordView make_record_view(const ConversationRecord& record) {
    validate(record);
    const int n = static_cast<int>(record.turns.size());
    RecordView view;
    view.id = record.id;
    view.turns.reserve(n);
    for (int t = 1; t <= n; ++t) {
        const TurnRetrieval& turn_data = record.turns[t - 1];
        const bool continues = t < n && turn_data.user_answer_available &&
                               turn_data.question_list.relevant_rank.has_value();
        view.turns.push_back(TurnView{extract_state_features(record, t), continues});
    }
    return view;
}

inline std::vector<RecordView> make_record_views(const std::vector<ConversationRecord>& records) {
    std::vector<RecordView> views;
    views.reserve(records.size());
    for (const ConversationRecord& record : records) views.push_back(make_record_view(record));
    return views;
}

// One decision of a realized run: which turn it was made at (0-based index
// into the view) and what was chosen.
struct ViewStep {
    int turn_index = 0;
    Action action = Action::ReturnResults;
};

struct ViewRollout {
    std::vector<ViewStep> steps;  // one entry per decision, in order
    bool abandoned = false;
    int stop_turn = 1;  // 1-based
};

template <typename PolicyFn>
ViewRollout rollout_view(PolicyFn&& policy, const RecordView& view, Rng& rng, bool sample) {
    if (view.turns.empty()) throw std::invalid_argument("rollout_view: empty view");
    const int last = static_cast<int>(view.turns.size()) - 1;
    ViewRollout run;
    for (int idx = 0;; ++idx) {
        const ActionDistribution dist = policy(view.turns[idx].state);
        const Action action = decide(dist, sample, rng);
        run.steps.push_back(ViewStep{idx, action});
        run.stop_turn = idx + 1;
        if (action == Action::ReturnResults) return run;
        if (idx == last || !view.turns[idx].ask_continues) {
            run.abandoned = true;
            return run;
        }
    }
}

// Full-record rollout: the same decision loop, materialized as a Trajectory
// for evaluation.
template <typename PolicyFn>
Trajectory rollout(PolicyFn&& policy, const ConversationRecord& record, Rng& rng, bool sample) {
    const RecordView view = make_record_view(record);
    const ViewRollout run = rollout_view(policy, view, rng, sample);
    Trajectory traj;
    traj.record_id = record.id;
    traj.stop_turn = run.stop_turn;
    for (const ViewStep& step : run.steps)
        if (step.action == Action::AskQuestion)
            traj.question_lists.push_back(record.turns[step.turn_index].question_list);
    if (!run.abandoned)
        traj.final_result_list = record.turns[run.stop_turn - 1].result_list;
    return traj;
}

// Greedy trajectories of a policy over a whole set.
template <typename PolicyFn>
std::vector<Trajectory> greedy_trajectories(PolicyFn&& policy,
                                            const std::vector<ConversationRecord>& records) {
    Rng unused(0);
    std::vector<Trajectory> out;
    out.reserve(records.size());
    for (const ConversationRecord& record : records)
        out.push_back(rollout(policy, record, unused, /*sample=*/false));
    return out;
}

}  // namespace convpol
