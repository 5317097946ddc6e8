#pragma once
// Expert-trajectory derivation.
//
// A logged conversation with N turns admits exactly N stop-point
// trajectories: ask at turns 1..t-1, return results at turn t. The expert
// is the ECRR argmax among them; its (state, action) decisions become the
// demonstrations for imitation learning. No annotation, no hand-set reward.

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "convpol/core.hpp"
#include "convpol/metrics.hpp"

namespace convpol {

struct ExpertLabel {
    std::string record_id;
    int stop_turn = 1;
    double ecrr_value = 0.0;
    double alpha = 0.0;  // cascade parameter the label was derived under

    bool operator==(const ExpertLabel&) const = default;
};

// All N stop-point trajectories of a record, in stop-turn order.
inline std::vector<Trajectory> enumerate_trajectories(const ConversationRecord& record) {
    validate(record);
    const int n = static_cast<int>(record.turns.size());
    std::vector<Trajectory> out;
    out.reserve(n);
    for (int stop = 1; stop <= n; ++stop) {
        Trajectory traj;
        traj.record_id = record.id;
        traj.stop_turn = stop;
        for (int t = 1; t < stop; ++t)
            traj.question_lists.push_back(record.turns[t - 1].question_list);
        traj.final_result_list = record.turns[stop - 1].result_list;
        out.push_back(std::move(traj));
    }
    return out;
}

// ECRR argmax over the stop points. Ties break toward the smallest
// stop_turn: equal value at lower user effort wins.
inline ExpertLabel select_expert(const ConversationRecord& record, const CascadeParams& params) {
    const std::vector<Trajectory> trajs = enumerate_trajectories(record);
    int best = 0;
    double best_value = ecrr(trajs[0], params);
    for (int i = 1; i < static_cast<int>(trajs.size()); ++i) {
        const double value = ecrr(trajs[i], params);
        if (value > best_value) {
            best = i;
            best_value = value;
        }
    }
    return ExpertLabel{record.id, trajs[best].stop_turn, best_value, params.alpha};
}

// The expert's decision sequence on one record: ask up to the stop turn,
// then return results.
inline std::vector<StateAction> expert_demonstrations(const ConversationRecord& record,
                                                      int stop_turn) {
    check_turn_in_range(record, stop_turn);
    std::vector<StateAction> out;
    out.reserve(stop_turn);
    for (int t = 1; t < stop_turn; ++t)
        out.push_back({extract_state_features(record, t), Action::AskQuestion});
    out.push_back({extract_state_features(record, stop_turn), Action::ReturnResults});
    return out;
}

inline std::vector<StateAction> build_expert_dataset(
    const std::vector<ConversationRecord>& records, const CascadeParams& params) {
    if (records.empty()) throw std::invalid_argument("build_expert_dataset: no records");
    std::vector<StateAction> out;
    for (const ConversationRecord& record : records) {
        const ExpertLabel label = select_expert(record, params);
        for (StateAction& pair : expert_demonstrations(record, label.stop_turn))
            out.push_back(std::move(pair));
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON Lines persistence: {"id": ..., "stop_turn": ..., "ecrr": ..., "alpha": ...}

inline void save_expert_labels(const std::vector<ExpertLabel>& labels,
                               const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    for (const ExpertLabel& label : labels) {
        nlohmann::json j;
        j["id"] = label.record_id;
        j["stop_turn"] = label.stop_turn;
        j["ecrr"] = label.ecrr_value;
        j["alpha"] = label.alpha;
        out << j.dump() << '\n';
    }
}

inline std::vector<ExpertLabel> load_expert_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    std::vector<ExpertLabel> labels;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const nlohmann::json j = nlohmann::json::parse(line);
            labels.push_back(ExpertLabel{j.at("id").get<std::string>(),
                                         j.at("stop_turn").get<int>(),
                                         j.at("ecrr").get<double>(),
                                         j.at("alpha").get<double>()});
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return labels;
}

}  // namespace convpol
