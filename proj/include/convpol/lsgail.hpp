#pragma once
// Adversarial imitation training.
//
// Per epoch: sample on-policy rollouts over a batch of conversations, take
// several least-squares discriminator steps on generated-vs-expert
// (state, action) pairs, then one policy-gradient step on the generator
// using log D as the learned per-step signal (undiscounted suffix sums,
// mean baseline subtracted, entropy bonus added). The loop never touches
// relevant ranks, metric values, or any hand-set reward: it runs entirely
// on RecordView and expert (state, action) pairs.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "convpol/core.hpp"
#include "convpol/env.hpp"
#include "convpol/expert.hpp"
#include "convpol/metrics.hpp"
#include "convpol/models.hpp"
#include "convpol/rng.hpp"

namespace convpol {

struct TrainConfig {
    double alpha = 0.5;  // cascade parameter the expert labels were derived under
    double lr = 1e-4;
    double lambda = 1e-2;  // entropy bonus weight
    int disc_steps_per_gen_step = 5;
    int epochs = 0;
    int batch_conversations = 64;
    int rollouts_per_conversation = 1;
    std::uint64_t seed = 0;
    int hidden = kDefaultHidden;
};

inline void validate(const TrainConfig& cfg) {
    if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0))
        throw std::invalid_argument("TrainConfig: alpha must lie in [0, 1]");
    if (!(cfg.lr >= 0.0)) throw std::invalid_argument("TrainConfig: lr must be >= 0");
    if (!(cfg.lambda >= 0.0)) throw std::invalid_argument("TrainConfig: lambda must be >= 0");
    if (cfg.disc_steps_per_gen_step < 1)
        throw std::invalid_argument("TrainConfig: disc_steps_per_gen_step must be >= 1");
    if (cfg.epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (cfg.batch_conversations < 1)
        throw std::invalid_argument("TrainConfig: batch_conversations must be >= 1");
    if (cfg.rollouts_per_conversation < 1)
        throw std::invalid_argument("TrainConfig: rollouts_per_conversation must be >= 1");
    if (cfg.hidden < 1) throw std::invalid_argument("TrainConfig: hidden must be >= 1");
}

struct EpochStats {
    double disc_loss = 0.0;       // per-pair loss of the last discriminator step
    double policy_objective = 0.0;
    double val_mean_ecrr = 0.0;   // NaN when no validation evaluator is set
    double ask_rate = 0.0;        // fraction of this epoch's decisions that asked

    bool operator==(const EpochStats&) const = default;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;

    bool operator==(const TrainHistory&) const = default;
};

struct TrainResult {
    PolicyNet policy;
    DiscNet disc;
    TrainHistory history;
};

// Undiscounted suffix sums of log D along one sampled trajectory:
//   Q_t = sum over u >= t of log D(s_u, a_u), with D clamped before the log.
inline std::vector<double> q_estimate(const std::vector<ActionFeatures>& traj_actions,
                                      const DiscNet& disc) {
    if (traj_actions.empty()) throw std::invalid_argument("q_estimate: empty trajectory");
    std::vector<double> q(traj_actions.size());
    double suffix = 0.0;
    for (int t = static_cast<int>(traj_actions.size()) - 1; t >= 0; --t) {
        double d = disc_forward(disc, traj_actions[t]);
        d = std::min(std::max(d, kDiscClamp), 1.0 - kDiscClamp);
        suffix += std::log(d);
        q[t] = suffix;
    }
    return q;
}

// Optional per-epoch validation hook; computed by the caller so the
// training path itself stays free of relevance and metrics.
using ValEvaluator = std::function<double(const PolicyNet&)>;

inline TrainResult train(const TrainConfig& cfg, const std::vector<RecordView>& train_views,
                         const std::vector<StateAction>& expert_pairs,
                         const ValEvaluator& val_eval = {}) {
    validate(cfg);
    if (train_views.empty()) throw std::invalid_argument("train: no training views");
    if (expert_pairs.empty()) throw std::invalid_argument("train: no expert pairs");

    TrainResult result{init_policy_net(cfg.hidden, derive_seed(cfg.seed, 1)),
                       init_disc_net(cfg.hidden, derive_seed(cfg.seed, 2)),
                       {}};
    result.history.epochs.reserve(cfg.epochs);
    Rng rng(derive_seed(cfg.seed, 3));

    const int n_views = static_cast<int>(train_views.size());
    const int batch_size = std::min(cfg.batch_conversations, n_views);
    std::vector<int> order(train_views.size());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // (a) on-policy rollouts over a sampled conversation batch
        std::iota(order.begin(), order.end(), 0);
        if (batch_size < n_views) {
            for (int i = 0; i < batch_size; ++i)
                std::swap(order[i], order[rng.uniform_int(i, n_views - 1)]);
        }
        struct Step {
            const StateFeatures* state;
            Action action;
            ActionFeatures features;
        };
        std::vector<std::vector<Step>> trajectories;
        std::vector<ActionFeatures> generated;
        long asks = 0, decisions = 0;
        const auto policy_fn = [&](const StateFeatures& s) {
            return policy_forward(result.policy, s);
        };
        for (int i = 0; i < batch_size; ++i) {
            const RecordView& view = train_views[order[i]];
            for (int r = 0; r < cfg.rollouts_per_conversation; ++r) {
                const ViewRollout run = rollout_view(policy_fn, view, rng, /*sample=*/true);
                std::vector<Step> steps;
                steps.reserve(run.steps.size());
                for (const ViewStep& vs : run.steps) {
                    const StateFeatures& state = view.turns[vs.turn_index].state;
                    ActionFeatures af = action_features_from_state(state, vs.action);
                    generated.push_back(af);
                    steps.push_back(Step{&state, vs.action, af});
                    ++decisions;
                    if (vs.action == Action::AskQuestion) ++asks;
                }
                trajectories.push_back(std::move(steps));
            }
        }

        // (b) discriminator updates, expert pairs resampled per step to
        // balance class sizes with the generated batch
        double disc_loss_per_pair = 0.0;
        std::vector<ActionFeatures> expert_batch(generated.size());
        for (int d = 0; d < cfg.disc_steps_per_gen_step; ++d) {
            for (ActionFeatures& af : expert_batch) {
                const StateAction& pair =
                    expert_pairs[rng.uniform_int(0, static_cast<int>(expert_pairs.size()) - 1)];
                af = action_features_from_state(pair.state, pair.action);
            }
            auto [loss, grad] = disc_ls_loss(result.disc, generated, expert_batch);
            axpy_inplace(result.disc, -cfg.lr, grad);
            disc_loss_per_pair = loss / static_cast<double>(generated.size() + expert_batch.size());
        }

        // (c) one generator step: suffix-sum Q from the current D, mean
        // baseline, entropy bonus
        std::vector<AdvantageSample> advantage;
        advantage.reserve(generated.size());
        std::vector<ActionFeatures> traj_features;
        double q_sum = 0.0;
        std::size_t q_count = 0;
        std::vector<std::vector<double>> traj_q(trajectories.size());
        for (std::size_t t = 0; t < trajectories.size(); ++t) {
            traj_features.clear();
            for (const Step& step : trajectories[t]) traj_features.push_back(step.features);
            traj_q[t] = q_estimate(traj_features, result.disc);
            for (double q : traj_q[t]) {
                q_sum += q;
                ++q_count;
            }
        }
        const double baseline = q_sum / static_cast<double>(q_count);
        for (std::size_t t = 0; t < trajectories.size(); ++t)
            for (std::size_t s = 0; s < trajectories[t].size(); ++s)
                advantage.push_back(AdvantageSample{*trajectories[t][s].state,
                                                    trajectories[t][s].action,
                                                    traj_q[t][s] - baseline});
        auto [objective, grad] = policy_objective(result.policy, advantage, cfg.lambda);
        axpy_inplace(result.policy, cfg.lr, grad);

        if (!std::isfinite(disc_loss_per_pair) || !std::isfinite(objective) ||
            !all_finite(result.policy) || !all_finite(result.disc))
            throw std::runtime_error("train: diverged at epoch " + std::to_string(epoch) +
                                     " (non-finite loss or weights); lower lr or check data");

        EpochStats stats;
        stats.disc_loss = disc_loss_per_pair;
        stats.policy_objective = objective;
        stats.val_mean_ecrr =
            val_eval ? val_eval(result.policy) : std::numeric_limits<double>::quiet_NaN();
        stats.ask_rate = static_cast<double>(asks) / static_cast<double>(decisions);
        result.history.epochs.push_back(stats);
    }
    return result;
}

// Convenience entry point working from records and persisted expert labels.
// Validates that the labels were derived under the configured alpha, builds
// the stripped views and demonstration pairs, and wires a greedy validation
// evaluator when a validation set is given.
inline TrainResult train_with_labels(const TrainConfig& cfg,
                                     const std::vector<ConversationRecord>& train_records,
                                     const std::vector<ExpertLabel>& labels,
                                     const std::vector<ConversationRecord>& val_records = {}) {
    if (train_records.empty()) throw std::invalid_argument("train_with_labels: no records");
    std::unordered_map<std::string, int> stop_by_id;
    for (const ExpertLabel& label : labels) {
        if (label.alpha != cfg.alpha)
            throw std::invalid_argument("train_with_labels: expert labels derived at alpha=" +
                                        format_alpha(label.alpha) + " but config.alpha=" +
                                        format_alpha(cfg.alpha));
        stop_by_id[label.record_id] = label.stop_turn;
    }
    std::vector<StateAction> expert_pairs;
    for (const ConversationRecord& record : train_records) {
        const auto it = stop_by_id.find(record.id);
        if (it == stop_by_id.end())
            throw std::invalid_argument("train_with_labels: no expert label for record '" +
                                        record.id + "'");
        for (StateAction& pair : expert_demonstrations(record, it->second))
            expert_pairs.push_back(std::move(pair));
    }
    const std::vector<RecordView> views = make_record_views(train_records);
    ValEvaluator val_eval;
    if (!val_records.empty()) {
        val_eval = [&val_records, alpha = cfg.alpha](const PolicyNet& policy) {
            const auto policy_fn = [&](const StateFeatures& s) {
                return policy_forward(policy, s);
            };
            return mean_ecrr(greedy_trajectories(policy_fn, val_records), {alpha});
        };
    }
    return train(cfg, views, expert_pairs, val_eval);
}

// ---------------------------------------------------------------------------
// History persistence: CSV with one row per epoch.

inline void save_history(const TrainHistory& history, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "epoch,disc_loss,policy_obj,val_mean_ecrr,ask_rate\n";
    for (std::size_t i = 0; i < history.epochs.size(); ++i) {
        const EpochStats& e = history.epochs[i];
        out << i << ',' << format_double(e.disc_loss, "%.12g") << ','
            << format_double(e.policy_objective, "%.12g") << ','
            << format_double(e.val_mean_ecrr, "%.12g") << ','
            << format_double(e.ask_rate, "%.12g") << '\n';
    }
}

}  // namespace convpol
