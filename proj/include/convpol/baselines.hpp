#pragma once
// Comparison policies.
//
// Fixed-turn policies (ask exactly n questions), a behavior-cloning
// classifier trained on expert pairs, a reward-table Q-learning agent, and
// the backtracking oracle that scores every stop point and keeps the best.
// The oracle is the per-conversation upper bound of any policy working on
// the same retrieval lists.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "convpol/core.hpp"
#include "convpol/env.hpp"
#include "convpol/expert.hpp"
#include "convpol/metrics.hpp"
#include "convpol/models.hpp"
#include "convpol/rng.hpp"

namespace convpol {

// Recover the 1-based turn from the turn_fraction feature. Exact for all
// turns 1..kMaxTurns.
inline int turn_from_features(const StateFeatures& s) {
    return static_cast<int>(std::lround(s.turn_fraction * kMaxTurns)) + 1;
}

// Ask at turns 1..n_questions, then return results. Ignores score shapes.
inline Policy fixed_policy(int n_questions) {
    if (n_questions < 0) throw std::invalid_argument("fixed_policy: n_questions must be >= 0");
    return [n_questions](const StateFeatures& s) -> ActionDistribution {
        return turn_from_features(s) <= n_questions ? ActionDistribution{0.0, 1.0}
                                                    : ActionDistribution{1.0, 0.0};
    };
}

// Wrap a trained generator as a policy.
inline Policy make_net_policy(PolicyNet net) {
    return [net = std::move(net)](const StateFeatures& s) { return policy_forward(net, s); };
}

// Greedy policy over a Q-net (policy-shaped net read as Q-values, no
// softmax). Ties go to returning results.
inline Policy greedy_q_policy(PolicyNet qnet) {
    return [qnet = std::move(qnet)](const StateFeatures& s) -> ActionDistribution {
        const auto q = policy_logits(qnet, s);
        return q[1] > q[0] ? ActionDistribution{0.0, 1.0} : ActionDistribution{1.0, 0.0};
    };
}

// ---------------------------------------------------------------------------
// RCSQ: Q-learning against a hand-set reward table

struct RcsqConfig {
    double r_cq = 0.11;   // reward for a relevant question at rank 1
    double p_cq = -0.89;  // penalty otherwise (the sweep ties p_cq = r_cq - 1)
    double gamma = 1.0;
    double lr = 0.01;
    int epochs = 20;  // passes over the training records
    std::uint64_t seed = 0;
    int hidden = kDefaultHidden;
    double eps_start = 0.5;  // epsilon-greedy, linear decay across episodes
    double eps_end = 0.05;
};

inline RcsqConfig rcsq_config_for_reward(double r, const RcsqConfig& base = {}) {
    RcsqConfig cfg = base;
    cfg.r_cq = r;
    cfg.p_cq = r - 1.0;
    return cfg;
}

inline void validate(const RcsqConfig& cfg) {
    if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0))
        throw std::invalid_argument("RcsqConfig: gamma must lie in [0, 1]");
    if (!(cfg.lr > 0.0)) throw std::invalid_argument("RcsqConfig: lr must be > 0");
    if (cfg.epochs < 0) throw std::invalid_argument("RcsqConfig: epochs must be >= 0");
    if (cfg.hidden < 1) throw std::invalid_argument("RcsqConfig: hidden must be >= 1");
    if (!(cfg.eps_start >= 0.0 && cfg.eps_start <= 1.0 && cfg.eps_end >= 0.0 &&
          cfg.eps_end <= 1.0))
        throw std::invalid_argument("RcsqConfig: epsilon bounds must lie in [0, 1]");
}

// Reward table: returning results pays the result's reciprocal rank;
// asking pays r_cq when the relevant question sits at rank 1 (the asked
// question is the top-ranked one), p_cq otherwise.
inline double rcsq_reward(const TurnRetrieval& turn, Action action, const RcsqConfig& cfg) {
    if (action == Action::ReturnResults) {
        if (!turn.result_list.relevant_rank) return 0.0;
        return 1.0 / *turn.result_list.relevant_rank;
    }
    const auto& rank = turn.question_list.relevant_rank;
    return (rank && *rank == 1) ? cfg.r_cq : cfg.p_cq;
}

// Semi-gradient TD Q-learning with epsilon-greedy exploration over the
// logged conversations. Returns the Q-net; wrap with greedy_q_policy.
inline PolicyNet train_rcsq(const RcsqConfig& cfg,
                            const std::vector<ConversationRecord>& records) {
    validate(cfg);
    if (records.empty()) throw std::invalid_argument("train_rcsq: no records");
    for (const ConversationRecord& record : records) validate(record);

    PolicyNet qnet = init_policy_net(cfg.hidden, derive_seed(cfg.seed, 1));
    Rng rng(derive_seed(cfg.seed, 2));

    const long total_episodes = static_cast<long>(cfg.epochs) * static_cast<long>(records.size());
    long episode = 0;
    detail::ForwardCache cache;
    FeedForward grad = zeros_like(qnet);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (const ConversationRecord& record : records) {
            const double progress =
                total_episodes > 1 ? static_cast<double>(episode) / (total_episodes - 1) : 1.0;
            const double eps = cfg.eps_start + (cfg.eps_end - cfg.eps_start) * progress;
            ++episode;

            EnvState state = reset(record);
            while (!state.terminal) {
                const auto x = state.features.flat();
                detail::forward(qnet, x, cache);
                const double q_return = cache.z[0], q_ask = cache.z[1];
                Action action;
                if (rng.bernoulli(eps))
                    action = rng.bernoulli(0.5) ? Action::AskQuestion : Action::ReturnResults;
                else
                    action = q_ask > q_return ? Action::AskQuestion : Action::ReturnResults;

                const double reward =
                    rcsq_reward(record.turns[state.turn - 1], action, cfg);
                const EnvState next = step(record, state, action);
                double target = reward;
                if (!next.terminal) {
                    const auto q_next = policy_logits(qnet, next.features);
                    target += cfg.gamma * std::max(q_next[0], q_next[1]);
                }

                // w += lr * (target - Q(s,a)) * grad Q(s,a); cache still
                // holds the forward pass for x
                const double delta = target - cache.z[action_index(action)];
                std::array<double, 2> dz{0.0, 0.0};
                dz[action_index(action)] = delta;
                std::fill(grad.w1.begin(), grad.w1.end(), 0.0);
                std::fill(grad.b1.begin(), grad.b1.end(), 0.0);
                std::fill(grad.w2.begin(), grad.w2.end(), 0.0);
                std::fill(grad.b2.begin(), grad.b2.end(), 0.0);
                detail::backward(qnet, x, cache, dz, 1.0, grad);
                axpy_inplace(qnet, cfg.lr, grad);
                if (!all_finite(qnet))
                    throw std::runtime_error("train_rcsq: diverged (non-finite weights); "
                                             "lower lr");
                state = next;
            }
        }
    }
    return qnet;
}

// ---------------------------------------------------------------------------
// CtxPred: behavior cloning of the expert pairs

struct CtxPredConfig {
    double lr = 0.5;  // full-batch gradient descent on the mean cross-entropy
    int epochs = 500;
    std::uint64_t seed = 0;
    int hidden = kDefaultHidden;
};

inline PolicyNet train_ctxpred(const std::vector<StateAction>& expert_pairs,
                               const CtxPredConfig& cfg = {}) {
    if (expert_pairs.empty()) throw std::invalid_argument("train_ctxpred: no expert pairs");
    if (!(cfg.lr > 0.0)) throw std::invalid_argument("CtxPredConfig: lr must be > 0");
    if (cfg.epochs < 0) throw std::invalid_argument("CtxPredConfig: epochs must be >= 0");
    PolicyNet net = init_policy_net(cfg.hidden, derive_seed(cfg.seed, 1));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto [loss, grad] = policy_ce_loss(net, expert_pairs);
        if (!std::isfinite(loss))
            throw std::runtime_error("train_ctxpred: diverged (non-finite loss); lower lr");
        axpy_inplace(net, -cfg.lr, grad);
    }
    return net;
}

// Fraction of pairs whose argmax action matches the expert's.
inline double action_accuracy(const PolicyNet& net, const std::vector<StateAction>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("action_accuracy: no pairs");
    long hits = 0;
    for (const StateAction& pair : pairs) {
        const auto p = policy_forward(net, pair.state);
        const Action predicted = p[1] > p[0] ? Action::AskQuestion : Action::ReturnResults;
        if (predicted == pair.action) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// Oracle: backtrack over all stop points per conversation

inline std::vector<Trajectory> oracle_trajectories(const std::vector<ConversationRecord>& records,
                                                   const CascadeParams& params) {
    std::vector<Trajectory> out;
    out.reserve(records.size());
    for (const ConversationRecord& record : records) {
        const ExpertLabel label = select_expert(record, params);
        out.push_back(enumerate_trajectories(record)[label.stop_turn - 1]);
    }
    return out;
}

inline MetricReport oracle_evaluate(const std::vector<ConversationRecord>& records,
                                    const CascadeParams& params) {
    if (records.empty()) throw std::invalid_argument("oracle_evaluate: no records");
    return evaluate(oracle_trajectories(records, params), {params.alpha});
}

// Comparison-table row for the oracle: each ECRR cell uses the expert
// trajectories for that alpha; the R@1/MRR cells use the stop point that
// maximizes trajectory MRR (the binary-alpha optimum), earliest on ties.
inline MetricReport oracle_report(const std::vector<ConversationRecord>& records,
                                  const std::vector<double>& alphas) {
    if (records.empty()) throw std::invalid_argument("oracle_report: no records");
    if (alphas.empty()) throw std::invalid_argument("oracle_report: no alphas");
    MetricReport report;
    for (const ConversationRecord& record : records) {
        const std::vector<Trajectory> trajs = enumerate_trajectories(record);
        double best_mrr = trajectory_mrr(trajs[0]);
        int best = 0;
        for (int i = 1; i < static_cast<int>(trajs.size()); ++i) {
            const double value = trajectory_mrr(trajs[i]);
            if (value > best_mrr) {
                best_mrr = value;
                best = i;
            }
        }
        report.mrr += best_mrr;
        report.recall_at_1 += trajectory_recall_at_k(trajs[best], 1);
    }
    report.mrr /= static_cast<double>(records.size());
    report.recall_at_1 /= static_cast<double>(records.size());
    for (double alpha : alphas)
        report.ecrr_by_alpha[alpha] =
            oracle_evaluate(records, {alpha}).ecrr_by_alpha.at(alpha);
    return report;
}

}  // namespace convpol
