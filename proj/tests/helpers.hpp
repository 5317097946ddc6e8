#pragma once
// Shared fixtures and independent oracles for the test suites. Oracles here
// deliberately re-derive values through a different code path than the
// library (recursive enumeration, reverse cumulative sums, finite
// differences, rank statistics) so they can catch implementation mistakes.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "convpol/core.hpp"
#include "convpol/env.hpp"
#include "convpol/lsgail.hpp"
#include "convpol/models.hpp"
#include "convpol/rng.hpp"

namespace testutil {

using namespace convpol;

// --------------------------------------------------------------------------
// Builders

inline RankList make_list(std::vector<double> scores, std::optional<int> rank) {
    return RankList{std::move(scores), rank};
}

// k constant scores; handy when only relevance matters.
inline RankList flat_list(std::optional<int> rank, int k = 12, double value = 1.0) {
    return RankList{std::vector<double>(static_cast<std::size_t>(k), value), rank};
}

// A record described only by per-turn relevant ranks (nullopt = absent),
// with constant scores everywhere.
inline ConversationRecord record_from_ranks(
    const std::string& id, const std::vector<std::optional<int>>& result_ranks,
    const std::vector<std::optional<int>>& question_ranks, int k = 12) {
    ConversationRecord record;
    record.id = id;
    const auto n = result_ranks.size();
    for (std::size_t t = 0; t < n; ++t) {
        TurnRetrieval turn;
        turn.result_list = flat_list(result_ranks[t], k);
        turn.question_list = flat_list(question_ranks[t], k);
        turn.user_answer_available = t + 1 < n;
        record.turns.push_back(std::move(turn));
    }
    return record;
}

inline RankList rand_list(Rng& rng, int k, double p_absent) {
    std::vector<double> scores(k);
    for (double& s : scores) s = rng.uniform(-5.0, 5.0);
    std::sort(scores.begin(), scores.end(), std::greater<>());
    std::optional<int> rank;
    if (!rng.bernoulli(p_absent)) rank = rng.uniform_int(1, k);
    return RankList{std::move(scores), rank};
}

inline ConversationRecord rand_record(Rng& rng, const std::string& id, int k = 12,
                                      double p_question_absent = 0.2,
                                      double p_result_absent = 0.1) {
    ConversationRecord record;
    record.id = id;
    const int n = rng.uniform_int(1, kMaxTurns);
    for (int t = 1; t <= n; ++t) {
        TurnRetrieval turn;
        turn.result_list = rand_list(rng, k, p_result_absent);
        turn.question_list = rand_list(rng, k, p_question_absent);
        turn.user_answer_available = t < n;
        record.turns.push_back(std::move(turn));
    }
    return record;
}

// A structurally valid random trajectory (not tied to any record).
inline Trajectory rand_trajectory(Rng& rng, int k = 12) {
    Trajectory traj;
    traj.record_id = "rand";
    const bool abandoned = rng.bernoulli(0.2);
    const int asked = rng.uniform_int(abandoned ? 1 : 0, 4);
    for (int i = 0; i < asked; ++i)
        traj.question_lists.push_back(rand_list(rng, k, 0.2));
    if (abandoned) {
        traj.stop_turn = asked;
    } else {
        traj.stop_turn = asked + 1;
        traj.final_result_list = rand_list(rng, k, 0.15);
    }
    return traj;
}

// --------------------------------------------------------------------------
// Oracles

// Independent reimplementation of the shape normalization.
inline std::array<double, kShapeSize> shape_oracle(const std::vector<double>& scores) {
    const auto [lo_it, hi_it] =
        std::minmax_element(scores.begin(), scores.begin() + kShapeSize);
    std::array<double, kShapeSize> out{};
    if (*hi_it == *lo_it) return out;
    for (int i = 0; i < kShapeSize; ++i) out[i] = (scores[i] - *lo_it) / (*hi_it - *lo_it);
    return out;
}

// Recursive stop-point enumeration: the trajectory stopping here, plus all
// trajectories that ask here first.
inline void enumerate_rec(const ConversationRecord& record, int stop,
                          std::vector<RankList> prefix, std::vector<Trajectory>& out) {
    if (stop > static_cast<int>(record.turns.size())) return;
    Trajectory traj;
    traj.record_id = record.id;
    traj.stop_turn = stop;
    traj.question_lists = prefix;
    traj.final_result_list = record.turns[stop - 1].result_list;
    out.push_back(traj);
    prefix.push_back(record.turns[stop - 1].question_list);
    enumerate_rec(record, stop + 1, std::move(prefix), out);
}

inline std::vector<Trajectory> enumerate_oracle(const ConversationRecord& record) {
    std::vector<Trajectory> out;
    enumerate_rec(record, 1, {}, out);
    return out;
}

// ECRR under the per-turn binary rule: alpha = 1 iff the turn's relevant
// question sits at rank 1, else 0.
inline double binary_alpha_ecrr(const Trajectory& traj) {
    if (traj.abandoned() || !traj.final_result_list->relevant_rank) return 0.0;
    double product = 1.0;
    for (const RankList& q : traj.question_lists) {
        const double alpha = (q.relevant_rank && *q.relevant_rank == 1) ? 1.0 : 0.0;
        for (int i = 0; i < (q.relevant_rank ? *q.relevant_rank : 1); ++i) product *= alpha;
        if (!q.relevant_rank) product = 0.0;
    }
    return product / *traj.final_result_list->relevant_rank;
}

// Pointers to every parameter of a net, in the fixed block order.
inline std::vector<double*> param_ptrs(FeedForward& net) {
    std::vector<double*> ptrs;
    for (auto* block : {&net.w1, &net.b1, &net.w2, &net.b2})
        for (double& v : *block) ptrs.push_back(&v);
    return ptrs;
}

inline std::vector<double> flatten(const FeedForward& net) {
    std::vector<double> out;
    for (const auto* block : {&net.w1, &net.b1, &net.w2, &net.b2})
        out.insert(out.end(), block->begin(), block->end());
    return out;
}

// Largest relative error between an analytic gradient and central finite
// differences of `value_of` over every parameter.
template <typename F>
double max_grad_rel_error(FeedForward net, F&& value_of, const FeedForward& analytic,
                          double h = 1e-5) {
    const std::vector<double> grad_flat = flatten(analytic);
    const std::vector<double*> ptrs = param_ptrs(net);
    double worst = 0.0;
    for (std::size_t i = 0; i < ptrs.size(); ++i) {
        const double saved = *ptrs[i];
        *ptrs[i] = saved + h;
        const double up = value_of(net);
        *ptrs[i] = saved - h;
        const double down = value_of(net);
        *ptrs[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(grad_flat[i]), 1e-6});
        worst = std::max(worst, std::abs(fd - grad_flat[i]) / denom);
    }
    return worst;
}

// Smallest |pre-activation| across a batch of inputs; used to reject
// instances too close to a ReLU kink for finite differences.
template <typename Inputs>
double min_abs_preactivation(const FeedForward& net, const Inputs& xs) {
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& x : xs) {
        for (int hh = 0; hh < net.hidden; ++hh) {
            double acc = net.b1[hh];
            for (int i = 0; i < net.in; ++i)
                acc += net.w1[static_cast<std::size_t>(hh) * net.in + i] * x[i];
            lo = std::min(lo, std::abs(acc));
        }
    }
    return lo;
}

// Bit-level double equality: NaN == NaN, so histories without a validation
// column still compare equal when truly identical.
inline bool bits_equal(double a, double b) {
    std::uint64_t ua, ub;
    std::memcpy(&ua, &a, sizeof ua);
    std::memcpy(&ub, &b, sizeof ub);
    return ua == ub;
}

inline bool history_bits_equal(const TrainHistory& a, const TrainHistory& b) {
    if (a.epochs.size() != b.epochs.size()) return false;
    for (std::size_t i = 0; i < a.epochs.size(); ++i) {
        const EpochStats &x = a.epochs[i], &y = b.epochs[i];
        if (!bits_equal(x.disc_loss, y.disc_loss) ||
            !bits_equal(x.policy_objective, y.policy_objective) ||
            !bits_equal(x.val_mean_ecrr, y.val_mean_ecrr) ||
            !bits_equal(x.ask_rate, y.ask_rate))
            return false;
    }
    return true;
}

// Spearman rank correlation with average ranks for ties.
inline std::vector<double> average_ranks(const std::vector<double>& values) {
    const auto n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    const std::vector<double> rx = average_ranks(xs);
    const std::vector<double> ry = average_ranks(ys);
    const auto n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx) * (rx[i] - mx);
        vy += (ry[i] - my) * (ry[i] - my);
    }
    return cov / std::sqrt(vx * vy);
}

}  // namespace testutil
