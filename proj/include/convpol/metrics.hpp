#pragma once
// Trajectory-level evaluation.
//
// The central metric scores a whole conversation run under a cascade user:
// every asked turn multiplies in the probability that the user scans down
// to the relevant question (alpha^rank), and the run ends with the
// reciprocal rank of the final result list. Binary-alpha special cases
// recover MRR and recall over trajectories.

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "convpol/core.hpp"

namespace convpol {

// alpha^n by iterated multiplication: bit-deterministic across platforms
// and exact for the small integer exponents used here.
inline double alpha_pow(double alpha, int n) {
    double out = 1.0;
    for (int i = 0; i < n; ++i) out *= alpha;
    return out;
}

// Expected conversational reciprocal rank of one run. Zero when the run was
// abandoned, when any asked turn lacks a relevant question, or when the
// final list lacks a relevant result.
inline double ecrr(const Trajectory& traj, const CascadeParams& params) {
    validate(traj);
    validate(params);
    if (traj.abandoned()) return 0.0;
    if (!traj.final_result_list->relevant_rank) return 0.0;
    double value = 1.0 / *traj.final_result_list->relevant_rank;
    for (const RankList& q : traj.question_lists) {
        if (!q.relevant_rank) return 0.0;
        value *= alpha_pow(params.alpha, *q.relevant_rank);
    }
    return value;
}

inline double mean_ecrr(const std::vector<Trajectory>& trajs, const CascadeParams& params) {
    if (trajs.empty()) throw std::invalid_argument("mean_ecrr: empty trajectory list");
    double sum = 0.0;
    for (const Trajectory& t : trajs) sum += ecrr(t, params);
    return sum / static_cast<double>(trajs.size());
}

// ECRR under the degenerate cascade where the user continues only past a
// top-ranked relevant question: reciprocal rank of the final result if every
// asked turn had its relevant question at rank 1, else zero.
inline double trajectory_mrr(const Trajectory& traj) {
    validate(traj);
    if (traj.abandoned()) return 0.0;
    if (!traj.final_result_list->relevant_rank) return 0.0;
    for (const RankList& q : traj.question_lists)
        if (!q.relevant_rank || *q.relevant_rank != 1) return 0.0;
    return 1.0 / *traj.final_result_list->relevant_rank;
}

// 1 iff every asked turn had its relevant question at rank 1 and the final
// result sits within the top k.
inline double trajectory_recall_at_k(const Trajectory& traj, int k) {
    validate(traj);
    const std::size_t list_size = traj.final_result_list
                                      ? traj.final_result_list->scores.size()
                                      : traj.question_lists.front().scores.size();
    if (k < 1 || k > static_cast<int>(list_size))
        throw std::out_of_range("trajectory_recall_at_k: k " + std::to_string(k) +
                                " outside 1.." + std::to_string(list_size));
    if (traj.abandoned()) return 0.0;
    if (!traj.final_result_list->relevant_rank) return 0.0;
    for (const RankList& q : traj.question_lists)
        if (!q.relevant_rank || *q.relevant_rank != 1) return 0.0;
    return *traj.final_result_list->relevant_rank <= k ? 1.0 : 0.0;
}

struct MetricReport {
    double recall_at_1 = 0.0;
    double mrr = 0.0;
    std::map<double, double> ecrr_by_alpha;

    bool operator==(const MetricReport&) const = default;
};

inline MetricReport evaluate(const std::vector<Trajectory>& trajs,
                             const std::vector<double>& alphas) {
    if (trajs.empty()) throw std::invalid_argument("evaluate: empty trajectory list");
    if (alphas.empty()) throw std::invalid_argument("evaluate: empty alpha list");
    MetricReport report;
    const auto n = static_cast<double>(trajs.size());
    for (const Trajectory& t : trajs) {
        report.recall_at_1 += trajectory_recall_at_k(t, 1);
        report.mrr += trajectory_mrr(t);
    }
    report.recall_at_1 /= n;
    report.mrr /= n;
    for (double alpha : alphas) report.ecrr_by_alpha[alpha] = mean_ecrr(trajs, {alpha});
    return report;
}

// Fraction of decisions across the runs that chose to ask. Each run makes
// one decision per reached turn; a returned run's last decision is the
// return itself, an abandoned run's is its final failed ask.
inline double ask_rate(const std::vector<Trajectory>& trajs) {
    if (trajs.empty()) throw std::invalid_argument("ask_rate: empty trajectory list");
    long asks = 0, decisions = 0;
    for (const Trajectory& t : trajs) {
        validate(t);
        asks += static_cast<long>(t.question_lists.size());
        decisions += t.stop_turn;
    }
    return static_cast<double>(asks) / static_cast<double>(decisions);
}

// ---------------------------------------------------------------------------
// Report rows (one table layout shared by CSV and markdown output).
// Rows print ECRR cells in ascending alpha order, matching the sorted
// ecrr_by_alpha map, so headers sort their alphas the same way.

inline std::string format_double(double v, const char* fmt = "%.6f") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), fmt, v);
    return buf;
}

inline std::string format_alpha(double alpha) { return format_double(alpha, "%g"); }

inline std::vector<double> sorted_alphas(std::vector<double> alphas) {
    std::sort(alphas.begin(), alphas.end());
    alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());
    return alphas;
}

inline std::string report_csv_header(const std::vector<double>& alphas) {
    std::string out = "policy,R@1/100,MRR";
    for (double a : sorted_alphas(alphas)) out += ",ECRR@" + format_alpha(a);
    return out;
}

inline std::string report_csv_row(const std::string& policy, const MetricReport& r) {
    std::string out = policy + "," + format_double(r.recall_at_1) + "," + format_double(r.mrr);
    for (const auto& [alpha, value] : r.ecrr_by_alpha) {
        (void)alpha;
        out += "," + format_double(value);
    }
    return out;
}

inline std::string report_markdown_header(const std::vector<double>& alphas) {
    const std::vector<double> sorted = sorted_alphas(alphas);
    std::string out = "| policy | R@1/100 | MRR |";
    for (double a : sorted) out += " ECRR a=" + format_alpha(a) + " |";
    out += "\n|---|---|---|";
    for (std::size_t i = 0; i < sorted.size(); ++i) out += "---|";
    return out;
}

inline std::string report_markdown_row(const std::string& policy, const MetricReport& r) {
    std::string out = "| " + policy + " | " + format_double(r.recall_at_1, "%.4f") + " | " +
                      format_double(r.mrr, "%.4f") + " |";
    for (const auto& [alpha, value] : r.ecrr_by_alpha) {
        (void)alpha;
        out += " " + format_double(value, "%.4f") + " |";
    }
    return out;
}

}  // namespace convpol
