#pragma once
// Batch experiment driver shared by the CLI and the acceptance suite.
//
// Owns the experiment config file, the deterministic train/val/test split,
// manifests, and the per-command pipelines (gen / experts / train / eval /
// compare). Every pipeline is a thin orchestration of library calls: each
// table cell equals the value of the corresponding library operation, and
// everything is regenerable from config + seed.

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "convpol/baselines.hpp"
#include "convpol/data.hpp"
#include "convpol/expert.hpp"
#include "convpol/lsgail.hpp"
#include "convpol/metrics.hpp"

namespace convpol {

inline constexpr const char* kVersion = "0.1.0";

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    std::string dataset;  // optional explicit dataset path; empty = <out>/dataset.jsonl
    std::vector<double> alphas{0.3, 0.5, 0.7, 0.9};
    std::vector<double> rcsq_rewards{-0.1, 0.11, 0.3, 0.5, 0.9};
    double ctxpred_alpha = 0.5;
    std::array<double, 3> split{0.8, 0.1, 0.1};
    GenParams gen;
    TrainConfig lsgail{.lr = 0.01, .epochs = 1500, .batch_conversations = 64};
    RcsqConfig rcsq;
    CtxPredConfig ctxpred;
};

// ---------------------------------------------------------------------------
// Config file handling. Strict: unknown keys and wrong types are errors
// that name the offending field.

namespace detail {

inline void check_known_keys(const nlohmann::json& j, const std::string& prefix,
                             std::initializer_list<const char*> known) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const char* k : known)
            if (key == k) ok = true;
        if (!ok)
            throw std::invalid_argument("config: unknown field '" + prefix + key + "'");
    }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, const std::string& prefix, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw std::invalid_argument("config: field '" + prefix + key + "' has the wrong type");
    }
}

}  // namespace detail

inline void validate(const ExperimentConfig& cfg) {
    double ratio_sum = 0.0;
    for (double r : cfg.split) {
        if (r < 0.0) throw std::invalid_argument("config: split ratios must be >= 0");
        ratio_sum += r;
    }
    if (std::abs(ratio_sum - 1.0) > 1e-9)
        throw std::invalid_argument("config: split ratios must sum to 1");
    if (cfg.alphas.empty()) throw std::invalid_argument("config: alphas must be non-empty");
    for (double a : cfg.alphas)
        if (!(a >= 0.0 && a <= 1.0))
            throw std::invalid_argument("config: alphas entries must lie in [0, 1]");
    if (!(cfg.ctxpred_alpha >= 0.0 && cfg.ctxpred_alpha <= 1.0))
        throw std::invalid_argument("config: ctxpred_alpha must lie in [0, 1]");
    if (cfg.out_dir.empty()) throw std::invalid_argument("config: out must be non-empty");
    validate(cfg.gen);
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    detail::check_known_keys(j, "", {"seed", "out", "dataset", "alphas", "rcsq_rewards",
                                     "ctxpred_alpha", "split", "gen", "lsgail", "rcsq",
                                     "ctxpred"});
    detail::read_field(j, "seed", "", cfg.seed);
    detail::read_field(j, "out", "", cfg.out_dir);
    detail::read_field(j, "dataset", "", cfg.dataset);
    detail::read_field(j, "alphas", "", cfg.alphas);
    detail::read_field(j, "rcsq_rewards", "", cfg.rcsq_rewards);
    detail::read_field(j, "ctxpred_alpha", "", cfg.ctxpred_alpha);
    if (j.contains("split")) {
        std::vector<double> ratios;
        detail::read_field(j, "split", "", ratios);
        if (ratios.size() != 3)
            throw std::invalid_argument("config: field 'split' must have 3 ratios");
        std::copy(ratios.begin(), ratios.end(), cfg.split.begin());
    }
    if (j.contains("gen")) {
        const auto& g = j.at("gen");
        detail::check_known_keys(g, "gen.",
                                 {"n_conversations", "turns_min", "turns_max", "k",
                                  "quality_drift", "p_question_absent", "noise_scale"});
        detail::read_field(g, "n_conversations", "gen.", cfg.gen.n_conversations);
        detail::read_field(g, "turns_min", "gen.", cfg.gen.turns_min);
        detail::read_field(g, "turns_max", "gen.", cfg.gen.turns_max);
        detail::read_field(g, "k", "gen.", cfg.gen.k);
        detail::read_field(g, "quality_drift", "gen.", cfg.gen.quality_drift);
        detail::read_field(g, "p_question_absent", "gen.", cfg.gen.p_question_absent);
        detail::read_field(g, "noise_scale", "gen.", cfg.gen.noise_scale);
    }
    if (j.contains("lsgail")) {
        const auto& t = j.at("lsgail");
        detail::check_known_keys(t, "lsgail.",
                                 {"lr", "lambda", "disc_steps_per_gen_step", "epochs",
                                  "batch_conversations", "rollouts_per_conversation", "hidden"});
        detail::read_field(t, "lr", "lsgail.", cfg.lsgail.lr);
        detail::read_field(t, "lambda", "lsgail.", cfg.lsgail.lambda);
        detail::read_field(t, "disc_steps_per_gen_step", "lsgail.",
                           cfg.lsgail.disc_steps_per_gen_step);
        detail::read_field(t, "epochs", "lsgail.", cfg.lsgail.epochs);
        detail::read_field(t, "batch_conversations", "lsgail.", cfg.lsgail.batch_conversations);
        detail::read_field(t, "rollouts_per_conversation", "lsgail.",
                           cfg.lsgail.rollouts_per_conversation);
        detail::read_field(t, "hidden", "lsgail.", cfg.lsgail.hidden);
    }
    if (j.contains("rcsq")) {
        const auto& r = j.at("rcsq");
        detail::check_known_keys(
            r, "rcsq.", {"lr", "epochs", "hidden", "gamma", "eps_start", "eps_end"});
        detail::read_field(r, "lr", "rcsq.", cfg.rcsq.lr);
        detail::read_field(r, "epochs", "rcsq.", cfg.rcsq.epochs);
        detail::read_field(r, "hidden", "rcsq.", cfg.rcsq.hidden);
        detail::read_field(r, "gamma", "rcsq.", cfg.rcsq.gamma);
        detail::read_field(r, "eps_start", "rcsq.", cfg.rcsq.eps_start);
        detail::read_field(r, "eps_end", "rcsq.", cfg.rcsq.eps_end);
    }
    if (j.contains("ctxpred")) {
        const auto& c = j.at("ctxpred");
        detail::check_known_keys(c, "ctxpred.", {"lr", "epochs", "hidden"});
        detail::read_field(c, "lr", "ctxpred.", cfg.ctxpred.lr);
        detail::read_field(c, "epochs", "ctxpred.", cfg.ctxpred.epochs);
        detail::read_field(c, "hidden", "ctxpred.", cfg.ctxpred.hidden);
    }
    validate(cfg);
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config: invalid JSON in '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

// Canonical (resolved, sorted-key) form of the config; hashed into manifests.
inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["out"] = cfg.out_dir;
    j["dataset"] = cfg.dataset;
    j["alphas"] = cfg.alphas;
    j["rcsq_rewards"] = cfg.rcsq_rewards;
    j["ctxpred_alpha"] = cfg.ctxpred_alpha;
    j["split"] = cfg.split;
    j["gen"] = {{"n_conversations", cfg.gen.n_conversations},
                {"turns_min", cfg.gen.turns_min},
                {"turns_max", cfg.gen.turns_max},
                {"k", cfg.gen.k},
                {"quality_drift", cfg.gen.quality_drift},
                {"p_question_absent", cfg.gen.p_question_absent},
                {"noise_scale", cfg.gen.noise_scale}};
    j["lsgail"] = {{"lr", cfg.lsgail.lr},
                   {"lambda", cfg.lsgail.lambda},
                   {"disc_steps_per_gen_step", cfg.lsgail.disc_steps_per_gen_step},
                   {"epochs", cfg.lsgail.epochs},
                   {"batch_conversations", cfg.lsgail.batch_conversations},
                   {"rollouts_per_conversation", cfg.lsgail.rollouts_per_conversation},
                   {"hidden", cfg.lsgail.hidden}};
    j["rcsq"] = {{"lr", cfg.rcsq.lr},
                 {"epochs", cfg.rcsq.epochs},
                 {"hidden", cfg.rcsq.hidden},
                 {"gamma", cfg.rcsq.gamma},
                 {"eps_start", cfg.rcsq.eps_start},
                 {"eps_end", cfg.rcsq.eps_end}};
    j["ctxpred"] = {{"lr", cfg.ctxpred.lr},
                    {"epochs", cfg.ctxpred.epochs},
                    {"hidden", cfg.ctxpred.hidden}};
    return j;
}

inline std::string config_hash(const ExperimentConfig& cfg) {
    const std::string dump = config_to_json(cfg).dump();
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Output directory: exclusive lock + manifests

class OutputLock {
  public:
    explicit OutputLock(const std::string& out_dir) {
        std::filesystem::create_directories(out_dir);
        const std::string lock_path = out_dir + "/.lock";
        fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ < 0) throw std::runtime_error("cannot open lock file '" + lock_path + "'");
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            fd_ = -1;
            throw std::runtime_error("output directory '" + out_dir +
                                     "' is locked by another run");
        }
    }
    ~OutputLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

  private:
    int fd_ = -1;
};

inline void write_manifest(const ExperimentConfig& cfg, const std::string& command,
                           const std::vector<std::string>& outputs) {
    nlohmann::json j;
    j["command"] = command;
    j["config_hash"] = config_hash(cfg);
    j["config"] = config_to_json(cfg);
    j["seed"] = cfg.seed;
    j["version"] = kVersion;
    j["outputs"] = outputs;
    const std::string path = cfg.out_dir + "/manifest_" + command + ".json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Dataset plumbing and the deterministic split

inline std::string dataset_path(const ExperimentConfig& cfg) {
    return cfg.dataset.empty() ? cfg.out_dir + "/dataset.jsonl" : cfg.dataset;
}

struct SplitSets {
    std::vector<ConversationRecord> train, val, test;
};

inline SplitSets split_records(const std::vector<ConversationRecord>& records,
                               const std::array<double, 3>& ratios, std::uint64_t seed) {
    std::vector<int> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, 0x5eedu));
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
        std::swap(order[i], order[rng.uniform_int(0, i)]);
    const auto n = static_cast<long>(records.size());
    const long n_train = static_cast<long>(std::floor(ratios[0] * n));
    const long n_val = static_cast<long>(std::floor(ratios[1] * n));
    SplitSets sets;
    for (long i = 0; i < n; ++i) {
        const ConversationRecord& r = records[order[i]];
        if (i < n_train)
            sets.train.push_back(r);
        else if (i < n_train + n_val)
            sets.val.push_back(r);
        else
            sets.test.push_back(r);
    }
    return sets;
}

inline std::vector<ExpertLabel> derive_labels(const std::vector<ConversationRecord>& records,
                                              double alpha) {
    std::vector<ExpertLabel> labels;
    labels.reserve(records.size());
    for (const ConversationRecord& record : records)
        labels.push_back(select_expert(record, {alpha}));
    return labels;
}

// ---------------------------------------------------------------------------
// Command pipelines

inline std::string run_gen(const ExperimentConfig& cfg) {
    GenParams params = cfg.gen;
    params.seed = cfg.seed;
    const std::string path = dataset_path(cfg);
    save_records(generate_synthetic(params), path);
    write_manifest(cfg, "gen", {path});
    return path;
}

inline std::vector<ConversationRecord> load_dataset(const ExperimentConfig& cfg,
                                                    bool generate_if_missing = false) {
    const std::string path = dataset_path(cfg);
    if (!std::filesystem::exists(path)) {
        if (!generate_if_missing)
            throw std::runtime_error("dataset '" + path + "' not found; run `gen` first");
        GenParams params = cfg.gen;
        params.seed = cfg.seed;
        save_records(generate_synthetic(params), path);
    }
    return load_run_file(path);
}

inline std::string run_experts(const ExperimentConfig& cfg, double alpha) {
    const auto records = load_dataset(cfg);
    const std::string path = cfg.out_dir + "/experts_a" + format_alpha(alpha) + ".jsonl";
    save_expert_labels(derive_labels(records, alpha), path);
    write_manifest(cfg, "experts", {path});
    return path;
}

inline std::string lsgail_ckpt_path(const ExperimentConfig& cfg, double alpha,
                                    const char* which) {
    return cfg.out_dir + "/lsgail_a" + format_alpha(alpha) + "_" + which + ".ckpt";
}

inline std::string ctxpred_ckpt_path(const ExperimentConfig& cfg, double alpha) {
    return cfg.out_dir + "/ctxpred_a" + format_alpha(alpha) + ".ckpt";
}

inline std::string rcsq_ckpt_path(const ExperimentConfig& cfg, double r) {
    return cfg.out_dir + "/rcsq_r" + format_alpha(r) + ".ckpt";
}

inline TrainResult train_lsgail_on(const ExperimentConfig& cfg, double alpha,
                                   const std::vector<ConversationRecord>& train,
                                   const std::vector<ConversationRecord>& val,
                                   const std::vector<ExpertLabel>& labels = {}) {
    TrainConfig tc = cfg.lsgail;
    tc.alpha = alpha;
    tc.seed = derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(alpha * 1000.0));
    return train_with_labels(tc, train, labels.empty() ? derive_labels(train, alpha) : labels,
                             val);
}

inline PolicyNet train_ctxpred_on(const ExperimentConfig& cfg, double alpha,
                                  const std::vector<ConversationRecord>& train) {
    CtxPredConfig cc = cfg.ctxpred;
    cc.seed = derive_seed(cfg.seed, 200);
    return train_ctxpred(build_expert_dataset(train, {alpha}), cc);
}

inline PolicyNet train_rcsq_on(const ExperimentConfig& cfg, double r,
                               const std::vector<ConversationRecord>& train) {
    RcsqConfig rc = rcsq_config_for_reward(r, cfg.rcsq);
    rc.seed = derive_seed(cfg.seed, 300 + static_cast<std::uint64_t>((r + 10.0) * 1000.0));
    return train_rcsq(rc, train);
}

inline void run_train(const ExperimentConfig& cfg, const std::string& algo, double alpha,
                      double r) {
    const SplitSets sets = split_records(load_dataset(cfg, true), cfg.split, cfg.seed);
    std::vector<std::string> outputs;
    if (algo == "lsgail") {
        // reuse labels persisted by `experts` when present (matched by id;
        // alpha mismatches are rejected downstream), else derive them here
        const std::string labels_path =
            cfg.out_dir + "/experts_a" + format_alpha(alpha) + ".jsonl";
        std::vector<ExpertLabel> labels;
        if (std::filesystem::exists(labels_path)) labels = load_expert_labels(labels_path);
        const TrainResult result = train_lsgail_on(cfg, alpha, sets.train, sets.val, labels);
        const std::string policy_path = lsgail_ckpt_path(cfg, alpha, "policy");
        const std::string disc_path = lsgail_ckpt_path(cfg, alpha, "disc");
        const std::string history_path =
            cfg.out_dir + "/lsgail_a" + format_alpha(alpha) + "_history.csv";
        save_net(result.policy, "policy", policy_path);
        save_net(result.disc, "disc", disc_path);
        save_history(result.history, history_path);
        outputs = {policy_path, disc_path, history_path};
    } else if (algo == "ctxpred") {
        const std::string path = ctxpred_ckpt_path(cfg, alpha);
        save_net(train_ctxpred_on(cfg, alpha, sets.train), "policy", path);
        outputs = {path};
    } else if (algo == "rcsq") {
        const std::string path = rcsq_ckpt_path(cfg, r);
        save_net(train_rcsq_on(cfg, r, sets.train), "policy", path);
        outputs = {path};
    } else {
        throw std::invalid_argument("unknown algo '" + algo + "' (lsgail|ctxpred|rcsq)");
    }
    write_manifest(cfg, "train", outputs);
}

// Metric row of one named policy on the test split. Trained policies are
// loaded from their checkpoints.
inline MetricReport eval_policy(const ExperimentConfig& cfg, const std::string& name,
                                const std::vector<double>& alphas,
                                const std::vector<ConversationRecord>& test, double alpha,
                                double r) {
    if (name == "oracle") return oracle_report(test, alphas);
    Policy policy;
    if (name == "q0a")
        policy = fixed_policy(0);
    else if (name == "q1a")
        policy = fixed_policy(1);
    else if (name == "q2a")
        policy = fixed_policy(2);
    else if (name == "ctxpred")
        policy = make_net_policy(load_net(ctxpred_ckpt_path(cfg, alpha), "policy"));
    else if (name == "lsgail")
        policy = make_net_policy(load_net(lsgail_ckpt_path(cfg, alpha, "policy"), "policy"));
    else if (name == "rcsq")
        policy = greedy_q_policy(load_net(rcsq_ckpt_path(cfg, r), "policy"));
    else
        throw std::invalid_argument("unknown policy '" + name +
                                    "' (q0a|q1a|q2a|ctxpred|rcsq|lsgail|oracle)");
    return evaluate(greedy_trajectories(policy, test), alphas);
}

inline std::string run_eval(const ExperimentConfig& cfg, const std::string& name,
                            const std::vector<double>& alphas, double alpha, double r) {
    const SplitSets sets = split_records(load_dataset(cfg), cfg.split, cfg.seed);
    const MetricReport report = eval_policy(cfg, name, alphas, sets.test, alpha, r);
    const std::string path = cfg.out_dir + "/eval_" + name + ".csv";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << report_csv_header(alphas) << '\n' << report_csv_row(name, report) << '\n';
    write_manifest(cfg, "eval", {path});
    return path;
}

// Full comparison grid: fixed policies, behavior cloning, the RCSQ reward
// sweep, LSGAIL per alpha, and the oracle row.
inline std::string run_compare(const ExperimentConfig& cfg) {
    const SplitSets sets = split_records(load_dataset(cfg, true), cfg.split, cfg.seed);
    const std::vector<double>& alphas = cfg.alphas;

    std::vector<std::pair<std::string, MetricReport>> rows;
    for (int n = 0; n <= 2; ++n)
        rows.emplace_back("Q" + std::to_string(n) + "A",
                          evaluate(greedy_trajectories(fixed_policy(n), sets.test), alphas));

    {
        const PolicyNet net = train_ctxpred_on(cfg, cfg.ctxpred_alpha, sets.train);
        save_net(net, "policy", ctxpred_ckpt_path(cfg, cfg.ctxpred_alpha));
        rows.emplace_back("CtxPred",
                          evaluate(greedy_trajectories(make_net_policy(net), sets.test), alphas));
    }
    for (double r : cfg.rcsq_rewards) {
        const PolicyNet qnet = train_rcsq_on(cfg, r, sets.train);
        save_net(qnet, "policy", rcsq_ckpt_path(cfg, r));
        rows.emplace_back("RCSQ r=" + format_alpha(r),
                          evaluate(greedy_trajectories(greedy_q_policy(qnet), sets.test), alphas));
    }
    for (double alpha : alphas) {
        const TrainResult result = train_lsgail_on(cfg, alpha, sets.train, sets.val);
        save_net(result.policy, "policy", lsgail_ckpt_path(cfg, alpha, "policy"));
        save_net(result.disc, "disc", lsgail_ckpt_path(cfg, alpha, "disc"));
        save_history(result.history,
                     cfg.out_dir + "/lsgail_a" + format_alpha(alpha) + "_history.csv");
        rows.emplace_back(
            "LSGAIL alpha=" + format_alpha(alpha),
            evaluate(greedy_trajectories(make_net_policy(result.policy), sets.test), alphas));
    }
    rows.emplace_back("Oracle", oracle_report(sets.test, alphas));

    const std::string csv_path = cfg.out_dir + "/compare.csv";
    const std::string md_path = cfg.out_dir + "/compare.md";
    std::ofstream csv(csv_path, std::ios::binary);
    std::ofstream md(md_path, std::ios::binary);
    if (!csv || !md) throw std::runtime_error("cannot open compare outputs for writing");
    csv << report_csv_header(alphas) << '\n';
    md << report_markdown_header(alphas) << '\n';
    for (const auto& [name, report] : rows) {
        csv << report_csv_row(name, report) << '\n';
        md << report_markdown_row(name, report) << '\n';
    }
    csv.close();
    md.close();
    write_manifest(cfg, "compare", {csv_path, md_path});
    return csv_path;
}

}  // namespace convpol
