#pragma once
// The two small feed-forward networks and their training objectives.
//
// Generator G: 21 -> hidden -> 2, ReLU, softmax head; gives the action
// distribution. Discriminator D: 12 -> hidden -> 1, ReLU, logistic head;
// scores a (state, action) pair as expert-like. Gradients are written out
// analytically (no autodiff) and checked against central finite differences
// in the test suite; optimization is plain gradient descent/ascent so every
// update stays auditable.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "convpol/core.hpp"
#include "convpol/rng.hpp"

namespace convpol {

inline constexpr int kDefaultHidden = 64;

// D outputs are clamped into this interval before any logarithm.
inline constexpr double kDiscClamp = 1e-6;

struct FeedForward {
    int in = 0;
    int hidden = 0;
    int out = 0;
    std::uint64_t init_seed = 0;
    std::vector<double> w1;  // hidden x in, row-major
    std::vector<double> b1;  // hidden
    std::vector<double> w2;  // out x hidden, row-major
    std::vector<double> b2;  // out

    bool operator==(const FeedForward&) const = default;
};

// The policy generator holds a FeedForward with in=kStateDim, out=2; the
// discriminator one with in=kActionDim, out=1.
using PolicyNet = FeedForward;
using DiscNet = FeedForward;

// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer,
// reproducible from the seed. Fill order is fixed: w1, b1, w2, b2.
inline FeedForward init_net(int in, int hidden, int out, std::uint64_t seed) {
    if (in < 1 || hidden < 1 || out < 1)
        throw std::invalid_argument("init_net: dimensions must be positive");
    FeedForward net;
    net.in = in;
    net.hidden = hidden;
    net.out = out;
    net.init_seed = seed;
    net.w1.resize(static_cast<std::size_t>(hidden) * in);
    net.b1.resize(hidden);
    net.w2.resize(static_cast<std::size_t>(out) * hidden);
    net.b2.resize(out);
    Rng rng(seed);
    const double bound1 = 1.0 / std::sqrt(static_cast<double>(in));
    const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (double& w : net.w1) w = rng.uniform(-bound1, bound1);
    for (double& w : net.b1) w = rng.uniform(-bound1, bound1);
    for (double& w : net.w2) w = rng.uniform(-bound2, bound2);
    for (double& w : net.b2) w = rng.uniform(-bound2, bound2);
    return net;
}

inline PolicyNet init_policy_net(int hidden, std::uint64_t seed) {
    return init_net(kStateDim, hidden, 2, seed);
}

inline DiscNet init_disc_net(int hidden, std::uint64_t seed) {
    return init_net(kActionDim, hidden, 1, seed);
}

inline FeedForward zeros_like(const FeedForward& net) {
    FeedForward z = net;
    std::fill(z.w1.begin(), z.w1.end(), 0.0);
    std::fill(z.b1.begin(), z.b1.end(), 0.0);
    std::fill(z.w2.begin(), z.w2.end(), 0.0);
    std::fill(z.b2.begin(), z.b2.end(), 0.0);
    return z;
}

// net += step * grad
inline void axpy_inplace(FeedForward& net, double step, const FeedForward& grad) {
    if (net.in != grad.in || net.hidden != grad.hidden || net.out != grad.out)
        throw std::invalid_argument("axpy_inplace: shape mismatch");
    for (std::size_t i = 0; i < net.w1.size(); ++i) net.w1[i] += step * grad.w1[i];
    for (std::size_t i = 0; i < net.b1.size(); ++i) net.b1[i] += step * grad.b1[i];
    for (std::size_t i = 0; i < net.w2.size(); ++i) net.w2[i] += step * grad.w2[i];
    for (std::size_t i = 0; i < net.b2.size(); ++i) net.b2[i] += step * grad.b2[i];
}

inline bool all_finite(const FeedForward& net) {
    for (const auto* block : {&net.w1, &net.b1, &net.w2, &net.b2})
        for (double v : *block)
            if (!std::isfinite(v)) return false;
    return true;
}

namespace detail {

struct ForwardCache {
    std::vector<double> hidden_pre;
    std::vector<double> hidden;
    std::vector<double> z;
};

inline void forward(const FeedForward& net, std::span<const double> x, ForwardCache& c) {
    if (static_cast<int>(x.size()) != net.in)
        throw std::invalid_argument("forward: input size " + std::to_string(x.size()) +
                                    " != " + std::to_string(net.in));
    c.hidden_pre.assign(net.hidden, 0.0);
    c.hidden.assign(net.hidden, 0.0);
    c.z.assign(net.out, 0.0);
    for (int h = 0; h < net.hidden; ++h) {
        double acc = net.b1[h];
        const double* row = &net.w1[static_cast<std::size_t>(h) * net.in];
        for (int i = 0; i < net.in; ++i) acc += row[i] * x[i];
        c.hidden_pre[h] = acc;
        c.hidden[h] = acc > 0.0 ? acc : 0.0;
    }
    for (int o = 0; o < net.out; ++o) {
        double acc = net.b2[o];
        const double* row = &net.w2[static_cast<std::size_t>(o) * net.hidden];
        for (int h = 0; h < net.hidden; ++h) acc += row[h] * c.hidden[h];
        c.z[o] = acc;
    }
}

// Accumulate scale * dL/dparams into grad, given dL/dz for one sample.
inline void backward(const FeedForward& net, std::span<const double> x, const ForwardCache& c,
                     std::span<const double> dz, double scale, FeedForward& grad) {
    for (int o = 0; o < net.out; ++o) {
        grad.b2[o] += scale * dz[o];
        double* row = &grad.w2[static_cast<std::size_t>(o) * net.hidden];
        for (int h = 0; h < net.hidden; ++h) row[h] += scale * dz[o] * c.hidden[h];
    }
    for (int h = 0; h < net.hidden; ++h) {
        if (c.hidden_pre[h] <= 0.0) continue;  // ReLU gate
        double dpre = 0.0;
        for (int o = 0; o < net.out; ++o)
            dpre += net.w2[static_cast<std::size_t>(o) * net.hidden + h] * dz[o];
        dpre *= scale;
        grad.b1[h] += dpre;
        double* row = &grad.w1[static_cast<std::size_t>(h) * net.in];
        for (int i = 0; i < net.in; ++i) row[i] += dpre * x[i];
    }
}

inline void check_finite_input(std::span<const double> x, const char* who) {
    for (double v : x)
        if (!std::isfinite(v)) throw std::invalid_argument(std::string(who) + ": non-finite input");
}

inline double safe_log(double p) { return std::log(p > 1e-300 ? p : 1e-300); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward passes

inline std::array<double, 2> softmax2(double z0, double z1) {
    const double m = z0 > z1 ? z0 : z1;
    const double e0 = std::exp(z0 - m);
    const double e1 = std::exp(z1 - m);
    const double sum = e0 + e1;
    return {e0 / sum, e1 / sum};
}

inline double entropy2(const std::array<double, 2>& p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// Raw output logits of the policy-shaped net (also the Q-values of the
// Q-learning baseline, which reuses this architecture without the softmax).
inline std::array<double, 2> policy_logits(const PolicyNet& net, const StateFeatures& s) {
    if (net.in != kStateDim || net.out != 2)
        throw std::invalid_argument("policy_logits: net is not policy-shaped");
    const auto x = s.flat();
    detail::check_finite_input(x, "policy_logits");
    detail::ForwardCache c;
    detail::forward(net, x, c);
    return {c.z[0], c.z[1]};
}

inline ActionDistribution policy_forward(const PolicyNet& net, const StateFeatures& s) {
    const auto z = policy_logits(net, s);
    return softmax2(z[0], z[1]);
}

inline double disc_forward(const DiscNet& net, const ActionFeatures& a) {
    if (net.in != kActionDim || net.out != 1)
        throw std::invalid_argument("disc_forward: net is not discriminator-shaped");
    const auto x = a.flat();
    detail::check_finite_input(x, "disc_forward");
    detail::ForwardCache c;
    detail::forward(net, x, c);
    return sigmoid(c.z[0]);
}

// ---------------------------------------------------------------------------
// Losses and gradients

// Least-squares discriminator objective:
//   sum over generated pairs of D(x)^2 + sum over expert pairs of (D(x)-1)^2.
// Returns the loss and its exact descent gradient.
inline std::pair<double, FeedForward> disc_ls_loss(const DiscNet& net,
                                                   const std::vector<ActionFeatures>& generated,
                                                   const std::vector<ActionFeatures>& expert) {
    if (generated.empty() || expert.empty())
        throw std::invalid_argument("disc_ls_loss: both pair lists must be non-empty");
    if (net.in != kActionDim || net.out != 1)
        throw std::invalid_argument("disc_ls_loss: net is not discriminator-shaped");
    FeedForward grad = zeros_like(net);
    detail::ForwardCache c;
    double loss = 0.0;
    const auto accumulate = [&](const ActionFeatures& a, double target) {
        const auto x = a.flat();
        detail::check_finite_input(x, "disc_ls_loss");
        detail::forward(net, x, c);
        const double d = sigmoid(c.z[0]);
        const double err = d - target;
        loss += err * err;
        const double dz = 2.0 * err * d * (1.0 - d);
        detail::backward(net, x, c, std::span<const double>(&dz, 1), 1.0, grad);
    };
    for (const ActionFeatures& a : generated) accumulate(a, 0.0);
    for (const ActionFeatures& a : expert) accumulate(a, 1.0);
    return {loss, std::move(grad)};
}

// One (state, action) sample weighted by its return estimate Q.
struct AdvantageSample {
    StateFeatures state;
    Action action = Action::ReturnResults;
    double q = 0.0;

    bool operator==(const AdvantageSample&) const = default;
};

// Policy-gradient objective with an entropy bonus:
//   mean over batch of log G(a|s) * Q  +  lambda * mean entropy of G(.|s).
// Returns the objective and its exact ASCENT gradient.
inline std::pair<double, FeedForward> policy_objective(const PolicyNet& net,
                                                       const std::vector<AdvantageSample>& batch,
                                                       double lambda) {
    if (batch.empty()) throw std::invalid_argument("policy_objective: empty batch");
    if (!(lambda >= 0.0)) throw std::invalid_argument("policy_objective: lambda must be >= 0");
    if (net.in != kStateDim || net.out != 2)
        throw std::invalid_argument("policy_objective: net is not policy-shaped");
    FeedForward grad = zeros_like(net);
    detail::ForwardCache c;
    double objective = 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const AdvantageSample& sample : batch) {
        if (!std::isfinite(sample.q))
            throw std::invalid_argument("policy_objective: non-finite Q value");
        const auto x = sample.state.flat();
        detail::check_finite_input(x, "policy_objective");
        detail::forward(net, x, c);
        const auto p = softmax2(c.z[0], c.z[1]);
        const double h = entropy2(p);
        const int a = action_index(sample.action);
        objective += sample.q * detail::safe_log(p[a]) + lambda * h;
        // d/dz of log p[a] is (1[a=j] - p_j); d/dz of H is -p_j (log p_j + H).
        std::array<double, 2> dz{};
        for (int j = 0; j < 2; ++j) {
            dz[j] = sample.q * ((j == a ? 1.0 : 0.0) - p[j]);
            if (p[j] > 0.0) dz[j] += lambda * (-p[j] * (std::log(p[j]) + h));
        }
        detail::backward(net, x, c, dz, inv_b, grad);
    }
    return {objective * inv_b, std::move(grad)};
}

// Mean cross-entropy of the expert action under the policy (behavior
// cloning loss). Returns the loss and its exact DESCENT gradient.
inline std::pair<double, FeedForward> policy_ce_loss(const PolicyNet& net,
                                                     const std::vector<StateAction>& batch) {
    if (batch.empty()) throw std::invalid_argument("policy_ce_loss: empty batch");
    if (net.in != kStateDim || net.out != 2)
        throw std::invalid_argument("policy_ce_loss: net is not policy-shaped");
    FeedForward grad = zeros_like(net);
    detail::ForwardCache c;
    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const StateAction& sample : batch) {
        const auto x = sample.state.flat();
        detail::check_finite_input(x, "policy_ce_loss");
        detail::forward(net, x, c);
        const auto p = softmax2(c.z[0], c.z[1]);
        const int a = action_index(sample.action);
        loss -= detail::safe_log(p[a]);
        std::array<double, 2> dz{};
        for (int j = 0; j < 2; ++j) dz[j] = p[j] - (j == a ? 1.0 : 0.0);
        detail::backward(net, x, c, dz, inv_b, grad);
    }
    return {loss * inv_b, std::move(grad)};
}

// ---------------------------------------------------------------------------
// Checkpoints: one text header line, then the parameter blocks as raw
// little-endian 64-bit floats in the fixed order w1, b1, w2, b2.

namespace detail {

inline void write_doubles_le(std::ofstream& out, const std::vector<double>& values) {
    for (double v : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        char buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
        out.write(buf, 8);
    }
}

inline void read_doubles_le(std::ifstream& in, std::vector<double>& values) {
    for (double& v : values) {
        char buf[8];
        in.read(buf, 8);
        if (!in) throw std::runtime_error("checkpoint: truncated parameter block");
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
        std::memcpy(&v, &bits, sizeof v);
    }
}

}  // namespace detail

inline void save_net(const FeedForward& net, const std::string& kind, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "convpol-net " << kind << ' ' << net.in << ' ' << net.hidden << ' ' << net.out << ' '
        << net.init_seed << '\n';
    detail::write_doubles_le(out, net.w1);
    detail::write_doubles_le(out, net.b1);
    detail::write_doubles_le(out, net.w2);
    detail::write_doubles_le(out, net.b2);
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline FeedForward load_net(const std::string& path, const std::string& expect_kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("checkpoint: missing header");
    std::istringstream hs(header);
    std::string magic, kind;
    FeedForward net;
    if (!(hs >> magic >> kind >> net.in >> net.hidden >> net.out >> net.init_seed) ||
        magic != "convpol-net")
        throw std::runtime_error("checkpoint: malformed header '" + header + "'");
    if (kind != expect_kind)
        throw std::runtime_error("checkpoint: kind '" + kind + "', expected '" + expect_kind + "'");
    if (net.in < 1 || net.hidden < 1 || net.out < 1)
        throw std::runtime_error("checkpoint: invalid dimensions in header");
    net.w1.resize(static_cast<std::size_t>(net.hidden) * net.in);
    net.b1.resize(net.hidden);
    net.w2.resize(static_cast<std::size_t>(net.out) * net.hidden);
    net.b2.resize(net.out);
    detail::read_doubles_le(in, net.w1);
    detail::read_doubles_le(in, net.b1);
    detail::read_doubles_le(in, net.w2);
    detail::read_doubles_le(in, net.b2);
    char extra;
    if (in.read(&extra, 1) && in.gcount() == 1)
        throw std::runtime_error("checkpoint: trailing bytes after parameter blocks");
    return net;
}

}  // namespace convpol
