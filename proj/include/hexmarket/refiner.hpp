#pragma once

#include <algorithm>
#include <vector>

#include "hexmarket/agent.hpp"
#include "hexmarket/common.hpp"

namespace hexmarket::refiner {

// Per-cell affine weights of the optimization layer; identity at init so the
// first forward pass reproduces the actor's action exactly.
struct RefinerParams {
    std::vector<double> w;
    std::vector<double> b;

    static RefinerParams identity(std::size_t cells) {
        RefinerParams p;
        p.w.assign(cells, 1.0);
        p.b.assign(cells, 0.0);
        return p;
    }
};

// Eq. (15): a'_i = clip(w_i * a_i + b_i, 0, 1).
inline std::vector<double> affine_clip(const std::vector<double>& a, const RefinerParams& params) {
    if (params.w.size() != a.size() || params.b.size() != a.size())
        throw ShapeError("affine_clip: parameter dimensions must match the action");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::clamp(params.w[i] * a[i] + params.b[i], 0.0, 1.0);
    return out;
}

struct RefineResult {
    std::vector<double> action;
    double q_before = 0.0;
    double q_after = 0.0;
    int k_used = 0;
    bool fell_back = false;
};

// Algorithm 2: identity-initialized clipped affine layer, K gradient-ascent
// steps on Q with the frozen critic. Gradients flow only where the pre-clip
// value lies strictly inside (0, 1) (Eqs. 17-18). When fallback is enabled
// and the refined action evaluates worse than a0, a0 is returned instead
// (off by default, matching the algorithm as written).
inline RefineResult refine(const std::vector<double>& a0, const Tensor& s, const std::vector<Tensor>& memory,
                           const agent::CriticNet& critic, int k_refine, double eta, bool fallback = false) {
    if (k_refine < 0) throw DomainError("refine: K_refine must be nonnegative");
    if (!(eta > 0.0)) throw DomainError("refine: step length must be positive");
    RefineResult res;
    res.q_before = critic.q_value(s, memory, a0);
    if (k_refine == 0) {
        res.action = a0;
        res.q_after = res.q_before;
        return res;
    }
    RefinerParams params = RefinerParams::identity(a0.size());
    for (int k = 0; k < k_refine; ++k) {
        const std::vector<double> refined = affine_clip(a0, params);
        const auto [q, dq_da] = critic.q_with_action_grad(s, memory, refined);
        for (std::size_t i = 0; i < a0.size(); ++i) {
            const double pre = params.w[i] * a0[i] + params.b[i];
            if (pre > 0.0 && pre < 1.0) {
                params.w[i] += eta * dq_da[i] * a0[i];
                params.b[i] += eta * dq_da[i];
            }
        }
    }
    res.action = affine_clip(a0, params);
    res.q_after = critic.q_value(s, memory, res.action);
    res.k_used = k_refine;
    if (fallback && res.q_after < res.q_before) {
        res.action = a0;
        res.q_after = res.q_before;
        res.fell_back = true;
    }
    return res;
}

// Progressive schedule: K_refine = min(episode, K_max), episodes 1-indexed.
inline int refinement_schedule(int episode, int k_max) {
    if (episode < 0) throw DomainError("refinement_schedule: episode must be nonnegative");
    if (k_max < 0) throw DomainError("refinement_schedule: K_max must be nonnegative");
    return std::min(episode, k_max);
}

}  // namespace hexmarket::refiner
