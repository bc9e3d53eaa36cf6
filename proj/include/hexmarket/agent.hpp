#pragma once

#include <string>
#include <vector>

#include "hexmarket/checkpoint.hpp"
#include "hexmarket/hexgrid.hpp"
#include "hexmarket/neural.hpp"
#include "hexmarket/replay.hpp"

namespace hexmarket::agent {

using neural::Activation;
using neural::ParamSet;
using neural::Tape;

// Network topology: ConvLSTM over the L memory tensors, final hidden state
// concatenated with the masked flattened current state (plus the action for
// the critic), two ReLU layers, then the output head (tanh mapped to [0,1]
// for the actor, linear for the critic).
struct NetConfig {
    std::size_t rows = 0, cols = 0, cells = 0;
    std::size_t memory_len = 4;
    std::size_t conv_channels = 8;
    std::size_t dense1 = 128;
    std::size_t dense2 = 64;
    std::size_t obs_channels = hexgrid::kObservationChannels;
    std::size_t mem_channels = hexgrid::kSnapshotChannels;

    std::size_t trunk_inputs(bool with_action) const {
        return (conv_channels + obs_channels) * rows * cols + (with_action ? cells : 0);
    }
};

namespace detail {

inline ParamSet init_params(const NetConfig& cfg, bool critic, Rng& rng) {
    ParamSet p;
    const std::size_t gates = 4 * cfg.conv_channels;
    p.add("conv.wx", neural::init_glorot({gates, cfg.mem_channels, 3, 3}, cfg.mem_channels * 9, cfg.conv_channels * 9, rng));
    p.add("conv.wh", neural::init_glorot({gates, cfg.conv_channels, 3, 3}, cfg.conv_channels * 9, cfg.conv_channels * 9, rng));
    p.add("conv.b", Tensor({gates}));
    const std::size_t flat = cfg.trunk_inputs(critic);
    p.add("fc1.w", neural::init_he_normal({flat, cfg.dense1}, flat, rng));
    p.add("fc1.b", Tensor({cfg.dense1}));
    p.add("fc2.w", neural::init_he_normal({cfg.dense1, cfg.dense2}, cfg.dense1, rng));
    p.add("fc2.b", Tensor({cfg.dense2}));
    if (critic) {
        p.add("head.w", neural::init_uniform_bounded({cfg.dense2, 1}, rng));
        p.add("head.b", Tensor({1}));
    } else {
        p.add("head.w", neural::init_glorot({cfg.dense2, cfg.cells}, cfg.dense2, cfg.cells, rng));
        p.add("head.b", Tensor({cfg.cells}));
    }
    return p;
}

struct NetVars {
    Tape::Var out = -1;
    std::vector<Tape::Var> params;  // aligned with ParamSet entry order
};

inline void check_inputs(const NetConfig& cfg, const Tensor& s, const std::vector<Tensor>& memory) {
    if (s.shape != std::vector<std::size_t>{cfg.obs_channels, cfg.rows, cfg.cols})
        throw ShapeError("agent: observation tensor shape mismatch");
    if (memory.size() != cfg.memory_len) throw ShapeError("agent: memory stack must hold memory_len tensors");
    for (const auto& m : memory)
        if (m.shape != std::vector<std::size_t>{cfg.mem_channels, cfg.rows, cfg.cols})
            throw ShapeError("agent: memory tensor shape mismatch");
    if (!s.all_finite()) throw NumericError("agent: non-finite observation");
    for (const auto& m : memory)
        if (!m.all_finite()) throw NumericError("agent: non-finite memory tensor");
}

// Shared trunk; `action` < 0 means "actor" (no action input, tanh head
// mapped to [0,1]), otherwise the critic head reads the given action var.
inline NetVars forward(Tape& tape, const NetConfig& cfg, const Tensor& mask, const ParamSet& params,
                       Tape::Var s_var, const std::vector<Tape::Var>& mem_vars, Tape::Var action,
                       const Tensor& zero_state) {
    NetVars nv;
    nv.params.reserve(params.size());
    for (const auto& e : params.entries) nv.params.push_back(tape.leaf(e.value));
    const neural::ConvLstmParamVars conv{nv.params[0], nv.params[1], nv.params[2]};
    neural::ConvLstmVars st{tape.leaf(zero_state), tape.leaf(zero_state)};
    for (Tape::Var x : mem_vars) st = neural::convlstm_step(tape, x, st, conv, mask);
    std::vector<Tape::Var> pieces{st.hidden, tape.mask_mul(s_var, mask)};
    if (action >= 0) pieces.push_back(action);
    const Tape::Var flat = tape.concat(pieces);
    const Tape::Var h1 = neural::dense(tape, flat, nv.params[3], nv.params[4], Activation::Relu);
    const Tape::Var h2 = neural::dense(tape, h1, nv.params[5], nv.params[6], Activation::Relu);
    if (action >= 0) {
        nv.out = neural::dense(tape, h2, nv.params[7], nv.params[8], Activation::Linear);
    } else {
        const Tape::Var logits = neural::dense(tape, h2, nv.params[7], nv.params[8], Activation::Tanh);
        nv.out = tape.affine_scalar(logits, 0.5, 0.5);  // [-1,1] -> [0,1]
    }
    return nv;
}

}  // namespace detail

class ActorNet {
public:
    ActorNet(NetConfig cfg, Tensor mask, Rng& rng)
        : cfg_(cfg), mask_(std::move(mask)), zero_state_({cfg.conv_channels, cfg.rows, cfg.cols}),
          params_(detail::init_params(cfg, false, rng)) {}

    const NetConfig& config() const { return cfg_; }
    const Tensor& mask() const { return mask_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    detail::NetVars forward(Tape& tape, const ParamSet& params, Tape::Var s_var,
                            const std::vector<Tape::Var>& mem_vars) const {
        return detail::forward(tape, cfg_, mask_, params, s_var, mem_vars, -1, zero_state_);
    }

    // Deterministic policy output, every component in [0, 1].
    std::vector<double> act(const Tensor& s, const std::vector<Tensor>& memory) const {
        return act_with(params_, s, memory);
    }

    std::vector<double> act_with(const ParamSet& params, const Tensor& s, const std::vector<Tensor>& memory) const {
        detail::check_inputs(cfg_, s, memory);
        Tape tape;
        const Tape::Var s_var = tape.leaf(s);
        std::vector<Tape::Var> mem_vars;
        mem_vars.reserve(memory.size());
        for (const auto& m : memory) mem_vars.push_back(tape.leaf(m));
        const auto nv = forward(tape, params, s_var, mem_vars);
        return tape.value(nv.out).v;
    }

private:
    NetConfig cfg_;
    Tensor mask_;
    Tensor zero_state_;
    ParamSet params_;
};

class CriticNet {
public:
    CriticNet(NetConfig cfg, Tensor mask, Rng& rng)
        : cfg_(cfg), mask_(std::move(mask)), zero_state_({cfg.conv_channels, cfg.rows, cfg.cols}),
          params_(detail::init_params(cfg, true, rng)) {}

    const NetConfig& config() const { return cfg_; }
    const Tensor& mask() const { return mask_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    detail::NetVars forward(Tape& tape, const ParamSet& params, Tape::Var s_var, const std::vector<Tape::Var>& mem_vars,
                            Tape::Var action_var) const {
        return detail::forward(tape, cfg_, mask_, params, s_var, mem_vars, action_var, zero_state_);
    }

    double q_value(const Tensor& s, const std::vector<Tensor>& memory, const std::vector<double>& action) const {
        return q_with(params_, s, memory, action);
    }

    double q_with(const ParamSet& params, const Tensor& s, const std::vector<Tensor>& memory,
                  const std::vector<double>& action) const {
        Tensor a = action_tensor(action);
        Tape tape;
        const auto nv = build(tape, params, s, memory, a);
        const double q = tape.value(nv.out).v[0];
        if (!std::isfinite(q)) throw NumericError("critic: non-finite Q value");
        return q;
    }

    // Q(s, h, a) plus dQ/da, the gradient the refiner consumes.
    std::pair<double, std::vector<double>> q_with_action_grad(const Tensor& s, const std::vector<Tensor>& memory,
                                                              const std::vector<double>& action) const {
        Tensor a = action_tensor(action);
        Tape tape;
        Tape::Var a_var = -1;
        const auto nv = build(tape, params_, s, memory, a, &a_var);
        const double q = tape.value(nv.out).v[0];
        if (!std::isfinite(q)) throw NumericError("critic: non-finite Q value");
        tape.backward(nv.out, 1.0);
        return {q, tape.grad(a_var).v};
    }

    Tensor action_tensor(const std::vector<double>& action) const {
        if (action.size() != cfg_.cells) throw ShapeError("critic: action must have one component per cell");
        for (double a : action)
            if (!(a >= 0.0 && a <= 1.0)) throw DomainError("critic: action components must lie in [0, 1]");
        return Tensor({cfg_.cells}, action);
    }

    detail::NetVars build(Tape& tape, const ParamSet& params, const Tensor& s, const std::vector<Tensor>& memory,
                          const Tensor& action, Tape::Var* action_var_out = nullptr) const {
        detail::check_inputs(cfg_, s, memory);
        const Tape::Var s_var = tape.leaf(s);
        std::vector<Tape::Var> mem_vars;
        mem_vars.reserve(memory.size());
        for (const auto& m : memory) mem_vars.push_back(tape.leaf(m));
        const Tape::Var a_var = tape.leaf(action);
        if (action_var_out) *action_var_out = a_var;
        return forward(tape, params, s_var, mem_vars, a_var);
    }

private:
    NetConfig cfg_;
    Tensor mask_;
    Tensor zero_state_;
    ParamSet params_;
};

// Slowly tracking copies of both networks, initialized as exact copies.
struct TargetPair {
    ParamSet actor;
    ParamSet critic;

    TargetPair(const ActorNet& a, const CriticNet& c)
        : actor(neural::clone_values(a.params())), critic(neural::clone_values(c.params())) {}
};

using Batch = std::vector<const replay::Transition*>;

// Eq. (10): y = r + gamma * Q'(s', h', mu'(s', h')) for non-terminal, else r.
inline std::vector<double> td_targets(const Batch& batch, const ActorNet& actor, const CriticNet& critic,
                                      const TargetPair& targets, double gamma) {
    std::vector<double> y;
    y.reserve(batch.size());
    for (const auto* tr : batch) {
        if (tr->terminal) {
            y.push_back(tr->reward);
        } else {
            const auto a = actor.act_with(targets.actor, tr->next_s, tr->next_memory);
            y.push_back(tr->reward + gamma * critic.q_with(targets.critic, tr->next_s, tr->next_memory, a));
        }
    }
    return y;
}

// Current-critic TD errors delta_j = y_j - Q(s_j, h_j, a_j).
inline std::vector<double> td_errors(const CriticNet& critic, const Batch& batch, const std::vector<double>& y) {
    std::vector<double> d;
    d.reserve(batch.size());
    for (std::size_t j = 0; j < batch.size(); ++j)
        d.push_back(y[j] - critic.q_value(batch[j]->s, batch[j]->memory, batch[j]->action));
    return d;
}

// One Adam step on the importance-weighted loss (Eq. 14); returns the
// pre-step loss (1/N) sum_j w_j delta_j^2.
inline double critic_update(CriticNet& critic, const Batch& batch, const std::vector<double>& y,
                            const std::vector<double>& weights, double lr) {
    if (batch.empty() || batch.size() != y.size() || batch.size() != weights.size())
        throw ShapeError("critic_update: batch, targets, and weights must align");
    const double n = static_cast<double>(batch.size());
    std::vector<Tensor> grads;
    for (const auto& e : critic.params().entries) grads.emplace_back(Tensor(e.value.shape));
    double loss = 0.0;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        const auto* tr = batch[j];
        Tensor a = critic.action_tensor(tr->action);
        Tape tape;
        const auto nv = critic.build(tape, critic.params(), tr->s, tr->memory, a);
        const double q = tape.value(nv.out).v[0];
        const double delta = y[j] - q;
        loss += weights[j] * delta * delta / n;
        // dL/dq = -2 w_j delta / N
        tape.backward(nv.out, -2.0 * weights[j] * delta / n);
        for (std::size_t k = 0; k < grads.size(); ++k) {
            const Tensor& g = tape.grad(nv.params[k]);
            for (std::size_t i = 0; i < g.numel(); ++i) grads[k].v[i] += g.v[i];
        }
    }
    neural::adam_step(critic.params(), grads, lr);
    return loss;
}

// Deterministic policy gradient (Eq. 11): ascend J = (1/N) sum_j Q(s_j, h_j,
// mu(s_j, h_j)) with the critic frozen. Returns the L2 norm of the policy
// gradient over all actor parameters.
inline double actor_update(ActorNet& actor, const CriticNet& critic, const Batch& batch, double lr) {
    if (batch.empty()) throw ShapeError("actor_update: empty batch");
    const double n = static_cast<double>(batch.size());
    std::vector<Tensor> grads;
    for (const auto& e : actor.params().entries) grads.emplace_back(Tensor(e.value.shape));
    for (const auto* tr : batch) {
        detail::check_inputs(actor.config(), tr->s, tr->memory);
        Tape tape;
        const Tape::Var s_var = tape.leaf(tr->s);
        std::vector<Tape::Var> mem_vars;
        mem_vars.reserve(tr->memory.size());
        for (const auto& m : tr->memory) mem_vars.push_back(tape.leaf(m));
        const auto actor_nv = actor.forward(tape, actor.params(), s_var, mem_vars);
        const auto critic_nv = critic.forward(tape, critic.params(), s_var, mem_vars, actor_nv.out);
        tape.backward(critic_nv.out, 1.0 / n);
        for (std::size_t k = 0; k < grads.size(); ++k) {
            const Tensor& g = tape.grad(actor_nv.params[k]);
            for (std::size_t i = 0; i < g.numel(); ++i) grads[k].v[i] += g.v[i];
        }
    }
    double norm_sq = 0.0;
    for (auto& g : grads) {
        for (double& v : g.v) {
            norm_sq += v * v;
            v = -v;  // Adam minimizes; descend on -J
        }
    }
    neural::adam_step(actor.params(), grads, lr);
    return std::sqrt(norm_sq);
}

inline void soft_update_targets(TargetPair& targets, const ActorNet& actor, const CriticNet& critic, double tau) {
    neural::soft_update(targets.actor, actor.params(), tau);
    neural::soft_update(targets.critic, critic.params(), tau);
}

// ---- Checkpointing of all four networks ----

inline void save_networks(const std::string& path, const ActorNet& actor, const CriticNet& critic,
                          const TargetPair& targets) {
    std::vector<std::pair<std::string, Tensor>> blobs;
    const auto put = [&](const std::string& prefix, const ParamSet& p) {
        for (const auto& e : p.entries) blobs.emplace_back(prefix + "." + e.name, e.value);
    };
    put("actor", actor.params());
    put("critic", critic.params());
    put("target_actor", targets.actor);
    put("target_critic", targets.critic);
    checkpoint::save(path, blobs);
}

inline void load_networks(const std::string& path, ActorNet& actor, CriticNet& critic, TargetPair& targets) {
    const auto blobs = checkpoint::load(path);
    const auto fill = [&](const std::string& prefix, ParamSet& p) {
        for (auto& e : p.entries) {
            bool found = false;
            for (const auto& [name, t] : blobs) {
                if (name == prefix + "." + e.name) {
                    if (t.shape != e.value.shape) throw ConfigError("checkpoint: shape mismatch for " + name);
                    e.value = t;
                    found = true;
                    break;
                }
            }
            if (!found) throw ConfigError("checkpoint: missing tensor " + prefix + "." + e.name);
        }
    };
    fill("actor", actor.params());
    fill("critic", critic.params());
    fill("target_actor", targets.actor);
    fill("target_critic", targets.critic);
}

}  // namespace hexmarket::agent
