#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hexmarket/autodiff.hpp"
#include "hexmarket/rng.hpp"
#include "hexmarket/tensor.hpp"

namespace hexmarket::neural {

// ---- Initializers (He / Glorot / bounded uniform) ----

inline Tensor init_he_normal(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    if (fan_in == 0) throw ConfigError("he_normal: fan_in must be positive");
    Tensor t(std::move(shape));
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : t.v) v = rng.normal(0.0, sd);
    return t;
}

inline Tensor init_glorot(std::vector<std::size_t> shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    if (fan_in + fan_out == 0) throw ConfigError("glorot: fan_in + fan_out must be positive");
    Tensor t(std::move(shape));
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : t.v) v = rng.normal(0.0, sd);
    return t;
}

inline Tensor init_uniform_bounded(std::vector<std::size_t> shape, Rng& rng, double lo = -0.03, double hi = 0.03) {
    if (!(lo < hi)) throw ConfigError("uniform_bounded: lo must be less than hi");
    Tensor t(std::move(shape));
    for (double& v : t.v) v = rng.uniform(lo, hi);
    return t;
}

// ---- Parameter collections with Adam state ----

struct ParamSet {
    struct Entry {
        std::string name;
        Tensor value;
        Tensor m;  // first-moment accumulator, same shape as value
        Tensor v;  // second-moment accumulator, same shape as value
    };

    std::vector<Entry> entries;
    long adam_t = 0;

    void add(std::string name, Tensor value) {
        Entry e;
        e.name = std::move(name);
        e.m = Tensor(value.shape);
        e.v = Tensor(value.shape);
        e.value = std::move(value);
        entries.push_back(std::move(e));
    }

    Tensor& at(const std::string& name) {
        for (auto& e : entries)
            if (e.name == name) return e.value;
        throw InternalError("no parameter named " + name);
    }

    std::size_t size() const { return entries.size(); }

    bool values_equal(const ParamSet& o) const {
        if (entries.size() != o.entries.size()) return false;
        for (std::size_t i = 0; i < entries.size(); ++i)
            if (!(entries[i].value == o.entries[i].value)) return false;
        return true;
    }
};

// Copies values only; Adam moments start fresh (used for target-network init).
inline ParamSet clone_values(const ParamSet& src) {
    ParamSet out;
    for (const auto& e : src.entries) out.add(e.name, e.value);
    return out;
}

// Standard Adam with bias correction, one step over all entries.
inline void adam_step(ParamSet& params, const std::vector<Tensor>& grads, double lr, double beta1 = 0.9,
                      double beta2 = 0.999, double eps = 1e-8) {
    if (grads.size() != params.entries.size()) throw ShapeError("adam_step: gradient count mismatch");
    params.adam_t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(params.adam_t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(params.adam_t));
    for (std::size_t i = 0; i < params.entries.size(); ++i) {
        auto& e = params.entries[i];
        const Tensor& g = grads[i];
        if (!g.same_shape(e.value)) throw ShapeError("adam_step: gradient shape mismatch for " + e.name);
        if (!g.all_finite()) throw NumericError("adam_step: non-finite gradient for " + e.name);
        for (std::size_t k = 0; k < e.value.numel(); ++k) {
            e.m.v[k] = beta1 * e.m.v[k] + (1.0 - beta1) * g.v[k];
            e.v.v[k] = beta2 * e.v.v[k] + (1.0 - beta2) * g.v[k] * g.v[k];
            const double mh = e.m.v[k] / bc1;
            const double vh = e.v.v[k] / bc2;
            e.value.v[k] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
}

// theta' <- tau * theta + (1 - tau) * theta', elementwise.
inline void soft_update(ParamSet& target, const ParamSet& online, double tau) {
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("soft_update: tau must lie in (0, 1]");
    if (target.entries.size() != online.entries.size()) throw ShapeError("soft_update: parameter count mismatch");
    for (std::size_t i = 0; i < target.entries.size(); ++i) {
        Tensor& t = target.entries[i].value;
        const Tensor& s = online.entries[i].value;
        if (!t.same_shape(s)) throw ShapeError("soft_update: shape mismatch for " + target.entries[i].name);
        for (std::size_t k = 0; k < t.numel(); ++k) t.v[k] = tau * s.v[k] + (1.0 - tau) * t.v[k];
    }
}

// ---- Layers ----

enum class Activation { Relu, Tanh, Linear };

// y = act(x . W + b)
inline Tape::Var dense(Tape& tape, Tape::Var x, Tape::Var weights, Tape::Var bias, Activation act) {
    Tape::Var y = tape.add(tape.matvec(x, weights), bias);
    switch (act) {
        case Activation::Relu: return tape.relu(y);
        case Activation::Tanh: return tape.tanh_(y);
        case Activation::Linear: return y;
    }
    throw InternalError("unreachable activation");
}

struct ConvLstmVars {
    Tape::Var hidden;
    Tape::Var cell;
};

struct ConvLstmParamVars {
    Tape::Var wx;  // {4H, Cin, 3, 3}, gate order [i, f, g, o]
    Tape::Var wh;  // {4H, H, 3, 3}
    Tape::Var bias;  // {4H}
};

// One ConvLSTM step (Shi et al. gates, 3x3 kernels, no peepholes). Input,
// hidden, and cell are masked to the map so off-map activations stay zero.
inline ConvLstmVars convlstm_step(Tape& tape, Tape::Var input, ConvLstmVars state, const ConvLstmParamVars& params,
                                  const Tensor& mask) {
    const Tensor& wxv = tape.value(params.wx);
    if (wxv.shape.size() != 4 || wxv.shape[0] % 4 != 0) throw ShapeError("convlstm: wx must be {4H, Cin, 3, 3}");
    const std::size_t hidden_ch = wxv.shape[0] / 4;
    const Tape::Var xm = tape.mask_mul(input, mask);
    Tape::Var z = tape.add(tape.conv3x3(xm, params.wx), tape.conv3x3(state.hidden, params.wh));
    z = tape.add_chan_bias(z, params.bias);
    const Tape::Var gi = tape.sigmoid(tape.slice_ch(z, 0, hidden_ch));
    const Tape::Var gf = tape.sigmoid(tape.slice_ch(z, hidden_ch, 2 * hidden_ch));
    const Tape::Var gg = tape.tanh_(tape.slice_ch(z, 2 * hidden_ch, 3 * hidden_ch));
    const Tape::Var go = tape.sigmoid(tape.slice_ch(z, 3 * hidden_ch, 4 * hidden_ch));
    Tape::Var cell = tape.add(tape.mul(gf, state.cell), tape.mul(gi, gg));
    cell = tape.mask_mul(cell, mask);
    Tape::Var hidden = tape.mask_mul(tape.mul(go, tape.tanh_(cell)), mask);
    return {hidden, cell};
}

// ---- Gradient checking ----

// Max relative error between an analytic gradient and central finite
// differences (h = 1e-5), with a unit floor in the denominator so near-zero
// components compare absolutely.
inline double grad_check(const std::function<double(const Tensor&)>& f,
                         const std::function<Tensor(const Tensor&)>& analytic_grad, const Tensor& point,
                         double h = 1e-5) {
    const Tensor g = analytic_grad(point);
    if (!g.same_shape(point)) throw ShapeError("grad_check: gradient shape mismatch");
    Tensor x = point;
    double worst = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double orig = x.v[i];
        x.v[i] = orig + h;
        const double fp = f(x);
        x.v[i] = orig - h;
        const double fm = f(x);
        x.v[i] = orig;
        const double num = (fp - fm) / (2.0 * h);
        const double denom = std::max({1.0, std::abs(num), std::abs(g.v[i])});
        worst = std::max(worst, std::abs(num - g.v[i]) / denom);
    }
    return worst;
}

}  // namespace hexmarket::neural
