#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "hexmarket/common.hpp"
#include "hexmarket/tensor.hpp"

namespace hexmarket::neural {

// Reverse-mode tape over Tensor values. A tape is built per forward pass;
// leaves borrow their tensors (no copies), backward() fills gradients for
// every node. Covers exactly the ops the actor/critic trunks need.
class Tape {
public:
    using Var = int;

    enum class Op { Leaf, MatVec, Add, AddChanBias, Relu, Tanh, Sigmoid, Mul, Conv3x3, SliceCh, Concat, MaskMul, AffineScalar };

    Var leaf(const Tensor& t) {
        Node n;
        n.op = Op::Leaf;
        n.ext = &t;
        return push(std::move(n));
    }

    // y[o] = sum_i x[i] * W[i, o]
    Var matvec(Var x, Var w) {
        const Tensor& xv = value(x);
        const Tensor& wv = value(w);
        if (wv.shape.size() != 2 || xv.numel() != wv.shape[0]) throw ShapeError("matvec: incompatible shapes");
        Node n;
        n.op = Op::MatVec;
        n.a = x;
        n.b = w;
        n.val = Tensor({wv.shape[1]});
        const std::size_t in = wv.shape[0], out = wv.shape[1];
        for (std::size_t i = 0; i < in; ++i) {
            const double xi = xv.v[i];
            if (xi == 0.0) continue;
            const double* wr = &wv.v[i * out];
            for (std::size_t o = 0; o < out; ++o) n.val.v[o] += xi * wr[o];
        }
        return push(std::move(n));
    }

    Var add(Var a, Var b) {
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        if (!av.same_shape(bv)) throw ShapeError("add: shape mismatch");
        Node n;
        n.op = Op::Add;
        n.a = a;
        n.b = b;
        n.val = av;
        for (std::size_t i = 0; i < n.val.numel(); ++i) n.val.v[i] += bv.v[i];
        return push(std::move(n));
    }

    // x{C,R,K} + bias{C}, broadcast over positions.
    Var add_chan_bias(Var x, Var bias) {
        const Tensor& xv = value(x);
        const Tensor& bv = value(bias);
        if (xv.shape.size() != 3 || bv.numel() != xv.shape[0]) throw ShapeError("add_chan_bias: shape mismatch");
        Node n;
        n.op = Op::AddChanBias;
        n.a = x;
        n.b = bias;
        n.val = xv;
        const std::size_t plane = xv.shape[1] * xv.shape[2];
        for (std::size_t c = 0; c < xv.shape[0]; ++c)
            for (std::size_t p = 0; p < plane; ++p) n.val.v[c * plane + p] += bv.v[c];
        return push(std::move(n));
    }

    Var relu(Var x) { return unary(Op::Relu, x, [](double v) { return v > 0.0 ? v : 0.0; }); }
    Var tanh_(Var x) { return unary(Op::Tanh, x, [](double v) { return std::tanh(v); }); }
    Var sigmoid(Var x) {
        return unary(Op::Sigmoid, x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    }

    Var mul(Var a, Var b) {
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        if (!av.same_shape(bv)) throw ShapeError("mul: shape mismatch");
        Node n;
        n.op = Op::Mul;
        n.a = a;
        n.b = b;
        n.val = av;
        for (std::size_t i = 0; i < n.val.numel(); ++i) n.val.v[i] *= bv.v[i];
        return push(std::move(n));
    }

    // 3x3 zero-padded convolution: W{Cout,Cin,3,3}, x{Cin,R,K} -> {Cout,R,K}.
    Var conv3x3(Var x, Var w) {
        const Tensor& xv = value(x);
        const Tensor& wv = value(w);
        if (xv.shape.size() != 3 || wv.shape.size() != 4 || wv.shape[1] != xv.shape[0] || wv.shape[2] != 3 || wv.shape[3] != 3)
            throw ShapeError("conv3x3: incompatible shapes");
        const std::size_t cin = xv.shape[0], rows = xv.shape[1], cols = xv.shape[2], cout = wv.shape[0];
        Node n;
        n.op = Op::Conv3x3;
        n.a = x;
        n.b = w;
        n.val = Tensor({cout, rows, cols});
        for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const double* k = &wv.v[(co * cin + ci) * 9];
                const double* xp = &xv.v[ci * rows * cols];
                double* yp = &n.val.v[co * rows * cols];
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c) {
                        double acc = 0.0;
                        for (int dr = -1; dr <= 1; ++dr) {
                            const long rr = static_cast<long>(r) + dr;
                            if (rr < 0 || rr >= static_cast<long>(rows)) continue;
                            for (int dc = -1; dc <= 1; ++dc) {
                                const long cc = static_cast<long>(c) + dc;
                                if (cc < 0 || cc >= static_cast<long>(cols)) continue;
                                acc += k[(dr + 1) * 3 + (dc + 1)] * xp[rr * static_cast<long>(cols) + cc];
                            }
                        }
                        yp[r * cols + c] += acc;
                    }
            }
        return push(std::move(n));
    }

    // Channel slice [c0, c1) of a {C,R,K} tensor.
    Var slice_ch(Var x, std::size_t c0, std::size_t c1) {
        const Tensor& xv = value(x);
        if (xv.shape.size() != 3 || c1 > xv.shape[0] || c0 >= c1) throw ShapeError("slice_ch: bad channel range");
        Node n;
        n.op = Op::SliceCh;
        n.a = x;
        n.c0 = c0;
        n.c1 = c1;
        const std::size_t plane = xv.shape[1] * xv.shape[2];
        n.val = Tensor({c1 - c0, xv.shape[1], xv.shape[2]});
        std::copy(xv.v.begin() + static_cast<long>(c0 * plane), xv.v.begin() + static_cast<long>(c1 * plane), n.val.v.begin());
        return push(std::move(n));
    }

    // Flattens each source and concatenates into a 1-D vector.
    Var concat(std::vector<Var> srcs) {
        if (srcs.empty()) throw ShapeError("concat: no sources");
        Node n;
        n.op = Op::Concat;
        n.srcs = std::move(srcs);
        std::size_t total = 0;
        for (Var s : n.srcs) total += value(s).numel();
        n.val = Tensor({total});
        std::size_t off = 0;
        for (Var s : n.srcs) {
            const Tensor& sv = value(s);
            std::copy(sv.v.begin(), sv.v.end(), n.val.v.begin() + static_cast<long>(off));
            off += sv.numel();
        }
        return push(std::move(n));
    }

    // x{C,R,K} * mask{R,K}, mask is a constant (no gradient).
    Var mask_mul(Var x, const Tensor& mask) {
        const Tensor& xv = value(x);
        if (xv.shape.size() != 3 || mask.shape.size() != 2 || mask.shape[0] != xv.shape[1] || mask.shape[1] != xv.shape[2])
            throw ShapeError("mask_mul: mask shape mismatch");
        Node n;
        n.op = Op::MaskMul;
        n.a = x;
        n.ext = &mask;
        n.val = xv;
        const std::size_t plane = mask.numel();
        for (std::size_t c = 0; c < xv.shape[0]; ++c)
            for (std::size_t p = 0; p < plane; ++p) n.val.v[c * plane + p] *= mask.v[p];
        return push(std::move(n));
    }

    // y = s0 * x + s1 elementwise.
    Var affine_scalar(Var x, double s0, double s1) {
        Node n;
        n.op = Op::AffineScalar;
        n.a = x;
        n.s0 = s0;
        n.s1 = s1;
        n.val = value(x);
        for (double& v : n.val.v) v = s0 * v + s1;
        return push(std::move(n));
    }

    const Tensor& value(Var id) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        return n.op == Op::Leaf ? *n.ext : n.val;
    }

    // Seeds d(out)/d(out) = seed and propagates to every node.
    void backward(Var out, const Tensor& seed) {
        grads_.assign(nodes_.size(), Tensor{});
        for (std::size_t i = 0; i < nodes_.size(); ++i) grads_[i] = Tensor(value(static_cast<Var>(i)).shape);
        if (!seed.same_shape(value(out))) throw ShapeError("backward: seed shape mismatch");
        grads_[static_cast<std::size_t>(out)] = seed;
        for (long i = out; i >= 0; --i) step_back(static_cast<std::size_t>(i));
    }

    void backward(Var out, double seed = 1.0) {
        Tensor s(value(out).shape);
        if (s.numel() != 1) throw ShapeError("backward: scalar seed requires a scalar output");
        s.v[0] = seed;
        backward(out, s);
    }

    const Tensor& grad(Var id) const { return grads_.at(static_cast<std::size_t>(id)); }

private:
    struct Node {
        Op op;
        Var a = -1, b = -1;
        std::vector<Var> srcs;
        const Tensor* ext = nullptr;
        double s0 = 0.0, s1 = 0.0;
        std::size_t c0 = 0, c1 = 0;
        Tensor val;
    };

    Var push(Node&& n) {
        nodes_.push_back(std::move(n));
        return static_cast<Var>(nodes_.size() - 1);
    }

    template <class F>
    Var unary(Op op, Var x, F f) {
        Node n;
        n.op = op;
        n.a = x;
        n.val = value(x);
        for (double& v : n.val.v) v = f(v);
        return push(std::move(n));
    }

    void step_back(std::size_t i) {
        const Node& n = nodes_[i];
        const Tensor& g = grads_[i];
        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::MatVec: {
                const Tensor& xv = value(n.a);
                const Tensor& wv = value(n.b);
                Tensor& gx = grads_[static_cast<std::size_t>(n.a)];
                Tensor& gw = grads_[static_cast<std::size_t>(n.b)];
                const std::size_t in = wv.shape[0], out = wv.shape[1];
                for (std::size_t k = 0; k < in; ++k) {
                    const double* wr = &wv.v[k * out];
                    double* gwr = &gw.v[k * out];
                    double acc = 0.0;
                    const double xk = xv.v[k];
                    for (std::size_t o = 0; o < out; ++o) {
                        acc += wr[o] * g.v[o];
                        gwr[o] += xk * g.v[o];
                    }
                    gx.v[k] += acc;
                }
                break;
            }
            case Op::Add: {
                accumulate(n.a, g);
                accumulate(n.b, g);
                break;
            }
            case Op::AddChanBias: {
                accumulate(n.a, g);
                Tensor& gb = grads_[static_cast<std::size_t>(n.b)];
                const std::size_t plane = n.val.shape[1] * n.val.shape[2];
                for (std::size_t c = 0; c < n.val.shape[0]; ++c)
                    for (std::size_t p = 0; p < plane; ++p) gb.v[c] += g.v[c * plane + p];
                break;
            }
            case Op::Relu: {
                const Tensor& xv = value(n.a);
                Tensor& gx = grads_[static_cast<std::size_t>(n.a)];
                for (std::size_t k = 0; k < g.numel(); ++k)
                    if (xv.v[k] > 0.0) gx.v[k] += g.v[k];
                break;
            }
            case Op::Tanh: {
                Tensor& gx = grads_[static_cast<std::size_t>(n.a)];
                for (std::size_t k = 0; k < g.numel(); ++k) gx.v[k] += (1.0 - n.val.v[k] * n.val.v[k]) * g.v[k];
                break;
            }
            case Op::Sigmoid: {
                Tensor& gx = grads_[static_cast<std::size_t>(n.a)];
                for (std::size_t k = 0; k < g.numel(); ++k) gx.v[k] += n.val.v[k] * (1.0 - n.val.v[k]) * g.v[k];
                break;
            }
            case Op::Mul: {
                const Tensor& av = value(n.a);
                const Tensor& bv = value(n.b);
                Tensor& ga = grads_[static_cast<std::size_t>(n.a)];
                Tensor& gb = grads_[static_cast<std::size_t>(n.b)];
                for (std::size_t k = 0; k < g.numel(); ++k) {
                    ga.v[k] += bv.v[k] * g.v[k];
                    gb.v[k] += av.v[k] * g.v[k];
                }
                break;
            }
            case Op::Conv3x3: {
                const Tensor& xv = value(n.a);
                const Tensor& wv = value(n.b);
                Tensor& gx = grads_[static_cast<std::size_t>(n.a)];
                Tensor& gw = grads_[static_cast<std::size_t>(n.b)];
                const std::size_t cin = xv.shape[0], rows = xv.shape[1], cols = xv.shape[2], cout = wv.shape[0];
                for (std::size_t co = 0; co < cout; ++co)
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        const double* k = &wv.v[(co * cin + ci) * 9];
                        double* gk = &gw.v[(co * cin + ci) * 9];
                        const double* xp = &xv.v[ci * rows * cols];
                        double* gxp = &gx.v[ci * rows * cols];
                        const double* gyp = &g.v[co * rows * cols];
                        for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t c = 0; c < cols; ++c) {
                                const double gy = gyp[r * cols + c];
                                if (gy == 0.0) continue;
                                for (int dr = -1; dr <= 1; ++dr) {
                                    const long rr = static_cast<long>(r) + dr;
                                    if (rr < 0 || rr >= static_cast<long>(rows)) continue;
                                    for (int dc = -1; dc <= 1; ++dc) {
                                        const long cc = static_cast<long>(c) + dc;
                                        if (cc < 0 || cc >= static_cast<long>(cols)) continue;
                                        const std::size_t xi = static_cast<std::size_t>(rr) * cols + static_cast<std::size_t>(cc);
                                        gk[(dr + 1) * 3 + (dc + 1)] += xp[xi] * gy;
                                        gxp[xi] += k[(dr + 1) * 3 + (dc + 1)] * gy;
                                    }
                                }
                            }
                    }
                break;
            }
            case Op::SliceCh: {
                Tensor& gx = grads_[static_cast<std::size_t>(n.a)];
                const std::size_t plane = n.val.shape[1] * n.val.shape[2];
                for (std::size_t k = 0; k < g.numel(); ++k) gx.v[n.c0 * plane + k] += g.v[k];
                break;
            }
            case Op::Concat: {
                std::size_t off = 0;
                for (Var s : n.srcs) {
                    Tensor& gs = grads_[static_cast<std::size_t>(s)];
                    for (std::size_t k = 0; k < gs.numel(); ++k) gs.v[k] += g.v[off + k];
                    off += gs.numel();
                }
                break;
            }
            case Op::MaskMul: {
                Tensor& gx = grads_[static_cast<std::size_t>(n.a)];
                const std::size_t plane = n.ext->numel();
                for (std::size_t c = 0; c < n.val.shape[0]; ++c)
                    for (std::size_t p = 0; p < plane; ++p) gx.v[c * plane + p] += n.ext->v[p] * g.v[c * plane + p];
                break;
            }
            case Op::AffineScalar: {
                Tensor& gx = grads_[static_cast<std::size_t>(n.a)];
                for (std::size_t k = 0; k < g.numel(); ++k) gx.v[k] += n.s0 * g.v[k];
                break;
            }
        }
    }

    void accumulate(Var dst, const Tensor& g) {
        Tensor& gd = grads_[static_cast<std::size_t>(dst)];
        for (std::size_t k = 0; k < g.numel(); ++k) gd.v[k] += g.v[k];
    }

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
};

}  // namespace hexmarket::neural
