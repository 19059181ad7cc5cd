#pragma once

#include <array>
#include <memory>
#include <vector>

#include "jointsgait/autodiff.hpp"
#include "jointsgait/skeleton.hpp"

namespace jointsgait {

// ---------------------------------------------------------------------------
// Batch normalization over (N, T, V) per channel for an N x C x T x V tensor.
// ---------------------------------------------------------------------------

struct BatchNorm {
    Parameter gamma, beta;
    Tensor running_mean, running_var;
    double eps = 1e-5;
    double momentum = 0.1;

    BatchNorm() = default;
    BatchNorm(const std::string& name, int channels)
        : gamma(name + ".gamma", Tensor::ones({channels})),
          beta(name + ".beta", Tensor::zeros({channels})),
          running_mean(Tensor::zeros({channels})),
          running_var(Tensor::ones({channels})) {}
};

inline Var batchnorm(const Var& x, BatchNorm& bn, bool training) {
    const Tensor& xv = x.val();
    if (xv.ndim() != 4) throw ShapeError("batchnorm expects NxCxTxV, got " + shape_str(xv.shape));
    const int64_t N = xv.dim(0), C = xv.dim(1), T = xv.dim(2), V = xv.dim(3);
    if (C != bn.gamma.value.dim(0))
        throw ShapeError("batchnorm channel mismatch");
    const int64_t m = N * T * V;
    const int64_t plane = T * V;

    auto mean = std::make_shared<std::vector<double>>(static_cast<size_t>(C), 0.0);
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(C), 0.0);
    if (training) {
        for (int64_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (int64_t n = 0; n < N; ++n) {
                const double* p = xv.data.data() + (n * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) s += p[i];
            }
            (*mean)[static_cast<size_t>(c)] = s / static_cast<double>(m);
        }
        for (int64_t c = 0; c < C; ++c) {
            const double mu = (*mean)[static_cast<size_t>(c)];
            double s = 0.0;
            for (int64_t n = 0; n < N; ++n) {
                const double* p = xv.data.data() + (n * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    const double d = p[i] - mu;
                    s += d * d;
                }
            }
            const double var = s / static_cast<double>(m);
            (*inv_std)[static_cast<size_t>(c)] = 1.0 / std::sqrt(var + bn.eps);
            bn.running_mean.data[static_cast<size_t>(c)] =
                (1.0 - bn.momentum) * bn.running_mean.data[static_cast<size_t>(c)] + bn.momentum * mu;
            bn.running_var.data[static_cast<size_t>(c)] =
                (1.0 - bn.momentum) * bn.running_var.data[static_cast<size_t>(c)] + bn.momentum * var;
        }
    } else {
        for (int64_t c = 0; c < C; ++c) {
            (*mean)[static_cast<size_t>(c)] = bn.running_mean.data[static_cast<size_t>(c)];
            (*inv_std)[static_cast<size_t>(c)] =
                1.0 / std::sqrt(bn.running_var.data[static_cast<size_t>(c)] + bn.eps);
        }
    }

    Var vg = Var::param(bn.gamma);
    Var vb = Var::param(bn.beta);
    const Tensor& g = vg.val();
    const Tensor& b = vb.val();

    Tensor out(xv.shape);
    auto xhat = std::make_shared<Tensor>(xv.shape);
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const double mu = (*mean)[static_cast<size_t>(c)];
            const double is = (*inv_std)[static_cast<size_t>(c)];
            const double gc = g.data[static_cast<size_t>(c)], bc = b.data[static_cast<size_t>(c)];
            const double* p = xv.data.data() + (n * C + c) * plane;
            double* xh = xhat->data.data() + (n * C + c) * plane;
            double* o = out.data.data() + (n * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) {
                xh[i] = (p[i] - mu) * is;
                o[i] = gc * xh[i] + bc;
            }
        }

    auto nn = std::make_shared<Node>();
    nn->val = std::move(out);
    nn->requires_grad = true;
    nn->parents = {x.node(), vg.node(), vb.node()};
    nn->back = [N, C, plane, m, training, mean, inv_std, xhat](Node& node) {
        Node& px = *node.parents[0];
        Node& pg = *node.parents[1];
        Node& pb = *node.parents[2];
        pg.ensure_grad();
        pb.ensure_grad();
        std::vector<double> sum_dy(static_cast<size_t>(C), 0.0), sum_dy_xh(static_cast<size_t>(C), 0.0);
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c) {
                const double* dy = node.grad.data.data() + (n * C + c) * plane;
                const double* xh = xhat->data.data() + (n * C + c) * plane;
                double sd = 0.0, sdx = 0.0;
                for (int64_t i = 0; i < plane; ++i) {
                    sd += dy[i];
                    sdx += dy[i] * xh[i];
                }
                sum_dy[static_cast<size_t>(c)] += sd;
                sum_dy_xh[static_cast<size_t>(c)] += sdx;
            }
        for (int64_t c = 0; c < C; ++c) {
            pg.grad.data[static_cast<size_t>(c)] += sum_dy_xh[static_cast<size_t>(c)];
            pb.grad.data[static_cast<size_t>(c)] += sum_dy[static_cast<size_t>(c)];
        }
        if (px.requires_grad) {
            px.ensure_grad();
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < C; ++c) {
                    const double gc = pg.val.data[static_cast<size_t>(c)];
                    const double is = (*inv_std)[static_cast<size_t>(c)];
                    const double* dy = node.grad.data.data() + (n * C + c) * plane;
                    const double* xh = xhat->data.data() + (n * C + c) * plane;
                    double* dx = px.grad.data.data() + (n * C + c) * plane;
                    if (training) {
                        const double mdy = sum_dy[static_cast<size_t>(c)] / static_cast<double>(m);
                        const double mdyx = sum_dy_xh[static_cast<size_t>(c)] / static_cast<double>(m);
                        for (int64_t i = 0; i < plane; ++i)
                            dx[i] += gc * is * (dy[i] - mdy - xh[i] * mdyx);
                    } else {
                        for (int64_t i = 0; i < plane; ++i) dx[i] += gc * is * dy[i];
                    }
                }
        }
    };
    return Var(nn);
}

// ---------------------------------------------------------------------------
// 1-D convolution along T per vertex: x (N,Ci,T,V) * K (Co,Ci,kt) -> (N,Co,T',V)
// symmetric zero padding (kt-1)/2, T' = ceil(T / stride).
// ---------------------------------------------------------------------------

inline Var temporal_conv(const Var& x, const Var& kernel, int stride) {
    const Tensor& xv = x.val();
    const Tensor& kv = kernel.val();
    if (xv.ndim() != 4) throw ShapeError("temporal_conv input must be NxCxTxV");
    if (kv.ndim() != 3) throw ShapeError("temporal_conv kernel must be CoxCixKt");
    const int64_t N = xv.dim(0), Ci = xv.dim(1), T = xv.dim(2), V = xv.dim(3);
    const int64_t Co = kv.dim(0), Kci = kv.dim(1), kt = kv.dim(2);
    if (Ci != Kci)
        throw ShapeError("temporal_conv channels disagree: " + shape_str(xv.shape) + " vs " + shape_str(kv.shape));
    if (kt % 2 == 0) throw ContractError("temporal kernel width must be odd");
    if (stride < 1) throw ContractError("temporal stride must be >= 1");
    const int64_t pad = (kt - 1) / 2;
    const int64_t To = (T + stride - 1) / stride;

    Tensor out({static_cast<int>(N), static_cast<int>(Co), static_cast<int>(To), static_cast<int>(V)});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t co = 0; co < Co; ++co) {
            double* obase = out.data.data() + (n * Co + co) * To * V;
            for (int64_t ci = 0; ci < Ci; ++ci) {
                const double* xbase = xv.data.data() + (n * Ci + ci) * T * V;
                const double* kb = kv.data.data() + (co * Ci + ci) * kt;
                for (int64_t tap = 0; tap < kt; ++tap) {
                    const double w = kb[tap];
                    if (w == 0.0) continue;
                    for (int64_t to = 0; to < To; ++to) {
                        const int64_t ti = to * stride + tap - pad;
                        if (ti < 0 || ti >= T) continue;
                        double* o = obase + to * V;
                        const double* xp = xbase + ti * V;
                        for (int64_t v = 0; v < V; ++v) o[v] += w * xp[v];
                    }
                }
            }
        }

    return detail::binary(x, kernel, std::move(out), [N, Ci, Co, T, To, V, kt, pad, stride](Node& node) {
        Node& px = *node.parents[0];
        Node& pk = *node.parents[1];
        if (px.requires_grad) px.ensure_grad();
        if (pk.requires_grad) pk.ensure_grad();
        for (int64_t n = 0; n < N; ++n)
            for (int64_t co = 0; co < Co; ++co) {
                const double* gbase = node.grad.data.data() + (n * Co + co) * To * V;
                for (int64_t ci = 0; ci < Ci; ++ci) {
                    const double* xbase = px.val.data.data() + (n * Ci + ci) * T * V;
                    const double* kb = pk.val.data.data() + (co * Ci + ci) * kt;
                    double* dkb = pk.requires_grad ? pk.grad.data.data() + (co * Ci + ci) * kt : nullptr;
                    double* dxbase = px.requires_grad ? px.grad.data.data() + (n * Ci + ci) * T * V : nullptr;
                    for (int64_t tap = 0; tap < kt; ++tap) {
                        const double w = kb[tap];
                        double dk = 0.0;
                        for (int64_t to = 0; to < To; ++to) {
                            const int64_t ti = to * stride + tap - pad;
                            if (ti < 0 || ti >= T) continue;
                            const double* g = gbase + to * V;
                            const double* xp = xbase + ti * V;
                            if (dxbase) {
                                double* dx = dxbase + ti * V;
                                for (int64_t v = 0; v < V; ++v) dx[v] += w * g[v];
                            }
                            for (int64_t v = 0; v < V; ++v) dk += g[v] * xp[v];
                        }
                        if (dkb) dkb[tap] += dk;
                    }
                }
            }
    });
}

// ---------------------------------------------------------------------------
// Spatial graph convolution: sum_k W_k ( f x (A_norm_k .* M_k) )
// ---------------------------------------------------------------------------

/// contract the V axis of f (N,C,T,V) with a V x V matrix
inline Var contract_vertices(const Var& f, const Var& vv) {
    const Shape s = f.val().shape;
    const int64_t rows = f.val().numel() / s.back();
    Var flat = reshape(f, {static_cast<int>(rows), s.back()});
    Var prod = vmatmul(flat, vv);
    return reshape(prod, s);
}

/// mix channels of f (N,C,T,V) with W (C_in, C_out)
inline Var mix_channels(const Var& f, const Var& w) {
    const Shape s = f.val().shape;
    const int N = s[0], C = s[1], T = s[2], V = s[3];
    const int Co = w.val().dim(1);
    Var p = permute(f, {0, 2, 3, 1});                    // N,T,V,C
    Var flat = reshape(p, {N * T * V, C});
    Var mixed = vmatmul(flat, w);                        // (N*T*V, Co)
    Var back = reshape(mixed, {N, T, V, Co});
    return permute(back, {0, 3, 1, 2});                  // N,Co,T,V
}

inline Var spatial_graph_conv(const Var& f, const PartitionedGraph& graph,
                              const std::array<Var, 3>& W, const std::array<Var, 3>& M) {
    const Tensor& fv = f.val();
    if (fv.ndim() != 4) throw ShapeError("spatial_graph_conv input must be NxCxTxV");
    if (fv.dim(3) != graph.layout.joint_count)
        throw ShapeError("spatial_graph_conv vertex count " + std::to_string(fv.dim(3)) +
                         " does not match layout " + std::to_string(graph.layout.joint_count));
    Var acc;
    for (int k = 0; k < 3; ++k) {
        Var masked = mul(Var::constant(graph.A_norm[static_cast<size_t>(k)]), M[static_cast<size_t>(k)]);
        Var gathered = contract_vertices(f, masked);
        Var term = mix_channels(gathered, W[static_cast<size_t>(k)]);
        acc = acc.defined() ? add(acc, term) : term;
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Blocks and backbone
// ---------------------------------------------------------------------------

struct GcnBlock {
    int c_in = 0, c_out = 0, kt = 9, temporal_stride = 1;
    bool residual = true;
    std::array<Parameter, 3> W;   // C_in x C_out each
    std::array<Parameter, 3> M;   // V x V, ones at init
    Parameter Kt;                 // C_out x C_out x kt
    BatchNorm bn1, bn2;
    bool has_projection = false;
    Parameter W_proj;             // C_in x C_out, when shapes disagree

    static GcnBlock create(const std::string& name, int c_in, int c_out, int V,
                           int kt, int stride, bool residual, Rng& rng) {
        if (kt % 2 == 0) throw ContractError("kt must be odd");
        GcnBlock b;
        b.c_in = c_in;
        b.c_out = c_out;
        b.kt = kt;
        b.temporal_stride = stride;
        b.residual = residual;
        const double bw = 1.0 / std::sqrt(static_cast<double>(c_in));
        for (int k = 0; k < 3; ++k) {
            b.W[static_cast<size_t>(k)] = Parameter(
                name + ".W" + std::to_string(k + 1), rng.uniform_tensor({c_in, c_out}, -bw, bw));
            b.M[static_cast<size_t>(k)] = Parameter(
                name + ".M" + std::to_string(k + 1), Tensor::ones({V, V}));
        }
        const double bk = 1.0 / std::sqrt(static_cast<double>(c_out * kt));
        b.Kt = Parameter(name + ".Kt", rng.uniform_tensor({c_out, c_out, kt}, -bk, bk));
        b.bn1 = BatchNorm(name + ".bn1", c_out);
        b.bn2 = BatchNorm(name + ".bn2", c_out);
        b.has_projection = residual && (c_in != c_out || stride != 1);
        if (b.has_projection)
            b.W_proj = Parameter(name + ".Wproj", rng.uniform_tensor({c_in, c_out}, -bw, bw));
        return b;
    }

    Var forward(const Var& x, const PartitionedGraph& graph, bool training) {
        std::array<Var, 3> w{Var::param(W[0]), Var::param(W[1]), Var::param(W[2])};
        std::array<Var, 3> m{Var::param(M[0]), Var::param(M[1]), Var::param(M[2])};
        Var y = spatial_graph_conv(x, graph, w, m);
        y = batchnorm(y, bn1, training);
        y = relu(y);
        y = temporal_conv(y, Var::param(Kt), temporal_stride);
        y = batchnorm(y, bn2, training);
        if (residual) {
            Var res = x;
            if (temporal_stride != 1) {
                const int T = x.val().dim(2);
                std::vector<int> keep;
                for (int t = 0; t < T; t += temporal_stride) keep.push_back(t);
                res = permute(res, {0, 1, 3, 2});
                res = gather_last(res, keep);
                res = permute(res, {0, 1, 3, 2});
            }
            if (has_projection) res = mix_channels(res, Var::param(W_proj));
            y = add(y, res);
        }
        return relu(y);
    }

    void collect_params(std::vector<Parameter*>& out) {
        for (auto& p : W) out.push_back(&p);
        for (auto& p : M) out.push_back(&p);
        out.push_back(&Kt);
        out.push_back(&bn1.gamma);
        out.push_back(&bn1.beta);
        out.push_back(&bn2.gamma);
        out.push_back(&bn2.beta);
        if (has_projection) out.push_back(&W_proj);
    }

    void collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out) {
        out.emplace_back(bn1.gamma.name.substr(0, bn1.gamma.name.size() - 6) + ".rmean", &bn1.running_mean);
        out.emplace_back(bn1.gamma.name.substr(0, bn1.gamma.name.size() - 6) + ".rvar", &bn1.running_var);
        out.emplace_back(bn2.gamma.name.substr(0, bn2.gamma.name.size() - 6) + ".rmean", &bn2.running_mean);
        out.emplace_back(bn2.gamma.name.substr(0, bn2.gamma.name.size() - 6) + ".rvar", &bn2.running_var);
    }
};

struct BackboneConfig {
    std::vector<int> channels = {64, 64, 64, 128, 128, 128, 256, 256, 256};
    std::vector<int> strides = {1, 1, 1, 2, 1, 1, 2, 1, 1};
    int kt = 9;
    int in_channels = 2;
};

struct Backbone {
    PartitionedGraph graph;
    std::vector<GcnBlock> blocks;

    static Backbone create(const PartitionedGraph& graph, const BackboneConfig& cfg, Rng& rng) {
        if (cfg.channels.size() != cfg.strides.size())
            throw ConfigError("backbone channel/stride plans differ in length");
        Backbone bb;
        bb.graph = graph;
        int c_in = cfg.in_channels;
        for (size_t i = 0; i < cfg.channels.size(); ++i) {
            bb.blocks.push_back(GcnBlock::create("block" + std::to_string(i + 1), c_in,
                                                 cfg.channels[i], graph.layout.joint_count,
                                                 cfg.kt, cfg.strides[i], true, rng));
            c_in = cfg.channels[i];
        }
        return bb;
    }

    /// N x C_in x T x V -> N x C_last x T'' x V
    Var forward(const Var& x, bool training) {
        Var y = x;
        for (GcnBlock& b : blocks) y = b.forward(y, graph, training);
        return y;
    }

    int out_channels() const { return blocks.back().c_out; }

    int out_frames(int T) const {
        for (const GcnBlock& b : blocks) T = (T + b.temporal_stride - 1) / b.temporal_stride;
        return T;
    }

    void collect_params(std::vector<Parameter*>& out) {
        for (GcnBlock& b : blocks) b.collect_params(out);
    }
    void collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out) {
        for (GcnBlock& b : blocks) b.collect_buffers(out);
    }
};

}  // namespace jointsgait
