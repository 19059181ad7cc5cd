#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>

#include "jointsgait/tensor.hpp"

namespace jointsgait {

// Reverse-mode tape. Each op builds a Node holding the forward value and a
// closure that scatters the node's gradient into its parents. Dedicated
// backward closures exist only where composing from primitives would be
// slower or numerically worse (batchnorm, temporal conv, the losses).

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Tensor val;
    Tensor grad;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> back;
    bool requires_grad = false;
    Parameter* param = nullptr;

    void ensure_grad() {
        if (grad.shape != val.shape) grad = Tensor(val.shape);
    }
};

class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : n_(std::move(n)) {}

    static Var constant(Tensor t) {
        auto n = std::make_shared<Node>();
        n->val = std::move(t);
        return Var(n);
    }
    static Var input(Tensor t) {
        auto n = std::make_shared<Node>();
        n->val = std::move(t);
        n->requires_grad = true;
        return Var(n);
    }
    static Var param(Parameter& p) {
        auto n = std::make_shared<Node>();
        n->val = p.value;
        n->requires_grad = true;
        n->param = &p;
        return Var(n);
    }

    const Tensor& val() const { return n_->val; }
    const Tensor& grad() const { return n_->grad; }
    NodePtr node() const { return n_; }
    bool defined() const { return n_ != nullptr; }

private:
    NodePtr n_;
};

namespace detail {

inline void topo_collect(const NodePtr& n, std::unordered_set<Node*>& seen,
                         std::vector<NodePtr>& order) {
    // iterative DFS; graphs can be a few thousand nodes deep in long loops
    std::vector<std::pair<NodePtr, size_t>> stack{{n, 0}};
    while (!stack.empty()) {
        auto& [cur, idx] = stack.back();
        if (idx == 0 && seen.count(cur.get())) {
            stack.pop_back();
            continue;
        }
        if (idx < cur->parents.size()) {
            NodePtr next = cur->parents[idx++];
            if (!seen.count(next.get()) && next->requires_grad)
                stack.emplace_back(next, 0);
        } else {
            seen.insert(cur.get());
            order.push_back(cur);
            stack.pop_back();
        }
    }
}

}  // namespace detail

/// Run reverse accumulation from a scalar root. Parameter-backed leaves get
/// their gradients accumulated into Parameter::gradient.
inline void backward(const Var& root) {
    if (root.val().numel() != 1)
        throw ContractError("backward root must be scalar, got " + shape_str(root.val().shape));
    std::unordered_set<Node*> seen;
    std::vector<NodePtr> order;
    detail::topo_collect(root.node(), seen, order);
    for (const NodePtr& n : order) {
        n->ensure_grad();
        std::fill(n->grad.data.begin(), n->grad.data.end(), 0.0);
    }
    root.node()->grad.data[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node& n = **it;
        if (n.back) n.back(n);
        if (n.param) {
            for (int64_t i = 0; i < n.grad.numel(); ++i)
                n.param->gradient.data[static_cast<size_t>(i)] += n.grad.data[static_cast<size_t>(i)];
        }
    }
}

namespace detail {

inline Var unary(const Var& a, Tensor out, std::function<void(Node&)> back) {
    auto n = std::make_shared<Node>();
    n->val = std::move(out);
    if (a.node()->requires_grad) {
        n->requires_grad = true;
        n->parents = {a.node()};
        n->back = std::move(back);
    }
    return Var(n);
}

inline Var binary(const Var& a, const Var& b, Tensor out, std::function<void(Node&)> back) {
    auto n = std::make_shared<Node>();
    n->val = std::move(out);
    const bool ga = a.node()->requires_grad, gb = b.node()->requires_grad;
    if (ga || gb) {
        n->requires_grad = true;
        n->parents = {a.node(), b.node()};
        n->back = std::move(back);
    }
    return Var(n);
}

inline void acc(Tensor& dst, const Tensor& src) {
    for (int64_t i = 0; i < dst.numel(); ++i)
        dst.data[static_cast<size_t>(i)] += src.data[static_cast<size_t>(i)];
}

}  // namespace detail

// ------------------------------- elementwise -------------------------------

inline Var add(const Var& a, const Var& b) {
    check_same_shape(a.val(), b.val(), "add");
    Tensor out = a.val();
    detail::acc(out, b.val());
    return detail::binary(a, b, std::move(out), [](Node& n) {
        for (int s = 0; s < 2; ++s) {
            Node& p = *n.parents[static_cast<size_t>(s)];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            detail::acc(p.grad, n.grad);
        }
    });
}

inline Var sub(const Var& a, const Var& b) {
    check_same_shape(a.val(), b.val(), "sub");
    Tensor out = a.val();
    for (int64_t i = 0; i < out.numel(); ++i)
        out.data[static_cast<size_t>(i)] -= b.val().data[static_cast<size_t>(i)];
    return detail::binary(a, b, std::move(out), [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            detail::acc(pa.grad, n.grad);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int64_t i = 0; i < n.grad.numel(); ++i)
                pb.grad.data[static_cast<size_t>(i)] -= n.grad.data[static_cast<size_t>(i)];
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    check_same_shape(a.val(), b.val(), "mul");
    Tensor out = a.val();
    for (int64_t i = 0; i < out.numel(); ++i)
        out.data[static_cast<size_t>(i)] *= b.val().data[static_cast<size_t>(i)];
    return detail::binary(a, b, std::move(out), [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (int64_t i = 0; i < n.grad.numel(); ++i)
                pa.grad.data[static_cast<size_t>(i)] +=
                    n.grad.data[static_cast<size_t>(i)] * pb.val.data[static_cast<size_t>(i)];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int64_t i = 0; i < n.grad.numel(); ++i)
                pb.grad.data[static_cast<size_t>(i)] +=
                    n.grad.data[static_cast<size_t>(i)] * pa.val.data[static_cast<size_t>(i)];
        }
    });
}

inline Var scale(const Var& a, double s) {
    Tensor out = a.val();
    for (double& v : out.data) v *= s;
    return detail::unary(a, std::move(out), [s](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (int64_t i = 0; i < n.grad.numel(); ++i)
            p.grad.data[static_cast<size_t>(i)] += s * n.grad.data[static_cast<size_t>(i)];
    });
}

inline Var relu(const Var& a) {
    Tensor out = a.val();
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return detail::unary(a, std::move(out), [](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (int64_t i = 0; i < n.grad.numel(); ++i)
            if (p.val.data[static_cast<size_t>(i)] > 0.0)
                p.grad.data[static_cast<size_t>(i)] += n.grad.data[static_cast<size_t>(i)];
    });
}

// ------------------------------- structure ---------------------------------

inline Var reshape(const Var& a, Shape s) {
    Tensor out = a.val().reshaped(std::move(s));
    return detail::unary(a, std::move(out), [](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        detail::acc(p.grad, n.grad);
    });
}

namespace detail {

inline Tensor permute_tensor(const Tensor& t, const std::vector<int>& axes) {
    const int nd = t.ndim();
    Shape out_shape(static_cast<size_t>(nd));
    for (int i = 0; i < nd; ++i) out_shape[static_cast<size_t>(i)] = t.shape[static_cast<size_t>(axes[static_cast<size_t>(i)])];
    Tensor out(out_shape);
    std::vector<int64_t> in_strides(static_cast<size_t>(nd), 1), out_strides(static_cast<size_t>(nd), 1);
    for (int i = nd - 2; i >= 0; --i) {
        in_strides[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(i) + 1] * t.shape[static_cast<size_t>(i) + 1];
        out_strides[static_cast<size_t>(i)] = out_strides[static_cast<size_t>(i) + 1] * out_shape[static_cast<size_t>(i) + 1];
    }
    std::vector<int> idx(static_cast<size_t>(nd), 0);
    const int64_t total = t.numel();
    for (int64_t o = 0; o < total; ++o) {
        int64_t in_off = 0;
        for (int i = 0; i < nd; ++i)
            in_off += static_cast<int64_t>(idx[static_cast<size_t>(i)]) * in_strides[static_cast<size_t>(axes[static_cast<size_t>(i)])];
        out.data[static_cast<size_t>(o)] = t.data[static_cast<size_t>(in_off)];
        for (int i = nd - 1; i >= 0; --i) {
            if (++idx[static_cast<size_t>(i)] < out_shape[static_cast<size_t>(i)]) break;
            idx[static_cast<size_t>(i)] = 0;
        }
    }
    return out;
}

}  // namespace detail

inline Var permute(const Var& a, std::vector<int> axes) {
    Tensor out = detail::permute_tensor(a.val(), axes);
    std::vector<int> inv(axes.size());
    for (size_t i = 0; i < axes.size(); ++i) inv[static_cast<size_t>(axes[i])] = static_cast<int>(i);
    return detail::unary(a, std::move(out), [inv](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        Tensor g = detail::permute_tensor(n.grad, inv);
        detail::acc(p.grad, g);
    });
}

/// gather along the last axis: out[..., j] = x[..., idx[j]]
inline Var gather_last(const Var& a, std::vector<int> idx) {
    const Tensor& x = a.val();
    const int last = x.shape.back();
    for (int j : idx)
        if (j < 0 || j >= last)
            throw ShapeError("gather_last index " + std::to_string(j) + " out of range " + std::to_string(last));
    Shape out_shape = x.shape;
    out_shape.back() = static_cast<int>(idx.size());
    const int64_t rows = x.numel() / last;
    Tensor out(out_shape);
    const int64_t J = static_cast<int64_t>(idx.size());
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < J; ++j)
            out.data[static_cast<size_t>(r * J + j)] = x.data[static_cast<size_t>(r * last + idx[static_cast<size_t>(j)])];
    return detail::unary(a, std::move(out), [idx, rows, last](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        const int64_t J = static_cast<int64_t>(idx.size());
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < J; ++j)
                p.grad.data[static_cast<size_t>(r * last + idx[static_cast<size_t>(j)])] +=
                    n.grad.data[static_cast<size_t>(r * J + j)];
    });
}

/// concat along the last axis; all inputs share every other dimension
inline Var concat_last(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_last of nothing");
    Shape base = parts[0].val().shape;
    int total_last = 0;
    for (const Var& v : parts) {
        Shape s = v.val().shape;
        s.back() = 0;
        Shape b = base;
        b.back() = 0;
        if (s != b) throw ShapeError("concat_last shape mismatch");
        total_last += v.val().shape.back();
    }
    Shape out_shape = base;
    out_shape.back() = total_last;
    Tensor out(out_shape);
    const int64_t rows = out.numel() / total_last;
    std::vector<int> widths;
    for (const Var& v : parts) widths.push_back(v.val().shape.back());
    int64_t col = 0;
    for (size_t k = 0; k < parts.size(); ++k) {
        const Tensor& x = parts[k].val();
        const int64_t w = widths[k];
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < w; ++j)
                out.data[static_cast<size_t>(r * total_last + col + j)] = x.data[static_cast<size_t>(r * w + j)];
        col += w;
    }
    auto n = std::make_shared<Node>();
    n->val = std::move(out);
    bool any = false;
    for (const Var& v : parts) any = any || v.node()->requires_grad;
    if (any) {
        n->requires_grad = true;
        for (const Var& v : parts) n->parents.push_back(v.node());
        n->back = [widths, rows, total_last](Node& nn) {
            int64_t c = 0;
            for (size_t k = 0; k < nn.parents.size(); ++k) {
                Node& p = *nn.parents[k];
                const int64_t w = widths[k];
                if (p.requires_grad) {
                    p.ensure_grad();
                    for (int64_t r = 0; r < rows; ++r)
                        for (int64_t j = 0; j < w; ++j)
                            p.grad.data[static_cast<size_t>(r * w + j)] +=
                                nn.grad.data[static_cast<size_t>(r * total_last + c + j)];
                }
                c += w;
            }
        };
    }
    return Var(n);
}

// ------------------------------- matmul ------------------------------------

inline Var vmatmul(const Var& a, const Var& b) {
    Tensor out = matmul(a.val(), b.val());
    return detail::binary(a, b, std::move(out), [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        const int64_t m = pa.val.shape[pa.val.shape.size() - 2];
        const int64_t k = pa.val.shape.back();
        const int64_t nn = pb.val.shape.back();
        const int64_t batch = pa.val.numel() / (m * k);
        for (int64_t s = 0; s < batch; ++s) {
            const double* g = n.grad.data.data() + s * m * nn;
            if (pa.requires_grad) {
                pa.ensure_grad();
                matmul_nt_acc(g, pb.val.data.data() + s * k * nn,
                              pa.grad.data.data() + s * m * k, m, nn, k);
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                matmul_tn_acc(pa.val.data.data() + s * m * k, g,
                              pb.grad.data.data() + s * k * nn, m, k, nn);
            }
        }
    });
}

// ------------------------------- reductions --------------------------------

inline Var sum_all(const Var& a) {
    double s = 0.0;
    for (double v : a.val().data) s += v;
    Tensor out({1});
    out.data[0] = s;
    return detail::unary(a, std::move(out), [](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        const double g = n.grad.data[0];
        for (double& v : p.grad.data) v += g;
    });
}

inline Var mean_all(const Var& a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(a.val().numel()));
}

/// mean over the trailing two axes: (N,C,T,J) -> (N,C)
inline Var mean_tail2(const Var& a) {
    const Tensor& x = a.val();
    if (x.ndim() < 3) throw ShapeError("mean_tail2 needs >=3 dims");
    const int64_t inner = static_cast<int64_t>(x.shape.back()) * x.shape[x.shape.size() - 2];
    const int64_t rows = x.numel() / inner;
    Shape out_shape(x.shape.begin(), x.shape.end() - 2);
    Tensor out(out_shape);
    for (int64_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int64_t i = 0; i < inner; ++i) s += x.data[static_cast<size_t>(r * inner + i)];
        out.data[static_cast<size_t>(r)] = s / static_cast<double>(inner);
    }
    return detail::unary(a, std::move(out), [rows, inner](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const double g = n.grad.data[static_cast<size_t>(r)] / static_cast<double>(inner);
            for (int64_t i = 0; i < inner; ++i) p.grad.data[static_cast<size_t>(r * inner + i)] += g;
        }
    });
}

/// max over the trailing two axes, subgradient to the first argmax
inline Var max_tail2(const Var& a) {
    const Tensor& x = a.val();
    if (x.ndim() < 3) throw ShapeError("max_tail2 needs >=3 dims");
    const int64_t inner = static_cast<int64_t>(x.shape.back()) * x.shape[x.shape.size() - 2];
    const int64_t rows = x.numel() / inner;
    Shape out_shape(x.shape.begin(), x.shape.end() - 2);
    Tensor out(out_shape);
    auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        int64_t best = 0;
        double bv = x.data[static_cast<size_t>(r * inner)];
        for (int64_t i = 1; i < inner; ++i) {
            const double v = x.data[static_cast<size_t>(r * inner + i)];
            if (v > bv) {
                bv = v;
                best = i;
            }
        }
        out.data[static_cast<size_t>(r)] = bv;
        (*argmax)[static_cast<size_t>(r)] = best;
    }
    return detail::unary(a, std::move(out), [rows, inner, argmax](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
            p.grad.data[static_cast<size_t>(r * inner + (*argmax)[static_cast<size_t>(r)])] +=
                n.grad.data[static_cast<size_t>(r)];
    });
}

// ------------------------------- l2 normalize ------------------------------

/// row-wise x / ||x||, with a floor on the norm to stay finite at zero rows
inline Var l2_normalize_rows(const Var& a, double eps = 1e-12) {
    const Tensor& x = a.val();
    if (x.ndim() != 2) throw ShapeError("l2_normalize_rows expects 2-d, got " + shape_str(x.shape));
    const int64_t N = x.shape[0], D = x.shape[1];
    Tensor out(x.shape);
    auto norms = std::make_shared<std::vector<double>>(static_cast<size_t>(N));
    for (int64_t i = 0; i < N; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < D; ++j) {
            const double v = x.data[static_cast<size_t>(i * D + j)];
            s += v * v;
        }
        const double norm = std::sqrt(s) + eps;
        (*norms)[static_cast<size_t>(i)] = norm;
        for (int64_t j = 0; j < D; ++j)
            out.data[static_cast<size_t>(i * D + j)] = x.data[static_cast<size_t>(i * D + j)] / norm;
    }
    return detail::unary(a, std::move(out), [N, D, norms](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (int64_t i = 0; i < N; ++i) {
            const double norm = (*norms)[static_cast<size_t>(i)];
            double dot = 0.0;
            for (int64_t j = 0; j < D; ++j)
                dot += n.grad.data[static_cast<size_t>(i * D + j)] * n.val.data[static_cast<size_t>(i * D + j)];
            for (int64_t j = 0; j < D; ++j)
                p.grad.data[static_cast<size_t>(i * D + j)] +=
                    (n.grad.data[static_cast<size_t>(i * D + j)] -
                     n.val.data[static_cast<size_t>(i * D + j)] * dot) / norm;
        }
    });
}

// ------------------------------- grad check --------------------------------

/// Central finite-difference verification of a scalar-valued graph builder.
/// Returns max over input entries of |analytic - fd| / max(1, |analytic|).
inline double grad_check(const std::function<Var(const std::vector<Var>&)>& op,
                         std::vector<Tensor> inputs, double epsilon = 1e-5) {
    std::vector<Var> leaves;
    leaves.reserve(inputs.size());
    for (Tensor& t : inputs) leaves.push_back(Var::input(t));
    Var loss = op(leaves);
    if (loss.val().numel() != 1) throw ContractError("grad_check op must return a scalar");
    backward(loss);
    std::vector<Tensor> analytic;
    for (Var& l : leaves) {
        l.node()->ensure_grad();
        analytic.push_back(l.node()->grad);
    }

    auto eval = [&](const std::vector<Tensor>& xs) {
        std::vector<Var> vs;
        vs.reserve(xs.size());
        for (const Tensor& t : xs) vs.push_back(Var::constant(t));
        return op(vs).val().data[0];
    };

    double worst = 0.0;
    for (size_t k = 0; k < inputs.size(); ++k) {
        for (int64_t i = 0; i < inputs[k].numel(); ++i) {
            const double orig = inputs[k].data[static_cast<size_t>(i)];
            inputs[k].data[static_cast<size_t>(i)] = orig + epsilon;
            const double fp = eval(inputs);
            inputs[k].data[static_cast<size_t>(i)] = orig - epsilon;
            const double fm = eval(inputs);
            inputs[k].data[static_cast<size_t>(i)] = orig;
            const double fd = (fp - fm) / (2.0 * epsilon);
            const double an = analytic[k].data[static_cast<size_t>(i)];
            const double rel = std::fabs(an - fd) / std::max(1.0, std::fabs(an));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace jointsgait
