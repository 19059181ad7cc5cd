#pragma once

#include <limits>
#include <map>
#include <vector>

#include "jointsgait/autodiff.hpp"

namespace jointsgait {

struct BatchCompositionError : std::runtime_error {
    explicit BatchCompositionError(const std::string& msg)
        : std::runtime_error("batch: " + msg) {}
};

struct FusionLossConfig {
    double lambda = 0.9;
    double m_tri = 0.2;
    double m_arc = 0.35;   // radians
    double arc_scale = 30.0;
    int num_classes = 0;
};

/// Euclidean distance matrix of the rows of E (N x D).
inline Tensor pairwise_distances(const Tensor& E) {
    if (E.ndim() != 2) throw ShapeError("pairwise_distances expects 2-d, got " + shape_str(E.shape));
    const int64_t N = E.dim(0), D = E.dim(1);
    Tensor out({static_cast<int>(N), static_cast<int>(N)});
    for (int64_t i = 0; i < N; ++i) {
        for (int64_t j = i + 1; j < N; ++j) {
            double s = 0.0;
            const double* a = E.data.data() + i * D;
            const double* b = E.data.data() + j * D;
            for (int64_t k = 0; k < D; ++k) {
                const double d = a[k] - b[k];
                s += d * d;
            }
            const double d = std::sqrt(s);
            out.data[static_cast<size_t>(i * N + j)] = d;
            out.data[static_cast<size_t>(j * N + i)] = d;
        }
    }
    return out;
}

inline void check_batch_labels(const std::vector<int>& labels) {
    std::map<int, int> counts;
    for (int l : labels) ++counts[l];
    if (counts.size() < 2)
        throw BatchCompositionError("batch needs at least 2 distinct labels");
    for (auto [l, c] : counts)
        if (c < 2)
            throw BatchCompositionError("label " + std::to_string(l) + " has a single sample");
}

/// Batch-hard triplet loss: mean over anchors of
/// max(0, m + hardest_positive - hardest_negative). The anchor itself is
/// excluded from its positive candidates.
inline Var batch_hard_triplet(const Var& embeddings, const std::vector<int>& labels, double margin) {
    const Tensor& E = embeddings.val();
    if (E.ndim() != 2) throw ShapeError("batch_hard_triplet expects NxD embeddings");
    const int64_t N = E.dim(0), D = E.dim(1);
    if (static_cast<int64_t>(labels.size()) != N)
        throw ShapeError("label count does not match batch");
    check_batch_labels(labels);

    const Tensor dist = pairwise_distances(E);
    auto hp = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(N));
    auto hn = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(N));
    auto active = std::make_shared<std::vector<bool>>(static_cast<size_t>(N));
    double loss = 0.0;
    for (int64_t a = 0; a < N; ++a) {
        double best_p = -1.0, best_n = std::numeric_limits<double>::infinity();
        int64_t pi = -1, ni = -1;
        for (int64_t j = 0; j < N; ++j) {
            if (j == a) continue;
            const double d = dist.data[static_cast<size_t>(a * N + j)];
            if (labels[static_cast<size_t>(j)] == labels[static_cast<size_t>(a)]) {
                if (d > best_p) {
                    best_p = d;
                    pi = j;
                }
            } else if (d < best_n) {
                best_n = d;
                ni = j;
            }
        }
        const double h = margin + best_p - best_n;
        (*hp)[static_cast<size_t>(a)] = pi;
        (*hn)[static_cast<size_t>(a)] = ni;
        (*active)[static_cast<size_t>(a)] = h > 0.0;
        loss += h > 0.0 ? h : 0.0;
    }
    loss /= static_cast<double>(N);

    Tensor out({1});
    out.data[0] = loss;
    auto dist_ptr = std::make_shared<Tensor>(dist);
    return detail::unary(embeddings, std::move(out), [N, D, hp, hn, active, dist_ptr](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        const double g = n.grad.data[0] / static_cast<double>(N);
        auto add_dist_grad = [&](int64_t i, int64_t j, double coeff) {
            // d||e_i - e_j|| scattered to both rows; zero subgradient at d=0
            const double d = dist_ptr->data[static_cast<size_t>(i * N + j)];
            if (d <= 0.0) return;
            const double* ei = p.val.data.data() + i * D;
            const double* ej = p.val.data.data() + j * D;
            double* gi = p.grad.data.data() + i * D;
            double* gj = p.grad.data.data() + j * D;
            const double s = coeff / d;
            for (int64_t k = 0; k < D; ++k) {
                const double diff = ei[k] - ej[k];
                gi[k] += s * diff;
                gj[k] -= s * diff;
            }
        };
        for (int64_t a = 0; a < N; ++a) {
            if (!(*active)[static_cast<size_t>(a)]) continue;
            add_dist_grad(a, (*hp)[static_cast<size_t>(a)], g);
            add_dist_grad(a, (*hn)[static_cast<size_t>(a)], -g);
        }
    });
}

// ---------------------------------------------------------------------------
// Arcface
// ---------------------------------------------------------------------------

struct ArcfaceHead {
    Parameter W;  // num_classes x D, rows normalized inside the forward pass

    static ArcfaceHead create(int num_classes, int dim, Rng& rng) {
        if (num_classes < 2) throw ConfigError("arcface needs >= 2 classes");
        const double b = 1.0 / std::sqrt(static_cast<double>(dim));
        return ArcfaceHead{Parameter("arcface.W", rng.uniform_tensor({num_classes, dim}, -b, b))};
    }

    void collect_params(std::vector<Parameter*>& out) { out.push_back(&W); }
};

/// logits: c * cos(theta + m) for the true class, c * cos(theta) otherwise.
/// Cosines are clamped away from +-1 before arccos; the clamp has zero
/// gradient outside its range.
inline Var arcface_logits(const Var& cosines, const std::vector<int>& labels, double m, double c) {
    static constexpr double kClamp = 1e-7;
    const Tensor& u = cosines.val();
    const int64_t N = u.dim(0), C = u.dim(1);
    const double cm = std::cos(m), sm = std::sin(m);
    Tensor out(u.shape);
    for (int64_t i = 0; i < N; ++i) {
        const int y = labels[static_cast<size_t>(i)];
        if (y < 0 || y >= C) throw ContractError("arcface label out of range");
        for (int64_t j = 0; j < C; ++j) {
            const double v = u.data[static_cast<size_t>(i * C + j)];
            if (j == y) {
                const double vc = std::clamp(v, -1.0 + kClamp, 1.0 - kClamp);
                out.data[static_cast<size_t>(i * C + j)] = c * (vc * cm - std::sqrt(1.0 - vc * vc) * sm);
            } else {
                out.data[static_cast<size_t>(i * C + j)] = c * v;
            }
        }
    }
    auto lab = std::make_shared<std::vector<int>>(labels);
    return detail::unary(cosines, std::move(out), [N, C, cm, sm, c, lab](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (int64_t i = 0; i < N; ++i) {
            const int y = (*lab)[static_cast<size_t>(i)];
            for (int64_t j = 0; j < C; ++j) {
                const double g = n.grad.data[static_cast<size_t>(i * C + j)];
                const double v = p.val.data[static_cast<size_t>(i * C + j)];
                double d;
                if (j == y) {
                    if (v <= -1.0 + kClamp || v >= 1.0 - kClamp)
                        d = 0.0;
                    else
                        d = c * (cm + v / std::sqrt(1.0 - v * v) * sm);
                } else {
                    d = c;
                }
                p.grad.data[static_cast<size_t>(i * C + j)] += g * d;
            }
        }
    });
}

/// mean softmax cross-entropy over rows of logits
inline Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels) {
    const Tensor& z = logits.val();
    const int64_t N = z.dim(0), C = z.dim(1);
    auto probs = std::make_shared<Tensor>(z.shape);
    double loss = 0.0;
    for (int64_t i = 0; i < N; ++i) {
        const double* row = z.data.data() + i * C;
        double mx = row[0];
        for (int64_t j = 1; j < C; ++j) mx = std::max(mx, row[j]);
        double se = 0.0;
        for (int64_t j = 0; j < C; ++j) se += std::exp(row[j] - mx);
        const double lse = mx + std::log(se);
        for (int64_t j = 0; j < C; ++j)
            probs->data[static_cast<size_t>(i * C + j)] = std::exp(row[j] - lse);
        loss += lse - row[labels[static_cast<size_t>(i)]];
    }
    Tensor out({1});
    out.data[0] = loss / static_cast<double>(N);
    auto lab = std::make_shared<std::vector<int>>(labels);
    return detail::unary(logits, std::move(out), [N, C, probs, lab](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        const double g = n.grad.data[0] / static_cast<double>(N);
        for (int64_t i = 0; i < N; ++i)
            for (int64_t j = 0; j < C; ++j) {
                double d = probs->data[static_cast<size_t>(i * C + j)];
                if (j == (*lab)[static_cast<size_t>(i)]) d -= 1.0;
                p.grad.data[static_cast<size_t>(i * C + j)] += g * d;
            }
    });
}

inline Var arcface_loss(const Var& embeddings, const std::vector<int>& labels, ArcfaceHead& head,
                        double m, double c) {
    const Tensor& E = embeddings.val();
    if (E.ndim() != 2) throw ShapeError("arcface expects NxD embeddings");
    if (E.dim(1) != head.W.value.dim(1))
        throw ShapeError("arcface head dim " + std::to_string(head.W.value.dim(1)) +
                         " vs embedding dim " + std::to_string(E.dim(1)));
    Var en = l2_normalize_rows(embeddings);
    Var wn = l2_normalize_rows(Var::param(head.W));
    Var cosines = vmatmul(en, permute(wn, {1, 0}));  // N x num_classes
    Var logits = arcface_logits(cosines, labels, m, c);
    return softmax_cross_entropy(logits, labels);
}

/// lambda * L_tri_BH + (1 - lambda) * L_arc
inline Var fusion_loss(const Var& embeddings, const std::vector<int>& labels, ArcfaceHead& head,
                       const FusionLossConfig& cfg) {
    Var tri = batch_hard_triplet(embeddings, labels, cfg.m_tri);
    Var arc = arcface_loss(embeddings, labels, head, cfg.m_arc, cfg.arc_scale);
    return add(scale(tri, cfg.lambda), scale(arc, 1.0 - cfg.lambda));
}

}  // namespace jointsgait
