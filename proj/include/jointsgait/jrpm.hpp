#pragma once

#include <set>
#include <string>
#include <vector>

#include "jointsgait/autodiff.hpp"
#include "jointsgait/skeleton.hpp"

namespace jointsgait {

enum class PoolMode { learned_kernel, mean_plus_max };

inline std::string pool_mode_name(PoolMode m) {
    return m == PoolMode::learned_kernel ? "learned_kernel" : "mean_plus_max";
}

inline PoolMode parse_pool_mode(const std::string& s) {
    if (s == "learned_kernel") return PoolMode::learned_kernel;
    if (s == "mean_plus_max") return PoolMode::mean_plus_max;
    throw ConfigError("unknown pool mode '" + s + "'");
}

struct PyramidSpec {
    std::string layout_name;
    std::vector<int> scales;                          // subset of 1..6
    std::vector<std::vector<std::vector<int>>> groups; // per selected scale
    PoolMode pool_mode = PoolMode::learned_kernel;

    int strip_count() const {
        int b = 0;
        for (const auto& g : groups) b += static_cast<int>(g.size());
        return b;
    }
};

namespace detail {

// Joint grouping per pyramid scale for the 18-joint OpenPose body.
inline std::vector<std::vector<int>> openpose18_groups(int scale) {
    switch (scale) {
        case 1:
            return {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17}};
        case 2:  // upper / lower body
            return {{0, 1, 2, 3, 4, 5, 6, 7, 14, 15, 16, 17}, {8, 9, 10, 11, 12, 13}};
        case 3:  // opposite-side arm+leg pairs, plus head and neck
            return {{5, 6, 7, 8, 9, 10}, {2, 3, 4, 11, 12, 13}, {0, 1, 14, 15, 16, 17}};
        case 4:  // four limbs plus head
            return {{0, 1, 14, 15, 16, 17}, {2, 3, 4}, {5, 6, 7}, {8, 9, 10}, {11, 12, 13}};
        case 5:  // limb halves sharing elbows/knees, plus head, neck, torso sides
            return {{2, 3}, {3, 4}, {5, 6}, {6, 7}, {8, 9}, {9, 10}, {11, 12}, {12, 13},
                    {0, 14, 15, 16, 17}, {1}, {2, 8}, {5, 11}};
        case 6: {
            std::vector<std::vector<int>> g;
            for (int j = 0; j < 18; ++j) g.push_back({j});
            return g;
        }
        default:
            throw ConfigError("unknown pyramid scale " + std::to_string(scale));
    }
}

// Same body-part semantics for the 16-joint Kinect layout:
// 0 hip-center, 1 spine, 2 shoulder-center, 3 head,
// 4-6 left arm, 7-9 right arm, 10-12 left leg, 13-15 right leg.
inline std::vector<std::vector<int>> kinect2d16_groups(int scale) {
    switch (scale) {
        case 1:
            return {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15}};
        case 2:
            return {{1, 2, 3, 4, 5, 6, 7, 8, 9}, {0, 10, 11, 12, 13, 14, 15}};
        case 3:
            return {{4, 5, 6, 13, 14, 15}, {7, 8, 9, 10, 11, 12}, {0, 1, 2, 3}};
        case 4:
            return {{0, 1, 2, 3}, {7, 8, 9}, {4, 5, 6}, {13, 14, 15}, {10, 11, 12}};
        case 5:
            return {{7, 8}, {8, 9}, {4, 5}, {5, 6}, {13, 14}, {14, 15}, {10, 11}, {11, 12},
                    {2, 3}, {0, 1}, {7, 13}, {4, 10}};
        case 6: {
            std::vector<std::vector<int>> g;
            for (int j = 0; j < 16; ++j) g.push_back({j});
            return g;
        }
        default:
            throw ConfigError("unknown pyramid scale " + std::to_string(scale));
    }
}

}  // namespace detail

inline PyramidSpec build_pyramid(const JointLayout& layout, std::vector<int> scales = {1, 2, 3},
                                 PoolMode pool_mode = PoolMode::learned_kernel) {
    if (scales.empty()) throw ConfigError("pyramid needs at least one scale");
    PyramidSpec spec;
    spec.layout_name = layout.name;
    spec.pool_mode = pool_mode;
    std::set<int> seen;
    for (int s : scales) {
        if (s < 1 || s > 6) throw ConfigError("pyramid scale " + std::to_string(s) + " outside 1..6");
        if (!seen.insert(s).second) throw ConfigError("duplicate pyramid scale " + std::to_string(s));
    }
    std::sort(scales.begin(), scales.end());
    spec.scales = scales;
    for (int s : scales) {
        auto g = layout.name == "kinect2d16" ? detail::kinect2d16_groups(s)
                                             : detail::openpose18_groups(s);
        for (const auto& grp : g)
            for (int j : grp)
                if (j >= layout.joint_count)
                    throw ConfigError("pyramid group joint " + std::to_string(j) + " outside layout");
        spec.groups.push_back(std::move(g));
    }
    return spec;
}

// ---------------------------------------------------------------------------
// Per-strip heads: an optional pooling kernel (shared across channels) and an
// independent FC per strip.
// ---------------------------------------------------------------------------

struct StripHead {
    Parameter kernel;  // T'' x J, learned_kernel mode only
    Parameter fc;      // C_pool x D_out
};

struct JrpmHeads {
    std::vector<StripHead> strips;
    int c_pool = 0;
    int d_out = 0;

    static JrpmHeads create(const PyramidSpec& spec, int channels, int frames, int d_out, Rng& rng) {
        JrpmHeads h;
        h.c_pool = channels;
        h.d_out = d_out;
        const double bw = 1.0 / std::sqrt(static_cast<double>(channels));
        int idx = 0;
        for (size_t si = 0; si < spec.groups.size(); ++si)
            for (const auto& grp : spec.groups[si]) {
                StripHead sh;
                const std::string name = "strip" + std::to_string(idx);
                if (spec.pool_mode == PoolMode::learned_kernel) {
                    const int J = static_cast<int>(grp.size());
                    // neutral start: exact mean pooling over the strip
                    sh.kernel = Parameter(name + ".k",
                                          Tensor::full({frames, J}, 1.0 / static_cast<double>(frames * J)));
                }
                sh.fc = Parameter(name + ".fc", rng.uniform_tensor({channels, d_out}, -bw, bw));
                h.strips.push_back(std::move(sh));
                ++idx;
            }
        return h;
    }

    void collect_params(std::vector<Parameter*>& out) {
        for (StripHead& s : strips) {
            if (s.kernel.value.numel() > 0) out.push_back(&s.kernel);
            out.push_back(&s.fc);
        }
    }
};

/// Pool every strip of F_ST (N,C,T'',V) down to (N,C); one Var per strip.
inline std::vector<Var> jrpp_pool_strips(const Var& f, const PyramidSpec& spec, JrpmHeads& heads) {
    const Tensor& fv = f.val();
    if (fv.ndim() != 4) throw ShapeError("jrpp_pool expects NxCxTxV");
    const int N = fv.dim(0), C = fv.dim(1), T = fv.dim(2), V = fv.dim(3);
    std::vector<Var> out;
    size_t idx = 0;
    for (const auto& scale_groups : spec.groups)
        for (const auto& grp : scale_groups) {
            for (int j : grp)
                if (j >= V) throw ShapeError("strip joint " + std::to_string(j) + " >= V=" + std::to_string(V));
            Var strip = gather_last(f, grp);  // N,C,T,J
            const int J = static_cast<int>(grp.size());
            if (spec.pool_mode == PoolMode::learned_kernel) {
                StripHead& sh = heads.strips[idx];
                if (sh.kernel.value.dim(0) != T || sh.kernel.value.dim(1) != J)
                    throw ShapeError("strip kernel shape " + shape_str(sh.kernel.value.shape) +
                                     " does not match strip (T=" + std::to_string(T) +
                                     ", J=" + std::to_string(J) + ")");
                Var flat = reshape(strip, {N * C, T * J});
                Var k = reshape(Var::param(sh.kernel), {T * J, 1});
                out.push_back(reshape(vmatmul(flat, k), {N, C}));
            } else {
                out.push_back(add(mean_tail2(strip), max_tail2(strip)));
            }
            ++idx;
        }
    return out;
}

/// Stack per-strip (N,C) tensors into (N,C,B).
inline Var pack_strips(const std::vector<Var>& strips) {
    std::vector<Var> cols;
    cols.reserve(strips.size());
    for (const Var& s : strips)
        cols.push_back(reshape(s, {s.val().dim(0), s.val().dim(1), 1}));
    return concat_last(cols);
}

/// Independent FC per strip: (N,C_pool) -> (N,D_out); stacked to (N,D_out,B).
inline Var map_strips(const std::vector<Var>& pooled, JrpmHeads& heads) {
    if (pooled.size() != heads.strips.size())
        throw ShapeError("map_strips: " + std::to_string(pooled.size()) + " strips vs " +
                         std::to_string(heads.strips.size()) + " heads");
    std::vector<Var> mapped;
    mapped.reserve(pooled.size());
    for (size_t i = 0; i < pooled.size(); ++i) {
        Var m = vmatmul(pooled[i], Var::param(heads.strips[i].fc));
        mapped.push_back(reshape(m, {m.val().dim(0), m.val().dim(1), 1}));
    }
    return concat_last(mapped);  // N, D_out, B
}

/// Flatten (N,D_out,B) and L2-normalize rows: the final gait embedding.
inline Var embedding_from_mapped(const Var& mapped) {
    const int N = mapped.val().dim(0);
    const int D = mapped.val().dim(1) * mapped.val().dim(2);
    return l2_normalize_rows(reshape(mapped, {N, D}));
}

}  // namespace jointsgait
