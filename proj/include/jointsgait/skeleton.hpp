#pragma once

#include <array>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "jointsgait/tensor.hpp"

namespace jointsgait {

enum class Condition { NM, BG, CL, UNKNOWN };

inline std::string condition_name(Condition c) {
    switch (c) {
        case Condition::NM: return "nm";
        case Condition::BG: return "bg";
        case Condition::CL: return "cl";
        default: return "unknown";
    }
}

struct JointLayout {
    std::string name;
    int joint_count = 0;
    std::vector<std::pair<int, int>> bones;  // undirected
    int center_joint = 0;
    std::vector<int> hip_joints;  // torso length = center to mean of these

    std::vector<std::vector<int>> adjacency_lists() const {
        std::vector<std::vector<int>> adj(static_cast<size_t>(joint_count));
        for (auto [a, b] : bones) {
            adj[static_cast<size_t>(a)].push_back(b);
            adj[static_cast<size_t>(b)].push_back(a);
        }
        return adj;
    }

    /// BFS hop distances from the center joint; -1 for unreachable
    std::vector<int> hops_to_center() const {
        std::vector<int> dist(static_cast<size_t>(joint_count), -1);
        auto adj = adjacency_lists();
        std::deque<int> q{center_joint};
        dist[static_cast<size_t>(center_joint)] = 0;
        while (!q.empty()) {
            int v = q.front();
            q.pop_front();
            for (int w : adj[static_cast<size_t>(v)])
                if (dist[static_cast<size_t>(w)] < 0) {
                    dist[static_cast<size_t>(w)] = dist[static_cast<size_t>(v)] + 1;
                    q.push_back(w);
                }
        }
        return dist;
    }

    bool connected() const {
        auto d = hops_to_center();
        for (int v : d)
            if (v < 0) return false;
        return true;
    }
};

// OpenPose BODY-18 ordering: 0 nose, 1 neck, 2-4 right arm, 5-7 left arm,
// 8-10 right leg, 11-13 left leg, 14/15 eyes, 16/17 ears.
inline JointLayout openpose18_layout() {
    JointLayout l;
    l.name = "openpose18";
    l.joint_count = 18;
    l.bones = {{0, 1},  {1, 2},  {2, 3},   {3, 4},   {1, 5},   {5, 6},
               {6, 7},  {1, 8},  {8, 9},   {9, 10},  {1, 11},  {11, 12},
               {12, 13}, {0, 14}, {14, 16}, {0, 15},  {15, 17}};
    l.center_joint = 1;  // neck
    l.hip_joints = {8, 11};
    return l;
}

// Kinect-V1 20-joint skeleton with the four hand/foot tips dropped, (x,y) only.
// Remapped order: 0 hip-center, 1 spine, 2 shoulder-center, 3 head,
// 4-6 left arm, 7-9 right arm, 10-12 left leg, 13-15 right leg.
inline JointLayout kinect2d16_layout() {
    JointLayout l;
    l.name = "kinect2d16";
    l.joint_count = 16;
    l.bones = {{0, 1},  {1, 2},   {2, 3},   {2, 4},   {4, 5},
               {5, 6},  {2, 7},   {7, 8},   {8, 9},   {0, 10},
               {10, 11}, {11, 12}, {0, 13},  {13, 14}, {14, 15}};
    l.center_joint = 2;  // shoulder-center
    l.hip_joints = {0};
    return l;
}

/// Indices into the 20-joint Kinect-V1 skeleton kept by kinect2d16,
/// in the remapped order above.
inline const std::vector<int>& kinect20_keep_indices() {
    static const std::vector<int> keep = {0, 1, 2, 3, 4, 5, 6, 8, 9, 10, 12, 13, 14, 16, 17, 18};
    return keep;
}

inline JointLayout build_layout(const std::string& name) {
    if (name == "openpose18") return openpose18_layout();
    if (name == "kinect2d16") return kinect2d16_layout();
    throw ConfigError("unknown layout '" + name + "'; supported: openpose18, kinect2d16");
}

struct SkeletonSequence {
    JointLayout layout;
    Tensor frames;      // T x V x 2
    Tensor confidence;  // T x V
    int identity = -1;
    int view_deg = 0;
    int seq_num = 0;
    Condition condition = Condition::UNKNOWN;

    int num_frames() const { return frames.ndim() == 3 ? frames.dim(0) : 0; }
};

// ---------------------------------------------------------------------------
// Partitioned gait-graph adjacency: k=1 root, k=2 centripetal, k=3 centrifugal.
// ---------------------------------------------------------------------------

struct PartitionedGraph {
    JointLayout layout;
    std::array<Tensor, 3> A;       // V x V each
    std::array<Tensor, 3> A_norm;  // Lambda^-1/2 A Lambda^-1/2
    double alpha = 1e-3;
};

/// Lambda^-1/2 A Lambda^-1/2 with Lambda[i][i] = row_sum(A)[i] + alpha.
inline Tensor normalize_adjacency(const Tensor& A, double alpha) {
    if (A.ndim() != 2 || A.dim(0) != A.dim(1))
        throw ShapeError("normalize_adjacency expects square matrix, got " + shape_str(A.shape));
    for (double v : A.data)
        if (v < 0.0) throw ContractError("normalize_adjacency: negative entry");
    const int V = A.dim(0);
    std::vector<double> inv_sqrt(static_cast<size_t>(V));
    for (int i = 0; i < V; ++i) {
        double s = alpha;
        for (int j = 0; j < V; ++j) s += A.at({i, j});
        inv_sqrt[static_cast<size_t>(i)] = s > 0.0 ? 1.0 / std::sqrt(s) : 0.0;
    }
    Tensor out(A.shape);
    for (int i = 0; i < V; ++i)
        for (int j = 0; j < V; ++j)
            out.at({i, j}) = inv_sqrt[static_cast<size_t>(i)] * A.at({i, j}) * inv_sqrt[static_cast<size_t>(j)];
    return out;
}

/// Split each vertex's 1-neighborhood by hop distance to the center joint.
/// Ties (equal hop distance) land in the centripetal subset from both ends.
inline PartitionedGraph partition(const JointLayout& layout, double alpha = 1e-3) {
    if (!layout.connected())
        throw ContractError("partition: bone graph of '" + layout.name + "' is disconnected");
    const int V = layout.joint_count;
    PartitionedGraph g;
    g.layout = layout;
    g.alpha = alpha;
    g.A[0] = Tensor::eye(V);
    g.A[1] = Tensor({V, V});
    g.A[2] = Tensor({V, V});
    const auto dist = layout.hops_to_center();
    for (auto [i, j] : layout.bones) {
        const int di = dist[static_cast<size_t>(i)], dj = dist[static_cast<size_t>(j)];
        if (dj < di) {
            g.A[1].at({i, j}) = 1.0;  // j is centripetal seen from i
            g.A[2].at({j, i}) = 1.0;
        } else if (di < dj) {
            g.A[1].at({j, i}) = 1.0;
            g.A[2].at({i, j}) = 1.0;
        } else {
            g.A[1].at({i, j}) = 1.0;
            g.A[1].at({j, i}) = 1.0;
        }
    }
    for (int k = 0; k < 3; ++k) g.A_norm[static_cast<size_t>(k)] = normalize_adjacency(g.A[static_cast<size_t>(k)], alpha);
    return g;
}

// ---------------------------------------------------------------------------
// Sequence normalization: fill low-confidence joints by temporal
// interpolation, pin the root joint to the origin per frame, and scale by the
// clip-mean torso length.
// ---------------------------------------------------------------------------

inline SkeletonSequence normalize_sequence(const SkeletonSequence& raw,
                                           double conf_threshold = 0.1) {
    const int T = raw.num_frames();
    const int V = raw.layout.joint_count;
    if (T < 1) throw DataError("normalize_sequence: empty sequence");
    SkeletonSequence out = raw;

    // temporal interpolation of unreliable joints
    for (int v = 0; v < V; ++v) {
        std::vector<int> good;
        for (int t = 0; t < T; ++t)
            if (raw.confidence.at({t, v}) >= conf_threshold) good.push_back(t);
        if (good.empty())
            throw DataError("normalize_sequence: joint " + std::to_string(v) +
                            " confident in zero frames");
        for (int t = 0; t < T; ++t) {
            if (raw.confidence.at({t, v}) >= conf_threshold) continue;
            int lo = -1, hi = -1;
            for (int gt : good) {
                if (gt < t) lo = gt;
                if (gt > t) { hi = gt; break; }
            }
            for (int c = 0; c < 2; ++c) {
                double val;
                if (lo >= 0 && hi >= 0) {
                    const double w = static_cast<double>(t - lo) / static_cast<double>(hi - lo);
                    val = (1.0 - w) * raw.frames.at({lo, v, c}) + w * raw.frames.at({hi, v, c});
                } else if (lo >= 0) {
                    val = raw.frames.at({lo, v, c});
                } else {
                    val = raw.frames.at({hi, v, c});
                }
                out.frames.at({t, v, c}) = val;
            }
        }
    }

    // root to origin, every frame
    const int root = raw.layout.center_joint;
    for (int t = 0; t < T; ++t) {
        const double rx = out.frames.at({t, root, 0});
        const double ry = out.frames.at({t, root, 1});
        for (int v = 0; v < V; ++v) {
            out.frames.at({t, v, 0}) -= rx;
            out.frames.at({t, v, 1}) -= ry;
        }
    }

    // clip-mean torso length to 1
    double torso = 0.0;
    for (int t = 0; t < T; ++t) {
        double hx = 0.0, hy = 0.0;
        for (int h : raw.layout.hip_joints) {
            hx += out.frames.at({t, h, 0});
            hy += out.frames.at({t, h, 1});
        }
        hx /= static_cast<double>(raw.layout.hip_joints.size());
        hy /= static_cast<double>(raw.layout.hip_joints.size());
        torso += std::sqrt(hx * hx + hy * hy);
    }
    torso /= static_cast<double>(T);
    if (torso <= 1e-12)
        throw DataError("normalize_sequence: degenerate clip, zero mean torso length");
    for (double& v : out.frames.data) v /= torso;
    return out;
}

}  // namespace jointsgait
