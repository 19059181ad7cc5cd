#include <doctest.h>

#include "jointsgait/skeleton.hpp"

using namespace jointsgait;

namespace {

SkeletonSequence make_sequence(const JointLayout& layout, int T) {
    SkeletonSequence s;
    s.layout = layout;
    s.frames = Tensor({T, layout.joint_count, 2});
    s.confidence = Tensor::ones({T, layout.joint_count});
    return s;
}

}  // namespace

TEST_CASE("layouts are connected trees") {
    for (const char* name : {"openpose18", "kinect2d16"}) {
        JointLayout l = build_layout(name);
        CHECK(l.connected());
        // tree: edges == vertices - 1
        CHECK(static_cast<int>(l.bones.size()) == l.joint_count - 1);
        CHECK(l.hops_to_center()[static_cast<size_t>(l.center_joint)] == 0);
    }
    CHECK_THROWS_AS(build_layout("nope"), ConfigError);
}

TEST_CASE("partition subsets: root identity, centripetal/centrifugal transpose") {
    for (const char* name : {"openpose18", "kinect2d16"}) {
        JointLayout l = build_layout(name);
        PartitionedGraph g = partition(l);
        const int V = l.joint_count;

        // A1 is exactly the identity
        for (int i = 0; i < V; ++i)
            for (int j = 0; j < V; ++j)
                CHECK(g.A[0].at({i, j}) == (i == j ? 1.0 : 0.0));

        // every bone lands in exactly one directed slot each way, and for a
        // tree the centrifugal matrix is the transpose of the centripetal one
        auto dist = l.hops_to_center();
        for (auto [a, b] : l.bones) {
            const int near = dist[static_cast<size_t>(a)] < dist[static_cast<size_t>(b)] ? a : b;
            const int far = near == a ? b : a;
            CHECK(dist[static_cast<size_t>(near)] != dist[static_cast<size_t>(far)]);  // trees have no ties
            CHECK(g.A[1].at({far, near}) == 1.0);   // looking inward
            CHECK(g.A[2].at({near, far}) == 1.0);   // looking outward
        }
        double edge_count1 = 0, edge_count2 = 0;
        for (int i = 0; i < V; ++i)
            for (int j = 0; j < V; ++j) {
                edge_count1 += g.A[1].at({i, j});
                edge_count2 += g.A[2].at({i, j});
                CHECK(g.A[2].at({i, j}) == g.A[1].at({j, i}));
            }
        CHECK(edge_count1 == doctest::Approx(static_cast<double>(l.bones.size())));
        CHECK(edge_count2 == doctest::Approx(static_cast<double>(l.bones.size())));
    }
}

TEST_CASE("adjacency normalization matches a hand-computed example") {
    // path graph 0-1-2: row sums 1,2,1; alpha = 0.5 for visible effect
    Tensor A({3, 3}, {0, 1, 0, 1, 0, 1, 0, 1, 0});
    const double alpha = 0.5;
    Tensor N = normalize_adjacency(A, alpha);
    const double d0 = 1.0 / std::sqrt(1.5), d1 = 1.0 / std::sqrt(2.5);
    CHECK(N.at({0, 1}) == doctest::Approx(d0 * d1).epsilon(1e-12));
    CHECK(N.at({1, 0}) == doctest::Approx(d1 * d0).epsilon(1e-12));
    CHECK(N.at({1, 2}) == doctest::Approx(d1 * d0).epsilon(1e-12));
    CHECK(N.at({0, 0}) == 0.0);
    CHECK(N.at({0, 2}) == 0.0);
}

TEST_CASE("normalization with default alpha keeps zero rows finite") {
    Tensor A = Tensor({2, 2});  // no edges at all
    Tensor N = normalize_adjacency(A, 1e-3);
    CHECK(N.all_finite());
    CHECK_THROWS_AS(normalize_adjacency(Tensor({2, 3}), 1e-3), ShapeError);
    Tensor neg({1, 1}, {-1.0});
    CHECK_THROWS_AS(normalize_adjacency(neg, 1e-3), ContractError);
}

TEST_CASE("partition rejects disconnected graphs") {
    JointLayout l;
    l.name = "broken";
    l.joint_count = 4;
    l.bones = {{0, 1}};  // 2 and 3 float free
    l.center_joint = 0;
    l.hip_joints = {1};
    CHECK_THROWS_AS(partition(l), ContractError);
}

TEST_CASE("normalize_sequence pins root and unit torso") {
    JointLayout l = openpose18_layout();
    SkeletonSequence s = make_sequence(l, 3);
    Rng rng(101);
    for (double& v : s.frames.data) v = 5.0 + rng.normal();
    SkeletonSequence out = normalize_sequence(s);

    for (int t = 0; t < 3; ++t) {
        CHECK(out.frames.at({t, l.center_joint, 0}) == doctest::Approx(0.0));
        CHECK(out.frames.at({t, l.center_joint, 1}) == doctest::Approx(0.0));
    }
    double torso = 0.0;
    for (int t = 0; t < 3; ++t) {
        double hx = 0.0, hy = 0.0;
        for (int h : l.hip_joints) {
            hx += out.frames.at({t, h, 0});
            hy += out.frames.at({t, h, 1});
        }
        hx /= 2.0;
        hy /= 2.0;
        torso += std::sqrt(hx * hx + hy * hy);
    }
    CHECK(torso / 3.0 == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("normalize_sequence interpolates low-confidence joints") {
    JointLayout l = kinect2d16_layout();
    SkeletonSequence s = make_sequence(l, 5);
    // give the skeleton a fixed nondegenerate pose in every frame
    Rng rng(7);
    for (int v = 0; v < l.joint_count; ++v) {
        const double x = rng.normal(), y = rng.normal();
        for (int t = 0; t < 5; ++t) {
            s.frames.at({t, v, 0}) = x;
            s.frames.at({t, v, 1}) = y;
        }
    }
    // joint 5 moves linearly but frame 2 is garbage with low confidence
    for (int t = 0; t < 5; ++t) s.frames.at({t, 5, 0}) = static_cast<double>(t);
    s.frames.at({2, 5, 0}) = 1000.0;
    s.confidence.at({2, 5}) = 0.01;

    SkeletonSequence out = normalize_sequence(s);
    // linear interpolation between frames 1 and 3 recovers the true value,
    // up to the shared root shift and torso scaling applied to all frames
    const double expect = 0.5 * (out.frames.at({1, 5, 0}) + out.frames.at({3, 5, 0}));
    CHECK(out.frames.at({2, 5, 0}) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("normalize_sequence extends edges and rejects dead joints") {
    JointLayout l = kinect2d16_layout();
    SkeletonSequence s = make_sequence(l, 4);
    Rng rng(13);
    // static pose so the per-frame root shift is identical across frames
    for (int v = 0; v < l.joint_count; ++v) {
        const double x = rng.normal(), y = rng.normal();
        for (int t = 0; t < 4; ++t) {
            s.frames.at({t, v, 0}) = x;
            s.frames.at({t, v, 1}) = y;
        }
    }
    // first frame of joint 3 unreliable: copies the first confident frame
    s.frames.at({0, 3, 0}) = 99.0;
    s.confidence.at({0, 3}) = 0.0;
    SkeletonSequence out = normalize_sequence(s);
    CHECK(out.frames.at({0, 3, 0}) == doctest::Approx(out.frames.at({1, 3, 0})).epsilon(1e-9));

    SkeletonSequence dead = make_sequence(l, 4);
    for (double& v : dead.frames.data) v = rng.normal();
    for (int t = 0; t < 4; ++t) dead.confidence.at({t, 6}) = 0.0;
    CHECK_THROWS_AS(normalize_sequence(dead), DataError);
}

TEST_CASE("kinect keep-index table") {
    const auto& keep = kinect20_keep_indices();
    CHECK(keep.size() == 16);
    // strictly increasing, all within the 20-joint skeleton
    for (size_t i = 1; i < keep.size(); ++i) CHECK(keep[i] > keep[i - 1]);
    CHECK(keep.front() >= 0);
    CHECK(keep.back() < 20);
}
