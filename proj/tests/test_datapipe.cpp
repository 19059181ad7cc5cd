#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include "jointsgait/datapipe.hpp"

using namespace jointsgait;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("jgtest_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& content) {
    fs::create_directories(p.parent_path());
    std::ofstream os(p);
    os << content;
}

std::string frame_json(const std::vector<double>& kp) {
    nlohmann::json j;
    j["people"] = nlohmann::json::array();
    j["people"].push_back({{"pose_keypoints_2d", kp}});
    return j.dump();
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("openpose clip loader reads frames in file order") {
    TempDir tmp("openpose");
    JointLayout layout = openpose18_layout();
    std::vector<double> kp0, kp1;
    for (int v = 0; v < 18; ++v) {
        kp0.push_back(v);
        kp0.push_back(v + 0.5);
        kp0.push_back(0.9);
        kp1.push_back(v * 2.0);
        kp1.push_back(v * 2.0 + 1.0);
        kp1.push_back(0.8);
    }
    write_file(tmp.path / "clip" / "frame_000001.json", frame_json(kp1));
    write_file(tmp.path / "clip" / "frame_000000.json", frame_json(kp0));

    SkeletonSequence seq = load_openpose_clip((tmp.path / "clip").string(), layout);
    CHECK(seq.num_frames() == 2);
    CHECK(seq.frames.at({0, 3, 0}) == 3.0);
    CHECK(seq.frames.at({0, 3, 1}) == 3.5);
    CHECK(seq.confidence.at({0, 3}) == 0.9);
    CHECK(seq.frames.at({1, 3, 0}) == 6.0);
}

TEST_CASE("openpose loader: empty people means zero-confidence frame") {
    TempDir tmp("openpose_empty");
    write_file(tmp.path / "clip" / "a.json", R"({"people": []})");
    SkeletonSequence seq = load_openpose_clip((tmp.path / "clip").string(), openpose18_layout());
    CHECK(seq.num_frames() == 1);
    for (int v = 0; v < 18; ++v) CHECK(seq.confidence.at({0, v}) == 0.0);
}

TEST_CASE("openpose loader rejects malformed input") {
    TempDir tmp("openpose_bad");
    write_file(tmp.path / "a" / "x.json", "{not json");
    CHECK_THROWS_AS(load_openpose_clip((tmp.path / "a").string(), openpose18_layout()), IngestionError);
    write_file(tmp.path / "b" / "x.json", R"({"nope": 1})");
    CHECK_THROWS_AS(load_openpose_clip((tmp.path / "b").string(), openpose18_layout()), IngestionError);
    write_file(tmp.path / "c" / "x.json", frame_json({1.0, 2.0, 3.0}));  // wrong length
    CHECK_THROWS_AS(load_openpose_clip((tmp.path / "c").string(), openpose18_layout()), IngestionError);
    CHECK_THROWS_AS(load_openpose_clip((tmp.path / "missing").string(), openpose18_layout()),
                    IngestionError);
}

TEST_CASE("kinect clip loader keeps the 16-joint subset") {
    TempDir tmp("kinect");
    std::ostringstream line;
    for (int j = 0; j < 20; ++j) line << j << " " << (j + 100) << " " << (j + 200) << " ";
    write_file(tmp.path / "1.txt", line.str() + "\n" + line.str() + "\n");
    JointLayout layout = kinect2d16_layout();
    SkeletonSequence seq = load_kinect_clip((tmp.path / "1.txt").string(), layout);
    CHECK(seq.num_frames() == 2);
    const auto& keep = kinect20_keep_indices();
    for (int v = 0; v < 16; ++v) {
        CHECK(seq.frames.at({0, v, 0}) == static_cast<double>(keep[static_cast<size_t>(v)]));
        CHECK(seq.frames.at({0, v, 1}) == static_cast<double>(keep[static_cast<size_t>(v)] + 100));
        CHECK(seq.confidence.at({0, v}) == 1.0);
    }
}

TEST_CASE("kinect loader rejects short lines and empty files") {
    TempDir tmp("kinect_bad");
    write_file(tmp.path / "a.txt", "1 2 3\n");
    CHECK_THROWS_AS(load_kinect_clip((tmp.path / "a.txt").string(), kinect2d16_layout()),
                    IngestionError);
    write_file(tmp.path / "b.txt", "\n  \n");
    CHECK_THROWS_AS(load_kinect_clip((tmp.path / "b.txt").string(), kinect2d16_layout()),
                    IngestionError);
}

TEST_CASE("casiab protocol: first 62 subjects train, gallery NM 1-4, probes by condition") {
    TempDir tmp("casiab");
    // 64 subjects; directory skeleton only, no frame files needed for indexing
    for (int s = 1; s <= 64; ++s) {
        std::ostringstream subj;
        subj << std::setfill('0') << std::setw(3) << s;
        for (const std::string clip : {"nm-01", "nm-05", "bg-01", "cl-02"})
            fs::create_directories(tmp.path / subj.str() / clip / "090");
    }
    DatasetIndex idx = load_dataset(tmp.path.string(), DataFormat::openpose_json, "casiab");
    CHECK(idx.entries.size() == 64 * 4);
    CHECK(idx.num_train_classes == 62);
    int n_train = 0, n_gal = 0, n_probe = 0;
    for (const ClipEntry& e : idx.entries) {
        if (e.train) {
            ++n_train;
            CHECK(e.subject <= "062");
        } else {
            CHECK(e.subject > "062");
            if (e.gallery) {
                ++n_gal;
                CHECK(e.condition == Condition::NM);
                CHECK(e.seq <= 4);
            }
            if (e.probe) ++n_probe;
        }
    }
    CHECK(n_train == 62 * 4);
    CHECK(n_gal == 2);        // nm-01 for subjects 063, 064
    CHECK(n_probe == 2 * 3);  // nm-05, bg-01, cl-02 for both test subjects
    // train identities are dense 0..61
    std::set<int> train_ids;
    for (const ClipEntry& e : idx.entries)
        if (e.train) train_ids.insert(e.identity);
    CHECK(static_cast<int>(train_ids.size()) == 62);
    CHECK(*train_ids.begin() == 0);
    CHECK(*train_ids.rbegin() == 61);
}

TEST_CASE("synthetic protocol holds out the highest seq per subject and view") {
    TempDir tmp("synthproto");
    for (const std::string subj : {"001", "002", "003"})
        for (const std::string clip : {"nm-01", "nm-02", "nm-03"})
            for (const std::string view : {"000", "090"})
                fs::create_directories(tmp.path / subj / clip / view);
    DatasetIndex idx = load_dataset(tmp.path.string(), DataFormat::openpose_json, "synthetic");
    CHECK(idx.entries.size() == 3 * 3 * 2);
    CHECK(idx.num_train_classes == 3);
    for (const ClipEntry& e : idx.entries) {
        if (e.seq == 3) {
            CHECK(e.gallery);
            CHECK(e.probe);
            CHECK_FALSE(e.train);
        } else {
            CHECK(e.train);
            CHECK_FALSE(e.gallery);
        }
    }
}

TEST_CASE("kinectgait protocol: last seq probes against the rest") {
    TempDir tmp("kinproto");
    for (const std::string subj : {"p01", "p02"}) {
        write_file(tmp.path / subj / "1.txt", "x");
        write_file(tmp.path / subj / "2.txt", "x");
        write_file(tmp.path / subj / "3.txt", "x");
    }
    DatasetIndex idx = load_dataset(tmp.path.string(), DataFormat::kinect_txt, "kinectgait");
    CHECK(idx.entries.size() == 6);
    for (const ClipEntry& e : idx.entries) {
        if (e.seq == 3) {
            CHECK(e.probe);
            CHECK_FALSE(e.train);
        } else {
            CHECK(e.train);
            CHECK(e.gallery);
        }
        CHECK(e.condition == Condition::NM);
    }
}

TEST_CASE("load_dataset rejects unknown protocols and malformed trees") {
    TempDir tmp("badproto");
    fs::create_directories(tmp.path / "001" / "nm-01" / "000");
    CHECK_THROWS_AS(load_dataset(tmp.path.string(), DataFormat::openpose_json, "nope"), ConfigError);
    CHECK_THROWS_AS(load_dataset((tmp.path / "missing").string(), DataFormat::openpose_json, "casiab"),
                    IngestionError);
    TempDir tmp2("badclipname");
    fs::create_directories(tmp2.path / "001" / "weird" / "000");
    CHECK_THROWS_AS(load_dataset(tmp2.path.string(), DataFormat::openpose_json, "casiab"),
                    IngestionError);
}

TEST_CASE("pk sampling draws P identities with K clips each") {
    DatasetIndex idx;
    idx.num_train_classes = 4;
    for (int id = 0; id < 4; ++id)
        for (int c = 0; c < 5; ++c) {
            ClipEntry e;
            e.identity = id;
            e.train = true;
            idx.entries.push_back(e);
        }
    Rng rng(5);
    std::vector<size_t> batch = pk_sample(idx, 3, 4, rng);
    CHECK(batch.size() == 12);
    std::map<int, std::set<size_t>> per_id;
    for (size_t i : batch) per_id[idx.entries[i].identity].insert(i);
    CHECK(per_id.size() == 3);
    for (const auto& [id, clips] : per_id)
        CHECK(clips.size() == 4);  // distinct clips (no replacement needed here)

    Rng r1(9), r2(9);
    CHECK(pk_sample(idx, 3, 4, r1) == pk_sample(idx, 3, 4, r2));
    Rng r3(1);
    CHECK_THROWS_AS(pk_sample(idx, 5, 2, r3), SamplingError);
}

TEST_CASE("pk sampling falls back to replacement for clip-poor identities") {
    DatasetIndex idx;
    for (int id = 0; id < 2; ++id)
        for (int c = 0; c < 2; ++c) {
            ClipEntry e;
            e.identity = id;
            e.train = true;
            idx.entries.push_back(e);
        }
    Rng rng(3);
    std::vector<size_t> batch = pk_sample(idx, 2, 5, rng);
    CHECK(batch.size() == 10);
    std::map<int, int> counts;
    for (size_t i : batch) ++counts[idx.entries[i].identity];
    for (const auto& [id, c] : counts) CHECK(c == 5);
}

TEST_CASE("frame sampling keeps order and tiles short clips") {
    JointLayout layout = openpose18_layout();
    SkeletonSequence seq;
    seq.layout = layout;
    const int T = 10;
    seq.frames = Tensor({T, 18, 2});
    seq.confidence = Tensor::ones({T, 18});
    for (int t = 0; t < T; ++t) seq.frames.at({t, 0, 0}) = t;

    Rng rng(21);
    SkeletonSequence sub = sample_frames(seq, 4, rng);
    CHECK(sub.num_frames() == 4);
    for (int t = 1; t < 4; ++t)
        CHECK(sub.frames.at({t, 0, 0}) > sub.frames.at({t - 1, 0, 0}));  // strictly ordered subset

    SkeletonSequence tiled = sample_frames(seq, 23, rng);
    CHECK(tiled.num_frames() == 23);
    for (int t = 0; t < 23; ++t)
        CHECK(tiled.frames.at({t, 0, 0}) == static_cast<double>(t % T));  // cyclic tiling
}

TEST_CASE("walker generation is deterministic and view-dependent") {
    WalkerParams p = WalkerParams::from_seed(42, 0.0);
    Rng r1(0), r2(0);
    SkeletonSequence a = synth_walker(p, 90, 30, r1);
    SkeletonSequence b = synth_walker(p, 90, 30, r2);
    CHECK(a.frames.data == b.frames.data);
    CHECK(a.num_frames() == 30);
    CHECK(a.frames.all_finite());

    Rng r3(0);
    SkeletonSequence c = synth_walker(p, 0, 30, r3);
    double diff = 0.0;
    for (size_t i = 0; i < a.frames.data.size(); ++i)
        diff = std::max(diff, std::fabs(a.frames.data[i] - c.frames.data[i]));
    CHECK(diff > 0.01);  // rotation changes the projection

    // different identity seeds walk differently
    WalkerParams q = WalkerParams::from_seed(43, 0.0);
    Rng r4(0);
    SkeletonSequence d = synth_walker(q, 90, 30, r4);
    diff = 0.0;
    for (size_t i = 0; i < a.frames.data.size(); ++i)
        diff = std::max(diff, std::fabs(a.frames.data[i] - d.frames.data[i]));
    CHECK(diff > 0.01);
}

TEST_CASE("walker legs move in anti-phase at side view") {
    WalkerParams p = WalkerParams::from_seed(7, 0.0);
    Rng rng(0);
    const int T = 100;
    SkeletonSequence seq = synth_walker(p, 90, T, rng);
    // right knee (9) and left knee (12) horizontal offsets from their hips
    // should be negatively correlated over a stride
    double corr = 0.0;
    for (int t = 0; t < T; ++t) {
        const double r = seq.frames.at({t, 9, 0}) - seq.frames.at({t, 8, 0});
        const double l = seq.frames.at({t, 12, 0}) - seq.frames.at({t, 11, 0});
        corr += r * l;
    }
    CHECK(corr < 0.0);
}

TEST_CASE("walkers normalize cleanly") {
    WalkerParams p = WalkerParams::from_seed(11, 0.01);
    Rng rng(5);
    SkeletonSequence seq = synth_walker(p, 54, 40, rng);
    SkeletonSequence norm = normalize_sequence(seq);
    CHECK(norm.frames.all_finite());
    CHECK(norm.frames.max_abs() < 20.0);
}

TEST_CASE("synthetic dataset generation is reproducible on disk") {
    TempDir tmp("synthgen");
    SynthDatasetSpec spec;
    spec.identities = 2;
    spec.views = {0, 90};
    spec.clips_per_view = 2;
    spec.frames = 5;
    spec.noise_sigma = 0.01;
    spec.seed = 77;
    generate_synthetic_dataset(spec, (tmp.path / "a").string());
    generate_synthetic_dataset(spec, (tmp.path / "b").string());

    CHECK(fs::exists(tmp.path / "a" / "manifest.txt"));
    const fs::path sample = fs::path("001") / "nm-02" / "090" / "frame_000003.json";
    CHECK(read_file(tmp.path / "a" / sample) == read_file(tmp.path / "b" / sample));
    CHECK(read_file(tmp.path / "a" / "manifest.txt") == read_file(tmp.path / "b" / "manifest.txt"));

    // generated tree indexes under the synthetic protocol
    DatasetIndex idx = load_dataset((tmp.path / "a").string(), DataFormat::openpose_json, "synthetic");
    CHECK(idx.entries.size() == 2 * 2 * 2);
    // and the clips load and normalize
    JointLayout layout = openpose18_layout();
    SkeletonSequence seq = load_clip(idx.entries[0], DataFormat::openpose_json, layout);
    CHECK(seq.num_frames() == 5);
    CHECK_NOTHROW(normalize_sequence(seq));
}
