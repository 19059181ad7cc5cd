#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jointsgait/skeleton.hpp"

namespace jointsgait {

namespace fs = std::filesystem;

struct IngestionError : std::runtime_error {
    explicit IngestionError(const std::string& msg) : std::runtime_error("ingest: " + msg) {}
};
struct SamplingError : std::runtime_error {
    explicit SamplingError(const std::string& msg) : std::runtime_error("sampling: " + msg) {}
};

enum class DataFormat { openpose_json, kinect_txt };

inline DataFormat parse_data_format(const std::string& s) {
    if (s == "openpose_json") return DataFormat::openpose_json;
    if (s == "kinect_txt") return DataFormat::kinect_txt;
    throw ConfigError("unknown data format '" + s + "'");
}

struct ClipEntry {
    std::string path;  // clip directory (openpose) or file (kinect)
    std::string subject;
    int identity = -1;  // dense within its split population
    Condition condition = Condition::UNKNOWN;
    int seq = 0;
    int view_deg = 0;
    bool train = false;
    bool gallery = false;
    bool probe = false;
};

struct DatasetIndex {
    std::vector<ClipEntry> entries;
    int num_train_classes = 0;
    DataFormat format = DataFormat::openpose_json;
    std::string protocol;
};

// ---------------------------------------------------------------------------
// Clip loaders
// ---------------------------------------------------------------------------

/// One JSON file per frame with people[0].pose_keypoints_2d as 54 floats.
/// Frames ordered by lexicographic file name. Frames with no detected person
/// get zero confidence and are filled later by normalize_sequence.
inline SkeletonSequence load_openpose_clip(const std::string& dir, const JointLayout& layout) {
    std::vector<fs::path> files;
    if (!fs::is_directory(dir)) throw IngestionError("not a clip directory: " + dir);
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IngestionError("no keypoint files in " + dir);
    const int V = layout.joint_count;
    const int T = static_cast<int>(files.size());
    SkeletonSequence seq;
    seq.layout = layout;
    seq.frames = Tensor({T, V, 2});
    seq.confidence = Tensor({T, V});
    for (int t = 0; t < T; ++t) {
        std::ifstream is(files[static_cast<size_t>(t)]);
        nlohmann::json j;
        try {
            is >> j;
        } catch (const nlohmann::json::exception& e) {
            throw IngestionError("malformed JSON in " + files[static_cast<size_t>(t)].string() + ": " + e.what());
        }
        if (!j.contains("people") || !j["people"].is_array())
            throw IngestionError("missing people array in " + files[static_cast<size_t>(t)].string());
        if (j["people"].empty()) continue;  // no detection this frame
        const auto& kp = j["people"][0]["pose_keypoints_2d"];
        if (!kp.is_array() || kp.size() != static_cast<size_t>(3 * V))
            throw IngestionError("expected " + std::to_string(3 * V) + " keypoint floats in " +
                                 files[static_cast<size_t>(t)].string());
        for (int v = 0; v < V; ++v) {
            seq.frames.at({t, v, 0}) = kp[static_cast<size_t>(3 * v)].get<double>();
            seq.frames.at({t, v, 1}) = kp[static_cast<size_t>(3 * v + 1)].get<double>();
            seq.confidence.at({t, v}) = kp[static_cast<size_t>(3 * v + 2)].get<double>();
        }
    }
    return seq;
}

/// Plain text, one line per frame, 20 (x,y,z) triples; depth discarded and
/// the kinect2d16 joint subset kept.
inline SkeletonSequence load_kinect_clip(const std::string& file, const JointLayout& layout) {
    std::ifstream is(file);
    if (!is) throw IngestionError("cannot open " + file);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::istringstream ls(line);
        std::vector<double> vals;
        double v;
        while (ls >> v) vals.push_back(v);
        if (vals.size() != 60)
            throw IngestionError("expected 60 values per line in " + file + ", got " +
                                 std::to_string(vals.size()));
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw IngestionError("no frames in " + file);
    const auto& keep = kinect20_keep_indices();
    const int V = layout.joint_count;
    const int T = static_cast<int>(rows.size());
    SkeletonSequence seq;
    seq.layout = layout;
    seq.frames = Tensor({T, V, 2});
    seq.confidence = Tensor::ones({T, V});
    for (int t = 0; t < T; ++t)
        for (int v = 0; v < V; ++v) {
            seq.frames.at({t, v, 0}) = rows[static_cast<size_t>(t)][static_cast<size_t>(3 * keep[static_cast<size_t>(v)])];
            seq.frames.at({t, v, 1}) = rows[static_cast<size_t>(t)][static_cast<size_t>(3 * keep[static_cast<size_t>(v)] + 1)];
        }
    return seq;
}

inline SkeletonSequence load_clip(const ClipEntry& e, DataFormat format, const JointLayout& layout) {
    SkeletonSequence seq = format == DataFormat::openpose_json
                               ? load_openpose_clip(e.path, layout)
                               : load_kinect_clip(e.path, layout);
    seq.identity = e.identity;
    seq.view_deg = e.view_deg;
    seq.seq_num = e.seq;
    seq.condition = e.condition;
    return seq;
}

// ---------------------------------------------------------------------------
// Dataset indexing
// ---------------------------------------------------------------------------

namespace detail {

inline Condition parse_condition(const std::string& s) {
    if (s == "nm" || s == "NM") return Condition::NM;
    if (s == "bg" || s == "BG") return Condition::BG;
    if (s == "cl" || s == "CL") return Condition::CL;
    return Condition::UNKNOWN;
}

inline void densify(std::vector<ClipEntry*>& entries) {
    std::map<std::string, int> ids;
    for (ClipEntry* e : entries) ids.emplace(e->subject, 0);
    int next = 0;
    for (auto& [s, id] : ids) id = next++;
    for (ClipEntry* e : entries) e->identity = ids[e->subject];
}

}  // namespace detail

/// Directory conventions:
///   openpose_json: <root>/<subject>/<condition>-<seq>/<view>/*.json
///   kinect_txt:    <root>/<subject>/<seq>.txt
/// Protocols: "casiab" (first 62 subjects train; test gallery NM#1-4, probes
/// NM#5-6, BG#1-2, CL#1-2), "synthetic" (per subject+view the highest seq is
/// held out as both gallery and probe, the rest train; closed set), and
/// "kinectgait" (closed set; last seq per subject probe, the rest train and
/// gallery).
inline DatasetIndex load_dataset(const std::string& root, DataFormat format,
                                 const std::string& protocol) {
    if (!fs::is_directory(root)) throw IngestionError("dataset root not found: " + root);
    DatasetIndex idx;
    idx.format = format;
    idx.protocol = protocol;

    std::vector<fs::path> subjects;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) subjects.push_back(e.path());
    std::sort(subjects.begin(), subjects.end());
    if (subjects.empty()) throw IngestionError("empty dataset root: " + root);

    for (const auto& subj : subjects) {
        const std::string subject = subj.filename().string();
        if (format == DataFormat::openpose_json) {
            std::vector<fs::path> clips;
            for (const auto& c : fs::directory_iterator(subj))
                if (c.is_directory()) clips.push_back(c.path());
            std::sort(clips.begin(), clips.end());
            for (const auto& clip : clips) {
                const std::string cname = clip.filename().string();
                const auto dash = cname.find('-');
                if (dash == std::string::npos)
                    throw IngestionError("malformed clip directory name '" + cname + "' under " + subject);
                ClipEntry e;
                e.subject = subject;
                e.condition = detail::parse_condition(cname.substr(0, dash));
                if (e.condition == Condition::UNKNOWN)
                    throw IngestionError("unknown condition in '" + cname + "' under " + subject);
                try {
                    e.seq = std::stoi(cname.substr(dash + 1));
                } catch (...) {
                    throw IngestionError("bad sequence number in '" + cname + "'");
                }
                std::vector<fs::path> views;
                for (const auto& v : fs::directory_iterator(clip))
                    if (v.is_directory()) views.push_back(v.path());
                std::sort(views.begin(), views.end());
                for (const auto& view : views) {
                    ClipEntry ve = e;
                    try {
                        ve.view_deg = std::stoi(view.filename().string());
                    } catch (...) {
                        throw IngestionError("bad view directory '" + view.filename().string() + "'");
                    }
                    ve.path = view.string();
                    idx.entries.push_back(std::move(ve));
                }
            }
        } else {
            std::vector<fs::path> files;
            for (const auto& f : fs::directory_iterator(subj))
                if (f.is_regular_file() && f.path().extension() == ".txt") files.push_back(f.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
                ClipEntry e;
                e.subject = subject;
                e.condition = Condition::NM;
                try {
                    e.seq = std::stoi(f.stem().string());
                } catch (...) {
                    throw IngestionError("bad kinect clip name '" + f.filename().string() + "'");
                }
                e.path = f.string();
                idx.entries.push_back(std::move(e));
            }
        }
    }
    if (idx.entries.empty()) throw IngestionError("no clips found under " + root);

    // split assignment
    if (protocol == "casiab") {
        std::vector<std::string> subj_names;
        for (const auto& s : subjects) subj_names.push_back(s.filename().string());
        const size_t n_train = 62 < subj_names.size() ? 62 : subj_names.size();
        std::map<std::string, bool> is_train;
        for (size_t i = 0; i < subj_names.size(); ++i) is_train[subj_names[i]] = i < n_train;
        for (ClipEntry& e : idx.entries) {
            if (is_train[e.subject]) {
                e.train = true;
            } else if (e.condition == Condition::NM && e.seq >= 1 && e.seq <= 4) {
                e.gallery = true;
            } else if ((e.condition == Condition::NM && (e.seq == 5 || e.seq == 6)) ||
                       (e.condition == Condition::BG && (e.seq == 1 || e.seq == 2)) ||
                       (e.condition == Condition::CL && (e.seq == 1 || e.seq == 2))) {
                e.probe = true;
            }
        }
    } else if (protocol == "synthetic") {
        std::map<std::pair<std::string, int>, int> max_seq;
        for (const ClipEntry& e : idx.entries) {
            auto key = std::make_pair(e.subject, e.view_deg);
            auto it = max_seq.find(key);
            if (it == max_seq.end() || e.seq > it->second) max_seq[key] = e.seq;
        }
        for (ClipEntry& e : idx.entries) {
            if (e.seq == max_seq[{e.subject, e.view_deg}]) {
                e.gallery = e.probe = true;
            } else {
                e.train = true;
            }
        }
    } else if (protocol == "kinectgait") {
        std::map<std::string, int> max_seq;
        for (const ClipEntry& e : idx.entries) {
            auto it = max_seq.find(e.subject);
            if (it == max_seq.end() || e.seq > it->second) max_seq[e.subject] = e.seq;
        }
        for (ClipEntry& e : idx.entries) {
            if (e.seq == max_seq[e.subject]) {
                e.probe = true;
            } else {
                e.train = e.gallery = true;
            }
        }
    } else {
        throw ConfigError("unknown protocol '" + protocol + "'");
    }

    std::vector<ClipEntry*> train_entries, test_entries;
    for (ClipEntry& e : idx.entries)
        (e.train ? train_entries : test_entries).push_back(&e);
    detail::densify(train_entries);
    if (!test_entries.empty()) detail::densify(test_entries);
    std::map<std::string, int> train_subjects;
    for (ClipEntry* e : train_entries) train_subjects.emplace(e->subject, 0);
    idx.num_train_classes = static_cast<int>(train_subjects.size());
    return idx;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Draw P distinct train identities, K clips each (with replacement only if an
/// identity has fewer than K clips). Returns entry indices, grouped by identity.
inline std::vector<size_t> pk_sample(const DatasetIndex& index, int P, int K, Rng& rng) {
    std::map<int, std::vector<size_t>> by_identity;
    for (size_t i = 0; i < index.entries.size(); ++i)
        if (index.entries[i].train) by_identity[index.entries[i].identity].push_back(i);
    if (static_cast<int>(by_identity.size()) < P)
        throw SamplingError("need " + std::to_string(P) + " identities, have " +
                            std::to_string(by_identity.size()));
    std::vector<int> ids;
    for (const auto& [id, clips] : by_identity) ids.push_back(id);
    rng.shuffle(ids);
    ids.resize(static_cast<size_t>(P));

    std::vector<size_t> batch;
    batch.reserve(static_cast<size_t>(P) * K);
    for (int id : ids) {
        const auto& clips = by_identity[id];
        if (static_cast<int>(clips.size()) >= K) {
            std::vector<size_t> pool = clips;
            rng.shuffle(pool);
            for (int k = 0; k < K; ++k) batch.push_back(pool[static_cast<size_t>(k)]);
        } else {
            for (int k = 0; k < K; ++k)
                batch.push_back(clips[static_cast<size_t>(rng.below(clips.size()))]);
        }
    }
    return batch;
}

/// Fixed-length temporal sampling: a sorted random subset when the clip is
/// long enough, cyclic tiling otherwise. Order is never disturbed.
inline SkeletonSequence sample_frames(const SkeletonSequence& seq, int t_target, Rng& rng) {
    const int T = seq.num_frames();
    if (T < 1) throw DataError("sample_frames: empty sequence");
    const int V = seq.layout.joint_count;
    std::vector<int> pick;
    pick.reserve(static_cast<size_t>(t_target));
    if (T >= t_target) {
        std::vector<int> all(static_cast<size_t>(T));
        for (int t = 0; t < T; ++t) all[static_cast<size_t>(t)] = t;
        rng.shuffle(all);
        all.resize(static_cast<size_t>(t_target));
        std::sort(all.begin(), all.end());
        pick = std::move(all);
    } else {
        for (int t = 0; t < t_target; ++t) pick.push_back(t % T);
    }
    SkeletonSequence out = seq;
    out.frames = Tensor({t_target, V, 2});
    out.confidence = Tensor({t_target, V});
    for (int t = 0; t < t_target; ++t) {
        const int src = pick[static_cast<size_t>(t)];
        for (int v = 0; v < V; ++v) {
            out.frames.at({t, v, 0}) = seq.frames.at({src, v, 0});
            out.frames.at({t, v, 1}) = seq.frames.at({src, v, 1});
            out.confidence.at({t, v}) = seq.confidence.at({src, v});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic walker
// ---------------------------------------------------------------------------

struct WalkerParams {
    uint64_t identity_seed = 0;
    double thigh = 0.45, shank = 0.42, upper_arm = 0.30, forearm = 0.26;
    double stride_freq = 1.0 / 30.0;  // cycles per frame
    double leg_amp = 0.5, arm_amp = 0.4;
    double leg_phase = 0.0;
    // arms oppose the same-side legs; the offset is fixed at pi
    double arm_phase_offset = 3.14159265358979323846;
    double torso = 0.55;
    double noise_sigma = 0.0;

    static WalkerParams from_seed(uint64_t seed, double noise_sigma) {
        Rng r(seed);
        WalkerParams p;
        p.identity_seed = seed;
        p.thigh = r.uniform(0.36, 0.54);
        p.shank = r.uniform(0.33, 0.50);
        p.upper_arm = r.uniform(0.24, 0.36);
        p.forearm = r.uniform(0.20, 0.32);
        p.stride_freq = r.uniform(0.02, 0.05);
        p.leg_amp = r.uniform(0.30, 0.70);
        p.arm_amp = r.uniform(0.25, 0.60);
        p.leg_phase = r.uniform(0.0, 6.2831853);
        p.torso = r.uniform(0.48, 0.62);
        p.noise_sigma = noise_sigma;
        return p;
    }
};

/// Planar stick-figure walker: hips fixed at the origin, sinusoidal limb
/// swings, arms in phase opposition to same-side legs, then rotation about
/// the vertical axis by view_deg and orthographic projection to 2D.
inline SkeletonSequence synth_walker(const WalkerParams& p, int view_deg, int T, Rng& rng) {
    if (T < 1) throw DataError("synth_walker: T must be >= 1");
    const double kPi = 3.14159265358979323846;
    const JointLayout layout = openpose18_layout();
    const int V = layout.joint_count;
    SkeletonSequence seq;
    seq.layout = layout;
    seq.view_deg = view_deg;
    seq.frames = Tensor({T, V, 2});
    seq.confidence = Tensor::ones({T, V});
    const double psi = static_cast<double>(view_deg) * kPi / 180.0;
    const double cpsi = std::cos(psi), spsi = std::sin(psi);

    const double hip_w = 0.11, shoulder_w = 0.17;
    for (int t = 0; t < T; ++t) {
        const double phase = 2.0 * kPi * p.stride_freq * t + p.leg_phase;
        const double sway = 0.03 * std::sin(phase);

        // 3D joints: x lateral, y up, z along the walking direction
        std::array<std::array<double, 3>, 18> J{};
        auto set = [&](int idx, double x, double y, double z) {
            J[static_cast<size_t>(idx)] = {x + sway, y, z};
        };
        auto limb_dir = [](double len, double ang) {
            return std::array<double, 2>{-len * std::cos(ang), len * std::sin(ang)};
        };

        set(1, 0.0, p.torso, 0.0);                               // neck
        set(0, 0.0, p.torso + 0.12, 0.05);                       // nose
        set(14, -0.035, p.torso + 0.16, 0.04);                   // right eye
        set(15, 0.035, p.torso + 0.16, 0.04);                    // left eye
        set(16, -0.07, p.torso + 0.12, 0.0);                     // right ear
        set(17, 0.07, p.torso + 0.12, 0.0);                      // left ear
        set(8, -hip_w, 0.0, 0.0);                                // right hip
        set(11, hip_w, 0.0, 0.0);                                // left hip
        set(2, -shoulder_w, p.torso, 0.0);                       // right shoulder
        set(5, shoulder_w, p.torso, 0.0);                        // left shoulder

        auto swing_chain = [&](int base, int mid, int tip, double l1, double l2,
                               double amp, double ph, double bend) {
            const double a1 = amp * std::sin(ph);
            const auto [dy1, dz1] = limb_dir(l1, a1);
            const auto& b = J[static_cast<size_t>(base)];
            set(mid, b[0] - sway, b[1] + dy1, b[2] + dz1);
            const double a2 = a1 - bend * (1.0 + std::cos(ph)) * 0.5;
            const auto [dy2, dz2] = limb_dir(l2, a2);
            const auto& mj = J[static_cast<size_t>(mid)];
            set(tip, mj[0] - sway, mj[1] + dy2, mj[2] + dz2);
        };

        const double leg_bend = 0.35 * p.leg_amp;
        const double arm_bend = 0.30 * p.arm_amp;
        swing_chain(8, 9, 10, p.thigh, p.shank, p.leg_amp, phase, leg_bend);          // right leg
        swing_chain(11, 12, 13, p.thigh, p.shank, p.leg_amp, phase + kPi, leg_bend);  // left leg
        swing_chain(2, 3, 4, p.upper_arm, p.forearm, p.arm_amp,
                    phase + p.arm_phase_offset, arm_bend);                            // right arm
        swing_chain(5, 6, 7, p.upper_arm, p.forearm, p.arm_amp,
                    phase + kPi + p.arm_phase_offset, arm_bend);                      // left arm

        for (int v = 0; v < V; ++v) {
            const auto& j = J[static_cast<size_t>(v)];
            seq.frames.at({t, v, 0}) = j[0] * cpsi + j[2] * spsi;
            seq.frames.at({t, v, 1}) = j[1];
        }
    }
    if (p.noise_sigma > 0.0)
        for (double& v : seq.frames.data) v += p.noise_sigma * rng.normal();
    return seq;
}

// ---------------------------------------------------------------------------
// Synthetic dataset generation (openpose_json layout on disk)
// ---------------------------------------------------------------------------

struct SynthDatasetSpec {
    int identities = 8;
    std::vector<int> views = {0, 54, 90, 180};
    int clips_per_view = 4;
    int frames = 120;
    double noise_sigma = 0.01;
    uint64_t seed = 1;
};

inline uint64_t mix64(uint64_t h, uint64_t k) {
    h ^= k + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return h;
}

/// Emit walker clips as per-frame OpenPose JSON files plus a manifest.
/// Fully determined by the spec (same seed, byte-identical output).
inline void generate_synthetic_dataset(const SynthDatasetSpec& spec, const std::string& root) {
    fs::create_directories(root);
    std::ostringstream manifest;
    manifest << "identities = " << spec.identities << "\n";
    manifest << "clips_per_view = " << spec.clips_per_view << "\n";
    manifest << "frames = " << spec.frames << "\n";
    manifest << "noise_sigma = " << spec.noise_sigma << "\n";
    manifest << "seed = " << spec.seed << "\n";
    manifest << "views =";
    for (int v : spec.views) manifest << " " << v;
    manifest << "\n";

    for (int id = 1; id <= spec.identities; ++id) {
        const WalkerParams params =
            WalkerParams::from_seed(mix64(spec.seed, static_cast<uint64_t>(id)), spec.noise_sigma);
        std::ostringstream subj;
        subj << std::setfill('0') << std::setw(3) << id;
        for (int c = 1; c <= spec.clips_per_view; ++c) {
            for (int view : spec.views) {
                std::ostringstream dir;
                dir << root << "/" << subj.str() << "/nm-" << std::setfill('0') << std::setw(2)
                    << c << "/" << std::setw(3) << view;
                fs::create_directories(dir.str());
                Rng noise(mix64(mix64(mix64(spec.seed, static_cast<uint64_t>(id)),
                                      static_cast<uint64_t>(view + 1)),
                                static_cast<uint64_t>(c)));
                SkeletonSequence seq = synth_walker(params, view, spec.frames, noise);
                const int V = seq.layout.joint_count;
                for (int t = 0; t < spec.frames; ++t) {
                    std::vector<double> kp;
                    kp.reserve(static_cast<size_t>(3 * V));
                    for (int v = 0; v < V; ++v) {
                        kp.push_back(seq.frames.at({t, v, 0}));
                        kp.push_back(seq.frames.at({t, v, 1}));
                        kp.push_back(seq.confidence.at({t, v}));
                    }
                    nlohmann::json j;
                    j["people"] = nlohmann::json::array();
                    j["people"].push_back({{"pose_keypoints_2d", kp}});
                    std::ostringstream fname;
                    fname << dir.str() << "/frame_" << std::setfill('0') << std::setw(6) << t
                          << ".json";
                    std::ofstream os(fname.str());
                    os << j.dump();
                }
            }
        }
    }
    std::ofstream mos(std::string(root) + "/manifest.txt");
    mos << manifest.str();
}

}  // namespace jointsgait
