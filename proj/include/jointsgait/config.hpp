#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "jointsgait/jrpm.hpp"
#include "jointsgait/tensor.hpp"

namespace jointsgait {

// Flat dotted-key config. One "key = value" per line, '#' comments, lists
// comma separated. Defaults follow the published training setup wherever it
// states one.

struct TrainConfig {
    std::string layout = "openpose18";
    std::vector<int> scales = {1, 2, 3};
    std::string pool_mode = "learned_kernel";
    std::vector<int> channels = {64, 64, 64, 128, 128, 128, 256, 256, 256};
    std::vector<int> strides = {1, 1, 1, 2, 1, 1, 2, 1, 1};
    int kt = 9;
    int t_target = 120;
    int d_out = 512;

    double lambda = 0.9;
    double m_tri = 0.2;
    double m_arc = 0.35;
    double arc_scale = 30.0;

    int p = 8;
    int k = 16;
    int iterations = 80000;
    double lr = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    uint64_t seed = 1;
    int checkpoint_interval = 1000;

    std::string data_root;
    std::string data_format = "openpose_json";
    std::string protocol = "casiab";
    std::string out_dir = "out";

    // synthetic generation
    int synth_identities = 8;
    std::vector<int> synth_views = {0, 54, 90, 180};
    int synth_clips = 4;
    int synth_frames = 120;
    double synth_noise_sigma = 0.01;

    void validate() const {
        for (int s : scales)
            if (s < 1 || s > 6) throw ConfigError("model.scales entry " + std::to_string(s) + " outside 1..6");
        if (scales.empty()) throw ConfigError("model.scales must be nonempty");
        if (lambda < 0.0 || lambda > 1.0) throw ConfigError("loss.lambda must lie in [0,1]");
        if (p * k < 4) throw ConfigError("train.p * train.k must be >= 4");
        if (m_tri < 0.0 || m_arc < 0.0) throw ConfigError("margins must be >= 0");
        if (channels.size() != strides.size())
            throw ConfigError("model.channels and model.strides must have equal length");
        if (channels.empty()) throw ConfigError("model.channels must be nonempty");
        if (kt % 2 == 0) throw ConfigError("model.kt must be odd");
        if (t_target < 1) throw ConfigError("model.t_target must be >= 1");
        parse_pool_mode(pool_mode);
        build_layout(layout);
        parse_data_format_name(data_format);
    }

    static void parse_data_format_name(const std::string& s) {
        if (s != "openpose_json" && s != "kinect_txt")
            throw ConfigError("unknown data.format '" + s + "'");
    }
};

namespace detail {

inline std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.find_first_not_of(" \t") == std::string::npos) continue;
        out.push_back(std::stoi(item));
    }
    return out;
}

inline std::string join_ints(const std::vector<int>& v) {
    std::ostringstream os;
    for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

inline void config_set(TrainConfig& c, const std::string& key, const std::string& value) {
    using detail::parse_int_list;
    try {
        if (key == "model.layout") c.layout = value;
        else if (key == "model.scales") c.scales = parse_int_list(value);
        else if (key == "model.pool_mode") c.pool_mode = value;
        else if (key == "model.channels") c.channels = parse_int_list(value);
        else if (key == "model.strides") c.strides = parse_int_list(value);
        else if (key == "model.kt") c.kt = std::stoi(value);
        else if (key == "model.t_target") c.t_target = std::stoi(value);
        else if (key == "model.d_out") c.d_out = std::stoi(value);
        else if (key == "loss.lambda") c.lambda = std::stod(value);
        else if (key == "loss.m_tri") c.m_tri = std::stod(value);
        else if (key == "loss.m_arc") c.m_arc = std::stod(value);
        else if (key == "loss.arc_scale") c.arc_scale = std::stod(value);
        else if (key == "train.p") c.p = std::stoi(value);
        else if (key == "train.k") c.k = std::stoi(value);
        else if (key == "train.iterations") c.iterations = std::stoi(value);
        else if (key == "train.lr") c.lr = std::stod(value);
        else if (key == "train.adam_beta1") c.adam_beta1 = std::stod(value);
        else if (key == "train.adam_beta2") c.adam_beta2 = std::stod(value);
        else if (key == "train.seed") c.seed = std::stoull(value);
        else if (key == "train.checkpoint_interval") c.checkpoint_interval = std::stoi(value);
        else if (key == "data.root") c.data_root = value;
        else if (key == "data.format") c.data_format = value;
        else if (key == "data.protocol") c.protocol = value;
        else if (key == "out.dir") c.out_dir = value;
        else if (key == "synth.identities") c.synth_identities = std::stoi(value);
        else if (key == "synth.views") c.synth_views = parse_int_list(value);
        else if (key == "synth.clips") c.synth_clips = std::stoi(value);
        else if (key == "synth.frames") c.synth_frames = std::stoi(value);
        else if (key == "synth.noise_sigma") c.synth_noise_sigma = std::stod(value);
        else throw ConfigError("unknown config key '" + key + "'");
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("bad value '" + value + "' for key '" + key + "'");
    }
}

inline std::string config_to_string(const TrainConfig& c) {
    using detail::join_ints;
    std::ostringstream os;
    os << "model.layout = " << c.layout << "\n";
    os << "model.scales = " << join_ints(c.scales) << "\n";
    os << "model.pool_mode = " << c.pool_mode << "\n";
    os << "model.channels = " << join_ints(c.channels) << "\n";
    os << "model.strides = " << join_ints(c.strides) << "\n";
    os << "model.kt = " << c.kt << "\n";
    os << "model.t_target = " << c.t_target << "\n";
    os << "model.d_out = " << c.d_out << "\n";
    os << "loss.lambda = " << c.lambda << "\n";
    os << "loss.m_tri = " << c.m_tri << "\n";
    os << "loss.m_arc = " << c.m_arc << "\n";
    os << "loss.arc_scale = " << c.arc_scale << "\n";
    os << "train.p = " << c.p << "\n";
    os << "train.k = " << c.k << "\n";
    os << "train.iterations = " << c.iterations << "\n";
    os << "train.lr = " << c.lr << "\n";
    os << "train.adam_beta1 = " << c.adam_beta1 << "\n";
    os << "train.adam_beta2 = " << c.adam_beta2 << "\n";
    os << "train.seed = " << c.seed << "\n";
    os << "train.checkpoint_interval = " << c.checkpoint_interval << "\n";
    os << "data.root = " << c.data_root << "\n";
    os << "data.format = " << c.data_format << "\n";
    os << "data.protocol = " << c.protocol << "\n";
    os << "out.dir = " << c.out_dir << "\n";
    os << "synth.identities = " << c.synth_identities << "\n";
    os << "synth.views = " << join_ints(c.synth_views) << "\n";
    os << "synth.clips = " << c.synth_clips << "\n";
    os << "synth.frames = " << c.synth_frames << "\n";
    os << "synth.noise_sigma = " << c.synth_noise_sigma << "\n";
    return os.str();
}

inline TrainConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config '" + path + "'");
    TrainConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
        config_set(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    return c;
}

}  // namespace jointsgait
