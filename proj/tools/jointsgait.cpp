// JointsGait toolkit command line: synthetic data generation, training,
// embedding extraction, and gallery/probe evaluation.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "jointsgait/model.hpp"

namespace jg = jointsgait;
namespace fs = std::filesystem;

namespace {

struct ConfigArgs {
    std::string config_path;
    std::vector<std::string> overrides;

    jg::TrainConfig resolve() const {
        jg::TrainConfig cfg = config_path.empty() ? jg::TrainConfig{} : jg::load_config(config_path);
        for (const std::string& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw jg::ConfigError("override '" + kv + "' is not key=value");
            jg::config_set(cfg, jg::detail::trim(kv.substr(0, eq)), jg::detail::trim(kv.substr(eq + 1)));
        }
        return cfg;
    }
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
    cmd->add_option("--config", args.config_path, "flat key=value config file");
    cmd->add_option("--set", args.overrides, "config override, key=value (repeatable)");
}

std::string config_with_pyramid_tables(const jg::TrainConfig& cfg) {
    std::ostringstream os;
    os << jg::config_to_string(cfg);
    const jg::PyramidSpec spec =
        jg::build_pyramid(jg::build_layout(cfg.layout), cfg.scales, jg::parse_pool_mode(cfg.pool_mode));
    for (size_t si = 0; si < spec.scales.size(); ++si)
        for (size_t g = 0; g < spec.groups[si].size(); ++g) {
            os << "# pyramid.scale" << spec.scales[si] << ".group" << g + 1 << " =";
            for (int j : spec.groups[si][g]) os << " " << j;
            os << "\n";
        }
    return os.str();
}

int cmd_synth(const jg::TrainConfig& cfg) {
    std::cout << "seed=" << cfg.seed << " out.dir=" << cfg.out_dir << "\n";
    jg::SynthDatasetSpec spec;
    spec.identities = cfg.synth_identities;
    spec.views = cfg.synth_views;
    spec.clips_per_view = cfg.synth_clips;
    spec.frames = cfg.synth_frames;
    spec.noise_sigma = cfg.synth_noise_sigma;
    spec.seed = cfg.seed;
    jg::generate_synthetic_dataset(spec, cfg.out_dir);
    std::cout << "wrote " << cfg.synth_identities * static_cast<int>(cfg.synth_views.size()) *
                     cfg.synth_clips
              << " clips under " << cfg.out_dir << "\n";
    return 0;
}

int cmd_train(const jg::TrainConfig& cfg) {
    cfg.validate();
    std::cout << "seed=" << cfg.seed << " data.root=" << cfg.data_root
              << " out.dir=" << cfg.out_dir << "\n";
    jg::DatasetIndex index =
        jg::load_dataset(cfg.data_root, jg::parse_data_format(cfg.data_format), cfg.protocol);
    jg::Rng rng(cfg.seed);
    jg::GaitModel model = jg::GaitModel::create(cfg, index.num_train_classes, rng);
    fs::create_directories(cfg.out_dir);
    {
        std::ofstream os(cfg.out_dir + "/config.txt");
        os << config_with_pyramid_tables(cfg);
    }
    jg::TrainOutput out = jg::train_model(cfg, model, index, [](const jg::TrainLogRow& r) {
        if (r.iteration % 10 == 0 || r.iteration == 1)
            std::cout << "iter " << r.iteration << " loss " << r.total << " (tri " << r.triplet
                      << ", arc " << r.arcface << ")\n";
    });
    std::cout << "checkpoint: " << out.checkpoint_path << "\nloss log: " << out.loss_csv_path << "\n";
    return 0;
}

int cmd_embed(const jg::TrainConfig& cfg, const std::string& checkpoint, const std::string& split,
              const std::string& out_file) {
    cfg.validate();
    std::cout << "seed=" << cfg.seed << " checkpoint=" << checkpoint
              << " data.root=" << cfg.data_root << " out=" << out_file << "\n";
    jg::DatasetIndex index =
        jg::load_dataset(cfg.data_root, jg::parse_data_format(cfg.data_format), cfg.protocol);
    const auto records = jg::load_checkpoint(checkpoint);
    const auto arc_it = records.find("arcface.W");
    if (arc_it == records.end())
        throw jg::CheckpointError("no arcface head in " + checkpoint);
    jg::Rng rng(cfg.seed);
    jg::GaitModel model = jg::GaitModel::create(cfg, arc_it->second.dim(0), rng);
    model.load(checkpoint);
    jg::EmbeddingSet set = jg::embed_split(model, index, split, cfg.seed);
    jg::save_embeddings(out_file, set);
    std::cout << "wrote " << set.size() << " embeddings (dim " << set.dim() << ")\n";
    return 0;
}

int cmd_eval(const std::string& gallery_file, const std::vector<std::string>& probe_files,
             const std::string& protocol, const std::string& out_dir,
             const std::vector<int>& sweep_sizes, int sweep_trials, uint64_t seed) {
    std::cout << "seed=" << seed << " gallery=" << gallery_file << " out.dir=" << out_dir << "\n";
    jg::EmbeddingSet merged = jg::load_embeddings(gallery_file);
    for (const std::string& pf : probe_files) {
        jg::EmbeddingSet p = jg::load_embeddings(pf);
        if (p.dim() != merged.dim())
            throw jg::ProtocolError("embedding dim mismatch: " + std::to_string(p.dim()) + " vs " +
                                    std::to_string(merged.dim()));
        std::set<std::string> have(merged.clip_ids.begin(), merged.clip_ids.end());
        for (int i = 0; i < p.size(); ++i)
            if (!have.count(p.clip_ids[static_cast<size_t>(i)])) {
                jg::EmbeddingSet row = p.select({i});
                const int m = merged.size();
                jg::Tensor grown({m + 1, merged.dim()});
                std::copy(merged.embeddings.data.begin(), merged.embeddings.data.end(), grown.data.begin());
                std::copy(row.embeddings.data.begin(), row.embeddings.data.end(),
                          grown.data.begin() + static_cast<int64_t>(m) * merged.dim());
                merged.embeddings = std::move(grown);
                merged.clip_ids.push_back(row.clip_ids[0]);
                merged.labels.push_back(row.labels[0]);
                merged.views.push_back(row.views[0]);
                merged.conditions.push_back(row.conditions[0]);
                merged.seqs.push_back(row.seqs[0]);
            }
    }

    jg::CrossViewReport rep = jg::cross_view_eval(merged, protocol);
    fs::create_directories(out_dir);
    std::vector<jg::Condition> expected = protocol == "casiab"
        ? std::vector<jg::Condition>{jg::Condition::NM, jg::Condition::BG, jg::Condition::CL}
        : std::vector<jg::Condition>{jg::Condition::NM};
    for (jg::Condition c : expected)
        if (!rep.matrix.count(c))
            std::cout << "warning: no probe clips for condition " << jg::condition_name(c)
                      << "; omitted from report\n";
    std::ostringstream summary;
    summary << "condition,average,std\n";
    for (const auto& [c, m] : rep.matrix) {
        std::ofstream os(out_dir + "/matrix_" + jg::condition_name(c) + ".csv");
        os << jg::report_matrix_csv(rep, c);
        summary << jg::condition_name(c) << "," << std::setprecision(10) << rep.average.at(c)
                << "," << rep.stddev.at(c) << "\n";
    }
    {
        std::ofstream os(out_dir + "/summary.csv");
        os << summary.str();
    }
    {
        std::ofstream os(out_dir + "/report.txt");
        os << jg::report_text_table(rep);
    }
    std::cout << jg::report_text_table(rep);

    if (!sweep_sizes.empty()) {
        jg::Rng rng(seed);
        const std::vector<double> acc =
            jg::gallery_size_sweep(merged, protocol, sweep_sizes, sweep_trials, rng);
        std::ofstream os(out_dir + "/gallery_sweep.csv");
        os << "size,rank1\n";
        for (size_t i = 0; i < sweep_sizes.size(); ++i)
            os << sweep_sizes[i] << "," << std::setprecision(10) << acc[i] << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"JointsGait: gait recognition from 2D body joints"};
    app.require_subcommand(1);

    ConfigArgs synth_args, train_args, embed_args, print_args;
    std::string checkpoint, split = "test", embed_out = "embeddings.bin";
    std::string gallery_file, eval_protocol = "casiab", eval_out = "eval";
    std::vector<std::string> probe_files;
    std::vector<int> sweep_sizes;
    int sweep_trials = 5;
    uint64_t eval_seed = 1;

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic walker dataset");
    add_config_options(synth, synth_args);

    CLI::App* train = app.add_subcommand("train", "train the pipeline on an indexed dataset");
    add_config_options(train, train_args);

    CLI::App* embed = app.add_subcommand("embed", "extract embeddings with a trained checkpoint");
    add_config_options(embed, embed_args);
    embed->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    embed->add_option("--split", split, "train|gallery|probe|test|all");
    embed->add_option("--out", embed_out, "output embedding file");

    CLI::App* eval = app.add_subcommand("eval", "cross-view evaluation of embedding files");
    eval->add_option("--gallery", gallery_file, "gallery embedding file")->required();
    eval->add_option("--probe", probe_files, "probe embedding file(s)");
    eval->add_option("--protocol", eval_protocol, "casiab|synthetic|kinectgait");
    eval->add_option("--out", eval_out, "report output directory");
    eval->add_option("--sweep-sizes", sweep_sizes, "gallery-size sweep sizes");
    eval->add_option("--sweep-trials", sweep_trials, "trials per sweep size");
    eval->add_option("--seed", eval_seed, "sweep sampling seed");

    CLI::App* print_config = app.add_subcommand("print-config", "print the resolved configuration");
    add_config_options(print_config, print_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(synth_args.resolve());
        if (train->parsed()) return cmd_train(train_args.resolve());
        if (embed->parsed()) return cmd_embed(embed_args.resolve(), checkpoint, split, embed_out);
        if (eval->parsed())
            return cmd_eval(gallery_file, probe_files, eval_protocol, eval_out, sweep_sizes,
                            sweep_trials, eval_seed);
        if (print_config->parsed()) {
            std::cout << config_with_pyramid_tables(print_args.resolve());
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
