#pragma once

#include <iomanip>
#include <sstream>
#include <unordered_map>

#include "jointsgait/checkpoint.hpp"
#include "jointsgait/config.hpp"
#include "jointsgait/datapipe.hpp"
#include "jointsgait/evalproto.hpp"
#include "jointsgait/gcn.hpp"
#include "jointsgait/jrpm.hpp"
#include "jointsgait/losses.hpp"

namespace jointsgait {

/// The full JointsGait pipeline: GCN backbone -> JRPM -> flattened,
/// L2-normalized embedding, with an arcface head for the fusion loss.
struct GaitModel {
    TrainConfig cfg;
    JointLayout layout;
    PartitionedGraph graph;
    Backbone backbone;
    PyramidSpec pyramid;
    JrpmHeads heads;
    ArcfaceHead arcface;
    int num_classes = 0;

    static GaitModel create(const TrainConfig& cfg, int num_classes, Rng& rng) {
        cfg.validate();
        GaitModel m;
        m.cfg = cfg;
        m.num_classes = num_classes;
        m.layout = build_layout(cfg.layout);
        m.graph = partition(m.layout);
        BackboneConfig bc;
        bc.channels = cfg.channels;
        bc.strides = cfg.strides;
        bc.kt = cfg.kt;
        m.backbone = Backbone::create(m.graph, bc, rng);
        m.pyramid = build_pyramid(m.layout, cfg.scales, parse_pool_mode(cfg.pool_mode));
        m.heads = JrpmHeads::create(m.pyramid, m.backbone.out_channels(),
                                    m.backbone.out_frames(cfg.t_target), cfg.d_out, rng);
        m.arcface = ArcfaceHead::create(std::max(2, num_classes),
                                        cfg.d_out * m.pyramid.strip_count(), rng);
        return m;
    }

    int embedding_dim() const { return cfg.d_out * pyramid.strip_count(); }

    /// batch (N,2,T,V) -> embedding (N, D_out * B), rows L2-normalized
    Var embed(const Var& batch, bool training) {
        Var fst = backbone.forward(batch, training);
        std::vector<Var> pooled = jrpp_pool_strips(fst, pyramid, heads);
        Var mapped = map_strips(pooled, heads);
        return embedding_from_mapped(mapped);
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        backbone.collect_params(out);
        heads.collect_params(out);
        arcface.collect_params(out);
        return out;
    }

    std::vector<std::pair<std::string, Tensor*>> buffers() {
        std::vector<std::pair<std::string, Tensor*>> out;
        backbone.collect_buffers(out);
        return out;
    }

    void save(const std::string& path) {
        std::vector<std::pair<std::string, const Tensor*>> records;
        for (Parameter* p : parameters()) records.emplace_back(p->name, &p->value);
        for (auto& [name, t] : buffers()) records.emplace_back(name, t);
        save_checkpoint(path, records);
    }

    void load(const std::string& path) {
        auto records = load_checkpoint(path);
        for (Parameter* p : parameters()) {
            auto it = records.find(p->name);
            if (it == records.end())
                throw CheckpointError("missing parameter '" + p->name + "' in " + path);
            if (it->second.shape != p->value.shape)
                throw CheckpointError("shape mismatch for '" + p->name + "': checkpoint " +
                                      shape_str(it->second.shape) + " vs model " +
                                      shape_str(p->value.shape));
            p->value = it->second;
        }
        for (auto& [name, t] : buffers()) {
            auto it = records.find(name);
            if (it == records.end()) throw CheckpointError("missing buffer '" + name + "' in " + path);
            if (it->second.shape != t->shape)
                throw CheckpointError("shape mismatch for buffer '" + name + "'");
            *t = it->second;
        }
    }
};

// ---------------------------------------------------------------------------
// Batch assembly
// ---------------------------------------------------------------------------

/// Stack normalized, frame-sampled sequences into an (N,2,T,V) input tensor.
inline Tensor batch_from_sequences(const std::vector<SkeletonSequence>& seqs) {
    if (seqs.empty()) throw DataError("empty batch");
    const int N = static_cast<int>(seqs.size());
    const int T = seqs[0].num_frames();
    const int V = seqs[0].layout.joint_count;
    Tensor batch({N, 2, T, V});
    for (int n = 0; n < N; ++n) {
        if (seqs[static_cast<size_t>(n)].num_frames() != T)
            throw ShapeError("batch clips disagree in length");
        for (int t = 0; t < T; ++t)
            for (int v = 0; v < V; ++v)
                for (int c = 0; c < 2; ++c)
                    batch.at({n, c, t, v}) = seqs[static_cast<size_t>(n)].frames.at({t, v, c});
    }
    return batch;
}

inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string clip_id_of(const ClipEntry& e, DataFormat format) {
    std::ostringstream os;
    if (format == DataFormat::openpose_json) {
        os << e.subject << "/" << condition_name(e.condition) << "-" << std::setfill('0')
           << std::setw(2) << e.seq << "/" << std::setw(3) << e.view_deg;
    } else {
        os << e.subject << "/" << e.seq;
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainLogRow {
    int iteration;
    double total, triplet, arcface;
};

struct TrainOutput {
    std::vector<TrainLogRow> log;
    std::string checkpoint_path;
    std::string loss_csv_path;
};

class ClipCache {
public:
    ClipCache(const DatasetIndex& index, const JointLayout& layout)
        : index_(index), layout_(layout) {}

    const SkeletonSequence& normalized(size_t entry_idx) {
        auto it = cache_.find(entry_idx);
        if (it != cache_.end()) return it->second;
        SkeletonSequence seq = load_clip(index_.entries[entry_idx], index_.format, layout_);
        auto [pos, inserted] = cache_.emplace(entry_idx, normalize_sequence(seq));
        return pos->second;
    }

private:
    const DatasetIndex& index_;
    const JointLayout& layout_;
    std::unordered_map<size_t, SkeletonSequence> cache_;
};

inline std::string loss_csv(const std::vector<TrainLogRow>& log) {
    std::ostringstream os;
    os << "iteration,total,triplet,arcface\n";
    os << std::setprecision(17);
    for (const TrainLogRow& r : log)
        os << r.iteration << "," << r.total << "," << r.triplet << "," << r.arcface << "\n";
    return os.str();
}

/// PK-batched optimization of the fusion loss over the full pipeline.
/// Single-threaded and fully determined by (config, dataset contents).
inline TrainOutput train_model(const TrainConfig& cfg, GaitModel& model, const DatasetIndex& index,
                               const std::function<void(const TrainLogRow&)>& on_iter = {}) {
    cfg.validate();
    if (index.num_train_classes < cfg.p)
        throw SamplingError("dataset has " + std::to_string(index.num_train_classes) +
                            " train identities, need P=" + std::to_string(cfg.p));
    Rng rng(cfg.seed + 0x5A17);
    Adam opt({cfg.lr, cfg.adam_beta1, cfg.adam_beta2, 1e-8});
    std::vector<Parameter*> params = model.parameters();
    ClipCache cache(index, model.layout);
    FusionLossConfig lcfg{cfg.lambda, cfg.m_tri, cfg.m_arc, cfg.arc_scale, model.num_classes};

    fs::create_directories(cfg.out_dir);
    TrainOutput out;
    out.checkpoint_path = cfg.out_dir + "/model.ckpt";
    out.loss_csv_path = cfg.out_dir + "/loss.csv";

    for (int iter = 1; iter <= cfg.iterations; ++iter) {
        const std::vector<size_t> picks = pk_sample(index, cfg.p, cfg.k, rng);
        std::vector<SkeletonSequence> seqs;
        std::vector<int> labels;
        seqs.reserve(picks.size());
        for (size_t idx : picks) {
            seqs.push_back(sample_frames(cache.normalized(idx), cfg.t_target, rng));
            labels.push_back(index.entries[idx].identity);
        }
        Tensor batch = batch_from_sequences(seqs);

        for (Parameter* p : params) p->zero_grad();
        Var input = Var::constant(batch);
        Var emb = model.embed(input, true);
        Var tri = batch_hard_triplet(emb, labels, lcfg.m_tri);
        Var arc = arcface_loss(emb, labels, model.arcface, lcfg.m_arc, lcfg.arc_scale);
        Var loss = add(scale(tri, lcfg.lambda), scale(arc, 1.0 - lcfg.lambda));
        backward(loss);
        opt.step(params);

        TrainLogRow row{iter, loss.val().data[0], tri.val().data[0], arc.val().data[0]};
        out.log.push_back(row);
        if (on_iter) on_iter(row);
        if (cfg.checkpoint_interval > 0 && iter % cfg.checkpoint_interval == 0)
            model.save(out.checkpoint_path);
    }
    model.save(out.checkpoint_path);
    std::ofstream os(out.loss_csv_path);
    os << loss_csv(out.log);
    return out;
}

// ---------------------------------------------------------------------------
// Embedding extraction
// ---------------------------------------------------------------------------

/// Deterministic (seeded per clip) frame sampling, eval-mode forward,
/// one embedding row per clip.
inline EmbeddingSet embed_split(GaitModel& model, const DatasetIndex& index,
                                const std::string& split, uint64_t seed) {
    std::vector<size_t> rows;
    for (size_t i = 0; i < index.entries.size(); ++i) {
        const ClipEntry& e = index.entries[i];
        const bool want = split == "all" ||
                          (split == "train" && e.train) ||
                          (split == "gallery" && e.gallery) ||
                          (split == "probe" && e.probe) ||
                          (split == "test" && (e.gallery || e.probe));
        if (want) rows.push_back(i);
    }
    if (rows.empty()) throw DataError("split '" + split + "' selects no clips");

    ClipCache cache(index, model.layout);
    EmbeddingSet set;
    const int D = model.embedding_dim();
    set.embeddings = Tensor({static_cast<int>(rows.size()), D});
    for (size_t r = 0; r < rows.size(); ++r) {
        const ClipEntry& e = index.entries[rows[r]];
        const std::string id = clip_id_of(e, index.format);
        Rng rng(seed ^ fnv1a(id));
        SkeletonSequence seq = sample_frames(cache.normalized(rows[r]), model.cfg.t_target, rng);
        Tensor batch = batch_from_sequences({seq});
        Var emb = model.embed(Var::constant(batch), false);
        for (int d = 0; d < D; ++d)
            set.embeddings.at({static_cast<int>(r), d}) = emb.val().at({0, d});
        set.clip_ids.push_back(id);
        set.labels.push_back(e.identity);
        set.views.push_back(e.view_deg);
        set.conditions.push_back(e.condition);
        set.seqs.push_back(e.seq);
    }
    return set;
}

}  // namespace jointsgait
