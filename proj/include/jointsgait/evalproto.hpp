#pragma once

#include <cstdint>
#include <cstring>
#include <limits>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "jointsgait/skeleton.hpp"
#include "jointsgait/tensor.hpp"

namespace jointsgait {

struct ProtocolError : std::runtime_error {
    explicit ProtocolError(const std::string& msg) : std::runtime_error("protocol: " + msg) {}
};

struct EmbeddingSet {
    Tensor embeddings;  // M x D, rows L2-normalized
    std::vector<std::string> clip_ids;
    std::vector<int> labels;
    std::vector<int> views;
    std::vector<Condition> conditions;
    std::vector<int> seqs;

    int size() const { return embeddings.ndim() == 2 ? embeddings.dim(0) : 0; }
    int dim() const { return embeddings.ndim() == 2 ? embeddings.dim(1) : 0; }

    EmbeddingSet select(const std::vector<int>& rows) const {
        EmbeddingSet out;
        const int D = dim();
        out.embeddings = Tensor({static_cast<int>(rows.size()), D});
        for (size_t r = 0; r < rows.size(); ++r) {
            const int i = rows[r];
            for (int d = 0; d < D; ++d)
                out.embeddings.at({static_cast<int>(r), d}) = embeddings.at({i, d});
            out.clip_ids.push_back(clip_ids[static_cast<size_t>(i)]);
            out.labels.push_back(labels[static_cast<size_t>(i)]);
            out.views.push_back(views[static_cast<size_t>(i)]);
            out.conditions.push_back(conditions[static_cast<size_t>(i)]);
            out.seqs.push_back(seqs[static_cast<size_t>(i)]);
        }
        return out;
    }
};

/// Fraction of probes whose nearest gallery embedding (Euclidean, ties to the
/// lowest gallery index) carries the right label.
inline double rank1(const EmbeddingSet& gallery, const EmbeddingSet& probe) {
    if (gallery.size() == 0) throw ProtocolError("empty gallery");
    if (probe.size() == 0) throw ProtocolError("empty probe set");
    if (gallery.dim() != probe.dim())
        throw ProtocolError("embedding dims disagree: " + std::to_string(gallery.dim()) + " vs " +
                            std::to_string(probe.dim()));
    const int D = gallery.dim();
    int correct = 0;
    for (int p = 0; p < probe.size(); ++p) {
        const double* pe = probe.embeddings.data.data() + static_cast<int64_t>(p) * D;
        double best = std::numeric_limits<double>::infinity();
        int best_g = 0;
        for (int g = 0; g < gallery.size(); ++g) {
            const double* ge = gallery.embeddings.data.data() + static_cast<int64_t>(g) * D;
            double s = 0.0;
            for (int d = 0; d < D; ++d) {
                const double diff = pe[d] - ge[d];
                s += diff * diff;
            }
            if (s < best) {
                best = s;
                best_g = g;
            }
        }
        if (gallery.labels[static_cast<size_t>(best_g)] == probe.labels[static_cast<size_t>(p)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(probe.size());
}

// ---------------------------------------------------------------------------
// Gallery / probe eligibility per protocol
// ---------------------------------------------------------------------------

inline bool gallery_eligible(const std::string& protocol, Condition c, int seq) {
    if (protocol == "casiab") return c == Condition::NM && seq >= 1 && seq <= 4;
    return c == Condition::NM;  // synthetic / kinectgait: any NM clip can enroll
}

inline bool probe_eligible(const std::string& protocol, Condition c, int seq) {
    if (protocol == "casiab") {
        if (c == Condition::NM) return seq == 5 || seq == 6;
        return c == Condition::BG || c == Condition::CL ? (seq == 1 || seq == 2) : false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Cross-view evaluation
// ---------------------------------------------------------------------------

struct CrossViewReport {
    std::vector<int> views;
    // cells with no probes hold -1 and never enter any average
    std::map<Condition, Tensor> matrix;                 // gallery view x probe view
    std::map<Condition, std::vector<double>> probe_avg; // per probe view, g != p only
    std::map<Condition, double> average;
    std::map<Condition, double> stddev;
};

/// Accuracy matrix per condition over all (gallery view, probe view) pairs;
/// averages exclude identical-view cells.
inline CrossViewReport cross_view_eval(const EmbeddingSet& test, const std::string& protocol) {
    std::set<int> view_set(test.views.begin(), test.views.end());
    if (view_set.size() < 2)
        throw ProtocolError("cross-view evaluation needs >= 2 views, found " +
                            std::to_string(view_set.size()));
    CrossViewReport rep;
    rep.views.assign(view_set.begin(), view_set.end());
    const int NV = static_cast<int>(rep.views.size());

    std::map<int, std::vector<int>> gallery_rows;  // view -> rows
    std::map<std::pair<Condition, int>, std::vector<int>> probe_rows;
    std::set<Condition> conditions;
    for (int i = 0; i < test.size(); ++i) {
        const Condition c = test.conditions[static_cast<size_t>(i)];
        const int seq = test.seqs[static_cast<size_t>(i)];
        if (gallery_eligible(protocol, c, seq))
            gallery_rows[test.views[static_cast<size_t>(i)]].push_back(i);
        if (probe_eligible(protocol, c, seq)) {
            probe_rows[{c, test.views[static_cast<size_t>(i)]}].push_back(i);
            conditions.insert(c);
        }
    }
    for (int v : rep.views)
        if (gallery_rows[v].empty())
            throw ProtocolError("no gallery clips at view " + std::to_string(v));

    for (Condition c : conditions) {
        Tensor m = Tensor::full({NV, NV}, -1.0);
        for (int gi = 0; gi < NV; ++gi) {
            EmbeddingSet gal = test.select(gallery_rows[rep.views[static_cast<size_t>(gi)]]);
            for (int pi = 0; pi < NV; ++pi) {
                auto it = probe_rows.find({c, rep.views[static_cast<size_t>(pi)]});
                if (it == probe_rows.end() || it->second.empty()) continue;
                m.at({gi, pi}) = rank1(gal, test.select(it->second));
            }
        }
        std::vector<double> pavg(static_cast<size_t>(NV), -1.0);
        double total = 0.0;
        int total_n = 0;
        for (int pi = 0; pi < NV; ++pi) {
            double s = 0.0;
            int n = 0;
            for (int gi = 0; gi < NV; ++gi) {
                if (gi == pi) continue;  // identical-view cells excluded
                const double v = m.at({gi, pi});
                if (v < 0.0) continue;
                s += v;
                ++n;
            }
            if (n > 0) pavg[static_cast<size_t>(pi)] = s / n;
        }
        std::vector<double> valid;
        for (double v : pavg)
            if (v >= 0.0) valid.push_back(v);
        if (valid.empty()) continue;
        for (double v : valid) {
            total += v;
            ++total_n;
        }
        const double mean = total / total_n;
        double var = 0.0;
        for (double v : valid) var += (v - mean) * (v - mean);
        rep.matrix[c] = std::move(m);
        rep.probe_avg[c] = std::move(pavg);
        rep.average[c] = mean;
        rep.stddev[c] = std::sqrt(var / total_n);
    }
    if (rep.matrix.empty()) throw ProtocolError("no probe clips for any condition");
    return rep;
}

/// Mean rank-1 over trials when the candidate population is restricted to a
/// random identity subset of the given size.
inline std::vector<double> gallery_size_sweep(const EmbeddingSet& test, const std::string& protocol,
                                              const std::vector<int>& sizes, int trials, Rng& rng) {
    std::set<int> ids(test.labels.begin(), test.labels.end());
    std::vector<int> id_list(ids.begin(), ids.end());
    std::vector<int> gal_rows, probe_rows;
    for (int i = 0; i < test.size(); ++i) {
        const Condition c = test.conditions[static_cast<size_t>(i)];
        const int seq = test.seqs[static_cast<size_t>(i)];
        if (gallery_eligible(protocol, c, seq)) gal_rows.push_back(i);
        if (probe_eligible(protocol, c, seq)) probe_rows.push_back(i);
    }
    std::vector<double> out;
    for (int size : sizes) {
        if (size < 1 || size > static_cast<int>(id_list.size()))
            throw ProtocolError("gallery size " + std::to_string(size) + " exceeds identity count " +
                                std::to_string(id_list.size()));
        double acc = 0.0;
        for (int t = 0; t < trials; ++t) {
            std::vector<int> pool = id_list;
            rng.shuffle(pool);
            pool.resize(static_cast<size_t>(size));
            std::set<int> chosen(pool.begin(), pool.end());
            std::vector<int> g, p;
            for (int i : gal_rows)
                if (chosen.count(test.labels[static_cast<size_t>(i)])) g.push_back(i);
            for (int i : probe_rows)
                if (chosen.count(test.labels[static_cast<size_t>(i)])) p.push_back(i);
            acc += rank1(test.select(g), test.select(p));
        }
        out.push_back(acc / trials);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Embedding files: "JGEM" | u32 version | u32 count | u32 dim | records of
// (u32 id_len, clip id, i32 identity, i32 view, i32 condition, f32 x dim).
// ---------------------------------------------------------------------------

namespace detail {

inline void write_i32(std::ostream& os, int32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline int32_t read_i32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("truncated embedding file");
    return static_cast<int32_t>(static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
                                static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24);
}

inline void write_f32(std::ostream& os, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    write_i32(os, static_cast<int32_t>(u));
}

inline float read_f32(std::istream& is) {
    const uint32_t u = static_cast<uint32_t>(read_i32(is));
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

/// clip ids look like "<subject>/<cond>-<seq>/<view>" or "<subject>/<seq>"
inline int seq_from_clip_id(const std::string& id) {
    const auto slash = id.find('/');
    if (slash == std::string::npos) return 0;
    std::string mid = id.substr(slash + 1);
    const auto slash2 = mid.find('/');
    if (slash2 != std::string::npos) mid = mid.substr(0, slash2);
    const auto dash = mid.find('-');
    try {
        return std::stoi(dash == std::string::npos ? mid : mid.substr(dash + 1));
    } catch (...) {
        return 0;
    }
}

}  // namespace detail

inline void save_embeddings(const std::string& path, const EmbeddingSet& set) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os.write("JGEM", 4);
    detail::write_i32(os, 1);
    detail::write_i32(os, set.size());
    detail::write_i32(os, set.dim());
    for (int i = 0; i < set.size(); ++i) {
        const std::string& id = set.clip_ids[static_cast<size_t>(i)];
        detail::write_i32(os, static_cast<int32_t>(id.size()));
        os.write(id.data(), static_cast<std::streamsize>(id.size()));
        detail::write_i32(os, set.labels[static_cast<size_t>(i)]);
        detail::write_i32(os, set.views[static_cast<size_t>(i)]);
        detail::write_i32(os, static_cast<int32_t>(set.conditions[static_cast<size_t>(i)]));
        for (int d = 0; d < set.dim(); ++d)
            detail::write_f32(os, static_cast<float>(set.embeddings.at({i, d})));
    }
    if (!os) throw DataError("write failed for '" + path + "'");
}

inline EmbeddingSet load_embeddings(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "JGEM") throw DataError("bad magic in '" + path + "'");
    if (detail::read_i32(is) != 1) throw DataError("unsupported embedding file version");
    const int count = detail::read_i32(is);
    const int dim = detail::read_i32(is);
    EmbeddingSet set;
    set.embeddings = Tensor({count, dim});
    for (int i = 0; i < count; ++i) {
        const int idlen = detail::read_i32(is);
        std::string id(static_cast<size_t>(idlen), '\0');
        is.read(id.data(), idlen);
        set.labels.push_back(detail::read_i32(is));
        set.views.push_back(detail::read_i32(is));
        set.conditions.push_back(static_cast<Condition>(detail::read_i32(is)));
        set.seqs.push_back(detail::seq_from_clip_id(id));
        set.clip_ids.push_back(std::move(id));
        for (int d = 0; d < dim; ++d) set.embeddings.at({i, d}) = detail::read_f32(is);
    }
    return set;
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

inline std::string report_matrix_csv(const CrossViewReport& rep, Condition c) {
    std::ostringstream os;
    os << "gallery_view\\probe_view";
    for (int v : rep.views) os << "," << v;
    os << "\n";
    const Tensor& m = rep.matrix.at(c);
    for (size_t g = 0; g < rep.views.size(); ++g) {
        os << rep.views[g];
        for (size_t p = 0; p < rep.views.size(); ++p)
            os << "," << std::setprecision(10) << m.at({static_cast<int>(g), static_cast<int>(p)});
        os << "\n";
    }
    return os.str();
}

inline std::string report_text_table(const CrossViewReport& rep) {
    std::ostringstream os;
    for (const auto& [c, m] : rep.matrix) {
        os << "condition " << condition_name(c) << " (gallery rows x probe columns, accuracies %)\n";
        os << std::setw(8) << "g\\p";
        for (int v : rep.views) os << std::setw(8) << v;
        os << "\n";
        for (size_t g = 0; g < rep.views.size(); ++g) {
            os << std::setw(8) << rep.views[g];
            for (size_t p = 0; p < rep.views.size(); ++p) {
                const double v = m.at({static_cast<int>(g), static_cast<int>(p)});
                if (v < 0.0)
                    os << std::setw(8) << "-";
                else
                    os << std::setw(8) << std::fixed << std::setprecision(1) << 100.0 * v;
            }
            os << "\n";
        }
        os << std::setw(8) << "avg";
        for (size_t p = 0; p < rep.views.size(); ++p) {
            const double v = rep.probe_avg.at(c)[p];
            if (v < 0.0)
                os << std::setw(8) << "-";
            else
                os << std::setw(8) << std::fixed << std::setprecision(1) << 100.0 * v;
        }
        os << "\n";
        os << "average " << std::fixed << std::setprecision(2) << 100.0 * rep.average.at(c)
           << "  std " << 100.0 * rep.stddev.at(c) << "\n\n";
    }
    return os.str();
}

}  // namespace jointsgait
