#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <random>
#include <vector>

namespace jointsgait {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape: " + msg) {}
};
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config: " + msg) {}
};
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error("contract: " + msg) {}
};
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error("data: " + msg) {}
};

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

/// Dense row-major double tensor. All training math runs in double precision.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), 0.0) {}
    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (shape_numel(shape) != static_cast<int64_t>(data.size()))
            throw ShapeError("numel mismatch building tensor " + shape_str(shape));
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, double v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static Tensor ones(Shape s) { return full(std::move(s), 1.0); }
    static Tensor eye(int n) {
        Tensor t({n, n});
        for (int i = 0; i < n; ++i) t.data[static_cast<size_t>(i) * n + i] = 1.0;
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }

    double& at(std::initializer_list<int> idx) {
        return data[static_cast<size_t>(offset(idx))];
    }
    double at(std::initializer_list<int> idx) const {
        return data[static_cast<size_t>(offset(idx))];
    }

    int64_t offset(std::initializer_list<int> idx) const {
        int64_t off = 0;
        size_t i = 0;
        for (int v : idx) {
            off = off * shape[i] + v;
            ++i;
        }
        return off;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != numel())
            throw ShapeError("reshape " + shape_str(shape) + " -> " + shape_str(s));
        return Tensor(std::move(s), data);
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data) m = std::max(m, std::fabs(v));
        return m;
    }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

// ---------------------------------------------------------------------------
// Raw matmul kernels. ikj loop order keeps the inner stride contiguous.
// ---------------------------------------------------------------------------

inline void matmul_raw(const double* a, const double* b, double* c,
                       int64_t m, int64_t k, int64_t n) {
    std::fill(c, c + m * n, 0.0);
    for (int64_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            if (aip == 0.0) continue;
            const double* bp = b + p * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

/// c(m,n) += a(m,k) * b(n,k)^T
inline void matmul_nt_acc(const double* a, const double* b, double* c,
                          int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

/// c(k,n) += a(m,k)^T * b(m,n)
inline void matmul_tn_acc(const double* a, const double* b, double* c,
                          int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        const double* bi = b + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            if (aip == 0.0) continue;
            double* cp = c + p * n;
            for (int64_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
        }
    }
}

/// Matrix product with batched leading dimensions: the trailing two axes
/// multiply, anything in front broadcasts pairwise (must match exactly).
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() < 2 || b.ndim() < 2)
        throw ShapeError("matmul needs >=2-d operands, got " + shape_str(a.shape) + " x " + shape_str(b.shape));
    const int64_t m = a.shape[a.shape.size() - 2];
    const int64_t k = a.shape.back();
    const int64_t k2 = b.shape[b.shape.size() - 2];
    const int64_t n = b.shape.back();
    if (k != k2)
        throw ShapeError("matmul inner dims disagree: " + shape_str(a.shape) + " x " + shape_str(b.shape));
    Shape lead_a(a.shape.begin(), a.shape.end() - 2);
    Shape lead_b(b.shape.begin(), b.shape.end() - 2);
    if (lead_a != lead_b)
        throw ShapeError("matmul batch dims disagree: " + shape_str(a.shape) + " x " + shape_str(b.shape));
    const int64_t batch = shape_numel(lead_a);
    Shape out_shape = lead_a;
    out_shape.push_back(static_cast<int>(m));
    out_shape.push_back(static_cast<int>(n));
    Tensor c(out_shape);
    for (int64_t s = 0; s < batch; ++s)
        matmul_raw(a.data.data() + s * m * k, b.data.data() + s * k * n,
                   c.data.data() + s * m * n, m, k, n);
    return c;
}

// ---------------------------------------------------------------------------
// Rng: mt19937_64 engine with hand-rolled draws so that sequences are
// bit-identical across standard library implementations.
// ---------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// standard normal, Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

    /// uniform integer in [0, n)
    uint64_t below(uint64_t n) {
        if (n == 0) throw ContractError("Rng::below(0)");
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[static_cast<size_t>(below(i))]);
    }

    Tensor normal_tensor(Shape s, double stddev = 1.0) {
        Tensor t(std::move(s));
        for (double& v : t.data) v = stddev * normal();
        return t;
    }

    Tensor uniform_tensor(Shape s, double lo, double hi) {
        Tensor t(std::move(s));
        for (double& v : t.data) v = uniform(lo, hi);
        return t;
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Parameter + Adam
// ---------------------------------------------------------------------------

struct Parameter {
    std::string name;
    Tensor value;
    Tensor gradient;

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), gradient(value.shape) {}

    void zero_grad() { std::fill(gradient.data.begin(), gradient.data.end(), 0.0); }
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(std::vector<Parameter*>& params) {
        if (m_.empty()) {
            for (Parameter* p : params) {
                m_.emplace_back(p->value.shape);
                v_.emplace_back(p->value.shape);
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (size_t i = 0; i < params.size(); ++i) {
            Parameter& p = *params[i];
            for (int64_t j = 0; j < p.value.numel(); ++j) {
                const double g = p.gradient.data[static_cast<size_t>(j)];
                double& m = m_[i].data[static_cast<size_t>(j)];
                double& v = v_[i].data[static_cast<size_t>(j)];
                m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
                v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
                p.value.data[static_cast<size_t>(j)] -=
                    cfg_.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
            }
        }
    }

private:
    AdamConfig cfg_;
    int t_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace jointsgait
