#pragma once

#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "w2b/groundtruth.hpp"
#include "w2b/matrix.hpp"

// Samplers for every input measure the solver consumes, plus file loaders
// for empirical data and pixel palettes. Samplers are immutable; the caller
// owns the rng stream, so draws depend only on (seed, call sequence).
namespace w2b {

class Sampler {
public:
    virtual ~Sampler() = default;
    virtual int dim() const = 0;
    virtual void draw_into(Rng& rng, int k, Matrix& out) const = 0;
    virtual std::optional<GaussianMoments> exact_moments() const { return std::nullopt; }

    Matrix draw(Rng& rng, int k) const {
        Matrix m(k, dim());
        draw_into(rng, k, m);
        return m;
    }
};

using SamplerPtr = std::shared_ptr<const Sampler>;

class StandardNormalSampler final : public Sampler {
public:
    explicit StandardNormalSampler(int d) : d_(d) {}
    int dim() const override { return d_; }
    void draw_into(Rng& rng, int k, Matrix& out) const override {
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < d_; ++j) out.at(i, j) = rng.normal();
    }
    std::optional<GaussianMoments> exact_moments() const override {
        return GaussianMoments{std::vector<double>(d_, 0.0), Matrix::identity(d_)};
    }

private:
    int d_;
};

// Uniform on [-sqrt(3), sqrt(3)]^D, which has zero mean and unit variance
// per coordinate.
class UniformCubeSampler final : public Sampler {
public:
    explicit UniformCubeSampler(int d) : d_(d) {}
    int dim() const override { return d_; }
    void draw_into(Rng& rng, int k, Matrix& out) const override {
        constexpr double half = 1.7320508075688772;
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < d_; ++j) out.at(i, j) = rng.uniform(-half, half);
    }
    std::optional<GaussianMoments> exact_moments() const override {
        return GaussianMoments{std::vector<double>(d_, 0.0), Matrix::identity(d_)};
    }

private:
    int d_;
};

namespace detail {

// Standardization constants for the jittered swiss roll, frozen from 1e6
// reference draws at seed 990117: mean of the raw curve and the symmetric
// whitening factor Cov^{-1/2}.
struct SwissRollConstants {
    double mean_x, mean_y;
    double w00, w01, w11;
};
inline constexpr SwissRollConstants kSwissRoll{
    2.00334725903668565e+00, 2.17145574602829544e-01,   // raw mean
    1.51149090293259486e-01, -6.82798551716758129e-03,  // whitening factor
    1.43954420055304899e-01,
};

inline void swiss_roll_raw(Rng& rng, double& x, double& y) {
    constexpr double pi = 3.14159265358979323846;
    const double t = rng.uniform(1.5 * pi, 4.5 * pi);
    const double sigma = 0.05 * 3.0 * pi;  // 5% of the mean radius
    x = t * std::cos(t) + sigma * rng.normal();
    y = t * std::sin(t) + sigma * rng.normal();
}

}  // namespace detail

// Two-dimensional swiss roll standardized to zero mean and identity
// covariance.
class SwissRollSampler final : public Sampler {
public:
    int dim() const override { return 2; }
    void draw_into(Rng& rng, int k, Matrix& out) const override {
        const auto& c = detail::kSwissRoll;
        for (int i = 0; i < k; ++i) {
            double x, y;
            detail::swiss_roll_raw(rng, x, y);
            x -= c.mean_x;
            y -= c.mean_y;
            out.at(i, 0) = c.w00 * x + c.w01 * y;
            out.at(i, 1) = c.w01 * x + c.w11 * y;
        }
    }
};

// Member of a location-scatter family: S z + u for z from the whitened base.
class LocationScatterSpec final : public Sampler {
public:
    LocationScatterSpec(SamplerPtr base, Matrix s, std::vector<double> u)
        : base_(std::move(base)), s_(std::move(s)), u_(std::move(u)) {
        if (s_.rows() != s_.cols() || s_.rows() != base_->dim() || static_cast<int>(u_.size()) != base_->dim())
            throw std::invalid_argument("LocationScatterSpec: inconsistent shapes");
    }

    int dim() const override { return base_->dim(); }
    const Matrix& scatter() const { return s_; }
    const std::vector<double>& shift() const { return u_; }
    const SamplerPtr& base() const { return base_; }

    void draw_into(Rng& rng, int k, Matrix& out) const override {
        Matrix z = base_->draw(rng, k);
        matmul_bt_into(z, s_, out);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < dim(); ++j) out.at(i, j) += u_[j];
    }

    // Population moments are exact when the base is whitened: mean u,
    // covariance S S^T.
    std::optional<GaussianMoments> exact_moments() const override {
        GaussianMoments g;
        g.mean = u_;
        g.cov = matmul_bt(s_, s_);
        g.cov = scale(add(g.cov, transpose(g.cov)), 0.5);
        return g;
    }

    LsMember member() const { return LsMember{s_, u_}; }

private:
    SamplerPtr base_;
    Matrix s_;
    std::vector<double> u_;
};

// Uniform resampling of a fixed table of rows.
class EmpiricalSampler final : public Sampler {
public:
    explicit EmpiricalSampler(Matrix rows) : rows_(std::move(rows)) {
        if (rows_.rows() < 1) throw std::invalid_argument("EmpiricalSampler: need at least one row");
    }
    int dim() const override { return rows_.cols(); }
    const Matrix& rows() const { return rows_; }
    void draw_into(Rng& rng, int k, Matrix& out) const override {
        for (int i = 0; i < k; ++i) {
            const int r = rng.index(rows_.rows());
            for (int j = 0; j < rows_.cols(); ++j) out.at(i, j) = rows_.at(r, j);
        }
    }

private:
    Matrix rows_;
};

// Gaussian with arbitrary moments; draws via the symmetric PSD root.
class GaussianSampler final : public Sampler {
public:
    explicit GaussianSampler(GaussianMoments m) : moments_(std::move(m)), root_(sqrtm_psd(moments_.cov)) {}
    int dim() const override { return moments_.dim(); }
    void draw_into(Rng& rng, int k, Matrix& out) const override {
        Matrix z(k, dim());
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < dim(); ++j) z.at(i, j) = rng.normal();
        matmul_bt_into(z, root_, out);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < dim(); ++j) out.at(i, j) += moments_.mean[j];
    }
    std::optional<GaussianMoments> exact_moments() const override { return moments_; }

private:
    GaussianMoments moments_;
    Matrix root_;
};

// Component picked per row by CDF inversion, then drawn from that component.
class MixtureSampler final : public Sampler {
public:
    MixtureSampler(std::vector<SamplerPtr> components, std::vector<double> weights)
        : components_(std::move(components)), weights_(std::move(weights)) {
        if (components_.empty() || components_.size() != weights_.size())
            throw std::invalid_argument("MixtureSampler: bad components");
        check_weights(weights_);
        for (const auto& c : components_)
            if (c->dim() != components_[0]->dim()) throw std::invalid_argument("MixtureSampler: dim mismatch");
    }
    int dim() const override { return components_[0]->dim(); }
    void draw_into(Rng& rng, int k, Matrix& out) const override {
        Matrix one(1, dim());
        for (int i = 0; i < k; ++i) {
            const double u = rng.uniform();
            double acc = 0.0;
            std::size_t pick = components_.size() - 1;
            for (std::size_t c = 0; c < components_.size(); ++c) {
                acc += weights_[c];
                if (u < acc) {
                    pick = c;
                    break;
                }
            }
            components_[pick]->draw_into(rng, 1, one);
            for (int j = 0; j < dim(); ++j) out.at(i, j) = one.at(0, j);
        }
    }

private:
    std::vector<SamplerPtr> components_;
    std::vector<double> weights_;
};

enum class BaseKind { gaussian, uniform_cube, swiss_roll };

inline SamplerPtr make_base_sampler(BaseKind kind, int d) {
    switch (kind) {
        case BaseKind::gaussian:
            return std::make_shared<StandardNormalSampler>(d);
        case BaseKind::uniform_cube:
            return std::make_shared<UniformCubeSampler>(d);
        case BaseKind::swiss_roll:
            if (d != 2) throw std::invalid_argument("swiss_roll base requires D=2, got D=" + std::to_string(d));
            return std::make_shared<SwissRollSampler>();
    }
    throw std::logic_error("make_base_sampler: bad kind");
}

namespace detail {

// Haar rotation: modified Gram-Schmidt QR of a standard Gaussian matrix.
// Normalization keeps R's diagonal positive; one column flip lands in SO(D).
inline Matrix haar_rotation(int d, Rng& rng) {
    Matrix g(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) g.at(i, j) = rng.normal();
    Matrix q(d, d);
    for (int j = 0; j < d; ++j) {
        std::vector<double> v(d);
        for (int i = 0; i < d; ++i) v[i] = g.at(i, j);
        for (int pass = 0; pass < 2; ++pass) {
            for (int p = 0; p < j; ++p) {
                double dot = 0.0;
                for (int i = 0; i < d; ++i) dot += q.at(i, p) * v[i];
                for (int i = 0; i < d; ++i) v[i] -= dot * q.at(i, p);
            }
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw std::runtime_error("haar_rotation: degenerate draw");
        for (int i = 0; i < d; ++i) q.at(i, j) = v[i] / norm;
    }
    if (determinant(q) < 0.0)
        for (int i = 0; i < d; ++i) q.at(i, d - 1) = -q.at(i, d - 1);
    return q;
}

}  // namespace detail

// Diagonal scatter spectrum: geometric sequence from 1/2 to 2.
inline std::vector<double> ls_spectrum(int d) {
    if (d == 1) return {1.0};
    std::vector<double> lam(d);
    const double b = std::pow(4.0, 1.0 / (d - 1));
    for (int i = 0; i < d; ++i) lam[i] = 0.5 * std::pow(b, i);
    return lam;
}

// Builds N centered location-scatter members S_n = R_n^T Lambda R_n over the
// chosen base; every member shares the fixed spectrum.
inline std::vector<std::shared_ptr<LocationScatterSpec>> make_ls_family(int d, int n, BaseKind base,
                                                                        std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("make_ls_family: need at least one member");
    const SamplerPtr base_sampler = make_base_sampler(base, d);
    const std::vector<double> lam = ls_spectrum(d);
    Rng rng(seed);
    std::vector<std::shared_ptr<LocationScatterSpec>> family;
    family.reserve(n);
    for (int m = 0; m < n; ++m) {
        const Matrix rot = detail::haar_rotation(d, rng);
        Matrix scaled(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) scaled.at(i, j) = lam[i] * rot.at(i, j);
        Matrix s = matmul_ta(rot, scaled);  // R^T Lambda R
        s = scale(add(s, transpose(s)), 0.5);
        family.push_back(std::make_shared<LocationScatterSpec>(base_sampler, s, std::vector<double>(d, 0.0)));
    }
    return family;
}

struct EmpiricalDataset {
    Matrix rows;
    std::string source;

    int count() const { return rows.rows(); }
    int dim() const { return rows.cols(); }
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& path, long line, const std::string& what)
        : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_number(line) {}
    long line_number;
};

namespace detail {

inline bool parse_double(const std::string& cell, double& out) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    if (end == begin) return false;
    while (*end == ' ' || *end == '\t') ++end;
    return *end == '\0' && std::isfinite(out);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    cells.push_back(cur);
    return cells;
}

}  // namespace detail

// Rectangular numeric CSV with an optional single header line (detected when
// the first row has any non-numeric cell).
inline EmpiricalDataset load_empirical(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError(path, 0, "cannot open file");
    std::vector<std::vector<double>> table;
    std::string line;
    long line_no = 0;
    int cols = -1;
    bool first_data_row = true;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = detail::split_csv_line(line);
        std::vector<double> row(cells.size());
        bool numeric = true;
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (!detail::parse_double(cells[j], row[j])) {
                numeric = false;
                break;
            }
        }
        if (!numeric) {
            if (first_data_row) {  // header
                first_data_row = false;
                cols = static_cast<int>(cells.size());
                continue;
            }
            throw ParseError(path, line_no, "non-numeric cell");
        }
        first_data_row = false;
        if (cols < 0) cols = static_cast<int>(row.size());
        if (static_cast<int>(row.size()) != cols)
            throw ParseError(path, line_no,
                             "ragged row: expected " + std::to_string(cols) + " cells, got " +
                                 std::to_string(row.size()));
        table.push_back(std::move(row));
    }
    if (table.empty()) throw ParseError(path, line_no, "no data rows");
    Matrix m(static_cast<int>(table.size()), cols);
    for (std::size_t i = 0; i < table.size(); ++i)
        for (int j = 0; j < cols; ++j) m.at(static_cast<int>(i), j) = table[i][j];
    return EmpiricalDataset{std::move(m), path};
}

struct PpmImage {
    int width = 0;
    int height = 0;
    Matrix pixels;  // (width*height) x 3, values in [0,1]
};

// Binary PPM, P6 with maxval 255 only.
inline PpmImage load_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError(path, 0, "cannot open file");
    auto next_token = [&]() {
        std::string tok;
        char ch;
        while (f.get(ch)) {
            if (ch == '#') {
                while (f.get(ch) && ch != '\n') {
                }
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(ch))) {
                if (!tok.empty()) return tok;
                continue;
            }
            tok += ch;
        }
        return tok;
    };
    const std::string magic = next_token();
    if (magic != "P6") throw ParseError(path, 1, "not a binary PPM (magic '" + magic + "', expected P6)");
    const std::string ws = next_token(), hs = next_token(), ms = next_token();
    int width = 0, height = 0, maxval = 0;
    try {
        width = std::stoi(ws);
        height = std::stoi(hs);
        maxval = std::stoi(ms);
    } catch (const std::exception&) {
        throw ParseError(path, 1, "bad PPM header");
    }
    if (width <= 0 || height <= 0) throw ParseError(path, 1, "bad PPM dimensions");
    if (maxval != 255) throw ParseError(path, 1, "PPM maxval must be 255, got " + std::to_string(maxval));
    std::vector<unsigned char> bytes(static_cast<std::size_t>(width) * height * 3);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(f.gcount()) != bytes.size())
        throw ParseError(path, 1,
                         "truncated PPM payload: expected " + std::to_string(bytes.size()) + " bytes, got " +
                             std::to_string(f.gcount()));
    PpmImage img;
    img.width = width;
    img.height = height;
    img.pixels = Matrix(width * height, 3);
    for (int i = 0; i < width * height; ++i)
        for (int c = 0; c < 3; ++c) img.pixels.at(i, c) = bytes[static_cast<std::size_t>(i) * 3 + c] / 255.0;
    return img;
}

inline EmpiricalDataset load_palette(const std::string& path) {
    PpmImage img = load_ppm(path);
    return EmpiricalDataset{std::move(img.pixels), path};
}

// Sample mean and unbiased covariance, symmetrized and floored by 1e-9 I so
// downstream PSD square roots stay well defined.
inline GaussianMoments moments_of_rows(const Matrix& rows) {
    const int m = rows.rows();
    const int d = rows.cols();
    if (m < 2) throw std::invalid_argument("moments_of_rows: need at least 2 rows");
    GaussianMoments g;
    g.mean.assign(d, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j) g.mean[j] += rows.at(i, j);
    for (int j = 0; j < d; ++j) g.mean[j] /= m;
    g.cov = Matrix(d, d);
    for (int i = 0; i < m; ++i) {
        for (int a = 0; a < d; ++a) {
            const double da = rows.at(i, a) - g.mean[a];
            for (int b = a; b < d; ++b) g.cov.at(a, b) += da * (rows.at(i, b) - g.mean[b]);
        }
    }
    for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) {
            const double v = g.cov.at(a, b) / (m - 1);
            g.cov.at(a, b) = v;
            g.cov.at(b, a) = v;
        }
    for (int a = 0; a < d; ++a) g.cov.at(a, a) += 1e-9;
    return g;
}

inline GaussianMoments estimate_moments(const Sampler& sampler, Rng& rng, int k) {
    if (k < 2) throw std::invalid_argument("estimate_moments: need k >= 2");
    return moments_of_rows(sampler.draw(rng, k));
}

inline GaussianMoments estimate_moments(const EmpiricalDataset& data) { return moments_of_rows(data.rows); }

}  // namespace w2b
