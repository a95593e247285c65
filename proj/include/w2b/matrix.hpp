#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace w2b {

// Dense row-major matrix of doubles. Used both for sample batches
// (rows = samples) and for small square matrices in the closed-form code.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0.0) {
        if (rows < 0 || cols < 0) throw std::invalid_argument("Matrix: negative shape");
    }

    static Matrix zeros(int r, int c) { return Matrix(r, c); }
    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }
    static Matrix filled(int r, int c, double v) {
        Matrix m(r, c);
        std::fill(m.data_.begin(), m.data_.end(), v);
        return m;
    }
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        const int r = static_cast<int>(rows.size());
        const int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
        Matrix m(r, c);
        int i = 0;
        for (const auto& row : rows) {
            if (static_cast<int>(row.size()) != c) throw std::invalid_argument("Matrix: ragged rows");
            int j = 0;
            for (double v : row) m.at(i, j++) = v;
            ++i;
        }
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double* row(int i) { return data_.data() + static_cast<std::size_t>(i) * cols_; }
    const double* row(int i) const { return data_.data() + static_cast<std::size_t>(i) * cols_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

inline void check_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()));
}

// C = A * B
inline void matmul_into(const Matrix& a, const Matrix& b, Matrix& c) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dims differ");
    if (c.rows() != a.rows() || c.cols() != b.cols()) c = Matrix(a.rows(), b.cols());
    const int k = a.rows(), m = a.cols(), n = b.cols();
    for (int i = 0; i < k; ++i) {
        double* ci = c.row(i);
        std::fill(ci, ci + n, 0.0);
        const double* ai = a.row(i);
        for (int l = 0; l < m; ++l) {
            const double ail = ai[l];
            const double* bl = b.row(l);
            for (int j = 0; j < n; ++j) ci[j] += ail * bl[j];
        }
    }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix c;
    matmul_into(a, b, c);
    return c;
}

// C = A * B^T. B rows become result columns; B is transposed into scratch so
// the inner loop stays contiguous.
inline void matmul_bt_into(const Matrix& a, const Matrix& b, Matrix& c) {
    if (a.cols() != b.cols()) throw std::invalid_argument("matmul_bt: inner dims differ");
    thread_local Matrix scratch;
    const int m = b.cols(), n = b.rows();
    if (scratch.rows() != m || scratch.cols() != n) scratch = Matrix(m, n);
    for (int i = 0; i < n; ++i) {
        const double* bi = b.row(i);
        for (int j = 0; j < m; ++j) scratch.at(j, i) = bi[j];
    }
    matmul_into(a, scratch, c);
}

inline Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    Matrix c;
    matmul_bt_into(a, b, c);
    return c;
}

// C = A^T * B
inline void matmul_ta_into(const Matrix& a, const Matrix& b, Matrix& c) {
    if (a.rows() != b.rows()) throw std::invalid_argument("matmul_ta: inner dims differ");
    const int k = a.rows(), m = a.cols(), n = b.cols();
    if (c.rows() != m || c.cols() != n) c = Matrix(m, n);
    for (int l = 0; l < m; ++l) std::fill(c.row(l), c.row(l) + n, 0.0);
    for (int i = 0; i < k; ++i) {
        const double* ai = a.row(i);
        const double* bi = b.row(i);
        for (int l = 0; l < m; ++l) {
            const double ail = ai[l];
            double* cl = c.row(l);
            for (int j = 0; j < n; ++j) cl[j] += ail * bi[j];
        }
    }
}

inline Matrix matmul_ta(const Matrix& a, const Matrix& b) {
    Matrix c;
    matmul_ta_into(a, b, c);
    return c;
}

// Accumulating variants: c += op(a, b); c must already have the right shape.
inline void matmul_acc(const Matrix& a, const Matrix& b, Matrix& c) {
    const int k = a.rows(), m = a.cols(), n = b.cols();
    for (int i = 0; i < k; ++i) {
        double* ci = c.row(i);
        const double* ai = a.row(i);
        for (int l = 0; l < m; ++l) {
            const double ail = ai[l];
            const double* bl = b.row(l);
            for (int j = 0; j < n; ++j) ci[j] += ail * bl[j];
        }
    }
}

inline void matmul_bt_acc(const Matrix& a, const Matrix& b, Matrix& c) {
    thread_local Matrix scratch;
    const int m = b.cols(), n = b.rows();
    if (scratch.rows() != m || scratch.cols() != n) scratch = Matrix(m, n);
    for (int i = 0; i < n; ++i) {
        const double* bi = b.row(i);
        for (int j = 0; j < m; ++j) scratch.at(j, i) = bi[j];
    }
    matmul_acc(a, scratch, c);
}

inline void matmul_ta_acc(const Matrix& a, const Matrix& b, Matrix& c) {
    const int k = a.rows(), m = a.cols(), n = b.cols();
    for (int i = 0; i < k; ++i) {
        const double* ai = a.row(i);
        const double* bi = b.row(i);
        for (int l = 0; l < m; ++l) {
            const double ail = ai[l];
            double* cl = c.row(l);
            for (int j = 0; j < n; ++j) cl[j] += ail * bi[j];
        }
    }
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
    return t;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    check_shape(a, b, "add");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
    check_shape(a, b, "sub");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
    return c;
}

inline Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] *= s;
    return c;
}

inline double trace(const Matrix& a) {
    double t = 0.0;
    for (int i = 0; i < std::min(a.rows(), a.cols()); ++i) t += a.at(i, i);
    return t;
}

// In-place Gauss-Jordan inverse with partial pivoting; square input only.
inline Matrix inverse(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("inverse: matrix not square");
    const int n = a.rows();
    Matrix m = a;
    Matrix inv = Matrix::identity(n);
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(m.at(r, col)) > std::abs(m.at(piv, col))) piv = r;
        if (std::abs(m.at(piv, col)) < 1e-14) throw std::runtime_error("inverse: singular matrix");
        if (piv != col) {
            for (int j = 0; j < n; ++j) {
                std::swap(m.at(piv, j), m.at(col, j));
                std::swap(inv.at(piv, j), inv.at(col, j));
            }
        }
        const double d = m.at(col, col);
        for (int j = 0; j < n; ++j) {
            m.at(col, j) /= d;
            inv.at(col, j) /= d;
        }
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = m.at(r, col);
            if (f == 0.0) continue;
            for (int j = 0; j < n; ++j) {
                m.at(r, j) -= f * m.at(col, j);
                inv.at(r, j) -= f * inv.at(col, j);
            }
        }
    }
    return inv;
}

inline double determinant(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("determinant: matrix not square");
    const int n = a.rows();
    Matrix m = a;
    double det = 1.0;
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(m.at(r, col)) > std::abs(m.at(piv, col))) piv = r;
        if (std::abs(m.at(piv, col)) < 1e-300) return 0.0;
        if (piv != col) {
            for (int j = 0; j < n; ++j) std::swap(m.at(piv, j), m.at(col, j));
            det = -det;
        }
        det *= m.at(col, col);
        for (int r = col + 1; r < n; ++r) {
            const double f = m.at(r, col) / m.at(col, col);
            for (int j = col; j < n; ++j) m.at(r, j) -= f * m.at(col, j);
        }
    }
    return det;
}

// Deterministic random stream. All sampling goes through hand-rolled
// transforms so draws depend only on (seed, call sequence), not on the
// standard library's distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // Box-Muller; log argument kept strictly positive.
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    std::uint64_t next_u64() { return gen_(); }

    // uniform integer in [0, n)
    int index(int n) {
        const int i = static_cast<int>(uniform() * n);
        return i >= n ? n - 1 : i;
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace w2b
