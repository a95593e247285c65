#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "w2b/matrix.hpp"

// Closed-form optimal transport between Gaussians and the fixed-point
// barycenter iteration for location-scatter families.
namespace w2b {

struct GaussianMoments {
    std::vector<double> mean;
    Matrix cov;

    int dim() const { return static_cast<int>(mean.size()); }
};

// T(x) = A x + b with A symmetric PSD for maps produced here.
struct LinearMap {
    Matrix a;
    std::vector<double> b;

    std::vector<double> apply(const std::vector<double>& x) const {
        std::vector<double> y(b);
        for (int i = 0; i < a.rows(); ++i)
            for (int j = 0; j < a.cols(); ++j) y[i] += a.at(i, j) * x[j];
        return y;
    }

    // rowwise: X A^T + b
    Matrix apply_rows(const Matrix& x) const {
        Matrix y = matmul_bt(x, a);
        for (int i = 0; i < y.rows(); ++i)
            for (int j = 0; j < y.cols(); ++j) y.at(i, j) += b[j];
        return y;
    }

    LinearMap inverted() const {
        LinearMap inv;
        inv.a = inverse(a);
        inv.b.assign(b.size(), 0.0);
        for (int i = 0; i < inv.a.rows(); ++i)
            for (int j = 0; j < inv.a.cols(); ++j) inv.b[i] -= inv.a.at(i, j) * b[j];
        return inv;
    }
};

struct SymEig {
    std::vector<double> values;  // ascending
    Matrix vectors;              // column j is the eigenvector for values[j]
};

// Cyclic Jacobi for symmetric matrices. Input is symmetrized first; fails if
// the asymmetry exceeds 1e-8 or if 100 sweeps do not converge.
inline SymEig sym_eig(const Matrix& m_in) {
    if (m_in.rows() != m_in.cols()) throw std::invalid_argument("sym_eig: matrix not square");
    const int n = m_in.rows();
    double asym = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) asym = std::max(asym, std::abs(m_in.at(i, j) - m_in.at(j, i)));
    if (asym >= 1e-8) throw std::invalid_argument("sym_eig: matrix is not symmetric (max asymmetry " +
                                                  std::to_string(asym) + ")");

    Matrix a = scale(add(m_in, transpose(m_in)), 0.5);
    Matrix q = Matrix::identity(n);
    const double scale_ref = std::max(a.max_abs(), 1e-300);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off = std::max(off, std::abs(a.at(i, j)));
        if (off < 1e-14 * scale_ref) {
            SymEig out;
            out.values.resize(n);
            for (int i = 0; i < n; ++i) out.values[i] = a.at(i, i);
            // sort ascending together with eigenvector columns
            std::vector<int> order(n);
            for (int i = 0; i < n; ++i) order[i] = i;
            std::sort(order.begin(), order.end(), [&](int x, int y) { return out.values[x] < out.values[y]; });
            SymEig sorted;
            sorted.values.resize(n);
            sorted.vectors = Matrix(n, n);
            for (int j = 0; j < n; ++j) {
                sorted.values[j] = out.values[order[j]];
                for (int i = 0; i < n; ++i) sorted.vectors.at(i, j) = q.at(i, order[j]);
            }
            return sorted;
        }
        for (int p = 0; p < n - 1; ++p) {
            for (int r = p + 1; r < n; ++r) {
                const double apq = a.at(p, r);
                if (std::abs(apq) < 1e-300) continue;
                const double app = a.at(p, p);
                const double aqq = a.at(r, r);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a.at(k, p);
                    const double akq = a.at(k, r);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, r) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a.at(p, k);
                    const double aqk = a.at(r, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(r, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double qkp = q.at(k, p);
                    const double qkq = q.at(k, r);
                    q.at(k, p) = c * qkp - s * qkq;
                    q.at(k, r) = s * qkp + c * qkq;
                }
            }
        }
    }
    throw std::runtime_error("sym_eig: Jacobi did not converge within 100 sweeps");
}

namespace detail {

// Q f(Lambda) Q^T for a spectral function f, with eigenvalue clamping.
template <typename Fn>
Matrix spectral_apply(const Matrix& m, Fn&& f) {
    const SymEig e = sym_eig(m);
    const int n = m.rows();
    Matrix scaled(n, n);
    for (int j = 0; j < n; ++j) {
        const double fj = f(e.values[j]);
        for (int i = 0; i < n; ++i) scaled.at(i, j) = e.vectors.at(i, j) * fj;
    }
    Matrix r = matmul_bt(scaled, e.vectors);
    // exact symmetry by construction up to round-off; enforce it
    return scale(add(r, transpose(r)), 0.5);
}

}  // namespace detail

inline Matrix sqrtm_psd(const Matrix& m) {
    return detail::spectral_apply(m, [&](double v) {
        if (v < -1e-9) throw std::runtime_error("sqrtm_psd: eigenvalue " + std::to_string(v) + " below -1e-9");
        return std::sqrt(std::max(v, 0.0));
    });
}

inline Matrix inv_sqrtm_psd(const Matrix& m) {
    return detail::spectral_apply(m, [&](double v) {
        if (v < 1e-12) throw std::runtime_error("inv_sqrtm_psd: matrix is numerically singular");
        return 1.0 / std::sqrt(v);
    });
}

// Squared Bures-Wasserstein distance with the |x-y|^2/2 cost convention.
inline double bures_w2_sq(const GaussianMoments& p, const GaussianMoments& q) {
    if (p.dim() != q.dim()) throw std::invalid_argument("bures_w2_sq: dimension mismatch");
    double mean_term = 0.0;
    for (int i = 0; i < p.dim(); ++i) {
        const double d = p.mean[i] - q.mean[i];
        mean_term += d * d;
    }
    const Matrix proot = sqrtm_psd(p.cov);
    const Matrix mid = sqrtm_psd(matmul(proot, matmul(q.cov, proot)));
    const double v = 0.5 * mean_term + 0.5 * trace(p.cov) + 0.5 * trace(q.cov) - trace(mid);
    if (v < -1e-9) throw std::runtime_error("bures_w2_sq: negative value " + std::to_string(v));
    return std::max(v, 0.0);
}

// Optimal transport map pushing N(mu_P, S_P) onto N(mu_Q, S_Q).
inline LinearMap gaussian_ot_map(const GaussianMoments& p, const GaussianMoments& q) {
    if (p.dim() != q.dim()) throw std::invalid_argument("gaussian_ot_map: dimension mismatch");
    const Matrix proot = sqrtm_psd(p.cov);
    const Matrix pinv_root = inv_sqrtm_psd(p.cov);
    const Matrix mid = sqrtm_psd(matmul(proot, matmul(q.cov, proot)));
    LinearMap map;
    map.a = matmul(pinv_root, matmul(mid, pinv_root));
    map.a = scale(add(map.a, transpose(map.a)), 0.5);
    map.b.resize(p.dim());
    for (int i = 0; i < p.dim(); ++i) {
        double ax = 0.0;
        for (int j = 0; j < p.dim(); ++j) ax += map.a.at(i, j) * p.mean[j];
        map.b[i] = q.mean[i] - ax;
    }
    const Matrix pushed = matmul(map.a, matmul(p.cov, map.a));
    if (sub(pushed, q.cov).max_abs() > 1e-6)
        throw std::runtime_error("gaussian_ot_map: pushforward covariance check failed");
    return map;
}

class FixedPointError : public std::runtime_error {
public:
    FixedPointError(int iters, double residual)
        : std::runtime_error("fixed_point_barycenter: no convergence after " + std::to_string(iters) +
                             " iterations (residual " + std::to_string(residual) + ")"),
          last_residual(residual) {}
    double last_residual;
};

inline void check_weights(const std::vector<double>& w) {
    double sum = 0.0;
    for (double v : w) {
        if (v <= 0.0) throw std::invalid_argument("weights must be positive");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("weights must sum to 1");
}

// Barycenter of Gaussians: exact mean average plus the covariance fixed
// point, iterated from the identity until the max-norm update falls below
// tol.
inline GaussianMoments fixed_point_barycenter(const std::vector<GaussianMoments>& inputs,
                                              const std::vector<double>& weights, double tol = 1e-10,
                                              int max_iter = 500) {
    if (inputs.empty() || inputs.size() != weights.size())
        throw std::invalid_argument("fixed_point_barycenter: bad inputs");
    check_weights(weights);
    const int d = inputs[0].dim();

    GaussianMoments bar;
    bar.mean.assign(d, 0.0);
    for (std::size_t n = 0; n < inputs.size(); ++n)
        for (int i = 0; i < d; ++i) bar.mean[i] += weights[n] * inputs[n].mean[i];

    Matrix sigma = Matrix::identity(d);
    double residual = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        const Matrix root = sqrtm_psd(sigma);
        const Matrix inv_root = inv_sqrtm_psd(sigma);
        Matrix acc = Matrix::zeros(d, d);
        for (std::size_t n = 0; n < inputs.size(); ++n) {
            const Matrix mid = sqrtm_psd(matmul(root, matmul(inputs[n].cov, root)));
            acc = add(acc, scale(mid, weights[n]));
        }
        const Matrix next = matmul(inv_root, matmul(matmul(acc, acc), inv_root));
        const Matrix sym_next = scale(add(next, transpose(next)), 0.5);
        residual = sub(sym_next, sigma).max_abs();
        sigma = sym_next;
        if (residual < tol) {
            bar.cov = sigma;
            return bar;
        }
    }
    throw FixedPointError(max_iter, residual);
}

// One location-scatter member: samples are S z + u for whitened z.
struct LsMember {
    Matrix s;                // DxD symmetric positive definite
    std::vector<double> u;   // shift
};

struct LsGroundTruth {
    GaussianMoments barycenter;
    std::vector<LinearMap> maps;  // member n -> barycenter
};

inline LsGroundTruth ls_ground_truth(const std::vector<LsMember>& members, const std::vector<double>& weights) {
    if (members.empty() || members.size() != weights.size())
        throw std::invalid_argument("ls_ground_truth: bad inputs");
    std::vector<GaussianMoments> moments;
    moments.reserve(members.size());
    for (const auto& m : members) {
        GaussianMoments g;
        g.mean = m.u;
        g.cov = matmul(m.s, m.s);
        g.cov = scale(add(g.cov, transpose(g.cov)), 0.5);
        moments.push_back(std::move(g));
    }
    LsGroundTruth out;
    out.barycenter = fixed_point_barycenter(moments, weights);
    out.maps.reserve(members.size());
    for (const auto& g : moments) out.maps.push_back(gaussian_ot_map(g, out.barycenter));
    return out;
}

}  // namespace w2b
