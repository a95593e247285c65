#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "w2b/distributions.hpp"
#include "w2b/groundtruth.hpp"
#include "w2b/solver.hpp"

// Evaluation metrics: unexplained-variance percentages against closed-form
// maps and moments, plus the congruence and cycle sanity checks.
namespace w2b {

inline double variance_of(const GaussianMoments& m) { return trace(m.cov); }

// 100 * mean_rows |learned(x) - true(x)|^2 / var_bar over the given rows.
template <typename MapFn>
double l2_uvp_rows(MapFn&& learned, const LinearMap& truth, const Matrix& x, double var_bar) {
    if (var_bar <= 0.0) throw std::invalid_argument("l2_uvp: var_bar must be positive");
    const Matrix learned_y = learned(x);
    const Matrix true_y = truth.apply_rows(x);
    double acc = 0.0;
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) {
            const double d = learned_y.at(i, j) - true_y.at(i, j);
            acc += d * d;
        }
    return 100.0 * (acc / x.rows()) / var_bar;
}

// Monte-Carlo estimate over fresh draws from the input measure.
template <typename MapFn>
double l2_uvp_fn(MapFn&& learned, const LinearMap& truth, const Sampler& sampler, double var_bar, int k, Rng& rng) {
    if (k < 1000) throw std::invalid_argument("l2_uvp: need at least 1e3 samples");
    return l2_uvp_rows(learned, truth, sampler.draw(rng, k), var_bar);
}

inline double l2_uvp(const PotentialNetwork& net, const LinearMap& truth, const Sampler& sampler, double var_bar,
                     int k, Rng& rng) {
    return l2_uvp_fn([&](const Matrix& x) { return push(net, x); }, truth, sampler, var_bar, k, rng);
}

inline double bw2_uvp(const GaussianMoments& estimate, const GaussianMoments& truth, double var_bar) {
    if (var_bar <= 0.0) throw std::invalid_argument("bw2_uvp: var_bar must be positive");
    return 100.0 * bures_w2_sq(estimate, truth) / (0.5 * var_bar);
}

// Congruence sanity check: for optimal potentials the weighted average of
// the conjugate transport maps is the identity on the barycenter, so this
// reports |sum_n alpha_n grad conj_n(x) - x|^2 over barycenter samples as a
// percent of the barycenter variance. (The forward maps do not average to
// the identity, not even at the optimum.)
inline double congruence_metric(const BarycenterModel& model, const BarycenterProblem& problem, double var_bar, int k,
                                Rng& rng) {
    const Matrix x = sample_barycenter_mixture(model, problem, k, rng);
    Matrix acc(k, model.dim());
    for (int n = 0; n < model.count(); ++n) {
        const Matrix y = push(model.conjugate_nets[n], x);
        const double a = model.weights[n];
        for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] += a * y.data()[i];
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < acc.size(); ++i) {
        const double d = acc.data()[i] - x.data()[i];
        sq += d * d;
    }
    return 100.0 * (sq / k) / var_bar;
}

// |grad conj_n(grad psi_n(x)) - x|^2 over P_n, as a percent of Var(P_n).
inline double cycle_metric(const BarycenterModel& model, const BarycenterProblem& problem, int n, int k, Rng& rng) {
    if (n < 1 || n > model.count()) throw std::invalid_argument("cycle_metric: n out of range");
    const auto& sampler = *problem.samplers[n - 1];
    double var_n = 0.0;
    if (auto exact = sampler.exact_moments())
        var_n = variance_of(*exact);
    else
        var_n = variance_of(estimate_moments(sampler, rng, 10000));
    const Matrix x = sampler.draw(rng, k);
    const Matrix y = push(model.forward_nets[n - 1], x);
    const Matrix z = push(model.conjugate_nets[n - 1], y);
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = z.data()[i] - x.data()[i];
        sq += d * d;
    }
    return 100.0 * (sq / k) / var_n;
}

struct MetricReport {
    std::vector<double> weights;
    std::vector<double> l2_uvp_pct;      // per input; empty when no map ground truth
    std::vector<double> cycle_pct;       // per input
    std::vector<double> input_bw2_pct;   // per pushforward vs reference; empty when unused
    double weighted_l2_uvp_pct = -1.0;   // negative: not applicable
    double bw2_uvp_pct = -1.0;           // pooled pushforward vs reference
    double congruence_pct = -1.0;
    long samples = 0;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["weights"] = weights;
        if (!l2_uvp_pct.empty()) j["l2_uvp_pct"] = l2_uvp_pct;
        if (!cycle_pct.empty()) j["cycle_pct"] = cycle_pct;
        if (!input_bw2_pct.empty()) j["input_bw2_pct"] = input_bw2_pct;
        if (weighted_l2_uvp_pct >= 0.0) j["weighted_l2_uvp_pct"] = weighted_l2_uvp_pct;
        if (bw2_uvp_pct >= 0.0) j["bw2_uvp_pct"] = bw2_uvp_pct;
        if (congruence_pct >= 0.0) j["congruence_pct"] = congruence_pct;
        j["samples"] = samples;
        return j;
    }

    // One row per input distribution plus a summary row. Empty cells mean
    // the metric does not apply to the experiment.
    std::string to_csv() const {
        std::ostringstream out;
        out << "kind,index,weight,l2_uvp_pct,bw2_uvp_pct,cycle_pct,congruence_pct,samples\n";
        auto cell = [](std::ostringstream& os, double v) {
            if (v >= 0.0) os << v;
        };
        for (std::size_t n = 0; n < weights.size(); ++n) {
            out << "input," << (n + 1) << "," << weights[n] << ",";
            cell(out, n < l2_uvp_pct.size() ? l2_uvp_pct[n] : -1.0);
            out << ",";
            cell(out, n < input_bw2_pct.size() ? input_bw2_pct[n] : -1.0);
            out << ",";
            cell(out, n < cycle_pct.size() ? cycle_pct[n] : -1.0);
            out << ",," << samples << "\n";
        }
        out << "summary,,,";
        cell(out, weighted_l2_uvp_pct);
        out << ",";
        cell(out, bw2_uvp_pct);
        out << ",,";
        cell(out, congruence_pct);
        out << "," << samples << "\n";
        return out.str();
    }
};

}  // namespace w2b
