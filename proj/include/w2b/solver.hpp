#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "w2b/adam.hpp"
#include "w2b/autodiff.hpp"
#include "w2b/distributions.hpp"
#include "w2b/groundtruth.hpp"
#include "w2b/icnn.hpp"

// Stochastic training of 2N input-convex potentials against the regularized
// dual objective: approximate multiple correlation plus the congruence and
// cycle-consistency penalties, optimized with Adam and a convexity
// projection after every step.
namespace w2b {

enum class PhatMode { standard_normal, gaussian_barycenter };

struct TrainConfig {
    double tau = 5.0;
    double lambda = 10.0;
    double gamma = 0.2;
    int batch = 1024;
    double lr = 1e-3;
    int iterations = 50000;
    int pretrain_iterations = 2000;
    double pretrain_lr = 1e-3;
    int pretrain_batch = 256;
    std::uint64_t seed = 0;
    PhatMode phat_mode = PhatMode::gaussian_barycenter;
    std::vector<int> hidden;  // empty: max(64, 2D), max(64, 2D), max(32, D)
    int skip_rank = 2;
    int log_every = 50;
    int moment_samples = 10000;  // for the gaussian_barycenter initial measure

    void validate() const {
        if (tau < 1.0) throw std::invalid_argument("TrainConfig: tau must be >= 1");
        if (lambda <= 0.0) throw std::invalid_argument("TrainConfig: lambda must be > 0");
        if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("TrainConfig: gamma must be in [0,1]");
        if (batch < 1 || iterations < 0 || lr <= 0.0) throw std::invalid_argument("TrainConfig: bad optimizer fields");
    }

    std::vector<int> hidden_for(int d) const {
        if (!hidden.empty()) return hidden;
        return {std::max(64, 2 * d), std::max(64, 2 * d), std::max(32, d)};
    }
};

struct BarycenterProblem {
    std::vector<SamplerPtr> samplers;
    std::vector<double> weights;

    int dim() const { return samplers.at(0)->dim(); }
    int count() const { return static_cast<int>(samplers.size()); }

    void validate() const {
        if (samplers.empty() || samplers.size() != weights.size())
            throw std::invalid_argument("BarycenterProblem: samplers and weights must match");
        check_weights(weights);
        for (const auto& s : samplers)
            if (s->dim() != dim()) throw std::invalid_argument("BarycenterProblem: dimension mismatch");
    }
};

struct LossComponents {
    double multicorr = 0.0;
    double cycle = 0.0;
    double congruence = 0.0;
    double total = 0.0;
    double total_se = 0.0;
};

struct TrainLogEntry {
    int iteration = 0;
    LossComponents components;
};

struct BarycenterModel {
    std::vector<PotentialNetwork> forward_nets;    // transport potentials
    std::vector<PotentialNetwork> conjugate_nets;  // approximate conjugates
    std::vector<double> weights;
    std::vector<TrainLogEntry> history;

    int count() const { return static_cast<int>(forward_nets.size()); }
    int dim() const { return forward_nets.at(0).config().input_dim; }
};

class TrainingDivergedError : public std::runtime_error {
public:
    TrainingDivergedError(long iteration, const std::string& what, BarycenterModel last_state)
        : std::runtime_error("training diverged at iteration " + std::to_string(iteration) + ": " + what),
          at(iteration),
          last_finite_state(std::move(last_state)) {}
    long at;
    BarycenterModel last_finite_state;  // parameters before the failing step
};

namespace detail {

// Shared loss graph for one batch size. Stores are registered in net order
// (forward nets first), so backward() gradients line up with that order.
class ObjectiveGraph {
public:
    ObjectiveGraph(BarycenterModel& model, int batch, double tau, double lambda, double gamma)
        : n_(model.count()), k_(batch), tau_(tau), lambda_(lambda), gamma_(gamma), weights_(model.weights) {
        const int d = model.dim();
        for (int n = 0; n < n_; ++n) graph_.add_store(model.forward_nets[n].params());
        for (int n = 0; n < n_; ++n) graph_.add_store(model.conjugate_nets[n].params());

        std::vector<int> push_nodes(n_);
        std::vector<int> conj_at_push(n_);  // conjugate n evaluated on its own pushforward
        for (int n = 0; n < n_; ++n) {
            const int x = graph_.input(k_, d);
            x_.push_back(x);
            const int psi = model.forward_nets[n].emit(graph_, x);
            const int y = graph_.gradient_wrt(psi, x);
            push_nodes[n] = y;
            conj_at_push[n] = model.conjugate_nets[n].emit(graph_, y);
            rows_multicorr_.push_back(graph_.sub(graph_.row_dot(x, y), conj_at_push[n]));
            const int z = graph_.gradient_wrt(conj_at_push[n], y);
            const int dz = graph_.sub(z, x);
            rows_cycle_.push_back(graph_.row_dot(dz, dz));
        }
        y0_ = graph_.input(k_, d);

        auto congruence_rows = [&](int batch_node, int reuse_index) {
            int acc = -1;
            for (int m = 0; m < n_; ++m) {
                const int val = (m == reuse_index) ? conj_at_push[m] : model.conjugate_nets[m].emit(graph_, batch_node);
                const int scaled = graph_.scalar_mul(val, weights_[m]);
                acc = acc < 0 ? scaled : graph_.add(acc, scaled);
            }
            const int half_sq = graph_.scalar_mul(graph_.row_dot(batch_node, batch_node), 0.5);
            return graph_.pos_part(graph_.sub(acc, half_sq));
        };
        rows_congruence_.push_back(congruence_rows(y0_, -1));
        for (int n = 0; n < n_; ++n) rows_congruence_.push_back(congruence_rows(push_nodes[n], n));

        auto weighted_mean_sum = [&](const std::vector<int>& rows, const std::vector<double>& w) {
            int acc = -1;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const int term = graph_.scalar_mul(graph_.sum_all(rows[i]), w[i] / k_);
                acc = acc < 0 ? term : graph_.add(acc, term);
            }
            return acc;
        };
        multicorr_ = weighted_mean_sum(rows_multicorr_, weights_);
        cycle_ = weighted_mean_sum(rows_cycle_, weights_);
        std::vector<double> gammas(n_ + 1);
        gammas[0] = gamma_;
        for (int n = 0; n < n_; ++n) gammas[n + 1] = weights_[n] * (1.0 - gamma_);
        congruence_ = weighted_mean_sum(rows_congruence_, gammas);
        total_ = graph_.add(multicorr_,
                            graph_.add(graph_.scalar_mul(cycle_, lambda_), graph_.scalar_mul(congruence_, tau_)));
    }

    void set_batches(const std::vector<Matrix>& xs, const Matrix& y0) {
        for (int n = 0; n < n_; ++n) graph_.set_input(x_[n], xs[n]);
        graph_.set_input(y0_, y0);
    }

    void forward() { graph_.forward(); }

    LossComponents components() const {
        LossComponents c;
        c.multicorr = graph_.scalar_value(multicorr_);
        c.cycle = graph_.scalar_value(cycle_);
        c.congruence = graph_.scalar_value(congruence_);
        c.total = graph_.scalar_value(total_);
        c.total_se = total_standard_error();
        return c;
    }

    const Matrix& multicorr_rows(int n) const { return graph_.value(rows_multicorr_[n]); }

    std::vector<std::vector<double>> backward() { return graph_.backward(total_); }

    // Standard error of the Monte-Carlo total: per-batch row contributions
    // are independent, so variances add across batches.
    double total_standard_error() const {
        double var = 0.0;
        auto accumulate = [&](auto&& row_value) {
            double mean = 0.0;
            for (int i = 0; i < k_; ++i) mean += row_value(i);
            mean /= k_;
            double ss = 0.0;
            for (int i = 0; i < k_; ++i) {
                const double d = row_value(i) - mean;
                ss += d * d;
            }
            var += (k_ > 1 ? ss / (k_ - 1) : 0.0) / k_;
        };
        const double g0 = tau_ * gamma_;
        const Matrix& q0 = graph_.value(rows_congruence_[0]);
        accumulate([&](int i) { return g0 * q0.at(i, 0); });
        for (int n = 0; n < n_; ++n) {
            const Matrix& m = graph_.value(rows_multicorr_[n]);
            const Matrix& cy = graph_.value(rows_cycle_[n]);
            const Matrix& q = graph_.value(rows_congruence_[n + 1]);
            const double a = weights_[n];
            const double gq = tau_ * a * (1.0 - gamma_);
            accumulate([&](int i) { return a * m.at(i, 0) + lambda_ * a * cy.at(i, 0) + gq * q.at(i, 0); });
        }
        return std::sqrt(var);
    }

private:
    ad::Graph graph_;
    int n_, k_;
    double tau_, lambda_, gamma_;
    std::vector<double> weights_;
    std::vector<int> x_;
    int y0_ = -1;
    std::vector<int> rows_multicorr_, rows_cycle_, rows_congruence_;
    int multicorr_ = -1, cycle_ = -1, congruence_ = -1, total_ = -1;
};

inline void check_rows_finite(const Matrix& rows, const std::string& tag) {
    for (int i = 0; i < rows.rows(); ++i)
        if (!std::isfinite(rows.at(i, 0))) throw ad::NonFiniteError(tag, i);
}

}  // namespace detail

// Monte-Carlo multiple-correlation estimate over given batches.
inline double multicorr_loss(BarycenterModel& model, const std::vector<Matrix>& batches) {
    double acc = 0.0;
    for (int n = 0; n < model.count(); ++n) {
        const Matrix& x = batches[n];
        ad::Graph g;
        const int xn = g.input(x.rows(), x.cols());
        g.set_input(xn, x);
        const int y = g.gradient_wrt(model.forward_nets[n].emit(g, xn), xn);
        const int rows = g.sub(g.row_dot(xn, y), model.conjugate_nets[n].emit(g, y));
        const int loss = g.scalar_mul(g.sum_all(rows), 1.0 / x.rows());
        g.forward();
        detail::check_rows_finite(g.value(rows), "multicorr n=" + std::to_string(n + 1));
        acc += model.weights[n] * g.scalar_value(loss);
    }
    return acc;
}

// Congruence penalty over the pushforward batches and the regularization
// batch, with mixture weights gamma and alpha_n (1 - gamma).
inline double congruence_loss(BarycenterModel& model, const std::vector<Matrix>& push_batches, const Matrix& phat_batch,
                              double gamma) {
    auto batch_term = [&](const Matrix& y) {
        ad::Graph g;
        const int yn = g.input(y.rows(), y.cols());
        g.set_input(yn, y);
        int acc = -1;
        for (int m = 0; m < model.count(); ++m) {
            const int val = g.scalar_mul(model.conjugate_nets[m].emit(g, yn), model.weights[m]);
            acc = acc < 0 ? val : g.add(acc, val);
        }
        const int rows = g.pos_part(g.sub(acc, g.scalar_mul(g.row_dot(yn, yn), 0.5)));
        const int s = g.sum_all(rows);
        g.forward();
        detail::check_rows_finite(g.value(rows), "congruence");
        return g.scalar_value(s) / y.rows();
    };
    double loss = gamma * batch_term(phat_batch);
    for (int n = 0; n < model.count(); ++n)
        loss += model.weights[n] * (1.0 - gamma) * batch_term(push_batches[n]);
    return loss;
}

inline double cycle_loss(BarycenterModel& model, const std::vector<Matrix>& batches) {
    double acc = 0.0;
    for (int n = 0; n < model.count(); ++n) {
        const Matrix& x = batches[n];
        ad::Graph g;
        const int xn = g.input(x.rows(), x.cols());
        g.set_input(xn, x);
        const int y = g.gradient_wrt(model.forward_nets[n].emit(g, xn), xn);
        const int z = g.gradient_wrt(model.conjugate_nets[n].emit(g, y), y);
        const int d = g.sub(z, xn);
        const int rows = g.row_dot(d, d);
        const int loss = g.scalar_mul(g.sum_all(rows), 1.0 / x.rows());
        g.forward();
        detail::check_rows_finite(g.value(rows), "cycle n=" + std::to_string(n + 1));
        acc += model.weights[n] * g.scalar_value(loss);
    }
    return acc;
}

// Draws fresh batches and evaluates the full objective once.
inline LossComponents total_loss(BarycenterModel& model, const BarycenterProblem& problem, const TrainConfig& config,
                                 const SamplerPtr& phat, Rng& rng) {
    detail::ObjectiveGraph obj(model, config.batch, config.tau, config.lambda, config.gamma);
    std::vector<Matrix> xs;
    for (int n = 0; n < problem.count(); ++n) xs.push_back(problem.samplers[n]->draw(rng, config.batch));
    const Matrix y0 = phat->draw(rng, config.batch);
    obj.set_batches(xs, y0);
    obj.forward();
    return obj.components();
}

inline SamplerPtr make_phat(const BarycenterProblem& problem, const TrainConfig& config, Rng& rng) {
    if (config.phat_mode == PhatMode::standard_normal)
        return std::make_shared<StandardNormalSampler>(problem.dim());
    std::vector<GaussianMoments> moments;
    for (const auto& s : problem.samplers) {
        if (auto exact = s->exact_moments())
            moments.push_back(*exact);
        else
            moments.push_back(estimate_moments(*s, rng, config.moment_samples));
    }
    return std::make_shared<GaussianSampler>(fixed_point_barycenter(moments, problem.weights));
}

// Algorithm: pretrain all 2N potentials to the quadratic, then iterate
// batch sampling, loss evaluation, one Adam step per network and the
// convexity projection.
inline BarycenterModel train(const BarycenterProblem& problem, const TrainConfig& config,
                             SamplerPtr* phat_out = nullptr) {
    problem.validate();
    config.validate();
    const int n = problem.count();
    const int d = problem.dim();

    Rng master(config.seed);
    std::vector<std::uint64_t> net_seeds, pretrain_seeds;
    for (int i = 0; i < 2 * n; ++i) net_seeds.push_back(master.next_u64());
    for (int i = 0; i < 2 * n; ++i) pretrain_seeds.push_back(master.next_u64());
    const std::uint64_t phat_seed = master.next_u64();
    const std::uint64_t train_seed = master.next_u64();

    DenseICNNConfig net_cfg;
    net_cfg.input_dim = d;
    net_cfg.hidden_sizes = config.hidden_for(d);
    net_cfg.skip_rank = config.skip_rank;

    BarycenterModel model;
    model.weights = problem.weights;
    for (int i = 0; i < 2 * n; ++i) {
        PotentialNetwork net(net_cfg);
        Rng init_rng(net_seeds[i]);
        net.init(init_rng);
        Rng pre_rng(pretrain_seeds[i]);
        pretrain_quadratic(net, config.pretrain_iterations, config.pretrain_lr, config.pretrain_batch, pre_rng);
        if (i < n)
            model.forward_nets.push_back(std::move(net));
        else
            model.conjugate_nets.push_back(std::move(net));
    }

    Rng phat_rng(phat_seed);
    const SamplerPtr phat = make_phat(problem, config, phat_rng);
    if (phat_out) *phat_out = phat;

    detail::ObjectiveGraph obj(model, config.batch, config.tau, config.lambda, config.gamma);
    std::vector<Adam> optimizers;
    for (int i = 0; i < 2 * n; ++i)
        optimizers.emplace_back((i < n ? model.forward_nets[i] : model.conjugate_nets[i - n]).params().size(),
                                AdamConfig{config.lr});

    Rng rng(train_seed);
    std::vector<Matrix> xs(n);
    for (int t = 0; t <= config.iterations; ++t) {
        for (int i = 0; i < n; ++i) xs[i] = problem.samplers[i]->draw(rng, config.batch);
        const Matrix y0 = phat->draw(rng, config.batch);
        obj.set_batches(xs, y0);
        obj.forward();
        const LossComponents c = obj.components();
        if (!std::isfinite(c.total)) throw TrainingDivergedError(t, "non-finite total loss", model);

        const bool last = t == config.iterations;
        if (t % config.log_every == 0 || last) model.history.push_back({t, c});
        if (last) break;  // parameters stay at the state the final log entry describes

        auto grads = obj.backward();
        for (int i = 0; i < n; ++i) {
            optimizers[i].step(model.forward_nets[i].params().values(), grads[i]);
            optimizers[n + i].step(model.conjugate_nets[i].params().values(), grads[n + i]);
        }
        for (auto& net : model.forward_nets) net.project_convex();
        for (auto& net : model.conjugate_nets) net.project_convex();
    }
    return model;
}

// Samples from one pushforward measure: draw from the n-th input, apply the
// trained transport map rowwise.
inline Matrix push_barycenter_samples(const BarycenterModel& model, const BarycenterProblem& problem, int n, int k,
                                      Rng& rng) {
    if (n < 1 || n > model.count()) throw std::invalid_argument("push_barycenter_samples: n out of range");
    const Matrix x = problem.samplers[n - 1]->draw(rng, k);
    return push(model.forward_nets[n - 1], x);
}

// Barycenter estimate as the weights-mixture of pushforwards.
inline Matrix sample_barycenter_mixture(const BarycenterModel& model, const BarycenterProblem& problem, int k,
                                        Rng& rng) {
    std::vector<int> component(k);
    std::vector<int> counts(model.count(), 0);
    for (int i = 0; i < k; ++i) {
        const double u = rng.uniform();
        double acc = 0.0;
        int pick = model.count() - 1;
        for (int c = 0; c < model.count(); ++c) {
            acc += model.weights[c];
            if (u < acc) {
                pick = c;
                break;
            }
        }
        component[i] = pick;
        ++counts[pick];
    }
    Matrix out(k, model.dim());
    for (int c = 0; c < model.count(); ++c) {
        if (counts[c] == 0) continue;
        const Matrix x = problem.samplers[c]->draw(rng, counts[c]);
        const Matrix y = push(model.forward_nets[c], x);
        int used = 0;
        for (int i = 0; i < k; ++i) {
            if (component[i] != c) continue;
            for (int j = 0; j < model.dim(); ++j) out.at(i, j) = y.at(used, j);
            ++used;
        }
    }
    return out;
}

// Multiple correlation of the closed-form location-scatter potentials,
// normalized so the conjugates satisfy the congruence identity exactly.
inline double multicorr_of_true_potentials(const std::vector<LinearMap>& maps,
                                           const std::vector<GaussianMoments>& inputs,
                                           const std::vector<double>& weights) {
    double acc = 0.0;
    double const_shift = 0.0;
    for (std::size_t n = 0; n < maps.size(); ++n) {
        const Matrix& a = maps[n].a;
        const auto& mu = inputs[n].mean;
        const int d = a.rows();
        double quad = trace(matmul(a, inputs[n].cov));
        double mu_a_mu = 0.0, b_mu = 0.0;
        for (int i = 0; i < d; ++i) {
            b_mu += maps[n].b[i] * mu[i];
            for (int j = 0; j < d; ++j) mu_a_mu += mu[i] * a.at(i, j) * mu[j];
        }
        acc += weights[n] * (0.5 * (quad + mu_a_mu) + b_mu);
        const Matrix ainv = inverse(a);
        double b_ainv_b = 0.0;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) b_ainv_b += maps[n].b[i] * ainv.at(i, j) * maps[n].b[j];
        const_shift += weights[n] * 0.5 * b_ainv_b;
    }
    return acc + const_shift;
}

}  // namespace w2b
