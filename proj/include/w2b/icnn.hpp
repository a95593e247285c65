#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "w2b/adam.hpp"
#include "w2b/autodiff.hpp"
#include "w2b/matrix.hpp"

// Dense input-convex potential networks.
//
// Each hidden layer receives a nonnegative combination of the previous
// layer plus a per-unit convex quadratic skip from the input:
//
//   z_1     = celu(Q_1(x))
//   z_{l+1} = celu(A_l z_l + Q_{l+1}(x)),   A_l >= 0 entrywise
//   psi(x)  = c^T z_L + Q_out(x),           c >= 0 entrywise
//
// where Q(x)_j = 1/2 sum_k <u_{j,k}, x>^2 + <w_j, x> + b_j with each unit's
// quadratic Hessian of rank `skip_rank`. CELU is convex and nondecreasing,
// so psi is convex in x whenever the flagged weights are nonnegative.
namespace w2b {

struct DenseICNNConfig {
    int input_dim = 0;
    std::vector<int> hidden_sizes;
    int skip_rank = 2;

    void validate() const {
        if (input_dim < 1) throw std::invalid_argument("DenseICNNConfig: input_dim must be >= 1");
        if (hidden_sizes.empty()) throw std::invalid_argument("DenseICNNConfig: hidden_sizes must be non-empty");
        for (int h : hidden_sizes)
            if (h < 1) throw std::invalid_argument("DenseICNNConfig: hidden sizes must be positive");
        if (skip_rank < 1) throw std::invalid_argument("DenseICNNConfig: skip_rank must be >= 1");
    }

    bool operator==(const DenseICNNConfig&) const = default;
};

class PotentialNetwork {
public:
    PotentialNetwork() = default;

    explicit PotentialNetwork(DenseICNNConfig cfg) : config_(std::move(cfg)) {
        config_.validate();
        const int D = config_.input_dim;
        const int r = config_.skip_rank;
        const int L = static_cast<int>(config_.hidden_sizes.size());
        for (int l = 0; l < L; ++l) {
            const int h = config_.hidden_sizes[l];
            quad_u_.push_back(params_.add_layer("quad_u" + std::to_string(l), h * r, D, ad::Constraint::free_));
            quad_w_.push_back(params_.add_layer("quad_w" + std::to_string(l), h, D, ad::Constraint::free_));
            quad_b_.push_back(params_.add_layer("quad_b" + std::to_string(l), 1, h, ad::Constraint::free_));
            if (l > 0)
                a_.push_back(params_.add_layer("a" + std::to_string(l), h, config_.hidden_sizes[l - 1],
                                               ad::Constraint::nonneg));
        }
        out_c_ = params_.add_layer("out_c", 1, config_.hidden_sizes.back(), ad::Constraint::nonneg);
        out_u_ = params_.add_layer("out_u", r, D, ad::Constraint::free_);
        out_w_ = params_.add_layer("out_w", 1, D, ad::Constraint::free_);
        out_b_ = params_.add_layer("out_b", 1, 1, ad::Constraint::free_);
    }

    const DenseICNNConfig& config() const { return config_; }
    ad::ParamStore& params() { return params_; }
    const ad::ParamStore& params() const { return params_; }
    std::size_t param_count() const { return params_.size(); }

    // Scaled-uniform initialization; nonnegative-flagged slices get absolute
    // values so the network is convex from the start. Biases start at zero.
    void init(Rng& rng) {
        for (int li = 0; li < params_.layer_count(); ++li) {
            const auto& d = params_.layer(li);
            auto vals = params_.layer_values(li);
            if (d.name.starts_with("quad_b") || d.name == "out_b") {
                for (auto& v : vals) v = 0.0;
                continue;
            }
            const double s = 1.0 / std::sqrt(static_cast<double>(d.cols));
            for (auto& v : vals) v = rng.uniform(-s, s);
            if (d.flag == ad::Constraint::nonneg)
                for (auto& v : vals) v = std::abs(v);
        }
    }

    void project_convex() { params_.project_nonneg(); }

    // Appends the potential evaluation for batch node `x` and returns the
    // Kx1 value node.
    int emit(ad::Graph& g, int x) const {
        const int D = config_.input_dim;
        if (g.node(x).cols != D) throw ad::DimensionError("PotentialNetwork::emit", D, g.node(x).cols);
        const int store = g.add_store(params_);
        const int r = config_.skip_rank;
        const int L = static_cast<int>(config_.hidden_sizes.size());

        auto quad_unit = [&](int l) {
            // per-unit rank-r quadratic + linear + bias, Kxh
            const int t = g.matmul_bt(x, g.param(store, quad_u_[l]));
            const int q = g.scalar_mul(g.group_sum_cols(g.mul(t, t), r), 0.5);
            const int lin = g.matmul_bt(x, g.param(store, quad_w_[l]));
            return g.add_row_vec(g.add(q, lin), g.param(store, quad_b_[l]));
        };

        int z = g.celu(quad_unit(0));
        for (int l = 1; l < L; ++l) {
            const int pre = g.add(g.matmul_bt(z, g.param(store, a_[l - 1])), quad_unit(l));
            z = g.celu(pre);
        }
        const int head = g.matmul_bt(z, g.param(store, out_c_));
        const int t = g.matmul_bt(x, g.param(store, out_u_));
        const int qout = g.scalar_mul(g.group_sum_cols(g.mul(t, t), r), 0.5);
        const int lin = g.matmul_bt(x, g.param(store, out_w_));
        return g.add_row_vec(g.add(head, g.add(qout, lin)), g.param(store, out_b_));
    }

private:
    DenseICNNConfig config_;
    ad::ParamStore params_;
    std::vector<int> quad_u_, quad_w_, quad_b_, a_;
    int out_c_ = -1, out_u_ = -1, out_w_ = -1, out_b_ = -1;
};

// Batch evaluator holding a reusable graph for a fixed batch size.
class PotentialEvaluator {
public:
    PotentialEvaluator(const PotentialNetwork& net, int batch, bool with_gradient)
        : batch_(batch) {
        x_ = graph_.input(batch, net.config().input_dim);
        psi_ = net.emit(graph_, x_);
        grad_ = with_gradient ? graph_.gradient_wrt(psi_, x_) : -1;
    }

    int batch() const { return batch_; }

    void run(const Matrix& x) {
        graph_.set_input(x_, x);
        graph_.forward();
    }

    const Matrix& psi() const { return graph_.value(psi_); }
    const Matrix& grad() const { return graph_.value(grad_); }

private:
    ad::Graph graph_;
    int batch_;
    int x_ = -1, psi_ = -1, grad_ = -1;
};

namespace detail {

template <typename Fn>
void for_chunks(const Matrix& x, int chunk, Fn&& fn) {
    int done = 0;
    while (done < x.rows()) {
        const int k = std::min(chunk, x.rows() - done);
        Matrix part(k, x.cols());
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < x.cols(); ++j) part.at(i, j) = x.at(done + i, j);
        fn(part, done);
        done += k;
    }
}

}  // namespace detail

constexpr int kEvalChunk = 8192;

// psi(x_k) for each row.
inline std::vector<double> forward(const PotentialNetwork& net, const Matrix& x) {
    std::vector<double> out(x.rows());
    std::optional<PotentialEvaluator> ev;
    detail::for_chunks(x, kEvalChunk, [&](const Matrix& part, int offset) {
        if (!ev || ev->batch() != part.rows()) ev.emplace(net, part.rows(), false);
        ev->run(part);
        for (int i = 0; i < part.rows(); ++i) out[offset + i] = ev->psi().at(i, 0);
    });
    return out;
}

// Pushforward map: rows are grad psi(x_k).
inline Matrix push(const PotentialNetwork& net, const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    std::optional<PotentialEvaluator> ev;
    detail::for_chunks(x, kEvalChunk, [&](const Matrix& part, int offset) {
        if (!ev || ev->batch() != part.rows()) ev.emplace(net, part.rows(), true);
        ev->run(part);
        for (int i = 0; i < part.rows(); ++i)
            for (int j = 0; j < x.cols(); ++j) out.at(offset + i, j) = ev->grad().at(i, j);
    });
    return out;
}

// Minimum midpoint convexity gap over random pairs drawn from N(0, 4 I).
inline double convexity_probe(const PotentialNetwork& net, int trials, std::uint64_t seed) {
    if (trials < 1) throw std::invalid_argument("convexity_probe: trials must be >= 1");
    Rng rng(seed);
    const int D = net.config().input_dim;
    double min_gap = std::numeric_limits<double>::infinity();
    int done = 0;
    while (done < trials) {
        const int k = std::min(kEvalChunk / 4, trials - done);
        Matrix x(k, D), y(k, D), m(k, D);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < D; ++j) {
                x.at(i, j) = 2.0 * rng.normal();
                y.at(i, j) = 2.0 * rng.normal();
                m.at(i, j) = 0.5 * (x.at(i, j) + y.at(i, j));
            }
        const auto px = forward(net, x);
        const auto py = forward(net, y);
        const auto pm = forward(net, m);
        for (int i = 0; i < k; ++i) min_gap = std::min(min_gap, 0.5 * px[i] + 0.5 * py[i] - pm[i]);
        done += k;
    }
    return min_gap;
}

class PretrainDivergedError : public std::runtime_error {
public:
    explicit PretrainDivergedError(long iteration)
        : std::runtime_error("pretraining diverged at iteration " + std::to_string(iteration)), at(iteration) {}
    long at;
};

// Fits the network to the quadratic potential |x|^2/2 on standard normal
// batches, matching both values and gradients. Projects after every step.
// Returns the loss evaluated at the last iteration.
inline double pretrain_quadratic(PotentialNetwork& net, int iters, double lr, int batch, Rng& rng) {
    const int D = net.config().input_dim;
    ad::Graph g;
    const int x = g.input(batch, D);
    const int psi = net.emit(g, x);
    const int grad = g.gradient_wrt(psi, x);
    const int target = g.scalar_mul(g.row_dot(x, x), 0.5);
    const int dv = g.sub(psi, target);
    const int lv = g.sum_all(g.mul(dv, dv));
    const int de = g.sub(grad, x);
    const int lg = g.sum_all(g.row_dot(de, de));
    const int loss = g.scalar_mul(g.add(lv, lg), 1.0 / batch);

    auto eval_loss = [&]() {
        Matrix xb(batch, D);
        for (int i = 0; i < batch; ++i)
            for (int j = 0; j < D; ++j) xb.at(i, j) = rng.normal();
        g.set_input(x, xb);
        g.forward();
        return g.scalar_value(loss);
    };

    if (iters <= 0) return eval_loss();

    Adam adam(net.params().size(), {lr});
    double last = 0.0;
    for (int it = 0; it < iters; ++it) {
        last = eval_loss();
        if (!std::isfinite(last)) throw PretrainDivergedError(it);
        auto grads = g.backward(loss);
        adam.step(net.params().values(), grads[0]);
        net.project_convex();
    }
    return last;
}

// Checkpoint format: doubles stored as hex-encoded IEEE-754 bit patterns so
// save/load round-trips are bit-exact.
namespace detail {

inline std::string double_to_hex(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 0; i < 16; ++i) s[15 - i] = digits[(bits >> (4 * i)) & 0xF];
    return s;
}

inline double hex_to_double(const std::string& s) {
    if (s.size() != 16) throw std::runtime_error("checkpoint: bad hex double '" + s + "'");
    std::uint64_t bits = 0;
    for (char ch : s) {
        bits <<= 4;
        if (ch >= '0' && ch <= '9') bits |= static_cast<std::uint64_t>(ch - '0');
        else if (ch >= 'a' && ch <= 'f') bits |= static_cast<std::uint64_t>(ch - 'a' + 10);
        else throw std::runtime_error("checkpoint: bad hex digit in '" + s + "'");
    }
    return std::bit_cast<double>(bits);
}

}  // namespace detail

inline nlohmann::json checkpoint_to_json(const PotentialNetwork& net) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["config"] = {{"input_dim", net.config().input_dim},
                   {"hidden_sizes", net.config().hidden_sizes},
                   {"skip_rank", net.config().skip_rank},
                   {"activation", "celu"}};
    nlohmann::json layers = nlohmann::json::array();
    for (int i = 0; i < net.params().layer_count(); ++i) {
        const auto& d = net.params().layer(i);
        layers.push_back({{"name", d.name},
                          {"rows", d.rows},
                          {"cols", d.cols},
                          {"flag", d.flag == ad::Constraint::nonneg ? "nonneg" : "free"}});
    }
    j["layers"] = layers;
    nlohmann::json params = nlohmann::json::array();
    for (double v : net.params().values()) params.push_back(detail::double_to_hex(v));
    j["params"] = params;
    return j;
}

inline PotentialNetwork checkpoint_from_json(const nlohmann::json& j) {
    if (j.at("format_version").get<int>() != 1) throw std::runtime_error("checkpoint: unsupported format_version");
    DenseICNNConfig cfg;
    cfg.input_dim = j.at("config").at("input_dim").get<int>();
    cfg.hidden_sizes = j.at("config").at("hidden_sizes").get<std::vector<int>>();
    cfg.skip_rank = j.at("config").at("skip_rank").get<int>();
    PotentialNetwork net(cfg);
    const auto& layers = j.at("layers");
    if (static_cast<int>(layers.size()) != net.params().layer_count())
        throw std::runtime_error("checkpoint: layer layout mismatch");
    for (int i = 0; i < net.params().layer_count(); ++i) {
        const auto& d = net.params().layer(i);
        if (layers[i].at("name").get<std::string>() != d.name || layers[i].at("rows").get<int>() != d.rows ||
            layers[i].at("cols").get<int>() != d.cols)
            throw std::runtime_error("checkpoint: layer layout mismatch at '" + d.name + "'");
    }
    const auto& params = j.at("params");
    if (params.size() != net.params().size()) throw std::runtime_error("checkpoint: parameter count mismatch");
    auto vals = net.params().values();
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = detail::hex_to_double(params[i].get<std::string>());
    return net;
}

inline void save_checkpoint(const PotentialNetwork& net, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    f << checkpoint_to_json(net).dump(1) << "\n";
}

inline PotentialNetwork load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    f >> j;
    return checkpoint_from_json(j);
}

}  // namespace w2b
