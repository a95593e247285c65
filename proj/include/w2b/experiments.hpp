#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "w2b/distributions.hpp"
#include "w2b/metrics.hpp"
#include "w2b/solver.hpp"

// Experiment orchestration: resolved JSON configs, deterministic output
// files (reports, logs, checkpoints, sample dumps) and a manifest with
// content hashes of every input.
namespace w2b {

namespace detail {

// SHA-1, used for git-style blob hashes in run manifests.
class Sha1 {
public:
    void update(const unsigned char* data, std::size_t len) {
        for (std::size_t i = 0; i < len; ++i) {
            buffer_[buffered_++] = data[i];
            ++total_;
            if (buffered_ == 64) {
                process();
                buffered_ = 0;
            }
        }
    }

    std::string finish() {
        const std::uint64_t bits = total_ * 8;
        unsigned char pad = 0x80;
        update(&pad, 1);
        const unsigned char zero = 0x00;
        while (buffered_ != 56) update(&zero, 1);
        for (int i = 7; i >= 0; --i) {
            const unsigned char b = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
            update(&b, 1);
        }
        std::ostringstream out;
        for (std::uint32_t h : h_) out << std::hex << std::setw(8) << std::setfill('0') << h;
        return out.str();
    }

private:
    void process() {
        std::uint32_t w[80];
        for (int i = 0; i < 16; ++i)
            w[i] = (static_cast<std::uint32_t>(buffer_[4 * i]) << 24) |
                   (static_cast<std::uint32_t>(buffer_[4 * i + 1]) << 16) |
                   (static_cast<std::uint32_t>(buffer_[4 * i + 2]) << 8) |
                   static_cast<std::uint32_t>(buffer_[4 * i + 3]);
        auto rol = [](std::uint32_t v, int s) { return (v << s) | (v >> (32 - s)); };
        for (int i = 16; i < 80; ++i) w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
        std::uint32_t a = h_[0], b = h_[1], c = h_[2], d = h_[3], e = h_[4];
        for (int i = 0; i < 80; ++i) {
            std::uint32_t f, k;
            if (i < 20) {
                f = (b & c) | (~b & d);
                k = 0x5A827999;
            } else if (i < 40) {
                f = b ^ c ^ d;
                k = 0x6ED9EBA1;
            } else if (i < 60) {
                f = (b & c) | (b & d) | (c & d);
                k = 0x8F1BBCDC;
            } else {
                f = b ^ c ^ d;
                k = 0xCA62C1D6;
            }
            const std::uint32_t tmp = rol(a, 5) + f + e + k + w[i];
            e = d;
            d = c;
            c = rol(b, 30);
            b = a;
            a = tmp;
        }
        h_[0] += a;
        h_[1] += b;
        h_[2] += c;
        h_[3] += d;
        h_[4] += e;
    }

    std::array<std::uint32_t, 5> h_ = {0x67452301, 0xEFCDAB89, 0x98BADCFE, 0x10325476, 0xC3D2E1F0};
    unsigned char buffer_[64];
    std::size_t buffered_ = 0;
    std::uint64_t total_ = 0;
};

inline std::string git_blob_sha1(const std::string& content) {
    Sha1 h;
    const std::string header = "blob " + std::to_string(content.size()) + '\0';
    h.update(reinterpret_cast<const unsigned char*>(header.data()), header.size());
    h.update(reinterpret_cast<const unsigned char*>(content.data()), content.size());
    return h.finish();
}

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open input file: " + path);
    std::ostringstream out;
    out << f.rdbuf();
    return out.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open output file: " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
}

// Shortest representation that round-trips; keeps sample dumps bit-stable.
inline std::string format_double(double v) {
    std::ostringstream out;
    out << std::setprecision(17) << v;
    return out.str();
}

inline std::string matrix_to_csv(const Matrix& m, const std::string& header) {
    std::ostringstream out;
    if (!header.empty()) out << header << "\n";
    for (int i = 0; i < m.rows(); ++i) {
        for (int j = 0; j < m.cols(); ++j) {
            if (j) out << ",";
            out << format_double(m.at(i, j));
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace detail

// Shared similarity transform (translation + scalar scale) applied to all
// inputs of an experiment before training. Barycenters and optimal maps
// conjugate exactly under a common similarity, so training on standardized
// data and mapping back is loss-free while keeping the networks on the unit
// scale they are initialized for.
struct Similarity {
    std::vector<double> mean;
    double scale = 1.0;

    static Similarity fit(const Matrix& pooled_rows) {
        const auto m = moments_of_rows(pooled_rows);
        Similarity s;
        s.mean = m.mean;
        s.scale = std::sqrt(std::max(trace(m.cov) / m.dim(), 1e-12));
        return s;
    }

    Matrix to_standard(const Matrix& x) const {
        Matrix z = x;
        for (int i = 0; i < z.rows(); ++i)
            for (int j = 0; j < z.cols(); ++j) z.at(i, j) = (z.at(i, j) - mean[j]) / scale;
        return z;
    }

    Matrix to_original(const Matrix& z) const {
        Matrix x = z;
        for (int i = 0; i < x.rows(); ++i)
            for (int j = 0; j < x.cols(); ++j) x.at(i, j) = x.at(i, j) * scale + mean[j];
        return x;
    }

    nlohmann::json to_json() const { return {{"mean", mean}, {"scale", scale}}; }
};

inline void write_ppm(const std::string& path, int width, int height, const Matrix& rows) {
    if (rows.rows() != width * height || rows.cols() != 3)
        throw std::invalid_argument("write_ppm: rows must be width*height x 3");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
    f << "P6\n" << width << " " << height << "\n255\n";
    std::vector<unsigned char> bytes(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double v = std::floor(rows.data()[i] * 255.0 + 0.5);  // round half up
        bytes[i] = static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
    }
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

enum class ExperimentKind { location_scatter, posterior, palette, mixture2d };

enum class WeightsMode { preset_4, triangular, uniform, explicit_list };

struct MixtureComponentSpec {
    std::vector<double> mean;
    Matrix cov;
    double weight = 1.0;
};

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::location_scatter;
    int dim = 2;
    int n_inputs = 4;
    BaseKind base = BaseKind::gaussian;
    WeightsMode weights_mode = WeightsMode::preset_4;
    bool weights_configured = false;  // false: file-based experiments fall back to uniform
    std::vector<double> explicit_weights;
    TrainConfig train;
    long eval_samples = 100000;
    std::vector<std::string> inputs;  // posterior subset CSVs or palette images
    std::string reference;            // posterior full-data CSV
    std::vector<std::vector<MixtureComponentSpec>> mixtures;
    std::string out_dir = "out";
    std::uint64_t seed = 0;

    std::vector<double> resolve_weights() const {
        const int n = n_inputs;
        switch (weights_mode) {
            case WeightsMode::preset_4:
                if (n != 4) throw std::invalid_argument("weights mode preset_4 requires 4 inputs");
                return {0.1, 0.2, 0.3, 0.4};
            case WeightsMode::triangular: {
                std::vector<double> w(n);
                for (int i = 1; i <= n; ++i) w[i - 1] = 2.0 * i / (static_cast<double>(n) * (n + 1));
                return w;
            }
            case WeightsMode::uniform:
                return std::vector<double>(n, 1.0 / n);
            case WeightsMode::explicit_list:
                if (static_cast<int>(explicit_weights.size()) != n)
                    throw std::invalid_argument("explicit weights must list one value per input");
                return explicit_weights;
        }
        throw std::logic_error("resolve_weights: bad mode");
    }
};

inline std::string kind_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::location_scatter: return "location_scatter";
        case ExperimentKind::posterior: return "posterior";
        case ExperimentKind::palette: return "palette";
        case ExperimentKind::mixture2d: return "mixture2d";
    }
    return "?";
}

inline ExperimentKind kind_from_name(const std::string& s) {
    if (s == "location_scatter") return ExperimentKind::location_scatter;
    if (s == "posterior") return ExperimentKind::posterior;
    if (s == "palette") return ExperimentKind::palette;
    if (s == "mixture2d") return ExperimentKind::mixture2d;
    throw std::invalid_argument("unknown experiment '" + s + "'");
}

inline std::string base_name(BaseKind b) {
    switch (b) {
        case BaseKind::gaussian: return "gaussian";
        case BaseKind::uniform_cube: return "uniform_cube";
        case BaseKind::swiss_roll: return "swiss_roll";
    }
    return "?";
}

inline BaseKind base_from_name(const std::string& s) {
    if (s == "gaussian") return BaseKind::gaussian;
    if (s == "uniform_cube") return BaseKind::uniform_cube;
    if (s == "swiss_roll") return BaseKind::swiss_roll;
    throw std::invalid_argument("unknown base distribution '" + s + "'");
}

inline std::string weights_name(WeightsMode w) {
    switch (w) {
        case WeightsMode::preset_4: return "preset_4";
        case WeightsMode::triangular: return "triangular";
        case WeightsMode::uniform: return "uniform";
        case WeightsMode::explicit_list: return "explicit";
    }
    return "?";
}

inline WeightsMode weights_from_name(const std::string& s) {
    if (s == "preset_4") return WeightsMode::preset_4;
    if (s == "triangular") return WeightsMode::triangular;
    if (s == "uniform") return WeightsMode::uniform;
    if (s == "explicit") return WeightsMode::explicit_list;
    throw std::invalid_argument("unknown weights mode '" + s + "'");
}


inline nlohmann::json train_config_to_json(const TrainConfig& t) {
    return nlohmann::json{{"tau", t.tau},
                          {"lambda", t.lambda},
                          {"gamma", t.gamma},
                          {"batch", t.batch},
                          {"lr", t.lr},
                          {"iterations", t.iterations},
                          {"pretrain_iterations", t.pretrain_iterations},
                          {"pretrain_lr", t.pretrain_lr},
                          {"pretrain_batch", t.pretrain_batch},
                          {"hidden", t.hidden},
                          {"skip_rank", t.skip_rank},
                          {"phat", t.phat_mode == PhatMode::standard_normal ? "standard_normal" : "gaussian_barycenter"},
                          {"log_every", t.log_every},
                          {"moment_samples", t.moment_samples}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig t;
    t.tau = j.value("tau", t.tau);
    t.lambda = j.value("lambda", t.lambda);
    t.gamma = j.value("gamma", t.gamma);
    t.batch = j.value("batch", t.batch);
    t.lr = j.value("lr", t.lr);
    t.iterations = j.value("iterations", t.iterations);
    t.pretrain_iterations = j.value("pretrain_iterations", t.pretrain_iterations);
    t.pretrain_lr = j.value("pretrain_lr", t.pretrain_lr);
    t.pretrain_batch = j.value("pretrain_batch", t.pretrain_batch);
    t.hidden = j.value("hidden", t.hidden);
    t.skip_rank = j.value("skip_rank", t.skip_rank);
    if (j.contains("phat")) {
        const std::string p = j.at("phat").get<std::string>();
        if (p == "standard_normal") t.phat_mode = PhatMode::standard_normal;
        else if (p == "gaussian_barycenter") t.phat_mode = PhatMode::gaussian_barycenter;
        else throw std::invalid_argument("unknown phat mode '" + p + "'");
    }
    t.log_every = j.value("log_every", t.log_every);
    t.moment_samples = j.value("moment_samples", t.moment_samples);
    return t;
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["experiment"] = kind_name(c.experiment);
    j["dim"] = c.dim;
    j["n_inputs"] = c.n_inputs;
    j["base"] = base_name(c.base);
    j["weights"] = {{"mode", weights_name(c.weights_mode)}};
    if (c.weights_mode == WeightsMode::explicit_list) j["weights"]["values"] = c.explicit_weights;
    j["train"] = train_config_to_json(c.train);
    j["eval_samples"] = c.eval_samples;
    j["inputs"] = c.inputs;
    j["reference"] = c.reference;
    if (!c.mixtures.empty()) {
        nlohmann::json mixes = nlohmann::json::array();
        for (const auto& mix : c.mixtures) {
            nlohmann::json parts = nlohmann::json::array();
            for (const auto& p : mix) {
                nlohmann::json comp;
                comp["mean"] = p.mean;
                std::vector<std::vector<double>> cov(p.cov.rows(), std::vector<double>(p.cov.cols()));
                for (int i = 0; i < p.cov.rows(); ++i)
                    for (int jx = 0; jx < p.cov.cols(); ++jx) cov[i][jx] = p.cov.at(i, jx);
                comp["cov"] = cov;
                comp["weight"] = p.weight;
                parts.push_back(comp);
            }
            mixes.push_back(parts);
        }
        j["mixture"] = mixes;
    }
    j["out_dir"] = c.out_dir;
    j["seed"] = c.seed;
    return j;
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    if (j.contains("experiment")) c.experiment = kind_from_name(j.at("experiment").get<std::string>());
    c.dim = j.value("dim", c.dim);
    c.n_inputs = j.value("n_inputs", c.n_inputs);
    if (j.contains("base")) c.base = base_from_name(j.at("base").get<std::string>());
    if (j.contains("weights")) {
        c.weights_mode = weights_from_name(j.at("weights").value("mode", "uniform"));
        c.weights_configured = true;
        if (c.weights_mode == WeightsMode::explicit_list)
            c.explicit_weights = j.at("weights").at("values").get<std::vector<double>>();
    }
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    c.eval_samples = j.value("eval_samples", c.eval_samples);
    c.inputs = j.value("inputs", c.inputs);
    c.reference = j.value("reference", c.reference);
    if (j.contains("mixture")) {
        for (const auto& mix : j.at("mixture")) {
            std::vector<MixtureComponentSpec> parts;
            for (const auto& p : mix) {
                MixtureComponentSpec spec;
                spec.mean = p.at("mean").get<std::vector<double>>();
                const auto rows = p.at("cov").get<std::vector<std::vector<double>>>();
                spec.cov = Matrix(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
                for (std::size_t i = 0; i < rows.size(); ++i)
                    for (std::size_t jx = 0; jx < rows[i].size(); ++jx)
                        spec.cov.at(static_cast<int>(i), static_cast<int>(jx)) = rows[i][jx];
                spec.weight = p.value("weight", 1.0);
                parts.push_back(std::move(spec));
            }
            c.mixtures.push_back(std::move(parts));
        }
    }
    c.out_dir = j.value("out_dir", c.out_dir);
    c.seed = j.value("seed", c.seed);
    return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path);
    nlohmann::json j;
    f >> j;
    // a run manifest is also a valid config source
    if (j.contains("config")) j = j.at("config");
    return experiment_config_from_json(j);
}

struct ExperimentReport {
    MetricReport metrics;
    nlohmann::json manifest;
    std::string out_dir;
};

namespace detail {

struct RunContext {
    ExperimentConfig config;
    std::filesystem::path out;
    std::vector<nlohmann::json> input_hashes;
    std::vector<std::string> outputs;

    explicit RunContext(const ExperimentConfig& c) : config(c), out(c.out_dir) {
        std::filesystem::create_directories(out);
    }

    void hash_input(const std::string& path) {
        input_hashes.push_back({{"path", path}, {"sha1", git_blob_sha1(read_file_bytes(path))}});
    }

    void emit(const std::string& name, const std::string& content) {
        write_file((out / name).string(), content);
        outputs.push_back(name);
    }

    void emit_json(const std::string& name, const nlohmann::json& j) { emit(name, j.dump(1) + "\n"); }

    nlohmann::json training_log(const BarycenterModel& model) const {
        nlohmann::json entries = nlohmann::json::array();
        for (const auto& e : model.history)
            entries.push_back({{"iteration", e.iteration},
                               {"multicorr", e.components.multicorr},
                               {"cycle", e.components.cycle},
                               {"congruence", e.components.congruence},
                               {"total", e.components.total},
                               {"total_se", e.components.total_se}});
        return nlohmann::json{{"entries", entries}};
    }

    void emit_checkpoints(const BarycenterModel& model, nlohmann::json extra = nlohmann::json::object()) {
        nlohmann::json files = nlohmann::json::array();
        for (int n = 0; n < model.count(); ++n) {
            const std::string fwd = "checkpoint_fwd_" + std::to_string(n + 1) + ".json";
            const std::string conj = "checkpoint_conj_" + std::to_string(n + 1) + ".json";
            emit(fwd, checkpoint_to_json(model.forward_nets[n]).dump(1) + "\n");
            emit(conj, checkpoint_to_json(model.conjugate_nets[n]).dump(1) + "\n");
            files.push_back(fwd);
            files.push_back(conj);
        }
        nlohmann::json manifest = {{"weights", model.weights},
                                   {"train", train_config_to_json(config.train)},
                                   {"checkpoints", files}};
        manifest.update(extra);
        emit_json("model_manifest.json", manifest);
    }

    ExperimentReport finish(const MetricReport& metrics) {
        emit_json("report.json", metrics.to_json());
        emit("report.csv", metrics.to_csv());
        nlohmann::json manifest;
        manifest["config"] = experiment_config_to_json(config);
        manifest["inputs"] = input_hashes;
        manifest["outputs"] = outputs;
        emit_json("manifest.json", manifest);
        return ExperimentReport{metrics, manifest, out.string()};
    }
};

}  // namespace detail

inline ExperimentReport run_location_scatter(const ExperimentConfig& config) {
    detail::RunContext ctx(config);
    Rng master(config.seed);
    const std::uint64_t family_seed = master.next_u64();
    const std::uint64_t train_seed = master.next_u64();
    const std::uint64_t eval_seed = master.next_u64();

    const auto family = make_ls_family(config.dim, config.n_inputs, config.base, family_seed);
    BarycenterProblem problem;
    for (const auto& f : family) problem.samplers.push_back(f);
    problem.weights = config.resolve_weights();

    std::vector<LsMember> members;
    for (const auto& f : family) members.push_back(f->member());
    const auto gt = ls_ground_truth(members, problem.weights);
    const double var_bar = variance_of(gt.barycenter);

    TrainConfig tc = config.train;
    tc.seed = train_seed;
    auto model = train(problem, tc);

    Rng eval(eval_seed);
    MetricReport metrics;
    metrics.weights = problem.weights;
    metrics.samples = config.eval_samples;
    const int k = static_cast<int>(config.eval_samples);
    double weighted = 0.0;
    for (int n = 0; n < problem.count(); ++n) {
        const double v = l2_uvp(model.forward_nets[n], gt.maps[n], *problem.samplers[n], var_bar, k, eval);
        metrics.l2_uvp_pct.push_back(v);
        weighted += problem.weights[n] * v;
        metrics.cycle_pct.push_back(cycle_metric(model, problem, n + 1, k, eval));
    }
    metrics.weighted_l2_uvp_pct = weighted;
    const Matrix pooled = sample_barycenter_mixture(model, problem, k, eval);
    metrics.bw2_uvp_pct = bw2_uvp(moments_of_rows(pooled), gt.barycenter, var_bar);
    metrics.congruence_pct = congruence_metric(model, problem, var_bar, k, eval);

    ctx.emit("training_log.json", ctx.training_log(model).dump(1) + "\n");
    ctx.emit_checkpoints(model);
    if (config.dim == 2) {
        Rng plot(eval_seed + 1);
        for (int n = 0; n < problem.count(); ++n) {
            const Matrix xs = problem.samplers[n]->draw(plot, 2000);
            ctx.emit("samples_input_" + std::to_string(n + 1) + ".csv", detail::matrix_to_csv(xs, "x,y"));
            ctx.emit("samples_push_" + std::to_string(n + 1) + ".csv",
                     detail::matrix_to_csv(push(model.forward_nets[n], xs), "x,y"));
        }
        const auto bar_sampler = GaussianSampler(gt.barycenter);
        ctx.emit("samples_barycenter_true.csv", detail::matrix_to_csv(bar_sampler.draw(plot, 2000), "x,y"));
    }
    return ctx.finish(metrics);
}

inline ExperimentReport run_posterior(const ExperimentConfig& config) {
    if (config.inputs.empty()) throw std::invalid_argument("posterior experiment needs input CSVs");
    if (config.reference.empty()) throw std::invalid_argument("posterior experiment needs a reference CSV");
    ExperimentConfig resolved = config;
    resolved.n_inputs = static_cast<int>(config.inputs.size());
    if (!resolved.weights_configured) {
        resolved.weights_mode = WeightsMode::uniform;
        resolved.weights_configured = true;
    }
    detail::RunContext ctx(resolved);
    for (const auto& p : config.inputs) ctx.hash_input(p);
    ctx.hash_input(config.reference);

    std::vector<Matrix> subset_rows;
    long pooled_count = 0;
    for (const auto& p : config.inputs) {
        subset_rows.push_back(load_empirical(p).rows);
        pooled_count += subset_rows.back().rows();
    }
    Matrix pooled_rows(static_cast<int>(pooled_count), subset_rows[0].cols());
    {
        int at = 0;
        for (const auto& rows : subset_rows)
            for (int i = 0; i < rows.rows(); ++i, ++at)
                for (int j = 0; j < rows.cols(); ++j) pooled_rows.at(at, j) = rows.at(i, j);
    }
    const Similarity sim = Similarity::fit(pooled_rows);

    BarycenterProblem problem;
    for (const auto& rows : subset_rows)
        problem.samplers.push_back(std::make_shared<EmpiricalSampler>(sim.to_standard(rows)));
    problem.weights = resolved.resolve_weights();

    const auto reference = estimate_moments(load_empirical(config.reference));
    const double var_bar = variance_of(reference);

    Rng master(config.seed);
    TrainConfig tc = config.train;
    tc.seed = master.next_u64();
    const std::uint64_t eval_seed = master.next_u64();
    auto model = train(problem, tc);

    Rng eval(eval_seed);
    MetricReport metrics;
    metrics.weights = problem.weights;
    metrics.samples = config.eval_samples;
    const int k = static_cast<int>(config.eval_samples);
    for (int n = 0; n < problem.count(); ++n) {
        const Matrix pushed = sim.to_original(push_barycenter_samples(model, problem, n + 1, k, eval));
        metrics.input_bw2_pct.push_back(bw2_uvp(moments_of_rows(pushed), reference, var_bar));
        metrics.cycle_pct.push_back(cycle_metric(model, problem, n + 1, k, eval));
    }
    const Matrix pooled = sim.to_original(sample_barycenter_mixture(model, problem, k, eval));
    metrics.bw2_uvp_pct = bw2_uvp(moments_of_rows(pooled), reference, var_bar);
    metrics.congruence_pct = congruence_metric(model, problem, var_bar / (sim.scale * sim.scale), k, eval);

    ctx.emit("training_log.json", ctx.training_log(model).dump(1) + "\n");
    ctx.emit_checkpoints(model, {{"standardization", sim.to_json()}});
    return ctx.finish(metrics);
}

inline ExperimentReport run_palette(const ExperimentConfig& config) {
    if (config.inputs.size() < 2) throw std::invalid_argument("palette experiment needs at least 2 PPM images");
    ExperimentConfig resolved = config;
    resolved.n_inputs = static_cast<int>(config.inputs.size());
    resolved.weights_mode = WeightsMode::uniform;  // palettes are averaged evenly
    resolved.weights_configured = true;
    detail::RunContext ctx(resolved);
    for (const auto& p : config.inputs) ctx.hash_input(p);

    std::vector<PpmImage> images;
    BarycenterProblem problem;
    for (const auto& p : config.inputs) {
        images.push_back(load_ppm(p));
        problem.samplers.push_back(std::make_shared<EmpiricalSampler>(images.back().pixels));
    }
    const int n_img = static_cast<int>(images.size());
    problem.weights.assign(n_img, 1.0 / n_img);

    Rng master(config.seed);
    TrainConfig tc = config.train;
    tc.seed = master.next_u64();
    const std::uint64_t eval_seed = master.next_u64();
    auto model = train(problem, tc);

    // pushforward image per input, clamped then quantized
    for (int n = 0; n < n_img; ++n) {
        Matrix mapped = push(model.forward_nets[n], images[n].pixels);
        for (std::size_t i = 0; i < mapped.size(); ++i) mapped.data()[i] = std::clamp(mapped.data()[i], 0.0, 1.0);
        const std::string name = "pushforward_" + std::to_string(n + 1) + ".ppm";
        write_ppm((ctx.out / name).string(), images[n].width, images[n].height, mapped);
        ctx.outputs.push_back(name);
    }

    Rng eval(eval_seed);
    MetricReport metrics;
    metrics.weights = problem.weights;
    metrics.samples = config.eval_samples;
    const int k = static_cast<int>(config.eval_samples);
    const Matrix pooled = sample_barycenter_mixture(model, problem, k, eval);
    const auto pooled_moments = moments_of_rows(pooled);
    const double var_bar = variance_of(pooled_moments);
    for (int n = 0; n < n_img; ++n) {
        const Matrix pushed = push_barycenter_samples(model, problem, n + 1, k, eval);
        metrics.input_bw2_pct.push_back(bw2_uvp(moments_of_rows(pushed), pooled_moments, var_bar));
        metrics.cycle_pct.push_back(cycle_metric(model, problem, n + 1, k, eval));
    }
    metrics.bw2_uvp_pct = 0.0;  // pooled vs itself, kept for schema stability
    metrics.congruence_pct = congruence_metric(model, problem, var_bar, k, eval);

    ctx.emit("training_log.json", ctx.training_log(model).dump(1) + "\n");
    ctx.emit_checkpoints(model);
    return ctx.finish(metrics);
}

inline ExperimentReport run_mixture2d(const ExperimentConfig& config) {
    ExperimentConfig resolved = config;
    resolved.weights_mode = WeightsMode::uniform;
    resolved.weights_configured = true;
    if (resolved.mixtures.empty()) {
        // default demo: two bimodal mixtures on orthogonal axes
        auto mk = [](double x, double y) {
            MixtureComponentSpec c;
            c.mean = {x, y};
            c.cov = scale(Matrix::identity(2), 0.5);
            c.weight = 0.5;
            return c;
        };
        resolved.mixtures = {{mk(-3.0, 0.0), mk(3.0, 0.0)}, {mk(0.0, -3.0), mk(0.0, 3.0)}};
    }
    resolved.n_inputs = static_cast<int>(resolved.mixtures.size());
    resolved.dim = 2;
    detail::RunContext ctx(resolved);

    BarycenterProblem problem;
    for (const auto& mix : resolved.mixtures) {
        std::vector<SamplerPtr> parts;
        std::vector<double> part_weights;
        double total = 0.0;
        for (const auto& p : mix) total += p.weight;
        for (const auto& p : mix) {
            parts.push_back(std::make_shared<GaussianSampler>(GaussianMoments{p.mean, p.cov}));
            part_weights.push_back(p.weight / total);
        }
        problem.samplers.push_back(std::make_shared<MixtureSampler>(parts, part_weights));
    }
    problem.weights.assign(resolved.n_inputs, 1.0 / resolved.n_inputs);

    Rng master(config.seed);
    TrainConfig tc = config.train;
    tc.seed = master.next_u64();
    const std::uint64_t eval_seed = master.next_u64();
    auto model = train(problem, tc);

    Rng eval(eval_seed);
    MetricReport metrics;
    metrics.weights = problem.weights;
    metrics.samples = config.eval_samples;
    const int k = static_cast<int>(config.eval_samples);
    Matrix pooled = sample_barycenter_mixture(model, problem, k, eval);
    const double var_bar = variance_of(moments_of_rows(pooled));
    for (int n = 0; n < problem.count(); ++n)
        metrics.cycle_pct.push_back(cycle_metric(model, problem, n + 1, k, eval));
    metrics.congruence_pct = congruence_metric(model, problem, var_bar, k, eval);

    Rng plot(eval_seed + 1);
    for (int n = 0; n < problem.count(); ++n) {
        const Matrix xs = problem.samplers[n]->draw(plot, 2000);
        ctx.emit("samples_input_" + std::to_string(n + 1) + ".csv", detail::matrix_to_csv(xs, "x,y"));
        ctx.emit("samples_push_" + std::to_string(n + 1) + ".csv",
                 detail::matrix_to_csv(push(model.forward_nets[n], xs), "x,y"));
    }
    ctx.emit("samples_barycenter_mixture.csv",
             detail::matrix_to_csv(sample_barycenter_mixture(model, problem, 2000, plot), "x,y"));

    ctx.emit("training_log.json", ctx.training_log(model).dump(1) + "\n");
    ctx.emit_checkpoints(model);
    return ctx.finish(metrics);
}

inline ExperimentReport run_experiment(const ExperimentConfig& config) {
    switch (config.experiment) {
        case ExperimentKind::location_scatter: return run_location_scatter(config);
        case ExperimentKind::posterior: return run_posterior(config);
        case ExperimentKind::palette: return run_palette(config);
        case ExperimentKind::mixture2d: return run_mixture2d(config);
    }
    throw std::logic_error("run_experiment: bad kind");
}

}  // namespace w2b
