// Command-line entry points for the barycenter experiments: synthetic
// location-scatter reproduction, subset-posterior aggregation from CSV
// samples, color-palette averaging of PPM images and a qualitative 2D
// mixture demo, plus a quick numerical selftest.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <w2b/experiments.hpp>

namespace {

struct Overrides {
    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> dim;
    std::optional<int> n_inputs;
    std::optional<std::string> base;
    std::optional<std::string> weights;
    std::optional<int> iterations;
    std::optional<int> batch;
    std::optional<long> eval_samples;
    std::vector<std::string> inputs;
    std::optional<std::string> reference;
};

void add_common_options(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config_path, "JSON experiment config (or a previous run manifest)");
    cmd->add_option("--seed", o.seed, "random seed");
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--iters", o.iterations, "training iterations");
    cmd->add_option("--batch", o.batch, "batch size");
    cmd->add_option("--eval-samples", o.eval_samples, "Monte-Carlo evaluation sample count");
}

w2b::ExperimentConfig resolve(const Overrides& o, w2b::ExperimentKind kind) {
    w2b::ExperimentConfig cfg;
    if (o.config_path) cfg = w2b::load_experiment_config(*o.config_path);
    cfg.experiment = kind;
    if (o.seed) cfg.seed = *o.seed;
    if (o.out_dir) cfg.out_dir = *o.out_dir;
    if (o.dim) cfg.dim = *o.dim;
    if (o.n_inputs) cfg.n_inputs = *o.n_inputs;
    if (o.base) cfg.base = w2b::base_from_name(*o.base);
    if (o.weights) {
        cfg.weights_mode = w2b::weights_from_name(*o.weights);
        cfg.weights_configured = true;
    }
    if (o.iterations) cfg.train.iterations = *o.iterations;
    if (o.batch) cfg.train.batch = *o.batch;
    if (o.eval_samples) cfg.eval_samples = *o.eval_samples;
    if (!o.inputs.empty()) cfg.inputs = o.inputs;
    if (o.reference) cfg.reference = *o.reference;
    return cfg;
}

void print_report(const w2b::ExperimentReport& report) {
    const auto& m = report.metrics;
    if (m.weighted_l2_uvp_pct >= 0.0) std::printf("weighted L2-UVP   %.4f %%\n", m.weighted_l2_uvp_pct);
    if (m.bw2_uvp_pct >= 0.0) std::printf("BW2-UVP (pooled)  %.4f %%\n", m.bw2_uvp_pct);
    if (m.congruence_pct >= 0.0) std::printf("congruence        %.4f %%\n", m.congruence_pct);
    for (std::size_t n = 0; n < m.cycle_pct.size(); ++n)
        std::printf("cycle n=%zu         %.4f %%\n", n + 1, m.cycle_pct[n]);
    std::printf("report written to %s\n", report.out_dir.c_str());
}

int run_selftest() {
    using namespace w2b;
    int failures = 0;
    auto check = [&](const std::string& name, bool ok) {
        std::printf("[%s] %s\n", ok ? "ok" : "FAIL", name.c_str());
        if (!ok) ++failures;
    };

    // gradient correctness on random small potentials
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const int d = 1 << (seed % 3);
        DenseICNNConfig cfg;
        cfg.input_dim = d;
        cfg.hidden_sizes = {6, 5};
        cfg.skip_rank = 2;
        PotentialNetwork fwd(cfg), bwd(cfg);
        Rng rng(seed);
        fwd.init(rng);
        bwd.init(rng);
        Matrix xs(4, d);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < d; ++j) xs.at(i, j) = rng.normal();
        auto build = [&](ad::Graph& g) {
            const int x = g.input(4, d);
            g.set_input(x, xs);
            const int y = g.gradient_wrt(fwd.emit(g, x), x);
            const int corr = g.sub(g.row_dot(x, y), bwd.emit(g, y));
            const int z = g.gradient_wrt(bwd.emit(g, y), y);
            const int dz = g.sub(z, x);
            return g.scalar_mul(g.sum_all(g.add(corr, g.row_dot(dz, dz))), 0.25);
        };
        const auto rep = ad::finite_diff_check(build, {&fwd.params(), &bwd.params()}, 1e-4, 1e-4);
        check("finite differences, D=" + std::to_string(d) + " seed=" + std::to_string(seed), rep.pass);
    }

    // convexity of projected networks
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        DenseICNNConfig cfg;
        cfg.input_dim = 3;
        cfg.hidden_sizes = {16, 8};
        cfg.skip_rank = 2;
        PotentialNetwork net(cfg);
        Rng rng(100 + seed);
        net.init(rng);
        net.project_convex();
        check("convexity probe, seed=" + std::to_string(seed), convexity_probe(net, 10000, seed) >= -1e-9);
    }

    // closed-form transport oracles
    {
        const GaussianMoments p{{0.0, 0.0}, Matrix::identity(2)};
        const GaussianMoments q{{0.0, 0.0}, scale(Matrix::identity(2), 4.0)};
        check("bures isotropic", std::abs(bures_w2_sq(p, q) - 1.0) < 1e-9);
        const auto map = gaussian_ot_map(GaussianMoments{{0.0, 0.0}, Matrix::from_rows({{1.0, 0.0}, {0.0, 4.0}})}, p);
        check("gaussian map diagonal",
              std::abs(map.a.at(0, 0) - 1.0) < 1e-9 && std::abs(map.a.at(1, 1) - 0.5) < 1e-9);
        const auto bar = fixed_point_barycenter({GaussianMoments{{0.0}, Matrix::from_rows({{1.0}})},
                                                 GaussianMoments{{0.0}, Matrix::from_rows({{4.0}})}},
                                                {0.5, 0.5});
        check("fixed point 1d", std::abs(bar.cov.at(0, 0) - 2.25) < 1e-8);
        const Matrix r = sqrtm_psd(Matrix::from_rows({{4.0, 0.0}, {0.0, 9.0}}));
        check("psd square root", std::abs(r.at(0, 0) - 2.0) < 1e-10 && std::abs(r.at(1, 1) - 3.0) < 1e-10);
    }

    std::printf(failures == 0 ? "selftest passed\n" : "selftest FAILED (%d)\n", failures);
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wasserstein-2 barycenters of sampled distributions via convex potential training"};
    app.require_subcommand(1);

    Overrides o;
    auto* ls = app.add_subcommand("location-scatter", "synthetic family with closed-form ground truth");
    add_common_options(ls, o);
    ls->add_option("--dim", o.dim, "ambient dimension");
    ls->add_option("--n", o.n_inputs, "number of input distributions");
    ls->add_option("--base", o.base, "base distribution: gaussian | uniform_cube | swiss_roll");
    ls->add_option("--weights", o.weights, "weights mode: preset_4 | triangular | uniform | explicit");

    auto* post = app.add_subcommand("posterior", "aggregate subset posterior samples from CSV files");
    add_common_options(post, o);
    post->add_option("--input", o.inputs, "subset sample CSV (repeatable)");
    post->add_option("--reference", o.reference, "full-data reference CSV");

    auto* pal = app.add_subcommand("palette", "average color palettes of PPM images");
    add_common_options(pal, o);
    pal->add_option("--input", o.inputs, "input PPM image (repeatable)");

    auto* mix = app.add_subcommand("mixture2d", "qualitative 2D mixture demo, emits plot CSVs");
    add_common_options(mix, o);

    auto* self = app.add_subcommand("selftest", "run gradient, convexity and closed-form oracle checks");
    (void)self;

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 2;
    }

    try {
        if (self->parsed()) return run_selftest();
        if (ls->parsed()) {
            print_report(w2b::run_location_scatter(resolve(o, w2b::ExperimentKind::location_scatter)));
            return 0;
        }
        if (post->parsed()) {
            const auto cfg = resolve(o, w2b::ExperimentKind::posterior);
            if (cfg.inputs.empty() || cfg.reference.empty()) {
                std::cerr << "posterior requires --config or --input/--reference files\n\n" << app.help() << "\n";
                return 2;
            }
            print_report(w2b::run_posterior(cfg));
            return 0;
        }
        if (pal->parsed()) {
            const auto cfg = resolve(o, w2b::ExperimentKind::palette);
            if (cfg.inputs.size() < 2) {
                std::cerr << "palette requires --config or at least two --input images\n\n" << app.help() << "\n";
                return 2;
            }
            print_report(w2b::run_palette(cfg));
            return 0;
        }
        if (mix->parsed()) {
            print_report(w2b::run_mixture2d(resolve(o, w2b::ExperimentKind::mixture2d)));
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
