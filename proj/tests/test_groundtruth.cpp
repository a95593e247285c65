#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <w2b/distributions.hpp>
#include <w2b/groundtruth.hpp>

using namespace w2b;

namespace {

Matrix random_symmetric(int n, Rng& rng) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            const double v = rng.normal();
            m.at(i, j) = v;
            m.at(j, i) = v;
        }
    return m;
}

Matrix random_spd(int n, Rng& rng) {
    Matrix g(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) g.at(i, j) = rng.normal();
    Matrix m = matmul_bt(g, g);
    for (int i = 0; i < n; ++i) m.at(i, i) += 0.05;
    return scale(add(m, transpose(m)), 0.5);
}

GaussianMoments centered(Matrix cov) { return GaussianMoments{std::vector<double>(cov.rows(), 0.0), std::move(cov)}; }

}  // namespace

TEST_CASE("sym_eig: diagonal and hand cases") {
    const auto e1 = sym_eig(Matrix::from_rows({{4.0, 0.0}, {0.0, 1.0}}));
    CHECK(e1.values[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(e1.values[1] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(std::abs(e1.vectors.at(0, 0)) == doctest::Approx(0.0).scale(1).epsilon(1e-10));
    CHECK(std::abs(e1.vectors.at(1, 0)) == doctest::Approx(1.0).epsilon(1e-10));

    const auto e2 = sym_eig(Matrix::from_rows({{2.0, 1.0}, {1.0, 2.0}}));
    CHECK(e2.values[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(e2.values[1] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("sym_eig: reconstruction of a random 8x8") {
    Rng rng(42);
    const Matrix m = random_symmetric(8, rng);
    const auto e = sym_eig(m);
    Matrix lam_q(8, 8);
    for (int j = 0; j < 8; ++j)
        for (int i = 0; i < 8; ++i) lam_q.at(i, j) = e.vectors.at(i, j) * e.values[j];
    const Matrix recon = matmul_bt(lam_q, e.vectors);
    CHECK(sub(recon, m).max_abs() < 1e-9);
    // orthonormality
    const Matrix qtq = matmul_ta(e.vectors, e.vectors);
    CHECK(sub(qtq, Matrix::identity(8)).max_abs() < 1e-10);
    // residual form M Q - Q Lambda
    Matrix mq = matmul(m, e.vectors);
    for (int j = 0; j < 8; ++j)
        for (int i = 0; i < 8; ++i) mq.at(i, j) -= e.vectors.at(i, j) * e.values[j];
    CHECK(mq.max_abs() < 1e-9 * (1.0 + m.max_abs()));
}

TEST_CASE("sym_eig: rejects asymmetric input") {
    CHECK_THROWS(sym_eig(Matrix::from_rows({{1.0, 0.5}, {0.0, 1.0}})));
}

TEST_CASE("sqrtm_psd: closed forms and self-consistency") {
    const Matrix r1 = sqrtm_psd(Matrix::from_rows({{4.0, 0.0}, {0.0, 9.0}}));
    CHECK(r1.at(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(r1.at(1, 1) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(std::abs(r1.at(0, 1)) < 1e-12);

    CHECK(sub(sqrtm_psd(Matrix::identity(3)), Matrix::identity(3)).max_abs() < 1e-12);

    Rng rng(1);
    for (int trial = 0; trial < 5; ++trial) {
        const Matrix m = random_spd(6, rng);
        const Matrix r = sqrtm_psd(m);
        CHECK(sub(matmul(r, r), m).max_abs() < 1e-8);
        CHECK(sub(r, transpose(r)).max_abs() < 1e-12);
    }
}

TEST_CASE("bures_w2_sq: hand cases") {
    const auto p = centered(Matrix::identity(2));
    const auto q = centered(scale(Matrix::identity(2), 4.0));
    CHECK(bures_w2_sq(p, p) == doctest::Approx(0.0).scale(1).epsilon(1e-12));
    CHECK(bures_w2_sq(p, q) == doctest::Approx(1.0).epsilon(1e-10));

    GaussianMoments a{{1.0, 0.0}, Matrix::identity(2)};
    GaussianMoments b{{0.0, 0.0}, Matrix::identity(2)};
    CHECK(bures_w2_sq(a, b) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("bures_w2_sq: symmetric and zero only at equality") {
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        const auto p = centered(random_spd(4, rng));
        const auto q = centered(random_spd(4, rng));
        const double pq = bures_w2_sq(p, q);
        const double qp = bures_w2_sq(q, p);
        CHECK(std::abs(pq - qp) < 1e-9);
        CHECK(pq > 1e-6);
    }
}

TEST_CASE("gaussian_ot_map: commuting diagonal case") {
    const auto p = centered(Matrix::from_rows({{1.0, 0.0}, {0.0, 4.0}}));
    const auto q = centered(Matrix::identity(2));
    const auto map = gaussian_ot_map(p, q);
    CHECK(map.a.at(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(map.a.at(1, 1) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(std::abs(map.a.at(0, 1)) < 1e-10);
    CHECK(std::abs(map.b[0]) < 1e-12);
}

TEST_CASE("gaussian_ot_map: identity at equal moments, pushforward oracle") {
    Rng rng(23);
    const auto p = centered(random_spd(4, rng));
    const auto self_map = gaussian_ot_map(p, p);
    CHECK(sub(self_map.a, Matrix::identity(4)).max_abs() < 1e-7);

    const auto q = centered(random_spd(4, rng));
    const auto map = gaussian_ot_map(p, q);
    const Matrix pushed = matmul(map.a, matmul(p.cov, map.a));
    CHECK(sub(pushed, q.cov).max_abs() < 1e-6);
    CHECK(sub(map.a, transpose(map.a)).max_abs() < 1e-9);
    const auto eig = sym_eig(map.a);
    CHECK(eig.values.front() > 0.0);

    // composing with the reverse map gives the identity
    const auto back = gaussian_ot_map(q, p);
    CHECK(sub(matmul(back.a, map.a), Matrix::identity(4)).max_abs() < 1e-6);
}

TEST_CASE("fixed_point_barycenter: 1d analytic case") {
    std::vector<GaussianMoments> inputs = {centered(Matrix::from_rows({{1.0}})),
                                           centered(Matrix::from_rows({{4.0}}))};
    const auto bar = fixed_point_barycenter(inputs, {0.5, 0.5}, 1e-12, 500);
    // barycenter std = average of stds, so variance (1.5)^2
    CHECK(bar.cov.at(0, 0) == doctest::Approx(2.25).epsilon(1e-8));
}

TEST_CASE("fixed_point_barycenter: identical inputs and commuting case") {
    Rng rng(5);
    const auto p = centered(random_spd(3, rng));
    const auto same = fixed_point_barycenter({p, p, p}, {0.2, 0.5, 0.3});
    CHECK(sub(same.cov, p.cov).max_abs() < 1e-8);

    std::vector<GaussianMoments> diag = {centered(Matrix::from_rows({{1.0, 0.0}, {0.0, 4.0}})),
                                         centered(Matrix::from_rows({{4.0, 0.0}, {0.0, 1.0}}))};
    const auto bar = fixed_point_barycenter(diag, {0.5, 0.5});
    CHECK(bar.cov.at(0, 0) == doctest::Approx(2.25).epsilon(1e-8));
    CHECK(bar.cov.at(1, 1) == doctest::Approx(2.25).epsilon(1e-8));
    CHECK(std::abs(bar.cov.at(0, 1)) < 1e-8);
}

TEST_CASE("fixed_point_barycenter: mean exactness and permutation invariance") {
    Rng rng(77);
    std::vector<GaussianMoments> inputs;
    std::vector<double> weights = {0.1, 0.2, 0.3, 0.4};
    for (int n = 0; n < 4; ++n) {
        GaussianMoments g = centered(random_spd(3, rng));
        for (auto& m : g.mean) m = rng.normal();
        inputs.push_back(std::move(g));
    }
    const auto bar = fixed_point_barycenter(inputs, weights);
    for (int i = 0; i < 3; ++i) {
        double expect = 0.0;
        for (int n = 0; n < 4; ++n) expect += weights[n] * inputs[n].mean[i];
        CHECK(std::abs(bar.mean[i] - expect) < 1e-12);
    }

    std::vector<GaussianMoments> perm = {inputs[2], inputs[0], inputs[3], inputs[1]};
    const auto bar2 = fixed_point_barycenter(perm, {0.3, 0.1, 0.4, 0.2});
    CHECK(sub(bar2.cov, bar.cov).max_abs() < 1e-8);

    // fixed point residual: sigma = sum_n a_n (sigma^1/2 S_n sigma^1/2)^1/2
    const Matrix root = sqrtm_psd(bar.cov);
    Matrix acc = Matrix::zeros(3, 3);
    for (int n = 0; n < 4; ++n)
        acc = add(acc, scale(sqrtm_psd(matmul(root, matmul(inputs[n].cov, root))), weights[n]));
    CHECK(sub(acc, bar.cov).max_abs() < 1e-8);
}

TEST_CASE("fixed_point_barycenter: optimality spot check") {
    Rng rng(31);
    std::vector<GaussianMoments> inputs;
    std::vector<double> weights = {0.25, 0.25, 0.5};
    for (int n = 0; n < 3; ++n) inputs.push_back(centered(random_spd(3, rng)));
    const auto bar = fixed_point_barycenter(inputs, weights);

    auto objective = [&](const GaussianMoments& c) {
        double v = 0.0;
        for (int n = 0; n < 3; ++n) v += weights[n] * bures_w2_sq(inputs[n], c);
        return v;
    };
    const double best = objective(bar);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix e = random_symmetric(3, rng);
        e = scale(e, 1e-2 / std::max(e.max_abs(), 1e-12));
        GaussianMoments perturbed = bar;
        perturbed.cov = add(perturbed.cov, e);
        const auto eig = sym_eig(perturbed.cov);
        if (eig.values.front() <= 1e-8) continue;
        CHECK(objective(perturbed) >= best - 1e-12);
    }
}

TEST_CASE("fixed_point_barycenter: weight validation") {
    const auto p = centered(Matrix::identity(2));
    CHECK_THROWS(fixed_point_barycenter({p, p}, {0.5, 0.6}));
    CHECK_THROWS(fixed_point_barycenter({p, p}, {1.1, -0.1}));
}

TEST_CASE("ls_ground_truth: single member is its own barycenter") {
    Rng rng(13);
    LsMember m{random_spd(3, rng), {0.1, -0.2, 0.3}};
    const auto gt = ls_ground_truth({m}, {1.0});
    CHECK(sub(gt.barycenter.cov, matmul(m.s, m.s)).max_abs() < 1e-7);
    CHECK(sub(gt.maps[0].a, Matrix::identity(3)).max_abs() < 1e-6);
}

TEST_CASE("ls_ground_truth: inverse maps average to the identity") {
    Rng rng(3);
    std::vector<LsMember> members;
    std::vector<double> weights = {0.1, 0.2, 0.3, 0.4};
    for (int n = 0; n < 4; ++n) members.push_back({sqrtm_psd(random_spd(3, rng)), {0.0, 0.0, 0.0}});
    const auto gt = ls_ground_truth(members, weights);

    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> y = {rng.normal(), rng.normal(), rng.normal()};
        std::vector<double> acc(3, 0.0);
        for (int n = 0; n < 4; ++n) {
            const auto x = gt.maps[n].inverted().apply(y);
            for (int i = 0; i < 3; ++i) acc[i] += weights[n] * x[i];
        }
        for (int i = 0; i < 3; ++i) CHECK(std::abs(acc[i] - y[i]) < 1e-6);
    }
}

TEST_CASE("ls_ground_truth: pushforward covariance matches barycenter") {
    const auto family = make_ls_family(3, 4, BaseKind::uniform_cube, 99);
    std::vector<LsMember> members;
    for (const auto& f : family) members.push_back(f->member());
    const std::vector<double> weights = {0.1, 0.2, 0.3, 0.4};
    const auto gt = ls_ground_truth(members, weights);

    Rng rng(7);
    const int k = 100000;
    for (int n = 0; n < 4; ++n) {
        const Matrix xs = family[n]->draw(rng, k);
        const Matrix ys = gt.maps[n].apply_rows(xs);
        const auto mom = moments_of_rows(ys);
        CHECK(sub(mom.cov, gt.barycenter.cov).max_abs() < 0.05);
    }
}
