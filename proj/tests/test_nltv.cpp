#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>
#include <Eigen/SVD>
#include <set>

#include "facstat/errors.hpp"
#include "facstat/nltv.hpp"
#include "support.hpp"

using namespace facstat;
using namespace facstat::nltv;

namespace {

WeightGraph random_graph(std::mt19937_64& rng, int m)
{
    std::uniform_real_distribution<double> u(0, 1);
    Matrix w = Matrix::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = i + 1; j < m; ++j) {
            w(i, j) = w(j, i) = u(rng) < 0.3 ? 0.0 : u(rng) * 5;
        }
    }
    return weight_graph_from_weights(w);
}

Matrix random_matrix(std::mt19937_64& rng, int r, int c)
{
    std::normal_distribution<double> n(0, 1);
    return Matrix::NullaryExpr(r, c, [&] { return n(rng); });
}

Matrix random_stochastic(std::mt19937_64& rng, int m, int n)
{
    std::uniform_real_distribution<double> u(0.01, 1);
    Matrix out = Matrix::NullaryExpr(m, n, [&] { return u(rng); });
    for (int i = 0; i < m; ++i) {
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

} // namespace

TEST_CASE("pairwise_distance")
{
    Matrix x(4, 2);
    x << 1, 0, 2, 0, 0, 3, 1, 0;
    const auto cos = pairwise_distance(x, 0, 1);
    CHECK(cos(0, 3) == 0.0);
    CHECK(std::abs(cos(0, 1)) < 1e-15);
    CHECK(std::abs(cos(0, 2) - 1.0) < 1e-15);
    const auto euc = pairwise_distance(x, 1, 0);
    CHECK(euc(0, 1) == 1.0);
    CHECK(std::abs(euc(1, 2) - std::sqrt(13.0)) < 1e-14);
    const auto mix = pairwise_distance(x, 2, 3);
    CHECK(std::abs(mix(0, 2) - (2 * std::sqrt(10.0) + 3)) < 1e-13);
    CHECK(mix.diagonal().isZero(0));
    CHECK((mix - mix.transpose()).cwiseAbs().maxCoeff() == 0.0);

    Matrix zero(2, 2);
    zero << 0, 0, 1, 1;
    CHECK_THROWS_AS(pairwise_distance(zero, 0, 1), DataError);
    CHECK_NOTHROW(pairwise_distance(zero, 1, 0));
}

TEST_CASE("weight_graph")
{
    Matrix d(3, 3);
    d << 0, 2, 0, 2, 0, 1, 0, 1, 0;
    const auto g = weight_graph(d);
    CHECK(g.weights(0, 1) == 0.25);
    CHECK(support::close_rel(g.weights(0, 2), 1.0 / (kDistanceFloor * kDistanceFloor), 1e-15));
    CHECK(g.weights.diagonal().isZero(0));
    CHECK(g.weights == g.weights.transpose());
    CHECK(g.sqrt_weights(0, 1) == 0.5);
}

TEST_CASE("nonlocal gradient and divergence")
{
    Matrix w(2, 2);
    w << 0, 4, 4, 0;
    const auto g = weight_graph_from_weights(w);
    const auto grad = nonlocal_gradient(g, Eigen::Vector2d(0, 1));
    CHECK(grad(0, 1) == 2.0);
    CHECK(grad(1, 0) == -2.0);

    std::mt19937_64 rng(17);
    const auto rg = random_graph(rng, 8);
    CHECK(nonlocal_gradient(rg, Vector::Constant(8, 3.5)).isZero(0));
    const Vector u = random_matrix(rng, 8, 1);
    const Matrix gu = nonlocal_gradient(rg, u);
    CHECK((gu + gu.transpose()).cwiseAbs().maxCoeff() <= 1e-15);

    CHECK(nonlocal_divergence(rg, Matrix::Zero(8, 8)).isZero(0));
    const Matrix a = random_matrix(rng, 8, 8);
    CHECK(nonlocal_divergence(rg, a + a.transpose()).cwiseAbs().maxCoeff() <= 1e-13);

    CHECK_THROWS_AS(nonlocal_gradient(rg, Vector::Zero(3)), DataError);
    CHECK_THROWS_AS(nonlocal_divergence(rg, Matrix::Zero(3, 3)), DataError);
}

TEST_CASE("adjointness on random graphs")
{
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        const int m = 2 + trial % 29;
        const auto g = random_graph(rng, m);
        const Vector u = random_matrix(rng, m, 1);
        const Matrix v = random_matrix(rng, m, m);
        const double lhs = (nonlocal_gradient(g, u).array() * v.array()).sum();
        const double rhs = u.dot(nonlocal_divergence(g, v));
        CHECK(std::abs(lhs + rhs) <= 1e-8);
    }
}

TEST_CASE("operator bound dominates the gradient norm")
{
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const auto g = random_graph(rng, 3 + trial % 10);
        const double L = gradient_operator_bound(g);
        for (int k = 0; k < 5; ++k) {
            const Vector u = random_matrix(rng, static_cast<int>(g.weights.rows()), 1);
            CHECK(nonlocal_gradient(g, u).norm() <= L * u.norm() * (1 + 1e-12));
        }
    }
}

TEST_CASE("energy")
{
    Matrix x(3, 2);
    x << 1, 2, 5, 1, -3, 4;
    const Matrix eye = Matrix::Identity(3, 3);
    // Zero only without edges; any edge between distinct labels costs TV.
    CHECK(energy(weight_graph_from_weights(Matrix::Zero(3, 3)), eye, x, x, 2.0) == 0.0);
    CHECK(energy(weight_graph(Matrix::Zero(1, 1)), Matrix::Ones(1, 1), x.topRows(1), x.topRows(1), 2.0) == 0.0);
    CHECK(energy(weight_graph(pairwise_distance(x, 1, 0)), eye, x, x, 2.0) > 0.0);

    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const auto rg = random_graph(rng, 6);
        CHECK(energy(rg, random_stochastic(rng, 6, 3), random_matrix(rng, 6, 2), random_matrix(rng, 3, 2), 0.5) >= 0);
    }

    // Two nodes, unit weight, opposite labels, coincident centroids.
    Matrix w(2, 2);
    w << 0, 1, 1, 0;
    const auto two = weight_graph_from_weights(w);
    Matrix pts(2, 1);
    pts << 0, 0;
    Matrix cs(2, 1);
    cs << 0, 0;
    const Matrix opposite = Matrix::Identity(2, 2);
    CHECK(total_variation(two, opposite.col(0)) == 2.0);
    CHECK(energy(two, opposite, pts, cs, 1.0) == 4.0);
}

TEST_CASE("TV scales with the square root of a weight factor")
{
    std::mt19937_64 rng(9);
    for (double c : {0.01, 2.0, 7.5, 1e4}) {
        const auto g = random_graph(rng, 10);
        const auto scaled = weight_graph_from_weights(c * g.weights);
        const Matrix u = random_stochastic(rng, 10, 3);
        const Matrix x = random_matrix(rng, 10, 2);
        const Matrix cs = random_matrix(rng, 3, 2);
        const double tv = energy(g, u, x, cs, 1.0) - (u.array() * fidelity_matrix(x, cs).array()).sum();
        const double tvc = energy(scaled, u, x, cs, 1.0) - (u.array() * fidelity_matrix(x, cs).array()).sum();
        CHECK(support::close_rel(tvc, std::sqrt(c) * tv, 1e-10));
        for (int l = 0; l < 3; ++l) {
            CHECK(support::close_rel(total_variation(scaled, u.col(l)), std::sqrt(c) * total_variation(g, u.col(l)),
                                     1e-12));
        }
    }
}

TEST_CASE("projections")
{
    SUBCASE("dual")
    {
        DualVariable p = {Matrix::Zero(3, 3)};
        p[0].row(0) << 0.3, 0.4, 0;  // norm 0.5
        p[0].row(1) << 0, 1.2, 1.6;  // norm 2
        const auto q = project_dual(p);
        CHECK(q[0].row(0) == p[0].row(0));
        CHECK(std::abs(q[0].row(1).norm() - 1.0) < 1e-15);
        CHECK(q[0].row(1)(1) == doctest::Approx(0.6));
        CHECK(q[0].row(2).isZero(0));

        std::mt19937_64 rng(6);
        DualVariable r;
        for (int l = 0; l < 3; ++l) {
            r.push_back(5 * random_matrix(rng, 12, 12));
        }
        for (const auto& m : project_dual(r)) {
            CHECK(m.rowwise().norm().maxCoeff() <= 1.0 + 1e-9);
        }
    }
    SUBCASE("simplex")
    {
        CHECK(project_simplex(Eigen::Vector2d(0.5, 0.5)) == Eigen::Vector2d(0.5, 0.5));
        CHECK(project_simplex(Eigen::Vector2d(2, 0)) == Eigen::Vector2d(1, 0));
        const auto t = project_simplex(Eigen::Vector3d(0.2, 0.2, 0.2));
        CHECK((t.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);

        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> u(0, 1);
        for (int trial = 0; trial < 300; ++trial) {
            const int n = 1 + trial % 6;
            const Vector v = 4 * random_matrix(rng, n, 1);
            const Vector p = project_simplex(v);
            CHECK((p.array() >= 0).all());
            CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
            // No feasible point is closer.
            for (int k = 0; k < 20; ++k) {
                Vector y = Vector::NullaryExpr(n, [&] { return -std::log(u(rng) + 1e-300); });
                y /= y.sum();
                CHECK((v - p).norm() <= (v - y).norm() + 1e-12);
            }
        }
    }
}

TEST_CASE("primal-dual inner solve")
{
    std::mt19937_64 rng(11);
    const Matrix x = random_matrix(rng, 15, 3);
    const auto g = weight_graph(pairwise_distance(x, 1, 0));

    SUBCASE("single cluster converges to all ones")
    {
        NltvParams p;
        p.n_clusters = 1;
        const auto r = primal_dual_solve(g, x, x.colwise().mean(), p);
        CHECK(r.u.isOnes(0));
    }
    SUBCASE("u stays row-stochastic every iteration")
    {
        NltvParams p = NltvParams::preset("cosine");
        p.n_clusters = 4;
        std::size_t calls = 0;
        double worst_sum = 0, worst_neg = 0;
        const auto r = primal_dual_solve(g, x, x.topRows(4), p, nullptr, nullptr,
                                         [&](std::size_t, const Matrix& u) {
                                             ++calls;
                                             worst_sum = std::max(worst_sum, (u.rowwise().sum().array() - 1).abs().maxCoeff());
                                             worst_neg = std::min(worst_neg, u.minCoeff());
                                         });
        CHECK(calls == r.iterations);
        CHECK(worst_sum <= 1e-9);
        CHECK(worst_neg >= 0.0);
        CHECK(r.u.maxCoeff() <= 1.0);
        CHECK(r.sigma * r.tau * std::pow(gradient_operator_bound(g), 2) <= 1.0);
        for (const auto& pl : r.p) {
            CHECK(pl.rowwise().norm().maxCoeff() <= 1.0 + 1e-9);
        }
    }
    SUBCASE("dominant fidelity with vanishing weights picks the nearest centroid")
    {
        const auto faint = weight_graph_from_weights(1e-12 * g.weights);
        NltvParams p;
        p.n_clusters = 3;
        p.lambda = 1e8;
        const Matrix cs = x.topRows(3);
        const auto r = primal_dual_solve(faint, x, cs, p);
        const Matrix phi = fidelity_matrix(x, cs);
        for (int i = 0; i < 15; ++i) {
            Eigen::Index best = 0;
            phi.row(i).minCoeff(&best);
            CHECK(r.u(i, best) == 1.0);
            CHECK(r.u.row(i).sum() == 1.0);
        }
    }
    SUBCASE("final energy does not exceed the uniform start")
    {
        for (double lambda : {0.01, 1.0, 100.0}) {
            NltvParams p;
            p.n_clusters = 3;
            p.lambda = lambda;
            const Matrix cs = x.bottomRows(3);
            const auto r = primal_dual_solve(g, x, cs, p);
            const Matrix uniform = Matrix::Constant(15, 3, 1.0 / 3.0);
            CHECK(energy(g, r.u, x, cs, lambda) <= energy(g, uniform, x, cs, lambda) + 1e-9);
        }
    }
    SUBCASE("relabeling permutes the output")
    {
        NltvParams p;
        p.n_clusters = 3;
        p.lambda = 5;
        const Matrix cs = x.middleRows(4, 3);
        Eigen::PermutationMatrix<Eigen::Dynamic> perm(3);
        perm.indices() << 2, 0, 1;
        const auto a = primal_dual_solve(g, x, cs, p);
        const auto b = primal_dual_solve(g, x, perm * cs, p);
        CHECK((a.u * perm.transpose() - b.u).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(a.iterations == b.iterations);
        CHECK(std::abs(energy(g, a.u, x, cs, 5) - energy(g, b.u, x, perm * cs, 5)) <= 1e-9);
    }
    SUBCASE("argument errors")
    {
        NltvParams p;
        p.n_clusters = 2;
        CHECK_THROWS_AS(primal_dual_solve(g, x, x.topRows(3), p), DataError);
        p.lambda = 0;
        CHECK_THROWS_AS(primal_dual_solve(g, x, x.topRows(2), p), DataError);
        p.lambda = 1;
        p.sigma = p.tau = 1.0;
        CHECK_THROWS_AS(primal_dual_solve(g, x, x.topRows(2), p), DataError);
    }
}

TEST_CASE("preconditioned steps keep the scaled operator a contraction")
{
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 30; ++trial) {
        const int m = 2 + trial % 9;
        WeightGraph g = random_graph(rng, m);
        if (trial % 3 == 0) {
            // Near-duplicate pair, as cosine weights produce.
            Matrix w = g.weights;
            w(0, 1) = w(1, 0) = 1e12;
            g = weight_graph_from_weights(w);
        }
        const Vector sigma = preconditioned_sigma(g, 1.0);
        const Vector tau = preconditioned_tau(g, 1.0);
        // Rows of K are edges (i, j): +sqrt w_ij at j, -sqrt w_ij at i.
        Matrix scaled = Matrix::Zero(m * m, m);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) {
                const double s = g.sqrt_weights(i, j) * std::sqrt(sigma(i));
                scaled(i * m + j, j) += s * std::sqrt(tau(j));
                scaled(i * m + j, i) -= s * std::sqrt(tau(i));
            }
        }
        const Eigen::JacobiSVD<Matrix> svd(scaled);
        CHECK(svd.singularValues()(0) <= 1.0 + 1e-12);
    }
}

TEST_CASE("preconditioning reaches the same relaxed minimum")
{
    std::mt19937_64 rng(62);
    for (int trial = 0; trial < 5; ++trial) {
        const int m = 6 + trial;
        const auto g = random_graph(rng, m);
        const Matrix x = random_matrix(rng, m, 2);
        const Matrix c = random_matrix(rng, 3, 2);
        NltvParams params;
        params.lambda = 0.5;
        params.inner_tol = 1e-13;
        params.inner_max = 400000;
        const auto fast = primal_dual_solve(g, x, c, params);
        params.precondition = false;
        const auto plain = primal_dual_solve(g, x, c, params);
        const double a = energy(g, fast.u, x, c, params.lambda);
        const double b = energy(g, plain.u, x, c, params.lambda);
        CHECK(std::abs(a - b) <= 1e-6 * std::max(1.0, std::abs(b)));
    }
}

TEST_CASE("threshold")
{
    Matrix u(3, 3);
    u << 0.1, 0.7, 0.2, 0.5, 0.5, 0, 0, 0, 1;
    CHECK(threshold(u) == std::vector<int>{1, 0, 2});
    const Matrix eye = Matrix::Identity(4, 4);
    CHECK(threshold(eye) == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("update_centroids")
{
    Matrix x(3, 2);
    x << 0, 0, 2, 2, 10, 0;
    std::vector<int> a = {0, 0, 1};
    const auto c = update_centroids(x, a, 2, 1, 0);
    CHECK(c.row(0) == Eigen::RowVector2d(1, 1));
    CHECK(c.row(1) == Eigen::RowVector2d(10, 0));

    std::vector<int> degenerate = {0, 0, 0};
    const auto r = update_centroids(x, degenerate, 3, 1, 0);
    CHECK(std::set<int>(degenerate.begin(), degenerate.end()).size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(r.row(degenerate[static_cast<std::size_t>(i)]) == x.row(i));
    }

    std::vector<int> bad = {0, 5, 1};
    CHECK_THROWS_AS(update_centroids(x, bad, 2, 1, 0), DataError);
}

TEST_CASE("seed_points")
{
    std::mt19937_64 rng(71);
    for (int trial = 0; trial < 40; ++trial) {
        const int m = 1 + trial % 12;
        const Matrix x = random_matrix(rng, m, 3);
        const int n = 1 + trial % m;
        const auto picks = seed_points(pairwise_distance(x, 1, 0), n, rng);
        CHECK(picks.size() == static_cast<std::size_t>(n));
        CHECK(std::set<int>(picks.begin(), picks.end()).size() == picks.size());
    }
    // Duplicates get zero weight until nothing else is left.
    Matrix x(5, 1);
    x << 0, 0, 0, 7, 7;
    const Matrix d = pairwise_distance(x, 1, 0);
    std::mt19937_64 g(1);
    const auto two = seed_points(d, 2, g);
    CHECK(x(two[0], 0) != x(two[1], 0));
    const auto all = seed_points(d, 5, g);
    CHECK(std::set<int>(all.begin(), all.end()).size() == 5);
}

TEST_CASE("cluster")
{
    SUBCASE("two blobs agree with the nearest-centroid oracle")
    {
        for (const char* preset : {"cosine", "mixed"}) {
            for (std::uint64_t seed = 0; seed < 5; ++seed) {
                const auto x = support::blobs(seed);
                std::vector<int> truth(40);
                for (int i = 0; i < 40; ++i) {
                    truth[static_cast<std::size_t>(i)] = i >= 20;
                }
                const auto oracle = support::oracle::nearest_centroid(x, truth, 2);
                auto p = NltvParams::preset(preset);
                p.n_clusters = 2;
                p.seed = seed;
                const auto r = cluster(x, p);
                CHECK(support::agreement2(r.assignments, oracle) >= 0.95);
            }
        }
    }
    SUBCASE("one cluster per point")
    {
        for (const char* preset : {"cosine", "mixed"}) {
            const auto x = support::blobs(3).topRows(8);
            auto p = NltvParams::preset(preset);
            p.n_clusters = 8;
            const auto r = cluster(x, p);
            std::vector<int> sorted = r.assignments;
            std::sort(sorted.begin(), sorted.end());
            CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
            for (int i = 0; i < 8; ++i) {
                CHECK(r.centroids.row(r.assignments[static_cast<std::size_t>(i)]) == x.row(i));
            }
        }
    }
    SUBCASE("single cluster")
    {
        const auto x = support::blobs(4);
        auto p = NltvParams::preset("cosine");
        p.n_clusters = 1;
        const auto r = cluster(x, p);
        CHECK(std::all_of(r.assignments.begin(), r.assignments.end(), [](int a) { return a == 0; }));
        CHECK((r.centroids.row(0) - x.colwise().mean()).cwiseAbs().maxCoeff() <= 1e-12);
    }
    SUBCASE("determinism and errors")
    {
        const auto x = support::blobs(1);
        auto p = NltvParams::preset("mixed");
        p.n_clusters = 3;
        p.seed = 42;
        const auto a = cluster(x, p);
        const auto b = cluster(x, p);
        CHECK(a.assignments == b.assignments);
        CHECK(a.initial_points == b.initial_points);
        CHECK(a.energies == b.energies);
        p.n_clusters = 41;
        CHECK_THROWS_AS(cluster(x, p), DataError);
        CHECK_THROWS_AS(NltvParams::preset("sparse"), DataError);
    }
    SUBCASE("thresholded energy ends no higher than the uniform start")
    {
        std::mt19937_64 rng(99);
        for (int trial = 0; trial < 10; ++trial) {
            const Matrix x = random_matrix(rng, 12 + trial, 3).array() + 2.0;
            auto p = NltvParams::preset(trial % 2 ? "mixed" : "cosine");
            p.n_clusters = 2 + trial % 2;
            p.seed = static_cast<std::uint64_t>(trial);
            const auto r = cluster(x, p);
            REQUIRE(!r.energies.empty());
            CHECK(r.energies.back() <= r.initial_energy + 1e-6);
        }
    }
}

TEST_CASE("presets and report")
{
    const auto c = NltvParams::preset("cosine");
    CHECK(c.alpha_euclid == 1e-10);
    CHECK(c.alpha_cosine == 1);
    CHECK(c.lambda == 1);
    const auto m = NltvParams::preset("mixed");
    CHECK(m.alpha_euclid == 1);
    CHECK(m.alpha_cosine == 1e2);
    CHECK(m.lambda == 1e4);

    using support::rec;
    const Dataset d({rec(1, 10, 100, 5, 0, 2000), rec(3, 20, 300, 7, 1, 1990), rec(4, 30, 500, 9, 1, 1980)});
    const auto r = make_report(d, {0, 1, 1}, 3);
    REQUIRE(r.rows.size() == 3);
    CHECK(r.rows[0].count == 1);
    CHECK(r.rows[1].count == 2);
    CHECK(r.rows[2].count == 0);
    CHECK(r.rows[1].rank == 3.5);
    CHECK(r.rows[1].citations == 400);
    CHECK(r.rows[1].ams == 1.0);
    CHECK(r.rows[1].phd_year == 1985);
    CHECK(r.rank_crosstab[1] == std::array<std::size_t, 4>{0, 0, 1, 1});
    CHECK_THROWS_AS(make_report(d, {0, 1}, 3), DataError);
}
