#include "facstat/nltv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "facstat/errors.hpp"
#include "facstat/rng.hpp"

namespace facstat::nltv {

namespace {

using Eigen::Index;

double cosine_distance_safe(const Vector& a, const Vector& b)
{
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) {
        return 1.0;
    }
    return std::max(0.0, 1.0 - a.dot(b) / (na * nb));
}

double combined_distance(const Vector& a, const Vector& b, double alpha_euclid, double alpha_cosine)
{
    double d = 0.0;
    if (alpha_euclid != 0.0) {
        d += alpha_euclid * (a - b).norm();
    }
    if (alpha_cosine != 0.0) {
        d += alpha_cosine * cosine_distance_safe(a, b);
    }
    return d;
}

Matrix uniform_labels(Index m, int n) { return Matrix::Constant(m, n, 1.0 / static_cast<double>(n)); }

} // namespace

Matrix pairwise_distance(const Matrix& x, double alpha_euclid, double alpha_cosine)
{
    if (x.cols() < 1) {
        throw DataError("distance needs at least one feature");
    }
    const Index m = x.rows();
    Matrix d = Matrix::Zero(m, m);
    if (alpha_euclid != 0.0) {
        for (Index i = 0; i < m; ++i) {
            for (Index j = i + 1; j < m; ++j) {
                // Direct difference keeps identical rows at exactly zero.
                const double e = (x.row(i) - x.row(j)).norm();
                d(i, j) += alpha_euclid * e;
                d(j, i) = d(i, j);
            }
        }
    }
    if (alpha_cosine != 0.0) {
        const Vector norms = x.rowwise().norm();
        for (Index i = 0; i < m; ++i) {
            if (norms(i) == 0.0) {
                throw DataError("row " + std::to_string(i) + " is zero; cosine distance is undefined");
            }
        }
        for (Index i = 0; i < m; ++i) {
            for (Index j = i + 1; j < m; ++j) {
                const double c = std::max(0.0, 1.0 - x.row(i).dot(x.row(j)) / (norms(i) * norms(j)));
                d(i, j) += alpha_cosine * c;
                d(j, i) = d(i, j);
            }
        }
    }
    return d;
}

WeightGraph weight_graph_from_weights(Matrix weights)
{
    WeightGraph g;
    weights.diagonal().setZero();
    g.sqrt_weights = weights.array().sqrt();
    g.weights = std::move(weights);
    return g;
}

WeightGraph weight_graph(const Matrix& distances, double floor)
{
    if (distances.rows() != distances.cols()) {
        throw DataError("distance matrix must be square");
    }
    Matrix w = distances.array().max(floor).pow(-2.0);
    return weight_graph_from_weights(std::move(w));
}

Matrix nonlocal_gradient(const WeightGraph& g, const Vector& u)
{
    const Index m = u.size();
    if (g.weights.rows() != m) {
        throw DataError("label vector length does not match the graph");
    }
    // diff_ij = u_j - u_i
    const Matrix diff = Vector::Ones(m) * u.transpose() - u * Vector::Ones(m).transpose();
    return g.sqrt_weights.cwiseProduct(diff);
}

Vector nonlocal_divergence(const WeightGraph& g, const Matrix& v)
{
    if (v.rows() != g.weights.rows() || v.cols() != g.weights.cols()) {
        throw DataError("dual field shape does not match the graph");
    }
    const Matrix weighted = g.sqrt_weights.cwiseProduct(v);
    return weighted.rowwise().sum() - weighted.colwise().sum().transpose();
}

double total_variation(const WeightGraph& g, const Vector& u)
{
    return nonlocal_gradient(g, u).rowwise().norm().sum();
}

Matrix fidelity_matrix(const Matrix& x, const Matrix& centroids)
{
    if (x.cols() != centroids.cols()) {
        throw DataError("centroid width does not match the data");
    }
    Matrix phi(x.rows(), centroids.rows());
    for (Index l = 0; l < centroids.rows(); ++l) {
        phi.col(l) = (x.rowwise() - centroids.row(l)).rowwise().squaredNorm();
    }
    return phi;
}

double energy(const WeightGraph& g, const Matrix& u, const Matrix& x, const Matrix& centroids, double lambda)
{
    double tv = 0.0;
    for (Index l = 0; l < u.cols(); ++l) {
        tv += total_variation(g, u.col(l));
    }
    return tv + lambda * u.cwiseProduct(fidelity_matrix(x, centroids)).sum();
}

DualVariable project_dual(DualVariable p)
{
    for (auto& pl : p) {
        const Vector norms = pl.rowwise().norm();
        for (Index i = 0; i < pl.rows(); ++i) {
            if (norms(i) > 1.0) {
                pl.row(i) /= norms(i);
            }
        }
    }
    return p;
}

Vector project_simplex(const Vector& v)
{
    const Index n = v.size();
    if (n == 0) {
        return v;
    }
    std::vector<double> sorted(v.data(), v.data() + n);
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumulative = 0.0;
    double shift = 0.0;
    for (Index k = 0; k < n; ++k) {
        cumulative += sorted[static_cast<std::size_t>(k)];
        const double t = (cumulative - 1.0) / static_cast<double>(k + 1);
        if (sorted[static_cast<std::size_t>(k)] - t > 0.0) {
            shift = t;
        }
    }
    Vector out = (v.array() - shift).max(0.0);
    // Remove rounding drift so rows sum to one.
    const double total = out.sum();
    if (total > 0.0) {
        out /= total;
    }
    return out;
}

NltvParams NltvParams::preset(const std::string& name)
{
    NltvParams p;
    if (name == "cosine") {
        p.alpha_euclid = 1e-10;
        p.alpha_cosine = 1.0;
        p.lambda = 1.0;
    } else if (name == "mixed") {
        p.alpha_euclid = 1.0;
        p.alpha_cosine = 1e2;
        p.lambda = 1e4;
    } else {
        throw DataError("unknown parameter preset '" + name + "' (expected cosine or mixed)");
    }
    return p;
}

double gradient_operator_bound(const WeightGraph& g)
{
    if (g.weights.size() == 0) {
        return 0.0;
    }
    return 2.0 * std::sqrt(g.weights.rowwise().sum().maxCoeff());
}

Vector preconditioned_tau(const WeightGraph& g, double fallback)
{
    // 1 / column sums of |K|; K touches node k through row and column k.
    Vector tau(g.weights.rows());
    for (Index k = 0; k < tau.size(); ++k) {
        const double s = 2.0 * g.sqrt_weights.row(k).sum();
        tau(k) = s > 0.0 ? 1.0 / s : fallback;
    }
    return tau;
}

Vector preconditioned_sigma(const WeightGraph& g, double fallback)
{
    // Smallest per-edge step in the row, so each row of p keeps one step and
    // the ball projection stays exact.
    Vector sigma(g.weights.rows());
    for (Index i = 0; i < sigma.size(); ++i) {
        const double s = 2.0 * g.sqrt_weights.row(i).maxCoeff();
        sigma(i) = s > 0.0 ? 1.0 / s : fallback;
    }
    return sigma;
}

InnerResult primal_dual_solve(const WeightGraph& g, const Matrix& x, const Matrix& centroids,
                              const NltvParams& params, const Matrix* u0, const DualVariable* p0,
                              const InnerObserver& observer)
{
    const Index m = x.rows();
    const int n = params.n_clusters;
    if (n < 1 || centroids.rows() != n) {
        throw DataError("centroid count must equal n_clusters");
    }
    if (g.weights.rows() != m) {
        throw DataError("weight graph size does not match the data");
    }
    if (!(params.lambda > 0.0)) {
        throw DataError("fidelity weight lambda must be positive");
    }

    InnerResult r;
    const double bound = gradient_operator_bound(g);
    const double automatic = bound > 0.0 ? 0.95 / bound : 1.0;
    r.sigma = params.sigma > 0.0 ? params.sigma : automatic;
    r.tau = params.tau > 0.0 ? params.tau : automatic;
    if (r.sigma * r.tau * bound * bound > 1.0 + 1e-12) {
        throw DataError("step sizes violate sigma * tau * L^2 <= 1");
    }
    Vector sigma = Vector::Constant(m, r.sigma);
    Vector tau = Vector::Constant(m, r.tau);
    if (params.precondition && params.sigma <= 0.0 && params.tau <= 0.0) {
        sigma = preconditioned_sigma(g, r.sigma);
        tau = preconditioned_tau(g, r.tau);
    }

    r.u = u0 ? *u0 : uniform_labels(m, n);
    r.p = p0 ? *p0 : DualVariable(static_cast<std::size_t>(n), Matrix::Zero(m, m));
    if (r.u.rows() != m || r.u.cols() != n || r.p.size() != static_cast<std::size_t>(n)) {
        throw DataError("warm start has the wrong shape");
    }
    Matrix u_bar = r.u;
    const Matrix fidelity = params.lambda * fidelity_matrix(x, centroids);
    Matrix div(m, n);

    for (std::size_t it = 0; it < params.inner_max; ++it) {
        for (int l = 0; l < n; ++l) {
            auto& pl = r.p[static_cast<std::size_t>(l)];
            pl += sigma.asDiagonal() * nonlocal_gradient(g, u_bar.col(l));
        }
        r.p = project_dual(std::move(r.p));
        for (int l = 0; l < n; ++l) {
            div.col(l) = nonlocal_divergence(g, r.p[static_cast<std::size_t>(l)]);
        }

        const Matrix prox_arg = r.u + tau.asDiagonal() * (div - fidelity);
        Matrix next(m, n);
        for (Index i = 0; i < m; ++i) {
            next.row(i) = project_simplex(prox_arg.row(i).transpose()).transpose();
        }
        if (!next.allFinite()) {
            throw ConvergenceError("primal-dual iterate became non-finite (sigma " + std::to_string(r.sigma) +
                                       ", tau " + std::to_string(r.tau) + ")",
                                   it + 1);
        }

        const double change = (next - r.u).norm();
        const double scale = r.u.norm();
        u_bar = next + params.theta * (next - r.u);
        r.u = std::move(next);
        r.iterations = it + 1;
        if (observer) {
            observer(r.iterations, r.u);
        }
        if (scale > 0.0 && change / scale < params.inner_tol) {
            r.converged = true;
            break;
        }
    }
    return r;
}

std::vector<int> threshold(const Matrix& u)
{
    std::vector<int> out(static_cast<std::size_t>(u.rows()));
    for (Index i = 0; i < u.rows(); ++i) {
        Index best = 0;
        for (Index l = 1; l < u.cols(); ++l) {
            if (u(i, l) > u(i, best)) {
                best = l;
            }
        }
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

Matrix update_centroids(const Matrix& x, std::vector<int>& assignments, int n_clusters, double alpha_euclid,
                        double alpha_cosine)
{
    if (assignments.size() != static_cast<std::size_t>(x.rows())) {
        throw DataError("assignment vector length does not match the data");
    }
    if (x.rows() < n_clusters) {
        throw DataError("fewer points than clusters");
    }
    for (int a : assignments) {
        if (a < 0 || a >= n_clusters) {
            throw DataError("assignment " + std::to_string(a) + " is outside 0.." + std::to_string(n_clusters - 1));
        }
    }

    auto means = [&]() {
        Matrix c = Matrix::Zero(n_clusters, x.cols());
        std::vector<std::size_t> counts(static_cast<std::size_t>(n_clusters), 0);
        for (std::size_t i = 0; i < assignments.size(); ++i) {
            c.row(assignments[i]) += x.row(static_cast<Index>(i));
            ++counts[static_cast<std::size_t>(assignments[i])];
        }
        for (int l = 0; l < n_clusters; ++l) {
            if (counts[static_cast<std::size_t>(l)] > 0) {
                c.row(l) /= static_cast<double>(counts[static_cast<std::size_t>(l)]);
            }
        }
        return std::make_pair(c, counts);
    };

    auto [centroids, counts] = means();
    for (int empty = 0; empty < n_clusters; ++empty) {
        if (counts[static_cast<std::size_t>(empty)] > 0) {
            continue;
        }
        Index far = -1;
        double far_dist = -1.0;
        for (Index i = 0; i < x.rows(); ++i) {
            const int own = assignments[static_cast<std::size_t>(i)];
            if (counts[static_cast<std::size_t>(own)] < 2) {
                continue;
            }
            const double dist = combined_distance(x.row(i).transpose(), centroids.row(own).transpose(),
                                                  alpha_euclid, alpha_cosine);
            if (dist > far_dist) {
                far_dist = dist;
                far = i;
            }
        }
        // m >= n_clusters guarantees a donor cluster with two or more members.
        assignments[static_cast<std::size_t>(far)] = empty;
        std::tie(centroids, counts) = means();
    }
    return centroids;
}

std::vector<int> seed_points(const Matrix& distances, int n, std::mt19937_64& rng)
{
    const Index m = distances.rows();
    std::vector<int> chosen;
    std::vector<char> taken(static_cast<std::size_t>(m), 0);
    auto take = [&](Index i) {
        chosen.push_back(static_cast<int>(i));
        taken[static_cast<std::size_t>(i)] = 1;
    };
    take(std::uniform_int_distribution<Index>(0, m - 1)(rng));
    Vector nearest = distances.row(chosen[0]).transpose().array().square();
    while (static_cast<int>(chosen.size()) < n) {
        double total = 0.0;
        for (Index i = 0; i < m; ++i) {
            total += taken[static_cast<std::size_t>(i)] ? 0.0 : nearest(i);
        }
        Index pick = -1;
        if (total > 0.0) {
            const double target = std::uniform_real_distribution<double>(0.0, total)(rng);
            double run = 0.0;
            for (Index i = 0; i < m; ++i) {
                if (taken[static_cast<std::size_t>(i)] || nearest(i) <= 0.0) {
                    continue;
                }
                pick = i;
                run += nearest(i);
                if (run > target) {
                    break;
                }
            }
        } else {
            // Only duplicates of chosen points remain.
            pick = std::find(taken.begin(), taken.end(), 0) - taken.begin();
        }
        take(pick);
        nearest = nearest.cwiseMin(distances.row(pick).transpose().array().square().matrix());
    }
    return chosen;
}

ClusterResult cluster(const Matrix& x, const NltvParams& params)
{
    const Index m = x.rows();
    const int n = params.n_clusters;
    if (n < 1) {
        throw DataError("n_clusters must be at least 1");
    }
    if (m < n) {
        throw DataError("cannot form " + std::to_string(n) + " clusters from " + std::to_string(m) + " points");
    }

    const Matrix distances = pairwise_distance(x, params.alpha_euclid, params.alpha_cosine);
    const auto graph = weight_graph(distances);

    ClusterResult result;
    auto rng = make_rng(params.seed, RngStream::ClusterInit);
    result.initial_points = seed_points(distances, n, rng);

    Matrix centroids(n, x.cols());
    for (int l = 0; l < n; ++l) {
        centroids.row(l) = x.row(result.initial_points[static_cast<std::size_t>(l)]);
    }
    result.initial_energy = energy(graph, uniform_labels(m, n), x, centroids, params.lambda);

    Matrix u = uniform_labels(m, n);
    DualVariable p(static_cast<std::size_t>(n), Matrix::Zero(m, m));
    std::vector<int> previous;
    for (std::size_t outer = 0; outer < params.outer_max; ++outer) {
        auto inner = primal_dual_solve(graph, x, centroids, params, &u, &p);
        result.inner_iterations += inner.iterations;
        u = std::move(inner.u);
        p = std::move(inner.p);

        auto assignments = threshold(u);

        // Energy of the thresholded labels with their own cluster means, taken
        // before any empty cluster is reseeded.
        Matrix hard = Matrix::Zero(m, n);
        Matrix means = Matrix::Zero(n, x.cols());
        for (Index i = 0; i < m; ++i) {
            hard(i, assignments[static_cast<std::size_t>(i)]) = 1.0;
            means.row(assignments[static_cast<std::size_t>(i)]) += x.row(i);
        }
        for (int l = 0; l < n; ++l) {
            const double count = hard.col(l).sum();
            if (count > 0) {
                means.row(l) /= count;
            }
        }
        result.energies.push_back(energy(graph, hard, x, means, params.lambda));

        centroids = update_centroids(x, assignments, n, params.alpha_euclid, params.alpha_cosine);
        result.outer_iterations = outer + 1;

        const bool stable = assignments == previous;
        previous = std::move(assignments);
        if (stable) {
            result.converged = true;
            break;
        }
    }
    result.assignments = std::move(previous);
    result.centroids = std::move(centroids);
    return result;
}

ClusterReport make_report(const Dataset& d, const std::vector<int>& assignments, int n_clusters)
{
    if (assignments.size() != d.size()) {
        throw DataError("assignment vector length does not match the dataset");
    }
    ClusterReport report;
    report.rows.resize(static_cast<std::size_t>(n_clusters));
    report.rank_crosstab.assign(static_cast<std::size_t>(n_clusters), {0, 0, 0, 0});
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto l = static_cast<std::size_t>(assignments[i]);
        if (assignments[i] < 0 || l >= report.rows.size()) {
            throw DataError("assignment out of range");
        }
        const auto& r = d[i];
        auto& row = report.rows[l];
        ++row.count;
        row.rank += r.rank;
        row.publications += static_cast<double>(r.publications);
        row.citations += static_cast<double>(r.citations);
        row.h_index += static_cast<double>(r.h_index);
        row.ams += r.ams_fellow;
        row.phd_year += r.phd_year;
        ++report.rank_crosstab[l][static_cast<std::size_t>(r.rank - 1)];
    }
    for (auto& row : report.rows) {
        if (row.count == 0) {
            continue;
        }
        const auto c = static_cast<double>(row.count);
        row.rank /= c;
        row.publications /= c;
        row.citations /= c;
        row.h_index /= c;
        row.ams /= c;
        row.phd_year /= c;
    }
    return report;
}

} // namespace facstat::nltv
