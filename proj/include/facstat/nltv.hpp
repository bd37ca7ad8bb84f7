#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "facstat/dataset.hpp"

namespace facstat::nltv {

// Nonlocal total-variation clustering.
//
// Labels live in a row-stochastic matrix u (points x clusters). For fixed
// centroids c_l the solver minimizes
//
//   E(u) = sum_l sum_i ( sum_j w_ij (u_jl - u_il)^2 )^(1/2)
//        + lambda * sum_i sum_l u_il |x_i - c_l|^2
//
// over the simplex constraint with a first-order primal-dual iteration on the
// saddle form  min_u max_{|p_l[i,.]| <= 1} <grad_w u, p> + fidelity(u).
// Since the fidelity is linear in u, the primal proximal step reduces to
//
//   u <- proj_simplex(u + tau * div_w p - tau * lambda * Phi),  Phi_il = |x_i - c_l|^2
//
// row by row. The outer loop thresholds u to hard assignments and moves each
// centroid to the mean of its points until assignments stop changing.

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// alpha_euclid * |x - y| + alpha_cosine * (1 - x.y / (|x| |y|)), entrywise.
// Throws DataError for a zero row when alpha_cosine > 0.
Matrix pairwise_distance(const Matrix& x, double alpha_euclid, double alpha_cosine);

inline constexpr double kDistanceFloor = 1e-8;

struct WeightGraph {
    Matrix weights;      // symmetric, zero diagonal
    Matrix sqrt_weights; // cached entrywise square root
};

// w_ij = max(d_ij, floor)^-2 off the diagonal, 0 on it.
WeightGraph weight_graph(const Matrix& distances, double floor = kDistanceFloor);
WeightGraph weight_graph_from_weights(Matrix weights);

// (grad u)_ij = sqrt(w_ij) (u_j - u_i)
Matrix nonlocal_gradient(const WeightGraph& g, const Vector& u);
// (div v)_i = sum_j sqrt(w_ij) v_ij - sqrt(w_ji) v_ji
Vector nonlocal_divergence(const WeightGraph& g, const Matrix& v);

// Sum over nodes of the L2 norm of the node's gradient row.
double total_variation(const WeightGraph& g, const Vector& u);
// Squared Euclidean distance of every point to every centroid (points x clusters).
Matrix fidelity_matrix(const Matrix& x, const Matrix& centroids);
double energy(const WeightGraph& g, const Matrix& u, const Matrix& x, const Matrix& centroids, double lambda);

// One m x m matrix per cluster label.
using DualVariable = std::vector<Matrix>;

// Scales each row p_l[i, .] to L2 norm at most 1.
DualVariable project_dual(DualVariable p);
// Euclidean projection onto {v >= 0, sum v = 1}.
Vector project_simplex(const Vector& v);

struct NltvParams {
    int n_clusters = 3;
    double alpha_euclid = 1e-10;
    double alpha_cosine = 1.0;
    double lambda = 1.0;
    double sigma = 0.0; // 0: automatic (see precondition)
    double tau = 0.0;   // 0: automatic (see precondition)
    // With sigma and tau both 0: per-node steps, or 0.95 / L for both when false.
    bool precondition = true;
    double theta = 1.0;
    double inner_tol = 1e-6;
    std::size_t inner_max = 5000;
    std::size_t outer_max = 100;
    std::uint64_t seed = 0;

    // "cosine": (1e-10, 1, lambda 1); "mixed": (1, 1e2, lambda 1e4).
    static NltvParams preset(const std::string& name);
};

// Bound on |grad_w| as an operator: 2 * sqrt(max_i sum_j w_ij).
double gradient_operator_bound(const WeightGraph& g);

// Diagonal steps: tau_k = 1 / (2 sum_j sqrt w_kj), sigma_i = 1 / (2 max_j sqrt w_ij).
// Together they keep |Sigma^1/2 K T^1/2| <= 1.
Vector preconditioned_tau(const WeightGraph& g, double fallback);
Vector preconditioned_sigma(const WeightGraph& g, double fallback);

struct InnerResult {
    Matrix u;
    DualVariable p;
    std::size_t iterations = 0;
    bool converged = false;
    double sigma = 0.0;
    double tau = 0.0;
};

// Called after every inner iteration with (iteration, u).
using InnerObserver = std::function<void(std::size_t, const Matrix&)>;

// Starts from uniform u and zero p unless warm starts are given.
InnerResult primal_dual_solve(const WeightGraph& g, const Matrix& x, const Matrix& centroids,
                              const NltvParams& params, const Matrix* u0 = nullptr,
                              const DualVariable* p0 = nullptr, const InnerObserver& observer = {});

// Row-wise argmax, ties to the lowest cluster; 0-based.
std::vector<int> threshold(const Matrix& u);

// Mean of each cluster's rows. An empty cluster takes the point farthest (in
// the combined distance) from its own centroid among clusters with at least
// two members; `assignments` is updated to match.
Matrix update_centroids(const Matrix& x, std::vector<int>& assignments, int n_clusters,
                        double alpha_euclid, double alpha_cosine);

// n distinct row indices; after a uniform first pick, each next one is drawn
// with probability proportional to its squared distance from the nearest pick.
std::vector<int> seed_points(const Matrix& distances, int n, std::mt19937_64& rng);

struct ClusterResult {
    std::vector<int> assignments; // 0-based
    Matrix centroids;             // in the coordinates of x
    std::vector<int> initial_points;
    // Energy of each pass's thresholded u with that partition's means. The
    // returned assignments may differ from the last one by reseeded points.
    std::vector<double> energies;
    double initial_energy = 0.0;  // uniform u with the initial centroids
    std::size_t outer_iterations = 0;
    std::size_t inner_iterations = 0;
    bool converged = false;
};

// Centroids start at seed_points rows, then alternating inner solve,
// thresholding and centroid update until assignments are stable.
ClusterResult cluster(const Matrix& x, const NltvParams& params);

struct ClusterRow {
    std::size_t count = 0;
    double rank = 0.0;
    double publications = 0.0;
    double citations = 0.0;
    double h_index = 0.0;
    double ams = 0.0;
    double phd_year = 0.0;
};

struct ClusterReport {
    std::vector<ClusterRow> rows;
    // rows: clusters, columns: rank 1..4
    std::vector<std::array<std::size_t, 4>> rank_crosstab;
};

// Per-cluster means in raw record units.
ClusterReport make_report(const Dataset& d, const std::vector<int>& assignments, int n_clusters);

} // namespace facstat::nltv
