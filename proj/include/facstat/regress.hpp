#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "facstat/dataset.hpp"

namespace facstat::regress {

enum class Method { LnR, LgR, PoR, RR, LR, ENR, ByR };

inline constexpr std::array<Method, 7> kAllMethods = {
    Method::LnR, Method::LgR, Method::PoR, Method::RR, Method::LR, Method::ENR, Method::ByR,
};

std::string_view method_tag(Method m);  // "LnR"
std::string_view method_name(Method m); // "Linear Regression"
Method parse_method(std::string_view tag);

using Hyperparameters = std::map<std::string, double>;

// Fixed defaults, recorded in every sweep report:
//   LnR  jitter=1e-10
//   LgR  C=1 (objective mean CE + |W|^2 / (2 C m)), tol=1e-6, max_iter=10000
//   PoR  degree=3, rank_tol=1e-10
//   RR   cv_folds=5, jitter=1e-10; penalty picked from {1e-3,...,1e2} unless alpha is given
//   LR   alpha=1, tol=1e-8, max_iter=10000
//   ENR  alpha=1, l1_ratio=0.5, tol=1e-8, max_iter=10000
//   ByR  max_iter=300, tol=1e-3, alpha_1=alpha_2=lambda_1=lambda_2=1e-6
Hyperparameters default_hyperparameters(Method m);

inline const std::vector<double> kRidgeGrid = {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2};

struct FitModel {
    Method method = Method::LnR;
    Eigen::Index input_width = 0;

    // Linear-in-features methods. For PoR these act on the expanded monomials.
    Eigen::VectorXd coefficients;
    double intercept = 0.0;

    // LgR: one row of weights and one intercept per class, classes ascending.
    Eigen::MatrixXd class_weights;
    Eigen::VectorXd class_intercepts;
    std::vector<int> classes;

    Hyperparameters hyperparameters; // as applied, including any chosen penalty
    std::size_t iterations = 0;
    std::optional<FeatureStats> feature_stats;
};

// Fits on `m` (normally standardized with training stats). Keys in `overrides`
// replace the defaults. Throws DataError for singular PoR designs and
// ConvergenceError when an iterative solver exhausts its budget.
FitModel fit(Method method, const DesignMatrix& m, const Hyperparameters& overrides = {});

// Regression value per row; for LgR the expected category under the class
// probabilities.
Eigen::VectorXd predict_real(const FitModel& model, const DesignMatrix& m);
// LgR only: rows are samples, columns follow model.classes.
Eigen::MatrixXd predict_proba(const FitModel& model, const DesignMatrix& m);

// LgR objective mean CE + |W|^2 / (2 C m) at the model's parameters, and its
// gradient as a classes x (k + 1) matrix whose last column is the intercepts.
double logistic_objective(const FitModel& model, const DesignMatrix& m);
Eigen::MatrixXd logistic_gradient(const FitModel& model, const DesignMatrix& m);

// All monomials of total degree 1..degree, ordered by degree then lexicographically.
Eigen::MatrixXd polynomial_features(const Eigen::MatrixXd& x, int degree);

// Ridge coefficients for a fixed penalty on centered data; exposed for path checks.
Eigen::VectorXd ridge_coefficients(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha);

// Nearest category with ties rounded up, clamped to [front, back].
// Categories must be consecutive ascending integers.
std::vector<int> classify(std::span<const double> py, std::span<const int> categories);
int classify(double py, std::span<const int> categories);

double add_metric(std::span<const int> predicted, std::span<const int> truth);
double ar_metric(std::span<const int> predicted, std::span<const int> truth);

// 1 when the fitted value reaches 1, else 0.
int ams_threshold(double f_value);

std::vector<int> categories_for(Field target);

struct CellResult {
    std::optional<double> ar;
    std::optional<double> add;
    std::string failure; // set when the cell has no scores
    Hyperparameters hyperparameters;
};

struct SweepOptions {
    double train_fraction = 0.7;
    std::vector<Method> methods = {kAllMethods.begin(), kAllMethods.end()};
    std::vector<int> combos = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14};
    std::map<Method, Hyperparameters> overrides;
};

using CellKey = std::pair<int, Method>; // (combo index, method)

struct SweepResult {
    Field target = Field::Rank;
    std::uint64_t seed = 0;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    std::vector<Method> methods;
    std::vector<int> combos;
    std::map<CellKey, CellResult> grid;
    std::vector<CellKey> best_by_ar;  // every defined cell attaining the maximum AR
    std::vector<CellKey> best_by_add; // every defined cell attaining the minimum ADD
    std::optional<double> best_ar;
    std::optional<double> best_add;
};

// For every (method, combo): one seeded 70/30 split, standardize on train, fit,
// predict, classify, score on test. Fit failures are recorded per cell.
SweepResult sweep(const Dataset& d, Field target, std::uint64_t seed, const SweepOptions& options = {});

} // namespace facstat::regress
