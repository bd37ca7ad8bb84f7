#include "facstat/regress.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "facstat/errors.hpp"

namespace facstat::regress {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double hyper(const Hyperparameters& h, const std::string& key)
{
    auto it = h.find(key);
    if (it == h.end()) {
        throw DataError("missing hyperparameter '" + key + "'");
    }
    return it->second;
}

Hyperparameters merged(Method m, const Hyperparameters& overrides)
{
    auto h = default_hyperparameters(m);
    for (const auto& [k, v] : overrides) {
        h[k] = v;
    }
    return h;
}

struct Centered {
    MatrixXd x;
    VectorXd y;
    VectorXd x_mean;
    double y_mean = 0.0;
};

Centered center(const MatrixXd& x, const VectorXd& y)
{
    Centered c;
    c.x_mean = x.colwise().mean().transpose();
    c.y_mean = y.mean();
    c.x = x.rowwise() - c.x_mean.transpose();
    c.y = y.array() - c.y_mean;
    return c;
}

// Solves (X'X + alpha I) b = X'y on already-centered data.
VectorXd ridge_solve(const MatrixXd& xc, const VectorXd& yc, double alpha)
{
    MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += alpha;
    Eigen::LDLT<MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success) {
        throw DataError("normal equations could not be factorized");
    }
    return ldlt.solve(xc.transpose() * yc);
}

void finish_linear(FitModel& model, const Centered& c, VectorXd coef)
{
    model.intercept = c.y_mean - c.x_mean.dot(coef);
    model.coefficients = std::move(coef);
}

FitModel fit_linear(const DesignMatrix& m, Hyperparameters h)
{
    FitModel model;
    model.method = Method::LnR;
    const auto c = center(m.features, m.target);
    finish_linear(model, c, ridge_solve(c.x, c.y, hyper(h, "jitter")));
    model.hyperparameters = std::move(h);
    return model;
}

FitModel fit_polynomial(const DesignMatrix& m, Hyperparameters h)
{
    FitModel model;
    model.method = Method::PoR;
    const int degree = static_cast<int>(hyper(h, "degree"));
    const MatrixXd z = polynomial_features(m.features, degree);
    const auto c = center(z, m.target);
    Eigen::ColPivHouseholderQR<MatrixXd> qr(c.x);
    qr.setThreshold(hyper(h, "rank_tol"));
    if (qr.rank() < c.x.cols()) {
        throw DataError("polynomial design of " + std::to_string(c.x.cols()) + " monomials has rank " +
                        std::to_string(qr.rank()) + " on " + std::to_string(c.x.rows()) +
                        " rows; use fewer predictors");
    }
    finish_linear(model, c, qr.solve(c.y));
    model.hyperparameters = std::move(h);
    return model;
}

// Contiguous folds over row order.
double ridge_cv_error(const MatrixXd& x, const VectorXd& y, double alpha, int folds, double jitter)
{
    const Index m = x.rows();
    double sse = 0.0;
    for (int f = 0; f < folds; ++f) {
        const Index lo = m * f / folds;
        const Index hi = m * (f + 1) / folds;
        const Index nval = hi - lo;
        MatrixXd xt(m - nval, x.cols());
        VectorXd yt(m - nval);
        xt << x.topRows(lo), x.bottomRows(m - hi);
        yt << y.head(lo), y.tail(m - hi);
        const auto c = center(xt, yt);
        const VectorXd coef = ridge_solve(c.x, c.y, alpha + jitter);
        const double b0 = c.y_mean - c.x_mean.dot(coef);
        const VectorXd resid = (x.middleRows(lo, nval) * coef).array() + b0 - y.segment(lo, nval).array();
        sse += resid.squaredNorm();
    }
    return sse;
}

FitModel fit_ridge(const DesignMatrix& m, Hyperparameters h)
{
    FitModel model;
    model.method = Method::RR;
    const double jitter = hyper(h, "jitter");
    double alpha = 0.0;
    if (auto it = h.find("alpha"); it != h.end()) {
        alpha = it->second;
        if (alpha < 0.0) {
            throw DataError("ridge penalty must be nonnegative");
        }
    } else {
        const int folds = std::min<int>(static_cast<int>(hyper(h, "cv_folds")), static_cast<int>(m.rows()));
        if (folds < 2) {
            throw DataError("ridge cross-validation needs at least two rows");
        }
        double best = std::numeric_limits<double>::infinity();
        for (double a : kRidgeGrid) {
            const double err = ridge_cv_error(m.features, m.target, a, folds, jitter);
            if (err < best) {
                best = err;
                alpha = a;
            }
        }
        h["alpha"] = alpha;
    }
    const auto c = center(m.features, m.target);
    finish_linear(model, c, ridge_solve(c.x, c.y, alpha + jitter));
    model.hyperparameters = std::move(h);
    return model;
}

double soft_threshold(double z, double gamma)
{
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

// Cyclic coordinate descent on
//   (1/2m) |y - X b|^2 + alpha * l1 * |b|_1 + alpha * (1 - l1) / 2 * |b|^2
FitModel fit_coordinate_descent(Method method, const DesignMatrix& m, Hyperparameters h)
{
    FitModel model;
    model.method = method;
    const double alpha = hyper(h, "alpha");
    const double l1 = method == Method::LR ? 1.0 : hyper(h, "l1_ratio");
    const double tol = hyper(h, "tol");
    const auto max_iter = static_cast<std::size_t>(hyper(h, "max_iter"));
    if (alpha < 0.0 || l1 < 0.0 || l1 > 1.0) {
        throw DataError("elastic-net penalty must satisfy alpha >= 0 and 0 <= l1_ratio <= 1");
    }

    const auto c = center(m.features, m.target);
    const auto rows = static_cast<double>(c.x.rows());
    const Index k = c.x.cols();
    const VectorXd col_sq = c.x.colwise().squaredNorm().transpose() / rows;
    VectorXd coef = VectorXd::Zero(k);
    VectorXd resid = c.y;

    std::size_t iter = 0;
    for (; iter < max_iter; ++iter) {
        double max_step = 0.0;
        for (Index j = 0; j < k; ++j) {
            if (col_sq(j) == 0.0) {
                continue;
            }
            const double old = coef(j);
            const double rho = c.x.col(j).dot(resid) / rows + col_sq(j) * old;
            const double updated = soft_threshold(rho, alpha * l1) / (col_sq(j) + alpha * (1.0 - l1));
            if (updated != old) {
                resid -= c.x.col(j) * (updated - old);
                coef(j) = updated;
                max_step = std::max(max_step, std::abs(updated - old));
            }
        }
        if (max_step < tol) {
            break;
        }
    }
    if (iter == max_iter) {
        throw ConvergenceError(std::string(method_tag(method)) + " coordinate descent did not reach tolerance",
                               iter);
    }
    model.iterations = iter + 1;
    finish_linear(model, c, std::move(coef));
    model.hyperparameters = std::move(h);
    return model;
}

// Evidence maximization over the noise precision alpha and weight precision
// lambda with Gamma hyperpriors, iterated on the SVD of the centered design.
FitModel fit_bayesian_ridge(const DesignMatrix& m, Hyperparameters h)
{
    FitModel model;
    model.method = Method::ByR;
    const auto max_iter = static_cast<std::size_t>(hyper(h, "max_iter"));
    const double tol = hyper(h, "tol");
    const double a1 = hyper(h, "alpha_1");
    const double a2 = hyper(h, "alpha_2");
    const double l1 = hyper(h, "lambda_1");
    const double l2 = hyper(h, "lambda_2");

    const auto c = center(m.features, m.target);
    const auto rows = static_cast<double>(c.x.rows());
    Eigen::BDCSVD<MatrixXd> svd(c.x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VectorXd s = svd.singularValues();
    const VectorXd eig = s.array().square();
    const VectorXd uty = svd.matrixU().transpose() * c.y;

    const double var = c.y.squaredNorm() / rows;
    double alpha = 1.0 / (var + std::numeric_limits<double>::epsilon());
    double lambda = 1.0;

    auto coefficients = [&](double a, double l) -> VectorXd {
        const VectorXd scale = s.array() / (eig.array() + l / a);
        return svd.matrixV() * scale.cwiseProduct(uty);
    };

    VectorXd coef_old;
    std::size_t iter = 0;
    for (; iter < max_iter; ++iter) {
        const VectorXd coef = coefficients(alpha, lambda);
        const double rmse = (c.y - c.x * coef).squaredNorm();
        const double gamma = (alpha * eig.array() / (lambda + alpha * eig.array())).sum();
        lambda = (gamma + 2.0 * l1) / (coef.squaredNorm() + 2.0 * l2);
        alpha = (rows - gamma + 2.0 * a1) / (rmse + 2.0 * a2);
        if (iter != 0 && (coef_old - coef).lpNorm<1>() < tol) {
            ++iter;
            break;
        }
        coef_old = coef;
    }
    model.iterations = iter;
    finish_linear(model, c, coefficients(alpha, lambda));
    h["noise_precision"] = alpha;
    h["weight_precision"] = lambda;
    model.hyperparameters = std::move(h);
    return model;
}

MatrixXd softmax_rows(const MatrixXd& logits)
{
    MatrixXd p = logits;
    for (Index i = 0; i < p.rows(); ++i) {
        const double mx = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

MatrixXd class_indicator(const VectorXd& target, const std::vector<int>& classes)
{
    MatrixXd onehot = MatrixXd::Zero(target.size(), static_cast<Index>(classes.size()));
    for (Index i = 0; i < target.size(); ++i) {
        const int label = static_cast<int>(std::lround(target(i)));
        const auto it = std::lower_bound(classes.begin(), classes.end(), label);
        if (it == classes.end() || *it != label) {
            throw DataError("label " + std::to_string(label) + " is not one of the model's classes");
        }
        onehot(i, it - classes.begin()) = 1.0;
    }
    return onehot;
}

MatrixXd augment(const MatrixXd& x)
{
    MatrixXd xa(x.rows(), x.cols() + 1);
    xa << x, VectorXd::Ones(x.rows());
    return xa;
}

// theta: classes x (k + 1), last column the intercepts.
MatrixXd logistic_grad(const MatrixXd& theta, const MatrixXd& xa, const MatrixXd& onehot, double reg)
{
    const double m_inv = 1.0 / static_cast<double>(xa.rows());
    const MatrixXd p = softmax_rows(xa * theta.transpose());
    MatrixXd g = (p - onehot).transpose() * xa * m_inv;
    const Index k = xa.cols() - 1;
    g.leftCols(k) += reg * theta.leftCols(k);
    return g;
}

// Multinomial logistic regression:
//   J(W, b) = (1/m) sum_i CE(y_i, softmax(W x_i + b)) + |W|^2 / (2 C m)
// minimized by full-batch accelerated gradient descent with adaptive restart.
FitModel fit_logistic(const DesignMatrix& m, Hyperparameters h)
{
    FitModel model;
    model.method = Method::LgR;
    const double inv_c = 1.0 / hyper(h, "C");
    const double tol = hyper(h, "tol");
    const auto max_iter = static_cast<std::size_t>(hyper(h, "max_iter"));

    std::vector<int> classes;
    for (Index i = 0; i < m.target.size(); ++i) {
        classes.push_back(static_cast<int>(std::lround(m.target(i))));
    }
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    model.classes = classes;

    const Index rows = m.rows();
    const Index k = m.cols();
    const auto ncls = static_cast<Index>(classes.size());
    model.class_weights = MatrixXd::Zero(ncls, k);
    model.class_intercepts = VectorXd::Zero(ncls);
    model.hyperparameters = h;
    if (ncls < 2) {
        return model; // single observed class: probability one everywhere
    }

    const MatrixXd onehot = class_indicator(m.target, classes);
    const MatrixXd xa = augment(m.features);
    const double m_inv = 1.0 / static_cast<double>(rows);
    const double reg = inv_c * m_inv;

    const Eigen::SelfAdjointEigenSolver<MatrixXd> es(xa.transpose() * xa, Eigen::EigenvaluesOnly);
    const double lipschitz = 0.5 * es.eigenvalues().maxCoeff() * m_inv + reg;
    const double step = 1.0 / lipschitz;

    auto gradient = [&](const MatrixXd& theta) { return logistic_grad(theta, xa, onehot, reg); };

    MatrixXd theta = MatrixXd::Zero(ncls, k + 1);
    MatrixXd prev = theta;
    double t = 1.0;
    std::size_t iter = 0;
    bool converged = false;
    for (; iter < max_iter; ++iter) {
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        const MatrixXd y = theta + ((t - 1.0) / t_next) * (theta - prev);
        const MatrixXd gy = gradient(y);
        MatrixXd next = y - step * gy;
        // Restart momentum when the step points uphill.
        if ((gy.array() * (next - theta).array()).sum() > 0.0) {
            t = 1.0;
            next = theta - step * gradient(theta);
        } else {
            t = t_next;
        }
        prev = std::move(theta);
        theta = std::move(next);
        if (!theta.allFinite()) {
            throw ConvergenceError("logistic regression produced non-finite weights", iter + 1);
        }
        if (gradient(theta).norm() < tol) {
            converged = true;
            ++iter;
            break;
        }
    }
    if (!converged) {
        throw ConvergenceError("logistic regression gradient norm did not fall below tolerance", iter);
    }
    model.iterations = iter;
    model.class_weights = theta.leftCols(k);
    model.class_intercepts = theta.col(k);
    return model;
}

void check_width(const FitModel& model, const DesignMatrix& m)
{
    if (m.cols() != model.input_width) {
        throw DataError("design matrix has " + std::to_string(m.cols()) + " columns but the model expects " +
                        std::to_string(model.input_width));
    }
}

void check_categories(std::span<const int> categories)
{
    if (categories.empty()) {
        throw DataError("category set is empty");
    }
    for (std::size_t i = 1; i < categories.size(); ++i) {
        if (categories[i] != categories[i - 1] + 1) {
            throw DataError("categories must be consecutive ascending integers");
        }
    }
}

void check_lengths(std::span<const int> a, std::span<const int> b)
{
    if (a.size() != b.size()) {
        throw DataError("label vectors differ in length (" + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
    }
    if (a.empty()) {
        throw DataError("label vectors are empty");
    }
}

} // namespace

std::string_view method_tag(Method m)
{
    switch (m) {
    case Method::LnR: return "LnR";
    case Method::LgR: return "LgR";
    case Method::PoR: return "PoR";
    case Method::RR: return "RR";
    case Method::LR: return "LR";
    case Method::ENR: return "ENR";
    case Method::ByR: return "ByR";
    }
    return "?";
}

std::string_view method_name(Method m)
{
    switch (m) {
    case Method::LnR: return "Linear Regression";
    case Method::LgR: return "Logistic Regression";
    case Method::PoR: return "Polynomial Regression";
    case Method::RR: return "RidgeCV Regression";
    case Method::LR: return "Lasso Regression";
    case Method::ENR: return "ElasticNet Regression";
    case Method::ByR: return "Bayesian Ridge Regression";
    }
    return "?";
}

Method parse_method(std::string_view tag)
{
    for (Method m : kAllMethods) {
        if (tag == method_tag(m)) {
            return m;
        }
    }
    throw DataError("unknown regression method '" + std::string(tag) + "'");
}

Hyperparameters default_hyperparameters(Method m)
{
    switch (m) {
    case Method::LnR: return {{"jitter", 1e-10}};
    case Method::LgR: return {{"C", 1.0}, {"tol", 1e-6}, {"max_iter", 10000}};
    case Method::PoR: return {{"degree", 3}, {"rank_tol", 1e-10}};
    case Method::RR: return {{"cv_folds", 5}, {"jitter", 1e-10}};
    case Method::LR: return {{"alpha", 1.0}, {"tol", 1e-8}, {"max_iter", 10000}};
    case Method::ENR: return {{"alpha", 1.0}, {"l1_ratio", 0.5}, {"tol", 1e-8}, {"max_iter", 10000}};
    case Method::ByR:
        return {{"max_iter", 300}, {"tol", 1e-3}, {"alpha_1", 1e-6}, {"alpha_2", 1e-6},
                {"lambda_1", 1e-6}, {"lambda_2", 1e-6}};
    }
    return {};
}

Eigen::MatrixXd polynomial_features(const Eigen::MatrixXd& x, int degree)
{
    if (degree < 1) {
        throw DataError("polynomial degree must be at least 1");
    }
    // Non-decreasing index tuples enumerate each monomial once.
    std::vector<std::vector<Index>> terms;
    std::vector<std::vector<Index>> frontier = {{}};
    for (int d = 1; d <= degree; ++d) {
        std::vector<std::vector<Index>> next;
        for (const auto& t : frontier) {
            const Index start = t.empty() ? 0 : t.back();
            for (Index j = start; j < x.cols(); ++j) {
                auto u = t;
                u.push_back(j);
                next.push_back(std::move(u));
            }
        }
        terms.insert(terms.end(), next.begin(), next.end());
        frontier = std::move(next);
    }
    MatrixXd out(x.rows(), static_cast<Index>(terms.size()));
    for (std::size_t t = 0; t < terms.size(); ++t) {
        VectorXd col = VectorXd::Ones(x.rows());
        for (Index j : terms[t]) {
            col.array() *= x.col(j).array();
        }
        out.col(static_cast<Index>(t)) = col;
    }
    return out;
}

Eigen::VectorXd ridge_coefficients(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha)
{
    const auto c = center(x, y);
    return ridge_solve(c.x, c.y, alpha);
}

FitModel fit(Method method, const DesignMatrix& m, const Hyperparameters& overrides)
{
    if (m.rows() < 2) {
        throw DataError("fitting needs at least two rows");
    }
    if (m.target.size() != m.rows()) {
        throw DataError("target length does not match design rows");
    }
    auto h = merged(method, overrides);
    FitModel model;
    switch (method) {
    case Method::LnR: model = fit_linear(m, std::move(h)); break;
    case Method::LgR: model = fit_logistic(m, std::move(h)); break;
    case Method::PoR: model = fit_polynomial(m, std::move(h)); break;
    case Method::RR: model = fit_ridge(m, std::move(h)); break;
    case Method::LR:
    case Method::ENR: model = fit_coordinate_descent(method, m, std::move(h)); break;
    case Method::ByR: model = fit_bayesian_ridge(m, std::move(h)); break;
    }
    model.input_width = m.cols();
    return model;
}

namespace {

MatrixXd packed(const FitModel& model)
{
    MatrixXd theta(model.class_weights.rows(), model.class_weights.cols() + 1);
    theta << model.class_weights, model.class_intercepts;
    return theta;
}

double logistic_reg(const FitModel& model, const DesignMatrix& m)
{
    if (model.method != Method::LgR || model.classes.size() < 2) {
        throw DataError("logistic objective needs an LgR model with at least two classes");
    }
    check_width(model, m);
    return 1.0 / (model.hyperparameters.at("C") * static_cast<double>(m.rows()));
}

} // namespace

double logistic_objective(const FitModel& model, const DesignMatrix& m)
{
    const double reg = logistic_reg(model, m);
    const MatrixXd onehot = class_indicator(m.target, model.classes);
    const MatrixXd theta = packed(model);
    const MatrixXd p = softmax_rows(augment(m.features) * theta.transpose());
    double ce = 0.0;
    for (Index i = 0; i < p.rows(); ++i) {
        Index pos = 0;
        onehot.row(i).maxCoeff(&pos);
        ce -= std::log(p(i, pos));
    }
    return ce / static_cast<double>(m.rows()) + 0.5 * reg * model.class_weights.squaredNorm();
}

Eigen::MatrixXd logistic_gradient(const FitModel& model, const DesignMatrix& m)
{
    const double reg = logistic_reg(model, m);
    return logistic_grad(packed(model), augment(m.features), class_indicator(m.target, model.classes), reg);
}

Eigen::MatrixXd predict_proba(const FitModel& model, const DesignMatrix& m)
{
    if (model.method != Method::LgR) {
        throw DataError("class probabilities are only defined for logistic regression");
    }
    check_width(model, m);
    if (model.classes.size() < 2) {
        return MatrixXd::Ones(m.rows(), 1);
    }
    MatrixXd logits = m.features * model.class_weights.transpose();
    logits.rowwise() += model.class_intercepts.transpose();
    return softmax_rows(logits);
}

Eigen::VectorXd predict_real(const FitModel& model, const DesignMatrix& m)
{
    check_width(model, m);
    switch (model.method) {
    case Method::LgR: {
        const MatrixXd p = predict_proba(model, m);
        VectorXd values(static_cast<Index>(model.classes.size()));
        for (std::size_t c = 0; c < model.classes.size(); ++c) {
            values(static_cast<Index>(c)) = model.classes[c];
        }
        return p * values;
    }
    case Method::PoR: {
        const int degree = static_cast<int>(model.hyperparameters.at("degree"));
        return (polynomial_features(m.features, degree) * model.coefficients).array() + model.intercept;
    }
    default:
        return (m.features * model.coefficients).array() + model.intercept;
    }
}

int classify(double py, std::span<const int> categories)
{
    check_categories(categories);
    if (!std::isfinite(py)) {
        throw DataError("cannot classify a non-finite prediction");
    }
    const double lo = categories.front();
    const double hi = categories.back();
    return static_cast<int>(std::clamp(std::floor(py + 0.5), lo, hi));
}

std::vector<int> classify(std::span<const double> py, std::span<const int> categories)
{
    std::vector<int> out;
    out.reserve(py.size());
    for (double v : py) {
        out.push_back(classify(v, categories));
    }
    return out;
}

double add_metric(std::span<const int> predicted, std::span<const int> truth)
{
    check_lengths(predicted, truth);
    double total = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        total += std::abs(predicted[i] - truth[i]);
    }
    return total / static_cast<double>(predicted.size());
}

double ar_metric(std::span<const int> predicted, std::span<const int> truth)
{
    check_lengths(predicted, truth);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        hits += predicted[i] == truth[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

int ams_threshold(double f_value) { return f_value >= 1.0 ? 1 : 0; }

std::vector<int> categories_for(Field target)
{
    switch (target) {
    case Field::Rank: return {1, 2, 3, 4};
    case Field::AmsFellow: return {0, 1};
    default: throw DataError("target must be rank or ams_fellow");
    }
}

SweepResult sweep(const Dataset& d, Field target, std::uint64_t seed, const SweepOptions& options)
{
    if (d.size() < 10) {
        throw DataError("a sweep needs at least 10 records, got " + std::to_string(d.size()));
    }
    const auto categories = categories_for(target);
    const auto [train, test] = train_test_split(d, options.train_fraction, seed);

    SweepResult result;
    result.target = target;
    result.seed = seed;
    result.train_size = train.size();
    result.test_size = test.size();
    result.methods = options.methods;
    result.combos = options.combos;

    std::vector<int> truth;
    for (const auto& r : test) {
        truth.push_back(static_cast<int>(r.value(target)));
    }

    for (int combo_index : options.combos) {
        const auto combo = PredictorCombo::from_index(combo_index);
        std::optional<std::pair<DesignMatrix, DesignMatrix>> designs;
        std::string design_failure;
        try {
            auto [xtrain, stats] = standardize(select_features(train, combo, target));
            auto [xtest, unused] = standardize(select_features(test, combo, target), stats);
            designs.emplace(std::move(xtrain), std::move(xtest));
        } catch (const Error& e) {
            design_failure = e.what();
        }

        for (Method method : options.methods) {
            CellResult cell;
            auto overrides = options.overrides.count(method) ? options.overrides.at(method) : Hyperparameters{};
            cell.hyperparameters = merged(method, overrides);
            if (!designs) {
                cell.failure = design_failure;
            } else {
                try {
                    const auto model = fit(method, designs->first, overrides);
                    cell.hyperparameters = model.hyperparameters;
                    const VectorXd py = predict_real(model, designs->second);
                    const auto labels = classify(std::span<const double>(py.data(), static_cast<std::size_t>(py.size())),
                                                 categories);
                    cell.ar = ar_metric(labels, truth);
                    cell.add = add_metric(labels, truth);
                } catch (const Error& e) {
                    cell.failure = e.what();
                }
            }
            result.grid.emplace(CellKey{combo_index, method}, std::move(cell));
        }
    }

    for (const auto& [key, cell] : result.grid) {
        if (!cell.ar) {
            continue;
        }
        if (!result.best_ar || *cell.ar > *result.best_ar) {
            result.best_ar = cell.ar;
        }
        if (!result.best_add || *cell.add < *result.best_add) {
            result.best_add = cell.add;
        }
    }
    // Grid iteration order is (combo, method enum order).
    for (const auto& [key, cell] : result.grid) {
        if (cell.ar && *cell.ar == *result.best_ar) {
            result.best_by_ar.push_back(key);
        }
        if (cell.add && *cell.add == *result.best_add) {
            result.best_by_add.push_back(key);
        }
    }
    return result;
}

} // namespace facstat::regress
