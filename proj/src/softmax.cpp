#include "facstat/softmax.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "facstat/errors.hpp"
#include "facstat/rng.hpp"

namespace facstat::softmax {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Index label_position(double target, Index classes)
{
    const auto label = static_cast<Index>(std::lround(target));
    if (label < 1 || label > classes) {
        throw DataError("label " + std::to_string(label) + " is outside 1.." + std::to_string(classes));
    }
    return label - 1;
}

// Row-wise class probabilities, rows x classes.
MatrixXd probabilities(const SoftmaxModel& model, const MatrixXd& x)
{
    MatrixXd logits = x * model.weights.transpose();
    logits.rowwise() += model.biases.transpose();
    for (Index i = 0; i < logits.rows(); ++i) {
        logits.row(i) = softmax(logits.row(i).transpose()).transpose();
    }
    return logits;
}

void check_width(const SoftmaxModel& model, Index cols)
{
    if (cols != model.feature_count()) {
        throw DataError("input has " + std::to_string(cols) + " features but the model expects " +
                        std::to_string(model.feature_count()));
    }
}

} // namespace

Eigen::VectorXd one_hot(int label, int classes)
{
    if (classes < 1 || label < 1 || label > classes) {
        throw DataError("one-hot label " + std::to_string(label) + " is outside 1.." + std::to_string(classes));
    }
    VectorXd v = VectorXd::Zero(classes);
    v(label - 1) = 1.0;
    return v;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits)
{
    const VectorXd e = (logits.array() - logits.maxCoeff()).exp();
    return e / e.sum();
}

double cross_entropy(const Eigen::VectorXd& p, const Eigen::VectorXd& q)
{
    if (p.size() != q.size()) {
        throw DataError("cross-entropy needs distributions of equal length");
    }
    double total = 0.0;
    for (Index i = 0; i < p.size(); ++i) {
        if (p(i) != 0.0) {
            total -= p(i) * std::log(std::max(q(i), kProbabilityFloor));
        }
    }
    return total;
}

double loss(const SoftmaxModel& model, const DesignMatrix& m, double reg_strength)
{
    check_width(model, m.cols());
    const MatrixXd p = probabilities(model, m.features);
    double total = 0.0;
    for (Index i = 0; i < m.rows(); ++i) {
        const Index pos = label_position(m.target(i), model.class_count());
        total -= std::log(std::max(p(i, pos), kProbabilityFloor));
    }
    return total + 0.5 * reg_strength * model.weights.squaredNorm();
}

Gradient gradient(const SoftmaxModel& model, const DesignMatrix& m, double reg_strength)
{
    check_width(model, m.cols());
    MatrixXd delta = probabilities(model, m.features);
    for (Index i = 0; i < m.rows(); ++i) {
        delta(i, label_position(m.target(i), model.class_count())) -= 1.0;
    }
    Gradient g;
    g.weights = delta.transpose() * m.features + reg_strength * model.weights;
    g.biases = delta.colwise().sum().transpose();
    return g;
}

std::pair<SoftmaxModel, LossCurve> train(const DesignMatrix& m, const TrainConfig& cfg)
{
    if (cfg.epochs < 1) {
        throw DataError("training needs at least one epoch");
    }
    if (!(cfg.learning_rate > 0.0) || cfg.reg_strength < 0.0) {
        throw DataError("learning rate must be positive and regularization nonnegative");
    }
    if (m.rows() == 0) {
        throw DataError("training set is empty");
    }
    int classes = cfg.class_count;
    if (classes == 0) {
        classes = static_cast<int>(std::lround(m.target.maxCoeff()));
    }
    if (classes < 2) {
        throw DataError("softmax classifier needs at least two classes");
    }

    SoftmaxModel model;
    model.columns = m.columns;
    auto rng = make_rng(cfg.seed, RngStream::SoftmaxInit);
    std::normal_distribution<double> init(0.0, 0.01);
    model.weights.resize(classes, m.cols());
    for (Index r = 0; r < model.weights.rows(); ++r) {
        for (Index c = 0; c < model.weights.cols(); ++c) {
            model.weights(r, c) = init(rng);
        }
    }
    model.biases = VectorXd::Zero(classes);

    LossCurve curve;
    curve.reserve(cfg.epochs);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto g = gradient(model, m, cfg.reg_strength);
        model.weights -= cfg.learning_rate * g.weights;
        model.biases -= cfg.learning_rate * g.biases;
        const double value = loss(model, m, cfg.reg_strength);
        if (!std::isfinite(value) || !model.weights.allFinite()) {
            throw ConvergenceError("softmax training diverged (learning rate " + std::to_string(cfg.learning_rate) +
                                       "); try a smaller learning rate",
                                   epoch + 1);
        }
        curve.push_back(value);
    }
    return {std::move(model), std::move(curve)};
}

int predict(const SoftmaxModel& model, const Eigen::VectorXd& x)
{
    check_width(model, x.size());
    const VectorXd logits = model.weights * x + model.biases;
    Index best = 0;
    for (Index c = 1; c < logits.size(); ++c) {
        if (logits(c) > logits(best)) {
            best = c;
        }
    }
    return static_cast<int>(best) + 1;
}

std::vector<int> predict(const SoftmaxModel& model, const DesignMatrix& m)
{
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(m.rows()));
    for (Index i = 0; i < m.rows(); ++i) {
        out.push_back(predict(model, m.features.row(i).transpose()));
    }
    return out;
}

double grad_check(const DesignMatrix& m, const SoftmaxModel& model, double reg_strength, double h)
{
    const auto analytic = gradient(model, m, reg_strength);
    double worst = 0.0;
    auto compare = [&](double a, double n) {
        const double denom = std::max({std::abs(a), std::abs(n), 1e-3});
        worst = std::max(worst, std::abs(a - n) / denom);
    };

    SoftmaxModel probe = model;
    for (Index r = 0; r < model.weights.rows(); ++r) {
        for (Index c = 0; c < model.weights.cols(); ++c) {
            const double orig = probe.weights(r, c);
            probe.weights(r, c) = orig + h;
            const double up = loss(probe, m, reg_strength);
            probe.weights(r, c) = orig - h;
            const double down = loss(probe, m, reg_strength);
            probe.weights(r, c) = orig;
            compare(analytic.weights(r, c), (up - down) / (2.0 * h));
        }
    }
    for (Index r = 0; r < model.biases.size(); ++r) {
        const double orig = probe.biases(r);
        probe.biases(r) = orig + h;
        const double up = loss(probe, m, reg_strength);
        probe.biases(r) = orig - h;
        const double down = loss(probe, m, reg_strength);
        probe.biases(r) = orig;
        compare(analytic.biases(r), (up - down) / (2.0 * h));
    }
    return worst;
}

} // namespace facstat::softmax
