#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "facstat/dataset.hpp"

namespace facstat::softmax {

// Probabilities are clipped to this floor inside the loss.
inline constexpr double kProbabilityFloor = 1e-12;

struct SoftmaxModel {
    Eigen::MatrixXd weights; // classes x features
    Eigen::VectorXd biases;  // one per class
    std::vector<Field> columns;
    std::optional<FeatureStats> feature_stats;

    [[nodiscard]] Eigen::Index class_count() const { return weights.rows(); }
    [[nodiscard]] Eigen::Index feature_count() const { return weights.cols(); }
};

struct TrainConfig {
    std::size_t epochs = 200;
    double learning_rate = 0.01;
    double reg_strength = 1e-3;
    std::uint64_t seed = 0;
    int class_count = 0; // 0: largest label in the training targets
};

// Total (summed cross-entropy + regularization) loss after each epoch's update.
using LossCurve = std::vector<double>;

// Labels are 1..C.
Eigen::VectorXd one_hot(int label, int classes);
// Max-shifted, so any finite logits are safe.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
double cross_entropy(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

struct Gradient {
    Eigen::MatrixXd weights;
    Eigen::VectorXd biases;
};

// Sum over rows of -log q(label) plus (reg / 2) |W|^2. Targets are labels 1..C.
double loss(const SoftmaxModel& model, const DesignMatrix& m, double reg_strength);
Gradient gradient(const SoftmaxModel& model, const DesignMatrix& m, double reg_strength);

// Full-batch gradient descent from seeded N(0, 0.01^2) weights and zero biases.
// Throws ConvergenceError if the loss becomes non-finite.
std::pair<SoftmaxModel, LossCurve> train(const DesignMatrix& m, const TrainConfig& cfg);

// Argmax class (1-based); ties go to the lowest index.
int predict(const SoftmaxModel& model, const Eigen::VectorXd& x);
std::vector<int> predict(const SoftmaxModel& model, const DesignMatrix& m);

// Max relative difference between the analytic gradient and central finite
// differences with step `h`, over every weight and bias. The denominator is
// max(|analytic|, |numeric|, 1e-3).
double grad_check(const DesignMatrix& m, const SoftmaxModel& model, double reg_strength, double h = 1e-5);

} // namespace facstat::softmax
