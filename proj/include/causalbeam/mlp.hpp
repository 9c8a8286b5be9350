// SPDX-License-Identifier: Apache-2.0
//
// Fully connected beam classifier: ReLU hidden layers, softmax output,
// cross-entropy loss, hand-written backpropagation and Adam.

#pragma once

#include "causalbeam/scene.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace causalbeam {

inline const std::vector<std::size_t> kDefaultHidden = {64, 64, 128};

struct DenseLayer {
    Eigen::MatrixXd weight; // out x in
    Eigen::VectorXd bias;   // out
};

struct MlpModel {
    std::vector<std::size_t> sizes; // input, hidden..., output
    std::vector<DenseLayer> layers;
    // Per-feature affine input normalization, (x - shift) / scale.
    Eigen::VectorXd input_shift;
    Eigen::VectorXd input_scale;
    std::uint64_t seed = 0;
    bool trained = false;

    std::size_t input_dim() const { return sizes.front(); }
    std::size_t output_dim() const { return sizes.back(); }
    std::size_t parameter_count() const;
    void validate() const;
};

MlpModel init_model(std::size_t input_dim, std::size_t y_classes, std::uint64_t seed,
                    const std::vector<std::size_t> &hidden = kDefaultHidden);

/// Row-wise softmax, numerically stable.
Eigen::MatrixXd softmax(const Eigen::MatrixXd &logits);

/// Pre-softmax outputs for a batch (rows are samples, in raw feature units).
Eigen::MatrixXd forward_logits(const MlpModel &m, const Eigen::MatrixXd &X);
Eigen::MatrixXd forward_batch(const MlpModel &m, const Eigen::MatrixXd &X);
Eigen::VectorXd forward(const MlpModel &m, const Eigen::VectorXd &x);

/// -log(max(p[label], 1e-12))
double cross_entropy(const Eigen::VectorXd &probs, std::size_t label);
/// Mean over rows.
double cross_entropy(const Eigen::MatrixXd &probs, const std::vector<std::size_t> &labels);

struct Gradients {
    std::vector<DenseLayer> layers;
};

/// Mean cross-entropy of the batch computed from logits via log-sum-exp, and
/// its gradient with respect to every weight and bias.
double loss_and_gradient(const MlpModel &m, const Eigen::MatrixXd &X,
                         const std::vector<std::size_t> &labels, Gradients &grad);

/// Indices of the k largest probabilities, descending, lower index on ties.
std::vector<std::size_t> predict_topk(const MlpModel &m, const Eigen::VectorXd &x, std::size_t k);
std::vector<std::size_t> topk_indices(const Eigen::Ref<const Eigen::VectorXd> &scores, std::size_t k);

struct TrainConfig {
    std::size_t epochs = 100;
    double learning_rate = 1e-3;
    std::size_t batch_size = 128;
    std::uint64_t seed = 1;
    /// Keep the parameters of the epoch with the best validation top-1;
    /// false returns the final-epoch parameters.
    bool select_best_val = true;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

struct EpochStats {
    double train_loss;
    double train_top1;
    double val_loss;
    double val_top1;
};

struct TrainResult {
    MlpModel model;
    std::vector<EpochStats> history;
    std::size_t best_epoch = 0;
};

/// Gathers the given feature columns of the given rows.
Eigen::MatrixXd gather_features(const Dataset &d, const std::vector<std::size_t> &rows,
                                const std::vector<std::size_t> &features);
std::vector<std::size_t> gather_labels(const Dataset &d, const std::vector<std::size_t> &rows);

/// Mini-batch Adam on the training split using `features` as inputs. The
/// first overload initializes the model from cfg.seed; the second continues
/// from `model`, which must have input_dim == features.size(). Input
/// normalization is refit on the training rows in both cases.
TrainResult train(const Dataset &d, const std::vector<std::size_t> &features, const TrainConfig &cfg);
TrainResult train(MlpModel model, const Dataset &d, const std::vector<std::size_t> &features,
                  const TrainConfig &cfg);

/// Lower-level entry point used by train(): explicit train / validation matrices.
TrainResult train_arrays(MlpModel model, const Eigen::MatrixXd &X_train,
                         const std::vector<std::size_t> &y_train, const Eigen::MatrixXd &X_val,
                         const std::vector<std::size_t> &y_val, const TrainConfig &cfg);

std::string format_model(const MlpModel &m);
MlpModel parse_model(const std::string &text);
void save_model(const MlpModel &m, const std::string &path);
MlpModel load_model(const std::string &path);

} // namespace causalbeam
