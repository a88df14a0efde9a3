#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "rcombat/cohort.hpp"
#include "rcombat/combat.hpp"

namespace rcombat {

struct NetworkConfig {
    int input_dim = 430;
    std::vector<int> hidden = {256, 128, 64};
    double dropout_rate = 0.5;
    int batch_size = 64;
    double hc_penalty_weight = 2.0;  // extra loss on misclassified HC
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    int max_epochs = 300;
    int early_stop_patience = 20;
    std::uint64_t seed = 0;
};

enum class ForwardMode { Train, Eval };

/// Flat parameter set: per hidden layer {W, b, bn_scale, bn_shift},
/// then the output {W, b}. Uniform layout so Adam moments and
/// finite-difference sweeps can walk every tensor the same way.
struct ParamSet {
    std::vector<Eigen::MatrixXd> tensors;

    static ParamSet zeros_like(const ParamSet& other);
    void axpy(double a, const ParamSet& other);  // this += a * other
    double max_abs() const;
};

/// Everything needed to run and keep training the detector.
struct NetworkState {
    NetworkConfig config;
    ParamSet params;
    std::vector<Eigen::VectorXd> running_mean;  // per hidden layer
    std::vector<Eigen::VectorXd> running_var;
    ParamSet adam_m;
    ParamSet adam_v;
    long step = 0;
    std::uint64_t taxonomy_fingerprint = 0;

    std::size_t n_hidden() const { return config.hidden.size(); }
    // Tensor indices inside ParamSet.
    std::size_t w_index(std::size_t layer) const { return layer * 4 + 0; }
    std::size_t b_index(std::size_t layer) const { return layer * 4 + 1; }
    std::size_t g_index(std::size_t layer) const { return layer * 4 + 2; }
    std::size_t s_index(std::size_t layer) const { return layer * 4 + 3; }
    std::size_t out_w_index() const { return n_hidden() * 4 + 0; }
    std::size_t out_b_index() const { return n_hidden() * 4 + 1; }
};

/// Per-layer activations kept from the forward pass for backprop.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> inputs;     // input to each affine
    std::vector<Eigen::MatrixXd> bn_xhat;    // normalized activations
    std::vector<Eigen::VectorXd> bn_mean;
    std::vector<Eigen::VectorXd> bn_var;     // biased batch variance
    std::vector<Eigen::MatrixXd> bn_out;     // scale * xhat + shift
    std::vector<Eigen::MatrixXd> dropout_mask;  // inverted-dropout scaling
    Eigen::MatrixXd last_hidden;
    Eigen::VectorXd logits;
};

NetworkState init_network(const NetworkConfig& config,
                          std::uint64_t taxonomy_fingerprint = 0);

/// Per-feature site z-scores: subtract site mean, divide by site sd;
/// zero-variance features map to 0. Requires >= 2 subjects.
Eigen::MatrixXd standardize_within_site(const CohortDataset& site_data);

/// affine -> batch norm -> ReLU -> dropout per hidden layer, then a
/// single linear output unit; returns probabilities (sigmoid of logits).
/// Train mode uses batch statistics and samples dropout from `rng`
/// (updating running statistics); Eval is deterministic.
Eigen::VectorXd forward(NetworkState& state, const Eigen::MatrixXd& batch,
                        ForwardMode mode, std::mt19937_64* rng = nullptr,
                        ForwardCache* cache = nullptr);

/// Weighted BCE-with-logits: mean over the batch of w_j * l_j with
/// w = hc_penalty_weight for HC (label 0), 1 for pathology (label 1).
double weighted_bce_loss(const Eigen::VectorXd& logits, const Eigen::VectorXd& labels,
                         const Eigen::VectorXd& weights);

/// Gradients of the weighted loss w.r.t. every tensor in ParamSet, with
/// dropout masks held fixed from the given forward cache.
ParamSet backward(const NetworkState& state, const ForwardCache& cache,
                  const Eigen::MatrixXd& batch, const Eigen::VectorXd& labels,
                  const Eigen::VectorXd& weights);

void adam_step(NetworkState& state, const ParamSet& grads);

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainingResult {
    NetworkState state;
    std::vector<EpochLog> log;
    int best_epoch = 0;
    double best_val_loss = 0.0;
};

/// Site-wise standardized features + binary labels ready for training.
struct LabeledMatrix {
    Eigen::MatrixXd features;  // n x V
    Eigen::VectorXd labels;    // 0 = HC, 1 = pathology
};

/// Standardize each site independently and stack (label 1 = pathology).
LabeledMatrix prepare_training_data(const CohortDataset& dataset);

/// Mini-batch Adam training with early stopping on validation loss.
/// Deterministic under config.seed; the returned state carries the best
/// validation-epoch parameters.
TrainingResult train(const CohortDataset& train_data, const CohortDataset& val_data,
                     const NetworkConfig& config);

struct OutlierPrediction {
    FilterMask mask;  // PerSubject, include = predicted HC
    Eigen::VectorXd probabilities;
};

/// Standardize the site internally, run Eval-mode forward, exclude
/// subjects whose outlier probability exceeds the threshold.
OutlierPrediction predict_outliers(NetworkState& state, const CohortDataset& site_data,
                                   double threshold = 0.5);

void save_network(const NetworkState& state, const std::filesystem::path& path);
NetworkState load_network(const std::filesystem::path& path);

/// Content hash of the parameter tensors (training reproducibility checks).
std::uint64_t weight_hash(const NetworkState& state);

}  // namespace rcombat
