#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "soundcollage/matrix.hpp"

namespace soundcollage {

// ---- binary MLP: input -> tanh hidden -> sigmoid ----

struct MlpModel {
    size_t input_dim = 0;
    size_t hidden_dim = 0;
    std::vector<double> w1;  // hidden x input, row-major
    std::vector<double> b1;  // hidden
    std::vector<double> w2;  // hidden
    double b2 = 0.0;
    std::vector<double> epoch_loss;  // mean training loss per epoch
};

struct MlpTrainParams {
    double lr = 0.01;
    size_t batch = 16;
    size_t epochs = 30;
};

// Raised when a training epoch produces a non-finite mean loss.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(size_t epoch_, const std::string& msg)
        : std::runtime_error(msg), epoch(epoch_) {}
    size_t epoch;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Weights uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
MlpModel mlp_init(size_t input_dim, size_t hidden_dim, uint64_t seed);

double mlp_prob(const MlpModel& m, const double* x);
// prob >= 0.5 maps to label 1, so an exactly even output is class 1
int mlp_predict(const MlpModel& m, const double* x);

// Single-sample gradient of the binary cross-entropy, exposed so tests can
// check it against finite differences.
struct MlpGrad {
    std::vector<double> w1, b1, w2;
    double b2 = 0.0;
};
MlpGrad mlp_gradient(const MlpModel& m, const double* x, int y);

double mlp_loss(const MlpModel& m, const Matrix& x, const std::vector<int>& y);

// Mini-batch SGD with a fresh shuffle each epoch. Mutates the model and
// records the per-epoch mean loss in epoch_loss.
void mlp_train(MlpModel& m, const Matrix& x, const std::vector<int>& y,
               const MlpTrainParams& params, uint64_t shuffle_seed);

// Versioned little-endian float-32 parameter dump.
void mlp_save(const std::string& path, const MlpModel& m);
MlpModel mlp_load(const std::string& path);

// ---- per-coefficient z-score fitted on a row subset ----

struct Standardizer {
    std::vector<double> mean;
    std::vector<double> inv_std;  // zero-variance coefficients map to 0
};

Standardizer fit_standardizer(const Matrix& x, const std::vector<size_t>& rows);
void apply_standardizer(const Standardizer& s, Matrix& x);

// ---- random forest ----

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    size_t left = 0;
    size_t right = 0;
    std::vector<size_t> class_counts;  // populated at leaves
};

struct Tree {
    std::vector<TreeNode> nodes;  // node 0 is the root
};

struct ForestModel {
    size_t n_classes = 0;
    size_t n_features = 0;
    std::vector<Tree> trees;
};

struct ForestParams {
    size_t n_trees = 10;
    size_t max_features = 0;  // 0 -> ceil(sqrt(d)) per node
    bool bootstrap = true;
};

// Axis-aligned CART with Gini impurity, grown until nodes are pure or hold
// fewer than two samples. Zero-gain splits are taken when a node is impure
// and a valid split exists (a one-level lookahead is what lets a single
// tree carve out XOR). When the sampled feature subset admits no valid
// split, the remaining features are tried in random order.
ForestModel forest_train(const Matrix& x, const std::vector<int>& y,
                         const ForestParams& params, uint64_t seed);

// Majority vote over trees; ties go to the lower class id.
int forest_predict(const ForestModel& m, const double* x);

struct EvalMetrics {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    Matrix confusion;  // rows true, cols predicted
};

EvalMetrics forest_eval(const ForestModel& m, const Matrix& x, const std::vector<int>& y);

// Deterministic stratified split: per class, seeded shuffle then round-robin
// deal into k folds. Returns k index lists.
std::vector<std::vector<size_t>> stratified_folds(const std::vector<int>& y, size_t k,
                                                  uint64_t seed);

}  // namespace soundcollage
