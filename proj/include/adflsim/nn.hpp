#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adflsim/preprocess.hpp"

namespace adfl {

// Fixed plain-CNN layer stack over a 40x4 input:
//   Conv2D(4x4, C_out=1, s=1, p=0) -> squeeze -> Conv1D(k=3, C=3, s=2, p=0)
//   -> Conv1D(k=3, C=5, s=1, p=1) -> MaxPool1D(k=4, s=2)
//   -> Conv1D(k=3, C=8, s=1, p=1) -> MaxPool1D(k=2, s=2)
//   -> Conv1D(k=3, C=16, s=1, p=1) -> MaxPool1D(k=4, s=1)
//   -> FC(16->10) -> FC(10->n_classes) -> softmax
// ReLU follows every conv layer and the first FC layer.
struct Architecture {
    int n_classes = 4;

    struct LayerSpan {
        std::string name;
        size_t offset;
        size_t extent;
    };

    size_t param_count() const;
    std::vector<LayerSpan> manifest() const;
    uint64_t hash() const;
    // (length, channels) after each stage, for shape assertions
    std::vector<std::pair<int, int>> shape_chain() const;

    void validate() const;
};

struct ModelParams {
    std::vector<double> values;
    Architecture arch;

    static ModelParams init(const Architecture& arch, uint64_t seed);
};

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.995;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch = 128;
    int epochs = 50;
    // The published update divides by sqrt(v_t); setting this uses the
    // standard sqrt(v_hat_t) instead.
    bool use_vhat = false;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long long t = 0;
    AdamHyper hyper;

    static AdamState init(size_t n_params, const AdamHyper& hyper = {});
};

// Softmax class probabilities; outputs sum to 1 within 1e-12.
std::vector<double> forward(const ModelParams& params, const Sample& sample);

// Cross-entropy of one prediction; probabilities floored at 1e-12.
double loss(std::span<const double> probs, FaultKind label);

double batch_loss(const ModelParams& params, std::span<const Sample> batch);

// Exact reverse-mode gradient of the batch-mean cross-entropy.
std::vector<double> backward(const ModelParams& params, std::span<const Sample> batch);

void adam_step(AdamState& state, ModelParams& params, std::span<const double> grad);

// Seeded-shuffle mini-batch epochs over the training set, in place.
void train_epochs(ModelParams& params, std::span<const Sample> train, AdamState& state,
                  int n_epochs, uint64_t shuffle_seed);

struct Evaluation {
    double accuracy = 0.0;
    std::vector<std::vector<int>> confusion;  // row = true, col = predicted
};

Evaluation evaluate(const ModelParams& params, std::span<const Sample> dataset);

int predict(const ModelParams& params, const Sample& sample);

void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace adfl
