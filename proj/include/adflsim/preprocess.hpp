#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "adflsim/pvsim.hpp"

namespace adfl {

constexpr int kResamplePoints = 40;  // 20 voltage-axis + 20 current-axis samples
constexpr int kFeatureCols = 4;      // V, I, T, G
constexpr int kFeatureCount = kResamplePoints * kFeatureCols;

struct ResampledCurve {
    std::array<std::pair<double, double>, kResamplePoints> points;  // voltage ascending
};

struct Sample {
    std::array<double, kFeatureCount> features;  // row-major 40x4
    FaultKind label = FaultKind::Normal;

    double& at(int row, int col) { return features[row * kFeatureCols + col]; }
    double at(int row, int col) const { return features[row * kFeatureCols + col]; }
};

struct SplitDataset {
    std::vector<Sample> train;
    std::vector<Sample> test;
    uint64_t split_seed = 0;
    std::vector<size_t> train_indices;  // positions in the input list
    std::vector<size_t> test_indices;
};

// Compresses a raw curve to 40 points: 20 equidistant voltages mapped to
// currents and 20 equidistant currents mapped to voltages, both by linear
// interpolation between the nearest bracketing source points, merged and
// sorted by voltage.
ResampledCurve resample_curve(const IVCurve& curve);

Sample build_sample(const ResampledCurve& rc, double temp_c, double irradiance, FaultKind label);

inline Sample sample_from_curve(const IVCurve& curve) {
    return build_sample(resample_curve(curve), curve.temperature, curve.irradiance, curve.label);
}

// Per-label shuffled split; floor(ratio * n) of each label goes to train.
SplitDataset split_dataset(const std::vector<Sample>& samples, double ratio, uint64_t seed);

// Optional per-column min-max scaling (ablation switch; raw features are the
// default input to the classifier).
struct FeatureScaler {
    std::array<double, kFeatureCols> lo{};
    std::array<double, kFeatureCols> hi{};

    static FeatureScaler fit(const std::vector<Sample>& samples);
    // Fixed a-priori ranges (volts, amps, degC, W/m^2). Keeps every agent on
    // the same scale without sharing data statistics.
    static FeatureScaler physical();
    void apply(Sample& s) const;
    void apply(std::vector<Sample>& samples) const;
};

void write_samples_csv(const std::string& path, const std::vector<Sample>& samples);
std::vector<Sample> read_samples_csv(const std::string& path);
void write_split_csv(const std::string& path, const SplitDataset& split);

}  // namespace adfl
