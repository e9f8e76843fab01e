#include "adflsim/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "adflsim/csv.hpp"
#include "adflsim/errors.hpp"
#include "adflsim/rng.hpp"

namespace adfl {

namespace {

// Linear interpolation between the bracketing source points on the x axis;
// out-of-range samples fall back to the boundary bracket.
double interpolate(const std::vector<std::pair<double, double>>& pts, double x) {
    auto right = std::upper_bound(pts.begin(), pts.end(), x,
                                  [](double v, const auto& p) { return v < p.first; });
    if (right == pts.begin()) ++right;
    if (right == pts.end()) --right;
    auto left = right - 1;
    if (x == left->first) return left->second;
    const double width = right->first - left->first;
    if (width == 0.0) {
        if (left->second == right->second) return left->second;
        throw DegenerateCurve("duplicate abscissa at x=" + format_double(x));
    }
    return ((x - left->first) * right->second + (right->first - x) * left->second) / width;
}

}  // namespace

ResampledCurve resample_curve(const IVCurve& curve) {
    if (curve.points.size() < 2) throw DegenerateCurve("curve needs at least 2 points");
    const double v_oc = curve.v_oc();
    const double i_sc = curve.i_sc();
    if (v_oc <= 0.0 || i_sc <= 0.0) throw DegenerateCurve("curve does not span both axes");

    std::vector<std::pair<double, double>> by_voltage = curve.points;
    std::sort(by_voltage.begin(), by_voltage.end());

    // Current-axis pass works on (I, V) pairs sorted by current so the
    // bracket lookup stays monotone.
    std::vector<std::pair<double, double>> by_current;
    by_current.reserve(curve.points.size());
    for (const auto& [v, i] : curve.points) by_current.emplace_back(i, v);
    std::sort(by_current.begin(), by_current.end());

    const int half = kResamplePoints / 2;
    std::vector<std::pair<double, double>> merged;
    merged.reserve(kResamplePoints);
    for (int k = 0; k < half; ++k) {
        const double v_sample = v_oc * k / (half - 1);
        merged.emplace_back(v_sample, interpolate(by_voltage, v_sample));
    }
    for (int k = 0; k < half; ++k) {
        const double i_sample = i_sc * k / (half - 1);
        merged.emplace_back(interpolate(by_current, i_sample), i_sample);
    }

    for (auto& [v, i] : merged) {
        v = std::clamp(v, 0.0, v_oc);
        i = std::clamp(i, 0.0, i_sc);
    }
    std::sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first < b.first : a.second > b.second;
    });

    ResampledCurve rc;
    std::copy(merged.begin(), merged.end(), rc.points.begin());
    return rc;
}

Sample build_sample(const ResampledCurve& rc, double temp_c, double irradiance, FaultKind label) {
    Sample s;
    s.label = label;
    for (int r = 0; r < kResamplePoints; ++r) {
        s.at(r, 0) = rc.points[r].first;
        s.at(r, 1) = rc.points[r].second;
        s.at(r, 2) = temp_c;
        s.at(r, 3) = irradiance;
    }
    return s;
}

SplitDataset split_dataset(const std::vector<Sample>& samples, double ratio, uint64_t seed) {
    std::map<FaultKind, std::vector<size_t>> by_label;
    for (size_t k = 0; k < samples.size(); ++k) by_label[samples[k].label].push_back(k);

    SplitDataset out;
    out.split_seed = seed;
    for (auto& [label, indices] : by_label) {
        if (indices.size() < 2)
            throw InsufficientClassSize(std::string("label ") + to_string(label) +
                                        " has fewer than 2 samples");
        Rng rng(derive_seed(seed, static_cast<uint64_t>(label)));
        rng.shuffle(indices);
        const size_t n_train = static_cast<size_t>(std::floor(ratio * indices.size()));
        for (size_t k = 0; k < indices.size(); ++k) {
            if (k < n_train)
                out.train_indices.push_back(indices[k]);
            else
                out.test_indices.push_back(indices[k]);
        }
    }
    for (size_t idx : out.train_indices) out.train.push_back(samples[idx]);
    for (size_t idx : out.test_indices) out.test.push_back(samples[idx]);
    return out;
}

FeatureScaler FeatureScaler::fit(const std::vector<Sample>& samples) {
    FeatureScaler sc;
    for (int c = 0; c < kFeatureCols; ++c) {
        sc.lo[c] = 1e300;
        sc.hi[c] = -1e300;
    }
    for (const auto& s : samples)
        for (int r = 0; r < kResamplePoints; ++r)
            for (int c = 0; c < kFeatureCols; ++c) {
                sc.lo[c] = std::min(sc.lo[c], s.at(r, c));
                sc.hi[c] = std::max(sc.hi[c], s.at(r, c));
            }
    return sc;
}

FeatureScaler FeatureScaler::physical() {
    FeatureScaler sc;
    sc.lo = {0.0, 0.0, 0.0, 0.0};
    sc.hi = {150.0, 20.0, 100.0, 1200.0};
    return sc;
}

void FeatureScaler::apply(Sample& s) const {
    for (int r = 0; r < kResamplePoints; ++r)
        for (int c = 0; c < kFeatureCols; ++c) {
            const double span = hi[c] - lo[c];
            s.at(r, c) = span > 0.0 ? (s.at(r, c) - lo[c]) / span : 0.0;
        }
}

void FeatureScaler::apply(std::vector<Sample>& samples) const {
    for (auto& s : samples) apply(s);
}

void write_samples_csv(const std::string& path, const std::vector<Sample>& samples) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "label";
    for (int k = 0; k < kFeatureCount; ++k) out << ",f" << k;
    out << "\n";
    for (const auto& s : samples) {
        out << to_string(s.label);
        for (double f : s.features) out << ',' << format_double(f);
        out << "\n";
    }
}

std::vector<Sample> read_samples_csv(const std::string& path) {
    const CsvFile csv = read_csv(path);
    if (csv.header.size() != static_cast<size_t>(kFeatureCount) + 1)
        throw std::runtime_error("malformed sample csv header in " + path);
    std::vector<Sample> samples;
    samples.reserve(csv.rows.size());
    for (const auto& row : csv.rows) {
        if (row.size() != csv.header.size())
            throw std::runtime_error("malformed sample row in " + path);
        Sample s;
        s.label = fault_kind_from_string(row[0]);
        for (int k = 0; k < kFeatureCount; ++k) s.features[k] = parse_double(row[k + 1]);
        samples.push_back(s);
    }
    return samples;
}

void write_split_csv(const std::string& path, const SplitDataset& split) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "sample_index,split\n";
    for (size_t idx : split.train_indices) out << idx << ",train\n";
    for (size_t idx : split.test_indices) out << idx << ",test\n";
}

}  // namespace adfl
