#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numeric>

#include "adflsim/errors.hpp"
#include "adflsim/nn.hpp"
#include "adflsim/rng.hpp"

using namespace adfl;

namespace {

std::vector<Sample> tiny_fault_dataset(int per_class, uint64_t seed) {
    std::vector<Sample> samples;
    Rng rng(seed);
    for (int k = 0; k < per_class; ++k) {
        const double t = 15.0 + 10.0 * rng.next_double();
        const double g = 500.0 + 200.0 * rng.next_double();
        for (const auto& fault : {FaultSpec::normal(), FaultSpec::short_circuit(),
                                  FaultSpec::degradation(), FaultSpec::partial_shading()}) {
            const IVCurve c = array_iv_curve(ArrayTopology{}, fault, t, g, 120);
            samples.push_back(sample_from_curve(c));
        }
    }
    FeatureScaler::physical().apply(samples);
    return samples;
}

}  // namespace

TEST_CASE("shape chain matches the published layer table") {
    const Architecture arch;
    const auto chain = arch.shape_chain();
    const std::vector<std::pair<int, int>> expected = {
        {37, 1}, {18, 3}, {18, 5}, {8, 5}, {8, 8}, {4, 8}, {4, 16}, {1, 16}, {10, 1}, {4, 1}};
    CHECK(chain == expected);
    CHECK(arch.param_count() == 821);
}

TEST_CASE("softmax outputs are normalized for random parameters") {
    const Architecture arch;
    Sample s{};
    Rng rng(99);
    for (auto& f : s.features) f = rng.uniform(-2.0, 2.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const ModelParams p = ModelParams::init(arch, trial);
        const auto probs = forward(p, s);
        double sum = 0.0;
        for (double v : probs) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("all-zero parameters give the uniform distribution") {
    Architecture arch;
    ModelParams p;
    p.arch = arch;
    p.values.assign(arch.param_count(), 0.0);
    Sample s{};
    for (auto& f : s.features) f = 1.0;
    const auto probs = forward(p, s);
    for (double v : probs) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("cross-entropy analytic values") {
    std::vector<double> onehot = {0.0, 1.0, 0.0, 0.0};
    CHECK(loss(onehot, FaultKind::ShortCircuit) == doctest::Approx(0.0).epsilon(1e-9));
    std::vector<double> uniform = {0.25, 0.25, 0.25, 0.25};
    CHECK(loss(uniform, FaultKind::Normal) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("batch loss is the mean of per-sample losses") {
    const auto data = tiny_fault_dataset(1, 5);
    const ModelParams p = ModelParams::init(Architecture{}, 3);
    const double la = batch_loss(p, std::span(data.data(), 1));
    const double lb = batch_loss(p, std::span(data.data() + 1, 1));
    const double lab = batch_loss(p, std::span(data.data(), 2));
    CHECK(lab == doctest::Approx(0.5 * (la + lb)).epsilon(1e-12));
}

TEST_CASE("duplicated batch has the same gradient as the single sample") {
    const auto data = tiny_fault_dataset(1, 6);
    const ModelParams p = ModelParams::init(Architecture{}, 4);
    const std::vector<Sample> twice = {data[0], data[0]};
    const auto g1 = backward(p, std::span(data.data(), 1));
    const auto g2 = backward(p, twice);
    for (size_t k = 0; k < g1.size(); ++k) CHECK(g2[k] == doctest::Approx(g1[k]).epsilon(1e-15));
}

TEST_CASE("gradient matches central finite differences") {
    const auto data = tiny_fault_dataset(1, 7);
    ModelParams p = ModelParams::init(Architecture{}, 11);
    const std::span<const Sample> batch(data.data(), 4);
    const auto grad = backward(p, batch);

    Rng rng(123);
    const double h = 1e-5;
    double worst = 0.0;
    for (int probe = 0; probe < 200; ++probe) {
        const size_t k = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(grad.size()) - 1));
        const double saved = p.values[k];
        p.values[k] = saved + h;
        const double up = batch_loss(p, batch);
        p.values[k] = saved - h;
        const double down = batch_loss(p, batch);
        p.values[k] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double rel = std::abs(grad[k] - fd) / std::max({std::abs(grad[k]), std::abs(fd), 1e-6});
        worst = std::max(worst, rel);
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("adam first step reproduces the hand-derived value") {
    Architecture arch;
    ModelParams p;
    p.arch = arch;
    p.values.assign(arch.param_count(), 0.0);
    AdamState st = AdamState::init(p.values.size());
    std::vector<double> g(p.values.size(), 0.0);
    g[0] = 1.0;
    adam_step(st, p, g);
    const double expected = -1e-3 * 1.0 / (std::sqrt(0.001) + 1e-8);
    CHECK(std::abs(p.values[0] - expected) < 1e-9);
    CHECK(std::abs(expected - (-0.031623)) < 1e-6);
    CHECK(st.t == 1);
    CHECK(st.m[0] == doctest::Approx(0.005).epsilon(1e-15));
    CHECK(st.v[0] == doctest::Approx(0.001).epsilon(1e-15));
}

TEST_CASE("zero gradient leaves parameters unchanged") {
    ModelParams p = ModelParams::init(Architecture{}, 8);
    const std::vector<double> before = p.values;
    AdamState st = AdamState::init(p.values.size());
    std::vector<double> g(p.values.size(), 0.0);
    adam_step(st, p, g);
    CHECK(p.values == before);
}

TEST_CASE("adam rejects non-finite gradients") {
    ModelParams p = ModelParams::init(Architecture{}, 8);
    AdamState st = AdamState::init(p.values.size());
    std::vector<double> g(p.values.size(), 0.0);
    g[3] = std::nan("");
    CHECK_THROWS_AS(adam_step(st, p, g), NonFiniteGradient);
}

TEST_CASE("adam updates are bit-identical across replays") {
    const auto data = tiny_fault_dataset(2, 9);
    auto run = [&]() {
        ModelParams p = ModelParams::init(Architecture{}, 21);
        AdamState st = AdamState::init(p.values.size());
        st.hyper.batch = 4;
        train_epochs(p, data, st, 2, 77);
        return p.values;
    };
    CHECK(run() == run());
}

TEST_CASE("zero epochs change nothing; training reduces the loss") {
    const auto data = tiny_fault_dataset(4, 13);
    ModelParams p = ModelParams::init(Architecture{}, 17);
    AdamState st = AdamState::init(p.values.size());
    st.hyper.batch = 16;
    const std::vector<double> before = p.values;
    train_epochs(p, data, st, 0, 5);
    CHECK(p.values == before);

    const double loss0 = batch_loss(p, data);
    train_epochs(p, data, st, 8, 5);
    CHECK(batch_loss(p, data) < loss0);
}

TEST_CASE("gradient vanishes after optimizing a one-sample problem") {
    const auto data = tiny_fault_dataset(1, 15);
    ModelParams p = ModelParams::init(Architecture{}, 19);
    AdamState st = AdamState::init(p.values.size());
    st.hyper.batch = 1;
    const std::span<const Sample> one(data.data(), 1);
    for (int step = 0; step < 4000; ++step) adam_step(st, p, backward(p, one));
    const auto g = backward(p, one);
    double norm = 0.0;
    for (double v : g) norm += v * v;
    CHECK(std::sqrt(norm) < 1e-6);
}

TEST_CASE("evaluate counts confusion rows per true label") {
    const auto data = tiny_fault_dataset(3, 23);
    const ModelParams p = ModelParams::init(Architecture{}, 29);
    const Evaluation ev = evaluate(p, data);
    for (int truth = 0; truth < 4; ++truth) {
        const int row_sum =
            std::accumulate(ev.confusion[truth].begin(), ev.confusion[truth].end(), 0);
        CHECK(row_sum == 3);  // 3 samples per class
    }
    int diag = 0, total = 0;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            total += ev.confusion[r][c];
            if (r == c) diag += ev.confusion[r][c];
        }
    CHECK(total == static_cast<int>(data.size()));
    CHECK(ev.accuracy == doctest::Approx(static_cast<double>(diag) / total).epsilon(1e-12));
}

TEST_CASE("checkpoints round-trip bitwise") {
    const ModelParams p = ModelParams::init(Architecture{}, 31);
    const std::string path = "nn_checkpoint_test.bin";
    save_checkpoint(path, p);
    const ModelParams q = load_checkpoint(path);
    std::remove(path.c_str());
    std::remove((path + ".manifest.txt").c_str());
    CHECK(q.arch.n_classes == p.arch.n_classes);
    CHECK(q.values == p.values);
}

TEST_CASE("forward rejects mismatched parameter vectors") {
    ModelParams p = ModelParams::init(Architecture{}, 1);
    p.values.pop_back();
    Sample s{};
    CHECK_THROWS_AS(forward(p, s), ShapeMismatch);
}
