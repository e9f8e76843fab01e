#include "adflsim/nn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

#include "adflsim/csv.hpp"
#include "adflsim/errors.hpp"
#include "adflsim/rng.hpp"

namespace adfl {

namespace {

// Stage sizes for the 40x4 input (the Table-style shape chain).
constexpr int kInCols = 4;
constexpr int kL1 = 37;             // Conv2D 4x4 -> 37x1x1, squeezed to 37
constexpr int kC2 = 3, kL2 = 18;    // Conv1D k=3 s=2 p=0
constexpr int kC3 = 5, kL3 = 18;    // Conv1D k=3 s=1 p=1
constexpr int kP1 = 8;              // MaxPool k=4 s=2
constexpr int kC4 = 8, kL4 = 8;     // Conv1D k=3 s=1 p=1
constexpr int kP2 = 4;              // MaxPool k=2 s=2
constexpr int kC5 = 16, kL5 = 4;    // Conv1D k=3 s=1 p=1
constexpr int kP3 = 1;              // MaxPool k=4 s=1
constexpr int kFc1 = 10;
constexpr int kMaxClasses = 16;

struct Offsets {
    size_t w_c2d, b_c2d;
    size_t w1, b1;
    size_t w2, b2;
    size_t w3, b3;
    size_t w4, b4;
    size_t wf1, bf1;
    size_t wf2, bf2;
    size_t total;
};

constexpr Offsets layout(int n_classes) {
    Offsets o{};
    size_t at = 0;
    o.w_c2d = at; at += 16;
    o.b_c2d = at; at += 1;
    o.w1 = at; at += kC2 * 1 * 3;
    o.b1 = at; at += kC2;
    o.w2 = at; at += kC3 * kC2 * 3;
    o.b2 = at; at += kC3;
    o.w3 = at; at += kC4 * kC3 * 3;
    o.b3 = at; at += kC4;
    o.w4 = at; at += kC5 * kC4 * 3;
    o.b4 = at; at += kC5;
    o.wf1 = at; at += kFc1 * kC5;
    o.bf1 = at; at += kFc1;
    o.wf2 = at; at += static_cast<size_t>(n_classes) * kFc1;
    o.bf2 = at; at += n_classes;
    o.total = at;
    return o;
}

struct Workspace {
    std::array<double, kL1> z1, a1;
    std::array<double, kC2 * kL2> z2, a2;
    std::array<double, kC3 * kL3> z3, a3;
    std::array<double, kC3 * kP1> p1;
    std::array<int, kC3 * kP1> i1;
    std::array<double, kC4 * kL4> z4, a4;
    std::array<double, kC4 * kP2> p2;
    std::array<int, kC4 * kP2> i2;
    std::array<double, kC5 * kL5> z5, a5;
    std::array<double, kC5> p3;
    std::array<int, kC5> i3;
    std::array<double, kFc1> f1z, f1a;
    std::array<double, kMaxClasses> logits, probs;
};

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

void forward_ws(const ModelParams& params, const Sample& s, Workspace& ws) {
    const int n = params.arch.n_classes;
    const Offsets o = layout(n);
    const double* w = params.values.data();
    const double* x = s.features.data();  // row-major 40x4

    // Conv2D 4x4 over the full width collapses to a 1-D feature line.
    for (int t = 0; t < kL1; ++t) {
        double acc = w[o.b_c2d];
        const double* k = w + o.w_c2d;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) acc += k[i * 4 + j] * x[(t + i) * kInCols + j];
        ws.z1[t] = acc;
        ws.a1[t] = relu(acc);
    }

    for (int c = 0; c < kC2; ++c) {
        const double* k = w + o.w1 + c * 3;
        const double b = w[o.b1 + c];
        for (int t = 0; t < kL2; ++t) {
            const int src = 2 * t;
            const double acc = b + k[0] * ws.a1[src] + k[1] * ws.a1[src + 1] +
                               k[2] * ws.a1[src + 2];
            ws.z2[c * kL2 + t] = acc;
            ws.a2[c * kL2 + t] = relu(acc);
        }
    }

    for (int c = 0; c < kC3; ++c) {
        const double b = w[o.b2 + c];
        for (int t = 0; t < kL3; ++t) {
            double acc = b;
            for (int ci = 0; ci < kC2; ++ci) {
                const double* k = w + o.w2 + (c * kC2 + ci) * 3;
                const double* a = ws.a2.data() + ci * kL2;
                for (int kk = 0; kk < 3; ++kk) {
                    const int src = t + kk - 1;
                    if (src >= 0 && src < kL2) acc += k[kk] * a[src];
                }
            }
            ws.z3[c * kL3 + t] = acc;
            ws.a3[c * kL3 + t] = relu(acc);
        }
    }

    for (int c = 0; c < kC3; ++c)
        for (int t = 0; t < kP1; ++t) {
            const double* a = ws.a3.data() + c * kL3;
            int best = 2 * t;
            for (int kk = 1; kk < 4; ++kk)
                if (a[2 * t + kk] > a[best]) best = 2 * t + kk;
            ws.p1[c * kP1 + t] = a[best];
            ws.i1[c * kP1 + t] = best;
        }

    for (int c = 0; c < kC4; ++c) {
        const double b = w[o.b3 + c];
        for (int t = 0; t < kL4; ++t) {
            double acc = b;
            for (int ci = 0; ci < kC3; ++ci) {
                const double* k = w + o.w3 + (c * kC3 + ci) * 3;
                const double* a = ws.p1.data() + ci * kP1;
                for (int kk = 0; kk < 3; ++kk) {
                    const int src = t + kk - 1;
                    if (src >= 0 && src < kP1) acc += k[kk] * a[src];
                }
            }
            ws.z4[c * kL4 + t] = acc;
            ws.a4[c * kL4 + t] = relu(acc);
        }
    }

    for (int c = 0; c < kC4; ++c)
        for (int t = 0; t < kP2; ++t) {
            const double* a = ws.a4.data() + c * kL4;
            int best = 2 * t;
            if (a[2 * t + 1] > a[best]) best = 2 * t + 1;
            ws.p2[c * kP2 + t] = a[best];
            ws.i2[c * kP2 + t] = best;
        }

    for (int c = 0; c < kC5; ++c) {
        const double b = w[o.b4 + c];
        for (int t = 0; t < kL5; ++t) {
            double acc = b;
            for (int ci = 0; ci < kC4; ++ci) {
                const double* k = w + o.w4 + (c * kC4 + ci) * 3;
                const double* a = ws.p2.data() + ci * kP2;
                for (int kk = 0; kk < 3; ++kk) {
                    const int src = t + kk - 1;
                    if (src >= 0 && src < kP2) acc += k[kk] * a[src];
                }
            }
            ws.z5[c * kL5 + t] = acc;
            ws.a5[c * kL5 + t] = relu(acc);
        }
    }

    for (int c = 0; c < kC5; ++c) {
        const double* a = ws.a5.data() + c * kL5;
        int best = 0;
        for (int kk = 1; kk < 4; ++kk)
            if (a[kk] > a[best]) best = kk;
        ws.p3[c] = a[best];
        ws.i3[c] = best;
    }

    for (int j = 0; j < kFc1; ++j) {
        double acc = w[o.bf1 + j];
        const double* k = w + o.wf1 + j * kC5;
        for (int c = 0; c < kC5; ++c) acc += k[c] * ws.p3[c];
        ws.f1z[j] = acc;
        ws.f1a[j] = relu(acc);
    }

    double max_logit = -1e300;
    for (int c = 0; c < n; ++c) {
        double acc = w[o.bf2 + c];
        const double* k = w + o.wf2 + c * kFc1;
        for (int j = 0; j < kFc1; ++j) acc += k[j] * ws.f1a[j];
        ws.logits[c] = acc;
        max_logit = std::max(max_logit, acc);
    }
    double denom = 0.0;
    for (int c = 0; c < n; ++c) {
        ws.probs[c] = std::exp(ws.logits[c] - max_logit);
        denom += ws.probs[c];
    }
    for (int c = 0; c < n; ++c) ws.probs[c] /= denom;
}

// Accumulates the gradient of this sample's cross-entropy into grad.
void backward_ws(const ModelParams& params, const Sample& s, const Workspace& ws,
                 std::vector<double>& grad) {
    const int n = params.arch.n_classes;
    const Offsets o = layout(n);
    const double* w = params.values.data();
    double* g = grad.data();
    const double* x = s.features.data();

    std::array<double, kMaxClasses> dlogit;
    for (int c = 0; c < n; ++c) dlogit[c] = ws.probs[c];
    dlogit[static_cast<int>(s.label)] -= 1.0;

    std::array<double, kFc1> df1a{};
    for (int c = 0; c < n; ++c) {
        g[o.bf2 + c] += dlogit[c];
        const double* k = w + o.wf2 + c * kFc1;
        double* gk = g + o.wf2 + c * kFc1;
        for (int j = 0; j < kFc1; ++j) {
            gk[j] += dlogit[c] * ws.f1a[j];
            df1a[j] += k[j] * dlogit[c];
        }
    }

    std::array<double, kC5> dp3{};
    for (int j = 0; j < kFc1; ++j) {
        const double dz = ws.f1z[j] > 0.0 ? df1a[j] : 0.0;
        if (dz == 0.0) continue;
        g[o.bf1 + j] += dz;
        const double* k = w + o.wf1 + j * kC5;
        double* gk = g + o.wf1 + j * kC5;
        for (int c = 0; c < kC5; ++c) {
            gk[c] += dz * ws.p3[c];
            dp3[c] += k[c] * dz;
        }
    }

    std::array<double, kC5 * kL5> da5{};
    for (int c = 0; c < kC5; ++c) da5[c * kL5 + ws.i3[c]] = dp3[c];

    std::array<double, kC4 * kP2> dp2{};
    for (int c = 0; c < kC5; ++c) {
        for (int t = 0; t < kL5; ++t) {
            const double dz = ws.z5[c * kL5 + t] > 0.0 ? da5[c * kL5 + t] : 0.0;
            if (dz == 0.0) continue;
            g[o.b4 + c] += dz;
            for (int ci = 0; ci < kC4; ++ci) {
                const double* k = w + o.w4 + (c * kC4 + ci) * 3;
                double* gk = g + o.w4 + (c * kC4 + ci) * 3;
                for (int kk = 0; kk < 3; ++kk) {
                    const int src = t + kk - 1;
                    if (src < 0 || src >= kP2) continue;
                    gk[kk] += dz * ws.p2[ci * kP2 + src];
                    dp2[ci * kP2 + src] += k[kk] * dz;
                }
            }
        }
    }

    std::array<double, kC4 * kL4> da4{};
    for (int c = 0; c < kC4; ++c)
        for (int t = 0; t < kP2; ++t) da4[c * kL4 + ws.i2[c * kP2 + t]] += dp2[c * kP2 + t];

    std::array<double, kC3 * kP1> dp1{};
    for (int c = 0; c < kC4; ++c) {
        for (int t = 0; t < kL4; ++t) {
            const double dz = ws.z4[c * kL4 + t] > 0.0 ? da4[c * kL4 + t] : 0.0;
            if (dz == 0.0) continue;
            g[o.b3 + c] += dz;
            for (int ci = 0; ci < kC3; ++ci) {
                const double* k = w + o.w3 + (c * kC3 + ci) * 3;
                double* gk = g + o.w3 + (c * kC3 + ci) * 3;
                for (int kk = 0; kk < 3; ++kk) {
                    const int src = t + kk - 1;
                    if (src < 0 || src >= kP1) continue;
                    gk[kk] += dz * ws.p1[ci * kP1 + src];
                    dp1[ci * kP1 + src] += k[kk] * dz;
                }
            }
        }
    }

    std::array<double, kC3 * kL3> da3{};
    for (int c = 0; c < kC3; ++c)
        for (int t = 0; t < kP1; ++t) da3[c * kL3 + ws.i1[c * kP1 + t]] += dp1[c * kP1 + t];

    std::array<double, kC2 * kL2> da2{};
    for (int c = 0; c < kC3; ++c) {
        for (int t = 0; t < kL3; ++t) {
            const double dz = ws.z3[c * kL3 + t] > 0.0 ? da3[c * kL3 + t] : 0.0;
            if (dz == 0.0) continue;
            g[o.b2 + c] += dz;
            for (int ci = 0; ci < kC2; ++ci) {
                const double* k = w + o.w2 + (c * kC2 + ci) * 3;
                double* gk = g + o.w2 + (c * kC2 + ci) * 3;
                for (int kk = 0; kk < 3; ++kk) {
                    const int src = t + kk - 1;
                    if (src < 0 || src >= kL2) continue;
                    gk[kk] += dz * ws.a2[ci * kL2 + src];
                    da2[ci * kL2 + src] += k[kk] * dz;
                }
            }
        }
    }

    std::array<double, kL1> da1{};
    for (int c = 0; c < kC2; ++c) {
        const double* k = w + o.w1 + c * 3;
        double* gk = g + o.w1 + c * 3;
        for (int t = 0; t < kL2; ++t) {
            const double dz = ws.z2[c * kL2 + t] > 0.0 ? da2[c * kL2 + t] : 0.0;
            if (dz == 0.0) continue;
            g[o.b1 + c] += dz;
            const int src = 2 * t;
            gk[0] += dz * ws.a1[src];
            gk[1] += dz * ws.a1[src + 1];
            gk[2] += dz * ws.a1[src + 2];
            da1[src] += k[0] * dz;
            da1[src + 1] += k[1] * dz;
            da1[src + 2] += k[2] * dz;
        }
    }

    for (int t = 0; t < kL1; ++t) {
        const double dz = ws.z1[t] > 0.0 ? da1[t] : 0.0;
        if (dz == 0.0) continue;
        g[o.b_c2d] += dz;
        double* gk = g + o.w_c2d;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) gk[i * 4 + j] += dz * x[(t + i) * kInCols + j];
    }
}

}  // namespace

size_t Architecture::param_count() const { return layout(n_classes).total; }

std::vector<Architecture::LayerSpan> Architecture::manifest() const {
    const Offsets o = layout(n_classes);
    return {
        {"conv2d.weight", o.w_c2d, 16},
        {"conv2d.bias", o.b_c2d, 1},
        {"conv1d_1.weight", o.w1, kC2 * 3},
        {"conv1d_1.bias", o.b1, kC2},
        {"conv1d_2.weight", o.w2, kC3 * kC2 * 3},
        {"conv1d_2.bias", o.b2, kC3},
        {"conv1d_3.weight", o.w3, kC4 * kC3 * 3},
        {"conv1d_3.bias", o.b3, kC4},
        {"conv1d_4.weight", o.w4, kC5 * kC4 * 3},
        {"conv1d_4.bias", o.b4, kC5},
        {"fc1.weight", o.wf1, kFc1 * kC5},
        {"fc1.bias", o.bf1, kFc1},
        {"fc2.weight", o.wf2, static_cast<size_t>(n_classes) * kFc1},
        {"fc2.bias", o.bf2, static_cast<size_t>(n_classes)},
    };
}

uint64_t Architecture::hash() const {
    std::string desc = "conv2d4x4/1|conv1d3x3s2|conv1d3x5p1|pool4s2|conv1d3x8p1|pool2s2|"
                       "conv1d3x16p1|pool4s1|fc10|fc" +
                       std::to_string(n_classes);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : desc) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::pair<int, int>> Architecture::shape_chain() const {
    return {{kL1, 1},  {kL2, kC2}, {kL3, kC3}, {kP1, kC3}, {kL4, kC4},
            {kP2, kC4}, {kL5, kC5}, {kP3, kC5}, {kFc1, 1},  {n_classes, 1}};
}

void Architecture::validate() const {
    if (n_classes < 2 || n_classes > kMaxClasses)
        throw ConfigError("n_classes must be in [2, 16]");
}

ModelParams ModelParams::init(const Architecture& arch, uint64_t seed) {
    arch.validate();
    ModelParams p;
    p.arch = arch;
    p.values.assign(arch.param_count(), 0.0);
    Rng rng(derive_seed(seed, 0x6e6eULL));
    auto fill = [&](size_t offset, size_t extent, int fan_in) {
        const double bound = std::sqrt(6.0 / fan_in);
        for (size_t k = 0; k < extent; ++k) p.values[offset + k] = rng.uniform(-bound, bound);
    };
    const Offsets o = layout(arch.n_classes);
    fill(o.w_c2d, 16, 16);
    fill(o.w1, kC2 * 3, 3);
    fill(o.w2, kC3 * kC2 * 3, kC2 * 3);
    fill(o.w3, kC4 * kC3 * 3, kC3 * 3);
    fill(o.w4, kC5 * kC4 * 3, kC4 * 3);
    fill(o.wf1, kFc1 * kC5, kC5);
    fill(o.wf2, arch.n_classes * kFc1, kFc1);
    // Small positive bias keeps every ReLU channel reachable at init; inputs
    // are nonnegative, so zero biases leave whole channels dead for some
    // weight draws.
    for (size_t k = 0; k < kC2; ++k) p.values[o.b1 + k] = 0.05;
    for (size_t k = 0; k < kC3; ++k) p.values[o.b2 + k] = 0.05;
    for (size_t k = 0; k < kC4; ++k) p.values[o.b3 + k] = 0.05;
    for (size_t k = 0; k < kC5; ++k) p.values[o.b4 + k] = 0.05;
    for (size_t k = 0; k < kFc1; ++k) p.values[o.bf1 + k] = 0.05;
    p.values[o.b_c2d] = 0.05;
    return p;
}

AdamState AdamState::init(size_t n_params, const AdamHyper& hyper) {
    AdamState s;
    s.m.assign(n_params, 0.0);
    s.v.assign(n_params, 0.0);
    s.t = 0;
    s.hyper = hyper;
    return s;
}

std::vector<double> forward(const ModelParams& params, const Sample& sample) {
    if (params.values.size() != params.arch.param_count())
        throw ShapeMismatch("parameter vector does not match the architecture");
    Workspace ws;
    forward_ws(params, sample, ws);
    return std::vector<double>(ws.probs.begin(), ws.probs.begin() + params.arch.n_classes);
}

double loss(std::span<const double> probs, FaultKind label) {
    const double p = std::max(probs[static_cast<size_t>(label)], 1e-12);
    return -std::log(p);
}

double batch_loss(const ModelParams& params, std::span<const Sample> batch) {
    if (batch.empty()) throw ShapeMismatch("empty batch");
    Workspace ws;
    double total = 0.0;
    for (const Sample& s : batch) {
        forward_ws(params, s, ws);
        total += loss(std::span<const double>(ws.probs.data(), params.arch.n_classes), s.label);
    }
    return total / batch.size();
}

std::vector<double> backward(const ModelParams& params, std::span<const Sample> batch) {
    if (params.values.size() != params.arch.param_count())
        throw ShapeMismatch("parameter vector does not match the architecture");
    if (batch.empty()) throw ShapeMismatch("empty batch");
    std::vector<double> grad(params.values.size(), 0.0);
    Workspace ws;
    for (const Sample& s : batch) {
        forward_ws(params, s, ws);
        backward_ws(params, s, ws, grad);
    }
    const double inv = 1.0 / batch.size();
    for (double& g : grad) g *= inv;
    return grad;
}

void adam_step(AdamState& state, ModelParams& params, std::span<const double> grad) {
    if (grad.size() != params.values.size() || state.m.size() != grad.size())
        throw LengthMismatch("gradient/state size mismatch");
    for (double g : grad)
        if (!std::isfinite(g)) throw NonFiniteGradient("gradient has a non-finite entry");
    const AdamHyper& h = state.hyper;
    state.t += 1;
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
    for (size_t k = 0; k < grad.size(); ++k) {
        state.m[k] = h.beta1 * state.m[k] + (1.0 - h.beta1) * grad[k];
        state.v[k] = h.beta2 * state.v[k] + (1.0 - h.beta2) * grad[k] * grad[k];
        const double m_hat = state.m[k] / bc1;
        const double denom =
            h.use_vhat ? std::sqrt(state.v[k] / bc2) + h.eps : std::sqrt(state.v[k]) + h.eps;
        params.values[k] -= h.lr * m_hat / denom;
    }
}

void train_epochs(ModelParams& params, std::span<const Sample> train, AdamState& state,
                  int n_epochs, uint64_t shuffle_seed) {
    if (train.empty()) throw ShapeMismatch("empty training set");
    std::vector<size_t> order(train.size());
    for (size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::vector<double> grad(params.values.size());
    Workspace ws;
    for (int epoch = 0; epoch < n_epochs; ++epoch) {
        Rng rng(derive_seed(shuffle_seed, 0x9a55ULL, static_cast<uint64_t>(epoch)));
        rng.shuffle(order);
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(state.hyper.batch)) {
            const size_t stop = std::min(order.size(), start + state.hyper.batch);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (size_t k = start; k < stop; ++k) {
                const Sample& s = train[order[k]];
                forward_ws(params, s, ws);
                backward_ws(params, s, ws, grad);
            }
            const double inv = 1.0 / static_cast<double>(stop - start);
            for (double& g : grad) g *= inv;
            adam_step(state, params, grad);
        }
    }
}

Evaluation evaluate(const ModelParams& params, std::span<const Sample> dataset) {
    const int n = params.arch.n_classes;
    Evaluation ev;
    ev.confusion.assign(n, std::vector<int>(n, 0));
    if (dataset.empty()) return ev;
    Workspace ws;
    int correct = 0;
    for (const Sample& s : dataset) {
        forward_ws(params, s, ws);
        int best = 0;
        for (int c = 1; c < n; ++c)
            if (ws.probs[c] > ws.probs[best]) best = c;
        const int truth = static_cast<int>(s.label);
        ev.confusion[truth][best] += 1;
        if (best == truth) ++correct;
    }
    ev.accuracy = static_cast<double>(correct) / dataset.size();
    return ev;
}

int predict(const ModelParams& params, const Sample& sample) {
    Workspace ws;
    forward_ws(params, sample, ws);
    int best = 0;
    for (int c = 1; c < params.arch.n_classes; ++c)
        if (ws.probs[c] > ws.probs[best]) best = c;
    return best;
}

void save_checkpoint(const std::string& path, const ModelParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out.write("ADFLMODL", 8);
    const uint32_t version = 1;
    const uint64_t hash = params.arch.hash();
    const uint64_t count = params.values.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&hash), sizeof(hash));
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    out.write(reinterpret_cast<const char*>(params.values.data()),
              static_cast<std::streamsize>(count * sizeof(double)));
    if (!out) throw std::runtime_error("short write to " + path);

    std::ofstream manifest(path + ".manifest.txt");
    manifest << "architecture_hash " << hash << "\n";
    manifest << "n_classes " << params.arch.n_classes << "\n";
    manifest << "param_count " << count << "\n";
    for (const auto& span : params.arch.manifest())
        manifest << span.name << " offset=" << span.offset << " extent=" << span.extent << "\n";
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "ADFLMODL", 8) != 0)
        throw std::runtime_error("bad checkpoint magic in " + path);
    uint32_t version = 0;
    uint64_t hash = 0, count = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(&hash), sizeof(hash));
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!in || version != 1) throw std::runtime_error("unsupported checkpoint version");

    // n_classes is recoverable from the parameter count.
    const Offsets base = layout(0);
    if (count < base.total || (count - base.total) % (kFc1 + 1) != 0)
        throw std::runtime_error("checkpoint parameter count matches no architecture");
    ModelParams p;
    p.arch.n_classes = static_cast<int>((count - base.total) / (kFc1 + 1));
    p.arch.validate();
    if (p.arch.hash() != hash) throw std::runtime_error("architecture hash mismatch");
    p.values.resize(count);
    in.read(reinterpret_cast<char*>(p.values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw std::runtime_error("short read from " + path);
    for (double v : p.values)
        if (!std::isfinite(v)) throw std::runtime_error("checkpoint holds non-finite values");
    return p;
}

}  // namespace adfl
