#include "adflsim/convergence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "adflsim/csv.hpp"
#include "adflsim/errors.hpp"
#include "adflsim/rng.hpp"

namespace adfl {

namespace {

double dot(const ParamVec& a, const ParamVec& b) {
    double s = 0.0;
    for (size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

double norm(const ParamVec& a) { return std::sqrt(dot(a, a)); }

ParamVec axpy(const ParamVec& a, const ParamVec& b, double scale) {
    ParamVec out(a.size());
    for (size_t k = 0; k < a.size(); ++k) out[k] = a[k] + scale * b[k];
    return out;
}

}  // namespace

double objective_value(const std::vector<AgentObjective>& agents, const ParamVec& w) {
    double total = 0.0;
    for (const auto& a : agents) total += a.weight * a.value(w);
    return total;
}

ParamVec objective_grad(const std::vector<AgentObjective>& agents, const ParamVec& w) {
    ParamVec g(w.size(), 0.0);
    for (const auto& a : agents) {
        const ParamVec ga = a.grad(w);
        for (size_t k = 0; k < w.size(); ++k) g[k] += a.weight * ga[k];
    }
    return g;
}

std::vector<AgentObjective> ConvexTask::objectives() const {
    if (agent_data.empty()) throw EmptyCohort("convex task has no agents");
    const int classes = n_classes;
    const double lambda = l2;
    const size_t dim = param_dim();

    size_t total = 0;
    for (const auto& d : agent_data) {
        if (d.empty()) throw EmptyCohort("convex task agent has no data");
        total += d.size();
    }

    std::vector<AgentObjective> out;
    for (const auto& dataset : agent_data) {
        const std::vector<Sample>* data = &dataset;
        AgentObjective obj;
        obj.weight = static_cast<double>(dataset.size()) / static_cast<double>(total);
        obj.value = [data, classes, lambda, dim](const ParamVec& w) {
            if (w.size() != dim) throw LengthMismatch("parameter dimension mismatch");
            double loss = 0.0;
            for (const Sample& s : *data) {
                double logits[16];
                double max_logit = -1e300;
                for (int c = 0; c < classes; ++c) {
                    const double* row = w.data() + c * (kFeatureCount + 1);
                    double z = row[kFeatureCount];
                    for (int k = 0; k < kFeatureCount; ++k) z += row[k] * s.features[k];
                    logits[c] = z;
                    max_logit = std::max(max_logit, z);
                }
                double denom = 0.0;
                for (int c = 0; c < classes; ++c) denom += std::exp(logits[c] - max_logit);
                loss += std::log(denom) + max_logit - logits[static_cast<int>(s.label)];
            }
            loss /= data->size();
            double reg = 0.0;
            for (double v : w) reg += v * v;
            return loss + 0.5 * lambda * reg;
        };
        obj.grad = [data, classes, lambda, dim](const ParamVec& w) {
            if (w.size() != dim) throw LengthMismatch("parameter dimension mismatch");
            ParamVec g(dim, 0.0);
            for (const Sample& s : *data) {
                double logits[16];
                double max_logit = -1e300;
                for (int c = 0; c < classes; ++c) {
                    const double* row = w.data() + c * (kFeatureCount + 1);
                    double z = row[kFeatureCount];
                    for (int k = 0; k < kFeatureCount; ++k) z += row[k] * s.features[k];
                    logits[c] = z;
                    max_logit = std::max(max_logit, z);
                }
                double probs[16];
                double denom = 0.0;
                for (int c = 0; c < classes; ++c) {
                    probs[c] = std::exp(logits[c] - max_logit);
                    denom += probs[c];
                }
                for (int c = 0; c < classes; ++c) {
                    const double delta =
                        probs[c] / denom - (c == static_cast<int>(s.label) ? 1.0 : 0.0);
                    double* row = g.data() + c * (kFeatureCount + 1);
                    for (int k = 0; k < kFeatureCount; ++k) row[k] += delta * s.features[k];
                    row[kFeatureCount] += delta;
                }
            }
            const double inv = 1.0 / data->size();
            for (size_t k = 0; k < dim; ++k) g[k] = g[k] * inv + lambda * w[k];
            return g;
        };
        out.push_back(std::move(obj));
    }
    return out;
}

ConvexTask ConvexTask::from_agent_samples(std::vector<std::vector<Sample>> per_agent,
                                          size_t max_per_class, double l2) {
    ConvexTask task;
    task.l2 = l2;
    for (auto& dataset : per_agent) {
        if (max_per_class > 0) {
            std::map<int, size_t> kept;
            std::vector<Sample> capped;
            for (const Sample& s : dataset) {
                if (kept[static_cast<int>(s.label)] >= max_per_class) continue;
                kept[static_cast<int>(s.label)] += 1;
                capped.push_back(s);
            }
            dataset = std::move(capped);
        }
        task.agent_data.push_back(std::move(dataset));
    }
    return task;
}

double u_bar(double x, double lr, double H, double delta_bar) {
    if (x == 0.0 || x == 1.0 || delta_bar == 0.0) return 0.0;
    if (H <= 0.0 || lr <= 0.0) return 0.0;
    return delta_bar / H * (std::pow(1.0 + lr * H, x) - 1.0) - lr * delta_bar * x;
}

namespace {

// Rough smoothness probe around a single point; seeds the provisional
// learning rate for the trajectory pre-pass.
double rough_smoothness(const std::vector<AgentObjective>& agents, size_t dim, double radius,
                        Rng& rng) {
    double H = 1e-6;
    ParamVec zero(dim, 0.0);
    const ParamVec g0 = objective_grad(agents, zero);
    for (int probe = 0; probe < 30; ++probe) {
        ParamVec p(dim);
        double n2 = 0.0;
        for (auto& v : p) {
            v = rng.normal();
            n2 += v * v;
        }
        const double scale = radius / std::max(std::sqrt(n2), 1e-30);
        for (auto& v : p) v *= scale;
        const ParamVec g = objective_grad(agents, p);
        H = std::max(H, norm(axpy(g, g0, -1.0)) / radius);
    }
    return H;
}

}  // namespace

BoundConstants estimate_constants(const std::vector<AgentObjective>& agents, size_t dim,
                                  int n_probe, double radius, uint64_t seed) {
    if (n_probe < 100) throw ConfigError("n_probe must be >= 100");
    if (radius <= 0.0) throw ConfigError("radius must be > 0");

    // Anchor the probes on the federated trajectory itself: simulate the
    // per-round local-descent dynamics at a provisional step size and collect
    // every iterate. The verification run later moves through a subset of
    // this region because its step size is no larger.
    Rng rng(derive_seed(seed, 0xb0d));
    const double lr0 = 1.0 / (1.5 * rough_smoothness(agents, dim, radius, rng));
    const int n = static_cast<int>(agents.size());
    std::vector<ParamVec> anchors;
    ParamVec global_prev(dim, 0.0);
    anchors.push_back(global_prev);
    for (int round = 1; round <= 20; ++round) {
        std::vector<ParamVec> w(n, global_prev);
        ParamVec z = global_prev;
        for (int e = 1; e <= 10; ++e) {
            for (int k = 0; k < n; ++k) {
                const ParamVec gk = agents[k].grad(w[k]);
                for (size_t j = 0; j < dim; ++j) w[k][j] -= lr0 * gk[j];
                anchors.push_back(w[k]);
            }
            const ParamVec gz = objective_grad(agents, z);
            for (size_t j = 0; j < dim; ++j) z[j] -= lr0 * gz[j];
            anchors.push_back(z);
        }
        std::fill(global_prev.begin(), global_prev.end(), 0.0);
        for (int k = 0; k < n; ++k)
            for (size_t j = 0; j < dim; ++j) global_prev[j] += agents[k].weight * w[k][j];
        anchors.push_back(global_prev);
    }

    auto sample_point = [&]() {
        const ParamVec& anchor = anchors[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int>(anchors.size()) - 1))];
        ParamVec p(dim);
        double n2 = 0.0;
        for (auto& v : p) {
            v = rng.normal();
            n2 += v * v;
        }
        const double scale =
            radius * std::pow(rng.next_double(), 1.0 / dim) / std::max(std::sqrt(n2), 1e-30);
        for (size_t k = 0; k < dim; ++k) p[k] = anchor[k] + scale * p[k];
        return p;
    };

    // H must dominate every per-agent smoothness constant, not only the
    // global one: the drift recursion applies it agent by agent.
    BoundConstants c;
    c.n_probe = n_probe;
    c.radius = radius;
    for (int probe = 0; probe < n_probe; ++probe) {
        ParamVec a = sample_point();
        ParamVec b = sample_point();
        int attempts = 0;
        while (norm(axpy(a, b, -1.0)) < 1e-12) {
            if (++attempts > 64) throw DegeneratePair("probe pair keeps collapsing");
            b = sample_point();
        }
        const double dist = norm(axpy(a, b, -1.0));
        const double df = std::abs(objective_value(agents, a) - objective_value(agents, b));
        const ParamVec ga = objective_grad(agents, a);
        const ParamVec gb = objective_grad(agents, b);
        c.rho = std::max(c.rho, df / dist);
        c.H = std::max(c.H, norm(axpy(ga, gb, -1.0)) / dist);
        for (const auto& agent : agents) {
            const ParamVec gka = agent.grad(a);
            const ParamVec gkb = agent.grad(b);
            c.H = std::max(c.H, norm(axpy(gka, gkb, -1.0)) / dist);
            c.delta_bar = std::max(c.delta_bar, norm(axpy(gka, ga, -1.0)));
        }
    }
    c.rho *= 1.2;
    c.H *= 1.2;
    c.delta_bar *= 1.2;
    return c;
}

Theorem1Report verify_theorem1(const std::vector<AgentObjective>& agents, size_t dim,
                               const BoundConstants& constants, double lr, int tau, int rounds,
                               int participation, double tolerance) {
    if (agents.empty()) throw EmptyCohort("no agents");
    if (constants.H > 0.0 && lr > 1.0 / constants.H + 1e-15)
        throw ConditionViolated("learning rate exceeds 1/H");
    if (tau < 1 || rounds < 1) throw ConfigError("tau and rounds must be >= 1");
    const int n = static_cast<int>(agents.size());
    if (participation <= 0 || participation > n) participation = n;

    Theorem1Report report;
    report.lr = lr;
    report.tau = tau;
    report.rounds = rounds;
    report.constants = constants;

    ParamVec global_prev(dim, 0.0);
    for (int round = 1; round <= rounds; ++round) {
        report.z_starts.push_back(global_prev);
        ParamVec z = global_prev;
        std::vector<ParamVec> w(n, global_prev);
        // rotating participation window keeps every agent active over rounds
        std::vector<bool> active(n, false);
        for (int k = 0; k < participation; ++k)
            active[(round - 1 + k) % n] = true;

        ParamVec virtual_global = global_prev;
        for (int e = 1; e <= tau; ++e) {
            for (int k = 0; k < n; ++k) {
                if (!active[k]) continue;
                const ParamVec gk = agents[k].grad(w[k]);
                for (size_t j = 0; j < dim; ++j) w[k][j] -= lr * gk[j];
            }
            const ParamVec gz = objective_grad(agents, z);
            for (size_t j = 0; j < dim; ++j) z[j] -= lr * gz[j];

            std::fill(virtual_global.begin(), virtual_global.end(), 0.0);
            for (int k = 0; k < n; ++k)
                for (size_t j = 0; j < dim; ++j)
                    virtual_global[j] += agents[k].weight * w[k][j];

            BoundRecord rec;
            rec.round = round;
            rec.epoch = e;
            rec.lhs = objective_value(agents, virtual_global) - objective_value(agents, z);
            rec.u_bar_e = u_bar(e, lr, constants.H, constants.delta_bar);
            rec.rhs = constants.rho * rec.u_bar_e;
            rec.param_dist = norm(axpy(virtual_global, z, -1.0));
            rec.violation = rec.lhs > rec.rhs + tolerance;
            if (rec.violation) report.violations += 1;
            report.records.push_back(rec);
            report.z_losses.push_back(objective_value(agents, z));
        }
        global_prev = virtual_global;
        report.g_losses.push_back(objective_value(agents, global_prev));
    }
    report.final_global = global_prev;
    return report;
}

Theorem2Report theorem2_report(const std::vector<AgentObjective>& agents, size_t dim,
                               Theorem1Report& run, double lr, double mu) {
    Theorem2Report rep;

    // Centralized optimum in two phases. Backtracking FISTA gets close, but
    // its line search drowns in value-summation noise near the optimum, so
    // the endgame switches to fixed-step accelerated descent (no function
    // evaluations) which contracts the gradient all the way to the target.
    ParamVec w(dim, 0.0);
    ParamVec y = w;
    double step = 1.0;
    double t_mom = 1.0;
    for (int it = 0; it < 5000; ++it) {
        const ParamVec g = objective_grad(agents, y);
        const double fy = objective_value(agents, y);
        const double gnorm2 = dot(g, g);
        while (step > 1e-10 &&
               objective_value(agents, axpy(y, g, -step)) > fy - 0.5 * step * gnorm2)
            step *= 0.5;
        if (step <= 1e-10) break;  // line search hit the noise floor
        ParamVec w_next = axpy(y, g, -step);
        if (dot(g, axpy(w_next, w, -1.0)) > 0.0) {  // momentum points uphill
            t_mom = 1.0;
            y = w;
            continue;
        }
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_mom * t_mom));
        y = axpy(w_next, axpy(w_next, w, -1.0), (t_mom - 1.0) / t_next);
        w = std::move(w_next);
        t_mom = t_next;
        if (it % 8 == 7 && norm(objective_grad(agents, w)) < 1e-5) break;
    }
    if (mu > 0.0) {
        const double fixed_step = std::max(step, 1e-10) * 0.5;
        const double kappa = 1.0 / (fixed_step * mu);
        const double beta = (std::sqrt(kappa) - 1.0) / (std::sqrt(kappa) + 1.0);
        ParamVec w_prev = w;
        y = w;
        for (int it = 0; it < 100000; ++it) {
            const ParamVec g = objective_grad(agents, y);
            ParamVec w_next = axpy(y, g, -fixed_step);
            y = axpy(w_next, axpy(w_next, w, -1.0), beta);
            w = std::move(w_next);
            if (it % 16 == 15 && norm(objective_grad(agents, w)) < 1e-8) break;
        }
    }
    rep.f_star = objective_value(agents, w);

    const double H = run.constants.H;
    rep.cond_lr = H > 0.0 && lr <= 1.0 / H + 1e-15;
    rep.phi = lr * (1.0 - H * lr / 2.0);

    rep.chi = 1e300;
    for (const auto& start : run.z_starts) {
        const double d2 = dot(axpy(start, w, -1.0), axpy(start, w, -1.0));
        if (d2 > 0.0) rep.chi = std::min(rep.chi, 1.0 / d2);
    }
    if (rep.chi == 1e300) rep.chi = 0.0;

    run.z_gaps.clear();
    double eps = 1e300;
    bool any_nonpositive = false;
    for (double fz : run.z_losses) {
        const double gap = fz - rep.f_star;
        run.z_gaps.push_back(gap);
        if (gap <= 0.0) any_nonpositive = true;
        eps = std::min(eps, gap);
    }
    double g_gap_min = 1e300;
    for (double fg : run.g_losses) {
        const double gap = fg - rep.f_star;
        if (gap <= 0.0) any_nonpositive = true;
        g_gap_min = std::min(g_gap_min, gap);
    }
    eps = std::min(eps, g_gap_min);
    rep.epsilon = eps == 1e300 ? 0.0 : eps;
    rep.cond_z_gap = !any_nonpositive && rep.epsilon > 0.0;
    rep.cond_g_gap = rep.cond_z_gap;

    if (rep.epsilon > 0.0) {
        rep.zeta = run.constants.rho * u_bar(run.tau, lr, H, run.constants.delta_bar) /
                   (run.tau * rep.epsilon * rep.epsilon);
    }
    rep.cond_margin = rep.chi * rep.phi - rep.zeta > 0.0;
    rep.applicable = rep.cond_lr && rep.cond_margin && rep.cond_z_gap && rep.cond_g_gap;

    rep.observed_gap = objective_value(agents, run.final_global) - rep.f_star;
    if (rep.applicable) {
        const double T = static_cast<double>(run.rounds) * run.tau;
        rep.bound = 1.0 / (T * (rep.chi * rep.phi - rep.zeta));
        rep.holds = rep.observed_gap <= rep.bound;
    }
    return rep;
}

void write_bound_report_csv(const std::string& path, const Theorem1Report& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "round,epoch,lhs,rhs,violation\n";
    for (const auto& r : report.records)
        out << r.round << ',' << r.epoch << ',' << format_double(r.lhs) << ','
            << format_double(r.rhs) << ',' << (r.violation ? 1 : 0) << "\n";
}

void write_constants_summary(const std::string& path, const Theorem1Report& report,
                             const Theorem2Report* theorem2) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "rho " << format_double(report.constants.rho) << "\n";
    out << "H " << format_double(report.constants.H) << "\n";
    out << "delta_bar " << format_double(report.constants.delta_bar) << "\n";
    out << "n_probe " << report.constants.n_probe << "\n";
    out << "lr " << format_double(report.lr) << "\n";
    out << "tau " << report.tau << "\n";
    out << "rounds " << report.rounds << "\n";
    out << "violations " << report.violations << "\n";
    if (theorem2) {
        out << "condition_lr " << (theorem2->cond_lr ? "true" : "false") << "\n";
        out << "condition_margin " << (theorem2->cond_margin ? "true" : "false") << "\n";
        out << "condition_z_gap " << (theorem2->cond_z_gap ? "true" : "false") << "\n";
        out << "condition_g_gap " << (theorem2->cond_g_gap ? "true" : "false") << "\n";
        out << "chi " << format_double(theorem2->chi) << "\n";
        out << "phi " << format_double(theorem2->phi) << "\n";
        out << "zeta " << format_double(theorem2->zeta) << "\n";
        out << "epsilon " << format_double(theorem2->epsilon) << "\n";
        if (theorem2->applicable) {
            out << "bound " << format_double(theorem2->bound) << "\n";
            out << "observed_gap " << format_double(theorem2->observed_gap) << "\n";
            out << "bound_holds " << (theorem2->holds ? "true" : "false") << "\n";
        } else {
            out << "bound not applicable\n";
            out << "observed_gap " << format_double(theorem2->observed_gap) << "\n";
        }
    }
}

}  // namespace adfl
