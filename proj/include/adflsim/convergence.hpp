#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "adflsim/preprocess.hpp"
#include "adflsim/protocol.hpp"

namespace adfl {

// One agent's differentiable objective plus its mixing weight; the global
// objective is the weighted sum.
struct AgentObjective {
    std::function<double(const ParamVec&)> value;
    std::function<ParamVec(const ParamVec&)> grad;
    double weight = 1.0;
};

double objective_value(const std::vector<AgentObjective>& agents, const ParamVec& w);
ParamVec objective_grad(const std::vector<AgentObjective>& agents, const ParamVec& w);

// Multinomial softmax regression (linear map + bias + softmax) over flattened
// sample features, with an L2 term that makes the loss strongly convex.
struct ConvexTask {
    int n_classes = 4;
    double l2 = 1e-3;
    std::vector<std::vector<Sample>> agent_data;

    size_t param_dim() const { return static_cast<size_t>(n_classes) * (kFeatureCount + 1); }
    std::vector<AgentObjective> objectives() const;

    // Caps each agent's per-class sample count to keep verification runs fast.
    static ConvexTask from_agent_samples(std::vector<std::vector<Sample>> per_agent,
                                         size_t max_per_class = 0, double l2 = 1e-3);
};

struct BoundConstants {
    double rho = 0.0;
    double H = 0.0;
    double delta_bar = 0.0;
    int n_probe = 0;
    double radius = 0.0;
};

// Theorem-style loss-divergence bound; zero at x = 1 and at delta_bar = 0.
double u_bar(double x, double lr, double H, double delta_bar);

// Max-ratio estimates of rho, H and the gradient divergence over seeded probe
// pairs around a short descent trajectory, inflated by a 1.2 safety factor.
// Prefix-stable in n_probe: doubling the probe count never lowers a value.
BoundConstants estimate_constants(const std::vector<AgentObjective>& agents, size_t dim,
                                  int n_probe, double radius, uint64_t seed);

struct BoundRecord {
    int round = 0;
    int epoch = 0;
    double lhs = 0.0;        // F(G_t([e])) - F(z_t([e]))
    double rhs = 0.0;        // rho * u_bar(e)
    double param_dist = 0.0; // |G_t([e]) - z_t([e])|
    double u_bar_e = 0.0;
    bool violation = false;
};

struct Theorem1Report {
    std::vector<BoundRecord> records;
    int violations = 0;
    double lr = 0.0;
    int tau = 0;
    int rounds = 0;
    BoundConstants constants;
    std::vector<double> z_gaps;       // F(z_t([e])) - F(G*) filled by theorem2_report
    std::vector<double> z_losses;     // F(z_t([e])) per epoch
    std::vector<double> g_losses;     // F(G_t) per round
    std::vector<ParamVec> z_starts;   // z_t([0]) per round
    ParamVec final_global;
};

// Simulates the per-round virtual-global/auxiliary trajectories under
// full-batch gradient descent. participation < 1 freezes a rotating subset
// of agents each round ("trace" style); participation == agents.size() (the
// default 0 sentinel) keeps everyone active.
Theorem1Report verify_theorem1(const std::vector<AgentObjective>& agents, size_t dim,
                               const BoundConstants& constants, double lr, int tau, int rounds,
                               int participation = 0, double tolerance = 1e-9);

struct Theorem2Report {
    bool cond_lr = false;        // lr <= 1/H
    bool cond_margin = false;    // chi*phi - zeta > 0
    bool cond_z_gap = false;     // F(z_t([e])) - F(G*) >= eps for all e
    bool cond_g_gap = false;     // F(G_t) - F(G*) >= eps
    bool applicable = false;
    double chi = 0.0;
    double phi = 0.0;
    double zeta = 0.0;
    double epsilon = 0.0;
    double bound = 0.0;
    double observed_gap = 0.0;
    bool holds = false;  // observed_gap <= bound whenever applicable
    double f_star = 0.0;
};

// Approximates G* by centralized descent to gradient norm < 1e-8, then
// evaluates the four conditions and the bound at the final round. mu > 0
// (e.g. the task's L2 weight) enables the strongly-convex momentum schedule.
Theorem2Report theorem2_report(const std::vector<AgentObjective>& agents, size_t dim,
                               Theorem1Report& run, double lr, double mu = 0.0);

void write_bound_report_csv(const std::string& path, const Theorem1Report& report);
void write_constants_summary(const std::string& path, const Theorem1Report& report,
                             const Theorem2Report* theorem2 = nullptr);

}  // namespace adfl
