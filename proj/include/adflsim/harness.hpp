#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adflsim/nn.hpp"
#include "adflsim/preprocess.hpp"
#include "adflsim/protocol.hpp"

namespace adfl {

constexpr int kNumAgents = 3;

// Per-agent per-class sample counts of the published experiment tables;
// sim presets use the full sweep, "q" variants the quarter sweep, real
// presets the 100-sample configuration.
struct ExperimentPreset {
    std::string name;
    std::array<std::array<int, kNumFaultKinds>, kNumAgents> counts{};
    bool quarter = false;

    int agent_total(int agent) const;
};

ExperimentPreset preset_by_name(const std::string& name);
std::vector<std::string> preset_names();

struct DataConfig {
    double noise_rel = 0.005;
    int n_points = 400;
    bool scale_features = true;  // fixed physical ranges mapped to [-1, 1]
    double val_fraction = 0.2;   // held out from the train split for selection
    int n_threads = 0;
};

struct AgentData {
    std::vector<Sample> train_fit;   // training minus the validation holdout
    std::vector<Sample> val;
    std::vector<Sample> train_all;   // full 70% train split
    std::vector<Sample> test;        // local 30% test split
    size_t data_size = 0;            // |D_k|, the full local sample count
};

struct PresetData {
    std::vector<AgentData> agents;
    std::vector<Sample> union_test;  // deduplicated union of local test splits
    std::vector<Sample> pooled_train;  // deduplicated union of train splits
};

PresetData build_preset_data(const ExperimentPreset& preset, uint64_t seed,
                             const DataConfig& config);

// Same, memoized per (preset, seed, config) for repeated runs in one process.
const PresetData& preset_data_cached(const ExperimentPreset& preset, uint64_t seed,
                                     const DataConfig& config);

enum class TraceEventKind { Bcast, Recv, SkipTx, SkipRx, Agg, Select };
const char* to_string(TraceEventKind kind);

struct TraceEvent {
    double sim_time = 0.0;
    int agent = -1;  // -1 is the virtual server in centralized modes
    TraceEventKind kind = TraceEventKind::Bcast;
    int round = 0;
    int peer = -1;  // Select rows reuse this field: 1 kept global, 0 kept local
    long long params_bytes = 0;
};

struct MetricsRow {
    double sim_time = 0.0;
    int agent = -1;
    std::string event;
    int round = 0;
    double global_acc = -1.0;
    double local_acc = -1.0;
    long long cum_params_tx = 0;
};

struct MetricsLog {
    std::vector<TraceEvent> trace;
    std::vector<MetricsRow> rows;
    long long params_transmitted = 0;  // scalars, model messages only
    std::map<int, int> aggregations_per_agent;
    std::map<int, std::vector<uint64_t>> upload_hashes;
    bool converged = false;
    double converged_time = -1.0;
    int converged_round = -1;  // cohort aggregation count at convergence
    double final_sim_time = 0.0;
    std::map<int, double> final_global_acc;
    std::map<int, double> best_global_acc;  // best union-test accuracy per agent
    std::map<int, ParamVec> final_models;  // -1 holds the server/global model
    std::string mode;
};

struct SimConfig {
    std::string preset = "sim-1";
    uint64_t seed = 1;
    int threshold_L = 2;
    int epochs_per_round = 50;
    AdamHyper hyper;  // pipeline default: standard bias-corrected Adam
    std::array<double, kNumAgents> epoch_time_median = {1.0, 1.0, 1.0};  // seconds
    double epoch_time_sigma = 0.1;     // lognormal sigma
    double latency_min = 0.05;         // seconds
    double latency_max = 0.15;
    double target_accuracy = 0.99;     // on the union test set
    bool stop_when_all_agents = false; // default: first agent at target stops the run
    int max_aggregations_per_agent = 60;
    double max_sim_time = 1e9;
    int crash_agent = -1;              // silence this agent...
    int crash_after_aggregations = 0;  // ...after it aggregates this many times
    DataConfig data;

    SimConfig() { hyper.use_vhat = true; }

    void validate() const;
};

MetricsLog run_adfl(const SimConfig& config);
MetricsLog run_centralized_fl(const SimConfig& config);
MetricsLog run_centralized(const SimConfig& config);

// Total scalars shipped in model messages; skip signals are free.
long long communication_overhead(const MetricsLog& log);

// Longest run of consecutive broadcasts with an unchanged payload hash;
// a model that changes every round scores 0.
std::map<int, int> longest_consecutive_uploads(const MetricsLog& log);

void write_metrics_csv(const std::string& path, const MetricsLog& log);
void write_trace_csv(const std::string& path, const MetricsLog& log);
void write_summary(const std::string& path, const MetricsLog& log);

}  // namespace adfl
