#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

namespace adfl {

using ParamVec = std::vector<double>;

// Data-size-proportional coefficients over every participating agent;
// weights sum to 1.
std::map<int, double> mixing_weights(const std::map<int, size_t>& data_sizes);

// G = sum_{i in cohort} w_i * latest_i + sum_{j not in cohort} w_j * stale_j,
// coordinatewise. latest and stale must be disjoint and every key must carry
// a weight.
ParamVec aggregate(const std::map<int, ParamVec>& latest, const std::map<int, ParamVec>& stale,
                   const std::map<int, double>& weights);

struct ProtocolAction {
    enum class Kind { Broadcast, SendSkip, AggregationDone, StartLocalTraining };
    Kind kind;
    ParamVec params;              // Broadcast payload / AggregationDone aggregate
    std::vector<int> targets;     // Broadcast and SendSkip recipients, ascending
    bool kept_global = false;     // AggregationDone: selection outcome
    double global_val_acc = 0.0;  // AggregationDone
    double local_val_acc = 0.0;   // AggregationDone
};

// One agent of the decentralized cycle: train, broadcast, aggregate once
// L-1 fresh peer models are queued, select the better of aggregate and local.
// Transport-free; events come in through the on_* functions and effects leave
// as ProtocolActions in deterministic order.
struct AgentState {
    int agent_id = 0;
    ParamVec local_params;
    int round = 0;  // completed aggregations
    size_t data_size = 0;
    std::vector<int> peers;  // ascending, excludes self
    int threshold_L = 2;
    bool has_aggregated_once = false;
    bool training_complete = false;
    std::map<int, size_t> cohort_data_sizes;  // every participant incl. self

    struct QueueEntry {
        int sender;
        int sender_round;
        ParamVec params;
    };
    std::vector<QueueEntry> receive_queue;  // arrival order, one entry per sender
    std::map<int, ParamVec> stale_cache;    // last known model per peer

    // Validation accuracy used by the selection rule.
    std::function<double(const ParamVec&)> validation_accuracy;

    void validate() const;
};

// Installs the shared initial model: every peer's stale entry starts as the
// common seed parameters.
void bootstrap(AgentState& state, const ParamVec& initial_params);

// Training for the current round finished: broadcast, then aggregate if the
// queue already holds L-1 fresh models.
std::vector<ProtocolAction> on_local_training_done(AgentState& state);

// A peer model arrived: refresh the stale cache and the queue (latest entry
// per sender wins), then aggregate if the agent is waiting and the threshold
// is met.
std::vector<ProtocolAction> on_model_received(AgentState& state, int sender, int sender_round,
                                              const ParamVec& params);

// Skip signals carry no state change beyond logging.
std::vector<ProtocolAction> on_skip_received(AgentState& state, int sender);

// First-ever aggregation keeps the global model unconditionally; afterwards
// the higher validation accuracy wins, ties to the global model.
ParamVec select_model(const ParamVec& global_model, const ParamVec& local_model,
                      AgentState& state, double* global_acc = nullptr,
                      double* local_acc = nullptr, bool* kept_global = nullptr);

}  // namespace adfl
