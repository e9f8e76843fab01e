#include "adflsim/protocol.hpp"

#include <algorithm>
#include <cmath>

#include "adflsim/errors.hpp"

namespace adfl {

std::map<int, double> mixing_weights(const std::map<int, size_t>& data_sizes) {
    if (data_sizes.empty()) throw EmptyCohort("mixing weights over an empty cohort");
    double total = 0.0;
    for (const auto& [agent, size] : data_sizes) {
        if (size == 0) throw EmptyCohort("agent " + std::to_string(agent) + " has no data");
        total += static_cast<double>(size);
    }
    std::map<int, double> weights;
    for (const auto& [agent, size] : data_sizes)
        weights[agent] = static_cast<double>(size) / total;
    return weights;
}

ParamVec aggregate(const std::map<int, ParamVec>& latest, const std::map<int, ParamVec>& stale,
                   const std::map<int, double>& weights) {
    if (latest.empty()) throw EmptyCohort("aggregate needs at least one fresh model");
    const size_t n = latest.begin()->second.size();

    double weight_sum = 0.0;
    ParamVec out(n, 0.0);
    auto accumulate = [&](const std::map<int, ParamVec>& models) {
        for (const auto& [agent, params] : models) {
            if (params.size() != n)
                throw LengthMismatch("agent " + std::to_string(agent) +
                                     " has a parameter vector of different length");
            const auto w = weights.find(agent);
            if (w == weights.end())
                throw LengthMismatch("agent " + std::to_string(agent) + " has no mixing weight");
            weight_sum += w->second;
            for (size_t k = 0; k < n; ++k) out[k] += w->second * params[k];
        }
    };
    accumulate(latest);
    for (const auto& [agent, params] : stale)
        if (latest.count(agent))
            throw LengthMismatch("agent " + std::to_string(agent) + " appears fresh and stale");
    accumulate(stale);
    if (std::abs(weight_sum - 1.0) > 1e-9)
        throw LengthMismatch("mixing weights do not cover the cohort exactly");
    return out;
}

void AgentState::validate() const {
    if (threshold_L < 1 || threshold_L > static_cast<int>(peers.size()) + 1)
        throw ConfigError("threshold L must be in [1, n_agents]");
    if (data_size == 0) throw ConfigError("agent has no data");
}

void bootstrap(AgentState& state, const ParamVec& initial_params) {
    state.validate();
    state.local_params = initial_params;
    state.stale_cache.clear();
    for (int peer : state.peers) state.stale_cache[peer] = initial_params;
    state.receive_queue.clear();
    state.round = 0;
    state.has_aggregated_once = false;
    state.training_complete = false;
}

namespace {

// Threshold path shared by both events: cohort = self plus the first L-1
// queued senders; everyone else contributes stale weights and gets a skip.
void maybe_aggregate(AgentState& state, std::vector<ProtocolAction>& actions) {
    const int needed = state.threshold_L - 1;
    if (!state.training_complete ||
        static_cast<int>(state.receive_queue.size()) < needed)
        return;

    std::vector<int> fresh_senders;
    std::map<int, ParamVec> latest;
    latest[state.agent_id] = state.local_params;
    for (int k = 0; k < needed; ++k) {
        const auto& entry = state.receive_queue[k];
        fresh_senders.push_back(entry.sender);
        latest[entry.sender] = entry.params;
    }

    std::map<int, ParamVec> stale;
    std::vector<int> skip_targets;
    for (int peer : state.peers) {
        if (latest.count(peer)) continue;
        stale[peer] = state.stale_cache.at(peer);
        skip_targets.push_back(peer);
    }

    const auto weights = mixing_weights(state.cohort_data_sizes);
    ParamVec global_model = aggregate(latest, stale, weights);

    if (!skip_targets.empty()) {
        ProtocolAction skip;
        skip.kind = ProtocolAction::Kind::SendSkip;
        skip.targets = skip_targets;
        actions.push_back(std::move(skip));
    }

    ProtocolAction done;
    done.kind = ProtocolAction::Kind::AggregationDone;
    done.params = global_model;
    state.local_params = select_model(global_model, state.local_params, state,
                                      &done.global_val_acc, &done.local_val_acc,
                                      &done.kept_global);
    state.has_aggregated_once = true;
    state.round += 1;
    state.training_complete = false;
    state.receive_queue.clear();
    actions.push_back(std::move(done));

    ProtocolAction train;
    train.kind = ProtocolAction::Kind::StartLocalTraining;
    actions.push_back(std::move(train));
}

}  // namespace

std::vector<ProtocolAction> on_local_training_done(AgentState& state) {
    state.training_complete = true;
    std::vector<ProtocolAction> actions;
    ProtocolAction bcast;
    bcast.kind = ProtocolAction::Kind::Broadcast;
    bcast.params = state.local_params;
    bcast.targets = state.peers;
    actions.push_back(std::move(bcast));
    maybe_aggregate(state, actions);
    return actions;
}

std::vector<ProtocolAction> on_model_received(AgentState& state, int sender, int sender_round,
                                              const ParamVec& params) {
    if (std::find(state.peers.begin(), state.peers.end(), sender) == state.peers.end())
        throw UnknownSender("agent " + std::to_string(sender) + " is not a peer");
    if (!state.local_params.empty() && params.size() != state.local_params.size())
        throw LengthMismatch("received model with mismatched parameter count");

    state.stale_cache[sender] = params;
    auto entry = std::find_if(state.receive_queue.begin(), state.receive_queue.end(),
                              [&](const auto& e) { return e.sender == sender; });
    if (entry != state.receive_queue.end()) {
        entry->sender_round = sender_round;
        entry->params = params;  // latest wins, arrival position kept
    } else {
        state.receive_queue.push_back({sender, sender_round, params});
    }

    std::vector<ProtocolAction> actions;
    maybe_aggregate(state, actions);
    return actions;
}

std::vector<ProtocolAction> on_skip_received(AgentState& state, int sender) {
    if (std::find(state.peers.begin(), state.peers.end(), sender) == state.peers.end())
        throw UnknownSender("agent " + std::to_string(sender) + " is not a peer");
    return {};
}

ParamVec select_model(const ParamVec& global_model, const ParamVec& local_model,
                      AgentState& state, double* global_acc, double* local_acc,
                      bool* kept_global) {
    double g_acc = 0.0, l_acc = 0.0;
    if (state.validation_accuracy) {
        g_acc = state.validation_accuracy(global_model);
        l_acc = state.validation_accuracy(local_model);
    }
    if (global_acc) *global_acc = g_acc;
    if (local_acc) *local_acc = l_acc;

    const bool keep_global = !state.has_aggregated_once || g_acc >= l_acc;
    if (kept_global) *kept_global = keep_global;
    return keep_global ? global_model : local_model;
}

}  // namespace adfl
