#include "adflsim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <mutex>
#include <queue>
#include <set>

#include <json.hpp>

#include "adflsim/csv.hpp"
#include "adflsim/errors.hpp"
#include "adflsim/rng.hpp"

namespace adfl {

namespace {

// Class-presence pattern of the six published experiments, indexed
// [agent][class][experiment-1].
constexpr int kPattern[kNumAgents][kNumFaultKinds][6] = {
    // agent 1: normal, short, degradation, shading
    {{1, 1, 1, 1, 1, 1}, {1, 1, 1, 1, 1, 1}, {0, 1, 0, 1, 1, 1}, {0, 0, 1, 1, 0, 1}},
    // agent 2
    {{1, 1, 1, 1, 1, 1}, {0, 0, 0, 0, 0, 1}, {1, 1, 1, 1, 1, 1}, {0, 0, 0, 0, 1, 1}},
    // agent 3
    {{1, 1, 1, 1, 1, 1}, {0, 0, 0, 0, 1, 1}, {0, 0, 0, 0, 0, 1}, {1, 1, 1, 1, 1, 1}},
};

std::vector<FaultSpec> standard_faults() {
    return {FaultSpec::normal(), FaultSpec::short_circuit(), FaultSpec::degradation(),
            FaultSpec::partial_shading()};
}

}  // namespace

int ExperimentPreset::agent_total(int agent) const {
    int total = 0;
    for (int c = 0; c < kNumFaultKinds; ++c) total += counts[agent][c];
    return total;
}

ExperimentPreset preset_by_name(const std::string& name) {
    std::string base = name;
    bool quarter = false;
    if (!base.empty() && base.back() == 'q') {
        quarter = true;
        base.pop_back();
    }
    int scale = 0;
    if (base.rfind("sim-", 0) == 0)
        scale = quarter ? 744 : 2976;
    else if (base.rfind("real-", 0) == 0 && !quarter)
        scale = 100;
    else
        throw ConfigError("unknown preset: " + name);
    const int exp_no = static_cast<int>(parse_int(base.substr(base.find('-') + 1)));
    if (exp_no < 1 || exp_no > 6) throw ConfigError("preset experiment number must be 1..6");

    ExperimentPreset preset;
    preset.name = name;
    preset.quarter = quarter;
    for (int a = 0; a < kNumAgents; ++a)
        for (int c = 0; c < kNumFaultKinds; ++c)
            preset.counts[a][c] = kPattern[a][c][exp_no - 1] * scale;
    return preset;
}

std::vector<std::string> preset_names() {
    std::vector<std::string> names;
    for (int e = 1; e <= 6; ++e) names.push_back("sim-" + std::to_string(e));
    for (int e = 1; e <= 6; ++e) names.push_back("sim-" + std::to_string(e) + "q");
    for (int e = 1; e <= 6; ++e) names.push_back("real-" + std::to_string(e));
    return names;
}

namespace {

using ClassPools = std::array<std::vector<Sample>, kNumFaultKinds>;

// The per-class sample pools depend only on the grid flavor and the data
// config, so every preset of one scale shares a single generation.
const ClassPools& class_pools_cached(bool quarter, uint64_t seed, const DataConfig& config) {
    static std::mutex mutex;
    static std::map<std::string, std::unique_ptr<ClassPools>> cache;
    const std::string key = std::to_string(quarter) + "|" + std::to_string(seed) + "|" +
                            format_double(config.noise_rel) + "|" +
                            std::to_string(config.n_points) + "|" +
                            std::to_string(config.scale_features);
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return *it->second;

    const GridSpec grid = quarter ? quarter_grid() : GridSpec{};
    const size_t pool_size = grid.cell_count();
    const auto curves = generate_dataset(grid, standard_faults(), derive_seed(seed, 0xDA7A),
                                         config.noise_rel, ArrayTopology{}, ModuleParams{},
                                         config.n_points, config.n_threads);
    auto pools = std::make_unique<ClassPools>();
    for (int c = 0; c < kNumFaultKinds; ++c) {
        (*pools)[c].reserve(pool_size);
        for (size_t k = 0; k < pool_size; ++k)
            (*pools)[c].push_back(sample_from_curve(curves[c * pool_size + k]));
        if (config.scale_features) {
            FeatureScaler::physical().apply((*pools)[c]);
            for (auto& s : (*pools)[c])
                for (auto& f : s.features) f = 2.0 * f - 1.0;
        }
    }
    it = cache.emplace(key, std::move(pools)).first;
    return *it->second;
}

}  // namespace

PresetData build_preset_data(const ExperimentPreset& preset, uint64_t seed,
                             const DataConfig& config) {
    const GridSpec grid = preset.quarter ? quarter_grid() : GridSpec{};
    const size_t pool_size = grid.cell_count();
    const ClassPools& pool = class_pools_cached(preset.quarter, seed, config);

    PresetData data;
    data.agents.resize(kNumAgents);
    for (int c = 0; c < kNumFaultKinds; ++c) {
        std::vector<size_t> perm(pool_size);
        for (size_t k = 0; k < pool_size; ++k) perm[k] = k;
        Rng rng(derive_seed(seed, 0x5917, static_cast<uint64_t>(c)));
        rng.shuffle(perm);

        std::set<size_t> train_union, test_union;
        int rank = 0;
        for (int a = 0; a < kNumAgents; ++a) {
            const size_t n = static_cast<size_t>(preset.counts[a][c]);
            if (n == 0) continue;
            if (n > pool_size)
                throw ConfigError("preset demands more samples than the grid produces");
            // full-pool allocations are shared; smaller ones get disjoint blocks
            const size_t offset = (n == pool_size) ? 0 : rank * n;
            if (offset + n > pool_size)
                throw ConfigError("per-agent allocations exceed the class pool");
            ++rank;
            const size_t n_train = static_cast<size_t>(std::floor(0.7 * n));
            for (size_t k = 0; k < n; ++k) {
                const size_t idx = perm[offset + k];
                if (k < n_train) {
                    data.agents[a].train_all.push_back(pool[c][idx]);
                    train_union.insert(idx);
                } else {
                    data.agents[a].test.push_back(pool[c][idx]);
                    test_union.insert(idx);
                }
            }
            data.agents[a].data_size += n;
        }
        for (size_t idx : train_union) data.pooled_train.push_back(pool[c][idx]);
        for (size_t idx : test_union) data.union_test.push_back(pool[c][idx]);
    }

    for (int a = 0; a < kNumAgents; ++a) {
        AgentData& ad = data.agents[a];
        std::vector<size_t> order(ad.train_all.size());
        for (size_t k = 0; k < order.size(); ++k) order[k] = k;
        Rng rng(derive_seed(seed, 0x7a11, static_cast<uint64_t>(a)));
        rng.shuffle(order);
        const size_t n_val = static_cast<size_t>(std::floor(config.val_fraction * order.size()));
        for (size_t k = 0; k < order.size(); ++k) {
            if (k < n_val)
                ad.val.push_back(ad.train_all[order[k]]);
            else
                ad.train_fit.push_back(ad.train_all[order[k]]);
        }
    }
    return data;
}

const PresetData& preset_data_cached(const ExperimentPreset& preset, uint64_t seed,
                                     const DataConfig& config) {
    static std::mutex mutex;
    static std::map<std::string, std::unique_ptr<PresetData>> cache;
    std::string key = preset.name + "|" + std::to_string(seed) + "|" +
                      format_double(config.noise_rel) + "|" + std::to_string(config.n_points) +
                      "|" + std::to_string(config.scale_features) + "|" +
                      format_double(config.val_fraction);
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(key);
    if (it == cache.end())
        it = cache.emplace(key, std::make_unique<PresetData>(build_preset_data(preset, seed, config)))
                 .first;
    return *it->second;
}

const char* to_string(TraceEventKind kind) {
    switch (kind) {
        case TraceEventKind::Bcast: return "BCAST";
        case TraceEventKind::Recv: return "RECV";
        case TraceEventKind::SkipTx: return "SKIP_TX";
        case TraceEventKind::SkipRx: return "SKIP_RX";
        case TraceEventKind::Agg: return "AGG";
        case TraceEventKind::Select: return "SELECT";
    }
    return "UNKNOWN";
}

void SimConfig::validate() const {
    if (threshold_L < 1 || threshold_L > kNumAgents)
        throw ConfigError("threshold_L must be in [1, n_agents]");
    if (epochs_per_round < 0) throw ConfigError("epochs_per_round must be >= 0");
    for (double m : epoch_time_median)
        if (m <= 0.0) throw ConfigError("epoch_time_median entries must be > 0");
    if (epoch_time_sigma < 0.0) throw ConfigError("epoch_time_sigma must be >= 0");
    if (latency_min <= 0.0 || latency_max < latency_min)
        throw ConfigError("latency range must satisfy 0 < min <= max");
    if (target_accuracy <= 0.0 || target_accuracy > 1.0)
        throw ConfigError("target_accuracy must be in (0, 1]");
    if (max_aggregations_per_agent < 1)
        throw ConfigError("max_aggregations_per_agent must be >= 1");
    if (max_sim_time <= 0.0) throw ConfigError("max_sim_time must be > 0");
    if (crash_agent >= kNumAgents) throw ConfigError("crash_agent out of range");
    if (data.noise_rel < 0.0 || data.noise_rel > 0.05)
        throw ConfigError("noise_rel must be in [0, 0.05]");
    if (data.val_fraction < 0.0 || data.val_fraction >= 1.0)
        throw ConfigError("val_fraction must be in [0, 1)");
    (void)preset_by_name(preset);
}

namespace {

struct SimEvent {
    double time = 0.0;
    uint64_t seq = 0;
    enum Kind { TrainingDone, ModelArrive, SkipArrive } kind = TrainingDone;
    int agent = 0;
    int sender = -1;
    int sender_round = 0;
    std::shared_ptr<const ParamVec> payload;
};

struct EventOrder {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
        if (a.time != b.time) return a.time > b.time;
        return a.seq > b.seq;
    }
};

ModelParams wrap(const ParamVec& values, const Architecture& arch) {
    ModelParams p;
    p.arch = arch;
    p.values = values;
    return p;
}

class AdflSim {
public:
    AdflSim(const SimConfig& config, const PresetData& data)
        : config_(config), data_(data) {
        const uint64_t seed = config.seed;
        initial_ = ModelParams::init(arch_, derive_seed(seed, 0x1217));

        std::map<int, size_t> sizes;
        for (int a = 0; a < kNumAgents; ++a) sizes[a] = data.agents[a].data_size;

        for (int a = 0; a < kNumAgents; ++a) {
            AgentState st;
            st.agent_id = a;
            for (int p = 0; p < kNumAgents; ++p)
                if (p != a) st.peers.push_back(p);
            st.threshold_L = config.threshold_L;
            st.data_size = sizes[a];
            st.cohort_data_sizes = sizes;
            st.validation_accuracy = [this, a](const ParamVec& p) {
                if (data_.agents[a].val.empty()) return 0.0;
                return evaluate(wrap(p, arch_), data_.agents[a].val).accuracy;
            };
            bootstrap(st, initial_.values);
            agents_.push_back(std::move(st));
            time_rng_.emplace_back(derive_seed(seed, 0x7131, a));
            lat_rng_.emplace_back(derive_seed(seed, 0x1a7e, a));
            silenced_.push_back(false);
        }
        param_count_ = static_cast<long long>(initial_.values.size());
    }

    MetricsLog run() {
        log_.mode = "adfl";
        for (int a = 0; a < kNumAgents; ++a) schedule_training(a, 0.0);
        while (!queue_.empty() && !stopped_) {
            SimEvent ev = queue_.top();
            queue_.pop();
            if (ev.time > config_.max_sim_time) break;
            now_ = ev.time;
            dispatch(ev);
        }
        log_.final_sim_time = now_;
        for (int a = 0; a < kNumAgents; ++a) {
            log_.final_models[a] = agents_[a].local_params;
            log_.best_global_acc[a] = best_global_[a];
        }
        return std::move(log_);
    }

private:
    void schedule_training(int agent, double start) {
        if (silenced_[agent] ||
            log_.aggregations_per_agent[agent] >= config_.max_aggregations_per_agent)
            return;
        const double median = config_.epoch_time_median[agent];
        const double per_epoch =
            std::exp(std::log(median) + config_.epoch_time_sigma * time_rng_[agent].normal());
        const double duration = std::max(1e-9, config_.epochs_per_round * per_epoch);
        push_event(SimEvent{start + duration, 0, SimEvent::TrainingDone, agent, -1, 0, nullptr});
    }

    void push_event(SimEvent ev) {
        ev.seq = next_seq_++;
        queue_.push(std::move(ev));
    }

    void dispatch(const SimEvent& ev) {
        if (silenced_[ev.agent]) return;
        switch (ev.kind) {
            case SimEvent::TrainingDone: {
                ModelParams local = wrap(agents_[ev.agent].local_params, arch_);
                AdamState st = AdamState::init(local.values.size(), config_.hyper);
                if (config_.epochs_per_round > 0 && !data_.agents[ev.agent].train_fit.empty())
                    train_epochs(local, data_.agents[ev.agent].train_fit, st,
                                 config_.epochs_per_round,
                                 derive_seed(config_.seed, 0x7247, ev.agent,
                                             agents_[ev.agent].round));
                agents_[ev.agent].local_params = local.values;
                apply_actions(ev.agent, on_local_training_done(agents_[ev.agent]));
                break;
            }
            case SimEvent::ModelArrive: {
                trace(TraceEventKind::Recv, ev.agent, agents_[ev.agent].round, ev.sender,
                      param_count_ * 8);
                apply_actions(ev.agent, on_model_received(agents_[ev.agent], ev.sender,
                                                          ev.sender_round, *ev.payload));
                break;
            }
            case SimEvent::SkipArrive: {
                trace(TraceEventKind::SkipRx, ev.agent, agents_[ev.agent].round, ev.sender, 0);
                (void)on_skip_received(agents_[ev.agent], ev.sender);
                break;
            }
        }
    }

    void apply_actions(int agent, const std::vector<ProtocolAction>& actions) {
        for (const auto& action : actions) {
            switch (action.kind) {
                case ProtocolAction::Kind::Broadcast: {
                    log_.upload_hashes[agent].push_back(hash_params(action.params));
                    log_.params_transmitted +=
                        static_cast<long long>(action.targets.size()) * param_count_;
                    trace(TraceEventKind::Bcast, agent, agents_[agent].round, -1,
                          static_cast<long long>(action.targets.size()) * param_count_ * 8);
                    row(agent, "BCAST");
                    auto payload = std::make_shared<const ParamVec>(action.params);
                    for (int target : action.targets) {
                        const double latency =
                            lat_rng_[agent].uniform(config_.latency_min, config_.latency_max);
                        push_event(SimEvent{now_ + latency, 0, SimEvent::ModelArrive, target,
                                            agent, agents_[agent].round, payload});
                    }
                    break;
                }
                case ProtocolAction::Kind::SendSkip: {
                    for (int target : action.targets) {
                        trace(TraceEventKind::SkipTx, agent, agents_[agent].round, target, 0);
                        const double latency =
                            lat_rng_[agent].uniform(config_.latency_min, config_.latency_max);
                        push_event(SimEvent{now_ + latency, 0, SimEvent::SkipArrive, target,
                                            agent, 0, nullptr});
                    }
                    break;
                }
                case ProtocolAction::Kind::AggregationDone: {
                    log_.aggregations_per_agent[agent] += 1;
                    total_aggregations_ += 1;
                    trace(TraceEventKind::Agg, agent, agents_[agent].round, -1, 0);
                    const ModelParams retained = wrap(agents_[agent].local_params, arch_);
                    const double global_acc = evaluate(retained, data_.union_test).accuracy;
                    const double local_acc =
                        data_.agents[agent].test.empty()
                            ? 0.0
                            : evaluate(retained, data_.agents[agent].test).accuracy;
                    last_global_[agent] = global_acc;
                    last_local_[agent] = local_acc;
                    best_global_[agent] = std::max(best_global_[agent], global_acc);
                    log_.final_global_acc[agent] = global_acc;
                    row(agent, "AGG");
                    trace(TraceEventKind::Select, agent, agents_[agent].round,
                          action.kept_global ? 1 : 0, 0);
                    row(agent, "SELECT");
                    if (config_.crash_agent == agent && config_.crash_after_aggregations > 0 &&
                        log_.aggregations_per_agent[agent] >= config_.crash_after_aggregations)
                        silenced_[agent] = true;
                    check_stop();
                    break;
                }
                case ProtocolAction::Kind::StartLocalTraining: {
                    if (!stopped_) schedule_training(agent, now_);
                    break;
                }
            }
        }
    }

    void check_stop() {
        // "reaches the target" counts the best accuracy seen so far
        bool reached;
        if (config_.stop_when_all_agents) {
            reached = true;
            for (int a = 0; a < kNumAgents; ++a) {
                const bool crashed = silenced_[a] && config_.crash_agent == a;
                if (!crashed && best_global_[a] < config_.target_accuracy) reached = false;
            }
        } else {
            reached = false;
            for (int a = 0; a < kNumAgents; ++a)
                if (best_global_[a] >= config_.target_accuracy) reached = true;
        }
        if (reached) {
            log_.converged = true;
            log_.converged_time = now_;
            log_.converged_round = total_aggregations_;
            stopped_ = true;
            return;
        }
        bool all_capped = true;
        for (int a = 0; a < kNumAgents; ++a)
            if (!silenced_[a] &&
                log_.aggregations_per_agent[a] < config_.max_aggregations_per_agent)
                all_capped = false;
        if (all_capped) stopped_ = true;
    }

    void trace(TraceEventKind kind, int agent, int round, int peer, long long bytes) {
        log_.trace.push_back(TraceEvent{now_, agent, kind, round, peer, bytes});
    }

    void row(int agent, const std::string& event) {
        log_.rows.push_back(MetricsRow{now_, agent, event, agents_[agent].round,
                                       last_global_[agent], last_local_[agent],
                                       log_.params_transmitted});
    }

    const SimConfig& config_;
    const PresetData& data_;
    Architecture arch_;
    ModelParams initial_;
    std::vector<AgentState> agents_;
    std::vector<Rng> time_rng_;
    std::vector<Rng> lat_rng_;
    std::vector<bool> silenced_;
    std::priority_queue<SimEvent, std::vector<SimEvent>, EventOrder> queue_;
    uint64_t next_seq_ = 0;
    double now_ = 0.0;
    bool stopped_ = false;
    int total_aggregations_ = 0;
    long long param_count_ = 0;
    std::map<int, double> last_global_ = {{0, -1.0}, {1, -1.0}, {2, -1.0}};
    std::map<int, double> last_local_ = {{0, -1.0}, {1, -1.0}, {2, -1.0}};
    std::map<int, double> best_global_ = {{0, -1.0}, {1, -1.0}, {2, -1.0}};
    MetricsLog log_;
};

}  // namespace

MetricsLog run_adfl(const SimConfig& config) {
    config.validate();
    const ExperimentPreset preset = preset_by_name(config.preset);
    const PresetData& data = preset_data_cached(preset, config.seed, config.data);
    AdflSim sim(config, data);
    return sim.run();
}

MetricsLog run_centralized_fl(const SimConfig& config) {
    config.validate();
    const ExperimentPreset preset = preset_by_name(config.preset);
    const PresetData& data = preset_data_cached(preset, config.seed, config.data);

    MetricsLog log;
    log.mode = "cfl";
    Architecture arch;
    ModelParams global = ModelParams::init(arch, derive_seed(config.seed, 0x1217));
    const long long param_count = static_cast<long long>(global.values.size());

    std::map<int, size_t> sizes;
    for (int a = 0; a < kNumAgents; ++a) sizes[a] = data.agents[a].data_size;
    const auto weights = mixing_weights(sizes);

    std::vector<Rng> time_rng, lat_rng;
    for (int a = 0; a < kNumAgents; ++a) {
        time_rng.emplace_back(derive_seed(config.seed, 0x7131, a));
        lat_rng.emplace_back(derive_seed(config.seed, 0x1a7e, a));
    }

    double now = 0.0;
    for (int round = 1; round <= config.max_aggregations_per_agent; ++round) {
        std::map<int, ParamVec> locals;
        double round_end = now;
        double agg_time = now;
        std::array<double, kNumAgents> up_done{};
        for (int a = 0; a < kNumAgents; ++a) {
            ModelParams local = global;
            AdamState st = AdamState::init(local.values.size(), config.hyper);
            if (config.epochs_per_round > 0 && !data.agents[a].train_fit.empty())
                train_epochs(local, data.agents[a].train_fit, st, config.epochs_per_round,
                             derive_seed(config.seed, 0x7247, a, round));
            locals[a] = local.values;
            const double per_epoch = std::exp(std::log(config.epoch_time_median[a]) +
                                              config.epoch_time_sigma * time_rng[a].normal());
            const double duration = std::max(1e-9, config.epochs_per_round * per_epoch);
            const double up = lat_rng[a].uniform(config.latency_min, config.latency_max);
            up_done[a] = now + duration + up;
            agg_time = std::max(agg_time, up_done[a]);
        }
        for (int a = 0; a < kNumAgents; ++a) {
            log.trace.push_back(
                TraceEvent{up_done[a], a, TraceEventKind::Bcast, round, -1, param_count * 8});
            log.upload_hashes[a].push_back(hash_params(locals[a]));
            log.params_transmitted += param_count;
        }
        global.values = aggregate(locals, {}, weights);
        log.trace.push_back(TraceEvent{agg_time, -1, TraceEventKind::Agg, round, -1, 0});
        log.aggregations_per_agent[-1] += 1;

        for (int a = 0; a < kNumAgents; ++a) {
            const double down = lat_rng[a].uniform(config.latency_min, config.latency_max);
            const double arrive = agg_time + down;
            log.trace.push_back(
                TraceEvent{arrive, a, TraceEventKind::Recv, round, -1, param_count * 8});
            log.params_transmitted += param_count;
            round_end = std::max(round_end, arrive);
        }
        now = round_end;

        const double acc = evaluate(global, data.union_test).accuracy;
        for (int a = 0; a < kNumAgents; ++a) {
            log.final_global_acc[a] = acc;
            log.best_global_acc[a] = std::max(log.best_global_acc[a], acc);
        }
        log.rows.push_back(
            MetricsRow{agg_time, -1, "AGG", round, acc, -1.0, log.params_transmitted});
        if (acc >= config.target_accuracy) {
            log.converged = true;
            log.converged_time = agg_time;
            log.converged_round = round;
            break;
        }
        if (now > config.max_sim_time) break;
    }
    log.final_sim_time = now;
    log.final_models[-1] = global.values;
    std::stable_sort(log.trace.begin(), log.trace.end(),
                     [](const TraceEvent& a, const TraceEvent& b) { return a.sim_time < b.sim_time; });
    return log;
}

MetricsLog run_centralized(const SimConfig& config) {
    config.validate();
    const ExperimentPreset preset = preset_by_name(config.preset);
    const PresetData& data = preset_data_cached(preset, config.seed, config.data);

    MetricsLog log;
    log.mode = "central";
    Architecture arch;
    ModelParams model = ModelParams::init(arch, derive_seed(config.seed, 0x1217));
    AdamState st = AdamState::init(model.values.size(), config.hyper);
    if (config.epochs_per_round > 0 && !data.pooled_train.empty())
        train_epochs(model, data.pooled_train, st, config.epochs_per_round,
                     derive_seed(config.seed, 0x7247, 0, 0));

    Rng time_rng(derive_seed(config.seed, 0x7131, 0));
    const double per_epoch = std::exp(std::log(config.epoch_time_median[0]) +
                                      config.epoch_time_sigma * time_rng.normal());
    const double duration = std::max(1e-9, config.epochs_per_round * per_epoch);
    const double acc = evaluate(model, data.union_test).accuracy;
    log.trace.push_back(TraceEvent{duration, -1, TraceEventKind::Agg, 1, -1, 0});
    log.rows.push_back(MetricsRow{duration, -1, "AGG", 1, acc, -1.0, 0});
    for (int a = 0; a < kNumAgents; ++a) {
        log.final_global_acc[a] = acc;
        log.best_global_acc[a] = acc;
    }
    log.converged = acc >= config.target_accuracy;
    if (log.converged) {
        log.converged_time = duration;
        log.converged_round = 1;
    }
    log.final_sim_time = duration;
    log.final_models[-1] = model.values;
    return log;
}

long long communication_overhead(const MetricsLog& log) { return log.params_transmitted; }

std::map<int, int> longest_consecutive_uploads(const MetricsLog& log) {
    std::map<int, int> result;
    for (const auto& [agent, hashes] : log.upload_hashes) {
        int best = 1, run = 1;
        for (size_t k = 1; k < hashes.size(); ++k) {
            run = hashes[k] == hashes[k - 1] ? run + 1 : 1;
            best = std::max(best, run);
        }
        result[agent] = hashes.size() >= 2 && best >= 2 ? best : 0;
    }
    return result;
}

void write_metrics_csv(const std::string& path, const MetricsLog& log) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "sim_time,agent,event,round,global_acc,local_acc,cum_params_tx\n";
    for (const auto& r : log.rows)
        out << format_double(r.sim_time) << ',' << r.agent << ',' << r.event << ',' << r.round
            << ',' << format_double(r.global_acc) << ',' << format_double(r.local_acc) << ','
            << r.cum_params_tx << "\n";
}

void write_trace_csv(const std::string& path, const MetricsLog& log) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "sim_time,agent,event,round,peer,params_bytes\n";
    for (const auto& e : log.trace)
        out << format_double(e.sim_time) << ',' << e.agent << ',' << to_string(e.kind) << ','
            << e.round << ',' << e.peer << ',' << e.params_bytes << "\n";
}

void write_summary(const std::string& path, const MetricsLog& log) {
    nlohmann::ordered_json j;
    j["mode"] = log.mode;
    j["converged"] = log.converged;
    j["converged_sim_time"] = log.converged_time;
    j["converged_round"] = log.converged_round;
    j["final_sim_time"] = log.final_sim_time;
    j["params_transmitted"] = log.params_transmitted;
    nlohmann::ordered_json aggs = nlohmann::ordered_json::object();
    for (const auto& [agent, n] : log.aggregations_per_agent)
        aggs[std::to_string(agent)] = n;
    j["aggregations"] = aggs;
    nlohmann::ordered_json accs = nlohmann::ordered_json::object();
    for (const auto& [agent, acc] : log.final_global_acc) accs[std::to_string(agent)] = acc;
    j["final_global_accuracy"] = accs;
    nlohmann::ordered_json uploads = nlohmann::ordered_json::object();
    for (const auto& [agent, n] : longest_consecutive_uploads(log))
        uploads[std::to_string(agent)] = n;
    j["longest_consecutive_uploads"] = uploads;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << j.dump(2) << "\n";
}

}  // namespace adfl
