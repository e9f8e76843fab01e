#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "adflsim/errors.hpp"
#include "adflsim/harness.hpp"

using namespace adfl;

namespace {

SimConfig fast_config(const std::string& preset) {
    SimConfig c;
    c.preset = preset;
    c.seed = 11;
    c.epochs_per_round = 2;
    c.hyper.batch = 32;
    c.max_aggregations_per_agent = 4;
    c.target_accuracy = 1.0;  // unreachable on noisy data; runs to the cap
    c.data.noise_rel = 0.005;
    c.data.n_points = 120;
    return c;
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double first_agg_time(const MetricsLog& log, int agent) {
    for (const auto& e : log.trace)
        if (e.agent == agent && e.kind == TraceEventKind::Agg) return e.sim_time;
    return -1.0;
}

int count_events(const MetricsLog& log, TraceEventKind kind, int agent = -2) {
    int n = 0;
    for (const auto& e : log.trace)
        if (e.kind == kind && (agent == -2 || e.agent == agent)) ++n;
    return n;
}

}  // namespace

TEST_CASE("presets reproduce the published dataset tables") {
    const auto sim6 = preset_by_name("sim-6");
    for (int a = 0; a < kNumAgents; ++a)
        for (int c = 0; c < kNumFaultKinds; ++c) CHECK(sim6.counts[a][c] == 2976);

    const auto sim1 = preset_by_name("sim-1");
    CHECK(sim1.counts[0] == std::array<int, 4>{2976, 2976, 0, 0});
    CHECK(sim1.counts[1] == std::array<int, 4>{2976, 0, 2976, 0});
    CHECK(sim1.counts[2] == std::array<int, 4>{2976, 0, 0, 2976});

    const auto sim4 = preset_by_name("sim-4");
    CHECK(sim4.counts[0] == std::array<int, 4>{2976, 2976, 2976, 2976});
    CHECK(sim4.counts[1] == std::array<int, 4>{2976, 0, 2976, 0});
    CHECK(sim4.counts[2] == std::array<int, 4>{2976, 0, 0, 2976});

    const auto real5 = preset_by_name("real-5");
    CHECK(real5.counts[0] == std::array<int, 4>{100, 100, 100, 0});
    CHECK(real5.counts[1] == std::array<int, 4>{100, 0, 100, 100});
    CHECK(real5.counts[2] == std::array<int, 4>{100, 100, 0, 100});

    CHECK(preset_by_name("sim-2q").quarter);
    CHECK(preset_by_name("sim-2q").counts[0][0] == 744);
    CHECK_THROWS_AS(preset_by_name("sim-7"), ConfigError);
    CHECK_THROWS_AS(preset_by_name("bogus"), ConfigError);
}

TEST_CASE("preset data splits 7:3 per class with a held-out validation part") {
    const auto preset = preset_by_name("sim-1q");
    const PresetData& data = preset_data_cached(preset, 5, DataConfig{0.005, 120, true, 0.2, 0});
    // agent 0 holds normal + short: 744 each, 520 train / 224 test per class
    CHECK(data.agents[0].train_all.size() == 2 * 520);
    CHECK(data.agents[0].test.size() == 2 * 224);
    CHECK(data.agents[0].data_size == 2 * 744);
    const size_t n_val = static_cast<size_t>(0.2 * data.agents[0].train_all.size());
    CHECK(data.agents[0].val.size() == n_val);
    CHECK(data.agents[0].train_fit.size() == data.agents[0].train_all.size() - n_val);
    // union test covers all four classes once
    CHECK(data.union_test.size() == 4 * 224);
    CHECK(data.pooled_train.size() == 4 * 520);
}

TEST_CASE("adfl run is deterministic at the byte level") {
    SimConfig c = fast_config("sim-1q");
    const MetricsLog a = run_adfl(c);
    const MetricsLog b = run_adfl(c);
    write_metrics_csv("harness_a.csv", a);
    write_metrics_csv("harness_b.csv", b);
    write_trace_csv("harness_ta.csv", a);
    write_trace_csv("harness_tb.csv", b);
    CHECK(file_bytes("harness_a.csv") == file_bytes("harness_b.csv"));
    CHECK(file_bytes("harness_ta.csv") == file_bytes("harness_tb.csv"));
    for (const auto& f : {"harness_a.csv", "harness_b.csv", "harness_ta.csv", "harness_tb.csv"})
        std::remove(f);
    CHECK(a.params_transmitted == b.params_transmitted);
}

TEST_CASE("adfl trace satisfies causality, conservation and cohort exactness") {
    SimConfig c = fast_config("sim-1q");
    const MetricsLog log = run_adfl(c);

    // time ordering
    for (size_t k = 1; k < log.trace.size(); ++k)
        CHECK(log.trace[k].sim_time >= log.trace[k - 1].sim_time);

    // causality: a RECV from s is preceded by a BCAST of s
    for (size_t k = 0; k < log.trace.size(); ++k) {
        const auto& e = log.trace[k];
        if (e.kind != TraceEventKind::Recv) continue;
        bool found = false;
        for (size_t j = 0; j < k; ++j)
            if (log.trace[j].kind == TraceEventKind::Bcast && log.trace[j].agent == e.peer &&
                log.trace[j].sim_time <= e.sim_time)
                found = true;
        CHECK(found);
    }

    // conservation: every broadcast ships (N-1) * P scalars
    const long long n_bcast = count_events(log, TraceEventKind::Bcast);
    const long long param_count = 821;
    CHECK(log.params_transmitted == n_bcast * (kNumAgents - 1) * param_count);
    CHECK(communication_overhead(log) == log.params_transmitted);

    // |cohort| = L: every aggregation skips exactly N - L peers
    const int n_agg = count_events(log, TraceEventKind::Agg);
    const int n_skip = count_events(log, TraceEventKind::SkipTx);
    CHECK(n_skip == n_agg * (kNumAgents - c.threshold_L));

    // metrics rows nondecreasing in time and counters
    for (size_t k = 1; k < log.rows.size(); ++k) {
        CHECK(log.rows[k].sim_time >= log.rows[k - 1].sim_time);
        CHECK(log.rows[k].cum_params_tx >= log.rows[k - 1].cum_params_tx);
    }
}

TEST_CASE("slow agent aggregates late but still participates") {
    SimConfig c = fast_config("sim-1q");
    c.epoch_time_median = {1.0, 1.0, 3.0};
    const MetricsLog log = run_adfl(c);
    const double t0 = first_agg_time(log, 0);
    const double t1 = first_agg_time(log, 1);
    const double t2 = first_agg_time(log, 2);
    REQUIRE(t2 >= 0.0);
    CHECK(t2 > t0);
    CHECK(t2 > t1);
    CHECK(log.aggregations_per_agent.at(2) >= 1);
    // the slow agent keeps broadcasting trained models of its own
    CHECK(count_events(log, TraceEventKind::Bcast, 2) >= 1);
}

TEST_CASE("crashed agent goes silent while the others keep aggregating") {
    SimConfig c = fast_config("sim-1q");
    c.max_aggregations_per_agent = 6;
    c.crash_agent = 0;
    c.crash_after_aggregations = 2;
    const MetricsLog log = run_adfl(c);
    CHECK(log.aggregations_per_agent.at(0) == 2);
    CHECK(log.aggregations_per_agent.at(1) > 2);
    CHECK(log.aggregations_per_agent.at(2) > 2);

    // aggregation times of the survivors keep strictly increasing after the crash
    std::vector<double> b_times, c_times;
    for (const auto& e : log.trace)
        if (e.kind == TraceEventKind::Agg) {
            if (e.agent == 1) b_times.push_back(e.sim_time);
            if (e.agent == 2) c_times.push_back(e.sim_time);
        }
    for (size_t k = 1; k < b_times.size(); ++k) CHECK(b_times[k] > b_times[k - 1]);
    for (size_t k = 1; k < c_times.size(); ++k) CHECK(c_times[k] > c_times[k - 1]);
}

TEST_CASE("L equal to N with uniform timing matches the synchronous schedule") {
    SimConfig c = fast_config("sim-6q");
    c.threshold_L = kNumAgents;
    c.epoch_time_sigma = 0.0;
    c.latency_min = c.latency_max = 0.1;
    c.max_aggregations_per_agent = 3;
    const MetricsLog adfl_log = run_adfl(c);
    const MetricsLog cfl_log = run_centralized_fl(c);
    for (int a = 0; a < kNumAgents; ++a)
        CHECK(adfl_log.aggregations_per_agent.at(a) == 3);
    CHECK(cfl_log.aggregations_per_agent.at(-1) == 3);
}

TEST_CASE("centralized fl rounds track the slowest agent") {
    SimConfig c = fast_config("sim-1q");
    c.epoch_time_median = {1.0, 1.0, 10.0};
    c.epoch_time_sigma = 0.0;
    c.max_aggregations_per_agent = 2;
    const MetricsLog log = run_centralized_fl(c);
    REQUIRE(!log.rows.empty());
    // first aggregation cannot happen before the slow agent finishes 2 epochs
    CHECK(log.rows.front().sim_time >= 2 * 10.0);
    // per round: 2 * N * P parameters
    CHECK(log.params_transmitted == 2LL * 2 * kNumAgents * 821);
}

TEST_CASE("centralized fl is deterministic in the seed") {
    SimConfig c = fast_config("sim-1q");
    c.max_aggregations_per_agent = 2;
    const MetricsLog a = run_centralized_fl(c);
    const MetricsLog b = run_centralized_fl(c);
    REQUIRE(a.rows.size() == b.rows.size());
    for (size_t k = 0; k < a.rows.size(); ++k) {
        CHECK(a.rows[k].global_acc == b.rows[k].global_acc);
        CHECK(a.rows[k].sim_time == b.rows[k].sim_time);
    }
}

TEST_CASE("untrained centralized baseline sits at chance level") {
    SimConfig c = fast_config("sim-6q");
    c.epochs_per_round = 0;
    const MetricsLog log = run_centralized(c);
    REQUIRE(!log.rows.empty());
    CHECK(log.rows.front().global_acc == doctest::Approx(0.25).epsilon(0.45));
}

TEST_CASE("longest consecutive upload counting") {
    MetricsLog log;
    log.upload_hashes[0] = {1, 2, 3, 4};        // changes every time
    log.upload_hashes[1] = {7, 7, 7, 2};        // three in a row
    log.upload_hashes[2] = {5};                 // single upload
    log.upload_hashes[3] = {1, 1, 2, 2, 2, 3};  // runs of 2 and 3
    const auto longest = longest_consecutive_uploads(log);
    CHECK(longest.at(0) == 0);
    CHECK(longest.at(1) == 3);
    CHECK(longest.at(2) == 0);
    CHECK(longest.at(3) == 3);
}

TEST_CASE("config validation names bad settings") {
    SimConfig c;
    c.threshold_L = 9;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = SimConfig{};
    c.latency_min = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = SimConfig{};
    c.preset = "nope";
    CHECK_THROWS_AS(c.validate(), ConfigError);
}
