#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "adflsim/errors.hpp"
#include "adflsim/protocol.hpp"
#include "adflsim/rng.hpp"

using namespace adfl;

namespace {

AgentState make_agent(int id, std::vector<int> peers, int threshold,
                      std::map<int, size_t> sizes) {
    AgentState s;
    s.agent_id = id;
    s.peers = std::move(peers);
    s.threshold_L = threshold;
    s.cohort_data_sizes = std::move(sizes);
    s.data_size = s.cohort_data_sizes.at(id);
    s.validation_accuracy = [](const ParamVec&) { return 0.0; };
    return s;
}

bool has_action(const std::vector<ProtocolAction>& actions, ProtocolAction::Kind kind) {
    return std::any_of(actions.begin(), actions.end(),
                       [&](const auto& a) { return a.kind == kind; });
}

const ProtocolAction& get_action(const std::vector<ProtocolAction>& actions,
                                 ProtocolAction::Kind kind) {
    const auto it = std::find_if(actions.begin(), actions.end(),
                                 [&](const auto& a) { return a.kind == kind; });
    REQUIRE(it != actions.end());
    return *it;
}

}  // namespace

TEST_CASE("mixing weights follow data sizes") {
    const auto equal = mixing_weights({{0, 100}, {1, 100}, {2, 100}});
    for (const auto& [agent, w] : equal) CHECK(w == doctest::Approx(1.0 / 3).epsilon(1e-15));

    const auto skewed = mixing_weights({{0, 1}, {1, 3}});
    CHECK(skewed.at(0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(skewed.at(1) == doctest::Approx(0.75).epsilon(1e-15));

    // experiment-1 style local totals: two classes of 100 samples each
    const auto exp1 = mixing_weights({{0, 200}, {1, 200}, {2, 200}});
    double sum = 0.0;
    for (const auto& [agent, w] : exp1) sum += w;
    CHECK(std::abs(sum - 1.0) < 1e-12);
    CHECK(exp1.at(0) == doctest::Approx(1.0 / 3).epsilon(1e-15));

    CHECK_THROWS_AS(mixing_weights({}), EmptyCohort);
    CHECK_THROWS_AS(mixing_weights({{0, 0}}), EmptyCohort);
}

TEST_CASE("aggregate evaluates the two-part weighted sum") {
    const std::map<int, ParamVec> latest = {{0, {1.0}}, {1, {2.0}}};
    const std::map<int, ParamVec> stale = {{2, {4.0}}};
    const auto weights = mixing_weights({{0, 1}, {1, 1}, {2, 2}});
    const ParamVec g = aggregate(latest, stale, weights);
    REQUIRE(g.size() == 1);
    CHECK(g[0] == doctest::Approx(2.75).epsilon(1e-15));
}

TEST_CASE("aggregate fixes identical models and reduces to the mean when all fresh") {
    const ParamVec w = {0.5, -1.25, 3.0};
    const auto weights = mixing_weights({{0, 5}, {1, 7}, {2, 11}});
    const ParamVec same = aggregate({{0, w}, {1, w}, {2, w}}, {}, weights);
    for (size_t k = 0; k < w.size(); ++k) CHECK(same[k] == doctest::Approx(w[k]).epsilon(1e-15));

    const auto eq = mixing_weights({{0, 4}, {1, 4}, {2, 4}});
    const ParamVec mean = aggregate({{0, {3.0}}, {1, {6.0}}, {2, {9.0}}}, {}, eq);
    CHECK(mean[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("aggregate validates lengths and coverage") {
    const auto weights = mixing_weights({{0, 1}, {1, 1}});
    CHECK_THROWS_AS(aggregate({{0, {1.0, 2.0}}, {1, {1.0}}}, {}, weights), LengthMismatch);
    CHECK_THROWS_AS(aggregate({{0, {1.0}}}, {{0, {2.0}}}, weights), LengthMismatch);
    CHECK_THROWS_AS(aggregate({{0, {1.0}}}, {}, weights), LengthMismatch);
    CHECK_THROWS_AS(aggregate({}, {}, weights), EmptyCohort);
}

TEST_CASE("training completion broadcasts and waits below the threshold") {
    AgentState a = make_agent(0, {1, 2}, 2, {{0, 10}, {1, 10}, {2, 10}});
    bootstrap(a, {1.0, 1.0});
    const auto actions = on_local_training_done(a);
    REQUIRE(actions.size() == 1);
    CHECK(actions[0].kind == ProtocolAction::Kind::Broadcast);
    CHECK(actions[0].targets == std::vector<int>{1, 2});
    CHECK(a.training_complete);
    CHECK(a.round == 0);
}

TEST_CASE("threshold trigger aggregates with stale weights and skips the rest") {
    AgentState a = make_agent(0, {1, 2}, 2, {{0, 10}, {1, 10}, {2, 10}});
    bootstrap(a, {3.0});
    a.local_params = {1.0};  // trained local model
    (void)on_local_training_done(a);
    const auto actions = on_model_received(a, 1, 0, ParamVec{2.0});
    REQUIRE(has_action(actions, ProtocolAction::Kind::AggregationDone));
    const auto& skip = get_action(actions, ProtocolAction::Kind::SendSkip);
    CHECK(skip.targets == std::vector<int>{2});
    const auto& done = get_action(actions, ProtocolAction::Kind::AggregationDone);
    // fresh {0:1, 1:2} and stale {2:3 (bootstrap)} at equal weights
    CHECK(done.params[0] == doctest::Approx((1.0 + 2.0 + 3.0) / 3.0).epsilon(1e-12));
    CHECK(has_action(actions, ProtocolAction::Kind::StartLocalTraining));
    CHECK(a.round == 1);
    CHECK(a.receive_queue.empty());
    CHECK_FALSE(a.training_complete);
}

TEST_CASE("aggregation fires immediately when the queue already holds L-1 models") {
    AgentState a = make_agent(0, {1, 2}, 2, {{0, 10}, {1, 10}, {2, 10}});
    bootstrap(a, {0.0});
    (void)on_model_received(a, 1, 0, ParamVec{5.0});  // arrives before training ends
    CHECK(a.receive_queue.size() == 1);
    const auto actions = on_local_training_done(a);
    CHECK(has_action(actions, ProtocolAction::Kind::Broadcast));
    CHECK(has_action(actions, ProtocolAction::Kind::AggregationDone));
}

TEST_CASE("latest model from the same sender wins without duplicating the queue") {
    AgentState a = make_agent(0, {1, 2, 3}, 3, {{0, 1}, {1, 1}, {2, 1}, {3, 1}});
    bootstrap(a, {0.0});
    (void)on_model_received(a, 1, 0, ParamVec{1.0});
    (void)on_model_received(a, 1, 1, ParamVec{9.0});
    REQUIRE(a.receive_queue.size() == 1);
    CHECK(a.receive_queue[0].params[0] == 9.0);
    CHECK(a.receive_queue[0].sender_round == 1);
}

TEST_CASE("queue overflow keeps the cohort at exactly L and skips the extras") {
    AgentState a = make_agent(0, {1, 2, 3}, 2, {{0, 1}, {1, 1}, {2, 1}, {3, 1}});
    bootstrap(a, {0.0});
    (void)on_model_received(a, 2, 0, ParamVec{2.0});
    (void)on_model_received(a, 3, 0, ParamVec{3.0});
    const auto actions = on_local_training_done(a);
    const auto& skip = get_action(actions, ProtocolAction::Kind::SendSkip);
    // agent 2 arrived first, so the cohort is {0, 2}; agents 1 and 3 get skips
    CHECK(skip.targets == std::vector<int>{1, 3});
    CHECK(a.receive_queue.empty());
}

TEST_CASE("L=1 aggregates alone against the stale cache every round") {
    AgentState a = make_agent(0, {1, 2}, 1, {{0, 2}, {1, 1}, {2, 1}});
    bootstrap(a, {4.0});
    a.local_params = {8.0};
    const auto actions = on_local_training_done(a);
    CHECK(has_action(actions, ProtocolAction::Kind::AggregationDone));
    const auto& skip = get_action(actions, ProtocolAction::Kind::SendSkip);
    CHECK(skip.targets == std::vector<int>{1, 2});
    const auto& done = get_action(actions, ProtocolAction::Kind::AggregationDone);
    CHECK(done.params[0] == doctest::Approx(0.5 * 8.0 + 0.25 * 4.0 + 0.25 * 4.0).epsilon(1e-12));
}

TEST_CASE("first aggregation keeps the global model regardless of accuracy") {
    AgentState a = make_agent(0, {1}, 1, {{0, 1}, {1, 1}});
    bootstrap(a, {0.0});
    a.validation_accuracy = [](const ParamVec& p) { return p[0] > 0.5 ? 0.2 : 0.9; };
    // local (0.0) evaluates to 0.9, global (1.0) to 0.2; first time keeps global
    bool kept = false;
    const ParamVec chosen = select_model({1.0}, {0.0}, a, nullptr, nullptr, &kept);
    CHECK(kept);
    CHECK(chosen[0] == 1.0);
}

TEST_CASE("later selections compare validation accuracy with ties to global") {
    AgentState a = make_agent(0, {1}, 1, {{0, 1}, {1, 1}});
    bootstrap(a, {0.0});
    a.has_aggregated_once = true;
    a.validation_accuracy = [](const ParamVec& p) { return p[0]; };
    double g = 0.0, l = 0.0;
    bool kept = false;
    ParamVec chosen = select_model({0.99}, {0.62}, a, &g, &l, &kept);
    CHECK(kept);
    CHECK(chosen[0] == 0.99);
    CHECK(g == doctest::Approx(0.99));
    CHECK(l == doctest::Approx(0.62));

    chosen = select_model({0.3}, {0.62}, a, &g, &l, &kept);
    CHECK_FALSE(kept);
    CHECK(chosen[0] == 0.62);

    chosen = select_model({0.5}, {0.5}, a, &g, &l, &kept);
    CHECK(kept);  // exact tie goes to the global model
}

TEST_CASE("messages from unknown senders are rejected") {
    AgentState a = make_agent(0, {1}, 2, {{0, 1}, {1, 1}});
    bootstrap(a, {0.0});
    CHECK_THROWS_AS(on_model_received(a, 7, 0, ParamVec{1.0}), UnknownSender);
    CHECK_THROWS_AS(on_skip_received(a, 7), UnknownSender);
}

TEST_CASE("randomized aggregations conserve weight and stay in the convex hull") {
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const int n_agents = rng.uniform_int(2, 5);
        const int threshold = rng.uniform_int(1, n_agents);
        const int dim = rng.uniform_int(1, 10);

        std::map<int, size_t> sizes;
        for (int a = 0; a < n_agents; ++a)
            sizes[a] = static_cast<size_t>(rng.uniform_int(1, 500));
        const auto weights = mixing_weights(sizes);
        double wsum = 0.0;
        for (const auto& [agent, w] : weights) wsum += w;
        CHECK(std::abs(wsum - 1.0) < 1e-12);

        std::map<int, ParamVec> models;
        for (int a = 0; a < n_agents; ++a) {
            ParamVec p(dim);
            for (auto& v : p) v = rng.uniform(-5.0, 5.0);
            models[a] = std::move(p);
        }
        std::map<int, ParamVec> latest, stale;
        int placed = 0;
        for (int a = 0; a < n_agents; ++a) {
            if (placed < threshold)
                latest[a] = models[a];
            else
                stale[a] = models[a];
            ++placed;
        }
        const ParamVec g = aggregate(latest, stale, weights);
        CHECK(static_cast<int>(latest.size()) == threshold);
        for (int d = 0; d < dim; ++d) {
            double lo = 1e300, hi = -1e300;
            for (const auto& [agent, p] : models) {
                lo = std::min(lo, p[d]);
                hi = std::max(hi, p[d]);
            }
            CHECK(g[d] >= lo - 1e-12);
            CHECK(g[d] <= hi + 1e-12);
        }
    }
}
