#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "adflsim/csv.hpp"
#include "adflsim/errors.hpp"
#include "adflsim/pvsim.hpp"

using namespace adfl;

namespace {

double max_power(const IVCurve& c) {
    double best = 0.0;
    for (const auto& [v, i] : c.points) best = std::max(best, v * i);
    return best;
}

double fill_factor(const IVCurve& c) { return max_power(c) / (c.v_oc() * c.i_sc()); }

// dI/dV magnitude exceeding 5x the curve median marks a shading step.
bool has_current_step(const IVCurve& c) {
    std::vector<double> slopes;
    for (size_t k = 1; k < c.points.size(); ++k) {
        const double dv = c.points[k].first - c.points[k - 1].first;
        if (dv <= 0.0) continue;
        slopes.push_back(std::abs((c.points[k].second - c.points[k - 1].second) / dv));
    }
    std::vector<double> sorted = slopes;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[sorted.size() / 2];
    return std::any_of(slopes.begin(), slopes.end(),
                       [&](double s) { return s > 5.0 * median; });
}

}  // namespace

TEST_CASE("module current at short circuit matches the datasheet") {
    const ModuleParams p;
    const double i_sc = module_current(0.0, 25.0, 1000.0, p);
    CHECK(i_sc == doctest::Approx(6.03).epsilon(0.02));
}

TEST_CASE("module current vanishes at the open-circuit voltage") {
    const ModuleParams p;
    const double i = module_current(21.5, 25.0, 1000.0, p);
    CHECK(std::abs(i) < 0.05);
}

TEST_CASE("zero irradiance yields no photocurrent") {
    const ModuleParams p;
    CHECK(module_current(0.0, 25.0, 0.0, p) <= 0.0);
    CHECK(module_current(0.1, 25.0, 0.0, p) <= 0.0);
}

TEST_CASE("module power peaks near the datasheet maximum power point") {
    const ModuleParams p;
    double best = 0.0;
    for (double v = 0.0; v <= 21.5; v += 0.01)
        best = std::max(best, v * module_current(v, 25.0, 1000.0, p));
    CHECK(best == doctest::Approx(99.925).epsilon(0.02));
}

TEST_CASE("module voltage inversion is consistent with the forward solve") {
    const ModuleParams p;
    for (double i : {0.0, 1.0, 3.0, 5.9}) {
        const double v = module_voltage_at_current(i, 25.0, 1000.0, p);
        CHECK(module_current(v, 25.0, 1000.0, p) == doctest::Approx(i).epsilon(1e-6));
    }
}

TEST_CASE("normal array reaches the module maximum power times module count") {
    const IVCurve c = array_iv_curve(ArrayTopology{}, FaultSpec::normal(), 25.0, 1000.0, 400);
    CHECK(max_power(c) == doctest::Approx(18 * 99.925).epsilon(0.03));
    // endpoints: (0, I_sc) and (V_oc, 0)
    CHECK(c.points.front().first == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(std::abs(c.points.back().second) < 1e-3);
}

TEST_CASE("generated curves are monotone and anchored at both axes") {
    for (const auto& fault : {FaultSpec::normal(), FaultSpec::short_circuit(),
                              FaultSpec::degradation(), FaultSpec::partial_shading()}) {
        const IVCurve c = array_iv_curve(ArrayTopology{}, fault, 20.0, 600.0, 400);
        REQUIRE(c.points.size() == 400);
        for (size_t k = 1; k < c.points.size(); ++k) {
            CHECK(c.points[k].first >= c.points[k - 1].first);
            CHECK(c.points[k].second <= c.points[k - 1].second + 1e-6);
        }
        CHECK(std::abs(c.points.front().first) < 1e-6);
        CHECK(std::abs(c.points.back().second) < 1e-3);
    }
}

TEST_CASE("partial shading produces a stepped curve") {
    const IVCurve shaded =
        array_iv_curve(ArrayTopology{}, FaultSpec::partial_shading(0.5, 3), 20.0, 600.0, 400);
    CHECK(has_current_step(shaded));

    // Away from the open-circuit knee the shaded curve is far spikier than
    // the normal one; the step lives in the interior.
    auto interior_ratio = [](const IVCurve& c) {
        std::vector<double> slopes;
        for (size_t k = 1; k < c.points.size(); ++k) {
            const double dv = c.points[k].first - c.points[k - 1].first;
            if (dv <= 0.0 || c.points[k].first > 0.8 * c.v_oc()) continue;
            slopes.push_back(std::abs((c.points[k].second - c.points[k - 1].second) / dv));
        }
        std::vector<double> sorted = slopes;
        std::sort(sorted.begin(), sorted.end());
        return sorted.back() / sorted[sorted.size() / 2];
    };
    const IVCurve normal = array_iv_curve(ArrayTopology{}, FaultSpec::normal(), 20.0, 600.0, 400);
    CHECK(interior_ratio(shaded) > 2.0 * interior_ratio(normal));
}

TEST_CASE("degradation keeps the short-circuit current but lowers the fill factor") {
    const IVCurve normal = array_iv_curve(ArrayTopology{}, FaultSpec::normal(), 20.0, 600.0, 400);
    const IVCurve degraded =
        array_iv_curve(ArrayTopology{}, FaultSpec::degradation(3.0), 20.0, 600.0, 400);
    CHECK(degraded.i_sc() == doctest::Approx(normal.i_sc()).epsilon(0.01));
    CHECK(fill_factor(degraded) < fill_factor(normal));
}

TEST_CASE("short circuit lowers the open-circuit voltage") {
    const IVCurve normal = array_iv_curve(ArrayTopology{}, FaultSpec::normal(), 20.0, 600.0, 400);
    const IVCurve shorted =
        array_iv_curve(ArrayTopology{}, FaultSpec::short_circuit(), 20.0, 600.0, 400);
    CHECK(shorted.v_oc() < normal.v_oc());
}

TEST_CASE("short-circuit current scales linearly with irradiance") {
    const IVCurve half = array_iv_curve(ArrayTopology{}, FaultSpec::normal(), 25.0, 500.0, 100);
    const IVCurve full = array_iv_curve(ArrayTopology{}, FaultSpec::normal(), 25.0, 1000.0, 100);
    CHECK(half.i_sc() == doctest::Approx(0.5 * full.i_sc()).epsilon(0.01));
}

TEST_CASE("grid cardinality matches the sweep definition") {
    GridSpec grid;
    CHECK(grid.temps().size() == 31);
    CHECK(grid.irradiances().size() == 96);
    CHECK(grid.cell_count() == 2976);
}

TEST_CASE("single-cell grid yields a single curve") {
    GridSpec grid;
    grid.temp_lo = grid.temp_hi = 25.0;
    grid.irr_lo = grid.irr_hi = 1000.0;
    const auto curves = generate_dataset(grid, {FaultSpec::normal()}, 7, 0.0);
    CHECK(curves.size() == 1);
}

TEST_CASE("dataset generation is deterministic in the seed") {
    GridSpec grid;
    grid.temp_lo = 20.0;
    grid.temp_hi = 24.0;
    grid.irr_lo = 400.0;
    grid.irr_hi = 500.0;
    grid.irr_step = 50.0;
    const auto faults = {FaultSpec::normal(), FaultSpec::partial_shading()};
    const auto a = generate_dataset(grid, faults, 42, 0.005, ArrayTopology{}, ModuleParams{}, 80, 2);
    const auto b = generate_dataset(grid, faults, 42, 0.005, ArrayTopology{}, ModuleParams{}, 80, 1);
    REQUIRE(a.size() == b.size());
    for (size_t k = 0; k < a.size(); ++k) {
        REQUIRE(a[k].points.size() == b[k].points.size());
        for (size_t j = 0; j < a[k].points.size(); ++j) {
            CHECK(a[k].points[j].first == b[k].points[j].first);
            CHECK(a[k].points[j].second == b[k].points[j].second);
        }
    }
    const auto c = generate_dataset(grid, faults, 43, 0.005, ArrayTopology{}, ModuleParams{}, 80, 2);
    bool any_diff = false;
    for (size_t k = 0; k < a.size() && !any_diff; ++k)
        for (size_t j = 0; j < a[k].points.size(); ++j)
            if (a[k].points[j].second != c[k].points[j].second) {
                any_diff = true;
                break;
            }
    CHECK(any_diff);
}

TEST_CASE("curves round-trip through csv exactly") {
    GridSpec grid;
    grid.temp_lo = grid.temp_hi = 25.0;
    grid.irr_lo = grid.irr_hi = 600.0;
    const auto curves =
        generate_dataset(grid, {FaultSpec::normal(), FaultSpec::degradation()}, 5, 0.005,
                         ArrayTopology{}, ModuleParams{}, 60);
    const std::string path = "pvsim_roundtrip.csv";
    write_curves_csv(path, curves);
    const auto parsed = read_curves_csv(path);
    std::remove(path.c_str());
    REQUIRE(parsed.size() == curves.size());
    for (size_t k = 0; k < curves.size(); ++k) {
        CHECK(parsed[k].label == curves[k].label);
        CHECK(parsed[k].temperature == curves[k].temperature);
        for (size_t j = 0; j < curves[k].points.size(); ++j) {
            CHECK(parsed[k].points[j].first == curves[k].points[j].first);
            CHECK(parsed[k].points[j].second == curves[k].points[j].second);
        }
    }
}

TEST_CASE("invalid configurations are rejected") {
    CHECK_THROWS_AS(array_iv_curve(ArrayTopology{}, FaultSpec::normal(), 25.0, 1000.0, 10),
                    ConfigError);
    FaultSpec bad = FaultSpec::partial_shading(1.5);
    CHECK_THROWS_AS(array_iv_curve(ArrayTopology{}, bad, 25.0, 1000.0, 100), ConfigError);
    ModuleParams p;
    p.r_shunt = -1.0;
    CHECK_THROWS_AS(array_iv_curve(ArrayTopology{}, FaultSpec::normal(), 25.0, 1000.0, 100, p),
                    ConfigError);
}
