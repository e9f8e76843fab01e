#include "adflsim/pvsim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <thread>

#include "adflsim/csv.hpp"
#include "adflsim/errors.hpp"
#include "adflsim/rng.hpp"

namespace adfl {

namespace {

constexpr double kBoltzmannOverCharge = 8.617333262e-5;  // V/K
constexpr double kStcTemp = 25.0;
constexpr double kStcIrradiance = 1000.0;

// Coefficients of the implicit diode equation at one (T, G) operating point:
//   I = i_l - i_0*expm1((V + I*rs)/vt_mod) - (V + I*rs)/rsh
struct DiodeCoeffs {
    double i_l;
    double i_0;
    double vt_mod;
    double rs;
    double rsh;
};

double thermal_voltage_module(double temp_c, const ModuleParams& p) {
    const double t_kelvin = temp_c + 273.15;
    return p.ideality * p.cells_per_module * kBoltzmannOverCharge * t_kelvin;
}

double photocurrent(double temp_c, double irradiance, const ModuleParams& p) {
    const double temp_scale = 1.0 + p.temp_coeff_isc / 100.0 * (temp_c - kStcTemp);
    return p.photocurrent_stc * (irradiance / kStcIrradiance) * temp_scale;
}

// Saturation current that pins the open-circuit voltage to the published
// temperature coefficient; normalized so the STC value equals the datasheet
// figure exactly.
double saturation_current_anchor(double temp_c, const ModuleParams& p) {
    const double v_oc = p.v_oc_stc * (1.0 + p.temp_coeff_voc / 100.0 * (temp_c - kStcTemp));
    const double i_l_full = photocurrent(temp_c, kStcIrradiance, p);
    const double vt = thermal_voltage_module(temp_c, p);
    return (i_l_full - v_oc / p.r_shunt) / std::expm1(v_oc / vt);
}

double saturation_current(double temp_c, const ModuleParams& p) {
    return p.diode_sat_current_stc * saturation_current_anchor(temp_c, p) /
           saturation_current_anchor(kStcTemp, p);
}

DiodeCoeffs diode_coeffs(double temp_c, double irradiance, const ModuleParams& p) {
    return DiodeCoeffs{photocurrent(temp_c, irradiance, p), saturation_current(temp_c, p),
                       thermal_voltage_module(temp_c, p), p.r_series, p.r_shunt};
}

// f(I; V): positive when I is below the module current at V, negative above.
double diode_residual(const DiodeCoeffs& c, double v, double i) {
    const double u = v + i * c.rs;
    return c.i_l - c.i_0 * std::expm1(u / c.vt_mod) - u / c.rsh - i;
}

double diode_residual_di(const DiodeCoeffs& c, double v, double i) {
    const double u = v + i * c.rs;
    return -c.i_0 * std::exp(u / c.vt_mod) * c.rs / c.vt_mod - c.rs / c.rsh - 1.0;
}

// Damped Newton with a maintained sign bracket; the residual is strictly
// decreasing in I, so the bracket never collapses on the wrong side.
double solve_module_current(const DiodeCoeffs& c, double v) {
    double lo = -(std::max(v, 0.0) + 5.0) / c.rs - c.i_l - 1.0;  // residual > 0
    double hi = c.i_l + std::max(0.0, -v) / c.rsh + 1.0;         // residual < 0
    double x = std::clamp(c.i_l - (v + c.i_l * c.rs) / c.rsh, lo, hi);
    for (int iter = 0; iter < 200; ++iter) {
        const double fx = diode_residual(c, v, x);
        if (std::abs(fx) < 1e-12) return x;
        if (fx > 0.0)
            lo = x;
        else
            hi = x;
        const double dfx = diode_residual_di(c, v, x);
        double next = x - fx / dfx;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        x = next;
    }
    throw NonConvergence("module current solve did not converge at V=" + format_double(v));
}

// Module voltage at current i. The sign of diode_residual(c, v, i) equals
// the sign of (module_current(v) - i), so the monotone bracket on
// module_current can be probed with one exponential per step; Newton
// proposals inside the bracket give superlinear convergence and a forced
// bisection step every other iteration keeps the bracket shrinking.
struct VoltageSolution {
    double v;
    double dv_di;  // slope of the module voltage w.r.t. current
};

VoltageSolution solve_module_voltage_full(const DiodeCoeffs& c, double i, double v_oc_stc) {
    double lo = -(std::max(0.0, i - c.i_l) + 0.5) * c.rsh - 5.0;
    double hi = 1.25 * v_oc_stc + 8.0;
    double x = (i <= c.i_l) ? c.vt_mod * std::log((c.i_l - i) / c.i_0 + 1.0) - i * c.rs
                            : -(i - c.i_l) * c.rsh - i * c.rs;
    if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);
    double e = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
        const double u = x + i * c.rs;
        e = std::exp(u / c.vt_mod);
        const double g = c.i_l - c.i_0 * (e - 1.0) - u / c.rsh - i;
        if (std::abs(g) < 1e-11 && iter > 0) break;
        if (g >= 0.0)
            lo = x;
        else
            hi = x;
        const double dg = -c.i_0 * e / c.vt_mod - 1.0 / c.rsh;
        double next = (iter % 8 == 7) ? 0.5 * (lo + hi) : x - g / dg;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (hi - lo < 1e-12) break;
        x = next;
    }
    const double df_dv = -c.i_0 * e / c.vt_mod - 1.0 / c.rsh;
    const double df_di = -c.i_0 * e * c.rs / c.vt_mod - c.rs / c.rsh - 1.0;
    return {x, -df_di / df_dv};
}

double solve_module_voltage(const DiodeCoeffs& c, double i, double v_oc_stc) {
    return solve_module_voltage_full(c, i, v_oc_stc).v;
}

// Voltage of a module with a small parallel resistor carrying total current
// i; the composite i(v) is increasing because r_par << r_series. Solves
// F(v) = diode_residual(c, v, i - v/r_par) = 0, which is increasing in v.
double solve_shorted_voltage(const DiodeCoeffs& c, double r_par, double i) {
    double lo = -(c.i_l + std::abs(i) + 2.0) * r_par - 0.1;
    double hi = (std::abs(i) + c.i_l + 2.0) * r_par + 0.1;
    double x = 0.0;
    const double du_dv = 1.0 - c.rs / r_par;
    for (int iter = 0; iter < 200; ++iter) {
        const double im = i - x / r_par;
        const double u = x + im * c.rs;
        const double e = std::exp(u / c.vt_mod);
        const double f = c.i_l - c.i_0 * (e - 1.0) - u / c.rsh - im;
        if (std::abs(f) < 1e-11 && iter > 0) break;
        if (f >= 0.0)
            lo = x;
        else
            hi = x;
        const double df = (-c.i_0 * e / c.vt_mod - 1.0 / c.rsh) * du_dv + 1.0 / r_par;
        double next = (iter % 8 == 7) ? 0.5 * (lo + hi) : x - f / df;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (hi - lo < 1e-14) break;
        x = next;
    }
    return x;
}

struct ElemGroup {
    DiodeCoeffs coeffs;
    int count = 0;
    bool bypass = false;    // ideal bypass diode (shaded modules)
    double r_par = 0.0;     // parallel short resistance, 0 = none
    double i_sc0 = 0.0;     // module current at V = 0
};

struct StringModel {
    std::vector<ElemGroup> groups;
    double i_hi = 0.0;  // upper bracket for string current searches
    double i_lo = 0.0;
};

struct StringPoint {
    double v;
    double dv_di;
};

StringPoint string_voltage(const StringModel& s, double i, double v_oc_stc) {
    StringPoint out{0.0, 0.0};
    for (const auto& g : s.groups) {
        if (g.r_par > 0.0) {
            const double ve = solve_shorted_voltage(g.coeffs, g.r_par, i);
            out.v += g.count * ve;
            // composite slope: dv/di = 1 / (di_module/dv + 1/r_par); the
            // module term is tiny next to the short.
            out.dv_di += g.count * g.r_par;
        } else if (g.bypass && i >= g.i_sc0) {
            // bypass diode conducts; module contributes no voltage
        } else {
            const VoltageSolution sol = solve_module_voltage_full(g.coeffs, i, v_oc_stc);
            if (g.bypass && sol.v < 0.0) continue;
            out.v += g.count * sol.v;
            out.dv_di += g.count * sol.dv_di;
        }
    }
    return out;
}

// Smallest current with string_voltage <= v. The voltage is nonincreasing in
// current (flat only across fully-bypassed stretches), so a sign bracket is
// maintained throughout; Newton proposals accelerate it, a slope-based error
// estimate exits early away from flats, and on flats the answer is read from
// the upper bracket end, which preserves the boundary semantics.
struct CurrentSolution {
    double i;
    double di_dv;
};

CurrentSolution string_current_at(const StringModel& s, double v, double v_oc_stc,
                                  double hint = std::numeric_limits<double>::quiet_NaN()) {
    double lo = s.i_lo;
    double hi = s.i_hi;
    double x = 0.5 * (lo + hi);
    if (std::isfinite(hint)) {
        // callers sweep voltage upward, so the current only decreases
        hi = std::min(hi, hint + 1e-9);
        x = std::clamp(hint, lo, hi);
    }
    double slope = 0.0;
    for (int iter = 0; iter < 200 && hi - lo > 1e-10; ++iter) {
        const StringPoint p = string_voltage(s, x, v_oc_stc);
        if (std::abs(p.dv_di) > 1e-9) {
            slope = p.dv_di;
            if (std::abs(p.v - v) / std::abs(p.dv_di) < 1e-10)
                return {x, 1.0 / p.dv_di};
        }
        if (p.v <= v)
            hi = x;
        else
            lo = x;
        double next = (iter % 8 == 7 || p.dv_di == 0.0) ? 0.5 * (lo + hi)
                                                        : x + (v - p.v) / p.dv_di;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        x = next;
    }
    return {hi, slope != 0.0 ? 1.0 / slope : -1e12};
}

struct ArrayModel {
    // Distinct string conditions with multiplicity, so identical strings are
    // solved once.
    std::vector<std::pair<StringModel, int>> strings;
    double r_trunk = 0.0;
    double v_oc_stc = 0.0;
};

struct ArrayPoint {
    double i;
    double di_dv;
};

// hints, when given, carry the previous solution of each distinct string for
// an ascending voltage sweep.
ArrayPoint array_current_full(const ArrayModel& a, double v, std::vector<double>* hints = nullptr) {
    ArrayPoint out{0.0, 0.0};
    for (size_t k = 0; k < a.strings.size(); ++k) {
        const auto& [s, count] = a.strings[k];
        const double hint =
            hints ? (*hints)[k] : std::numeric_limits<double>::quiet_NaN();
        const CurrentSolution cs = string_current_at(s, v, a.v_oc_stc, hint);
        if (hints) (*hints)[k] = cs.i;
        out.i += count * cs.i;
        out.di_dv += count * cs.di_dv;
    }
    return out;
}

double array_current(const ArrayModel& a, double v_internal) {
    return array_current_full(a, v_internal).i;
}

ArrayModel build_array_model(const ArrayTopology& topology, const FaultSpec& fault, double temp_c,
                             double irradiance, const ModuleParams& p) {
    ArrayModel model;
    model.v_oc_stc = p.v_oc_stc;
    if (fault.kind == FaultKind::Degradation) model.r_trunk = fault.r_degradation;

    std::vector<std::vector<bool>> affected(topology.strings_parallel,
                                            std::vector<bool>(topology.modules_per_string, false));
    if (fault.kind == FaultKind::ShortCircuit || fault.kind == FaultKind::PartialShading) {
        for (auto [str_idx, pos] : fault.affected_modules) affected[str_idx][pos] = true;
    }

    const DiodeCoeffs base = diode_coeffs(temp_c, irradiance, p);
    const DiodeCoeffs shaded = diode_coeffs(temp_c, irradiance * fault.shading_gain, p);

    // Key distinct strings by their affected-module count; all modules of a
    // kind are interchangeable within a string.
    std::map<int, int> string_multiplicity;
    for (int si = 0; si < topology.strings_parallel; ++si) {
        const int n_affected = static_cast<int>(
            std::count(affected[si].begin(), affected[si].end(), true));
        string_multiplicity[n_affected] += 1;
    }

    for (auto [n_affected, count] : string_multiplicity) {
        StringModel s;
        const int n_plain = topology.modules_per_string - n_affected;
        if (n_plain > 0) s.groups.push_back({base, n_plain, false, 0.0, 0.0});
        if (n_affected > 0) {
            if (fault.kind == FaultKind::ShortCircuit)
                s.groups.push_back({base, n_affected, false, fault.r_short, 0.0});
            else
                s.groups.push_back({shaded, n_affected, true, 0.0, 0.0});
        }
        double max_isc = 0.0;
        double min_plain_isc = -1.0;
        for (auto& g : s.groups) {
            g.i_sc0 = solve_module_current(g.coeffs, 0.0);
            max_isc = std::max(max_isc, g.i_sc0);
            if (g.r_par == 0.0 && !g.bypass)
                min_plain_isc = min_plain_isc < 0.0 ? g.i_sc0 : std::min(min_plain_isc, g.i_sc0);
        }
        s.i_hi = (min_plain_isc >= 0.0 ? min_plain_isc : max_isc) + 0.5;
        s.i_lo = -1.5 * max_isc - 1.0;
        model.strings.emplace_back(std::move(s), count);
    }
    return model;
}

double bisect_v_oc(const ArrayModel& a, double v_ub) {
    double lo = 0.0, hi = v_ub;
    double x = 0.5 * (lo + hi);
    for (int iter = 0; iter < 200 && hi - lo > 1e-9; ++iter) {
        const ArrayPoint p = array_current_full(a, x);
        if (std::abs(p.i) < 1e-9) return x;
        if (p.i > 0.0)
            lo = x;
        else
            hi = x;
        double next = (iter % 8 == 7 || p.di_dv == 0.0) ? 0.5 * (lo + hi) : x - p.i / p.di_dv;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        x = next;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

const char* to_string(FaultKind kind) {
    switch (kind) {
        case FaultKind::Normal: return "normal";
        case FaultKind::ShortCircuit: return "short_circuit";
        case FaultKind::Degradation: return "degradation";
        case FaultKind::PartialShading: return "partial_shading";
    }
    return "unknown";
}

FaultKind fault_kind_from_string(const std::string& name) {
    for (int k = 0; k < kNumFaultKinds; ++k) {
        if (name == to_string(static_cast<FaultKind>(k))) return static_cast<FaultKind>(k);
    }
    throw ConfigError("unknown fault kind: " + name);
}

void ModuleParams::validate() const {
    if (r_series <= 0.0 || r_shunt <= 0.0) throw ConfigError("module resistances must be > 0");
    if (ideality <= 0.5 || ideality > 2.0) throw ConfigError("ideality must be in (0.5, 2]");
    if (cells_per_module < 1) throw ConfigError("cells_per_module must be >= 1");
    if (i_sc_stc <= 0.0) throw ConfigError("i_sc_stc must be > 0");
}

void ArrayTopology::validate() const {
    if (strings_parallel < 1 || modules_per_string < 1)
        throw ConfigError("topology counts must be >= 1");
}

ArrayTopology real_array_topology() { return ArrayTopology{2, 22}; }

FaultSpec FaultSpec::normal() { return FaultSpec{}; }

FaultSpec FaultSpec::short_circuit(double r_short) {
    FaultSpec f;
    f.kind = FaultKind::ShortCircuit;
    f.r_short = r_short;
    f.affected_modules = {{0, 0}};
    return f;
}

FaultSpec FaultSpec::degradation(double r_degradation) {
    FaultSpec f;
    f.kind = FaultKind::Degradation;
    f.r_degradation = r_degradation;
    return f;
}

FaultSpec FaultSpec::partial_shading(double gain, int n_modules, int string_index) {
    FaultSpec f;
    f.kind = FaultKind::PartialShading;
    f.shading_gain = gain;
    for (int m = 0; m < n_modules; ++m) f.affected_modules.emplace_back(string_index, m);
    return f;
}

void FaultSpec::validate(const ArrayTopology& topology) const {
    if (kind == FaultKind::PartialShading && (shading_gain <= 0.0 || shading_gain > 1.0))
        throw ConfigError("shading_gain must be in (0, 1]");
    if (kind == FaultKind::Degradation && r_degradation <= 0.0)
        throw ConfigError("r_degradation must be > 0");
    if (kind == FaultKind::ShortCircuit && r_short <= 0.0)
        throw ConfigError("r_short must be > 0");
    if (kind == FaultKind::ShortCircuit || kind == FaultKind::PartialShading) {
        std::vector<int> per_string(topology.strings_parallel, 0);
        for (auto [s, m] : affected_modules) {
            if (s < 0 || s >= topology.strings_parallel || m < 0 ||
                m >= topology.modules_per_string)
                throw ConfigError("affected module index out of range");
            per_string[s] += 1;
        }
        if (kind == FaultKind::ShortCircuit) {
            for (int n : per_string)
                if (n >= topology.modules_per_string)
                    throw ConfigError("a fully short-circuited string is not supported");
        }
    }
}

double IVCurve::i_sc() const {
    double best = 0.0;
    for (const auto& [v, i] : points) best = std::max(best, i);
    return best;
}

double module_current(double v, double temp_c, double irradiance, const ModuleParams& p) {
    if (irradiance < 0.0) throw ConfigError("irradiance must be >= 0");
    return solve_module_current(diode_coeffs(temp_c, irradiance, p), v);
}

double module_voltage_at_current(double i, double temp_c, double irradiance,
                                 const ModuleParams& p) {
    return solve_module_voltage(diode_coeffs(temp_c, irradiance, p), i, p.v_oc_stc);
}

IVCurve array_iv_curve(const ArrayTopology& topology, const FaultSpec& fault, double temp_c,
                       double irradiance, int n_points, const ModuleParams& p) {
    topology.validate();
    p.validate();
    fault.validate(topology);
    if (n_points < 50) throw ConfigError("n_points must be >= 50");

    const ArrayModel model = build_array_model(topology, fault, temp_c, irradiance, p);
    const double v_ub = topology.modules_per_string * (1.25 * p.v_oc_stc + 8.0);
    const double v_oc_internal = bisect_v_oc(model, v_ub);

    // With a trunk resistor the terminal curve starts where the internal
    // voltage cancels the trunk drop; mapping an internal grid through
    // V_term = V_int - I*R keeps every point a solved operating point.
    double v_int_start = 0.0;
    if (model.r_trunk > 0.0) {
        double lo = 0.0, hi = v_oc_internal;
        double x = 0.5 * (lo + hi);
        for (int iter = 0; iter < 200 && hi - lo > 1e-9; ++iter) {
            const ArrayPoint p = array_current_full(model, x);
            const double g = x - model.r_trunk * p.i;
            if (std::abs(g) < 1e-9) break;
            if (g < 0.0)
                lo = x;
            else
                hi = x;
            const double dg = 1.0 - model.r_trunk * p.di_dv;
            double next = (iter % 8 == 7) ? 0.5 * (lo + hi) : x - g / dg;
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            x = next;
        }
        v_int_start = x;
    }

    IVCurve curve;
    curve.temperature = temp_c;
    curve.irradiance = irradiance;
    curve.label = fault.kind;
    curve.points.reserve(n_points);
    std::vector<double> hints(model.strings.size(), std::numeric_limits<double>::quiet_NaN());
    for (int k = 0; k < n_points; ++k) {
        const double frac = static_cast<double>(k) / (n_points - 1);
        const double v_int = v_int_start + frac * (v_oc_internal - v_int_start);
        const double i = array_current_full(model, v_int, &hints).i;
        curve.points.emplace_back(v_int - model.r_trunk * i, i);
    }
    return curve;
}

std::vector<double> GridSpec::temps() const {
    std::vector<double> out;
    for (double t = temp_lo; t <= temp_hi + 1e-9; t += temp_step) out.push_back(t);
    return out;
}

std::vector<double> GridSpec::irradiances() const {
    std::vector<double> out;
    for (double g = irr_lo; g <= irr_hi + 1e-9; g += irr_step) out.push_back(g);
    return out;
}

GridSpec quarter_grid() {
    GridSpec g;
    g.irr_step = 40.0;
    return g;
}

std::vector<IVCurve> generate_dataset(const GridSpec& grid, const std::vector<FaultSpec>& faults,
                                      uint64_t seed, double noise_rel,
                                      const ArrayTopology& topology, const ModuleParams& params,
                                      int n_points, int n_threads) {
    if (faults.empty()) throw ConfigError("faults list is empty");
    if (noise_rel < 0.0 || noise_rel > 0.05) throw ConfigError("noise_rel must be in [0, 0.05]");
    const auto temps = grid.temps();
    const auto irrs = grid.irradiances();
    if (temps.empty() || irrs.empty()) throw ConfigError("grid is empty");

    struct Cell {
        size_t fault_idx, t_idx, g_idx;
    };
    std::vector<Cell> cells;
    cells.reserve(faults.size() * temps.size() * irrs.size());
    for (size_t f = 0; f < faults.size(); ++f)
        for (size_t t = 0; t < temps.size(); ++t)
            for (size_t g = 0; g < irrs.size(); ++g) cells.push_back({f, t, g});

    std::vector<IVCurve> curves(cells.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const size_t idx = next.fetch_add(1);
            if (idx >= cells.size()) break;
            const Cell& c = cells[idx];
            IVCurve curve = array_iv_curve(topology, faults[c.fault_idx], temps[c.t_idx],
                                           irrs[c.g_idx], n_points, params);
            if (noise_rel > 0.0) {
                Rng rng(derive_seed(seed, c.fault_idx, c.t_idx, c.g_idx));
                for (auto& [v, i] : curve.points) i *= 1.0 + noise_rel * rng.normal();
            }
            curves[idx] = std::move(curve);
        }
    };

    unsigned hw = n_threads > 0 ? static_cast<unsigned>(n_threads)
                                : std::max(1u, std::thread::hardware_concurrency());
    hw = std::min<unsigned>(hw, cells.size());
    if (hw <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < hw; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return curves;
}

void write_curves_csv(const std::string& path, const std::vector<IVCurve>& curves) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    const size_t n = curves.empty() ? 0 : curves.front().points.size();
    out << "label,temp_c,irradiance_wm2";
    for (size_t k = 0; k < n; ++k) out << ",v" << k << ",i" << k;
    out << "\n";
    for (const auto& c : curves) {
        if (c.points.size() != n) throw std::runtime_error("inconsistent curve lengths");
        out << to_string(c.label) << ',' << format_double(c.temperature) << ','
            << format_double(c.irradiance);
        for (const auto& [v, i] : c.points) out << ',' << format_double(v) << ',' << format_double(i);
        out << "\n";
    }
}

std::vector<IVCurve> read_curves_csv(const std::string& path) {
    const CsvFile csv = read_csv(path);
    if (csv.header.size() < 3 || (csv.header.size() - 3) % 2 != 0)
        throw std::runtime_error("malformed curve csv header in " + path);
    const size_t n = (csv.header.size() - 3) / 2;
    std::vector<IVCurve> curves;
    curves.reserve(csv.rows.size());
    for (const auto& row : csv.rows) {
        if (row.size() != csv.header.size())
            throw std::runtime_error("malformed curve row in " + path);
        IVCurve c;
        c.label = fault_kind_from_string(row[0]);
        c.temperature = parse_double(row[1]);
        c.irradiance = parse_double(row[2]);
        c.points.reserve(n);
        for (size_t k = 0; k < n; ++k)
            c.points.emplace_back(parse_double(row[3 + 2 * k]), parse_double(row[4 + 2 * k]));
        curves.push_back(std::move(c));
    }
    return curves;
}

}  // namespace adfl
