#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace adfl {

enum class FaultKind { Normal = 0, ShortCircuit = 1, Degradation = 2, PartialShading = 3 };

constexpr int kNumFaultKinds = 4;

const char* to_string(FaultKind kind);
FaultKind fault_kind_from_string(const std::string& name);

// Five-parameter single-diode model of one module, fitted at STC.
struct ModuleParams {
    double photocurrent_stc = 6.0576;          // A
    double diode_sat_current_stc = 2.0517e-10; // A
    double ideality = 0.96445;
    double r_series = 0.2392;                  // ohm
    double r_shunt = 551.8793;                 // ohm
    int cells_per_module = 36;
    double temp_coeff_isc = 0.06;              // %/degC
    double temp_coeff_voc = -0.36;             // %/degC
    double v_oc_stc = 21.5;                    // V
    double i_sc_stc = 6.03;                    // A

    void validate() const;
};

struct ArrayTopology {
    int strings_parallel = 3;
    int modules_per_string = 6;

    void validate() const;
};

// 2 strings of 22 modules: the layout of the physical array the module data
// was measured on, kept as an alternative preset.
ArrayTopology real_array_topology();

struct FaultSpec {
    FaultKind kind = FaultKind::Normal;
    double r_short = 0.001;        // ohm, ShortCircuit only
    double r_degradation = 3.0;    // ohm, Degradation only
    double shading_gain = 0.5;     // (0,1], PartialShading only
    std::vector<std::pair<int, int>> affected_modules;  // (string, position)

    static FaultSpec normal();
    static FaultSpec short_circuit(double r_short = 0.001);
    static FaultSpec degradation(double r_degradation = 3.0);
    // Default shades three modules of string 0.
    static FaultSpec partial_shading(double gain = 0.5, int n_modules = 3, int string_index = 0);

    void validate(const ArrayTopology& topology) const;
};

struct IVCurve {
    std::vector<std::pair<double, double>> points;  // (V, I), voltage ascending
    double temperature = 25.0;   // degC
    double irradiance = 1000.0;  // W/m^2
    FaultKind label = FaultKind::Normal;

    double v_oc() const { return points.empty() ? 0.0 : points.back().first; }
    double i_sc() const;
};

// Module current at terminal voltage v, by damped Newton on the implicit
// diode equation; |residual| < 1e-9 A or NonConvergence.
double module_current(double v, double temp_c, double irradiance, const ModuleParams& p);

// Module terminal voltage at current i: monotone bisection on
// module_current. Exposed for tests; array composition uses it internally.
double module_voltage_at_current(double i, double temp_c, double irradiance,
                                 const ModuleParams& p);

IVCurve array_iv_curve(const ArrayTopology& topology, const FaultSpec& fault, double temp_c,
                       double irradiance, int n_points, const ModuleParams& p = {});

// Temperature x irradiance sweep; defaults are the 31 x 96 grid.
struct GridSpec {
    double temp_lo = 10.0, temp_hi = 70.0, temp_step = 2.0;
    double irr_lo = 50.0, irr_hi = 1000.0, irr_step = 10.0;

    std::vector<double> temps() const;
    std::vector<double> irradiances() const;
    size_t cell_count() const { return temps().size() * irradiances().size(); }
};

// One cell-subsampled variant: every 4th irradiance point (744 cells).
GridSpec quarter_grid();

// One curve per (fault, temp, irradiance), ordered by (fault, temp,
// irradiance); multiplicative Gaussian current noise with std = noise_rel,
// seeded per curve so the result is identical for any worker count.
std::vector<IVCurve> generate_dataset(const GridSpec& grid, const std::vector<FaultSpec>& faults,
                                      uint64_t seed, double noise_rel,
                                      const ArrayTopology& topology = {},
                                      const ModuleParams& params = {}, int n_points = 400,
                                      int n_threads = 0);

void write_curves_csv(const std::string& path, const std::vector<IVCurve>& curves);
std::vector<IVCurve> read_curves_csv(const std::string& path);

}  // namespace adfl
