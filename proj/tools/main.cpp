#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "adflsim/convergence.hpp"
#include "adflsim/csv.hpp"
#include "adflsim/errors.hpp"
#include "adflsim/harness.hpp"
#include "adflsim/rng.hpp"

namespace fs = std::filesystem;
using namespace adfl;

namespace {

void echo_config(const CLI::App& app, const fs::path& out_dir) {
    std::ofstream out(out_dir / "config.echo");
    out << app.config_to_str(true, true);
}

void write_run_outputs(const fs::path& out_dir, const MetricsLog& log) {
    fs::create_directories(out_dir / "models");
    fs::create_directories(out_dir / "report");
    write_metrics_csv((out_dir / "metrics.csv").string(), log);
    write_trace_csv((out_dir / "trace.csv").string(), log);
    write_summary((out_dir / "report" / "summary.json").string(), log);
    Architecture arch;
    for (const auto& [agent, values] : log.final_models) {
        ModelParams p;
        p.arch = arch;
        p.values = values;
        const std::string name =
            agent < 0 ? "global.bin" : "agent" + std::to_string(agent) + ".bin";
        save_checkpoint((out_dir / "models" / name).string(), p);
    }
}

void print_confusion(const Evaluation& ev) {
    std::cout << "accuracy " << format_double(ev.accuracy) << "\n";
    std::cout << "confusion (row = true, col = predicted)\n";
    const int n = static_cast<int>(ev.confusion.size());
    std::cout << "            ";
    for (int c = 0; c < n; ++c)
        std::cout << to_string(static_cast<FaultKind>(c)) << (c + 1 < n ? " " : "\n");
    for (int r = 0; r < n; ++r) {
        std::cout << to_string(static_cast<FaultKind>(r));
        for (int c = 0; c < n; ++c) std::cout << "\t" << ev.confusion[r][c];
        std::cout << "\n";
    }
}

int run_command(const std::string& mode, const SimConfig& config, const fs::path& out_dir) {
    MetricsLog log;
    if (mode == "adfl")
        log = run_adfl(config);
    else if (mode == "cfl")
        log = run_centralized_fl(config);
    else if (mode == "central")
        log = run_centralized(config);
    else
        throw ConfigError("mode must be one of adfl|cfl|central");
    write_run_outputs(out_dir, log);
    std::cout << "mode=" << log.mode << " converged=" << (log.converged ? 1 : 0)
              << " sim_time=" << format_double(log.final_sim_time)
              << " params_tx=" << log.params_transmitted << "\n";
    for (const auto& [agent, acc] : log.final_global_acc)
        std::cout << "agent " << agent << " global_acc=" << format_double(acc) << "\n";
    return 0;
}

void make_report(const fs::path& in_dir) {
    const CsvFile metrics = read_csv((in_dir / "metrics.csv").string());
    fs::create_directories(in_dir / "report");

    std::ofstream acc(in_dir / "report" / "accuracy_vs_round.csv");
    acc << "agent,round,sim_time,global_acc,local_acc\n";
    std::ofstream tx(in_dir / "report" / "overhead.csv");
    tx << "sim_time,cum_params_tx\n";
    long long last_tx = -1;
    for (const auto& row : metrics.rows) {
        if (row.size() < 7) continue;
        if (row[2] == "AGG") {
            acc << row[1] << ',' << row[3] << ',' << row[0] << ',' << row[4] << ',' << row[5]
                << "\n";
        }
        const long long cum = parse_int(row[6]);
        if (cum != last_tx) {
            tx << row[0] << ',' << cum << "\n";
            last_tx = cum;
        }
    }

    std::ofstream times(in_dir / "report" / "times.csv");
    times << "metric,value\n";
    if (fs::exists(in_dir / "report" / "summary.json")) {
        std::ifstream in(in_dir / "report" / "summary.json");
        std::stringstream ss;
        ss << in.rdbuf();
        const std::string summary = ss.str();
        auto grab = [&](const std::string& key) -> std::string {
            const auto at = summary.find("\"" + key + "\"");
            if (at == std::string::npos) return "";
            auto colon = summary.find(':', at);
            auto end = summary.find_first_of(",}\n", colon);
            std::string v = summary.substr(colon + 1, end - colon - 1);
            while (!v.empty() && (v.front() == ' ' || v.front() == '"')) v.erase(v.begin());
            while (!v.empty() && (v.back() == ' ' || v.back() == '"')) v.pop_back();
            return v;
        };
        times << "converged," << grab("converged") << "\n";
        times << "converged_sim_time," << grab("converged_sim_time") << "\n";
        times << "converged_round," << grab("converged_round") << "\n";
        times << "final_sim_time," << grab("final_sim_time") << "\n";
        times << "params_transmitted," << grab("params_transmitted") << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Asynchronous decentralized federated learning simulator for PV fault diagnosis"};
    app.set_config("--config", "", "flat key=value config file; command line overrides it");
    app.require_subcommand(1);

    // shared option state
    std::string preset = "sim-1";
    std::string out_dir = "out";
    std::string mode = "adfl";
    uint64_t seed = 1;
    double noise = 0.005;
    int n_points = 400;
    bool raw_features = false;
    int threshold_L = 2;
    int tau = 50;
    int batch = 128;
    double lr = 1e-3;
    bool adam_sqrt_v = false;
    double target_acc = 0.99;
    bool stop_all = false;
    int max_agg = 60;
    int crash_agent = -1;
    int crash_after = 0;
    std::vector<double> medians = {1.0, 1.0, 1.0};
    double sigma = 0.1;
    double lat_min = 0.05, lat_max = 0.15;

    auto add_data_opts = [&](CLI::App* cmd) {
        cmd->add_option("--preset", preset, "experiment preset (sim-1..6, sim-1q..6q, real-1..6)");
        cmd->add_option("--seed", seed, "master seed");
        cmd->add_option("--noise", noise, "relative measurement noise on currents");
        cmd->add_option("--points", n_points, "raw curve sample count");
        cmd->add_flag("--raw-features", raw_features, "disable feature scaling");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate the preset dataset as CSV files");
    add_data_opts(gen);
    gen->add_option("--out", out_dir, "output directory")->required();

    CLI::App* run = app.add_subcommand("run", "run one training mode and write metrics");
    add_data_opts(run);
    run->add_option("--out", out_dir, "output directory")->required();
    run->add_option("--mode", mode, "adfl | cfl | central");
    run->add_option("--threshold-L", threshold_L, "model receiving termination threshold");
    run->add_option("--tau", tau, "local epochs per aggregation round");
    run->add_option("--batch", batch, "mini-batch size");
    run->add_option("--lr", lr, "learning rate");
    run->add_flag("--adam-sqrt-v", adam_sqrt_v,
                  "use the sqrt(v_t) update instead of bias-corrected sqrt(v_hat)");
    run->add_option("--target-acc", target_acc, "stopping accuracy on the union test set");
    run->add_flag("--stop-all", stop_all, "stop when every agent reaches the target");
    run->add_option("--max-agg", max_agg, "aggregation cap per agent");
    run->add_option("--crash-agent", crash_agent, "agent silenced mid-run (-1 = none)");
    run->add_option("--crash-after", crash_after, "silence after this many aggregations");
    run->add_option("--median-epoch-times", medians, "per-agent median epoch seconds")
        ->expected(3);
    run->add_option("--time-sigma", sigma, "lognormal sigma of epoch times");
    run->add_option("--latency-min", lat_min, "message latency lower bound, seconds");
    run->add_option("--latency-max", lat_max, "message latency upper bound, seconds");

    std::string model_path, data_path;
    CLI::App* eval = app.add_subcommand("evaluate", "evaluate a checkpoint on a sample CSV");
    eval->add_option("--model", model_path, "checkpoint file")->required();
    eval->add_option("--data", data_path, "samples.csv file")->required();

    int vb_rounds = 20;
    int vb_tau = 5;
    int vb_probes = 200;
    double vb_radius = 0.5;
    std::string vb_task = "convex";
    size_t vb_cap = 200;
    CLI::App* verify = app.add_subcommand("verify-bounds", "verify the convergence bounds");
    add_data_opts(verify);
    verify->add_option("--task", vb_task, "surrogate task (convex)");
    verify->add_option("--tau", vb_tau, "local epochs per round");
    verify->add_option("--rounds", vb_rounds, "aggregation rounds");
    verify->add_option("--probes", vb_probes, "probe pairs for constant estimation");
    verify->add_option("--radius", vb_radius, "probe radius");
    verify->add_option("--cap-per-class", vb_cap, "per-agent per-class sample cap");
    verify->add_option("--out", out_dir, "output directory")->required();

    std::string report_in;
    CLI::App* report = app.add_subcommand("report", "derive plotting tables from a run directory");
    report->add_option("--in", report_in, "run directory with metrics.csv")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) {
            const ExperimentPreset p = preset_by_name(preset);
            DataConfig dc;
            dc.noise_rel = noise;
            dc.n_points = n_points;
            dc.scale_features = !raw_features;
            fs::create_directories(out_dir);
            echo_config(app, out_dir);

            const GridSpec grid = p.quarter ? quarter_grid() : GridSpec{};
            const auto curves = generate_dataset(
                grid,
                {FaultSpec::normal(), FaultSpec::short_circuit(), FaultSpec::degradation(),
                 FaultSpec::partial_shading()},
                derive_seed(seed, 0xDA7A), noise, ArrayTopology{}, ModuleParams{}, n_points);
            write_curves_csv((fs::path(out_dir) / "curves.csv").string(), curves);

            std::vector<Sample> samples;
            samples.reserve(curves.size());
            for (const auto& c : curves) samples.push_back(sample_from_curve(c));
            write_samples_csv((fs::path(out_dir) / "samples.csv").string(), samples);
            const SplitDataset split = split_dataset(samples, 0.7, seed);
            write_split_csv((fs::path(out_dir) / "split.csv").string(), split);

            const PresetData data = build_preset_data(p, seed, dc);
            std::ofstream manifest(fs::path(out_dir) / "manifest.txt");
            manifest << "preset " << p.name << "\n";
            for (int a = 0; a < kNumAgents; ++a) {
                manifest << "agent " << a;
                for (int c = 0; c < kNumFaultKinds; ++c)
                    manifest << " " << to_string(static_cast<FaultKind>(c)) << "="
                             << p.counts[a][c];
                manifest << " train=" << data.agents[a].train_all.size()
                         << " test=" << data.agents[a].test.size() << "\n";
                write_samples_csv(
                    (fs::path(out_dir) / ("agent" + std::to_string(a) + "_train.csv")).string(),
                    data.agents[a].train_all);
                write_samples_csv(
                    (fs::path(out_dir) / ("agent" + std::to_string(a) + "_test.csv")).string(),
                    data.agents[a].test);
            }
            manifest << "union_test " << data.union_test.size() << "\n";
            std::cout << "wrote " << curves.size() << " curves and per-agent datasets to "
                      << out_dir << "\n";
            return 0;
        }

        if (run->parsed()) {
            SimConfig config;
            config.preset = preset;
            config.seed = seed;
            config.threshold_L = threshold_L;
            config.epochs_per_round = tau;
            config.hyper.batch = batch;
            config.hyper.lr = lr;
            config.hyper.use_vhat = !adam_sqrt_v;
            config.target_accuracy = target_acc;
            config.stop_when_all_agents = stop_all;
            config.max_aggregations_per_agent = max_agg;
            config.crash_agent = crash_agent;
            config.crash_after_aggregations = crash_after;
            for (int a = 0; a < kNumAgents; ++a) config.epoch_time_median[a] = medians[a];
            config.epoch_time_sigma = sigma;
            config.latency_min = lat_min;
            config.latency_max = lat_max;
            config.data.noise_rel = noise;
            config.data.n_points = n_points;
            config.data.scale_features = !raw_features;
            config.validate();
            fs::create_directories(out_dir);
            echo_config(app, out_dir);
            return run_command(mode, config, out_dir);
        }

        if (eval->parsed()) {
            const ModelParams model = load_checkpoint(model_path);
            const auto samples = read_samples_csv(data_path);
            print_confusion(evaluate(model, samples));
            return 0;
        }

        if (verify->parsed()) {
            if (vb_task != "convex") throw ConfigError("task must be 'convex'");
            const ExperimentPreset p = preset_by_name(preset);
            DataConfig dc;
            dc.noise_rel = noise;
            dc.n_points = n_points;
            dc.scale_features = !raw_features;
            const PresetData data = build_preset_data(p, seed, dc);
            std::vector<std::vector<Sample>> per_agent;
            for (const auto& agent : data.agents) per_agent.push_back(agent.train_all);
            const ConvexTask task = ConvexTask::from_agent_samples(std::move(per_agent), vb_cap);
            const auto agents = task.objectives();
            const BoundConstants constants =
                estimate_constants(agents, task.param_dim(), vb_probes, vb_radius, seed);
            const double rate = 1.0 / constants.H;
            Theorem1Report t1 =
                verify_theorem1(agents, task.param_dim(), constants, rate, vb_tau, vb_rounds);
            const Theorem2Report t2 = theorem2_report(agents, task.param_dim(), t1, rate, task.l2);
            fs::create_directories(out_dir);
            echo_config(app, out_dir);
            write_bound_report_csv((fs::path(out_dir) / "bounds.csv").string(), t1);
            write_constants_summary((fs::path(out_dir) / "constants.txt").string(), t1, &t2);
            std::cout << "tau=" << vb_tau << " rounds=" << vb_rounds
                      << " violations=" << t1.violations << "\n";
            if (t2.applicable)
                std::cout << "theorem2 bound=" << format_double(t2.bound)
                          << " observed_gap=" << format_double(t2.observed_gap)
                          << " holds=" << (t2.holds ? 1 : 0) << "\n";
            else
                std::cout << "theorem2 bound not applicable\n";
            return t1.violations == 0 ? 0 : 1;
        }

        if (report->parsed()) {
            make_report(report_in);
            std::cout << "report tables written to " << report_in << "/report\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
