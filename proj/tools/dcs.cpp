// Command-line harness: train / compare / ablate / bench over the selective
// softmax library.

#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dcs/alloc_meter.hpp"
#include "dcs/bench.hpp"
#include "dcs/config.hpp"
#include "dcs/runner.hpp"

DCS_DEFINE_ALLOC_METER()

namespace {

void report_diag_counters() {
    const auto& counters = dcs::diag_counters();
    const auto zero_cos = counters.zero_norm_cosine.load();
    const auto zero_ncg = counters.zero_gradient_ncg.load();
    const auto fallbacks = counters.degenerate_split_fallback.load();
    if (zero_cos) std::cerr << "note: " << zero_cos << " zero-norm cosine comparisons\n";
    if (zero_ncg) std::cerr << "note: " << zero_ncg << " zero-gradient NCG evaluations\n";
    if (fallbacks) std::cerr << "note: " << fallbacks << " median-split fallbacks\n";
}

int cmd_train(const std::string& config_path) {
    const dcs::RunSpec spec = dcs::load_run_spec(config_path);
    const dcs::RunArtifacts artifacts = dcs::run_train_spec(spec);
    for (const auto& run : artifacts.runs) {
        std::cout << spec.experiment << " seed=" << run.seed
                  << " final_accuracy=" << dcs::format_double(run.result.final_accuracy)
                  << " iterations=" << run.result.records.size() << '\n';
    }
    std::cout << "artifacts: " << artifacts.dir.string() << '\n';
    return 0;
}

int cmd_compare(const std::vector<std::string>& config_paths, const std::string& out_dir) {
    std::vector<dcs::RunSpec> specs;
    specs.reserve(config_paths.size());
    for (const auto& path : config_paths) specs.push_back(dcs::load_run_spec(path));
    const auto rows = dcs::run_compare(specs, out_dir);
    std::cout << dcs::kCompareCsvHeader << '\n';
    for (const auto& row : rows)
        std::cout << row.selector << ',' << row.quota << ','
                  << dcs::format_double(row.final_accuracy) << ','
                  << dcs::format_double(row.mean_select_us) << ','
                  << dcs::format_double(row.mean_softmax_us) << '\n';
    return 0;
}

int cmd_ablate(const std::string& axis, std::vector<double> values,
               const std::string& config_path, const std::string& out_dir) {
    const dcs::RunSpec base = dcs::load_run_spec(config_path);
    std::vector<std::string> warnings;
    const auto rows = dcs::run_ablation(axis, std::move(values), base, out_dir, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    std::cout << dcs::kAblationCsvHeader << '\n';
    for (const auto& row : rows)
        std::cout << axis << ',' << dcs::format_double(row.value) << ','
                  << dcs::format_double(row.final_accuracy) << ','
                  << dcs::format_double(row.mean_overlap) << ',' << row.compute_proxy << ','
                  << dcs::format_double(row.mean_select_us) << ','
                  << dcs::format_double(row.mean_softmax_us) << '\n';
    return 0;
}

int cmd_bench(std::size_t n, std::size_t d, std::size_t m, std::size_t repeats,
              std::size_t trees, std::size_t build_n, std::uint64_t seed,
              const std::string& out_path) {
    const dcs::BenchReport report = dcs::run_bench(n, d, m, repeats, build_n, trees, seed);
    const nlohmann::json doc = {
        {"n", report.n_classes},
        {"d", report.dim},
        {"m", report.quota},
        {"repeats", report.repeats},
        {"selective_us_median", report.selective_us_median},
        {"dense_us_median", report.dense_us_median},
        {"speedup", report.speedup},
        {"selective_bytes", report.selective_bytes},
        {"dense_bytes", report.dense_bytes},
        {"memory_ratio", report.memory_ratio},
        {"build_classes", report.build_classes},
        {"build_trees", report.build_trees},
        {"build_us_base", report.build_us_base},
        {"build_us_double", report.build_us_double},
        {"build_scaling", report.build_scaling},
    };
    std::cout << doc.dump(2) << '\n';
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << doc.dump(2) << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"selective softmax training with dynamic class selection"};
    app.require_subcommand(1);

    std::string train_config;
    auto* train_cmd = app.add_subcommand("train", "run one training experiment from a config");
    train_cmd->add_option("config", train_config, "JSON run config")->required();

    std::vector<std::string> compare_configs;
    std::string compare_out = "compare_out";
    auto* compare_cmd =
        app.add_subcommand("compare", "run several selectors on the identical dataset");
    compare_cmd->add_option("configs", compare_configs, "two or more JSON run configs")
        ->required()
        ->expected(-2);
    compare_cmd->add_option("--output-dir", compare_out, "directory for compare.csv");

    std::string ablate_axis;
    std::vector<double> ablate_values;
    std::string ablate_config;
    std::string ablate_out = "ablation_out";
    auto* ablate_cmd = app.add_subcommand("ablate", "sweep one axis of a base config");
    ablate_cmd->add_option("--axis", ablate_axis, "one of M, L, T, tau_cp")->required();
    ablate_cmd->add_option("--values", ablate_values, "axis values")
        ->required()
        ->delimiter(',');
    ablate_cmd->add_option("config", ablate_config, "JSON base config")->required();
    ablate_cmd->add_option("--output-dir", ablate_out, "directory for ablation.csv");

    std::size_t bench_n = 100000, bench_d = 64, bench_m = 1000, bench_repeats = 9;
    std::size_t bench_trees = 5, bench_build_n = 0;
    std::uint64_t bench_seed = 1;
    std::string bench_out;
    auto* bench_cmd =
        app.add_subcommand("bench", "time the selective step against the dense step");
    bench_cmd->add_option("--n", bench_n, "class count");
    bench_cmd->add_option("--d", bench_d, "feature dimension");
    bench_cmd->add_option("--m", bench_m, "active class count");
    bench_cmd->add_option("--repeats", bench_repeats, "timing repeats")->required();
    bench_cmd->add_option("--trees", bench_trees, "trees for the build-scaling probe");
    bench_cmd->add_option("--build-n", bench_build_n,
                          "class count for the build-scaling probe (default --n)");
    bench_cmd->add_option("--seed", bench_seed, "rng seed");
    bench_cmd->add_option("--out", bench_out, "also write the report JSON here");

    CLI11_PARSE(app, argc, argv);

    try {
        int rc = 1;
        if (*train_cmd) rc = cmd_train(train_config);
        else if (*compare_cmd) rc = cmd_compare(compare_configs, compare_out);
        else if (*ablate_cmd) rc = cmd_ablate(ablate_axis, ablate_values, ablate_config, ablate_out);
        else if (*bench_cmd)
            rc = cmd_bench(bench_n, bench_d, bench_m, bench_repeats, bench_trees, bench_build_n,
                           bench_seed, bench_out);
        report_diag_counters();
        return rc;
    } catch (const dcs::config_error& err) {
        std::cerr << "config error: " << err.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& err) {
        std::cerr << "invalid argument: " << err.what() << '\n';
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 1;
    }
}
