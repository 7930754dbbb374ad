#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcs/config.hpp"
#include "dcs/metrics.hpp"
#include "dcs/param_store.hpp"
#include "dcs/synthetic.hpp"
#include "dcs/trainer.hpp"

namespace dcs {

inline std::filesystem::path resolve_output_dir(const RunSpec& spec) {
    if (const char* env = std::getenv("DCS_OUTPUT_DIR"); env != nullptr && *env != '\0')
        return std::filesystem::path(env) / spec.experiment;
    return std::filesystem::path(spec.output_dir);
}

struct SeedRun {
    std::uint64_t seed = 0;
    RunResult result;
};

struct RunArtifacts {
    std::filesystem::path dir;
    std::vector<SeedRun> runs;

    const RunResult& primary() const { return runs.front().result; }
};

namespace detail {

inline double mean_time_us(const std::vector<MetricsRecord>& records,
                           std::uint64_t MetricsRecord::*field) {
    if (records.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& r : records) acc += static_cast<double>(r.*field);
    return acc / static_cast<double>(records.size());
}

inline double mean_overlap(const std::vector<MetricsRecord>& records) {
    if (records.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& r : records) acc += r.overlap_optimal;
    return acc / static_cast<double>(records.size());
}

inline void write_metrics_csv(const std::filesystem::path& path,
                              const std::vector<MetricsRecord>& records) {
    MetricsCsvWriter writer(path.string());
    for (const auto& r : records) writer.write(r);
    writer.flush();
}

inline nlohmann::json timings_json(const TrainTimings& t) {
    return {{"select_us", t.select_us},
            {"softmax_us", t.softmax_us},
            {"rebuild_us", t.rebuild_us},
            {"eval_us", t.eval_us},
            {"total_us", t.total_us}};
}

} // namespace detail

/// Execute one RunSpec: generate the dataset, train once per seed, and (when
/// requested) write metrics.csv, result.json and the final checkpoint under
/// the output directory. Multi-seed specs nest per-seed artifacts in
/// seed_<s>/ subdirectories.
inline RunArtifacts run_train_spec(const RunSpec& spec, bool write_artifacts = true) {
    RunArtifacts artifacts;
    artifacts.dir = resolve_output_dir(spec);
    if (write_artifacts) std::filesystem::create_directories(artifacts.dir);

    const SyntheticDataset ds = generate_dataset(spec.dataset);
    const std::size_t feature_dim = ds.dim();

    for (const std::uint64_t seed : spec.seeds) {
        TrainConfig tc = spec.train;
        tc.seed = seed;
        ParamStore store(ds.n_classes(), feature_dim, seed);
        SeedRun run;
        run.seed = seed;
        run.result = train(tc, ds, store);

        if (write_artifacts) {
            const std::filesystem::path run_dir =
                spec.seeds.size() == 1 ? artifacts.dir
                                       : artifacts.dir / ("seed_" + std::to_string(seed));
            std::filesystem::create_directories(run_dir);
            detail::write_metrics_csv(run_dir / "metrics.csv", run.result.records);
            store.save_checkpoint(run_dir / "checkpoint.bin");

            nlohmann::json result_json = {
                {"experiment", spec.experiment},
                {"selector", run.result.records.empty() ? "" : run.result.records.back().selector},
                {"seed", seed},
                {"iterations", run.result.records.size()},
                {"initial_accuracy", run.result.initial_accuracy},
                {"final_accuracy", run.result.final_accuracy},
                {"compute_proxy", run.result.compute_proxy},
                {"timings", detail::timings_json(run.result.timings)},
            };
            if (!run.result.phases.empty()) {
                nlohmann::json phases = nlohmann::json::array();
                for (const auto& p : run.result.phases)
                    phases.push_back({{"phase", p.phase},
                                      {"M", p.quota},
                                      {"L", p.n_trees},
                                      {"T", p.rebuild_interval},
                                      {"tau_cp", p.tau_cp}});
                result_json["phases"] = phases;
            }
            std::ofstream out(run_dir / "result.json");
            out << result_json.dump(2) << '\n';
        }
        artifacts.runs.push_back(std::move(run));
    }
    return artifacts;
}

struct CompareRow {
    std::string selector;
    std::size_t quota = 0;
    double final_accuracy = 0.0;
    double mean_select_us = 0.0;
    double mean_softmax_us = 0.0;
};

inline constexpr const char* kCompareCsvHeader =
    "selector,M,final_accuracy,mean_select_time_us,mean_softmax_time_us";

/// Run each spec on the identical dataset and tabulate accuracy against
/// per-iteration cost. Specs must agree on the dataset (same seed and
/// shape), otherwise the comparison is meaningless and refused.
inline std::vector<CompareRow> run_compare(const std::vector<RunSpec>& specs,
                                           const std::filesystem::path& out_dir,
                                           bool write_artifacts = true) {
    require(specs.size() >= 2, "run_compare: need at least two specs");
    for (std::size_t i = 1; i < specs.size(); ++i) {
        if (specs[i].dataset.seed != specs.front().dataset.seed)
            throw config_error("dataset.seed", "compare requires a shared dataset seed");
        if (specs[i].dataset.n_classes != specs.front().dataset.n_classes ||
            specs[i].dataset.dim != specs.front().dataset.dim ||
            specs[i].dataset.samples_per_class != specs.front().dataset.samples_per_class)
            throw config_error("dataset", "compare requires identical dataset specs");
    }

    std::vector<CompareRow> rows;
    for (const RunSpec& spec : specs) {
        RunSpec local = spec;
        if (write_artifacts)
            local.output_dir = (out_dir / spec.experiment).string();
        const RunArtifacts artifacts = run_train_spec(local, write_artifacts);
        const RunResult& res = artifacts.primary();
        CompareRow row;
        row.selector = res.records.empty() ? to_string(spec.train.selector.kind)
                                           : res.records.back().selector;
        row.quota = spec.train.selector.quota == 0 ? spec.dataset.n_classes
                                                   : spec.train.selector.quota;
        row.final_accuracy = res.final_accuracy;
        row.mean_select_us = detail::mean_time_us(res.records, &MetricsRecord::select_time_us);
        row.mean_softmax_us = detail::mean_time_us(res.records, &MetricsRecord::softmax_time_us);
        rows.push_back(row);
    }

    if (write_artifacts) {
        std::filesystem::create_directories(out_dir);
        std::ofstream out(out_dir / "compare.csv");
        out << kCompareCsvHeader << '\n';
        for (const auto& row : rows)
            out << row.selector << ',' << row.quota << ',' << format_double(row.final_accuracy)
                << ',' << format_double(row.mean_select_us) << ','
                << format_double(row.mean_softmax_us) << '\n';
    }
    return rows;
}

enum class AblationAxis { Quota, Trees, Interval, TauCp };

inline AblationAxis parse_ablation_axis(const std::string& name) {
    if (name == "M") return AblationAxis::Quota;
    if (name == "L") return AblationAxis::Trees;
    if (name == "T") return AblationAxis::Interval;
    if (name == "tau_cp") return AblationAxis::TauCp;
    throw config_error("axis", "unknown ablation axis '" + name + "' (expected M|L|T|tau_cp)");
}

struct AblationRow {
    double value = 0.0;
    double final_accuracy = 0.0;
    double mean_overlap = 0.0;
    std::uint64_t compute_proxy = 0;
    double mean_select_us = 0.0;
    double mean_softmax_us = 0.0;
};

inline constexpr const char* kAblationCsvHeader =
    "axis,value,final_accuracy,mean_overlap,compute_proxy,mean_select_time_us,"
    "mean_softmax_time_us";

/// Sweep one axis holding everything else fixed. Duplicate values are
/// dropped (first occurrence wins) and reported through `warnings`.
inline std::vector<AblationRow> run_ablation(const std::string& axis_name,
                                             std::vector<double> values, const RunSpec& base,
                                             const std::filesystem::path& out_dir,
                                             std::vector<std::string>* warnings = nullptr,
                                             bool write_artifacts = true) {
    const AblationAxis axis = parse_ablation_axis(axis_name);
    require(values.size() >= 2, "run_ablation: need at least two values");

    std::vector<double> unique_values;
    for (double v : values) {
        if (std::find(unique_values.begin(), unique_values.end(), v) != unique_values.end()) {
            if (warnings)
                warnings->push_back("duplicate value " + format_double(v) + " dropped");
            continue;
        }
        unique_values.push_back(v);
    }

    std::vector<AblationRow> rows;
    for (double value : unique_values) {
        RunSpec spec = base;
        spec.experiment = base.experiment + "_" + axis_name + "_" + format_double(value);
        if (write_artifacts) spec.output_dir = (out_dir / spec.experiment).string();
        switch (axis) {
            case AblationAxis::Quota:
                spec.train.selector.quota = static_cast<std::size_t>(value);
                require(spec.train.selector.quota >= 1 &&
                            spec.train.selector.quota <= spec.dataset.n_classes,
                        "run_ablation: M out of range");
                break;
            case AblationAxis::Trees:
                require(spec.train.selector.kind == SelectorKind::Hf,
                        "run_ablation: L axis needs the hf selector");
                spec.train.n_trees = static_cast<std::size_t>(value);
                require(spec.train.n_trees >= 1, "run_ablation: L must be >= 1");
                break;
            case AblationAxis::Interval:
                spec.train.rebuild_interval = static_cast<std::size_t>(value);
                break;
            case AblationAxis::TauCp:
                if (!spec.train.adaptive)
                    throw config_error("train.adaptive.enabled",
                                       "tau_cp axis requires adaptive allocation");
                spec.train.schedule.tau_start = value;
                spec.train.schedule.tau_end = value;
                break;
        }
        const RunArtifacts artifacts = run_train_spec(spec, write_artifacts);
        const RunResult& res = artifacts.primary();
        AblationRow row;
        row.value = value;
        row.final_accuracy = res.final_accuracy;
        row.mean_overlap = detail::mean_overlap(res.records);
        row.compute_proxy = res.compute_proxy;
        row.mean_select_us = detail::mean_time_us(res.records, &MetricsRecord::select_time_us);
        row.mean_softmax_us = detail::mean_time_us(res.records, &MetricsRecord::softmax_time_us);
        rows.push_back(row);
    }

    if (write_artifacts) {
        std::filesystem::create_directories(out_dir);
        std::ofstream out(out_dir / "ablation.csv");
        out << kAblationCsvHeader << '\n';
        for (const auto& row : rows)
            out << axis_name << ',' << format_double(row.value) << ','
                << format_double(row.final_accuracy) << ',' << format_double(row.mean_overlap)
                << ',' << row.compute_proxy << ',' << format_double(row.mean_select_us) << ','
                << format_double(row.mean_softmax_us) << '\n';
    }
    return rows;
}

} // namespace dcs
