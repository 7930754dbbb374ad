#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "dcs/common.hpp"

namespace dcs {

/// Per-iteration diagnostics row. Ratio fields live in [0,1]; tau_cp is 0
/// for non-adaptive runs.
struct MetricsRecord {
    std::uint64_t iteration = 0;
    std::uint64_t epoch = 0;
    std::string selector;
    std::size_t quota = 0;            // M
    std::size_t n_trees = 0;          // L
    std::size_t rebuild_interval = 0; // T
    double tau_cp = 0.0;
    double loss = 0.0;
    double holdout_acc = 0.0;
    double cp_k = 0.0;
    double ncg_k = 0.0;
    double overlap_optimal = 0.0;
    std::uint64_t select_time_us = 0;
    std::uint64_t softmax_time_us = 0;
    std::uint64_t rebuild_time_us = 0;
};

inline constexpr const char* kMetricsCsvHeader =
    "iteration,epoch,selector,M,L,T,tau_cp,loss,holdout_acc,cp_k,ncg_k,overlap_optimal,"
    "select_time_us,softmax_time_us,rebuild_time_us";

/// Locale-independent shortest-round-trip formatting; CSV files must parse
/// identically everywhere.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string to_csv_row(const MetricsRecord& r) {
    std::string row;
    row.reserve(160);
    row += std::to_string(r.iteration);
    row += ',';
    row += std::to_string(r.epoch);
    row += ',';
    row += r.selector;
    row += ',';
    row += std::to_string(r.quota);
    row += ',';
    row += std::to_string(r.n_trees);
    row += ',';
    row += std::to_string(r.rebuild_interval);
    row += ',';
    row += format_double(r.tau_cp);
    row += ',';
    row += format_double(r.loss);
    row += ',';
    row += format_double(r.holdout_acc);
    row += ',';
    row += format_double(r.cp_k);
    row += ',';
    row += format_double(r.ncg_k);
    row += ',';
    row += format_double(r.overlap_optimal);
    row += ',';
    row += std::to_string(r.select_time_us);
    row += ',';
    row += std::to_string(r.softmax_time_us);
    row += ',';
    row += std::to_string(r.rebuild_time_us);
    return row;
}

class MetricsCsvWriter {
public:
    explicit MetricsCsvWriter(const std::string& path) : out_(path, std::ios::trunc) {
        require(out_.good(), "MetricsCsvWriter: cannot open output file");
        out_ << kMetricsCsvHeader << '\n';
    }

    void write(const MetricsRecord& r) { out_ << to_csv_row(r) << '\n'; }

    void flush() { out_.flush(); }

private:
    std::ofstream out_;
};

} // namespace dcs
