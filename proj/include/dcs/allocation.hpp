#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dcs/diagnostics.hpp"
#include "dcs/matrix.hpp"
#include "dcs/softmax.hpp"

namespace dcs {

/// Linear phase-wise schedules for the adaptive controller: the
/// concentration threshold tau_cp rises, the forest grows more trees, and
/// rebuilds spread out as training stabilizes.
struct AllocationSchedule {
    double tau_start = 0.7;
    double tau_end = 0.9;
    std::size_t trees_start = 5;
    std::size_t trees_end = 50;
    std::size_t interval_start = 100;
    std::size_t interval_end = 1000;
    std::size_t n_phases = 1;
    std::size_t epochs_per_phase = 2;
};

struct PhaseParams {
    double tau_cp = 0.0;
    std::size_t n_trees = 0;        // L
    std::size_t rebuild_interval = 0; // T
};

struct AllocationState {
    std::size_t phase = 0;
    std::size_t quota = 0;            // M
    std::size_t n_trees = 0;          // L
    std::size_t rebuild_interval = 0; // T
    double tau_cp = 0.0;
};

struct QuotaClamp {
    std::size_t floor = 1;
    std::size_t ceil = static_cast<std::size_t>(-1);
};

namespace detail {

inline std::size_t lerp_count(std::size_t a, std::size_t b, double t) {
    const double v = static_cast<double>(a) + (static_cast<double>(b) - static_cast<double>(a)) * t;
    const auto rounded = static_cast<std::size_t>(std::llround(v));
    return std::max<std::size_t>(rounded, 1);
}

} // namespace detail

inline PhaseParams schedule_at(const AllocationSchedule& schedule, std::size_t phase) {
    require(phase < schedule.n_phases, "schedule_at: phase out of range");
    const double t = schedule.n_phases <= 1
                         ? 0.0
                         : static_cast<double>(phase) / static_cast<double>(schedule.n_phases - 1);
    PhaseParams p;
    p.tau_cp = schedule.tau_start + (schedule.tau_end - schedule.tau_start) * t;
    p.n_trees = detail::lerp_count(schedule.trees_start, schedule.trees_end, t);
    p.rebuild_interval = detail::lerp_count(schedule.interval_start, schedule.interval_end, t);
    return p;
}

/// Phase transition: measure full-softmax concentration on the monitor
/// batch, set M to the smallest count whose mean cumulative probability
/// clears this phase's tau_cp (clamped), and take L and T from the schedule.
/// The caller owns triggering the forest rebuild with the new L.
inline AllocationState begin_phase(std::size_t phase, const AllocationSchedule& schedule,
                                   const Matrix& monitor_features, const Matrix& W,
                                   const QuotaClamp& clamp) {
    require(monitor_features.rows >= 1, "begin_phase: monitor batch must not be empty");
    const PhaseParams params = schedule_at(schedule, phase);
    std::vector<ConcentrationProfile> profiles;
    profiles.reserve(monitor_features.rows);
    for (std::size_t j = 0; j < monitor_features.rows; ++j)
        profiles.push_back(concentration_profile(forward_full(monitor_features.row_span(j), W)));
    std::size_t quota = min_m_for_threshold(profiles, params.tau_cp);
    quota = std::clamp(quota, clamp.floor, std::max(clamp.floor, clamp.ceil));

    AllocationState state;
    state.phase = phase;
    state.quota = quota;
    state.n_trees = params.n_trees;
    state.rebuild_interval = params.rebuild_interval;
    state.tau_cp = params.tau_cp;
    return state;
}

} // namespace dcs
