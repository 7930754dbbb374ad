#pragma once

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace dcs {

/// Thrown when a documented caller-side precondition is violated
/// (e.g. the ground-truth label is missing from the active set).
class precondition_error : public std::logic_error {
public:
    explicit precondition_error(const std::string& msg) : std::logic_error(msg) {}
};

inline void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

/// Process-wide counters for degenerate numeric events that are handled
/// deterministically but worth surfacing (the CLI reports them when nonzero).
struct DiagCounters {
    std::atomic<std::uint64_t> zero_norm_cosine{0};
    std::atomic<std::uint64_t> zero_gradient_ncg{0};
    std::atomic<std::uint64_t> degenerate_split_fallback{0};
};

inline DiagCounters& diag_counters() {
    static DiagCounters counters;
    return counters;
}

} // namespace dcs
