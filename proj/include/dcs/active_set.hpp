#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "dcs/common.hpp"

namespace dcs {

enum class SelectorKind { Full, Random, Pca, Kmeans, Optimal, Hf, HfAdaptive };

inline const char* to_string(SelectorKind kind) {
    switch (kind) {
        case SelectorKind::Full: return "full";
        case SelectorKind::Random: return "random";
        case SelectorKind::Pca: return "pca";
        case SelectorKind::Kmeans: return "kmeans";
        case SelectorKind::Optimal: return "optimal";
        case SelectorKind::Hf: return "hf";
        case SelectorKind::HfAdaptive: return "hf-a";
    }
    return "unknown";
}

/// Ordered, duplicate-free set of class ids chosen for one sample or one
/// mini-batch. Ids are kept sorted ascending regardless of selection order.
struct ActiveSet {
    std::vector<std::uint32_t> ids;
    SelectorKind origin = SelectorKind::Optimal;

    std::size_t size() const { return ids.size(); }
    bool empty() const { return ids.empty(); }

    bool contains(std::uint32_t id) const {
        return std::binary_search(ids.begin(), ids.end(), id);
    }

    /// Position of `id` within the sorted id list, or npos.
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t index_of(std::uint32_t id) const {
        auto it = std::lower_bound(ids.begin(), ids.end(), id);
        if (it == ids.end() || *it != id) return npos;
        return static_cast<std::size_t>(it - ids.begin());
    }
};

inline ActiveSet full_set(std::size_t n_classes, SelectorKind origin = SelectorKind::Full) {
    ActiveSet s;
    s.origin = origin;
    s.ids.resize(n_classes);
    for (std::size_t i = 0; i < n_classes; ++i) s.ids[i] = static_cast<std::uint32_t>(i);
    return s;
}

/// Sort, deduplicate and range-check a raw id list.
inline ActiveSet make_active_set(std::vector<std::uint32_t> ids, std::size_t n_classes,
                                 SelectorKind origin) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    require(!ids.empty(), "active set must not be empty");
    require(ids.back() < n_classes, "active set id out of range");
    ActiveSet s;
    s.ids = std::move(ids);
    s.origin = origin;
    return s;
}

inline void check_active_set(const ActiveSet& s, std::size_t n_classes) {
    require(!s.empty(), "active set must not be empty");
    require(std::is_sorted(s.ids.begin(), s.ids.end()), "active set ids must be sorted");
    require(std::adjacent_find(s.ids.begin(), s.ids.end()) == s.ids.end(),
            "active set ids must be unique");
    require(s.ids.back() < n_classes, "active set id out of range");
}

} // namespace dcs
