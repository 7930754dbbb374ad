#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <new>

namespace dcs::allocmeter {

// Thread-local so a metered step is not polluted by background builders.
inline thread_local std::uint64_t bytes_allocated = 0;
inline thread_local bool active = false;

inline void note_alloc(std::size_t bytes) {
    if (active) bytes_allocated += bytes;
}

/// Counts bytes allocated on this thread while in scope. Requires the
/// enclosing binary to have invoked DCS_DEFINE_ALLOC_METER() in one
/// translation unit; otherwise the count stays zero.
class Scope {
public:
    Scope() : start_(bytes_allocated), was_active_(active) { active = true; }
    ~Scope() { active = was_active_; }
    std::uint64_t bytes() const { return bytes_allocated - start_; }

private:
    std::uint64_t start_;
    bool was_active_;
};

} // namespace dcs::allocmeter

// Replaceable global allocation functions that feed the meter. Define once
// per binary that wants real transient-memory accounting.
#define DCS_DEFINE_ALLOC_METER()                                                     \
    void* operator new(std::size_t n) {                                             \
        dcs::allocmeter::note_alloc(n);                                             \
        if (void* p = std::malloc(n ? n : 1)) return p;                             \
        throw std::bad_alloc();                                                     \
    }                                                                               \
    void* operator new[](std::size_t n) {                                           \
        dcs::allocmeter::note_alloc(n);                                             \
        if (void* p = std::malloc(n ? n : 1)) return p;                             \
        throw std::bad_alloc();                                                     \
    }                                                                               \
    void operator delete(void* p) noexcept { std::free(p); }                        \
    void operator delete[](void* p) noexcept { std::free(p); }                      \
    void operator delete(void* p, std::size_t) noexcept { std::free(p); }           \
    void operator delete[](void* p, std::size_t) noexcept { std::free(p); }
