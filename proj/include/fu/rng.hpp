#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fu {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Folds a master seed and any number of stream coordinates (client id,
/// round, purpose tag) into an independent 64-bit seed. The result depends
/// only on the values, never on call order elsewhere in the program.
constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::initializer_list<std::uint64_t> coords) noexcept {
    std::uint64_t h = splitmix64(master);
    for (auto c : coords) h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
    return h;
}

// Purpose tags keep streams derived from the same master seed apart.
namespace stream {
inline constexpr std::uint64_t kLocalTraining = 1;
inline constexpr std::uint64_t kClientSelection = 2;
inline constexpr std::uint64_t kPartition = 3;
inline constexpr std::uint64_t kBackdoor = 4;
inline constexpr std::uint64_t kWatermark = 5;
inline constexpr std::uint64_t kFineTune = 6;
inline constexpr std::uint64_t kContinueTraining = 7;
inline constexpr std::uint64_t kAscent = 8;
inline constexpr std::uint64_t kSynthetic = 9;
} // namespace stream

} // namespace fu
