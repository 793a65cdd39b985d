#include "cdgc/common.hpp"

#include <cmath>

namespace cdgc {

namespace {
int g_num_threads = 1;
}

int get_num_threads() { return g_num_threads; }

void set_num_threads(int n) {
    if (n < 1) throw ArgError("thread count must be >= 1, got " + std::to_string(n));
    g_num_threads = n;
}

std::uint64_t Rng::next_u64() {
    // splitmix64; small state, full 64-bit output, trivially portable
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (have_cached_) {
        have_cached_ = false;
        return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(theta);
    have_cached_ = true;
    return r * std::cos(theta);
}

int Rng::uniform_int(int lo, int hi) {
    if (hi < lo) throw ArgError("uniform_int: empty range");
    std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
}

}  // namespace cdgc
