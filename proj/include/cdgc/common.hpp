#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cdgc {

// Error taxonomy. The CLI maps these onto its exit-code contract:
// check failures -> 1, usage/config/parse problems -> 2.
struct DimError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ArgError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Kernel thread budget. Default is 1; kernels only open OpenMP regions when
// this is raised. Batched kernels assign each output slice to exactly one
// thread, so results are bitwise stable for a fixed thread count.
int get_num_threads();
void set_num_threads(int n);

// Deterministic splitmix64 RNG. Distributions are derived from the raw
// 64-bit draws by explicit arithmetic (std:: distributions are
// implementation-defined, which would break bitwise reproducibility
// across toolchains).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next_u64();

    // uniform in [0, 1) with 53-bit resolution
    double uniform();
    double uniform(double lo, double hi);

    // standard normal via Box-Muller (second value cached)
    double normal();

    // uniform integer in [lo, hi] inclusive
    int uniform_int(int lo, int hi);

  private:
    std::uint64_t state_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace cdgc
