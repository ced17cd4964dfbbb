#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace saplda {

/// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Seeded generator with hand-written samplers. The std:: distributions are
// implementation-defined, so they are avoided to keep outputs identical
// across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1).
    double uniform();
    /// Uniform on (0, 1]; safe to take log of.
    double uniform_open();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);

    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// log of a Gamma(shape, 1) draw. Works for tiny shapes where the draw
    /// itself underflows to zero.
    double log_gamma_variate(double shape);

    /// Symmetric or general Dirichlet draw.
    std::vector<double> dirichlet(std::span<const double> alpha);

    /// Index drawn with probability proportional to weights.
    std::size_t categorical(std::span<const double> weights);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace saplda
