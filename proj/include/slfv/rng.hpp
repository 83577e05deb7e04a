#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace slfv {

/// Deterministic random stream. Uniform doubles are built from the raw
/// 53 high bits of the engine output, so draws do not depend on
/// libstdc++'s distribution internals and are reproducible bit for bit.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform on [0, 1).
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1), never exactly 0 or 1.
    double uniform_open01()
    {
        return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Exp(1) draw, strictly positive and finite.
    double exponential() { return -std::log(uniform_open01()); }

    /// Standard normal via Box-Muller. The sine partner is discarded so the
    /// draw count per call is fixed.
    double gaussian()
    {
        const double u1 = uniform_open01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Uniform direction on the unit sphere in R^d.
    Eigen::VectorXd unit_vector(int d)
    {
        Eigen::VectorXd v(d);
        while (true) {
            for (int i = 0; i < d; ++i) v[i] = gaussian();
            const double n = v.norm();
            if (n > 1e-300) return v / n;
        }
    }

private:
    std::mt19937_64 gen_;
};

/// Purpose tags for the per-purpose substreams of a trajectory.
enum class Stream : std::uint64_t {
    centers = 1,       // event centers C_n
    uniforms = 2,      // parent-sampling uniforms V_n
    exponentials = 3,  // jump-time Exp(1) draws
    estimator = 4,     // Monte Carlo estimator sampling
    probes = 5,        // probe-point generation for reports
};

constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Fans a single root seed out to independent substreams keyed by
/// (purpose, index). Estimator streams are separate from the trajectory
/// streams, so changing a sample count never perturbs the trajectory.
class StreamFamily {
public:
    explicit StreamFamily(std::uint64_t root) : root_(root) {}

    RngStream stream(Stream purpose, std::uint64_t index = 0) const
    {
        std::uint64_t h = splitmix64(root_ ^ (0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(purpose) + 1)));
        h = splitmix64(h ^ (0xC2B2AE3D27D4EB4Full * (index + 1)));
        return RngStream(h);
    }

    std::uint64_t root() const { return root_; }

private:
    std::uint64_t root_;
};

} // namespace slfv
