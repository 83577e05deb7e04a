#include "slfv/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace slfv {

BallUnion::BallUnion(std::vector<Ball> balls) : balls_(std::move(balls))
{
    if (balls_.empty()) throw std::invalid_argument("BallUnion: empty ball list");
    dim_ = static_cast<int>(balls_.front().center.size());
    if (dim_ < 1) throw std::invalid_argument("BallUnion: dimension must be >= 1");
    for (const Ball& b : balls_) {
        if (b.center.size() != dim_)
            throw std::invalid_argument("BallUnion: mixed dimensions");
        if (!(b.radius > 0.0))
            throw std::invalid_argument("BallUnion: radius must be positive");
    }
}

double ball_volume(int d, double r)
{
    if (d < 1) throw std::invalid_argument("ball_volume: d must be >= 1");
    if (!(r > 0.0)) throw std::invalid_argument("ball_volume: r must be positive");
    return std::pow(std::numbers::pi, 0.5 * d) * std::pow(r, d) / std::tgamma(0.5 * d + 1.0);
}

double sphere_area(int d, double r)
{
    return static_cast<double>(d) * ball_volume(d, r) / r;
}

BallUnion expansion(const BallUnion& u, double r)
{
    if (!(r > 0.0)) throw std::invalid_argument("expansion: r must be positive");
    std::vector<Ball> grown = u.balls();
    for (Ball& b : grown) b.radius += r;
    return BallUnion(std::move(grown));
}

int cover_count(std::span<const Ball> balls, double grow, const Point& x)
{
    int count = 0;
    for (const Ball& b : balls) {
        const double r = b.radius + grow;
        if ((x - b.center).squaredNorm() <= r * r) ++count;
    }
    return count;
}

int cover_count(const BallUnion& u, const Point& x)
{
    if (x.size() != u.dim()) throw std::invalid_argument("cover_count: dimension mismatch");
    return cover_count(std::span<const Ball>(u.balls()), 0.0, x);
}

bool contains(const BallUnion& u, const Point& x)
{
    return cover_count(u, x) > 0;
}

// Uniform point in the closed ball: direction uniform on the sphere, radial
// coordinate with density proportional to rho^{d-1}, i.e. rho = r u^{1/d}.
Point uniform_in_ball(const Ball& b, double grow, RngStream& rng)
{
    const int d = static_cast<int>(b.center.size());
    const double r = b.radius + grow;
    const double rho = r * std::pow(rng.uniform01(), 1.0 / d);
    return b.center + rho * rng.unit_vector(d);
}

Point mixture_sample(std::span<const Ball> balls, double grow, RngStream& rng)
{
    const int d = static_cast<int>(balls.front().center.size());
    std::vector<double> cum(balls.size());
    double total = 0.0;
    for (std::size_t i = 0; i < balls.size(); ++i) {
        total += ball_volume(d, balls[i].radius + grow);
        cum[i] = total;
    }
    const double pick = rng.uniform01() * total;
    const auto it = std::upper_bound(cum.begin(), cum.end(), pick);
    const std::size_t idx = std::min<std::size_t>(it - cum.begin(), balls.size() - 1);
    return uniform_in_ball(balls[idx], grow, rng);
}

Point sample_uniform(std::span<const Ball> balls, double grow, RngStream& rng,
                     SampleStats* stats, long max_attempts)
{
    const int d = static_cast<int>(balls.front().center.size());
    if (d == 1) {
        // Inverse CDF over the merged intervals: exactly uniform, one draw,
        // no rejection. Keeps long runs from paying O(balls) per attempt.
        const auto merged = merged_intervals_1d(balls, grow);
        double total = 0.0;
        for (const auto& [lo, hi] : merged) total += hi - lo;
        if (stats) stats->attempts = 1;
        double u = rng.uniform01() * total;
        for (const auto& [lo, hi] : merged) {
            const double len = hi - lo;
            if (u < len) return Point::Constant(1, std::min(lo + u, hi));
            u -= len;
        }
        return Point::Constant(1, merged.back().second); // u consumed by rounding
    }
    for (long attempt = 1; attempt <= max_attempts; ++attempt) {
        if (stats) stats->attempts = attempt;
        const Point x = mixture_sample(balls, grow, rng);
        const int cover = cover_count(balls, grow, x);
        if (cover < 1) continue; // rounding pushed x a hair outside; treat as rejection
        if (cover == 1 || rng.uniform01() * cover < 1.0) return x;
    }
    throw std::runtime_error("sample_uniform: retry cap exceeded");
}

Point sample_uniform(const BallUnion& u, RngStream& rng, SampleStats* stats,
                     long max_attempts)
{
    return sample_uniform(std::span<const Ball>(u.balls()), 0.0, rng, stats, max_attempts);
}

std::vector<std::pair<double, double>> merged_intervals_1d(std::span<const Ball> balls,
                                                           double grow)
{
    std::vector<std::pair<double, double>> raw;
    raw.reserve(balls.size());
    for (const Ball& b : balls) {
        const double r = b.radius + grow;
        raw.emplace_back(b.center[0] - r, b.center[0] + r);
    }
    std::sort(raw.begin(), raw.end());
    std::vector<std::pair<double, double>> merged;
    for (const auto& [lo, hi] : raw) {
        if (!merged.empty() && lo <= merged.back().second)
            merged.back().second = std::max(merged.back().second, hi);
        else
            merged.emplace_back(lo, hi);
    }
    return merged;
}

double union_length_1d(std::span<const Ball> balls, double grow)
{
    double len = 0.0;
    for (const auto& [lo, hi] : merged_intervals_1d(balls, grow)) len += hi - lo;
    return len;
}

Estimate union_volume_exact1d(const BallUnion& u)
{
    if (u.dim() != 1)
        throw std::invalid_argument("union_volume_exact1d: requires d = 1");
    return {union_length_1d(std::span<const Ball>(u.balls()), 0.0), 0.0};
}

Estimate union_volume_mc(std::span<const Ball> balls, double grow,
                         long n_samples, RngStream& rng)
{
    if (n_samples < 2) throw std::invalid_argument("union_volume_mc: need >= 2 samples");
    const int d = static_cast<int>(balls.front().center.size());

    std::vector<double> cum(balls.size());
    double total = 0.0;
    for (std::size_t i = 0; i < balls.size(); ++i) {
        total += ball_volume(d, balls[i].radius + grow);
        cum[i] = total;
    }

    // E[ total / cover_count ] over mixture draws equals the union volume.
    double sum = 0.0, sum_sq = 0.0;
    for (long s = 0; s < n_samples; ++s) {
        const double pick = rng.uniform01() * total;
        const auto it = std::upper_bound(cum.begin(), cum.end(), pick);
        const std::size_t idx = std::min<std::size_t>(it - cum.begin(), balls.size() - 1);
        const Point x = uniform_in_ball(balls[idx], grow, rng);
        const int cover = std::max(1, cover_count(balls, grow, x));
        const double z = total / cover;
        sum += z;
        sum_sq += z * z;
    }
    const double mean = sum / n_samples;
    const double var = std::max(0.0, (sum_sq - n_samples * mean * mean) / (n_samples - 1));
    return {mean, std::sqrt(var / n_samples)};
}

Estimate union_volume_mc(const BallUnion& u, long n_samples, RngStream& rng)
{
    return union_volume_mc(std::span<const Ball>(u.balls()), 0.0, n_samples, rng);
}

} // namespace slfv
