#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "slfv/rng.hpp"

namespace slfv {

using Point = Eigen::VectorXd;

/// A value together with its Monte Carlo standard error (0 for exact results).
struct Estimate {
    double value = 0.0;
    double stderror = 0.0;
};

/// Closed ball {x : ||x - center|| <= radius} in R^d.
struct Ball {
    Point center;
    double radius = 0.0;
};

/// Finite union of closed balls sharing one dimension. Possibly overlapping;
/// membership means lying in at least one ball.
class BallUnion {
public:
    explicit BallUnion(std::vector<Ball> balls);

    int dim() const { return dim_; }
    std::size_t size() const { return balls_.size(); }
    const std::vector<Ball>& balls() const { return balls_; }

private:
    std::vector<Ball> balls_;
    int dim_;
};

/// Volume of the radius-r ball in dimension d: pi^{d/2} r^d / Gamma(d/2 + 1).
double ball_volume(int d, double r);

/// Surface area of the radius-r sphere in dimension d, S(r) = d V(r) / r.
double sphere_area(int d, double r);

/// Grows every ball's radius by r. For ball unions this is exactly the
/// r-expansion {x : dist(x, u) <= r}.
BallUnion expansion(const BallUnion& u, double r);

/// Number of balls of u containing x (closed-ball test).
int cover_count(const BallUnion& u, const Point& x);
bool contains(const BallUnion& u, const Point& x);

struct SampleStats {
    long attempts = 0;
};

inline constexpr long kDefaultMaxSampleAttempts = 1'000'000;

/// Exact uniform sample on the union. For d = 1 this inverts the CDF over
/// the merged intervals (one draw, no rejection). For d >= 2 it picks a
/// ball with probability proportional to its volume, draws uniformly
/// inside it (uniform direction, radius scaled by u^{1/d}), then accepts
/// with probability 1/cover_count; acceptance rate is at least 1/size(u)
/// and the call throws if max_attempts rejections happen.
Point sample_uniform(const BallUnion& u, RngStream& rng,
                     SampleStats* stats = nullptr,
                     long max_attempts = kDefaultMaxSampleAttempts);

/// Exact total length of a 1-d union via interval merging. stderror = 0.
Estimate union_volume_exact1d(const BallUnion& u);

/// Unbiased volume estimate in any dimension: mixture sampling over the
/// balls with per-sample weight (sum of ball volumes) / cover_count.
Estimate union_volume_mc(const BallUnion& u, long n_samples, RngStream& rng);

// Span-level kernels behind the BallUnion operations. `grow` inflates every
// radius on the fly, which lets the chain sample from an R-expansion without
// materialising it.
int cover_count(std::span<const Ball> balls, double grow, const Point& x);

/// Uniform point in the closed ball (radius inflated by grow): uniform
/// direction, radial coordinate with density proportional to rho^{d-1}.
Point uniform_in_ball(const Ball& b, double grow, RngStream& rng);

/// One draw from the ball mixture: a ball picked with probability
/// proportional to its volume, then a uniform point inside it. The draw
/// covers the union but overweights overlaps by cover_count, so estimators
/// divide by the cover count.
Point mixture_sample(std::span<const Ball> balls, double grow, RngStream& rng);
Point sample_uniform(std::span<const Ball> balls, double grow, RngStream& rng,
                     SampleStats* stats = nullptr,
                     long max_attempts = kDefaultMaxSampleAttempts);
Estimate union_volume_mc(std::span<const Ball> balls, double grow,
                         long n_samples, RngStream& rng);

/// Sorted disjoint intervals covering a 1-d ball union (radii inflated by
/// `grow`).
std::vector<std::pair<double, double>> merged_intervals_1d(std::span<const Ball> balls,
                                                           double grow);
double union_length_1d(std::span<const Ball> balls, double grow);

} // namespace slfv
