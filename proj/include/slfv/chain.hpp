#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "slfv/geometry.hpp"
#include "slfv/rng.hpp"

namespace slfv {

/// Model and run parameters for one trajectory.
struct Params {
    int d = 1;              // spatial dimension
    double R = 1.0;         // reproduction event radius
    double U = 0.5;         // impact fraction, strictly inside (0, 1)
    double a = 1.0;         // initial frequency on the initial ball
    double r0 = 1.0;        // initial ball radius
    Point C0;               // initial ball centre; zeros(d) if empty
    std::uint64_t seed = 1;

    void validate() const; // throws std::invalid_argument
    Point initial_center() const;
};

/// One piece of ball-union initial data: constant value on a ball.
struct InitialBlock {
    Ball ball;
    double value = 0.0;
};

/// One reproduction event of the chain.
struct Event {
    long index = 0;          // step number n >= 1
    Point center;            // C_n
    double uniform = 0.0;    // V_n
    bool positive = false;   // eps_n = 1{V_n <= Y_{n-1}(C_n)}
    double freq_at_center = 0.0; // Y_{n-1}(C_n), recorded at creation
};

class EventLog;

/// Immutable snapshot of the chain after `step_count()` events. Snapshots
/// share the append-only log structurally, so copies are cheap. Only the
/// head snapshot may be extended, and extending must not race with reads.
class ChainState {
public:
    static ChainState initial(const Params& p);
    static ChainState initial(const Params& p, std::vector<InitialBlock> blocks);

    const Params& params() const;
    long step_count() const { return n_; }
    bool is_head() const;

    ChainState at_step(long n) const;
    Event event(long k) const; // k in [1, step_count()]

    /// Frequency Y_n(x), replaying only the events whose ball covers x.
    double frequency(const Point& x) const;

    /// Cluster balls: initial balls followed by the positive-event balls
    /// with index <= n. The cluster never loses a ball.
    std::span<const Ball> cluster_view() const;
    BallUnion cluster() const;

    long last_positive_index() const; // 0 if no positive event yet
    long positive_count() const;
    const std::vector<InitialBlock>& initial_blocks() const;

private:
    ChainState(std::shared_ptr<EventLog> log, long n) : log_(std::move(log)), n_(n) {}
    friend std::pair<ChainState, Event> replay_append(const ChainState&, Point, double);

    std::shared_ptr<EventLog> log_;
    long n_ = 0;
};

inline double evaluate_frequency(const ChainState& s, const Point& x)
{
    return s.frequency(x);
}

/// Applies one event with the given centre and uniform draw to the head
/// state. Used by step(), the coupling, and log replay from disk.
std::pair<ChainState, Event> replay_append(const ChainState& head, Point center,
                                           double uniform);

/// One chain transition: C ~ uniform on the R-expansion of the cluster,
/// V ~ uniform[0,1], positive iff V <= Y_n(C).
std::pair<ChainState, Event> step(const ChainState& head, RngStream& centers,
                                  RngStream& uniforms);

/// Non-spatial chain update: eps ~ Bernoulli(z), returns (1-U) z + U eps.
double nonspatial_step(double z, double U, RngStream& rng);

/// One coupled transition. The upper chain draws (C, V) and always applies
/// them; the lower chain applies the same pair only when C falls inside its
/// own R-expanded cluster. Both chains must share (d, R, U) and every lower
/// cluster ball must sit inside an upper cluster ball.
std::pair<ChainState, ChainState> coupled_step(const ChainState& lower,
                                               const ChainState& upper,
                                               RngStream& centers,
                                               RngStream& uniforms);

using StepHook = std::function<void(const ChainState& post, const Event&)>;

/// Owns the per-purpose random substreams of one trajectory and advances the
/// chain. Extending a run re-creates the exact prefix a shorter run produced.
class TrajectoryRunner {
public:
    explicit TrajectoryRunner(const Params& p);
    TrajectoryRunner(const Params& p, std::vector<InitialBlock> blocks);

    const ChainState& state() const { return head_; }
    void advance(long steps, const StepHook& hook = {});

private:
    ChainState head_;
    RngStream centers_;
    RngStream uniforms_;
};

/// Runs a fresh trajectory for n_steps, invoking each hook after every step.
ChainState run(const Params& p, long n_steps, std::span<const StepHook> hooks = {});

enum class RateMethod { exact1d, monte_carlo };

/// Jump times of the continuous-time embedding.
struct ClockSchedule {
    std::vector<double> jump_times;  // T_0 = 0 < T_1 < ...
    std::vector<Estimate> rates;     // lambda(Y_{k-1}) for k = 1..n
};

/// T_n = sum_k E_k / lambda(Y_{k-1}) with lambda the volume of the
/// R-expanded cluster and E_k i.i.d. Exp(1) from the exponentials stream.
ClockSchedule jump_schedule(const ChainState& trajectory, RngStream& exponentials,
                            RateMethod method, long mc_samples = 100'000,
                            RngStream* estimator = nullptr);

/// X_t(x) = Y_n(x) for the unique n with T_n <= t < T_{n+1}.
double continuous_query(const ClockSchedule& schedule, const ChainState& trajectory,
                        double t, const Point& x);

} // namespace slfv
