#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "slfv/chain.hpp"
#include "slfv/geometry.hpp"
#include "slfv/rng.hpp"

using namespace slfv;

namespace {

Point pt1(double x)
{
    Point p(1);
    p[0] = x;
    return p;
}

} // namespace

TEST_CASE("parameter validation")
{
    Params p;
    CHECK_NOTHROW(p.validate());
    auto bad = [](auto&& tweak) {
        Params q;
        tweak(q);
        CHECK_THROWS_AS(q.validate(), std::invalid_argument);
    };
    bad([](Params& q) { q.d = 0; });
    bad([](Params& q) { q.d = 9; });
    bad([](Params& q) { q.R = 0.0; });
    bad([](Params& q) { q.R = -1.0; });
    bad([](Params& q) { q.U = 0.0; });
    bad([](Params& q) { q.U = 1.0; });
    bad([](Params& q) { q.U = -0.2; });
    bad([](Params& q) { q.a = -0.1; });
    bad([](Params& q) { q.a = 1.1; });
    bad([](Params& q) { q.r0 = 0.0; });
    bad([](Params& q) { q.C0 = Point::Zero(2); }); // d = 1 but 2-d centre

    Params edge;
    edge.a = 0.0;
    CHECK_NOTHROW(edge.validate());
    edge.a = 1.0;
    CHECK_NOTHROW(edge.validate());
    edge.C0 = pt1(3.0);
    CHECK_NOTHROW(edge.validate());
    CHECK(edge.initial_center()[0] == 3.0);
    Params empty;
    CHECK(empty.initial_center() == Point::Zero(1));
}

TEST_CASE("initial state")
{
    Params p;
    p.a = 0.6;
    p.r0 = 1.5;
    const ChainState s = ChainState::initial(p);
    CHECK(s.step_count() == 0);
    CHECK(s.is_head());
    CHECK(s.positive_count() == 0);
    CHECK(s.last_positive_index() == 0);
    CHECK(s.cluster_view().size() == 1);
    CHECK(s.frequency(pt1(0.0)) == 0.6);
    CHECK(s.frequency(pt1(1.5)) == 0.6); // closed ball boundary
    CHECK(s.frequency(pt1(1.51)) == 0.0);
    CHECK(s.frequency(pt1(-7.0)) == 0.0);
    CHECK_THROWS_AS(s.at_step(1), std::out_of_range);
    CHECK_THROWS_AS(s.event(1), std::out_of_range);
}

TEST_CASE("trajectories are deterministic and prefix-stable")
{
    Params p;
    p.seed = 321;
    TrajectoryRunner a(p), b(p);
    a.advance(100);
    b.advance(40);
    b.advance(60);
    REQUIRE(a.state().step_count() == 100);
    REQUIRE(b.state().step_count() == 100);
    for (long k = 1; k <= 100; ++k) {
        const Event ea = a.state().event(k);
        const Event eb = b.state().event(k);
        CHECK(ea.index == k);
        CHECK(ea.center == eb.center);
        CHECK(ea.uniform == eb.uniform);
        CHECK(ea.positive == eb.positive);
        CHECK(ea.freq_at_center == eb.freq_at_center);
    }
    RngStream probes(6);
    for (int i = 0; i < 200; ++i) {
        const Point x = pt1(10.0 * probes.uniform01() - 5.0);
        CHECK(a.state().frequency(x) == b.state().frequency(x));
    }

    const ChainState via_run = run(p, 100);
    CHECK(via_run.step_count() == 100);
    CHECK(via_run.event(100).center == a.state().event(100).center);

    CHECK(run(p, 0).step_count() == 0);
}

TEST_CASE("snapshots share the log and expose the per-step history")
{
    Params p;
    p.seed = 11;
    TrajectoryRunner run(p);
    run.advance(50);
    const ChainState s20 = run.state().at_step(20);
    CHECK(s20.step_count() == 20);
    CHECK(!s20.is_head());
    CHECK(s20.event(20).index == 20);
    CHECK_THROWS_AS(s20.event(21), std::out_of_range);
    CHECK_THROWS_AS(run.state().at_step(51), std::out_of_range);
    CHECK_THROWS_AS(run.state().at_step(-1), std::out_of_range);

    // Only the head can be extended.
    CHECK_THROWS_AS(replay_append(s20, pt1(0.0), 0.5), std::logic_error);
    const auto [head2, ev] = replay_append(run.state(), pt1(0.25), 0.125);
    CHECK(head2.step_count() == 51);
    CHECK(ev.index == 51);
    CHECK(ev.uniform == 0.125);
}

TEST_CASE("first-step positive probability matches the closed form")
{
    // C_1 uniform on [-2, 2], positive iff V <= a 1{|C_1| <= 1}:
    // P = (1/2) a = 0.15 for a = 0.3.
    Params p;
    p.a = 0.3;
    StreamFamily fam(777);
    const long n = 100000;
    long hits = 0;
    for (long i = 0; i < n; ++i) {
        const ChainState s0 = ChainState::initial(p);
        RngStream centers = fam.stream(Stream::centers, static_cast<std::uint64_t>(i));
        RngStream uniforms = fam.stream(Stream::uniforms, static_cast<std::uint64_t>(i));
        hits += step(s0, centers, uniforms).second.positive;
    }
    const double phat = static_cast<double>(hits) / n;
    CHECK(std::abs(phat - 0.15) < 4.0 * std::sqrt(0.15 * 0.85 / n));
}

TEST_CASE("frequencies stay in [0, 1] and vanish off the cluster")
{
    Params p;
    p.seed = 47;
    p.a = 1.0;
    TrajectoryRunner run(p);
    run.advance(300);
    const ChainState& s = run.state();
    RngStream probes(12);
    const auto hull = merged_intervals_1d(s.cluster_view(), 2.0 * p.R);
    const double lo = hull.front().first, hi = hull.back().second;
    for (int i = 0; i < 500; ++i) {
        const Point x = pt1(lo + (hi - lo) * probes.uniform01());
        const double y = s.frequency(x);
        CHECK(y >= 0.0);
        CHECK(y <= 1.0);
        if (cover_count(s.cluster_view(), 0.0, x) == 0) CHECK(y == 0.0);
    }
}

TEST_CASE("the cluster only ever gains balls, and events stay inside its expansion")
{
    Params p;
    p.seed = 88;
    TrajectoryRunner run(p);
    run.advance(400);
    const ChainState& s = run.state();
    std::size_t prev = 0;
    for (long n = 0; n <= 400; ++n) {
        const auto view = s.at_step(n).cluster_view();
        CHECK(view.size() >= prev);
        CHECK(view.size() == 1 + static_cast<std::size_t>(s.at_step(n).positive_count()));
        prev = view.size();
    }
    // Prefix stability: the first balls of the final cluster are the balls
    // of every earlier cluster.
    const auto final_view = s.cluster_view();
    const auto mid_view = s.at_step(200).cluster_view();
    for (std::size_t i = 0; i < mid_view.size(); ++i) {
        CHECK(mid_view[i].center == final_view[i].center);
        CHECK(mid_view[i].radius == final_view[i].radius);
    }
    // Every sampled centre lies in the R-expansion of the pre-step cluster.
    for (long k = 1; k <= 400; ++k)
        CHECK(cover_count(s.at_step(k - 1).cluster_view(), p.R, s.event(k).center) >= 1);
    // And positive counts match the recorded positives.
    long positives = 0;
    for (long k = 1; k <= 400; ++k) positives += s.event(k).positive;
    CHECK(positives == s.positive_count());
}

TEST_CASE("cluster growth is bounded by one 2R ball per step")
{
    Params p;
    p.seed = 3;
    TrajectoryRunner run(p);
    run.advance(200);
    const double vol0R = union_length_1d(run.state().at_step(0).cluster_view(), p.R);
    const double v2R = ball_volume(1, 2.0 * p.R);
    for (long n = 0; n <= 200; ++n) {
        const double vol = union_length_1d(run.state().at_step(n).cluster_view(), p.R);
        CHECK(vol <= vol0R + static_cast<double>(n) * v2R + 1e-9);
    }
}

TEST_CASE("an a = 0 start never produces a positive event")
{
    Params p;
    p.a = 0.0;
    p.seed = 5;
    TrajectoryRunner run(p);
    run.advance(100);
    CHECK(run.state().last_positive_index() == 0);
    CHECK(run.state().positive_count() == 0);
    CHECK(run.state().frequency(pt1(0.0)) == 0.0);
    CHECK(run.state().cluster_view().size() == 1);
}

TEST_CASE("nonspatial single-site chain")
{
    RngStream rng(64);
    SUBCASE("absorbing at zero and one")
    {
        for (int i = 0; i < 1000; ++i) CHECK(nonspatial_step(0.0, 0.3, rng) == 0.0);
        for (int i = 0; i < 1000; ++i) CHECK(nonspatial_step(1.0, 0.5, rng) == 1.0);
    }
    SUBCASE("single-step martingale")
    {
        const double z = 0.37, U = 0.3;
        const long n = 200000;
        double sum = 0.0;
        for (long i = 0; i < n; ++i) sum += nonspatial_step(z, U, rng) - z;
        const double se = U * std::sqrt(z * (1.0 - z) / n);
        CHECK(std::abs(sum / n) < 4.0 * se);
    }
    SUBCASE("moves are exactly the two-point kernel")
    {
        const double z = 0.6, U = 0.25;
        bool up = false, down = false;
        for (int i = 0; i < 200; ++i) {
            const double z2 = nonspatial_step(z, U, rng);
            if (z2 > z) {
                CHECK(z2 == (1.0 - U) * z + U);
                up = true;
            } else {
                CHECK(z2 == (1.0 - U) * z);
                down = true;
            }
        }
        CHECK(up);
        CHECK(down);
    }
}

TEST_CASE("coupled chains preserve pointwise domination")
{
    Params lo;
    lo.a = 0.6;
    lo.r0 = 1.0;
    Params hi;
    hi.a = 1.0;
    hi.r0 = 2.0;
    ChainState lower = ChainState::initial(lo);
    ChainState upper = ChainState::initial(hi);
    StreamFamily fam(2025);
    RngStream centers = fam.stream(Stream::centers);
    RngStream uniforms = fam.stream(Stream::uniforms);
    RngStream probes = fam.stream(Stream::probes);
    for (int n = 0; n < 200; ++n) {
        std::tie(lower, upper) = coupled_step(lower, upper, centers, uniforms);
        for (int i = 0; i < 20; ++i) {
            const Point x = sample_uniform(upper.cluster_view(), 2.0 * hi.R, probes);
            CHECK(lower.frequency(x) <= upper.frequency(x));
        }
    }
    CHECK(upper.step_count() == 200);
    CHECK(lower.step_count() <= 200);
    CHECK(lower.step_count() >= 1); // shared centre region is most of the upper cluster

    // A chain coupled with itself stays identical.
    Params p;
    p.seed = 9;
    ChainState a = ChainState::initial(p);
    ChainState b = ChainState::initial(p);
    RngStream c2 = fam.stream(Stream::centers, 1);
    RngStream u2 = fam.stream(Stream::uniforms, 1);
    for (int n = 0; n < 100; ++n) std::tie(a, b) = coupled_step(a, b, c2, u2);
    CHECK(a.step_count() == 100);
    CHECK(b.step_count() == 100);
    for (long k = 1; k <= 100; ++k) {
        CHECK(a.event(k).center == b.event(k).center);
        CHECK(a.event(k).positive == b.event(k).positive);
    }
}

TEST_CASE("coupled_step rejects incompatible pairs")
{
    Params lo, hi;
    hi.R = 2.0;
    ChainState lower = ChainState::initial(lo);
    ChainState upper = ChainState::initial(hi);
    StreamFamily fam(1);
    RngStream c = fam.stream(Stream::centers);
    RngStream u = fam.stream(Stream::uniforms);
    CHECK_THROWS_AS(coupled_step(lower, upper, c, u), std::invalid_argument);

    // Same parameters but the lower cluster pokes out of the upper one.
    Params far;
    far.C0 = pt1(10.0);
    ChainState displaced = ChainState::initial(far);
    CHECK_THROWS_AS(coupled_step(displaced, ChainState::initial(lo), c, u),
                    std::invalid_argument);
}

TEST_CASE("jump schedule of the continuous-time embedding")
{
    Params p;
    p.seed = 14;
    SUBCASE("zero steps gives the degenerate schedule [0]")
    {
        const ChainState s = ChainState::initial(p);
        StreamFamily fam(p.seed);
        RngStream exps = fam.stream(Stream::exponentials);
        const ClockSchedule sch = jump_schedule(s, exps, RateMethod::exact1d);
        REQUIRE(sch.jump_times.size() == 1);
        CHECK(sch.jump_times[0] == 0.0);
        CHECK(sch.rates.empty());
    }
    SUBCASE("rates are the exact expanded-cluster volumes")
    {
        TrajectoryRunner run(p);
        run.advance(30);
        StreamFamily fam(p.seed);
        RngStream exps = fam.stream(Stream::exponentials);
        const ClockSchedule sch = jump_schedule(run.state(), exps, RateMethod::exact1d);
        REQUIRE(sch.jump_times.size() == 31);
        REQUIRE(sch.rates.size() == 30);
        CHECK(sch.jump_times[0] == 0.0);
        for (std::size_t k = 1; k < sch.jump_times.size(); ++k) {
            CHECK(sch.jump_times[k] > sch.jump_times[k - 1]);
            const auto pre = run.state().at_step(static_cast<long>(k - 1)).cluster_view();
            CHECK(sch.rates[k - 1].value == union_length_1d(pre, p.R));
            CHECK(sch.rates[k - 1].stderror == 0.0);
        }
        // Deterministic: the same stream seed reproduces the schedule.
        RngStream exps2 = StreamFamily(p.seed).stream(Stream::exponentials);
        const ClockSchedule again = jump_schedule(run.state(), exps2, RateMethod::exact1d);
        CHECK(again.jump_times == sch.jump_times);
    }
    SUBCASE("Monte Carlo rates agree with exact within four standard errors")
    {
        TrajectoryRunner run(p);
        run.advance(10);
        StreamFamily fam(p.seed);
        RngStream exps = fam.stream(Stream::exponentials);
        RngStream est = fam.stream(Stream::estimator);
        const ClockSchedule sch =
            jump_schedule(run.state(), exps, RateMethod::monte_carlo, 40000, &est);
        for (std::size_t k = 0; k < sch.rates.size(); ++k) {
            const auto pre = run.state().at_step(static_cast<long>(k)).cluster_view();
            const double exact = union_length_1d(pre, p.R);
            CHECK(sch.rates[k].stderror > 0.0);
            CHECK(std::abs(sch.rates[k].value - exact) <= 4.0 * sch.rates[k].stderror);
        }
    }
}

TEST_CASE("continuous-time queries select the step holding at time t")
{
    Params p;
    p.seed = 23;
    TrajectoryRunner run(p);
    run.advance(5);
    StreamFamily fam(p.seed);
    RngStream exps = fam.stream(Stream::exponentials);
    const ClockSchedule sch = jump_schedule(run.state(), exps, RateMethod::exact1d);
    const Point x = pt1(0.3);

    CHECK(continuous_query(sch, run.state(), 0.0, x) == run.state().at_step(0).frequency(x));
    const double just_before =
        std::nextafter(sch.jump_times[1], 0.0);
    CHECK(continuous_query(sch, run.state(), just_before, x)
          == run.state().at_step(0).frequency(x));
    // Intervals are left-closed: at T_1 the state has already jumped.
    CHECK(continuous_query(sch, run.state(), sch.jump_times[1], x)
          == run.state().at_step(1).frequency(x));
    const double mid = 0.5 * (sch.jump_times[2] + sch.jump_times[3]);
    CHECK(continuous_query(sch, run.state(), mid, x)
          == run.state().at_step(2).frequency(x));

    CHECK_THROWS_AS(continuous_query(sch, run.state(), sch.jump_times.back(), x),
                    std::out_of_range);
    CHECK_THROWS_AS(continuous_query(sch, run.state(), 1e18, x), std::out_of_range);
    CHECK_THROWS_AS(continuous_query(sch, run.state(), -0.1, x), std::invalid_argument);
    CHECK_THROWS_AS(continuous_query(sch, run.state(), 0.0, Point::Zero(2)),
                    std::invalid_argument);
}

TEST_CASE("long runs freeze: the tail past the last positive event is all negative")
{
    Params p;
    p.seed = 6;
    TrajectoryRunner run(p);
    run.advance(2000);
    const ChainState& s = run.state();
    const long kappa = s.last_positive_index();
    CHECK(kappa >= 1);
    CHECK(kappa < 2000);
    for (long k = kappa + 1; k <= 2000; ++k) CHECK(!s.event(k).positive);
    // The frequency at the initial centre has been beaten down by the
    // negative tail; it must be tiny but still nonnegative.
    const double y = s.frequency(p.initial_center());
    CHECK(y >= 0.0);
    CHECK(y < 1e-3);
}
