#include "slfv/chain.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_map>

namespace slfv {

void Params::validate() const
{
    if (d < 1 || d > 8)
        throw std::invalid_argument("Params: d must be in [1, 8]");
    if (!(R > 0.0) || !std::isfinite(R))
        throw std::invalid_argument("Params: R must be positive and finite");
    if (!(U > 0.0) || !(U < 1.0))
        throw std::invalid_argument("Params: U must lie strictly in (0, 1)");
    if (!(a >= 0.0) || !(a <= 1.0))
        throw std::invalid_argument("Params: a must lie in [0, 1]");
    if (!(r0 > 0.0) || !std::isfinite(r0))
        throw std::invalid_argument("Params: r0 must be positive and finite");
    if (C0.size() != 0 && C0.size() != d)
        throw std::invalid_argument("Params: C0 dimension does not match d");
}

Point Params::initial_center() const
{
    return C0.size() == d ? C0 : Point(Point::Zero(d));
}

namespace {

// Grid cell key for the event spatial index. Cells have side R, so a query
// point's cell already holds every event ball that can cover it.
struct CellKey {
    std::array<std::int32_t, 8> c{};
    bool operator==(const CellKey&) const = default;
};

struct CellKeyHash {
    std::size_t operator()(const CellKey& k) const noexcept
    {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (std::int32_t v : k.c) {
            h ^= static_cast<std::uint32_t>(v);
            h *= 0x100000001b3ULL;
        }
        return static_cast<std::size_t>(h);
    }
};

} // namespace

class EventLog {
public:
    EventLog(const Params& p, std::vector<InitialBlock> blocks)
        : params_(p), initial_(std::move(blocks))
    {
        params_.validate();
        for (const auto& blk : initial_) {
            if (blk.ball.center.size() != params_.d)
                throw std::invalid_argument("EventLog: initial block dimension mismatch");
            if (!(blk.ball.radius > 0.0))
                throw std::invalid_argument("EventLog: initial block radius must be positive");
            if (!(blk.value >= 0.0) || !(blk.value <= 1.0))
                throw std::invalid_argument("EventLog: initial block value outside [0, 1]");
            cluster_balls_.push_back(blk.ball);
        }
        if (cluster_balls_.empty())
            throw std::invalid_argument("EventLog: need at least one initial ball");
        centers_.resize(params_.d, 16);
    }

    const Params& params() const { return params_; }
    const std::vector<InitialBlock>& initial_blocks() const { return initial_; }
    long size() const { return size_; }

    double frequency(const Point& x, long n) const
    {
        if (x.size() != params_.d)
            throw std::invalid_argument("frequency: point dimension mismatch");
        double y = 0.0;
        for (const auto& blk : initial_) {
            const double r = blk.ball.radius;
            if ((x - blk.ball.center).squaredNorm() <= r * r)
                y = std::max(y, blk.value);
        }
        auto it = grid_.find(cell_of(x));
        if (it != grid_.end()) {
            const double U = params_.U;
            const double R2 = params_.R * params_.R;
            for (long k : it->second) { // ascending creation order
                if (k >= n)
                    break;
                if ((x - centers_.col(k)).squaredNorm() <= R2)
                    y = (1.0 - U) * y + U * (positive_[k] ? 1.0 : 0.0);
            }
        }
        return y;
    }

    Event append(Point center, double uniform)
    {
        if (center.size() != params_.d)
            throw std::invalid_argument("append: centre dimension mismatch");
        if (!(uniform >= 0.0) || !(uniform < 1.0))
            throw std::invalid_argument("append: uniform draw outside [0, 1)");

        Event ev;
        ev.index = size_ + 1;
        ev.freq_at_center = frequency(center, size_);
        ev.positive = uniform <= ev.freq_at_center;
        ev.uniform = uniform;
        ev.center = std::move(center);

        if (size_ == centers_.cols())
            centers_.conservativeResize(Eigen::NoChange, centers_.cols() * 2);
        centers_.col(size_) = ev.center;
        uniforms_.push_back(ev.uniform);
        freqs_.push_back(ev.freq_at_center);
        positive_.push_back(ev.positive);
        register_in_grid(ev.center, size_);
        if (ev.positive) {
            positive_idx_.push_back(ev.index);
            cluster_balls_.push_back(Ball{ev.center, params_.R});
        }
        ++size_;
        return ev;
    }

    Event event(long k) const
    {
        if (k < 1 || k > size_)
            throw std::out_of_range("event: index outside [1, step_count]");
        Event ev;
        ev.index = k;
        ev.center = centers_.col(k - 1);
        ev.uniform = uniforms_[k - 1];
        ev.positive = positive_[k - 1];
        ev.freq_at_center = freqs_[k - 1];
        return ev;
    }

    std::span<const Ball> cluster_view(long n) const
    {
        const auto cut = std::upper_bound(positive_idx_.begin(), positive_idx_.end(), n);
        const std::size_t count = initial_.size()
            + static_cast<std::size_t>(cut - positive_idx_.begin());
        return {cluster_balls_.data(), count};
    }

    long last_positive_index(long n) const
    {
        const auto cut = std::upper_bound(positive_idx_.begin(), positive_idx_.end(), n);
        return cut == positive_idx_.begin() ? 0 : *(cut - 1);
    }

    long positive_count(long n) const
    {
        const auto cut = std::upper_bound(positive_idx_.begin(), positive_idx_.end(), n);
        return static_cast<long>(cut - positive_idx_.begin());
    }

private:
    CellKey cell_of(const Point& x) const
    {
        CellKey key;
        for (int i = 0; i < params_.d; ++i) {
            const double c = std::floor(x[i] / params_.R);
            if (std::abs(c) > 2e9)
                throw std::runtime_error("spatial index: coordinate overflow");
            key.c[i] = static_cast<std::int32_t>(c);
        }
        return key;
    }

    // Register event k in every cell its ball's bounding box meets, so a
    // single-cell lookup at query time sees all candidate events.
    void register_in_grid(const Point& center, long k)
    {
        std::array<std::int32_t, 8> lo{};
        std::array<std::int32_t, 8> hi{};
        for (int i = 0; i < params_.d; ++i) {
            lo[i] = static_cast<std::int32_t>(std::floor((center[i] - params_.R) / params_.R));
            hi[i] = static_cast<std::int32_t>(std::floor((center[i] + params_.R) / params_.R));
        }
        CellKey key;
        std::array<std::int32_t, 8> cur = lo;
        for (;;) {
            key.c = cur;
            for (int i = params_.d; i < 8; ++i)
                key.c[i] = 0;
            grid_[key].push_back(k);
            int i = 0;
            while (i < params_.d && cur[i] == hi[i]) {
                cur[i] = lo[i];
                ++i;
            }
            if (i == params_.d)
                break;
            ++cur[i];
        }
    }

    Params params_;
    std::vector<InitialBlock> initial_;
    long size_ = 0;
    Eigen::MatrixXd centers_;        // one column per event
    std::vector<double> uniforms_;
    std::vector<double> freqs_;
    std::vector<char> positive_;
    std::vector<long> positive_idx_; // indices of positive events, ascending
    std::vector<Ball> cluster_balls_;
    std::unordered_map<CellKey, std::vector<long>, CellKeyHash> grid_;
};

ChainState ChainState::initial(const Params& p)
{
    std::vector<InitialBlock> blocks;
    blocks.push_back(InitialBlock{Ball{p.initial_center(), p.r0}, p.a});
    return initial(p, std::move(blocks));
}

ChainState ChainState::initial(const Params& p, std::vector<InitialBlock> blocks)
{
    return {std::make_shared<EventLog>(p, std::move(blocks)), 0};
}

const Params& ChainState::params() const { return log_->params(); }

bool ChainState::is_head() const { return n_ == log_->size(); }

ChainState ChainState::at_step(long n) const
{
    if (n < 0 || n > log_->size())
        throw std::out_of_range("at_step: step outside recorded range");
    return {log_, n};
}

Event ChainState::event(long k) const
{
    if (k > n_)
        throw std::out_of_range("event: index beyond this snapshot");
    return log_->event(k);
}

double ChainState::frequency(const Point& x) const { return log_->frequency(x, n_); }

std::span<const Ball> ChainState::cluster_view() const { return log_->cluster_view(n_); }

BallUnion ChainState::cluster() const
{
    auto view = cluster_view();
    return BallUnion(std::vector<Ball>(view.begin(), view.end()));
}

long ChainState::last_positive_index() const { return log_->last_positive_index(n_); }

long ChainState::positive_count() const { return log_->positive_count(n_); }

const std::vector<InitialBlock>& ChainState::initial_blocks() const
{
    return log_->initial_blocks();
}

std::pair<ChainState, Event> replay_append(const ChainState& head, Point center,
                                           double uniform)
{
    if (!head.is_head())
        throw std::logic_error("replay_append: only the head state can be extended");
    Event ev = head.log_->append(std::move(center), uniform);
    return {ChainState(head.log_, head.n_ + 1), ev};
}

std::pair<ChainState, Event> step(const ChainState& head, RngStream& centers,
                                  RngStream& uniforms)
{
    Point c = sample_uniform(head.cluster_view(), head.params().R, centers);
    const double v = uniforms.uniform01();
    return replay_append(head, std::move(c), v);
}

double nonspatial_step(double z, double U, RngStream& rng)
{
    if (!(z >= 0.0) || !(z <= 1.0))
        throw std::invalid_argument("nonspatial_step: z outside [0, 1]");
    if (!(U > 0.0) || !(U < 1.0))
        throw std::invalid_argument("nonspatial_step: U outside (0, 1)");
    const double eps = rng.uniform01() < z ? 1.0 : 0.0;
    return (1.0 - U) * z + U * eps;
}

std::pair<ChainState, ChainState> coupled_step(const ChainState& lower,
                                               const ChainState& upper,
                                               RngStream& centers,
                                               RngStream& uniforms)
{
    const Params& lp = lower.params();
    const Params& up = upper.params();
    if (lp.d != up.d || lp.R != up.R || lp.U != up.U)
        throw std::invalid_argument("coupled_step: chains must share d, R and U");
    for (const Ball& lb : lower.cluster_view()) {
        bool inside = false;
        for (const Ball& ub : upper.cluster_view()) {
            const double slack = ub.radius - lb.radius;
            if (slack >= 0.0 && (lb.center - ub.center).norm() <= slack) {
                inside = true;
                break;
            }
        }
        if (!inside)
            throw std::invalid_argument(
                "coupled_step: lower cluster not contained in upper cluster");
    }

    Point c = sample_uniform(upper.cluster_view(), up.R, centers);
    const double v = uniforms.uniform01();

    auto [upper2, uev] = replay_append(upper, c, v);
    (void)uev;
    ChainState lower2 = lower;
    if (cover_count(lower.cluster_view(), lp.R, c) >= 1)
        lower2 = replay_append(lower, std::move(c), v).first;
    return {lower2, upper2};
}

TrajectoryRunner::TrajectoryRunner(const Params& p)
    : head_(ChainState::initial(p)),
      centers_(StreamFamily(p.seed).stream(Stream::centers)),
      uniforms_(StreamFamily(p.seed).stream(Stream::uniforms))
{
}

TrajectoryRunner::TrajectoryRunner(const Params& p, std::vector<InitialBlock> blocks)
    : head_(ChainState::initial(p, std::move(blocks))),
      centers_(StreamFamily(p.seed).stream(Stream::centers)),
      uniforms_(StreamFamily(p.seed).stream(Stream::uniforms))
{
}

void TrajectoryRunner::advance(long steps, const StepHook& hook)
{
    for (long i = 0; i < steps; ++i) {
        auto [next, ev] = step(head_, centers_, uniforms_);
        head_ = next;
        if (hook)
            hook(head_, ev);
    }
}

ChainState run(const Params& p, long n_steps, std::span<const StepHook> hooks)
{
    TrajectoryRunner runner(p);
    StepHook fanout;
    if (!hooks.empty())
        fanout = [&hooks](const ChainState& s, const Event& ev) {
            for (const auto& h : hooks)
                if (h)
                    h(s, ev);
        };
    runner.advance(n_steps, fanout);
    return runner.state();
}

ClockSchedule jump_schedule(const ChainState& trajectory, RngStream& exponentials,
                            RateMethod method, long mc_samples, RngStream* estimator)
{
    const Params& p = trajectory.params();
    if (method == RateMethod::exact1d && p.d != 1)
        throw std::invalid_argument("jump_schedule: exact rates need d = 1");
    if (method == RateMethod::monte_carlo && estimator == nullptr)
        throw std::invalid_argument("jump_schedule: Monte Carlo rates need an estimator stream");

    ClockSchedule out;
    out.jump_times.push_back(0.0);
    for (long k = 1; k <= trajectory.step_count(); ++k) {
        auto span = trajectory.at_step(k - 1).cluster_view();
        Estimate rate;
        if (method == RateMethod::exact1d)
            rate.value = union_length_1d(span, p.R);
        else
            rate = union_volume_mc(span, p.R, mc_samples, *estimator);
        if (!(rate.value > 0.0))
            throw std::runtime_error("jump_schedule: nonpositive rate estimate");
        out.rates.push_back(rate);
        out.jump_times.push_back(out.jump_times.back() + exponentials.exponential() / rate.value);
    }
    return out;
}

double continuous_query(const ClockSchedule& schedule, const ChainState& trajectory,
                        double t, const Point& x)
{
    if (!(t >= 0.0))
        throw std::invalid_argument("continuous_query: t must be nonnegative");
    if (schedule.jump_times.size() != static_cast<std::size_t>(trajectory.step_count()) + 1)
        throw std::invalid_argument("continuous_query: schedule does not match trajectory");
    if (t >= schedule.jump_times.back()) {
        // Beyond T_n the value of X_t is not determined by a finite log.
        throw std::out_of_range("continuous_query: t at or beyond the last jump time");
    }
    const auto it = std::upper_bound(schedule.jump_times.begin(), schedule.jump_times.end(), t);
    const long n = static_cast<long>(it - schedule.jump_times.begin()) - 1;
    return trajectory.at_step(n).frequency(x);
}

} // namespace slfv
