#include "slfv/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace slfv {

namespace {

// Only exactly equal neighbours merge. Any tolerance here would collapse
// the geometrically decaying tail values and break the bit-for-bit
// agreement with event replay.
bool mergeable(double a, double b) { return a == b; }

} // namespace

PiecewiseField1D::PiecewiseField1D(std::vector<double> breakpoints,
                                   std::vector<double> values)
    : breakpoints_(std::move(breakpoints)), values_(std::move(values))
{
    if (breakpoints_.empty() != values_.empty()
        || (!breakpoints_.empty() && breakpoints_.size() != values_.size() + 1))
        throw std::invalid_argument(
            "PiecewiseField1D: need one more breakpoint than values");
    for (std::size_t i = 0; i + 1 < breakpoints_.size(); ++i)
        if (!(breakpoints_[i] < breakpoints_[i + 1]))
            throw std::invalid_argument(
                "PiecewiseField1D: breakpoints must be strictly increasing");
    for (double v : values_)
        if (!(v >= 0.0) || !(v <= 1.0))
            throw std::invalid_argument("PiecewiseField1D: values outside [0, 1]");
}

PiecewiseField1D PiecewiseField1D::from_blocks(const std::vector<InitialBlock>& blocks)
{
    std::vector<double> edges;
    edges.reserve(2 * blocks.size());
    for (const auto& blk : blocks) {
        if (blk.ball.center.size() != 1)
            throw std::invalid_argument("from_blocks: blocks must be one-dimensional");
        edges.push_back(blk.ball.center[0] - blk.ball.radius);
        edges.push_back(blk.ball.center[0] + blk.ball.radius);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    if (edges.size() < 2)
        return {};
    std::vector<double> vals(edges.size() - 1, 0.0);
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        const double mid = 0.5 * (edges[i] + edges[i + 1]);
        double v = 0.0;
        for (const auto& blk : blocks)
            if (std::abs(mid - blk.ball.center[0]) <= blk.ball.radius)
                v = std::max(v, blk.value);
        vals[i] = v;
    }
    PiecewiseField1D f(std::move(edges), std::move(vals));
    f.compact();
    return f;
}

PiecewiseField1D PiecewiseField1D::from_state(const ChainState& state)
{
    const Params& p = state.params();
    if (p.d != 1)
        throw std::invalid_argument("from_state: requires d = 1");
    PiecewiseField1D f = from_blocks(state.initial_blocks());
    for (long k = 1; k <= state.step_count(); ++k) {
        const Event ev = state.event(k);
        f = apply_event_1d(std::move(f), ev.center[0], p.R, p.U, ev.positive);
    }
    return f;
}

double PiecewiseField1D::value_at(double x) const
{
    if (values_.empty() || x < breakpoints_.front() || x >= breakpoints_.back())
        return 0.0;
    const auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), x);
    return values_[static_cast<std::size_t>(it - breakpoints_.begin()) - 1];
}

std::size_t PiecewiseField1D::ensure_breakpoint(double x)
{
    const auto it = std::lower_bound(breakpoints_.begin(), breakpoints_.end(), x);
    const std::size_t idx = static_cast<std::size_t>(it - breakpoints_.begin());
    if (it != breakpoints_.end() && *it == x)
        return idx;
    // x lies strictly inside piece idx-1; split it in two equal-valued halves
    breakpoints_.insert(it, x);
    values_.insert(values_.begin() + static_cast<std::ptrdiff_t>(idx),
                   values_[idx - 1]);
    return idx;
}

void PiecewiseField1D::compact()
{
    if (values_.empty())
        return;
    std::vector<double> bp{breakpoints_.front()};
    std::vector<double> vv;
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!vv.empty() && mergeable(vv.back(), values_[i]))
            continue; // previous piece absorbs this one
        if (!vv.empty())
            bp.push_back(breakpoints_[i]);
        vv.push_back(values_[i]);
    }
    bp.push_back(breakpoints_.back());

    // drop zero-valued end pieces; the unbounded outside is already zero
    std::size_t lo = 0, hi = vv.size();
    while (lo < hi && vv[lo] == 0.0)
        ++lo;
    while (hi > lo && vv[hi - 1] == 0.0)
        --hi;
    if (lo == hi) {
        breakpoints_.clear();
        values_.clear();
        return;
    }
    breakpoints_.assign(bp.begin() + static_cast<std::ptrdiff_t>(lo),
                        bp.begin() + static_cast<std::ptrdiff_t>(hi + 1));
    values_.assign(vv.begin() + static_cast<std::ptrdiff_t>(lo),
                   vv.begin() + static_cast<std::ptrdiff_t>(hi));
}

PiecewiseField1D apply_event_1d(PiecewiseField1D field, double center, double R,
                                double U, bool positive)
{
    if (!(R > 0.0))
        throw std::invalid_argument("apply_event_1d: R must be positive");
    if (!(U > 0.0) || !(U < 1.0))
        throw std::invalid_argument("apply_event_1d: U outside (0, 1)");
    const double l = center - R;
    const double r = center + R;
    const double eps = positive ? 1.0 : 0.0;

    if (field.values_.empty()) {
        field.breakpoints_ = {l, r};
        field.values_ = {(1.0 - U) * 0.0 + U * eps};
        field.compact();
        return field;
    }
    if (l < field.breakpoints_.front()) {
        field.breakpoints_.insert(field.breakpoints_.begin(), l);
        field.values_.insert(field.values_.begin(), 0.0);
    }
    if (r > field.breakpoints_.back()) {
        field.breakpoints_.push_back(r);
        field.values_.push_back(0.0);
    }
    const std::size_t il = field.ensure_breakpoint(l);
    const std::size_t ir = field.ensure_breakpoint(r);
    for (std::size_t i = il; i < ir; ++i)
        field.values_[i] = (1.0 - U) * field.values_[i] + U * eps;
    field.compact();
    return field;
}

double exact_mass_1d(const PiecewiseField1D& field)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < field.values().size(); ++i)
        acc += field.values()[i] * (field.breakpoints()[i + 1] - field.breakpoints()[i]);
    return acc;
}

double exact_phi_1d(const PiecewiseField1D& field, double x, double R)
{
    if (!(R > 0.0))
        throw std::invalid_argument("exact_phi_1d: R must be positive");
    const double lo = x - R;
    const double hi = x + R;
    double acc = 0.0;
    for (std::size_t i = 0; i < field.values().size(); ++i) {
        const double a = std::max(field.breakpoints()[i], lo);
        const double b = std::min(field.breakpoints()[i + 1], hi);
        if (b > a)
            acc += field.values()[i] * (b - a);
    }
    return acc;
}

std::vector<std::pair<double, double>> support_intervals_1d(const PiecewiseField1D& field)
{
    std::vector<std::pair<double, double>> out;
    for (std::size_t i = 0; i < field.values().size(); ++i) {
        if (field.values()[i] <= 0.0)
            continue;
        const double a = field.breakpoints()[i];
        const double b = field.breakpoints()[i + 1];
        if (!out.empty() && out.back().second == a)
            out.back().second = b;
        else
            out.emplace_back(a, b);
    }
    return out;
}

PhiEvaluator1D::PhiEvaluator1D(const PiecewiseField1D& field) : field_(&field)
{
    const auto& bp = field.breakpoints();
    prefix_.resize(bp.size());
    for (std::size_t i = 1; i < bp.size(); ++i)
        prefix_[i] = prefix_[i - 1] + field.values()[i - 1] * (bp[i] - bp[i - 1]);
}

double PhiEvaluator1D::integral_to(double x) const
{
    const auto& bp = field_->breakpoints();
    if (bp.empty() || x <= bp.front())
        return 0.0;
    if (x >= bp.back())
        return prefix_.back();
    const auto it = std::upper_bound(bp.begin(), bp.end(), x);
    const std::size_t idx = static_cast<std::size_t>(it - bp.begin()) - 1;
    return prefix_[idx] + field_->values()[idx] * (x - bp[idx]);
}

std::vector<double> phi_nodes_1d(const PiecewiseField1D& field, double R)
{
    std::vector<double> nodes;
    nodes.reserve(2 * field.breakpoints().size());
    for (double b : field.breakpoints()) {
        nodes.push_back(b - R);
        nodes.push_back(b + R);
    }
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    return nodes;
}

double sup_phi_1d(const PiecewiseField1D& field, double R)
{
    const PhiEvaluator1D eval(field);
    double best = 0.0;
    for (double x : phi_nodes_1d(field, R))
        best = std::max(best, eval.phi(x, R));
    return best;
}

double level_band_length_1d(const PiecewiseField1D& field, double R, double lo,
                            double hi)
{
    if (!(lo > 0.0) || !(hi >= lo))
        throw std::invalid_argument("level_band_length_1d: need 0 < lo <= hi");
    const PhiEvaluator1D eval(field);
    const std::vector<double> nodes = phi_nodes_1d(field, R);
    double len = 0.0;
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
        const double p = nodes[i];
        const double q = nodes[i + 1];
        const double fp = eval.phi(p, R);
        const double fq = eval.phi(q, R);
        if (fp == fq) {
            if (fp >= lo && fp <= hi)
                len += q - p;
            continue;
        }
        // Phi is linear on [p, q]; invert at the band edges and clip.
        const double m = (fq - fp) / (q - p);
        double u = p + (lo - fp) / m;
        double v = p + (hi - fp) / m;
        if (u > v)
            std::swap(u, v);
        const double a = std::max(u, p);
        const double b = std::min(v, q);
        if (b > a)
            len += b - a;
    }
    return len;
}

double exact_drift_1d(const PiecewiseField1D& field, double R, double U)
{
    if (!(R > 0.0))
        throw std::invalid_argument("exact_drift_1d: R must be positive");
    if (!(U > 0.0) || !(U < 1.0))
        throw std::invalid_argument("exact_drift_1d: U outside (0, 1)");
    if (field.is_zero())
        return 0.0;

    // R-expansion of the support, merged to disjoint intervals.
    std::vector<std::pair<double, double>> ex;
    for (const auto& [a, b] : support_intervals_1d(field))
        ex.emplace_back(a - R, b + R);
    std::sort(ex.begin(), ex.end());
    std::vector<std::pair<double, double>> window;
    for (const auto& [a, b] : ex) {
        if (!window.empty() && a <= window.back().second)
            window.back().second = std::max(window.back().second, b);
        else
            window.emplace_back(a, b);
    }
    double total_len = 0.0;
    for (const auto& [a, b] : window)
        total_len += b - a;
    if (total_len <= 0.0)
        return 0.0;

    // Cut at every point where the integrand can change shape: Y jumps at
    // the field breakpoints, Phi changes slope at breakpoints +- R.
    std::vector<double> cuts;
    cuts.reserve(3 * field.breakpoints().size());
    for (double b : field.breakpoints()) {
        cuts.push_back(b - R);
        cuts.push_back(b);
        cuts.push_back(b + R);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    const PhiEvaluator1D eval(field);
    const double vol = 2.0 * R;
    double acc = 0.0;
    for (const auto& [A, B] : window) {
        std::vector<double> pts{A};
        for (double c : cuts)
            if (c > A && c < B)
                pts.push_back(c);
        pts.push_back(B);
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
            const double p = pts[i];
            const double q = pts[i + 1];
            const double y = field.value_at(0.5 * (p + q));
            const double gp = y * vol - eval.phi(p, R);
            const double gq = y * vol - eval.phi(q, R);
            acc += 0.5 * (gp + gq) * (q - p); // integrand linear on (p, q)
        }
    }
    return U * acc / total_len;
}

GridField::GridField(Point origin, double h, std::vector<long> cells)
    : origin_(std::move(origin)), h_(h), cells_(std::move(cells))
{
    if (!(h_ > 0.0))
        throw std::invalid_argument("GridField: spacing must be positive");
    if (cells_.size() != static_cast<std::size_t>(origin_.size()))
        throw std::invalid_argument("GridField: cell counts do not match dimension");
    double prod = 1.0;
    for (long c : cells_) {
        if (c < 1)
            throw std::invalid_argument("GridField: cell counts must be >= 1");
        prod *= static_cast<double>(c);
    }
    if (prod > 4.0e18)
        throw std::length_error("GridField: grid too large");
    long total = 1;
    for (long c : cells_)
        total *= c;
    values_.assign(static_cast<std::size_t>(total), 0.0);
}

Point GridField::cell_center(long flat) const
{
    Point x(origin_.size());
    for (int i = 0; i < dim(); ++i) {
        const long k = flat % cells_[i];
        flat /= cells_[i];
        x[i] = origin_[i] + (static_cast<double>(k) + 0.5) * h_;
    }
    return x;
}

GridField grid_replay(const ChainState& state, double h, long cell_budget)
{
    const Params& p = state.params();
    if (!(h > 0.0) || h > p.R / 20.0)
        throw std::invalid_argument("grid_replay: need 0 < h <= R/20");

    // Bounding box of the cluster; the frequency vanishes outside it.
    auto balls = state.cluster_view();
    Point lo = balls.front().center.array() - balls.front().radius;
    Point hi = balls.front().center.array() + balls.front().radius;
    for (const Ball& b : balls) {
        lo = lo.cwiseMin(Point(b.center.array() - b.radius));
        hi = hi.cwiseMax(Point(b.center.array() + b.radius));
    }

    std::vector<long> cells(p.d);
    double prod = 1.0;
    for (int i = 0; i < p.d; ++i) {
        cells[i] = std::max<long>(1, static_cast<long>(std::ceil((hi[i] - lo[i]) / h)));
        prod *= static_cast<double>(cells[i]);
    }
    if (prod > static_cast<double>(cell_budget))
        throw std::length_error("grid_replay: cell budget exceeded");

    GridField g(lo, h, cells);
    const long total = g.cell_count();
    for (long flat = 0; flat < total; ++flat) {
        const Point x = g.cell_center(flat);
        double y = 0.0;
        for (const auto& blk : state.initial_blocks()) {
            const double r = blk.ball.radius;
            if ((x - blk.ball.center).squaredNorm() <= r * r)
                y = std::max(y, blk.value);
        }
        g.value(flat) = y;
    }
    const double R2 = p.R * p.R;
    for (long k = 1; k <= state.step_count(); ++k) {
        const Event ev = state.event(k);
        const double eps = ev.positive ? 1.0 : 0.0;
        for (long flat = 0; flat < total; ++flat) {
            const Point x = g.cell_center(flat);
            if ((x - ev.center).squaredNorm() <= R2)
                g.value(flat) = (1.0 - p.U) * g.value(flat) + p.U * eps;
        }
    }
    return g;
}

double grid_mass(const GridField& g)
{
    double acc = 0.0;
    for (long flat = 0; flat < g.cell_count(); ++flat)
        acc += g.value(flat);
    return acc * std::pow(g.spacing(), g.dim());
}

double grid_phi(const GridField& g, const Point& x, double R)
{
    if (x.size() != g.dim())
        throw std::invalid_argument("grid_phi: dimension mismatch");
    const double R2 = R * R;
    double acc = 0.0;
    for (long flat = 0; flat < g.cell_count(); ++flat)
        if ((g.cell_center(flat) - x).squaredNorm() <= R2)
            acc += g.value(flat);
    return acc * std::pow(g.spacing(), g.dim());
}

} // namespace slfv
