#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "slfv/chain.hpp"
#include "slfv/geometry.hpp"

namespace slfv {

/// Piecewise-constant function on R with compact support, the exact d=1
/// reference representation of a chain state. Piece i takes values[i] on
/// [breakpoints[i], breakpoints[i+1]); the function is 0 outside the hull.
/// Off the breakpoint set it agrees with event replay exactly.
class PiecewiseField1D {
public:
    PiecewiseField1D() = default; // the zero field
    PiecewiseField1D(std::vector<double> breakpoints, std::vector<double> values);

    static PiecewiseField1D from_blocks(const std::vector<InitialBlock>& blocks);
    static PiecewiseField1D from_state(const ChainState& state);

    bool is_zero() const { return values_.empty(); }
    std::size_t piece_count() const { return values_.size(); }
    const std::vector<double>& breakpoints() const { return breakpoints_; }
    const std::vector<double>& values() const { return values_; }

    double value_at(double x) const;

private:
    std::vector<double> breakpoints_; // strictly increasing; size = pieces + 1
    std::vector<double> values_;

    // Splits the piece containing x (or extends the hull) so x becomes a
    // breakpoint; returns its index.
    std::size_t ensure_breakpoint(double x);
    void compact();

    friend PiecewiseField1D apply_event_1d(PiecewiseField1D field, double center,
                                           double R, double U, bool positive);
};

/// One chain transition applied to the exact field: value <- (1-U) value
/// + U eps on [center-R, center+R], untouched elsewhere. Equal-valued
/// neighbouring pieces are merged.
PiecewiseField1D apply_event_1d(PiecewiseField1D field, double center, double R,
                                double U, bool positive);

/// Total mass, sum of value * piece length.
double exact_mass_1d(const PiecewiseField1D& field);

/// Local average Phi(x), the exact integral of the field over [x-R, x+R].
double exact_phi_1d(const PiecewiseField1D& field, double x, double R);

/// Prefix-integral view of a field for repeated Phi queries: O(log pieces)
/// per query after an O(pieces) build. The field must outlive the evaluator.
class PhiEvaluator1D {
public:
    explicit PhiEvaluator1D(const PiecewiseField1D& field);

    /// Integral of the field over (-inf, x].
    double integral_to(double x) const;

    double phi(double x, double R) const
    {
        return std::max(0.0, integral_to(x + R) - integral_to(x - R));
    }

private:
    const PiecewiseField1D* field_;
    std::vector<double> prefix_; // integral up to each breakpoint
};

/// Disjoint closed intervals carrying the support {value > 0}.
std::vector<std::pair<double, double>> support_intervals_1d(const PiecewiseField1D& field);

/// Sorted nodes of Phi: field breakpoints shifted by -R and +R. Phi is
/// linear between consecutive nodes and 0 outside them.
std::vector<double> phi_nodes_1d(const PiecewiseField1D& field, double R);

/// Maximum of Phi over R, attained at a node of Phi.
double sup_phi_1d(const PiecewiseField1D& field, double R);

/// Length of the level band {x : lo <= Phi(x) <= hi}, found by closed-form
/// inversion of Phi on each linear piece. Requires lo > 0.
double level_band_length_1d(const PiecewiseField1D& field, double R, double lo,
                            double hi);

/// One-step conditional mass drift (U / |S^R|) * Int_{S^R} (Y(c) V(R) -
/// Phi(c)) dc, with S the support of the field. Computed by splitting at
/// the breakpoints of Y and Phi; exact up to rounding, and 0 for any field.
double exact_drift_1d(const PiecewiseField1D& field, double R, double U);

/// Dense Riemann-sum reference for d >= 2. Cell k holds the replayed value
/// at the cell centre origin + (k + 1/2) h.
class GridField {
public:
    GridField(Point origin, double h, std::vector<long> cells);

    int dim() const { return static_cast<int>(origin_.size()); }
    double spacing() const { return h_; }
    const Point& origin() const { return origin_; }
    const std::vector<long>& cells() const { return cells_; }
    long cell_count() const { return static_cast<long>(values_.size()); }

    double& value(long flat) { return values_[flat]; }
    double value(long flat) const { return values_[flat]; }
    Point cell_center(long flat) const;

private:
    Point origin_;
    double h_;
    std::vector<long> cells_;  // per-axis cell counts
    std::vector<double> values_;
};

inline constexpr long kDefaultCellBudget = 100'000'000;

/// Replays the full event log of `state` on a grid covering its cluster.
/// Requires h <= R/20; throws length_error past the cell budget.
GridField grid_replay(const ChainState& state, double h,
                      long cell_budget = kDefaultCellBudget);

/// Riemann-sum mass h^d * sum of cell values.
double grid_mass(const GridField& g);

/// Riemann-sum local average: h^d * sum over cells whose centre lies in
/// B(x, R).
double grid_phi(const GridField& g, const Point& x, double R);

} // namespace slfv
