#pragma once

#include <optional>
#include <vector>

#include "slfv/chain.hpp"
#include "slfv/geometry.hpp"
#include "slfv/oracle.hpp"

namespace slfv {

/// Estimation backend for the diagnostic quantities: the exact piecewise
/// oracle (d = 1 only) or Monte Carlo sampling (any d).
enum class Method { exact1d, monte_carlo };

/// Mass-increment threshold used by tau_alpha and the forbidden region.
struct AlphaConfig {
    double alpha = 0.0;

    /// The midpoint-safe default U V(R) / 4.
    static AlphaConfig defaulted(const Params& p);

    /// Enforces 0 < alpha < U V(R) / 2.
    void validate(const Params& p) const;
};

/// Per-step total masses M_0..M_n and their increments.
struct MassSeries {
    std::vector<Estimate> mass;       // size horizon + 1
    std::vector<Estimate> increments; // increments[k] = M_{k+1} - M_k
    Method method = Method::exact1d;
};

/// Empirical freeze summary of one trajectory. kappa_hat and tau_alpha_hat
/// are horizon-censored proxies: "no positive event ever again" is not
/// decidable from a finite run.
struct FreezeReport {
    long kappa_hat = 0;      // index of the last positive event, 0 if none
    long n_steps = 0;        // horizon
    double sup_freq = 0.0;   // sup of Y over the cluster at the horizon
    long tau_alpha_hat = 0;
    double alpha = 0.0;
    bool horizon_censored = true;
};

/// Forbidden-region measurement at one step.
struct ForbiddenRegionStats {
    long step = 0;
    double psi = 0.0;      // threshold volume from psi_threshold
    Estimate f_volume;     // measure of F_n
    bool center_in_F = false;
};

/// Outcome of the post-tau dichotomy check at one step.
struct ConstraintResult {
    bool applicable = false; // |delta_m| < alpha, the dichotomy's premise
    bool positive = false;   // the step's eps
    Estimate phi;            // Phi_n(C_{n+1})
    double delta_m = 0.0;    // mass increment implied by the event
    bool pass = true;
    double slack = 0.0;      // distance to the violated side of the gap
};

inline constexpr long kDefaultMcSamples = 20'000;

/// Total mass M_n = integral of Y_n.
Estimate total_mass(const ChainState& state, Method method,
                    long mc_samples = kDefaultMcSamples, RngStream* estimator = nullptr);

/// Local average Phi_n(x) = integral of Y_n over B(x, R).
Estimate local_average(const ChainState& state, const Point& x, Method method,
                       long mc_samples = kDefaultMcSamples, RngStream* estimator = nullptr);

/// Residual of the mass-change identity
/// (M_{n+1} - M_n) - U (eps V(R) - Phi_n(C_{n+1})).
/// Exact mode must give |residual| <= 1e-9; stderror combines the three
/// estimates in Monte Carlo mode.
Estimate mass_change_check(const ChainState& pre_state, const Event& event,
                           const ChainState& post_state, Method method,
                           long mc_samples = kDefaultMcSamples,
                           RngStream* estimator = nullptr);

/// Conditional one-step mass drift
/// (U / |cluster^R|) * Int_{cluster^R} (Y_n(c) V(R) - Phi_n(c)) dc,
/// which is 0 for every state (exact mode to 1e-9, MC within stderr).
Estimate martingale_drift(const ChainState& state, Method method,
                          long mc_samples = kDefaultMcSamples,
                          RngStream* estimator = nullptr);

/// Masses and increments along a trajectory prefix of the given length.
MassSeries mass_series(const ChainState& trajectory, long horizon, Method method,
                       long mc_samples = kDefaultMcSamples,
                       RngStream* estimator = nullptr);

/// Horizon-censored estimate of tau_alpha: 1 + the last index whose
/// increment reaches alpha in absolute value, or 0 if none does.
long tau_alpha_estimate(const MassSeries& series, const AlphaConfig& cfg);

/// Checks the dichotomy: when the step's |delta M| < alpha, a negative
/// event must see Phi < alpha/U and a positive event Phi > V(R) - alpha/U.
/// Pass the independently measured mass increment when available (it makes
/// the check non-circular); otherwise delta M falls back to the mass-change
/// identity. Throws when the Monte Carlo error is too coarse to classify.
ConstraintResult constraint_check(const ChainState& pre_state, const Event& event,
                                  const AlphaConfig& cfg, Method method,
                                  long mc_samples = kDefaultMcSamples,
                                  RngStream* estimator = nullptr,
                                  std::optional<double> measured_delta_m = std::nullopt);

/// Threshold volume psi = V((V(R) - 2 alpha/U) / S(R)).
double psi_threshold(const Params& p, const AlphaConfig& cfg);

/// Measure of the forbidden region
/// F_n = {x : alpha/U <= Phi_n(x) <= V(R) - alpha/U}, which is contained in
/// the 2R-expansion of the cluster. The Monte Carlo stderror covers the
/// outer hit-or-miss sampling only: each point is classified by an inner
/// estimate of Phi, which smooths the band indicator over a small
/// neighbourhood of the band edges.
Estimate forbidden_region_volume(const ChainState& state, const AlphaConfig& cfg,
                                 Method method, long mc_samples = kDefaultMcSamples,
                                 RngStream* estimator = nullptr);

/// Slack of the Lipschitz bound ||y-x|| S(R) - (Phi_n(y) - Phi_n(x)),
/// nonnegative up to estimator error.
Estimate lipschitz_slack(const ChainState& state, const Point& x, const Point& y,
                         Method method, long mc_samples = kDefaultMcSamples,
                         RngStream* estimator = nullptr);

/// Product upper bound Prod_{j=l}^{n} (1 - psi / (delta0_R_volume + j V(2R)))
/// with each factor clamped to [0, 1].
double product_bound(const Params& p, const AlphaConfig& cfg, double delta0_R_volume,
                     long l, long n);

/// Sampling knobs for freeze_report.
struct FreezeKnobs {
    Method method = Method::exact1d;
    long probe_points = 512;  // cluster probes for the MC sup
    long mc_samples = kDefaultMcSamples;
};

/// Summarises freezing over trajectory[0..horizon]. Probe and estimator
/// streams are derived from the trajectory's own seed, so the report is a
/// pure function of (trajectory, horizon, cfg, knobs).
FreezeReport freeze_report(const ChainState& trajectory, long horizon,
                           const AlphaConfig& cfg, const FreezeKnobs& knobs = {});

} // namespace slfv
