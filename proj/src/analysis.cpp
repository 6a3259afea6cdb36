#include "kreduce/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace kreduce {

namespace {

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, a, b, c);
    return buf;
}

TestVerdict finish(TestVerdict v) {
    v.pass = v.applicable && v.conclusive && v.statistic <= v.threshold;
    return v;
}

// Euler steps conserve the continuum invariants only to O(dt); with sigma = 0
// every path is identical, the standard errors vanish, and the band has to
// budget for that scheme drift instead. The Hamiltonian field has squared
// metric norm 4V, which sets the per-unit-time bias scale dt * V^(3/2).
double deterministic_allowance(const EnsembleStats& stats, double t) {
    if (stats.sigma > 0.0) return 0.0;
    double vmax = 0.0;
    for (double x : stats.mean_v) vmax = std::max(vmax, x);
    return 10.0 * stats.scales.dt * t * vmax * std::sqrt(vmax);
}

} // namespace

TestVerdict martingale_test(const EnsembleStats& stats, char which) {
    TestVerdict v;
    v.name = which == 'F' ? "martingale_F" : "martingale_H";
    if (which == 'F' && !stats.track_f) {
        v.applicable = false;
        v.narrative = "no tracked observable in the ensemble";
        return finish(v);
    }
    if (stats.n < 100) {
        v.conclusive = false;
        v.narrative = fmt("ensemble too small (n = %.0f)", double(stats.n));
        return finish(v);
    }

    const std::vector<double>& mean = which == 'F' ? stats.mean_f : stats.mean_h;
    const std::vector<double>& se = which == 'F' ? stats.se_f : stats.se_h;
    const IncrementRegression& reg = which == 'F' ? stats.reg_f : stats.reg_h;
    const double x0 = mean.front();
    const double tiny = 1e-12 * (1.0 + std::abs(x0));

    double band = 0.0;
    for (size_t k = 0; k < mean.size(); ++k) {
        const double allow = deterministic_allowance(stats, stats.times[k]);
        band = std::max(band, std::abs(mean[k] - x0) / (3.0 * se[k] + allow + tiny));
    }

    // Increment regression dX ~ (1, X, V): the filtration coefficients must be
    // consistent with zero; the intercept absorbs the O(dt) scheme bias.
    double slopes = 0.0;
    bool regressed = false;
    if (reg.n >= 16.0) {
        const double n = reg.n;
        Mat m(3, 3);
        m << n, reg.sx, reg.sv, reg.sx, reg.sxx, reg.sxv, reg.sv, reg.sxv, reg.svv;
        Vec rhs(3);
        rhs << reg.sd, reg.sdx, reg.sdv;
        const double var_x = reg.sxx / n - (reg.sx / n) * (reg.sx / n);
        const double var_v = reg.svv / n - (reg.sv / n) * (reg.sv / n);
        const double sc2 = 1e-14 * (1.0 + (reg.sxx + reg.svv) / n);
        if (var_x > sc2 && var_v > sc2) {
            Eigen::LDLT<Mat> dec(m);
            if (dec.info() == Eigen::Success) {
                const Vec beta = dec.solve(rhs);
                const double rss = std::max(0.0, reg.sdd - beta.dot(rhs));
                const double s2 = rss / std::max(1.0, n - 3.0);
                const Mat cov = s2 * m.inverse();
                for (int i = 1; i < 3; ++i) {
                    const double t = std::abs(beta[i]) /
                                     (3.0 * std::sqrt(std::max(cov(i, i), 0.0)) + 1e-300);
                    slopes = std::max(slopes, t);
                }
                regressed = true;
            }
        }
    }

    v.statistic = std::max(band, slopes);
    v.threshold = 1.0;
    v.narrative = fmt("max |mean-X0|/3SE = %.3g; max slope t/3 = %.3g", band, slopes) +
                  (regressed ? "" : " (regression skipped: degenerate regressors)");
    return finish(v);
}

TestVerdict supermartingale_bound(const EnsembleStats& stats, double kappa) {
    TestVerdict v;
    v.name = "supermartingale_V";
    const double kap = kappa < 0.0 ? stats.scales.kappa : kappa;
    if (!(kap > 0.0)) {
        v.applicable = false;
        v.narrative = "kappa <= 0: no curvature decay hypothesis";
        return finish(v);
    }
    if (stats.n < 2) {
        v.conclusive = false;
        v.narrative = "ensemble too small";
        return finish(v);
    }

    const double v0 = stats.scales.v0;
    const double s2 = stats.sigma * stats.sigma;
    const double tiny = 1e-12 * (1.0 + v0);

    double worst_bound = 0.0, worst_mono = 0.0;
    for (size_t k = 0; k < stats.mean_v.size(); ++k) {
        const double allow = deterministic_allowance(stats, stats.times[k]);
        const double bound = v0 / (1.0 + kap * s2 * v0 * stats.times[k]);
        worst_bound = std::max(worst_bound, (stats.mean_v[k] - bound) /
                                                (3.0 * stats.se_v[k] + allow + tiny));
        if (k > 0)
            worst_mono = std::max(
                worst_mono, (stats.mean_v[k] - stats.mean_v[k - 1]) /
                                (3.0 * (stats.se_v[k] + stats.se_v[k - 1]) + allow + tiny));
    }

    double worst_xi = 0.0;
    if (!stats.xi.empty()) {
        double xi_min = 0.0;
        for (double x : stats.xi) xi_min = std::min(xi_min, x);
        worst_xi = -xi_min / 1e-9;
    }

    v.statistic = std::max({worst_bound, worst_mono, worst_xi});
    v.threshold = 1.0;
    v.narrative = fmt("bound margin %.3g, monotonicity %.3g, xi floor %.3g", worst_bound,
                      worst_mono, worst_xi);
    return finish(v);
}

TestVerdict drift_regression_v(const Backend& b, const Observable& h,
                               const std::vector<ChartPoint>& starts, double sigma,
                               const Observable* track_f, int restarts, double window,
                               std::uint64_t seed) {
    TestVerdict v;
    v.name = track_f != nullptr ? "drift_VF" : "drift_VH";
    if (starts.empty()) throw InvalidInputError("at least one start point required");
    if (!(sigma > 0.0)) {
        v.applicable = false;
        v.narrative = "sigma = 0: drift law is trivial";
        return finish(v);
    }

    double worst = 0.0, worst_bias = 0.0;
    std::string detail;
    for (size_t si = 0; si < starts.size(); ++si) {
        const ChartPoint& p = starts[si];
        const double vh = h.dispersion(p);
        double pred, vx0;
        if (track_f != nullptr) {
            const double vf = track_f->dispersion(p);
            const double kfh = vf > 1e-14 && vh > 1e-14
                                   ? bisectional(b, p, track_f->gradient(p), h.gradient(p))
                                   : 0.0;
            pred = -sigma * sigma * kfh * vf * vh;
            vx0 = vf;
        } else {
            const double kh = vh > 1e-14 ? holomorphic_sectional(b, p, h.gradient(p)) : 0.0;
            pred = -sigma * sigma * kh * vh * vh;
            vx0 = vh;
        }

        if (vx0 < 1e-12) {
            // critical point of the measured dispersion: the drift vanishes exactly
            // and a restart window would estimate nothing but scheme noise
            continue;
        }

        double w = window;
        if (w <= 0.0) {
            const double rate = sigma * sigma * std::max(vh, 1e-6);
            w = 0.02 / rate;
        }

        SdeConfig cfg;
        cfg.sigma = sigma;
        cfg.horizon = w;
        // long windows near critical points must still resolve the unitary
        // rotation, or the scheme bias in V outruns the drift being measured
        cfg.dt = std::min(w / 16.0, 0.01 / h.scale());
        cfg.ensemble_size = restarts;
        cfg.master_seed = seed + si;
        cfg.collapse_epsilon = 1e-300;  // keep restart windows unfrozen
        const EnsembleStats st = run_ensemble(b, h, p, cfg, track_f, 1, 17);

        const std::vector<double>& mv = track_f != nullptr ? st.mean_vf : st.mean_v;
        const std::vector<double>& sv = track_f != nullptr ? st.se_vf : st.se_v;
        const size_t full = mv.size() - 1;
        const size_t half = full / 2;
        const double est = (mv[full] - vx0) / w;
        const double est_half = (mv[half] - vx0) / st.times[half];
        const double se = sv[full] / w;
        const double se_half = sv[half] / st.times[half];

        const double bias_allow = 2.0 * std::abs(est - est_half);
        const double tiny = 1e-9 * (1.0 + std::abs(pred));
        const double stat = std::abs(est - pred) / (3.0 * se + bias_allow + tiny);
        worst = std::max(worst, stat);

        // Richardson guard: a window bias much larger than the statistical
        // resolution and the signal means the estimate cannot be trusted.
        const double bias_vs_noise =
            std::abs(est - est_half) / (5.0 * (se + se_half) + 0.1 * std::abs(pred) + tiny);
        worst_bias = std::max(worst_bias, bias_vs_noise);

        if (si == 0)
            detail = fmt("first start: est %.3g vs pred %.3g (se %.3g)", est, pred, se);
    }

    if (worst_bias > 1.0) {
        v.conclusive = false;
        v.narrative = "window too coarse: Richardson bias dominates; " + detail;
        return finish(v);
    }
    v.statistic = worst;
    v.threshold = 1.0;
    v.narrative = fmt("max |est-pred|/(3SE+bias) = %.3g over %.0f starts; ", worst,
                      double(starts.size())) +
                  detail;
    return finish(v);
}

TestVerdict ito_isometry_check(const EnsembleStats& stats) {
    TestVerdict v;
    v.name = "ito_isometry";
    if (stats.n < 2) {
        v.conclusive = false;
        v.narrative = "ensemble too small";
        return finish(v);
    }
    const double tiny = 1e-12 * (1.0 + stats.scales.h0 * stats.scales.h0);
    double worst = 0.0;
    for (size_t k = 0; k < stats.mean_d.size(); ++k) {
        // D compares squared displacements, so the sigma = 0 scheme-drift
        // budget enters squared as well.
        const double allow = std::pow(deterministic_allowance(stats, stats.times[k]), 2);
        worst = std::max(worst, std::abs(stats.mean_d[k]) / (3.0 * stats.se_d[k] + allow + tiny));
    }
    v.statistic = worst;
    v.threshold = 1.0;
    v.narrative = fmt("max |E[(H_t-H_0)^2 - s^2 Q_t]|/3SE = %.3g", worst);
    return finish(v);
}

TestVerdict terminal_variance_check(const EnsembleStats& stats, double kappa, double lambda) {
    TestVerdict v;
    v.name = "terminal_variance";
    const double kap = kappa < 0.0 ? stats.scales.kappa : kappa;
    const double lam = lambda < 0.0 ? stats.scales.lambda : lambda;
    if (!(kap > 0.0) || !(lam > 0.0)) {
        v.applicable = false;
        v.narrative = "curvature extremes unavailable";
        return finish(v);
    }

    long resolved = 0;
    for (long c : stats.outcome_counts) resolved += c;
    const double frac =
        stats.n > 0 ? static_cast<double>(resolved) / static_cast<double>(stats.n) : 0.0;
    if (frac < 0.95) {
        v.conclusive = false;
        v.narrative = fmt("only %.1f%% of trajectories resolved", 100.0 * frac);
        return finish(v);
    }

    // Moments of (H_inf - H_0)^2 from the outcome table; identical by
    // construction to the Born-frequency variance.
    const double h0 = stats.scales.h0;
    double m1 = 0.0, m2 = 0.0;
    for (size_t i = 0; i < stats.outcome_counts.size(); ++i) {
        const double x = (stats.outcome_values[i] - h0) * (stats.outcome_values[i] - h0);
        const double w = static_cast<double>(stats.outcome_counts[i]);
        m1 += w * x;
        m2 += w * x * x;
    }
    m1 /= static_cast<double>(resolved);
    m2 /= static_cast<double>(resolved);
    const double se =
        std::sqrt(std::max(0.0, m2 - m1 * m1) / static_cast<double>(resolved));

    const double v0 = stats.scales.v0;
    const double tiny = 1e-12 * (1.0 + v0);
    double stat;
    std::string mode;
    if (std::abs(kap - lam) <= 1e-9 * (kap + lam)) {
        stat = std::abs(m1 - v0) / (3.0 * se + tiny);
        mode = fmt("equality vs V0 = %.6g", v0);
    } else {
        const double hi = (m1 - v0 / kap) / (3.0 * se + tiny);
        const double lo = (v0 / lam - m1) / (3.0 * se + tiny);
        stat = std::max(hi, lo);
        mode = fmt("band [%.6g, %.6g]", v0 / lam, v0 / kap);
    }
    v.statistic = stat;
    v.threshold = 1.0;
    v.narrative =
        fmt("measured %.6g (se %.2g), ", m1, se) + mode + fmt("; resolved %.1f%%", 100.0 * frac);
    return finish(v);
}

} // namespace kreduce
