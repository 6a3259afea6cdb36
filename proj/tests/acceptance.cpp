// Acceptance gate: one line per criterion, exit status = number of failures.
// Criteria can be selected by number on the command line; default is all.

#include "kreduce/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

using namespace kreduce;

namespace {

constexpr std::uint64_t kSeed = 20260817;

struct Line {
    bool pass = false;
    std::string detail;
};

CMat two_level(double e0, double e1) {
    CMat m = CMat::Zero(2, 2);
    m(0, 0) = e0;
    m(1, 1) = e1;
    return m;
}

ChartPoint cp1_point(std::complex<double> z) {
    const Backend b = Backend::projective(1);
    Vec x(2);
    x << z.real(), z.imag();
    return make_point(b, 0, x);
}

Observable random_observable(const Backend& b, RandomStream& rs) {
    std::vector<CMat> ops;
    for (int f = 0; f < b.factors(); ++f) ops.push_back(random_hermitian(b.factor(f).n + 1, rs, 1.0));
    return b.factors() == 1 ? Observable::op_expectation(b, ops[0])
                            : Observable::separable_sum(b, ops);
}

// Shared ensembles, built once per process.

SdeConfig diffusion_config() {
    SdeConfig c;
    c.sigma = 0.5;
    c.horizon = 80.0;  // 5 tau at V0 = 1/4
    c.ensemble_size = 10000;
    c.master_seed = kSeed;
    return c;
}

const EnsembleStats& diffusion_ensemble() {
    static const EnsembleStats s = [] {
        const Backend b = Backend::projective(1);
        const Observable h = Observable::op_expectation(b, two_level(0.0, 1.0));
        return run_ensemble(b, h, cp1_point(1.0), diffusion_config());
    }();
    return s;
}

const EnsembleStats& born_ensemble() {
    static const EnsembleStats s = [] {
        const Backend b = Backend::projective(1);
        const Observable h = Observable::op_expectation(b, two_level(0.0, 1.0));
        SdeConfig c;
        c.sigma = 0.5;
        c.horizon = 20.0 / (0.25 * 0.1875);  // 20 tau at V0 = 3/16
        c.ensemble_size = 10000;
        c.master_seed = kSeed + 1;
        return run_ensemble(b, h, cp1_point(std::sqrt(3.0)), c);
    }();
    return s;
}

const EnsembleStats& product_ensemble() {
    static const EnsembleStats s = [] {
        const Backend b = Backend::product({1, 1});
        const Observable h =
            Observable::separable_sum(b, {two_level(0.0, 1.0), two_level(0.0, 2.0)});
        Vec x(4);
        x << 1.0, 0.0, 1.0, 0.0;
        SdeConfig c;
        c.sigma = 1.0;
        c.dt = 1e-3;
        c.horizon = 56.0;  // 35 tau, enough for > 95% resolution
        c.ensemble_size = 3000;
        c.master_seed = kSeed + 2;
        return run_ensemble(b, h, make_point(b, 0, x), c);
    }();
    return s;
}

// 1. Holomorphic sectional curvature is exactly 1 on CP^1, CP^2, CP^3.
Line c01() {
    double worst = 0.0;
    for (int n : {1, 2, 3}) {
        const Backend b = Backend::projective(n);
        RandomStream rs(kSeed, 100 + std::uint64_t(n));
        int done = 0;
        while (done < 100) {
            const ChartPoint p = random_point(b, rs, 1.5);
            const Observable h = Observable::op_expectation(b, random_hermitian(n + 1, rs, 1.0));
            double k;
            try {
                k = holomorphic_sectional(b, p, h.gradient(p));
            } catch (const DegeneratePlaneError&) {
                continue;
            }
            worst = std::max(worst, std::abs(k - 1.0));
            ++done;
        }
    }
    char buf[120];
    std::snprintf(buf, sizeof buf, "max |K_H - 1| = %.2e over 100 (state, H) pairs per space",
                  worst);
    return {worst <= 1e-8, buf};
}

// 2. Bisectional curvature on CP^2 equals (1 + cos^2 theta)/2 for the
//    Hermitian angle between the raised gradients, and stays in (1/2, 1].
Line c02() {
    const Backend b = Backend::projective(2);
    RandomStream rs(kSeed, 200);
    double worst = 0.0, lo = 2.0, hi = 0.0;
    int done = 0;
    while (done < 100) {
        const ChartPoint p = random_point(b, rs, 1.5);
        const Observable f = Observable::op_expectation(b, random_hermitian(3, rs, 1.0));
        const Observable h = Observable::op_expectation(b, random_hermitian(3, rs, 1.0));
        const Vec gf = f.gradient(p);
        const Vec gh = h.gradient(p);
        double kfh;
        try {
            kfh = bisectional(b, p, gf, gh);
        } catch (const DegeneratePlaneError&) {
            continue;
        }
        const MetricTensors t = metric_at(b, p);
        Eigen::LDLT<Mat> ldlt(t.g);
        const Vec u = ldlt.solve(gf);
        const Vec v = ldlt.solve(gh);
        const double guv = gf.dot(v);
        const double gujv = u.dot(t.g * (t.jmat * v));
        const double cos2 = (guv * guv + gujv * gujv) / (gf.dot(u) * gh.dot(v));
        worst = std::max(worst, std::abs(kfh - 0.5 * (1.0 + cos2)));
        lo = std::min(lo, kfh);
        hi = std::max(hi, kfh);
        ++done;
    }
    char buf[140];
    std::snprintf(buf, sizeof buf, "max |K_FH - (1+cos^2)/2| = %.2e, range [%.4f, %.4f]", worst,
                  lo, hi);
    return {worst <= 1e-8 && lo > 0.5 && hi <= 1.0 + 1e-12, buf};
}

// 3. Identity residuals under module tolerances, 100 configurations per
//    backend on CP^2 and CP^1 x CP^1.
Line c03() {
    double adler = 0.0, l3 = 0.0, l5 = 0.0, slack = 0.0;
    int l3n = 0;
    int bi = 0;
    for (const Backend& b : {Backend::projective(2), Backend::product({1, 1})}) {
        RandomStream rs(kSeed, 300 + std::uint64_t(bi++));
        for (int k = 0; k < 100; ++k) {
            const ChartPoint p = random_point(b, rs, 1.2);
            const Observable f = random_observable(b, rs);
            const Observable g = random_observable(b, rs);
            const Observable h = random_observable(b, rs);
            for (const ResidualReport& r :
                 {identity_residuals(f, g, h, p), identity_residuals(h, g, h, p)}) {
                adler = std::max(adler, r.adler_horwitz);
                l5 = std::max(l5, r.lemma5);
                slack = std::min(slack, r.heisenberg_slack);
                if (r.lemma3_applicable) {
                    l3 = std::max(l3, r.lemma3);
                    ++l3n;
                }
            }
        }
    }
    char buf[180];
    std::snprintf(buf, sizeof buf,
                  "bracket %.1e, flow %.1e (%d pairs), third-deriv %.1e, slack %.1e", adler, l3,
                  l3n, l5, slack);
    return {adler <= 1e-5 && l5 <= 1e-5 && l3 <= 1e-7 && l3n >= 200 && slack >= -1e-10, buf};
}

// 4. The energy expectation is a martingale: |mean H_t - 1/2| <= 3 SE at
//    every recorded time of the diffusive ensemble.
Line c04() {
    const EnsembleStats& s = diffusion_ensemble();
    double ratio = 0.0;
    bool ok = s.valid;
    for (size_t k = 0; k < s.times.size(); ++k) {
        const double diff = std::abs(s.mean_h[k] - 0.5);
        const double band = 3.0 * s.se_h[k];
        if (band == 0.0) {
            ok = ok && diff == 0.0;
            continue;
        }
        ratio = std::max(ratio, diff / band);
        ok = ok && diff <= band;
    }
    char buf[120];
    std::snprintf(buf, sizeof buf, "max |mean H - 0.5| / 3SE = %.3f at %zu times, N = %ld",
                  ratio, s.times.size(), s.n);
    return {ok, buf};
}

// 5. Dispersion supermartingale bound mean V_t <= V0/(1 + kappa s^2 V0 t)
//    + 3 SE on CP^1 (kappa = 1) and CP^1 x CP^1 (kappa = 1/2).
Line c05() {
    double ratio = 0.0;
    bool ok = true;
    for (const EnsembleStats* s : {&diffusion_ensemble(), &product_ensemble()}) {
        ok = ok && s->valid && s->scales.kappa_exact;
        const double v0 = s->scales.v0;
        const double rate = s->scales.kappa * s->sigma * s->sigma * v0;
        for (size_t k = 0; k < s->times.size(); ++k) {
            const double bound = v0 / (1.0 + rate * s->times[k]);
            const double slack = s->mean_v[k] - bound;
            const double band = 3.0 * s->se_v[k];
            if (band == 0.0) {
                ok = ok && slack <= 0.0;
                continue;
            }
            ratio = std::max(ratio, slack / band);
            ok = ok && slack <= band;
        }
    }
    char buf[140];
    std::snprintf(buf, sizeof buf,
                  "max (mean V - bound) / 3SE = %.3f; kappa = 1 and kappa = %.2g runs", ratio,
                  product_ensemble().scales.kappa);
    return {ok, buf};
}

// 6. Born statistics at |z0|^2 = 3: collapse frequencies (1/4, 3/4) within
//    3 binomial SE, at least 99% of paths resolved by 20 tau.
Line c06() {
    const EnsembleStats& s = born_ensemble();
    const long resolved = s.n - s.unresolved - s.blowups;
    const double frac = double(resolved) / double(s.n);
    long n0 = -1;
    for (size_t i = 0; i < s.outcome_values.size(); ++i)
        if (std::abs(s.outcome_values[i]) < 1e-9) n0 = s.outcome_counts[i];
    const double f0 = double(n0) / double(resolved);
    const double se = std::sqrt(0.25 * 0.75 / double(resolved));
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "frequencies (%.4f, %.4f) vs (0.25, 0.75), 3SE = %.4f, resolved %.1f%%", f0,
                  1.0 - f0, 3.0 * se, 100.0 * frac);
    return {s.valid && n0 >= 0 && frac >= 0.99 && std::abs(f0 - 0.25) <= 3.0 * se, buf};
}

// 7. Terminal energy variance: equality with V0 = 3/16 on the Born run
//    (kappa = lambda = 1), band [V0, 2 V0] on the product run.
Line c07() {
    const EnsembleStats& a = born_ensemble();
    if (std::abs(a.scales.v0 - 0.1875) > 1e-12)
        return {false, "unexpected initial dispersion on the Born run"};
    const TestVerdict va = terminal_variance_check(a);
    const TestVerdict vb = terminal_variance_check(product_ensemble());
    const bool ok = va.pass && va.conclusive && va.applicable && vb.pass && vb.conclusive &&
                    vb.applicable;
    return {ok, va.narrative + " | " + vb.narrative};
}

// 8. Ito isometry on the diffusive ensemble at every checkpoint.
Line c08() {
    const TestVerdict v = ito_isometry_check(diffusion_ensemble());
    return {v.pass && v.conclusive && v.applicable, v.narrative};
}

// 9. Restart-ensemble drift of V and V^F against the curvature form of the
//    decay law at 5 start points each.
Line c09() {
    const Backend b = Backend::projective(1);
    const Observable h = Observable::op_expectation(b, two_level(0.0, 1.0));
    const std::vector<ChartPoint> starts = {
        cp1_point(1.0), cp1_point(std::sqrt(3.0)), cp1_point({0.5, 0.5}),
        cp1_point({1.2, -0.4}), cp1_point({0.0, 0.3})};

    // the closed-form prediction at z0 = 1 is -sigma^2 V0^2 = -1/64
    const double v0 = h.dispersion(starts[0]);
    const double pred0 = -0.25 * v0 * v0;
    if (std::abs(pred0 + 0.015625) > 1e-12) return {false, "drift prediction at z0 = 1 is off"};

    const TestVerdict v = drift_regression_v(b, h, starts, 0.5, nullptr, 4000, 0.0, kSeed + 7);

    const Backend b2 = Backend::projective(2);
    CMat hm = CMat::Zero(3, 3);
    hm(1, 1) = 1.0;
    hm(2, 2) = 3.0;
    const Observable h2 = Observable::op_expectation(b2, hm);
    const Observable f2 = Observable::op_expectation(b2, CMat(hm * hm));
    std::vector<ChartPoint> starts2;
    const double raw[5][4] = {{1.0, 0.0, 0.8, 0.0},
                              {0.5, 0.0, 0.0, 0.5},
                              {0.3, 0.3, 0.6, 0.0},
                              {1.2, 0.0, 0.1, 0.0},
                              {0.4, 0.0, 0.0, 1.1}};
    for (const double* r : raw) {
        Vec x(4);
        x << r[0], r[1], r[2], r[3];
        starts2.push_back(make_point(b2, 0, x));
    }
    const TestVerdict w = drift_regression_v(b2, h2, starts2, 0.5, &f2, 4000, 0.0, kSeed + 8);

    const bool ok = v.pass && v.conclusive && w.pass && w.conclusive;
    return {ok, "V: " + v.narrative + " | V^F: " + w.narrative};
}

// 10. Chart and Hilbert-space integrators under shared noise: the pathwise
//     gap halves with dt across {1e-3, 5e-4, 2.5e-4}.
Line c10() {
    const Backend b = Backend::projective(1);
    CMat hm(2, 2);
    hm(0, 0) = 0.0;
    hm(0, 1) = 0.7;
    hm(1, 0) = 0.7;
    hm(1, 1) = 2.0;
    const Observable h = Observable::op_expectation(b, hm);
    const ChartPoint x0 = cp1_point({0.4, 0.3});
    CVec psi0(2);
    psi0 << std::complex<double>(1.0, 0.0), std::complex<double>(0.4, 0.3);

    const int npaths = 6;
    double mean[3] = {0.0, 0.0, 0.0};
    for (int lvl = 0; lvl < 3; ++lvl) {
        for (int j = 0; j < npaths; ++j) {
            SdeConfig c;
            c.sigma = 0.03;
            c.dt = 1e-3 / double(1 << lvl);
            c.horizon = 2.0;
            NoisePath chart_noise(kSeed + 9, std::uint64_t(j), c.dt);
            NoisePath lift_path(kSeed + 9, std::uint64_t(j), c.dt);
            PathNoise lift_noise(lift_path);
            const Trajectory chart =
                simulate_trajectory(b, h, x0, c, chart_noise, nullptr, 1 << 20, true);
            const Trajectory lift = lifted_oracle(b, hm, psi0, c, lift_noise, 1 << 20);
            mean[lvl] += fs_distance(b, chart.terminal, lift.terminal) / npaths;
        }
    }
    const double r1 = mean[0] / mean[1];
    const double r2 = mean[1] / mean[2];
    char buf[140];
    std::snprintf(buf, sizeof buf, "gap %.3e -> %.3e -> %.3e, ratios %.3f, %.3f", mean[0],
                  mean[1], mean[2], r1, r2);
    const bool ok = r1 >= 1.7 && r1 <= 2.3 && r2 >= 1.7 && r2 <= 2.3;
    return {ok, buf};
}

// 11. Double-commutator coefficient fitted from a 10^4 ensemble matches
//     sigma^2/8 within 5%.
Line c11() {
    CMat hm(2, 2);
    hm(0, 0) = 0.0;
    hm(0, 1) = 0.3;
    hm(1, 0) = 0.3;
    hm(1, 1) = 1.0;
    CVec psi0(2);
    psi0 << std::complex<double>(1.0, 0.0), std::complex<double>(0.0, 0.5);
    const TestVerdict v = lindblad_check(hm, psi0, 0.5, 0.004, 1.5, 10000, kSeed + 10);
    return {v.pass && v.conclusive && v.applicable, v.narrative};
}

// 12. Fokker-Planck density vs trajectory histogram on the sphere,
//     total variation < 0.05 at tau/4, tau, 4 tau.
Line c12() {
    FpConfig f;
    f.checkpoints = {4.0, 16.0, 64.0};
    f.ensemble = 30000;
    f.seed = kSeed + 11;
    f.sim_dt = 2e-3;
    const TestVerdict v = fokker_planck_cp1(two_level(0.0, 1.0), {1.0, 0.0}, f);
    return {v.pass && v.conclusive && v.applicable, v.narrative};
}

// 13. Re-running the diffusive ensemble with 4 and 8 worker threads
//     reproduces the single-thread CSV byte for byte.
Line c13() {
    const std::string base = ensemble_csv_text(diffusion_ensemble());
    const Backend b = Backend::projective(1);
    const Observable h = Observable::op_expectation(b, two_level(0.0, 1.0));
    for (int threads : {4, 8}) {
        const EnsembleStats again =
            run_ensemble(b, h, cp1_point(1.0), diffusion_config(), nullptr, threads);
        if (ensemble_csv_text(again) != base) {
            char buf[80];
            std::snprintf(buf, sizeof buf, "output differs at %d threads", threads);
            return {false, buf};
        }
    }
    return {true, "CSV identical across 1, 4 and 8 threads"};
}

struct Criterion {
    int id;
    const char* label;
    Line (*fn)();
    double cap_s;  // 0 = no runtime requirement
};

const Criterion kCriteria[] = {
    {1, "sectional curvature constant", c01, 10.0},
    {2, "bisectional range", c02, 10.0},
    {3, "identity suite", c03, 60.0},
    {4, "energy martingale", c04, 300.0},
    {5, "dispersion supermartingale", c05, 600.0},
    {6, "collapse statistics", c06, 0.0},
    {7, "terminal variance", c07, 0.0},
    {8, "ito isometry", c08, 0.0},
    {9, "drift law", c09, 300.0},
    {10, "oracle equivalence", c10, 0.0},
    {11, "ensemble generator fit", c11, 0.0},
    {12, "density cross-check", c12, 600.0},
    {13, "determinism across threads", c13, 0.0},
};

} // namespace

int main(int argc, char** argv) {
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

    int failures = 0;
    for (const Criterion& c : kCriteria) {
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end())
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Line line;
        try {
            line = c.fn();
        } catch (const std::exception& e) {
            line = {false, std::string("exception: ") + e.what()};
        }
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        bool pass = line.pass;
        std::string detail = line.detail;
        if (pass && c.cap_s > 0.0 && dt > c.cap_s) {
            pass = false;
            detail += " [over time budget]";
        }
        std::printf("[%s] %2d %-28s (%6.1fs)  %s\n", pass ? "PASS" : "FAIL", c.id, c.label, dt,
                    detail.c_str());
        std::fflush(stdout);
        if (!pass) ++failures;
    }
    return failures;
}
