#include "kreduce/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace kreduce {

namespace {

void check_hermitian(const CMat& h) {
    if (h.rows() != h.cols() || (h - h.adjoint()).norm() > 1e-12 * (1.0 + h.norm()))
        throw InvalidInputError("operator must be Hermitian");
}

// One Euler-Maruyama update of the homogeneous-coordinate process, followed
// by renormalization. The continuous process conserves the norm pathwise
// (the quadratic variation of the diffusion exactly cancels the contraction
// from the -(sigma^2/8)(H-<H>)^2 drift), so renormalization only removes the
// O(dt) discretization residue; a post-normalization norm off by more than
// 1e-6 signals numerical failure (overflow or a vanishing state).
void lifted_step(const CMat& h, CVec& psi, CVec& hpsi, CVec& dev, CVec& dev2, double sigma,
                 double dt, double dw) {
    hpsi.noalias() = h * psi;
    const double hhat = psi.dot(hpsi).real();
    dev = hpsi - hhat * psi;
    dev2.noalias() = h * dev;
    dev2 -= hhat * dev;
    psi += dt * (std::complex<double>(0.0, -1.0) * hpsi -
                 (sigma * sigma / 8.0) * dev2) +
           (0.5 * sigma * dw) * dev;
    const double nrm = psi.norm();
    if (!(nrm > 0.0) || !std::isfinite(nrm))
        throw EstimationError("lifted oracle lost the state norm");
    psi /= nrm;
    if (std::abs(psi.norm() - 1.0) > 1e-6)
        throw EstimationError("lifted oracle norm drift after renormalization");
}

ChartPoint project_to_chart(const Backend& b, const CVec& psi) {
    int c = 0;
    for (int s = 1; s < psi.size(); ++s)
        if (std::abs(psi[s]) > std::abs(psi[c])) c = s;
    Vec x(2 * (psi.size() - 1));
    for (int j = 0; j + 1 < psi.size(); ++j) {
        const std::complex<double> z = psi[affine_slot(c, j)] / psi[c];
        x[2 * j] = z.real();
        x[2 * j + 1] = z.imag();
    }
    return make_point(b, c, x);
}

} // namespace

Trajectory lifted_oracle(const Backend& b, const CMat& h, const CVec& psi0, const SdeConfig& cfg,
                         NoiseSource& noise, long record_stride) {
    if (b.factors() != 1 || !b.projective_only())
        throw InvalidInputError("lifted oracle runs on a single projective factor");
    check_hermitian(h);
    if (psi0.size() != h.rows() || psi0.norm() < 1e-12)
        throw InvalidInputError("initial state must be a nonzero vector of matching dimension");
    if (record_stride < 1) throw InvalidInputError("record_stride must be >= 1");

    const Observable obs = Observable::op_expectation(b, h);
    const ChartPoint x0 = project_to_chart(b, psi0);
    const RunScales sc = resolve_scales(b, obs, x0, cfg);

    CVec psi = psi0 / psi0.norm();
    CVec hpsi(psi.size()), dev(psi.size()), dev2(psi.size());

    Trajectory tr;
    double q = 0.0;
    const auto matrix_v = [&](const CVec& s) {
        const CVec hs = h * s;
        const double m1 = s.dot(hs).real();
        return std::max(0.0, hs.squaredNorm() - m1 * m1);
    };
    double v_prev = matrix_v(psi);
    const auto record = [&](long k) {
        tr.times.push_back(static_cast<double>(k) * sc.dt);
        const double hv = psi.dot(h * psi).real();
        tr.h_series.push_back(hv);
        const double vv = matrix_v(psi);
        tr.v_series.push_back(vv);
        tr.q_series.push_back(q);
        tr.kv2_series.push_back(vv * vv);
        tr.points.push_back(project_to_chart(b, psi));
    };
    record(0);

    for (long k = 1; k <= sc.steps; ++k) {
        const double dw = noise.next();
        lifted_step(h, psi, hpsi, dev, dev2, cfg.sigma, sc.dt, dw);
        const double vv = matrix_v(psi);
        q += 0.5 * sc.dt * (v_prev * v_prev + vv * vv);
        v_prev = vv;
        if (k % record_stride == 0 || k == sc.steps) record(k);
    }
    tr.terminal = tr.points.back();
    return tr;
}

double lindblad_coefficient(double sigma) { return sigma * sigma / 8.0; }

TestVerdict lindblad_check(const CMat& h, const CVec& psi0, double sigma, double dt,
                           double horizon, int n_traj, std::uint64_t seed) {
    TestVerdict v;
    v.name = "lindblad_generator";
    check_hermitian(h);
    if (!(dt > 0.0) || !(horizon > dt)) throw InvalidInputError("need 0 < dt < horizon");
    if (n_traj < 2) throw InvalidInputError("need an ensemble");

    const long steps = static_cast<long>(std::ceil(horizon / dt - 1e-9));
    const int n_check = 33;
    const long stride = std::max(1L, steps / (n_check - 1));
    std::vector<long> marks;
    for (long k = 0; k <= steps; ++k)
        if (k % stride == 0 || k == steps) marks.push_back(k);

    const auto dim = psi0.size();
    std::vector<CMat> rho(marks.size(), CMat::Zero(dim, dim));
    CVec psi(dim), hpsi(dim), dev(dim), dev2(dim);

    for (int i = 0; i < n_traj; ++i) {
        NoisePath noise(seed, static_cast<std::uint64_t>(i), dt);
        psi = psi0 / psi0.norm();
        size_t mi = 0;
        rho[mi++] += psi * psi.adjoint();
        for (long k = 1; k <= steps; ++k) {
            lifted_step(h, psi, hpsi, dev, dev2, sigma, dt, noise.next());
            if (mi < marks.size() && k == marks[mi]) rho[mi++] += psi * psi.adjoint();
        }
    }
    for (CMat& r : rho) r /= static_cast<double>(n_traj);

    // Least-squares fit of c in drho/dt = -i[H, rho] - c [H, [H, rho]] over
    // the recorded intervals, with midpoint rho to suppress O(dt) fit bias.
    double num = 0.0, den = 0.0;
    for (size_t m = 0; m + 1 < rho.size(); ++m) {
        const double dtk = static_cast<double>(marks[m + 1] - marks[m]) * dt;
        const CMat mid = 0.5 * (rho[m] + rho[m + 1]);
        const CMat comm = h * mid - mid * h;
        const CMat dbl = h * comm - comm * h;
        const CMat resid = (rho[m + 1] - rho[m]) / dtk +
                           std::complex<double>(0.0, 1.0) * comm;
        num -= (dbl.adjoint() * resid).trace().real();
        den += dbl.squaredNorm();
    }
    const double h_scale = std::max(h.norm(), 1e-12);
    if (den <= 1e-10 * static_cast<double>(rho.size()) * std::pow(h_scale, 4)) {
        // Stationary branch: a density matrix diagonal in the eigenbasis has
        // vanishing commutator and double commutator, so the whole ensemble
        // mean must sit still up to sampling noise.
        double maxdev = 0.0;
        for (const CMat& r : rho) maxdev = std::max(maxdev, (r - rho.front()).norm());
        v.statistic = maxdev;
        v.threshold = 5.0 / std::sqrt(static_cast<double>(n_traj)) + 10.0 * dt * h_scale;
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "stationary ensemble: max |rho_t - rho_0| = %.3g (N = %d)", maxdev,
                      n_traj);
        v.narrative = buf;
        v.pass = v.statistic <= v.threshold;
        return v;
    }
    const double c_fit = num / den;
    const double c_ref = lindblad_coefficient(sigma);

    if (c_ref > 0.0) {
        v.statistic = std::abs(c_fit - c_ref) / (0.05 * c_ref);
        v.threshold = 1.0;
    } else {
        // Without noise the fit residual is pure midpoint-rule truncation,
        // of size (stride dt)^2 |H| per interval.
        const double fd_bias = std::pow(static_cast<double>(stride) * dt, 2) * h_scale;
        v.statistic = std::abs(c_fit);
        v.threshold = std::max(1e-3, 4.0 * fd_bias);
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "fitted c = %.6g, derived c = %.6g (N = %d)", c_fit, c_ref,
                  n_traj);
    v.narrative = buf;
    v.pass = v.statistic <= v.threshold;
    return v;
}

} // namespace kreduce
