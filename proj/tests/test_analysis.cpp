#include <doctest.h>

#include "kreduce/analysis.hpp"

#include <cmath>

using namespace kreduce;

namespace {

constexpr double kPi = 3.14159265358979323846;

CMat two_level(double e0, double e1) {
    CMat h = CMat::Zero(2, 2);
    h(0, 0) = e0;
    h(1, 1) = e1;
    return h;
}

// CP^2 scenario with a tracked observable F = H^2 that is not affine in H.
struct Cp2Case {
    Backend b = Backend::projective(2);
    CMat hm;
    Observable h;
    Observable f;
    ChartPoint x0;

    Cp2Case()
        : hm((CMat(3, 3) << 0, 0, 0, 0, 1, 0, 0, 0, 3).finished()),
          h(Observable::op_expectation(b, hm)),
          f(Observable::op_expectation(b, CMat(hm * hm))),
          x0(make_point(b, 0, (Vec(4) << 1.0, 0.0, 0.8, 0.0).finished())) {}
};

const EnsembleStats& diffusive_ensemble() {
    static const EnsembleStats stats = [] {
        Cp2Case c;
        SdeConfig cfg;
        cfg.sigma = 1.0;
        cfg.dt = 2e-3;
        cfg.horizon = 6.0;
        cfg.master_seed = 31;
        cfg.ensemble_size = 400;
        return run_ensemble(c.b, c.h, c.x0, cfg, &c.f, 1, 33);
    }();
    return stats;
}

const EnsembleStats& collapsed_ensemble() {
    static const EnsembleStats stats = [] {
        auto b = Backend::projective(1);
        auto h = Observable::op_expectation(b, two_level(0.0, 1.0));
        auto x0 = make_point(b, 0, (Vec(2) << 1.0, 0.0).finished());
        SdeConfig cfg;
        cfg.sigma = 2.0;
        cfg.dt = 2e-3;
        cfg.horizon = 24.0;
        cfg.master_seed = 77;
        cfg.ensemble_size = 800;
        return run_ensemble(b, h, x0, cfg, nullptr, 1, 33);
    }();
    return stats;
}

const EnsembleStats& unitary_ensemble() {
    static const EnsembleStats stats = [] {
        auto b = Backend::projective(1);
        auto h = Observable::op_expectation(b, two_level(0.0, 1.0));
        auto x0 = make_point(b, 0, (Vec(2) << 1.0, 0.0).finished());
        SdeConfig cfg;
        cfg.sigma = 0.0;
        cfg.dt = 1e-3;
        cfg.horizon = 1.0;
        cfg.master_seed = 5;
        cfg.ensemble_size = 120;
        return run_ensemble(b, h, x0, cfg, nullptr, 1, 17);
    }();
    return stats;
}

} // namespace

TEST_CASE("energy mean is a martingale for the diffusive ensemble") {
    const auto& st = diffusive_ensemble();
    REQUIRE(st.valid);
    auto v = martingale_test(st, 'H');
    CAPTURE(v.narrative);
    CHECK(v.applicable);
    CHECK(v.conclusive);
    CHECK(v.pass);

    // verdicts are pure functions of the statistics
    auto v2 = martingale_test(st, 'H');
    CHECK(v2.statistic == v.statistic);
    CHECK(v2.pass == v.pass);
}

TEST_CASE("tracked commuting observable is a martingale too") {
    const auto& st = diffusive_ensemble();
    REQUIRE(st.track_f);
    auto v = martingale_test(st, 'F');
    CAPTURE(v.narrative);
    CHECK(v.applicable);
    CHECK(v.pass);

    auto no_f = martingale_test(collapsed_ensemble(), 'F');
    CHECK_FALSE(no_f.applicable);
}

TEST_CASE("martingale test needs at least 100 trajectories") {
    auto b = Backend::projective(1);
    auto h = Observable::op_expectation(b, two_level(0.0, 1.0));
    auto x0 = make_point(b, 0, (Vec(2) << 1.0, 0.0).finished());
    SdeConfig cfg;
    cfg.sigma = 1.0;
    cfg.dt = 1e-2;
    cfg.horizon = 0.5;
    cfg.master_seed = 2;
    cfg.ensemble_size = 50;
    auto st = run_ensemble(b, h, x0, cfg, nullptr, 1, 9);
    auto v = martingale_test(st, 'H');
    CHECK_FALSE(v.conclusive);
}

TEST_CASE("unitary ensemble passes the degenerate martingale path") {
    const auto& st = unitary_ensemble();
    auto v = martingale_test(st, 'H');
    CAPTURE(v.narrative);
    CHECK(v.pass);
    CHECK(v.statistic < 0.5);
}

TEST_CASE("dispersion decay bound holds on the diffusive ensemble") {
    const auto& st = diffusive_ensemble();
    auto v = supermartingale_bound(st);
    CAPTURE(v.narrative);
    CHECK(v.applicable);
    CHECK(v.pass);

    auto na = supermartingale_bound(st, 0.0);
    CHECK_FALSE(na.applicable);
}

TEST_CASE("dispersion decay bound is trivial without noise") {
    auto v = supermartingale_bound(unitary_ensemble());
    CAPTURE(v.narrative);
    CHECK(v.pass);
}

TEST_CASE("ito isometry holds for recorded quadratic variation") {
    auto v = ito_isometry_check(diffusive_ensemble());
    CAPTURE(v.narrative);
    CHECK(v.pass);
    auto vu = ito_isometry_check(unitary_ensemble());
    CHECK(vu.pass);
    CHECK(vu.statistic < 0.1);
}

TEST_CASE("terminal variance matches the initial dispersion when kappa equals lambda") {
    const auto& st = collapsed_ensemble();
    REQUIRE(st.n - st.unresolved >= 95 * st.n / 100);
    auto v = terminal_variance_check(st);
    CAPTURE(v.narrative);
    CHECK(v.applicable);
    CHECK(v.conclusive);
    CHECK(v.pass);

    auto und = terminal_variance_check(diffusive_ensemble());
    CHECK_FALSE(und.conclusive);
}

TEST_CASE("instantaneous dispersion drift matches the curvature law") {
    auto b = Backend::projective(1);
    auto h = Observable::op_expectation(b, two_level(0.0, 1.0));
    std::vector<ChartPoint> starts = {
        make_point(b, 0, (Vec(2) << 1.0, 0.0).finished()),
        make_point(b, 0, (Vec(2) << 0.0, 0.0).finished()),  // eigenstate, zero drift
    };
    auto v = drift_regression_v(b, h, starts, 0.5, nullptr, 3000, 0.0, 9);
    CAPTURE(v.narrative);
    CHECK(v.applicable);
    CHECK(v.conclusive);
    CHECK(v.pass);
}

TEST_CASE("tracked dispersion drift uses the bisectional coefficient") {
    Cp2Case c;
    std::vector<ChartPoint> starts = {c.x0};
    auto v = drift_regression_v(c.b, c.h, starts, 0.5, &c.f, 4000, 0.0, 17);
    CAPTURE(v.narrative);
    CHECK(v.applicable);
    CHECK(v.conclusive);
    CHECK(v.pass);
}

TEST_CASE("lifted oracle reproduces the unitary flow without noise") {
    auto b = Backend::projective(1);
    CMat hm = two_level(0.0, 1.0);
    auto h = Observable::op_expectation(b, hm);
    CVec psi0(2);
    psi0 << 1.0, 1.0;

    SdeConfig cfg;
    cfg.sigma = 0.0;
    cfg.dt = 1e-4;
    cfg.horizon = 1.0;
    std::vector<double> zero(10001, 0.0);
    VectorNoise vn(zero);
    auto tr = lifted_oracle(b, hm, psi0, cfg, vn, 100);

    for (double hv : tr.h_series) CHECK(std::abs(hv - 0.5) < 1e-3);
    for (double vv : tr.v_series) CHECK(std::abs(vv - 0.25) < 1e-3);

    // same discretization grid on the chart side
    auto x0 = make_point(b, 0, (Vec(2) << 1.0, 0.0).finished());
    VectorNoise vn2(zero);
    auto tc = simulate_trajectory(b, h, x0, cfg, vn2, nullptr, 100, true);
    REQUIRE(tc.points.size() == tr.points.size());
    for (size_t k = 0; k < tr.points.size(); ++k)
        CHECK(fs_distance(b, tr.points[k], tc.points[k]) < 5e-3);
}

TEST_CASE("lifted and chart integrations converge at first order without noise") {
    auto b = Backend::projective(1);
    CMat hm(2, 2);
    hm << 0.0, std::complex<double>(0.7, 0.0), std::complex<double>(0.7, 0.0), 2.0;
    auto h = Observable::op_expectation(b, hm);
    CVec psi0(2);
    psi0 << 1.0, std::complex<double>(0.4, 0.3);
    auto x0 = make_point(b, 0, (Vec(2) << 0.4, 0.3).finished());

    auto gap_at = [&](double dt) {
        SdeConfig cfg;
        cfg.sigma = 0.0;
        cfg.dt = dt;
        cfg.horizon = 2.0;
        std::vector<double> zero(static_cast<size_t>(2.0 / dt) + 2, 0.0);
        VectorNoise na(zero), nb(zero);
        auto tl = lifted_oracle(b, hm, psi0, cfg, na, 1 << 20);
        auto tc = simulate_trajectory(b, h, x0, cfg, nb, nullptr, 1 << 20, true);
        return fs_distance(b, tl.terminal, tc.terminal);
    };
    const double g1 = gap_at(2e-3);
    const double g2 = gap_at(1e-3);
    const double g4 = gap_at(5e-4);
    CAPTURE(g1);
    CAPTURE(g2);
    CAPTURE(g4);
    CHECK(g1 > 0.0);
    CHECK(g1 / g2 > 1.5);
    CHECK(g1 / g2 < 2.8);
    CHECK(g2 / g4 > 1.5);
    CHECK(g2 / g4 < 2.8);
}

TEST_CASE("lifted oracle keeps eigenvectors stationary") {
    auto b = Backend::projective(1);
    CMat hm = two_level(0.0, 1.0);
    CVec psi0(2);
    psi0 << 0.0, 1.0;
    SdeConfig cfg;
    cfg.sigma = 0.8;
    cfg.dt = 1e-3;
    cfg.horizon = 1.0;
    NoisePath path(99, 0, cfg.dt);
    PathNoise noise(path);
    auto tr = lifted_oracle(b, hm, psi0, cfg, noise, 100);
    for (double hv : tr.h_series) CHECK(std::abs(hv - 1.0) < 1e-12);
    for (double vv : tr.v_series) CHECK(std::abs(vv) < 1e-12);
}

TEST_CASE("ensemble mean density matrix follows the dephasing generator") {
    CMat hm(2, 2);
    hm << 0.0, std::complex<double>(0.3, 0.0), std::complex<double>(0.3, 0.0), 1.0;
    CVec psi0(2);
    psi0 << 1.0, std::complex<double>(0.0, 0.5);
    auto v = lindblad_check(hm, psi0, 0.6, 0.004, 1.5, 2500, 13);
    CAPTURE(v.narrative);
    CHECK(v.applicable);
    CHECK(v.conclusive);
    CHECK(v.pass);
}

TEST_CASE("stationary ensemble density matrix stays put") {
    CMat hm = two_level(0.0, 1.0);
    CVec psi0(2);
    psi0 << 1.0, 0.0;  // eigenvector, diagonal density matrix
    auto v = lindblad_check(hm, psi0, 0.5, 0.01, 1.0, 400, 21);
    CAPTURE(v.narrative);
    CHECK(v.pass);
}

TEST_CASE("dephasing coefficient fit degenerates cleanly without noise") {
    CMat hm(2, 2);
    hm << 0.0, std::complex<double>(0.3, 0.0), std::complex<double>(0.3, 0.0), 1.0;
    CVec psi0(2);
    psi0 << 1.0, std::complex<double>(0.0, 0.5);
    auto v = lindblad_check(hm, psi0, 0.0, 0.005, 1.0, 200, 3);
    CAPTURE(v.narrative);
    CHECK(v.pass);
}

TEST_CASE("sphere solver conserves mass and the energy martingale") {
    SphereFp fp(48, 64);
    fp.set_reduction(0.5, 1.0);
    fp.init_delta(1.0, 2.0);
    auto mean_cos = [&] {
        double s = 0.0;
        for (int i = 0; i < fp.n_theta(); ++i) {
            double row = 0.0;
            for (int j = 0; j < fp.n_phi(); ++j) row += fp.cell_mass(i, j);
            s += row * std::cos(fp.theta_center(i));
        }
        return s;
    };
    const double c0 = mean_cos();
    double prev_v = 1e300;
    for (double t : {1.0, 2.0, 4.0, 8.0}) {
        fp.advance_to(t);
        CHECK(std::abs(fp.mass() - 1.0) < 1e-12);
        double mv = 0.0;
        for (int i = 0; i < fp.n_theta(); ++i) {
            const double s2 = std::pow(std::sin(fp.theta_center(i)), 2);
            for (int j = 0; j < fp.n_phi(); ++j) mv += fp.cell_mass(i, j) * s2 / 4.0;
        }
        CHECK(mv < prev_v + 1e-9);
        prev_v = mv;
    }
    CHECK(std::abs(mean_cos() - c0) < 5e-3);
}

TEST_CASE("reduction flow concentrates mass at the poles with the Born split") {
    SphereFp fp(64, 64);
    fp.set_reduction(0.5, 1.0);
    fp.init_delta(kPi / 2, 0.0);
    const double theta_start = fp.theta_center(32);
    const double expect_north = (1.0 + std::cos(theta_start)) / 2.0;
    fp.advance_to(150.0);

    double north = 0.0, middle = 0.0;
    for (int i = 0; i < fp.n_theta(); ++i) {
        const double th = fp.theta_center(i);
        for (int j = 0; j < fp.n_phi(); ++j) {
            const double m = fp.cell_mass(i, j);
            if (th < kPi / 2) north += m;
            if (th > 0.4 && th < kPi - 0.4) middle += m;
        }
    }
    CAPTURE(north);
    CAPTURE(middle);
    CHECK(std::abs(north - expect_north) < 0.02);
    CHECK(middle < 0.05);
}

TEST_CASE("brownian mode relaxes to the round measure") {
    SphereFp fp(32, 48);
    fp.set_brownian(1.0);
    fp.init_delta(kPi / 2, 0.0);
    fp.advance_to(6.0);
    std::vector<double> solved, uniform;
    const double dth = kPi / 32, dph = 2.0 * kPi / 48;
    for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 48; ++j) {
            solved.push_back(fp.cell_mass(i, j));
            uniform.push_back(std::sin(fp.theta_center(i)) * dth * dph / (4.0 * kPi));
        }
    CHECK(total_variation(solved, uniform) < 0.02);
}

TEST_CASE("forced solver step beyond the stability bound is rejected") {
    SphereFp fp(32, 48);
    fp.set_brownian(1.0);
    fp.init_delta(1.0, 0.0);
    CHECK_THROWS_AS(fp.advance_to(1.0, 1.0), ConfigError);
    CHECK_THROWS_AS(fp.coarse_mass(5, 48), InvalidInputError);
}

TEST_CASE("brownian solver matches the spherical heat kernel") {
    const double tv = heat_flow_tv(32, 64, 1.0, 2.5, kPi / 2);
    CAPTURE(tv);
    CHECK(tv < 0.05);
}

TEST_CASE("trajectory histograms match the reduction density on the sphere") {
    CMat hm(2, 2);
    hm << 0.5, 0.5, 0.5, 0.5;  // eigenvalues 0 and 1
    FpConfig cfg;
    cfg.n_theta = 64;
    cfg.n_phi = 128;
    cfg.bins_theta = 8;
    cfg.bins_phi = 4;
    cfg.sigma = 0.5;
    cfg.checkpoints = {4.0, 16.0};
    cfg.ensemble = 6000;
    cfg.seed = 19;
    cfg.sim_dt = 2e-3;
    auto v = fokker_planck_cp1(hm, std::complex<double>(0.2, 0.4), cfg);
    CAPTURE(v.narrative);
    CHECK(v.applicable);
    CHECK(v.conclusive);
    CHECK(v.pass);
}

TEST_CASE("fokker planck cross-check validates its inputs") {
    FpConfig cfg;
    cfg.checkpoints = {1.0};
    CHECK_THROWS_AS(fokker_planck_cp1(two_level(1.0, 1.0), {0.0, 0.0}, cfg), InvalidInputError);
    FpConfig bad = cfg;
    bad.checkpoints = {2.0, 1.0};
    CHECK_THROWS_AS(fokker_planck_cp1(two_level(0.0, 1.0), {0.0, 0.0}, bad), InvalidInputError);
}
