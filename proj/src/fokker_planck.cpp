#include "kreduce/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace kreduce {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

SphereFp::SphereFp(int n_theta, int n_phi) : n_theta_(n_theta), n_phi_(n_phi) {
    if (n_theta < 4 || n_phi < 4) throw InvalidInputError("grid too small");
    dth_ = kPi / n_theta;
    dph_ = 2.0 * kPi / n_phi;
    p_.assign(static_cast<size_t>(n_theta) * static_cast<size_t>(n_phi), 0.0);
    work_.assign(p_.size(), 0.0);
}

void SphereFp::set_reduction(double sigma, double de, bool corotate) {
    if (!(sigma >= 0.0) || !(de > 0.0)) throw InvalidInputError("need sigma >= 0 and a gap");
    brownian_ = false;
    corotate_ = corotate;
    sigma_ = sigma;
    de_ = de;
}

void SphereFp::set_brownian(double sigma) {
    if (!(sigma > 0.0)) throw InvalidInputError("need sigma > 0");
    brownian_ = true;
    corotate_ = false;
    sigma_ = sigma;
    de_ = 0.0;
}

void SphereFp::init_delta(double theta0, double phi0) {
    std::fill(p_.begin(), p_.end(), 0.0);
    t_ = 0.0;
    theta0 = std::clamp(theta0, 0.0, kPi);
    phi0 = std::fmod(phi0, 2.0 * kPi);
    if (phi0 < 0.0) phi0 += 2.0 * kPi;
    const int i = std::min(n_theta_ - 1, static_cast<int>(theta0 / dth_));
    const int j = std::min(n_phi_ - 1, static_cast<int>(phi0 / dph_));
    p_[static_cast<size_t>(i * n_phi_ + j)] = 1.0;
}

double SphereFp::theta_center(int i) const { return (i + 0.5) * dth_; }
double SphereFp::phi_center(int j) const { return (j + 0.5) * dph_; }

double SphereFp::mass() const {
    double m = 0.0;
    for (double x : p_) m += x;
    return m;
}

double SphereFp::cfl_dt() const {
    const double s2 = sigma_ * sigma_;
    if (brownian_) {
        const double sin_min = std::sin(0.5 * dth_);
        const double th = dth_ * dth_ / s2;
        const double ph = sin_min * sin_min * dph_ * dph_ / s2;
        return std::min(th, ph);
    }
    const double a_max = s2 * de_ * de_ / 16.0;
    const double c2_max = s2 * de_ * de_ / 4.0;
    // corotating with sigma = 0 has no dynamics left; any step is exact
    double dt = corotate_ ? 1e18 : dph_ / std::max(de_, 1e-300);
    if (a_max > 0.0) dt = std::min(dt, dth_ / a_max);
    if (c2_max > 0.0) dt = std::min(dt, dth_ * dth_ / c2_max);
    return dt;
}

void SphereFp::step(double dt) {
    std::fill(work_.begin(), work_.end(), 0.0);
    const double s2 = sigma_ * sigma_;
    const auto at = [&](int i, int j) -> double { return p_[static_cast<size_t>(i * n_phi_ + j)]; };
    const auto add = [&](int i, int j, double v) { work_[static_cast<size_t>(i * n_phi_ + j)] += v; };

    // fluxes through interior theta faces; the poles carry no flux
    for (int i = 0; i + 1 < n_theta_; ++i) {
        const double th_f = (i + 1) * dth_;
        if (brownian_) {
            const double inv_lo = 1.0 / (std::sin(theta_center(i)) * dth_ * dph_);
            const double inv_hi = 1.0 / (std::sin(theta_center(i + 1)) * dth_ * dph_);
            const double coef = -0.5 * s2 * std::sin(th_f) / dth_ * dph_;
            for (int j = 0; j < n_phi_; ++j) {
                const double flux = coef * (at(i + 1, j) * inv_hi - at(i, j) * inv_lo);
                add(i, j, -dt * flux);
                add(i + 1, j, dt * flux);
            }
        } else {
            const double a = -(s2 * de_ * de_ / 16.0) * std::sin(2.0 * th_f);
            const double c2_lo = s2 * de_ * de_ * std::pow(std::sin(theta_center(i)), 2) / 4.0;
            const double c2_hi = s2 * de_ * de_ * std::pow(std::sin(theta_center(i + 1)), 2) / 4.0;
            const double dcoef = 1.0 / (2.0 * dth_ * dth_);
            for (int j = 0; j < n_phi_; ++j) {
                const double up = a > 0.0 ? at(i, j) : at(i + 1, j);
                const double flux = a * up / dth_ - (c2_hi * at(i + 1, j) - c2_lo * at(i, j)) * dcoef;
                add(i, j, -dt * flux);
                add(i + 1, j, dt * flux);
            }
        }
    }

    // fluxes through phi faces, periodic
    for (int i = 0; i < n_theta_; ++i) {
        if (brownian_) {
            const double sc = std::sin(theta_center(i));
            const double inv_mass = 1.0 / (sc * dth_ * dph_);
            const double coef = -0.5 * s2 / (sc * dph_) * dth_ * inv_mass;
            for (int j = 0; j < n_phi_; ++j) {
                const int j2 = j + 1 == n_phi_ ? 0 : j + 1;
                const double flux = coef * (at(i, j2) - at(i, j));
                add(i, j, -dt * flux);
                add(i, j2, dt * flux);
            }
        } else {
            if (corotate_) break;
            const double bphi = -de_;
            for (int j = 0; j < n_phi_; ++j) {
                const int j2 = j + 1 == n_phi_ ? 0 : j + 1;
                const double up = bphi > 0.0 ? at(i, j) : at(i, j2);
                const double flux = bphi * up / dph_;
                add(i, j, -dt * flux);
                add(i, j2, dt * flux);
            }
        }
    }

    for (size_t k = 0; k < p_.size(); ++k) p_[k] += work_[k];
    t_ += dt;
}

void SphereFp::advance_to(double t, double forced_dt, double safety) {
    if (t < t_ - 1e-12) throw InvalidInputError("cannot integrate backwards");
    if (t <= t_) return;
    const double limit = cfl_dt();
    double dt = safety * limit;
    if (forced_dt > 0.0) {
        if (forced_dt > limit)
            throw ConfigError("cfl", "requested PDE step violates the stability bound");
        dt = forced_dt;
    }
    const long n = std::max(1L, static_cast<long>(std::ceil((t - t_) / dt - 1e-12)));
    const double dt_run = (t - t_) / static_cast<double>(n);
    for (long k = 0; k < n; ++k) step(dt_run);
    t_ = t;  // absorb rounding
}

std::vector<double> SphereFp::coarse_mass(int bins_theta, int bins_phi, int phi_shift) const {
    if (bins_theta < 1 || bins_phi < 1 || n_theta_ % bins_theta != 0 || n_phi_ % bins_phi != 0)
        throw InvalidInputError("coarse bins must divide the grid");
    const int rt = n_theta_ / bins_theta;
    const int rp = n_phi_ / bins_phi;
    std::vector<double> out(static_cast<size_t>(bins_theta) * static_cast<size_t>(bins_phi), 0.0);
    for (int i = 0; i < n_theta_; ++i)
        for (int j = 0; j < n_phi_; ++j) {
            const int jr = ((j + phi_shift) % n_phi_ + n_phi_) % n_phi_;
            out[static_cast<size_t>((i / rt) * bins_phi + jr / rp)] +=
                p_[static_cast<size_t>(i * n_phi_ + j)];
        }
    return out;
}

double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw InvalidInputError("mass vectors differ in size");
    double sa = 0.0, sb = 0.0;
    for (double x : a) sa += x;
    for (double x : b) sb += x;
    if (!(sa > 0.0) || !(sb > 0.0)) throw InvalidInputError("empty distribution");
    double tv = 0.0;
    for (size_t k = 0; k < a.size(); ++k) tv += std::abs(a[k] / sa - b[k] / sb);
    return 0.5 * tv;
}

double heat_flow_tv(int n_theta, int n_phi, double sigma, double t, double theta0) {
    SphereFp fp(n_theta, n_phi);
    fp.set_brownian(sigma);
    fp.init_delta(theta0, 0.0);
    // start the oracle from the same cell-center point mass the solver uses
    const double th0 = fp.theta_center(std::min(n_theta - 1, static_cast<int>(theta0 / (kPi / n_theta))));
    const double ph0 = fp.phi_center(std::min(n_phi - 1, 0));
    fp.advance_to(t);

    std::vector<double> oracle(static_cast<size_t>(n_theta) * static_cast<size_t>(n_phi), 0.0);
    const double dth = kPi / n_theta, dph = 2.0 * kPi / n_phi;
    for (int i = 0; i < n_theta; ++i) {
        const double th = (i + 0.5) * dth;
        for (int j = 0; j < n_phi; ++j) {
            const double ph = (j + 0.5) * dph;
            const double cg = std::cos(th0) * std::cos(th) +
                              std::sin(th0) * std::sin(th) * std::cos(ph - ph0);
            // spherical heat kernel as a Legendre series
            double rho = 0.0, pl_prev = 1.0, pl = cg;
            rho += 1.0 / (4.0 * kPi);
            for (int l = 1; l <= 256; ++l) {
                const double coef = (2.0 * l + 1.0) / (4.0 * kPi) *
                                    std::exp(-0.5 * sigma * sigma * l * (l + 1.0) * t);
                rho += coef * pl;
                if (coef < 1e-15 && l > 4) break;
                const double pl_next = ((2.0 * l + 1.0) * cg * pl - l * pl_prev) / (l + 1.0);
                pl_prev = pl;
                pl = pl_next;
            }
            oracle[static_cast<size_t>(i * n_phi + j)] = std::max(0.0, rho) * std::sin(th) * dth * dph;
        }
    }

    std::vector<double> solved(oracle.size());
    for (int i = 0; i < n_theta; ++i)
        for (int j = 0; j < n_phi; ++j)
            solved[static_cast<size_t>(i * n_phi + j)] = fp.cell_mass(i, j);
    return total_variation(solved, oracle);
}

TestVerdict fokker_planck_cp1(const CMat& h, std::complex<double> z0, const FpConfig& cfg) {
    TestVerdict v;
    v.name = "fokker_planck_cp1";
    if (h.rows() != 2 || h.cols() != 2 || (h - h.adjoint()).norm() > 1e-12 * (1.0 + h.norm()))
        throw InvalidInputError("two-level Hermitian operator required");
    if (cfg.checkpoints.empty()) throw InvalidInputError("at least one checkpoint required");
    for (size_t i = 0; i < cfg.checkpoints.size(); ++i)
        if (cfg.checkpoints[i] <= 0.0 ||
            (i > 0 && cfg.checkpoints[i] <= cfg.checkpoints[i - 1]))
            throw InvalidInputError("checkpoints must be positive and ascending");
    if (cfg.ensemble < 100) throw InvalidInputError("ensemble too small for a histogram");

    Eigen::SelfAdjointEigenSolver<CMat> es(h);
    const double de = es.eigenvalues()[1] - es.eigenvalues()[0];
    if (de <= 1e-9 * (1.0 + h.norm())) throw InvalidInputError("degenerate operator");
    const CMat u = es.eigenvectors();

    CVec psi0(2);
    psi0 << 1.0, z0;
    const CVec w0 = u.adjoint() * psi0;
    const double theta0 = 2.0 * std::atan2(std::abs(w0[1]), std::abs(w0[0]));
    double phi0 = std::arg(w0[1]) - std::arg(w0[0]);

    // Solve in the corotating longitude: the relative phase advances rigidly
    // at rate -de on every path, so the grid never has to advect it, and the
    // histogram below applies the same shift to the sampled phases.
    SphereFp fp(cfg.n_theta, cfg.n_phi);
    fp.set_reduction(cfg.sigma, de, true);
    fp.init_delta(theta0, phi0);

    // The corotating phase is conserved pathwise, so center a longitude bin
    // on it; a bin edge there would split the rigid mass on scheme noise
    // alone and the comparison would measure the integrator, not the PDE.
    const int rp = cfg.n_phi / cfg.bins_phi;
    double ph_init = std::fmod(phi0, 2.0 * kPi);
    if (ph_init < 0.0) ph_init += 2.0 * kPi;
    const int j0 = std::min(cfg.n_phi - 1,
                            static_cast<int>(ph_init / (2.0 * kPi / cfg.n_phi)));
    const int phi_shift = rp / 2 - j0;

    auto b = Backend::projective(1);
    auto obs = Observable::op_expectation(b, h);
    Vec x(2);
    x << z0.real(), z0.imag();
    const ChartPoint x0 = make_point(b, 0, x);

    SdeConfig scfg;
    scfg.sigma = cfg.sigma;
    scfg.dt = cfg.sim_dt;
    scfg.horizon = cfg.checkpoints.back();
    const RunScales sc = resolve_scales(b, obs, x0, scfg);

    std::vector<long> marks;
    for (double t : cfg.checkpoints)
        marks.push_back(std::clamp(static_cast<long>(std::llround(t / sc.dt)), 1L, sc.steps));

    const size_t n_bins = static_cast<size_t>(cfg.bins_theta) * static_cast<size_t>(cfg.bins_phi);
    std::vector<std::vector<double>> hist(marks.size(), std::vector<double>(n_bins, 0.0));
    long blow = 0, ok = 0;

    Stepper st(b, obs, cfg.sigma);
    std::vector<size_t> deposit(marks.size());
    for (int i = 0; i < cfg.ensemble; ++i) {
        NoisePath noise(cfg.seed, static_cast<std::uint64_t>(i), sc.dt);
        try {
            st.reset(x0);
            long k = 0;
            for (size_t m = 0; m < marks.size(); ++m) {
                for (; k < marks[m]; ++k) st.advance(sc.dt, noise.next());
                const CVec psi = factor_lift(b, st.state(), 0);
                const CVec w = u.adjoint() * psi;
                const double th = 2.0 * std::atan2(std::abs(w[1]), std::abs(w[0]));
                const double t_m = static_cast<double>(marks[m]) * sc.dt;
                double ph = std::arg(w[1] * std::conj(w[0])) + de * t_m;
                ph = std::fmod(ph, 2.0 * kPi);
                if (ph < 0.0) ph += 2.0 * kPi;
                const int bi = std::min(cfg.bins_theta - 1,
                                        static_cast<int>(th / kPi * cfg.bins_theta));
                const int jf = std::min(cfg.n_phi - 1,
                                        static_cast<int>(ph / (2.0 * kPi) * cfg.n_phi));
                const int bj = ((jf + phi_shift) % cfg.n_phi + cfg.n_phi) % cfg.n_phi / rp;
                deposit[m] = static_cast<size_t>(bi * cfg.bins_phi + bj);
            }
        } catch (const BlowUpError&) {
            ++blow;
            continue;
        }
        ++ok;
        for (size_t m = 0; m < marks.size(); ++m) hist[m][deposit[m]] += 1.0;
    }
    if (blow > cfg.ensemble / 10) {
        v.conclusive = false;
        v.narrative = "too many trajectory blow-ups for a usable histogram";
        return v;
    }

    double worst = 0.0;
    std::string detail = "TV per checkpoint:";
    for (size_t m = 0; m < marks.size(); ++m) {
        fp.advance_to(static_cast<double>(marks[m]) * sc.dt, cfg.pde_dt);
        const std::vector<double> coarse = fp.coarse_mass(cfg.bins_theta, cfg.bins_phi, phi_shift);
        const double tv = total_variation(coarse, hist[m]);
        worst = std::max(worst, tv);
        char buf[48];
        std::snprintf(buf, sizeof buf, " %.4f", tv);
        detail += buf;
    }

    v.statistic = worst / cfg.tv_tol;
    v.threshold = 1.0;
    v.narrative = detail;
    v.pass = v.conclusive && v.statistic <= v.threshold;
    return v;
}

} // namespace kreduce
