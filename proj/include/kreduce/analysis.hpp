#pragma once

// Statistical verdicts over simulation ensembles, plus the independent
// oracles used to cross-check the intrinsic integrator: a Hilbert-space
// simulation of the same process in homogeneous coordinates, the ensemble
// density-matrix generator fit, and a Fokker-Planck solver on the sphere.

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "kreduce/dynamics.hpp"

namespace kreduce {

// Every verdict is normalized so that it passes iff statistic <= threshold.
// `applicable` is false when the test's hypothesis is unmet (e.g. kappa <= 0);
// `conclusive` is false when the data cannot decide (e.g. ensemble too small).
struct TestVerdict {
    std::string name;
    double statistic = 0.0;
    double threshold = 1.0;
    bool pass = false;
    bool applicable = true;
    bool conclusive = true;
    std::string narrative;
};

// Constancy of the ensemble mean of H (which = 'H') or of a commuting tracked
// observable (which = 'F'): |mean_t - X_0| <= 3 SE at every recorded time,
// plus an increment regression dX ~ (1, X, V) whose coefficients must all be
// consistent with zero at 3 sigma.
TestVerdict martingale_test(const EnsembleStats& stats, char which = 'H');

// Decay bound mean V_t <= V0/(1 + kappa sigma^2 V0 t) + 3 SE, monotone mean
// within 3 SE, and xi_t >= -tolerance. kappa < 0 selects the value recorded
// in the ensemble scales.
TestVerdict supermartingale_bound(const EnsembleStats& stats, double kappa = -1.0);

// Instantaneous drift of V^H (or V^F when track_f is given) estimated from
// restart ensembles at each start point, against -sigma^2 K_H V^2 (resp.
// -sigma^2 K_FH V^F V^H). The estimate at half the window provides a
// Richardson bias allowance; windows too coarse come back inconclusive.
TestVerdict drift_regression_v(const Backend& b, const Observable& h,
                               const std::vector<ChartPoint>& starts, double sigma,
                               const Observable* track_f = nullptr, int restarts = 4000,
                               double window = 0.0, std::uint64_t seed = 1);

// E[(H_t - H_0)^2] = sigma^2 E[Q_t] within 3 standard errors of the combined
// per-trajectory statistic, at every recorded time.
TestVerdict ito_isometry_check(const EnsembleStats& stats);

// Terminal energy variance against the curvature bounds: V0/kappa >=
// E[(H_inf - H_0)^2] >= V0/lambda with H_inf the labeled collapse eigenvalue.
// Equality test against V0 when kappa == lambda. Negative kappa/lambda select
// the recorded scale values.
TestVerdict terminal_variance_check(const EnsembleStats& stats, double kappa = -1.0,
                                    double lambda = -1.0);

// Hilbert-space oracle: Euler-Maruyama on homogeneous coordinates for
//   dpsi = (-iH - (sigma^2/8)(H - <H>)^2) psi dt + (sigma/2)(H - <H>) psi dW,
// renormalized each step, recorded as chart points plus H/V series. Shares
// the NoiseSource contract with simulate_trajectory so both integrators can
// consume the same Wiener increments. Single projective factor only.
Trajectory lifted_oracle(const Backend& b, const CMat& h, const CVec& psi0, const SdeConfig& cfg,
                         NoiseSource& noise, long record_stride = 1);

// Ensemble density matrix from lifted trajectories, fitted against
//   drho/dt = -i[H, rho] - c [H, [H, rho]].
// The derived coefficient is c = sigma^2/8; the fitted c must match within
// 5%. The derivation is documented in docs/lifted_dynamics.md.
TestVerdict lindblad_check(const CMat& h, const CVec& psi0, double sigma, double dt,
                           double horizon, int n_traj, std::uint64_t seed);
double lindblad_coefficient(double sigma);

// Explicit finite-volume Fokker-Planck solver on the unit sphere in
// latitude-longitude coordinates. Advances the cell-mass vector of
//   dP/dt = -d_theta(mu_theta P) - d_phi(mu_phi P) + 1/2 d2_theta(c2 P)
// with zero flux through the poles; mass is conserved by construction.
class SphereFp {
  public:
    SphereFp(int n_theta, int n_phi);

    // Reduction coefficients for a two-level system with gap de in the
    // eigenbasis spherical coordinates. The relative phase advances rigidly
    // at rate -de independent of latitude and carries no noise; corotate
    // moves to the longitude chi = phi + de t, where that advection is exact
    // and drops out of the grid update.
    void set_reduction(double sigma, double de, bool corotate = false);
    // Isotropic Brownian motion, generator (sigma^2/2) Laplace-Beltrami.
    void set_brownian(double sigma);

    void init_delta(double theta0, double phi0);
    // Explicit steps up to time t; dt chosen from the CFL bound unless a
    // positive dt is forced, which is rejected when it violates the bound.
    void advance_to(double t, double forced_dt = 0.0, double safety = 0.4);

    double t() const { return t_; }
    double mass() const;
    double cell_mass(int i, int j) const { return p_[size_t(i * n_phi_ + j)]; }
    int n_theta() const { return n_theta_; }
    int n_phi() const { return n_phi_; }
    double theta_center(int i) const;
    double phi_center(int j) const;

    // Aggregate cell masses onto a coarser bins_theta x bins_phi grid.
    // phi_shift rotates the longitude binning by that many fine cells, so a
    // caller can center the coarse bins on a conserved phase instead of
    // splitting it across a bin edge.
    std::vector<double> coarse_mass(int bins_theta, int bins_phi, int phi_shift = 0) const;

  private:
    double cfl_dt() const;
    void step(double dt);

    int n_theta_, n_phi_;
    double dth_, dph_;
    double t_ = 0.0;
    bool brownian_ = false;
    bool corotate_ = false;
    double sigma_ = 0.0, de_ = 0.0;
    std::vector<double> p_;     // cell masses
    std::vector<double> work_;  // update buffer
};

// Total variation between two mass vectors of equal length.
double total_variation(const std::vector<double>& a, const std::vector<double>& b);

// TV distance between the finite-volume heat flow from a point mass and the
// analytic spherical heat kernel at time t, on the solver's own grid.
double heat_flow_tv(int n_theta, int n_phi, double sigma, double t, double theta0);

struct FpConfig {
    int n_theta = 128;
    int n_phi = 256;
    int bins_theta = 16;
    int bins_phi = 8;
    double sigma = 0.5;
    std::vector<double> checkpoints;  // absolute times, ascending
    int ensemble = 30000;
    std::uint64_t seed = 0;
    double sim_dt = 0.0;  // <= 0: reduction-scale default
    double pde_dt = 0.0;  // <= 0: CFL-derived
    double tv_tol = 0.05;
};

// Fokker-Planck cross-check on CP^1: solve the reduction PDE from a point
// mass at z0 (in the eigenbasis of h) and compare coarse-binned cell masses
// against a trajectory-ensemble histogram at each checkpoint.
TestVerdict fokker_planck_cp1(const CMat& h, std::complex<double> z0, const FpConfig& cfg);

} // namespace kreduce
