#pragma once

// Euler-Maruyama integration of the energy-driven reduction SDE in chart
// coordinates. The drift is the Hamiltonian vector field plus the dispersion
// pull and the Ito Christoffel correction,
//
//   dx^a = (2 w^{ab} d_b H - 1/4 s^2 grad^a V - 1/2 s^2 G^a_{bc} u^b u^c) dt
//          + s u^a dW,    u = g^{-1} dH,
//
// driven by one Wiener process shared across all factors. Trajectories are
// reproducible from (master_seed, trajectory index) alone, and ensemble
// reduction is chunked so aggregate statistics are byte-identical for any
// thread count.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kreduce/geometry.hpp"
#include "kreduce/observables.hpp"
#include "kreduce/rng.hpp"

namespace kreduce {

enum class Scheme { EulerMaruyama };

struct SdeConfig {
    double sigma = 0.5;
    double dt = 0.0;        // <= 0 selects min(0.01/scale, tau/1e4)
    double horizon = 0.0;
    Scheme scheme = Scheme::EulerMaruyama;
    double collapse_epsilon = 0.0;  // <= 0 selects 1e-6 * V0
    int collapse_hold_steps = 50;
    std::uint64_t master_seed = 0;
    int ensemble_size = 1;
};

// Characteristic reduction time 1/(kappa sigma^2 V0); +inf when the product
// vanishes (no reduction expected).
double reduction_timescale(double kappa, double sigma, double v0);

// Effective run parameters after applying the config defaults.
struct RunScales {
    double h0 = 0.0;
    double v0 = 0.0;
    double dt = 0.0;
    double epsilon = 0.0;
    double tau = 0.0;
    double kappa = 0.0;
    double lambda = 0.0;
    bool kappa_exact = false;
    long steps = 0;
};
RunScales resolve_scales(const Backend& b, const Observable& h, const ChartPoint& x0,
                         const SdeConfig& cfg, int curvature_samples = 2000);

// Drift of the coordinate SDE, assembled from the general tensor machinery.
Vec coordinate_drift(const Backend& b, const Observable& h, const ChartPoint& p, double sigma);

// Diffusion vector sigma grad^a H; its squared g-norm is sigma^2 V^H.
Vec volatility_vector(const Backend& b, const Observable& h, const ChartPoint& p, double sigma);

// One Euler-Maruyama step with the chart-switch check applied afterwards.
ChartPoint step(const Backend& b, const Observable& h, const ChartPoint& p, double dt, double dw,
                double sigma);

// Reusable integrator state. Projective backends run an allocation-free
// per-factor kernel in homogeneous coordinates; potential backends fall back
// to the tensor route. Scalars are refreshed on every advance so the hot loop
// never re-derives them.
class Stepper {
  public:
    Stepper(const Backend& b, const Observable& h, double sigma);

    void reset(const ChartPoint& x0);
    void advance(double dt, double dw);

    const ChartPoint& state() const { return state_; }
    double h_value() const { return hval_; }
    double v_value() const { return vval_; }
    double factor_v(int f) const { return fv_[static_cast<size_t>(f)]; }
    // Curvature-weighted dispersion K_H V^2 at the current state; exact on
    // projective backends, sampled through the curvature tensor otherwise.
    double kv2() const;
    int chart_switches() const { return switches_; }

  private:
    void refresh();
    void fast_factor_eval(int f);

    const Backend* b_;
    const Observable* h_;
    double sigma_;
    bool fast_;
    ChartPoint state_;
    double hval_ = 0.0, vval_ = 0.0;
    std::vector<double> fv_;
    int switches_ = 0;

    // per-factor workspaces for the projective kernel
    struct FactorWork {
        CVec z, psi, fpsi, f2psi, w, w2, u, uvr;
        double fhat = 0.0, f2hat = 0.0, den = 1.0, v = 0.0;
    };
    std::vector<FactorWork> work_;
    Vec xnew_;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<ChartPoint> points;  // filled only when requested
    std::vector<double> h_series;
    std::vector<double> v_series;
    std::vector<double> f_series;   // tracked observable values, empty unless track_f given
    std::vector<double> vf_series;  // tracked observable dispersion, empty unless track_f given
    std::vector<double> q_series;
    std::vector<double> kv2_series;  // K_H V^2 at recorded times
    std::string outcome = "unresolved";
    int outcome_index = -1;
    double outcome_value = 0.0;
    bool collapsed = false;
    double collapse_time = 0.0;
    int chart_switches = 0;
    ChartPoint terminal;
};

// Streamed noise interface so trajectories never materialize full paths.
struct NoiseSource {
    virtual ~NoiseSource() = default;
    virtual double next() = 0;
};
struct PathNoise final : NoiseSource {
    explicit PathNoise(NoisePath& p) : path(&p) {}
    double next() override { return path->next(); }
    NoisePath* path;
};
struct VectorNoise final : NoiseSource {
    explicit VectorNoise(const std::vector<double>& v) : inc(&v) {}
    double next() override { return (*inc)[i++]; }
    const std::vector<double>* inc;
    size_t i = 0;
};

Trajectory simulate_trajectory(const Backend& b, const Observable& h, const ChartPoint& x0,
                               const SdeConfig& cfg, NoisePath& noise,
                               const Observable* track_f = nullptr, long record_stride = 1,
                               bool keep_points = false);
Trajectory simulate_trajectory(const Backend& b, const Observable& h, const ChartPoint& x0,
                               const SdeConfig& cfg, NoiseSource& noise,
                               const Observable* track_f = nullptr, long record_stride = 1,
                               bool keep_points = false);

// Collapse labeling. Each factor is assigned the eigenspace with the largest
// projector expectation; the outcome value is the sum of the chosen
// eigenvalues and the index enumerates eigenspace tuples, factor 0 least
// significant.
struct Outcome {
    bool collapsed = false;
    double time = 0.0;
    std::string label = "unresolved";
    int index = -1;
    double value = 0.0;
};
std::vector<Spectrum> factor_spectra(const Observable& h);
Outcome label_outcome(const Backend& b, const ChartPoint& p, const std::vector<Spectrum>& spectra);
Outcome detect_collapse(const Backend& b, const Trajectory& traj,
                        const std::vector<Spectrum>& spectra, double epsilon, int hold_steps);

// Pooled increment regression inputs: dX against (1, X, V) sampled at the
// recorded grid, used by the martingale conditional-expectation test.
struct IncrementRegression {
    double n = 0;
    double sx = 0, sv = 0, sxx = 0, svv = 0, sxv = 0;
    double sd = 0, sdx = 0, sdv = 0, sdd = 0;
};

struct EnsembleStats {
    std::vector<double> times;
    std::vector<double> mean_h, se_h;
    std::vector<double> mean_v, se_v;
    std::vector<double> mean_q;
    std::vector<double> mean_f, se_f;
    std::vector<double> mean_vf, se_vf;
    std::vector<double> mean_kv2;
    // Ito isometry statistic D = (H_t - H_0)^2 - sigma^2 Q_t per trajectory.
    std::vector<double> mean_d, se_d;
    std::vector<double> eta, xi;
    IncrementRegression reg_h, reg_f;

    std::vector<std::string> outcome_labels;
    std::vector<double> outcome_values;
    std::vector<long> outcome_counts;
    long unresolved = 0;
    long blowups = 0;
    long n = 0;
    bool valid = true;
    bool track_f = false;

    RunScales scales;
    double sigma = 0.0;
    double horizon = 0.0;
    std::uint64_t master_seed = 0;
};

EnsembleStats run_ensemble(const Backend& b, const Observable& h, const ChartPoint& x0,
                           const SdeConfig& cfg, const Observable* track_f = nullptr,
                           int threads = 1, int record_points = 257);

} // namespace kreduce
