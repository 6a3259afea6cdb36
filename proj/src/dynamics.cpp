#include "kreduce/dynamics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>

namespace kreduce {

namespace {

constexpr double kBlowUpLimit = 1e6;
constexpr double kSwitchTol = 1e-9;

void check_finite_box(const Vec& x, const ChartPoint& last, double t) {
    for (int i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || std::abs(x[i]) > kBlowUpLimit) {
            std::vector<double> coords(last.x.data(), last.x.data() + last.x.size());
            throw BlowUpError("integration left the trusted coordinate range", last.chart,
                              std::move(coords), t);
        }
    }
}

void validate_tracking(const Observable& h, const Observable* track_f) {
    if (track_f == nullptr) return;
    if (h.form() != Observable::Form::Operator || track_f->form() != Observable::Form::Operator)
        throw ConfigError("non_commuting", "tracked observables require operator form");
    if (track_f->backend().id() != h.backend().id())
        throw ConfigError("dimension_mismatch", "tracked observable lives on a different backend");
    for (int f = 0; f < h.backend().factors(); ++f) {
        const CMat& a = track_f->factor_op(f);
        const CMat& c = h.factor_op(f);
        if ((a * c - c * a).norm() > 1e-8)
            throw ConfigError("non_commuting", "tracked observable does not commute with H");
    }
}

} // namespace

double reduction_timescale(double kappa, double sigma, double v0) {
    const double rate = kappa * sigma * sigma * v0;
    if (!(rate > 0.0)) return std::numeric_limits<double>::infinity();
    return 1.0 / rate;
}

RunScales resolve_scales(const Backend& b, const Observable& h, const ChartPoint& x0,
                         const SdeConfig& cfg, int curvature_samples) {
    validate_point(b, x0);
    if (!(cfg.horizon > 0.0)) throw InvalidInputError("horizon must be positive");
    if (!(cfg.sigma >= 0.0)) throw InvalidInputError("sigma must be nonnegative");
    if (cfg.collapse_hold_steps < 1) throw InvalidInputError("collapse_hold_steps must be >= 1");
    if (cfg.dt > 0.0 && cfg.dt >= cfg.horizon)
        throw InvalidInputError("dt must be smaller than the horizon");

    RunScales sc;
    sc.h0 = h.value(x0);
    sc.v0 = h.dispersion(x0);
    const CurvatureExtremes ex =
        curvature_extremes(b, gradient_fn(h), curvature_samples, cfg.master_seed);
    sc.kappa = ex.kappa;
    sc.lambda = ex.lambda;
    sc.kappa_exact = ex.exact;
    sc.tau = reduction_timescale(sc.kappa, cfg.sigma, sc.v0);

    if (cfg.dt > 0.0) {
        sc.dt = cfg.dt;
    } else {
        sc.dt = 0.01 / std::max(h.scale(), 1e-12);
        if (std::isfinite(sc.tau)) sc.dt = std::min(sc.dt, sc.tau / 1e4);
    }
    if (!(sc.dt > 0.0) || !std::isfinite(sc.dt))
        throw InvalidInputError("step size resolution failed");

    sc.epsilon = cfg.collapse_epsilon > 0.0
                     ? cfg.collapse_epsilon
                     : std::max(1e-6 * sc.v0, 1e-12 * h.scale() * h.scale());
    sc.steps = static_cast<long>(std::ceil(cfg.horizon / sc.dt - 1e-9));
    if (sc.steps < 1) sc.steps = 1;
    if (sc.steps > 1000000000L) throw InvalidInputError("horizon/dt exceeds the step budget");
    return sc;
}

Vec coordinate_drift(const Backend& b, const Observable& h, const ChartPoint& p, double sigma) {
    const MetricTensors t = metric_at(b, p);
    Eigen::LDLT<Mat> met(t.g);
    const Vec xi = h.gradient(p);
    const Vec u = met.solve(xi);
    Vec drift = 2.0 * (t.jmat * u);
    if (sigma > 0.0) {
        const double s2 = sigma * sigma;
        drift -= 0.25 * s2 * met.solve(h.dispersion_gradient(p)).eval();
        const Tensor3 gam = christoffels_at(b, p);
        const int d = b.real_dim();
        for (int a = 0; a < d; ++a) {
            double acc = 0.0;
            for (int i = 0; i < d; ++i) {
                if (u[i] == 0.0) continue;
                for (int j = 0; j < d; ++j) acc += gam(a, i, j) * u[i] * u[j];
            }
            drift[a] -= 0.5 * s2 * acc;
        }
    }
    return drift;
}

Vec volatility_vector(const Backend& b, const Observable& h, const ChartPoint& p, double sigma) {
    const MetricTensors t = metric_at(b, p);
    return sigma * t.g.ldlt().solve(h.gradient(p)).eval();
}

ChartPoint step(const Backend& b, const Observable& h, const ChartPoint& p, double dt, double dw,
                double sigma) {
    if (!(dt > 0.0)) throw InvalidInputError("dt must be positive");
    Vec xn = p.x + coordinate_drift(b, h, p, sigma) * dt + volatility_vector(b, h, p, sigma) * dw;
    check_finite_box(xn, p, 0.0);
    ChartPoint q = make_point(b, p.chart, std::move(xn));
    if (needs_chart_switch(b, q)) {
        const double h_pre = h.value(q);
        const double v_pre = h.dispersion(q);
        q = chart_transition(b, q, preferred_chart(b, q));
        if (std::abs(h.value(q) - h_pre) > kSwitchTol * (1.0 + std::abs(h_pre)) ||
            std::abs(h.dispersion(q) - v_pre) > kSwitchTol * (1.0 + v_pre))
            throw KreduceError("chart switch failed to preserve scalars");
    }
    return q;
}

Stepper::Stepper(const Backend& b, const Observable& h, double sigma)
    : b_(&b), h_(&h), sigma_(sigma) {
    if (!(sigma >= 0.0)) throw InvalidInputError("sigma must be nonnegative");
    fast_ = b.projective_only() && h.form() == Observable::Form::Operator;
    fv_.assign(static_cast<size_t>(b.factors()), 0.0);
    if (fast_) {
        work_.resize(static_cast<size_t>(b.factors()));
        for (int f = 0; f < b.factors(); ++f) {
            FactorWork& wk = work_[static_cast<size_t>(f)];
            const int n = b.factor(f).n;
            wk.z = CVec::Zero(n);
            wk.psi = CVec::Zero(n + 1);
            wk.fpsi = CVec::Zero(n + 1);
            wk.f2psi = CVec::Zero(n + 1);
            wk.w = CVec::Zero(n);
            wk.w2 = CVec::Zero(n);
            wk.u = CVec::Zero(n);
            wk.uvr = CVec::Zero(n);
        }
    }
    xnew_ = Vec::Zero(b.real_dim());
}

void Stepper::reset(const ChartPoint& x0) {
    validate_point(*b_, x0);
    state_ = x0;
    switches_ = 0;
    refresh();
}

void Stepper::fast_factor_eval(int f) {
    FactorWork& wk = work_[static_cast<size_t>(f)];
    const int n = b_->factor(f).n;
    const int off = b_->factor_offset(f);
    const int c = b_->split_chart(state_.chart)[static_cast<size_t>(f)];

    for (int j = 0; j < n; ++j) wk.z[j] = zcoord(state_.x, off + j);
    wk.psi[c] = 1.0;
    for (int j = 0; j < n; ++j) wk.psi[affine_slot(c, j)] = wk.z[j];
    wk.den = 1.0 + wk.z.squaredNorm();

    wk.fpsi.noalias() = h_->factor_op(f) * wk.psi;
    wk.f2psi.noalias() = h_->factor_op_sq(f) * wk.psi;
    wk.fhat = wk.psi.dot(wk.fpsi).real() / wk.den;
    wk.f2hat = wk.psi.dot(wk.f2psi).real() / wk.den;

    for (int j = 0; j < n; ++j) {
        const int s = affine_slot(c, j);
        wk.w[j] = (wk.fpsi[s] - wk.fhat * wk.psi[s]) / wk.den;
        wk.w2[j] = (wk.f2psi[s] - wk.f2hat * wk.psi[s]) / wk.den;
    }
    const double half_den = 0.5 * wk.den;
    wk.u = half_den * (wk.w + wk.z * wk.z.dot(wk.w));
    // dispersion gradient in the same covector representation
    wk.w2 -= 2.0 * wk.fhat * wk.w;
    wk.uvr = half_den * (wk.w2 + wk.z * wk.z.dot(wk.w2));
    wk.v = 2.0 * wk.w.dot(wk.u).real();
}

void Stepper::refresh() {
    if (fast_) {
        double hv = 0.0, vv = 0.0;
        for (int f = 0; f < b_->factors(); ++f) {
            fast_factor_eval(f);
            const FactorWork& wk = work_[static_cast<size_t>(f)];
            hv += wk.fhat;
            vv += wk.v;
            fv_[static_cast<size_t>(f)] = wk.v;
        }
        hval_ = hv;
        vval_ = vv;
    } else {
        hval_ = h_->value(state_);
        vval_ = h_->dispersion(state_);
        fv_[0] = vval_;
    }
}

void Stepper::advance(double dt, double dw) {
    if (fast_) {
        const double s2 = sigma_ * sigma_;
        for (int f = 0; f < b_->factors(); ++f) {
            FactorWork& wk = work_[static_cast<size_t>(f)];
            const int n = b_->factor(f).n;
            const int off = b_->factor_offset(f);
            const std::complex<double> zu = wk.z.dot(wk.u);
            for (int j = 0; j < n; ++j) {
                const std::complex<double> drift =
                    std::complex<double>(0.0, -2.0) * wk.u[j] - 0.25 * s2 * wk.uvr[j] +
                    s2 * wk.u[j] * zu / wk.den;
                const std::complex<double> zn =
                    wk.z[j] + drift * dt + sigma_ * wk.u[j] * dw;
                set_zcoord(xnew_, off + j, zn);
            }
        }
        check_finite_box(xnew_, state_, 0.0);
        state_.x.swap(xnew_);
    } else {
        Vec xn = state_.x + coordinate_drift(*b_, *h_, state_, sigma_) * dt +
                 volatility_vector(*b_, *h_, state_, sigma_) * dw;
        check_finite_box(xn, state_, 0.0);
        state_.x = std::move(xn);
    }
    refresh();
    if (needs_chart_switch(*b_, state_)) {
        const double h_pre = hval_;
        const double v_pre = vval_;
        state_ = chart_transition(*b_, state_, preferred_chart(*b_, state_));
        ++switches_;
        refresh();
        if (std::abs(hval_ - h_pre) > kSwitchTol * (1.0 + std::abs(h_pre)) ||
            std::abs(vval_ - v_pre) > kSwitchTol * (1.0 + v_pre))
            throw KreduceError("chart switch failed to preserve scalars");
    }
}

double Stepper::kv2() const {
    if (fast_) {
        double s = 0.0;
        for (double vf : fv_) s += vf * vf;
        return s;
    }
    if (vval_ <= 0.0) return 0.0;
    try {
        return holomorphic_sectional(*b_, state_, h_->gradient(state_)) * vval_ * vval_;
    } catch (const DegeneratePlaneError&) {
        return 0.0;
    }
}

std::vector<Spectrum> factor_spectra(const Observable& h) {
    if (h.form() != Observable::Form::Operator)
        throw InvalidInputError("spectra require an operator observable");
    std::vector<Spectrum> out;
    out.reserve(static_cast<size_t>(h.backend().factors()));
    for (int f = 0; f < h.backend().factors(); ++f)
        out.push_back(spectral_decomposition(h.factor_op(f)));
    return out;
}

Outcome label_outcome(const Backend& b, const ChartPoint& p,
                      const std::vector<Spectrum>& spectra) {
    if (static_cast<int>(spectra.size()) != b.factors())
        throw InvalidInputError("one spectrum per factor required");
    Outcome out;
    out.collapsed = true;
    out.index = 0;
    int mult = 1;
    std::string label;
    for (int f = 0; f < b.factors(); ++f) {
        const CVec psi = factor_lift(b, p, f);
        const Spectrum& s = spectra[static_cast<size_t>(f)];
        int best = 0;
        double best_ov = -1.0;
        for (size_t k = 0; k < s.projectors.size(); ++k) {
            const double ov = psi.dot(s.projectors[k] * psi).real();
            if (ov > best_ov) {
                best_ov = ov;
                best = static_cast<int>(k);
            }
        }
        out.value += s.eigenvalues[best];
        out.index += best * mult;
        mult *= static_cast<int>(s.eigenvalues.size());
        char buf[48];
        std::snprintf(buf, sizeof buf, "%g", s.eigenvalues[best]);
        if (f > 0) label += "|";
        label += buf;
    }
    out.label = label;
    return out;
}

namespace {

struct Grid {
    long stride = 1;
    long steps = 0;
    long size() const { return steps / stride + 1 + (steps % stride != 0 ? 1 : 0); }
    bool recorded(long k) const { return k % stride == 0 || k == steps; }
};

Trajectory simulate_core(const Backend& b, const Observable& h, const ChartPoint& x0,
                         const SdeConfig& cfg, const RunScales& sc, NoiseSource& ns,
                         const Observable* track_f, const Grid& grid, bool keep_points,
                         const std::vector<Spectrum>* spectra) {
    Stepper st(b, h, cfg.sigma);
    st.reset(x0);

    Trajectory tr;
    const long n_rec = grid.size();
    tr.times.reserve(static_cast<size_t>(n_rec));
    tr.h_series.reserve(static_cast<size_t>(n_rec));
    tr.v_series.reserve(static_cast<size_t>(n_rec));
    tr.q_series.reserve(static_cast<size_t>(n_rec));
    tr.kv2_series.reserve(static_cast<size_t>(n_rec));
    if (track_f != nullptr) {
        tr.f_series.reserve(static_cast<size_t>(n_rec));
        tr.vf_series.reserve(static_cast<size_t>(n_rec));
    }
    if (keep_points) tr.points.reserve(static_cast<size_t>(n_rec));

    double q = 0.0;
    double v_prev = st.v_value();
    const auto record = [&](long k) {
        tr.times.push_back(static_cast<double>(k) * sc.dt);
        tr.h_series.push_back(st.h_value());
        tr.v_series.push_back(st.v_value());
        tr.q_series.push_back(q);
        tr.kv2_series.push_back(st.kv2());
        if (track_f != nullptr) {
            tr.f_series.push_back(track_f->value(st.state()));
            tr.vf_series.push_back(track_f->dispersion(st.state()));
        }
        if (keep_points) tr.points.push_back(st.state());
    };
    record(0);

    int hold_run = v_prev < sc.epsilon ? 1 : 0;
    for (long k = 1; k <= grid.steps; ++k) {
        const double dw = ns.next();
        try {
            st.advance(sc.dt, dw);
        } catch (const BlowUpError& e) {
            throw BlowUpError(e.what(), e.chart, e.coords, static_cast<double>(k) * sc.dt);
        }
        const double v = st.v_value();
        q += 0.5 * sc.dt * (v_prev * v_prev + v * v);
        v_prev = v;
        hold_run = v < sc.epsilon ? hold_run + 1 : 0;
        if (grid.recorded(k)) record(k);

        if (hold_run >= cfg.collapse_hold_steps) {
            tr.collapsed = true;
            tr.collapse_time = static_cast<double>(k) * sc.dt;
            if (spectra != nullptr) {
                Outcome oc = label_outcome(b, st.state(), *spectra);
                tr.outcome = oc.label;
                tr.outcome_index = oc.index;
                tr.outcome_value = oc.value;
            } else {
                tr.outcome = "collapsed";
                tr.outcome_index = 0;
                tr.outcome_value = st.h_value();
            }
            // Freeze recorded scalars at their terminal values on the rest of
            // the grid so ensemble time series stay aligned.
            for (long kk = k + 1; kk <= grid.steps; ++kk)
                if (grid.recorded(kk)) record(kk);
            break;
        }
    }
    tr.terminal = st.state();
    tr.chart_switches = st.chart_switches();
    return tr;
}

} // namespace

Trajectory simulate_trajectory(const Backend& b, const Observable& h, const ChartPoint& x0,
                               const SdeConfig& cfg, NoiseSource& noise,
                               const Observable* track_f, long record_stride, bool keep_points) {
    if (record_stride < 1) throw InvalidInputError("record_stride must be >= 1");
    validate_tracking(h, track_f);
    const RunScales sc = resolve_scales(b, h, x0, cfg);
    Grid grid{record_stride, sc.steps};
    std::vector<Spectrum> spectra;
    const bool have_spectra = h.form() == Observable::Form::Operator;
    if (have_spectra) spectra = factor_spectra(h);
    return simulate_core(b, h, x0, cfg, sc, noise, track_f, grid, keep_points,
                         have_spectra ? &spectra : nullptr);
}

Trajectory simulate_trajectory(const Backend& b, const Observable& h, const ChartPoint& x0,
                               const SdeConfig& cfg, NoisePath& noise, const Observable* track_f,
                               long record_stride, bool keep_points) {
    PathNoise src(noise);
    return simulate_trajectory(b, h, x0, cfg, src, track_f, record_stride, keep_points);
}

Outcome detect_collapse(const Backend& b, const Trajectory& traj,
                        const std::vector<Spectrum>& spectra, double epsilon, int hold_steps) {
    if (hold_steps < 1) throw InvalidInputError("hold_steps must be >= 1");
    Outcome out;
    int run = 0;
    for (size_t i = 0; i < traj.v_series.size(); ++i) {
        run = traj.v_series[i] < epsilon ? run + 1 : 0;
        if (run >= hold_steps) {
            const ChartPoint& p =
                i < traj.points.size() ? traj.points[i] : traj.terminal;
            out = label_outcome(b, p, spectra);
            out.collapsed = true;
            out.time = traj.times[i];
            return out;
        }
    }
    return out;
}

namespace {

void fold_regression(IncrementRegression& a, const IncrementRegression& c) {
    a.n += c.n;
    a.sx += c.sx;
    a.sv += c.sv;
    a.sxx += c.sxx;
    a.svv += c.svv;
    a.sxv += c.sxv;
    a.sd += c.sd;
    a.sdx += c.sdx;
    a.sdv += c.sdv;
    a.sdd += c.sdd;
}

struct ChunkAccum {
    std::vector<double> sh, sh2, sv, sv2, sq, sf, sf2, svf, svf2, skv2, sd, sd2;
    IncrementRegression rh, rf;
    std::vector<long> counts;
    long ok = 0, blow = 0, unresolved = 0;

    explicit ChunkAccum(long n_rec, size_t n_out) {
        const auto n = static_cast<size_t>(n_rec);
        for (auto* v : {&sh, &sh2, &sv, &sv2, &sq, &sf, &sf2, &svf, &svf2, &skv2, &sd, &sd2})
            v->assign(n, 0.0);
        counts.assign(n_out, 0);
    }

    void fold(const ChunkAccum& o) {
        for (size_t i = 0; i < sh.size(); ++i) {
            sh[i] += o.sh[i];
            sh2[i] += o.sh2[i];
            sv[i] += o.sv[i];
            sv2[i] += o.sv2[i];
            sq[i] += o.sq[i];
            sf[i] += o.sf[i];
            sf2[i] += o.sf2[i];
            svf[i] += o.svf[i];
            svf2[i] += o.svf2[i];
            skv2[i] += o.skv2[i];
            sd[i] += o.sd[i];
            sd2[i] += o.sd2[i];
        }
        for (size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
        ok += o.ok;
        blow += o.blow;
        unresolved += o.unresolved;
        fold_regression(rh, o.rh);
        fold_regression(rf, o.rf);
    }
};

void accumulate_regression(IncrementRegression& r, const std::vector<double>& x,
                           const std::vector<double>& v) {
    for (size_t k = 0; k + 1 < x.size(); ++k) {
        const double d = x[k + 1] - x[k];
        r.n += 1.0;
        r.sx += x[k];
        r.sv += v[k];
        r.sxx += x[k] * x[k];
        r.svv += v[k] * v[k];
        r.sxv += x[k] * v[k];
        r.sd += d;
        r.sdx += d * x[k];
        r.sdv += d * v[k];
        r.sdd += d * d;
    }
}

} // namespace

EnsembleStats run_ensemble(const Backend& b, const Observable& h, const ChartPoint& x0,
                           const SdeConfig& cfg, const Observable* track_f, int threads,
                           int record_points) {
    if (cfg.ensemble_size < 1) throw InvalidInputError("ensemble_size must be >= 1");
    if (record_points < 2) throw InvalidInputError("record_points must be >= 2");
    threads = std::clamp(threads, 1, 256);
    validate_tracking(h, track_f);

    const RunScales sc = resolve_scales(b, h, x0, cfg);
    Grid grid{std::max(1L, sc.steps / (record_points - 1)), sc.steps};
    const long n_rec = grid.size();

    std::vector<Spectrum> spectra;
    const bool have_spectra = h.form() == Observable::Form::Operator;
    if (have_spectra) spectra = factor_spectra(h);

    EnsembleStats stats;
    stats.scales = sc;
    stats.sigma = cfg.sigma;
    stats.horizon = cfg.horizon;
    stats.master_seed = cfg.master_seed;
    stats.track_f = track_f != nullptr;

    // Outcome table over eigenspace tuples, factor 0 least significant.
    if (have_spectra) {
        size_t total = 1;
        for (const Spectrum& s : spectra) total *= s.eigenvalues.size();
        stats.outcome_labels.resize(total);
        stats.outcome_values.assign(total, 0.0);
        for (size_t idx = 0; idx < total; ++idx) {
            size_t rem = idx;
            std::string label;
            double value = 0.0;
            for (int f = 0; f < b.factors(); ++f) {
                const Spectrum& s = spectra[static_cast<size_t>(f)];
                const size_t k = rem % s.eigenvalues.size();
                rem /= s.eigenvalues.size();
                value += s.eigenvalues[static_cast<long>(k)];
                char buf[48];
                std::snprintf(buf, sizeof buf, "%g", s.eigenvalues[static_cast<long>(k)]);
                if (f > 0) label += "|";
                label += buf;
            }
            stats.outcome_labels[idx] = label;
            stats.outcome_values[idx] = value;
        }
    } else {
        stats.outcome_labels = {"collapsed"};
        stats.outcome_values = {0.0};
    }
    const size_t n_out = stats.outcome_labels.size();

    const long n_traj = cfg.ensemble_size;
    constexpr long kChunk = 256;
    const long n_chunks = (n_traj + kChunk - 1) / kChunk;
    std::vector<ChunkAccum> slots;
    slots.reserve(static_cast<size_t>(n_chunks));
    for (long c = 0; c < n_chunks; ++c) slots.emplace_back(n_rec, n_out);

    const auto run_chunk = [&](long c) {
        ChunkAccum& acc = slots[static_cast<size_t>(c)];
        const long lo = c * kChunk;
        const long hi = std::min(n_traj, lo + kChunk);
        for (long i = lo; i < hi; ++i) {
            NoisePath path(cfg.master_seed, static_cast<std::uint64_t>(i), sc.dt);
            PathNoise src(path);
            Trajectory tr;
            try {
                tr = simulate_core(b, h, x0, cfg, sc, src, track_f, grid, false,
                                   have_spectra ? &spectra : nullptr);
            } catch (const BlowUpError&) {
                ++acc.blow;
                continue;
            }
            ++acc.ok;
            const double s2 = cfg.sigma * cfg.sigma;
            for (long r = 0; r < n_rec; ++r) {
                const auto ri = static_cast<size_t>(r);
                const double hv = tr.h_series[ri];
                const double vv = tr.v_series[ri];
                const double qv = tr.q_series[ri];
                acc.sh[ri] += hv;
                acc.sh2[ri] += hv * hv;
                acc.sv[ri] += vv;
                acc.sv2[ri] += vv * vv;
                acc.sq[ri] += qv;
                acc.skv2[ri] += tr.kv2_series[ri];
                const double dstat = (hv - sc.h0) * (hv - sc.h0) - s2 * qv;
                acc.sd[ri] += dstat;
                acc.sd2[ri] += dstat * dstat;
                if (track_f != nullptr) {
                    const double fv = tr.f_series[ri];
                    const double vfv = tr.vf_series[ri];
                    acc.sf[ri] += fv;
                    acc.sf2[ri] += fv * fv;
                    acc.svf[ri] += vfv;
                    acc.svf2[ri] += vfv * vfv;
                }
            }
            accumulate_regression(acc.rh, tr.h_series, tr.v_series);
            if (track_f != nullptr) accumulate_regression(acc.rf, tr.f_series, tr.vf_series);
            if (tr.collapsed && tr.outcome_index >= 0 &&
                tr.outcome_index < static_cast<int>(n_out))
                ++acc.counts[static_cast<size_t>(tr.outcome_index)];
            else
                ++acc.unresolved;
        }
    };

    if (threads == 1 || n_chunks == 1) {
        for (long c = 0; c < n_chunks; ++c) run_chunk(c);
    } else {
        std::atomic<long> next{0};
        const int n_workers = static_cast<int>(std::min<long>(threads, n_chunks));
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(n_workers));
        for (int w = 0; w < n_workers; ++w)
            pool.emplace_back([&] {
                for (long c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1))
                    run_chunk(c);
            });
        for (std::thread& t : pool) t.join();
    }

    ChunkAccum total(n_rec, n_out);
    for (const ChunkAccum& acc : slots) total.fold(acc);

    stats.n = total.ok;
    stats.blowups = total.blow;
    stats.unresolved = total.unresolved;
    stats.outcome_counts.assign(total.counts.begin(), total.counts.end());
    stats.reg_h = total.rh;
    stats.reg_f = total.rf;
    stats.valid = total.blow <= n_traj / 10;

    const double n = static_cast<double>(std::max<long>(total.ok, 1));
    const auto mean_se = [&](const std::vector<double>& s, const std::vector<double>& s2,
                             std::vector<double>& mean, std::vector<double>& se) {
        mean.resize(static_cast<size_t>(n_rec));
        se.resize(static_cast<size_t>(n_rec));
        for (long r = 0; r < n_rec; ++r) {
            const auto ri = static_cast<size_t>(r);
            const double m = s[ri] / n;
            mean[ri] = m;
            const double var = total.ok > 1 ? std::max(0.0, (s2[ri] - n * m * m) / (n - 1.0)) : 0.0;
            se[ri] = std::sqrt(var / n);
        }
    };

    stats.times.resize(static_cast<size_t>(n_rec));
    {
        long r = 0;
        for (long k = 0; k <= grid.steps; ++k)
            if (grid.recorded(k)) stats.times[static_cast<size_t>(r++)] = static_cast<double>(k) * sc.dt;
    }
    mean_se(total.sh, total.sh2, stats.mean_h, stats.se_h);
    mean_se(total.sv, total.sv2, stats.mean_v, stats.se_v);
    mean_se(total.sd, total.sd2, stats.mean_d, stats.se_d);
    if (track_f != nullptr) {
        mean_se(total.sf, total.sf2, stats.mean_f, stats.se_f);
        mean_se(total.svf, total.svf2, stats.mean_vf, stats.se_vf);
    }
    stats.mean_q.resize(static_cast<size_t>(n_rec));
    stats.mean_kv2.resize(static_cast<size_t>(n_rec));
    for (long r = 0; r < n_rec; ++r) {
        stats.mean_q[static_cast<size_t>(r)] = total.sq[static_cast<size_t>(r)] / n;
        stats.mean_kv2[static_cast<size_t>(r)] = total.skv2[static_cast<size_t>(r)] / n;
    }

    // eta_t per the supermartingale rate: Vbar^2 eta = Var(V) + (E[K V^2] -
    // kappa E[V^2]) / kappa, integrated to xi by the trapezoid rule.
    stats.eta.assign(static_cast<size_t>(n_rec), 0.0);
    stats.xi.assign(static_cast<size_t>(n_rec), 0.0);
    if (sc.kappa > 0.0) {
        for (long r = 0; r < n_rec; ++r) {
            const auto ri = static_cast<size_t>(r);
            const double mv = stats.mean_v[ri];
            if (mv <= 1e-300) continue;
            const double m2 = total.sv2[ri] / n;
            const double var = std::max(0.0, m2 - mv * mv);
            stats.eta[ri] = (var + (stats.mean_kv2[ri] - sc.kappa * m2) / sc.kappa) / (mv * mv);
        }
        for (long r = 1; r < n_rec; ++r) {
            const auto ri = static_cast<size_t>(r);
            stats.xi[ri] = stats.xi[ri - 1] + 0.5 * (stats.eta[ri] + stats.eta[ri - 1]) *
                                                  (stats.times[ri] - stats.times[ri - 1]);
        }
    }
    return stats;
}

} // namespace kreduce
