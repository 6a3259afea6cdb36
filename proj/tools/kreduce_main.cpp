#include "kreduce/report.hpp"

#include <CLI11.hpp>

#include <Eigen/Eigenvalues>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

using namespace kreduce;

namespace {

struct Options {
    std::string config_path;
    std::string out_override;
    std::optional<std::uint64_t> seed;
    bool strict = false;
    int threads = 1;
};

RunConfig load_config(const Options& opt) {
    RunConfig cfg = parse_config(opt.config_path);
    if (opt.seed) cfg.sde.master_seed = *opt.seed;
    if (!opt.out_override.empty()) cfg.out_dir = opt.out_override;
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw ConfigError("missing_file", "cannot create output directory '" + cfg.out_dir + "'");
    if (!cfg.chart_note.empty()) std::printf("note: %s\n", cfg.chart_note.c_str());
    return cfg;
}

TestVerdict make_verdict(std::string name, double statistic, double threshold,
                         std::string narrative) {
    TestVerdict v;
    v.name = std::move(name);
    v.statistic = statistic;
    v.threshold = threshold;
    v.pass = statistic <= threshold;
    v.narrative = std::move(narrative);
    return v;
}

TestVerdict na_verdict(std::string name, std::string why) {
    TestVerdict v;
    v.name = std::move(name);
    v.pass = true;
    v.applicable = false;
    v.narrative = std::move(why);
    return v;
}

int verdict_exit(const std::vector<TestVerdict>& verdicts, bool strict) {
    int warns = 0;
    bool fail = false;
    for (const TestVerdict& v : verdicts) {
        if (!v.applicable) continue;
        if (!v.conclusive) {
            std::printf("warning: %s inconclusive: %s\n", v.name.c_str(), v.narrative.c_str());
            ++warns;
            continue;
        }
        if (!v.pass) fail = true;
    }
    if (fail) return 1;
    if (warns > 0 && strict) {
        std::printf("strict mode: %d inconclusive verdict(s) treated as failure\n", warns);
        return 1;
    }
    return 0;
}

int report_verdicts(const RunConfig& cfg, const std::vector<TestVerdict>& verdicts,
                    const std::string& json_name, bool strict) {
    const std::string path = cfg.out_dir + "/" + json_name;
    write_text_file(path, verdict_json_text(verdicts));
    std::fputs(verdict_table_text(verdicts).c_str(), stdout);
    std::printf("wrote %s\n", path.c_str());
    return verdict_exit(verdicts, strict);
}

Observable random_observable(const Backend& b, RandomStream& rs) {
    std::vector<CMat> ops;
    ops.reserve(size_t(b.factors()));
    for (int f = 0; f < b.factors(); ++f) ops.push_back(random_hermitian(b.factor(f).n + 1, rs, 1.0));
    return b.factors() == 1 ? Observable::op_expectation(b, ops[0])
                            : Observable::separable_sum(b, ops);
}

bool commutes_with(const Observable& f, const Observable& h) {
    if (f.form() != Observable::Form::Operator || h.form() != Observable::Form::Operator)
        return false;
    if (f.backend().id() != h.backend().id()) return false;
    for (int i = 0; i < h.backend().factors(); ++i) {
        const CMat& a = f.factor_op(i);
        const CMat& c = h.factor_op(i);
        if ((a * c - c * a).norm() > 1e-8 * (1.0 + a.norm() * c.norm())) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// geometry-check

int cmd_geometry(const Options& opt) {
    const RunConfig cfg = load_config(opt);
    const Backend& b = cfg.backend;
    RandomStream rs(cfg.sde.master_seed, 2026);
    const int samples = 25 * b.charts();

    double min_eig = std::numeric_limits<double>::infinity();
    double sym_max = 0.0, cplx_max = 0.0, flat_max = 0.0;
    double sec_lo = std::numeric_limits<double>::infinity(), sec_hi = 0.0;
    int sec_used = 0;

    const bool flat_case = b.factors() == 1 && b.factor(0).kind == Factor::Kind::Potential &&
                           b.factor(0).pot.form == PotentialForm::Flat;

    std::vector<ChartPoint> pts;
    pts.reserve(size_t(samples));
    for (int k = 0; k < samples; ++k) pts.push_back(random_point(b, rs, 1.5));

    std::string spd_failure;
    for (const ChartPoint& p : pts) {
        MetricTensors t;
        try {
            t = metric_at(b, p);
        } catch (const InvalidInputError& e) {
            // The potential path refuses to build a non-positive metric.
            spd_failure = e.what();
            min_eig = -1.0;
            break;
        }
        sym_max = std::max(sym_max, (t.g - t.g.transpose()).cwiseAbs().maxCoeff());
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (t.g + t.g.transpose()));
        min_eig = std::min(min_eig, es.eigenvalues().minCoeff());

        const Mat jj = t.jmat * t.jmat + Mat::Identity(b.real_dim(), b.real_dim());
        cplx_max = std::max(cplx_max, jj.cwiseAbs().maxCoeff());
        cplx_max = std::max(cplx_max, (t.omega - t.g * t.jmat).cwiseAbs().maxCoeff());
        cplx_max = std::max(cplx_max, (t.omega + t.omega.transpose()).cwiseAbs().maxCoeff());
        cplx_max =
            std::max(cplx_max, (t.jmat.transpose() * t.g * t.jmat - t.g).cwiseAbs().maxCoeff());

        if (flat_case) flat_max = std::max(flat_max, riemann_at(b, p).max_abs());
    }

    std::vector<TestVerdict> verdicts;
    {
        TestVerdict v;
        v.name = "metric_positive";
        v.statistic = min_eig;
        v.threshold = 0.0;
        v.pass = min_eig > 0.0 && sym_max < 1e-10;
        if (!spd_failure.empty()) {
            v.narrative = spd_failure;
        } else {
            char buf[160];
            std::snprintf(buf, sizeof buf,
                          "min metric eigenvalue %.3e over %d states, symmetry defect %.1e",
                          min_eig, samples, sym_max);
            v.narrative = buf;
        }
        verdicts.push_back(std::move(v));
    }
    if (spd_failure.empty())
        verdicts.push_back(make_verdict("complex_structure", cplx_max, 1e-10,
                                        "max residual over J^2+I, omega-gJ, antisymmetry, "
                                        "compatibility"));
    else
        verdicts.push_back(na_verdict("complex_structure", "no metric to check against"));

    const bool spd_ok = verdicts[0].pass;
    if (!spd_ok) {
        verdicts.push_back(
            na_verdict("curvature", "metric not positive definite; curvature is meaningless here"));
    } else if (b.projective_only()) {
        RandomStream dirs(cfg.sde.master_seed, 2027);
        for (const ChartPoint& p : pts) {
            const Observable f = random_observable(b, dirs);
            const Vec grad = f.gradient(p);
            double kappa;
            try {
                kappa = holomorphic_sectional(b, p, grad);
            } catch (const DegeneratePlaneError&) {
                continue;
            }
            sec_lo = std::min(sec_lo, kappa);
            sec_hi = std::max(sec_hi, kappa);
            ++sec_used;
        }
        const double lo_bound = 1.0 / b.factors();
        const double tol = 1e-8;
        const double worst =
            std::max(std::max(lo_bound - sec_lo, sec_hi - 1.0), 0.0);
        TestVerdict v = make_verdict("curvature", worst, tol, "");
        char buf[200];
        std::snprintf(buf, sizeof buf,
                      "sectional curvature in [%.6f, %.6f] over %d directions; exact range "
                      "[%g, 1]",
                      sec_lo, sec_hi, sec_used, lo_bound);
        v.narrative = buf;
        v.conclusive = sec_used >= samples / 2;
        verdicts.push_back(std::move(v));
    } else if (flat_case) {
        verdicts.push_back(make_verdict("curvature", flat_max, 1e-8,
                                        "max Riemann component on the flat potential backend"));
    } else {
        const CurvatureExtremes ex =
            curvature_extremes(b, gradient_fn(cfg.h()), 400, cfg.sde.master_seed + 1);
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "no pinned target for this potential; sampled kappa %.4f, lambda %.4f",
                      ex.kappa, ex.lambda);
        verdicts.push_back(na_verdict("curvature", buf));
    }

    if (b.projective_only()) {
        double zero_max = 0.0, asym_max = 0.0, chart_max = 0.0;
        for (size_t i = 0; i + 1 < pts.size(); i += 2) {
            const ChartPoint& p = pts[i];
            const ChartPoint& q = pts[i + 1];
            zero_max = std::max(zero_max, fs_distance(b, p, p));
            asym_max = std::max(asym_max, std::abs(fs_distance(b, p, q) - fs_distance(b, q, p)));
            const int other = preferred_chart(b, q);
            try {
                const ChartPoint q2 = chart_transition(b, q, other);
                chart_max = std::max(chart_max, std::abs(fs_distance(b, p, q2) - fs_distance(b, p, q)));
            } catch (const UnreachableChartError&) {
            }
        }
        // acos near overlap 1 cannot resolve below sqrt(eps) ~ 3e-8, which
        // bounds the self-distance from below; 1e-6 sits safely above that.
        verdicts.push_back(make_verdict("distance", std::max({zero_max, asym_max, chart_max}),
                                        1e-6,
                                        "self-distance, symmetry and chart invariance defects"));
    }

    return report_verdicts(cfg, verdicts, "geometry.json", opt.strict);
}

// ---------------------------------------------------------------------------
// identities

int cmd_identities(const Options& opt) {
    const RunConfig cfg = load_config(opt);
    const Backend& b = cfg.backend;

    std::vector<TestVerdict> verdicts;
    if (!b.projective_only()) {
        verdicts.push_back(
            na_verdict("identity_suite", "operator identities need projective factors"));
        return report_verdicts(cfg, verdicts, "identities.json", opt.strict);
    }

    RandomStream rs(cfg.sde.master_seed, 4242);
    const int samples = 100;
    double adler = 0.0, lemma5 = 0.0, lemma3 = 0.0, slack_min = 0.0;
    int lemma3_n = 0;

    for (int k = 0; k < samples; ++k) {
        const ChartPoint p = random_point(b, rs, 1.2);
        const Observable g = random_observable(b, rs);
        const Observable f = cfg.tracked ? *cfg.tracked : random_observable(b, rs);

        const ResidualReport r = identity_residuals(f, g, cfg.h(), p);
        adler = std::max(adler, r.adler_horwitz);
        lemma5 = std::max(lemma5, r.lemma5);
        slack_min = std::min(slack_min, r.heisenberg_slack);
        if (r.lemma3_applicable) {
            lemma3 = std::max(lemma3, r.lemma3);
            ++lemma3_n;
        }
        // H always commutes with itself, so this pair exercises the flow
        // invariance of V^F even when F above does not qualify.
        const ResidualReport rc = identity_residuals(cfg.h(), g, cfg.h(), p);
        adler = std::max(adler, rc.adler_horwitz);
        lemma5 = std::max(lemma5, rc.lemma5);
        slack_min = std::min(slack_min, rc.heisenberg_slack);
        if (rc.lemma3_applicable) {
            lemma3 = std::max(lemma3, rc.lemma3);
            ++lemma3_n;
        }
    }

    char buf[120];
    std::snprintf(buf, sizeof buf, "max residual over %d sampled states", samples);
    verdicts.push_back(make_verdict("bracket_correspondence", adler, 1e-5, buf));
    verdicts.push_back(make_verdict("third_derivative_identity", lemma5, 1e-5, buf));
    std::snprintf(buf, sizeof buf, "max residual over %d commuting pairs", lemma3_n);
    verdicts.push_back(make_verdict("flow_invariance", lemma3, 1e-7, buf));
    std::snprintf(buf, sizeof buf, "most negative slack %.3e over %d states", slack_min, samples);
    verdicts.push_back(make_verdict("uncertainty_slack", std::max(0.0, -slack_min), 1e-10, buf));

    return report_verdicts(cfg, verdicts, "identities.json", opt.strict);
}

// ---------------------------------------------------------------------------
// simulate / replay

int run_simulation(const Options& opt, const char* label) {
    const RunConfig cfg = load_config(opt);
    const Observable* track = cfg.tracked ? &*cfg.tracked : nullptr;
    const EnsembleStats stats = run_ensemble(cfg.backend, cfg.h(), cfg.x0, cfg.sde, track,
                                             opt.threads);

    if (cfg.sde.sigma == 0.0) std::printf("sigma = 0: no reduction expected\n");
    std::printf("%s: %ld trajectories, %ld blow-ups, %ld unresolved at horizon %g\n", label,
                stats.n, stats.blowups, stats.unresolved, stats.horizon);
    for (size_t i = 0; i < stats.outcome_labels.size(); ++i) {
        if (stats.outcome_counts[i] == 0) continue;
        std::printf("  %-14s value %.6g  count %ld  freq %.4f\n",
                    stats.outcome_labels[i].c_str(), stats.outcome_values[i],
                    stats.outcome_counts[i], double(stats.outcome_counts[i]) / double(stats.n));
    }

    if (cfg.want_csv) {
        const std::string path = cfg.out_dir + "/ensemble.csv";
        write_text_file(path, ensemble_csv_text(stats));
        std::printf("wrote %s\n", path.c_str());
    }
    if (cfg.want_json) {
        const std::string path = cfg.out_dir + "/summary.json";
        write_text_file(path, summary_json_text(cfg, stats));
        std::printf("wrote %s\n", path.c_str());
    }

    if (!stats.valid) {
        std::printf("ensemble invalid: %ld of %ld trajectories blew up\n", stats.blowups, stats.n);
        return 1;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// verify

int cmd_verify(const Options& opt) {
    const RunConfig cfg = load_config(opt);
    const Backend& b = cfg.backend;
    const Observable& h = cfg.h();

    const Observable* track = nullptr;
    bool tracked_rejected = false;
    if (cfg.tracked) {
        if (commutes_with(*cfg.tracked, h))
            track = &*cfg.tracked;
        else
            tracked_rejected = true;
    }

    std::vector<TestVerdict> verdicts;

    if (b.projective_only()) {
        RandomStream rs(cfg.sde.master_seed, 4242);
        double adler = 0.0, lemma5 = 0.0;
        for (int k = 0; k < 40; ++k) {
            const ChartPoint p = random_point(b, rs, 1.2);
            const Observable g = random_observable(b, rs);
            const ResidualReport r = identity_residuals(h, g, h, p);
            adler = std::max(adler, r.adler_horwitz);
            lemma5 = std::max(lemma5, r.lemma5);
        }
        verdicts.push_back(make_verdict("identity_spot_check", std::max(adler, lemma5), 1e-5,
                                        "worst residual at 40 sampled states"));
    }

    const EnsembleStats stats = run_ensemble(b, h, cfg.x0, cfg.sde, track, opt.threads);
    if (!stats.valid) {
        std::printf("ensemble invalid: %ld of %ld trajectories blew up\n", stats.blowups, stats.n);
        return 1;
    }

    verdicts.push_back(martingale_test(stats, 'H'));
    if (track != nullptr)
        verdicts.push_back(martingale_test(stats, 'F'));
    else if (tracked_rejected)
        verdicts.push_back(na_verdict(
            "tracked_martingale",
            "tracked observable does not commute with H; the theorem hypotheses are not met"));
    verdicts.push_back(supermartingale_bound(stats));
    verdicts.push_back(ito_isometry_check(stats));
    verdicts.push_back(terminal_variance_check(stats));

    const std::uint64_t dseed = cfg.sde.master_seed * 2 + 1;
    verdicts.push_back(
        drift_regression_v(b, h, {cfg.x0}, cfg.sde.sigma, nullptr, 3000, 0.0, dseed));
    if (track != nullptr)
        verdicts.push_back(
            drift_regression_v(b, h, {cfg.x0}, cfg.sde.sigma, track, 3000, 0.0, dseed + 1));
    else if (tracked_rejected)
        verdicts.push_back(na_verdict(
            "tracked_drift_law",
            "tracked observable does not commute with H; the decay law does not apply"));

    const bool single_op = b.factors() == 1 && b.factor(0).kind == Factor::Kind::Projective &&
                           h.form() == Observable::Form::Operator;
    if (single_op) {
        const CMat hm = h.factor_op(0);
        const CVec psi0 = factor_lift(b, cfg.x0, 0);
        const RunScales sc = resolve_scales(b, h, cfg.x0, cfg.sde);
        const double span = std::min(cfg.sde.horizon, 1.0);

        double gaps[3];
        for (int lvl = 0; lvl < 3; ++lvl) {
            SdeConfig c = cfg.sde;
            c.dt = sc.dt / double(1 << lvl);
            c.horizon = span;
            NoisePath np_chart(cfg.sde.master_seed, 0xF00D, c.dt);
            NoisePath np_lift(cfg.sde.master_seed, 0xF00D, c.dt);
            PathNoise lift_noise(np_lift);
            const Trajectory chart = simulate_trajectory(b, h, cfg.x0, c, np_chart, nullptr,
                                                         1 << 20, true);
            const Trajectory lifted = lifted_oracle(b, hm, psi0, c, lift_noise, 1 << 20);
            gaps[lvl] = fs_distance(b, chart.terminal, lifted.terminal);
        }
        TestVerdict v;
        v.name = "lifted_agreement";
        v.statistic = gaps[2] / 0.05;
        v.pass = gaps[2] < 0.05 && gaps[1] <= gaps[0] * 1.05 + 1e-10 &&
                 gaps[2] <= gaps[1] * 1.05 + 1e-10;
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "chart vs Hilbert-space gap %.3e / %.3e / %.3e at dt, dt/2, dt/4", gaps[0],
                      gaps[1], gaps[2]);
        v.narrative = buf;
        verdicts.push_back(std::move(v));

        const double lh = std::min(cfg.sde.horizon, 2.0);
        verdicts.push_back(lindblad_check(hm, psi0, cfg.sde.sigma, sc.dt, lh, 2000,
                                          cfg.sde.master_seed + 99));
    } else {
        verdicts.push_back(na_verdict("lifted_agreement",
                                      "needs a single projective factor with operator form"));
        verdicts.push_back(na_verdict("ensemble_generator",
                                      "needs a single projective factor with operator form"));
    }

    return report_verdicts(cfg, verdicts, "verdicts.json", opt.strict);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"stochastic energy-driven state reduction toolkit"};
    app.require_subcommand(1);

    Options opt;
    app.add_option("--config", opt.config_path, "JSON run configuration")->required();
    std::uint64_t seed_arg = 0;
    CLI::Option* seed_opt = app.add_option("--seed", seed_arg, "override the master seed");
    app.add_option("--out", opt.out_override, "override the output directory");
    app.add_flag("--strict", opt.strict, "treat inconclusive verdicts as failures");
    app.add_option("--threads", opt.threads, "worker threads for ensembles")
        ->check(CLI::Range(1, 256));

    CLI::App* geo = app.add_subcommand("geometry-check", "metric, complex structure and curvature");
    CLI::App* ids = app.add_subcommand("identities", "operator identity residuals");
    CLI::App* sim = app.add_subcommand("simulate", "run an ensemble and write CSV/JSON");
    CLI::App* ver = app.add_subcommand("verify", "statistical verification battery");
    CLI::App* rep = app.add_subcommand("replay", "re-run from a config or summary");
    for (CLI::App* s : {geo, ids, sim, ver, rep}) s->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    if (seed_opt->count() > 0) opt.seed = seed_arg;

    try {
        if (geo->parsed()) return cmd_geometry(opt);
        if (ids->parsed()) return cmd_identities(opt);
        if (sim->parsed()) return run_simulation(opt, "simulate");
        if (rep->parsed()) return run_simulation(opt, "replay");
        if (ver->parsed()) return cmd_verify(opt);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const KreduceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
