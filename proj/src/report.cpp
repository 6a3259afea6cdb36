#include "kreduce/report.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace kreduce {

namespace {

using nlohmann::json;

std::string g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

} // namespace

std::string ensemble_csv_text(const EnsembleStats& stats) {
    std::string out = "t,mean_H,se_H,mean_V,se_V,mean_Q,bound_V\n";
    const double v0 = stats.scales.v0;
    const double rate = stats.scales.kappa * stats.sigma * stats.sigma * v0;
    for (size_t k = 0; k < stats.times.size(); ++k) {
        const double bound = v0 / (1.0 + rate * stats.times[k]);
        out += g17(stats.times[k]) + "," + g17(stats.mean_h[k]) + "," + g17(stats.se_h[k]) +
               "," + g17(stats.mean_v[k]) + "," + g17(stats.se_v[k]) + "," +
               g17(stats.mean_q[k]) + "," + g17(bound) + "\n";
    }
    return out;
}

std::string summary_json_text(const RunConfig& cfg, const EnsembleStats& stats) {
    json s;
    s["config"] = json::parse(cfg.echo);
    s["master_seed"] = stats.master_seed;
    s["trajectories"] = stats.n;
    s["sigma"] = stats.sigma;
    s["horizon"] = stats.horizon;
    s["valid"] = stats.valid;
    s["blowups"] = stats.blowups;
    s["unresolved"] = stats.unresolved;
    if (!cfg.chart_note.empty()) s["chart_note"] = cfg.chart_note;

    json scales;
    scales["h0"] = stats.scales.h0;
    scales["v0"] = stats.scales.v0;
    scales["dt"] = stats.scales.dt;
    scales["steps"] = stats.scales.steps;
    scales["collapse_epsilon"] = stats.scales.epsilon;
    scales["kappa"] = stats.scales.kappa;
    scales["lambda"] = stats.scales.lambda;
    scales["kappa_exact"] = stats.scales.kappa_exact;
    const double tau = stats.scales.tau;
    scales["tau"] = std::isfinite(tau) ? json(tau) : json("inf");
    s["scales"] = std::move(scales);

    if (stats.sigma == 0.0) s["note"] = "sigma = 0: no reduction expected, V stays constant";

    // finite-time surrogates chosen by this artifact, not by the theory
    s["artifact_decisions"] = {
        {"scheme", "euler_maruyama"},
        {"collapse_rule", "dispersion below epsilon held for configured steps"},
        {"dt_rule", "min(0.01/scale, tau/1e4) unless configured"},
    };

    json outcomes = json::array();
    for (size_t i = 0; i < stats.outcome_labels.size(); ++i) {
        if (stats.outcome_counts[i] == 0) continue;
        outcomes.push_back({{"label", stats.outcome_labels[i]},
                            {"value", stats.outcome_values[i]},
                            {"count", stats.outcome_counts[i]},
                            {"frequency", double(stats.outcome_counts[i]) / double(stats.n)}});
    }
    s["outcomes"] = std::move(outcomes);
    if (!stats.eta.empty()) {
        s["eta_final"] = stats.eta.back();
        s["xi_final"] = stats.xi.back();
    }
    return s.dump(2) + "\n";
}

std::string verdict_json_text(const std::vector<TestVerdict>& verdicts) {
    json arr = json::array();
    for (const TestVerdict& v : verdicts)
        arr.push_back({{"name", v.name},
                       {"statistic", v.statistic},
                       {"threshold", v.threshold},
                       {"pass", v.pass},
                       {"applicable", v.applicable},
                       {"conclusive", v.conclusive},
                       {"narrative", v.narrative}});
    return arr.dump(2) + "\n";
}

std::string verdict_table_text(const std::vector<TestVerdict>& verdicts) {
    std::string out;
    for (const TestVerdict& v : verdicts) {
        const char* mark =
            !v.applicable ? "  n/a" : (!v.conclusive ? " warn" : (v.pass ? "   ok" : " FAIL"));
        char buf[256];
        std::snprintf(buf, sizeof buf, "%s  %-22s stat %10.4g  thr %8.4g  %s\n", mark,
                      v.name.c_str(), v.statistic, v.threshold, v.narrative.c_str());
        out += buf;
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("missing_file", "cannot write '" + path + "'");
    out << text;
    if (!out) throw ConfigError("missing_file", "short write to '" + path + "'");
}

} // namespace kreduce
