#include "kreduce/config.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace kreduce {

namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::string& where,
                  const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (allowed.find(it.key()) == allowed.end())
            throw ConfigError("unknown_key", where + ": unexpected key '" + it.key() + "'");
}

double num(const json& j, const std::string& where) {
    if (!j.is_number()) throw ConfigError("invalid_value", where + ": expected a number");
    return j.get<double>();
}

long integer(const json& j, const std::string& where) {
    if (!j.is_number_integer())
        throw ConfigError("invalid_value", where + ": expected an integer");
    return j.get<long>();
}

std::complex<double> centry(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ConfigError("invalid_value", where + ": complex entries are [re, im] pairs");
    return {j[0].get<double>(), j[1].get<double>()};
}

CMat cmatrix(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty())
        throw ConfigError("invalid_value", where + ": expected a matrix (array of rows)");
    const auto dim = j.size();
    CMat m(dim, dim);
    for (size_t r = 0; r < dim; ++r) {
        if (!j[r].is_array() || j[r].size() != dim)
            throw ConfigError("dimension_mismatch",
                              where + ": row " + std::to_string(r) + " has " +
                                  std::to_string(j[r].size()) + " entries, expected " +
                                  std::to_string(dim));
        for (size_t c = 0; c < dim; ++c)
            m(static_cast<long>(r), static_cast<long>(c)) =
                centry(j[r][c], where + "(" + std::to_string(r) + "," + std::to_string(c) + ")");
    }
    const double scale = 1.0 + m.norm();
    for (long r = 0; r < m.rows(); ++r)
        for (long c = r; c < m.cols(); ++c)
            if (std::abs(m(r, c) - std::conj(m(c, r))) > 1e-12 * scale)
                throw ConfigError("non_hermitian",
                                  where + ": entries (" + std::to_string(r) + "," +
                                      std::to_string(c) + ") and (" + std::to_string(c) + "," +
                                      std::to_string(r) + ") are not conjugate");
    return m;
}

Vec rvector(const json& j, const std::string& where) {
    if (!j.is_array()) throw ConfigError("invalid_value", where + ": expected an array");
    Vec v(static_cast<long>(j.size()));
    for (size_t k = 0; k < j.size(); ++k)
        v[static_cast<long>(k)] = num(j[k], where + "[" + std::to_string(k) + "]");
    return v;
}

Backend parse_backend(const json& j) {
    if (!j.is_object()) throw ConfigError("invalid_value", "backend: expected an object");
    require_keys(j, "backend", {"type", "n", "dims", "form", "coeff"});
    if (!j.contains("type")) throw ConfigError("invalid_value", "backend: missing 'type'");
    const std::string type = j["type"].get<std::string>();

    if (type == "projective") {
        if (!j.contains("n")) throw ConfigError("invalid_value", "backend: projective needs 'n'");
        const long n = integer(j["n"], "backend.n");
        if (n < 1) throw ConfigError("invalid_value", "backend.n must be >= 1");
        return Backend::projective(static_cast<int>(n));
    }
    if (type == "product") {
        if (!j.contains("dims"))
            throw ConfigError("invalid_value", "backend: product needs 'dims'");
        std::vector<int> dims;
        for (const auto& d : j["dims"]) {
            const long n = integer(d, "backend.dims");
            if (n < 1) throw ConfigError("invalid_value", "backend.dims entries must be >= 1");
            dims.push_back(static_cast<int>(n));
        }
        if (dims.empty()) throw ConfigError("invalid_value", "backend.dims must be non-empty");
        return Backend::product(dims);
    }
    if (type == "potential") {
        if (!j.contains("n")) throw ConfigError("invalid_value", "backend: potential needs 'n'");
        const long n = integer(j["n"], "backend.n");
        if (n < 1) throw ConfigError("invalid_value", "backend.n must be >= 1");
        PotentialSpec spec;
        const std::string form = j.value("form", "flat");
        if (form == "flat") spec.form = PotentialForm::Flat;
        else if (form == "fubini_study") spec.form = PotentialForm::FubiniStudy;
        else if (form == "quartic") spec.form = PotentialForm::Quartic;
        else if (form == "concave") spec.form = PotentialForm::Concave;
        else throw ConfigError("invalid_value", "backend.form: unknown potential '" + form + "'");
        spec.coeff = j.contains("coeff") ? num(j["coeff"], "backend.coeff") : 0.0;
        return Backend::potential(static_cast<int>(n), spec);
    }
    throw ConfigError("invalid_value", "backend.type: unknown type '" + type + "'");
}

Observable parse_observable(const json& j, const Backend& b, const std::string& where) {
    if (!j.is_object()) throw ConfigError("invalid_value", where + ": expected an object");
    require_keys(j, where, {"matrix", "factors", "quadratic"});
    const int given = int(j.contains("matrix")) + int(j.contains("factors")) +
                      int(j.contains("quadratic"));
    if (given != 1)
        throw ConfigError("invalid_value",
                          where + ": give exactly one of 'matrix', 'factors', 'quadratic'");

    try {
        if (j.contains("matrix")) {
            const CMat m = cmatrix(j["matrix"], where + ".matrix");
            if (b.factors() != 1)
                throw ConfigError("dimension_mismatch",
                                  where + ": 'matrix' needs a single-factor backend; use "
                                          "'factors' on products");
            return Observable::op_expectation(b, m);
        }
        if (j.contains("factors")) {
            std::vector<CMat> ops;
            for (size_t i = 0; i < j["factors"].size(); ++i)
                ops.push_back(cmatrix(j["factors"][i],
                                      where + ".factors[" + std::to_string(i) + "]"));
            return Observable::separable_sum(b, ops);
        }
        const json& q = j["quadratic"];
        require_keys(q, where + ".quadratic", {"c0", "c", "p", "q"});
        const Vec c = q.contains("c") ? rvector(q["c"], where + ".quadratic.c") : Vec();
        const Vec p = q.contains("p") ? rvector(q["p"], where + ".quadratic.p") : Vec();
        const Vec qq = q.contains("q") ? rvector(q["q"], where + ".quadratic.q") : Vec();
        const double c0 = q.contains("c0") ? num(q["c0"], where + ".quadratic.c0") : 0.0;
        return Observable::quadratic(b, c0, c, p, qq);
    } catch (const ConfigError&) {
        throw;
    } catch (const InvalidInputError& e) {
        throw ConfigError("dimension_mismatch", where + ": " + e.what());
    }
}

ChartPoint parse_initial(const json& j, const Backend& b, std::string& note) {
    if (!j.is_object()) throw ConfigError("invalid_value", "initial: expected an object");
    require_keys(j, "initial", {"chart", "coords", "vector"});
    const bool by_chart = j.contains("coords");
    const bool by_vector = j.contains("vector");
    if (by_chart == by_vector)
        throw ConfigError("invalid_value",
                          "initial: give either 'chart'+'coords' or a homogeneous 'vector'");

    if (by_vector) {
        if (b.factors() != 1)
            throw ConfigError("invalid_value",
                              "initial.vector applies to single-factor backends; give "
                              "'chart'+'coords' on products");
        if (b.factor(0).kind != Factor::Kind::Projective)
            throw ConfigError("invalid_value",
                              "initial.vector needs a projective backend");
        CVec psi(b.complex_dim() + 1);
        if (static_cast<long>(j["vector"].size()) != psi.size())
            throw ConfigError("dimension_mismatch",
                              "initial.vector: expected " + std::to_string(psi.size()) +
                                  " components");
        for (long k = 0; k < psi.size(); ++k)
            psi[k] = centry(j["vector"][static_cast<size_t>(k)],
                            "initial.vector[" + std::to_string(k) + "]");
        if (psi.norm() < 1e-12)
            throw ConfigError("invalid_value", "initial.vector must be nonzero");
        long chart = 0;
        psi.cwiseAbs().maxCoeff(&chart);
        Vec x(b.real_dim());
        for (int m = 0; m < b.complex_dim(); ++m)
            set_zcoord(x, m, psi[affine_slot(static_cast<int>(chart), m)] / psi[chart]);
        note = "initial vector projected into chart " + std::to_string(chart);
        return make_point(b, static_cast<int>(chart), x);
    }

    if (!j.contains("chart"))
        throw ConfigError("invalid_value", "initial: 'coords' needs an explicit 'chart'");
    const long chart = integer(j["chart"], "initial.chart");
    if (chart < 0 || chart >= b.charts())
        throw ConfigError("invalid_value", "initial.chart: backend has charts 0.." +
                                               std::to_string(b.charts() - 1));
    const Vec x = rvector(j["coords"], "initial.coords");
    if (x.size() != b.real_dim())
        throw ConfigError("dimension_mismatch",
                          "initial.coords: expected " + std::to_string(b.real_dim()) +
                              " real coordinates, got " + std::to_string(x.size()));
    ChartPoint p;
    try {
        p = make_point(b, static_cast<int>(chart), x);
    } catch (const InvalidInputError& e) {
        throw ConfigError("invalid_value", std::string("initial: ") + e.what());
    }
    if (needs_chart_switch(b, p)) {
        const ChartPoint q = chart_transition(b, p, preferred_chart(b, p));
        note = "initial coordinates large in chart " + std::to_string(chart) +
               "; switched to chart " + std::to_string(q.chart);
        return q;
    }
    return p;
}

SdeConfig parse_sde(const json& j) {
    if (!j.is_object()) throw ConfigError("invalid_value", "sde: expected an object");
    require_keys(j, "sde",
                 {"sigma", "dt", "horizon", "collapse_epsilon", "collapse_hold_steps",
                  "master_seed", "ensemble"});
    SdeConfig cfg;
    if (!j.contains("horizon")) throw ConfigError("invalid_value", "sde: missing 'horizon'");
    cfg.horizon = num(j["horizon"], "sde.horizon");
    cfg.sigma = j.contains("sigma") ? num(j["sigma"], "sde.sigma") : 0.5;
    cfg.dt = j.contains("dt") ? num(j["dt"], "sde.dt") : 0.0;
    cfg.collapse_epsilon =
        j.contains("collapse_epsilon") ? num(j["collapse_epsilon"], "sde.collapse_epsilon") : 0.0;
    if (j.contains("collapse_hold_steps"))
        cfg.collapse_hold_steps =
            static_cast<int>(integer(j["collapse_hold_steps"], "sde.collapse_hold_steps"));
    if (j.contains("master_seed")) {
        if (!j["master_seed"].is_number_unsigned() && !j["master_seed"].is_number_integer())
            throw ConfigError("invalid_value", "sde.master_seed: expected an integer");
        cfg.master_seed = j["master_seed"].get<std::uint64_t>();
    }
    if (j.contains("ensemble"))
        cfg.ensemble_size = static_cast<int>(integer(j["ensemble"], "sde.ensemble"));
    if (!(cfg.horizon > 0.0)) throw ConfigError("invalid_value", "sde.horizon must be > 0");
    if (cfg.sigma < 0.0) throw ConfigError("invalid_value", "sde.sigma must be >= 0");
    if (cfg.dt < 0.0) throw ConfigError("invalid_value", "sde.dt must be >= 0");
    if (cfg.collapse_hold_steps < 1)
        throw ConfigError("invalid_value", "sde.collapse_hold_steps must be >= 1");
    if (cfg.ensemble_size < 1)
        throw ConfigError("invalid_value", "sde.ensemble must be >= 1");
    return cfg;
}

RunConfig build(const json& root, const std::string& origin) {
    if (!root.is_object())
        throw ConfigError("syntax", origin + ": top level must be an object");

    // a simulate summary embeds the config it ran; accept it directly
    if (root.contains("config") && root.contains("master_seed")) {
        RunConfig cfg = build(root["config"], origin + " (embedded config)");
        cfg.sde.master_seed = root["master_seed"].get<std::uint64_t>();
        json echo = json::parse(cfg.echo);
        echo["sde"]["master_seed"] = cfg.sde.master_seed;
        cfg.echo = echo.dump(2);
        return cfg;
    }

    require_keys(root, origin, {"backend", "hamiltonian", "tracked", "initial", "sde", "output"});
    for (const char* key : {"backend", "hamiltonian", "initial", "sde"})
        if (!root.contains(key))
            throw ConfigError("invalid_value", origin + ": missing block '" + key + "'");

    RunConfig cfg;
    cfg.backend = parse_backend(root["backend"]);
    cfg.hamiltonian = parse_observable(root["hamiltonian"], cfg.backend, "hamiltonian");
    if (root.contains("tracked"))
        cfg.tracked = parse_observable(root["tracked"], cfg.backend, "tracked");
    cfg.x0 = parse_initial(root["initial"], cfg.backend, cfg.chart_note);
    cfg.sde = parse_sde(root["sde"]);

    if (root.contains("output")) {
        const json& out = root["output"];
        require_keys(out, "output", {"dir", "formats"});
        if (out.contains("dir")) cfg.out_dir = out["dir"].get<std::string>();
        if (out.contains("formats")) {
            cfg.want_csv = false;
            cfg.want_json = false;
            for (const auto& f : out["formats"]) {
                const std::string name = f.get<std::string>();
                if (name == "csv") cfg.want_csv = true;
                else if (name == "json") cfg.want_json = true;
                else throw ConfigError("invalid_value", "output.formats: unknown format '" +
                                                            name + "'");
            }
        }
    }

    cfg.echo = root.dump(2);
    return cfg;
}

} // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("syntax", origin + ": " + e.what());
    }
    try {
        return build(root, origin);
    } catch (const json::exception& e) {
        // wrong JSON type where the schema expects another
        throw ConfigError("invalid_value", origin + ": " + e.what());
    }
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("missing_file", "cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

} // namespace kreduce
