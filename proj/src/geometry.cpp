#include "kreduce/geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace kreduce {

namespace {

const char* form_name(PotentialForm f) {
    switch (f) {
        case PotentialForm::Flat: return "flat";
        case PotentialForm::FubiniStudy: return "fs";
        case PotentialForm::Quartic: return "quartic";
        case PotentialForm::Concave: return "concave";
    }
    return "?";
}

// Index of the conjugate real coordinate (x_i <-> y_i) and the sign picked up
// when J^p_a is contracted on the lower index a.
inline int conj_index(int a) { return a ^ 1; }
inline double conj_sign(int a) { return (a & 1) ? 1.0 : -1.0; }

Mat standard_jmat(int d) {
    Mat j = Mat::Zero(d, d);
    for (int i = 0; i + 1 < d; i += 2) {
        j(i, i + 1) = 1.0;
        j(i + 1, i) = -1.0;
    }
    return j;
}

// Real metric of the Hermitian form M, M(i,j) = h_{i jbar}, in interleaved
// coordinates: per (i,j) pair the 2x2 block [[2A, 2B], [-2B, 2A]].
Mat hermitian_to_metric(const CMat& m) {
    const int n = int(m.rows());
    Mat g(2 * n, 2 * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double a = 2.0 * m(i, j).real();
            const double b = 2.0 * m(i, j).imag();
            g(2 * i, 2 * j) = a;
            g(2 * i, 2 * j + 1) = b;
            g(2 * i + 1, 2 * j) = -b;
            g(2 * i + 1, 2 * j + 1) = a;
        }
    return g;
}

// Fubini-Study Hermitian form at affine coordinates z, holomorphic sectional
// curvature 1.
CMat projective_hermitian(const std::vector<std::complex<double>>& z) {
    const int n = int(z.size());
    double s = 0.0;
    for (auto& zi : z) s += std::norm(zi);
    const double w = 1.0 + s;
    CMat m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            std::complex<double> v = -std::conj(z[size_t(i)]) * z[size_t(j)];
            if (i == j) v += w;
            m(i, j) = 2.0 * v / (w * w);
        }
    return m;
}

std::vector<std::complex<double>> factor_coords(const Backend& b, const ChartPoint& p, int f) {
    const int off = b.factor_offset(f);
    const int n = b.factor(f).n;
    std::vector<std::complex<double>> z(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) z[size_t(j)] = zcoord(p.x, off + j);
    return z;
}

std::vector<double> factor_reals(const Backend& b, const ChartPoint& p, int f) {
    const int off = b.factor_offset(f);
    const int n = b.factor(f).n;
    return std::vector<double>(p.x.data() + 2 * off, p.x.data() + 2 * (off + n));
}

std::string point_string(const ChartPoint& p) {
    std::ostringstream os;
    os << "chart " << p.chart << ", x = [";
    for (int i = 0; i < p.x.size(); ++i) os << (i ? ", " : "") << p.x[i];
    os << "]";
    return os.str();
}

// Real Hessian of the potential.
Mat potential_hessian(const PotentialSpec& spec, const std::vector<double>& x) {
    const int d = int(x.size());
    auto f = [&spec](const auto& v) { return potential_value(spec, v); };
    Mat h(d, d);
    for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) {
            h(a, b) = partial2(f, x, a, b);
            h(b, a) = h(a, b);
        }
    return h;
}

// g = (H + J^T H J) / 2, the J-invariant part of the potential Hessian.
Mat sandwich(const Mat& h) {
    const int d = int(h.rows());
    Mat g(d, d);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
            g(a, b) = 0.5 * (h(a, b) +
                             conj_sign(a) * conj_sign(b) * h(conj_index(a), conj_index(b)));
    return g;
}

Mat potential_metric(const PotentialSpec& spec, const std::vector<double>& x) {
    return sandwich(potential_hessian(spec, x));
}

// d_c g_ab from third partials of the potential.
Tensor3 potential_dmetric(const PotentialSpec& spec, const std::vector<double>& x) {
    const int d = int(x.size());
    auto f = [&spec](const auto& v) { return potential_value(spec, v); };
    Tensor3 t3(d);
    for (int c = 0; c < d; ++c)
        for (int a = 0; a < d; ++a)
            for (int b = a; b < d; ++b) {
                t3(c, a, b) = partial3(f, x, c, a, b);
                t3(c, b, a) = t3(c, a, b);
            }
    Tensor3 dg(d);
    for (int c = 0; c < d; ++c)
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b)
                dg(c, a, b) = 0.5 * (t3(c, a, b) + conj_sign(a) * conj_sign(b) *
                                                       t3(c, conj_index(a), conj_index(b)));
    return dg;
}

// d_c d_d g_ab from fourth partials.
Tensor4 potential_ddmetric(const PotentialSpec& spec, const std::vector<double>& x) {
    const int d = int(x.size());
    auto f = [&spec](const auto& v) { return potential_value(spec, v); };
    Tensor4 t4(d);
    for (int c = 0; c < d; ++c)
        for (int e = c; e < d; ++e)
            for (int a = 0; a < d; ++a)
                for (int b = a; b < d; ++b) {
                    const double v = partial4(f, x, c, e, a, b);
                    t4(c, e, a, b) = v;
                    t4(c, e, b, a) = v;
                    t4(e, c, a, b) = v;
                    t4(e, c, b, a) = v;
                }
    Tensor4 ddg(d);
    for (int c = 0; c < d; ++c)
        for (int e = 0; e < d; ++e)
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b)
                    ddg(c, e, a, b) =
                        0.5 * (t4(c, e, a, b) + conj_sign(a) * conj_sign(b) *
                                                    t4(c, e, conj_index(a), conj_index(b)));
    return ddg;
}

Tensor3 christoffels_from(const Mat& ginv, const Tensor3& dg) {
    const int d = int(ginv.rows());
    Tensor3 gam(d);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
            for (int c = b; c < d; ++c) {
                double s = 0.0;
                for (int e = 0; e < d; ++e)
                    s += ginv(a, e) * (dg(b, e, c) + dg(c, e, b) - dg(e, b, c));
                gam(a, b, c) = 0.5 * s;
                gam(a, c, b) = gam(a, b, c);
            }
    return gam;
}

// Curvature with all indices down, R_abcd = g_de R_abc^e, assembled from the
// connection and its coordinate derivative.
Tensor4 riemann_from(const Mat& g, const Mat& ginv, const Tensor3& dg, const Tensor4& ddg) {
    const int d = int(g.rows());
    const Tensor3 gam = christoffels_from(ginv, dg);

    // dginv[a] = -ginv (d_a g) ginv
    std::vector<Mat> dginv(static_cast<size_t>(d));
    for (int a = 0; a < d; ++a) {
        Mat dga(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) dga(i, j) = dg(a, i, j);
        dginv[size_t(a)] = -ginv * dga * ginv;
    }

    // dgam(a, e, b, c) = d_a Gamma^e_bc
    Tensor4 dgam(d);
    for (int a = 0; a < d; ++a)
        for (int e = 0; e < d; ++e)
            for (int b = 0; b < d; ++b)
                for (int c = b; c < d; ++c) {
                    double s = 0.0;
                    for (int f = 0; f < d; ++f) {
                        const double lo = dg(b, f, c) + dg(c, f, b) - dg(f, b, c);
                        const double dlo = ddg(a, b, f, c) + ddg(a, c, f, b) - ddg(a, f, b, c);
                        s += dginv[size_t(a)](e, f) * lo + ginv(e, f) * dlo;
                    }
                    dgam(a, e, b, c) = 0.5 * s;
                    dgam(a, e, c, b) = dgam(a, e, b, c);
                }

    Tensor4 r(d);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
            for (int c = 0; c < d; ++c)
                for (int e = 0; e < d; ++e) {
                    double up = dgam(a, e, b, c) - dgam(b, e, a, c);
                    for (int f = 0; f < d; ++f)
                        up += gam(f, b, c) * gam(e, a, f) - gam(f, a, c) * gam(e, b, f);
                    for (int dd = 0; dd < d; ++dd) r(a, b, c, dd) += up * g(e, dd);
                }
    return r;
}

void check_spd(const Mat& g, const ChartPoint& p) {
    Eigen::LLT<Mat> llt(g);
    if (llt.info() != Eigen::Success)
        throw InvalidInputError("potential metric is not positive definite at " +
                                point_string(p));
}

double contract4(const Tensor4& r, const Vec& a, const Vec& b, const Vec& c, const Vec& d) {
    const int n = r.dim();
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        if (a[i] == 0.0) continue;
        for (int j = 0; j < n; ++j) {
            if (b[j] == 0.0) continue;
            for (int k = 0; k < n; ++k) {
                if (c[k] == 0.0) continue;
                for (int l = 0; l < n; ++l) s += r(i, j, k, l) * a[i] * b[j] * c[k] * d[l];
            }
        }
    }
    return s;
}

Vec apply_j(const Vec& u) {
    Vec v(u.size());
    for (int i = 0; i + 1 < u.size(); i += 2) {
        v[i] = u[i + 1];
        v[i + 1] = -u[i];
    }
    return v;
}

} // namespace

Backend Backend::projective(int n) {
    if (n < 1) throw InvalidInputError("projective dimension must be >= 1");
    Backend b;
    b.fac_.push_back(Factor{Factor::Kind::Projective, n, {}});
    b.off_ = {0};
    b.n_total_ = n;
    b.charts_total_ = n + 1;
    b.id_ = "cp" + std::to_string(n);
    return b;
}

Backend Backend::product(const std::vector<int>& dims) {
    if (dims.size() < 2) throw InvalidInputError("product needs at least two factors");
    Backend b;
    b.id_ = "";
    int off = 0;
    b.charts_total_ = 1;
    for (int n : dims) {
        if (n < 1) throw InvalidInputError("product factor dimension must be >= 1");
        b.fac_.push_back(Factor{Factor::Kind::Projective, n, {}});
        b.off_.push_back(off);
        off += n;
        b.charts_total_ *= n + 1;
        if (!b.id_.empty()) b.id_ += "x";
        b.id_ += "cp" + std::to_string(n);
    }
    b.n_total_ = off;
    return b;
}

Backend Backend::potential(int n, PotentialSpec spec) {
    if (n < 1) throw InvalidInputError("potential dimension must be >= 1");
    Backend b;
    b.fac_.push_back(Factor{Factor::Kind::Potential, n, spec});
    b.off_ = {0};
    b.n_total_ = n;
    b.charts_total_ = 1;
    char buf[64];
    std::snprintf(buf, sizeof buf, "potential:%s:q%g:n%d", form_name(spec.form), spec.coeff, n);
    b.id_ = buf;
    return b;
}

bool Backend::projective_only() const {
    for (auto& f : fac_)
        if (f.kind != Factor::Kind::Projective) return false;
    return true;
}

std::vector<int> Backend::split_chart(int chart) const {
    if (chart < 0 || chart >= charts_total_) throw InvalidInputError("chart index out of range");
    std::vector<int> cs(fac_.size());
    for (size_t i = 0; i < fac_.size(); ++i) {
        const int k = fac_[i].charts();
        cs[i] = chart % k;
        chart /= k;
    }
    return cs;
}

int Backend::join_chart(const std::vector<int>& per_factor) const {
    if (per_factor.size() != fac_.size())
        throw InvalidInputError("per-factor chart list has wrong length");
    int chart = 0, stride = 1;
    for (size_t i = 0; i < fac_.size(); ++i) {
        const int k = fac_[i].charts();
        if (per_factor[i] < 0 || per_factor[i] >= k)
            throw InvalidInputError("factor chart index out of range");
        chart += per_factor[i] * stride;
        stride *= k;
    }
    return chart;
}

ChartPoint make_point(const Backend& b, int chart, Vec x) {
    ChartPoint p{b.id(), chart, std::move(x)};
    validate_point(b, p);
    return p;
}

void validate_point(const Backend& b, const ChartPoint& p) {
    if (p.backend_id != b.id())
        throw InvalidInputError("point belongs to backend '" + p.backend_id +
                                "', expected '" + b.id() + "'");
    if (p.chart < 0 || p.chart >= b.charts())
        throw InvalidInputError("chart index out of range at " + point_string(p));
    if (int(p.x.size()) != b.real_dim())
        throw InvalidInputError("coordinate vector has wrong length at " + point_string(p));
    for (int i = 0; i < p.x.size(); ++i)
        if (!std::isfinite(p.x[i]))
            throw InvalidInputError("non-finite coordinate at " + point_string(p));
}

CVec factor_lift(const Backend& b, const ChartPoint& p, int factor) {
    const Factor& f = b.factor(factor);
    if (f.kind != Factor::Kind::Projective)
        throw InvalidInputError("homogeneous lift requires a projective factor");
    const int c = b.split_chart(p.chart)[size_t(factor)];
    const int off = b.factor_offset(factor);
    CVec psi(f.n + 1);
    psi[c] = 1.0;
    for (int j = 0; j < f.n; ++j) psi[affine_slot(c, j)] = zcoord(p.x, off + j);
    return psi;
}

MetricTensors factor_metric(const Backend& b, const ChartPoint& p, int factor) {
    const Factor& f = b.factor(factor);
    MetricTensors t;
    if (f.kind == Factor::Kind::Projective) {
        t.g = hermitian_to_metric(projective_hermitian(factor_coords(b, p, factor)));
    } else {
        t.g = potential_metric(f.pot, factor_reals(b, p, factor));
        check_spd(t.g, p);
    }
    t.jmat = standard_jmat(2 * f.n);
    t.omega = t.g * t.jmat;
    return t;
}

Tensor3 factor_christoffels(const Backend& b, const ChartPoint& p, int factor) {
    const Factor& f = b.factor(factor);
    const int d = 2 * f.n;
    if (f.kind == Factor::Kind::Potential) {
        const auto x = factor_reals(b, p, factor);
        const Mat g = potential_metric(f.pot, x);
        check_spd(g, p);
        return christoffels_from(g.inverse(), potential_dmetric(f.pot, x));
    }
    // Gamma^i_jk = -(delta^i_j zbar_k + delta^i_k zbar_j) / (1 + |z|^2),
    // mapped to real indices through the holomorphic geodesic equation.
    const auto z = factor_coords(b, p, factor);
    double s = 0.0;
    for (auto& zi : z) s += std::norm(zi);
    const double w = 1.0 + s;
    Tensor3 gam(d);
    for (int i = 0; i < f.n; ++i)
        for (int j = 0; j < f.n; ++j)
            for (int k = 0; k < f.n; ++k) {
                std::complex<double> c{0.0, 0.0};
                if (i == j) c -= std::conj(z[size_t(k)]);
                if (i == k) c -= std::conj(z[size_t(j)]);
                c /= w;
                const double pp = c.real(), qq = c.imag();
                const int xi = 2 * i, yi = 2 * i + 1;
                const int xj = 2 * j, yj = 2 * j + 1;
                const int xk = 2 * k, yk = 2 * k + 1;
                gam(xi, xj, xk) = pp;
                gam(xi, yj, yk) = -pp;
                gam(xi, xj, yk) = -qq;
                gam(xi, yj, xk) = -qq;
                gam(yi, xj, xk) = qq;
                gam(yi, yj, yk) = -qq;
                gam(yi, xj, yk) = pp;
                gam(yi, yj, xk) = pp;
            }
    return gam;
}

Tensor4 factor_riemann(const Backend& b, const ChartPoint& p, int factor) {
    const Factor& f = b.factor(factor);
    const int d = 2 * f.n;
    if (f.kind == Factor::Kind::Potential) {
        const auto x = factor_reals(b, p, factor);
        const Mat g = potential_metric(f.pot, x);
        check_spd(g, p);
        return riemann_from(g, g.inverse(), potential_dmetric(f.pot, x),
                            potential_ddmetric(f.pot, x));
    }
    // Constant holomorphic sectional curvature 1:
    // R_abcd = -(g_ac g_bd - g_bc g_ad + w_ac w_bd - w_bc w_ad + 2 w_ab w_cd)/4.
    const MetricTensors t = factor_metric(b, p, factor);
    const Mat& g = t.g;
    const Mat& w = t.omega;
    Tensor4 r(d);
    for (int a = 0; a < d; ++a)
        for (int bb = 0; bb < d; ++bb)
            for (int c = 0; c < d; ++c)
                for (int e = 0; e < d; ++e)
                    r(a, bb, c, e) = -0.25 * (g(a, c) * g(bb, e) - g(bb, c) * g(a, e) +
                                              w(a, c) * w(bb, e) - w(bb, c) * w(a, e) +
                                              2.0 * w(a, bb) * w(c, e));
    return r;
}

MetricTensors metric_at(const Backend& b, const ChartPoint& p) {
    validate_point(b, p);
    const int d = b.real_dim();
    MetricTensors t;
    t.g = Mat::Zero(d, d);
    for (int f = 0; f < b.factors(); ++f) {
        const int o = 2 * b.factor_offset(f);
        const int df = 2 * b.factor(f).n;
        t.g.block(o, o, df, df) = factor_metric(b, p, f).g;
    }
    t.jmat = standard_jmat(d);
    t.omega = t.g * t.jmat;
    return t;
}

Tensor3 christoffels_at(const Backend& b, const ChartPoint& p) {
    validate_point(b, p);
    const int d = b.real_dim();
    Tensor3 gam(d);
    for (int f = 0; f < b.factors(); ++f) {
        const int o = 2 * b.factor_offset(f);
        const int df = 2 * b.factor(f).n;
        const Tensor3 gf = factor_christoffels(b, p, f);
        for (int a = 0; a < df; ++a)
            for (int bb = 0; bb < df; ++bb)
                for (int c = 0; c < df; ++c) gam(o + a, o + bb, o + c) = gf(a, bb, c);
    }
    return gam;
}

Tensor4 riemann_at(const Backend& b, const ChartPoint& p) {
    validate_point(b, p);
    const int d = b.real_dim();
    Tensor4 r(d);
    for (int f = 0; f < b.factors(); ++f) {
        const int o = 2 * b.factor_offset(f);
        const int df = 2 * b.factor(f).n;
        const Tensor4 rf = factor_riemann(b, p, f);
        for (int a = 0; a < df; ++a)
            for (int bb = 0; bb < df; ++bb)
                for (int c = 0; c < df; ++c)
                    for (int e = 0; e < df; ++e) r(o + a, o + bb, o + c, o + e) = rf(a, bb, c, e);
    }
    return r;
}

double holomorphic_sectional(const Backend& b, const ChartPoint& p, const Vec& grad_h) {
    validate_point(b, p);
    if (int(grad_h.size()) != b.real_dim())
        throw InvalidInputError("gradient has wrong length");
    double vh = 0.0, num = 0.0;
    for (int f = 0; f < b.factors(); ++f) {
        const int o = 2 * b.factor_offset(f);
        const int df = 2 * b.factor(f).n;
        const Vec xi = grad_h.segment(o, df);
        const Mat g = factor_metric(b, p, f).g;
        const Vec u = g.ldlt().solve(xi);
        vh += xi.dot(u);
        num -= contract4(factor_riemann(b, p, f), u, apply_j(u), u, apply_j(u));
    }
    if (std::sqrt(std::max(vh, 0.0)) < 1e-12)
        throw DegeneratePlaneError("gradient plane degenerate at " + point_string(p));
    return num / (vh * vh);
}

double bisectional(const Backend& b, const ChartPoint& p, const Vec& grad_f, const Vec& grad_h) {
    validate_point(b, p);
    if (int(grad_f.size()) != b.real_dim() || int(grad_h.size()) != b.real_dim())
        throw InvalidInputError("gradient has wrong length");
    double vf = 0.0, vh = 0.0, num = 0.0;
    for (int f = 0; f < b.factors(); ++f) {
        const int o = 2 * b.factor_offset(f);
        const int df = 2 * b.factor(f).n;
        const Vec xf = grad_f.segment(o, df);
        const Vec xh = grad_h.segment(o, df);
        const Mat g = factor_metric(b, p, f).g;
        Eigen::LDLT<Mat> ldlt(g);
        const Vec uf = ldlt.solve(xf);
        const Vec uh = ldlt.solve(xh);
        vf += xf.dot(uf);
        vh += xh.dot(uh);
        num -= contract4(factor_riemann(b, p, f), uf, apply_j(uf), uh, apply_j(uh));
    }
    if (std::sqrt(std::max(vf, 0.0)) < 1e-12 || std::sqrt(std::max(vh, 0.0)) < 1e-12)
        throw DegeneratePlaneError("gradient plane degenerate at " + point_string(p));
    return num / (vf * vh);
}

ChartPoint chart_transition(const Backend& b, const ChartPoint& p, int target_chart) {
    validate_point(b, p);
    const auto cs = b.split_chart(p.chart);
    const auto ts = b.split_chart(target_chart);
    ChartPoint q{b.id(), target_chart, Vec(b.real_dim())};
    for (int f = 0; f < b.factors(); ++f) {
        const Factor& fac = b.factor(f);
        const int off = b.factor_offset(f);
        if (fac.kind == Factor::Kind::Potential) {
            for (int j = 0; j < fac.n; ++j) set_zcoord(q.x, off + j, zcoord(p.x, off + j));
            continue;
        }
        if (cs[size_t(f)] == ts[size_t(f)]) {
            for (int j = 0; j < fac.n; ++j) set_zcoord(q.x, off + j, zcoord(p.x, off + j));
            continue;
        }
        const CVec psi = factor_lift(b, p, f);
        const int tc = ts[size_t(f)];
        const std::complex<double> den = psi[tc];
        double mx = 0.0;
        for (int s = 0; s <= fac.n; ++s) mx = std::max(mx, std::abs(psi[s]));
        if (std::abs(den) < 1e-9 * mx)
            throw UnreachableChartError("target chart " + std::to_string(target_chart) +
                                        " unreachable from " + point_string(p));
        for (int j = 0; j < fac.n; ++j)
            set_zcoord(q.x, off + j, psi[affine_slot(tc, j)] / den);
    }
    validate_point(b, q);
    return q;
}

int preferred_chart(const Backend& b, const ChartPoint& p) {
    validate_point(b, p);
    std::vector<int> cs(size_t(b.factors()), 0);
    for (int f = 0; f < b.factors(); ++f) {
        if (b.factor(f).kind != Factor::Kind::Projective) continue;
        const CVec psi = factor_lift(b, p, f);
        int best = 0;
        double bm = std::abs(psi[0]);
        for (int s = 1; s < psi.size(); ++s)
            if (std::abs(psi[s]) > bm) {
                bm = std::abs(psi[s]);
                best = s;
            }
        cs[size_t(f)] = best;
    }
    return b.join_chart(cs);
}

bool needs_chart_switch(const Backend& b, const ChartPoint& p) {
    for (int f = 0; f < b.factors(); ++f) {
        if (b.factor(f).kind != Factor::Kind::Projective) continue;
        const int off = b.factor_offset(f);
        for (int j = 0; j < b.factor(f).n; ++j)
            if (std::abs(zcoord(p.x, off + j)) > 2.0) return true;
    }
    return false;
}

double fs_distance(const Backend& b, const ChartPoint& p, const ChartPoint& q) {
    validate_point(b, p);
    validate_point(b, q);
    if (!b.projective_only())
        throw InvalidInputError("geodesic distance requires projective factors");
    double d2 = 0.0;
    for (int f = 0; f < b.factors(); ++f) {
        const CVec a = factor_lift(b, p, f);
        const CVec c = factor_lift(b, q, f);
        const double ov = std::abs(a.dot(c)) / (a.norm() * c.norm());
        const double di = 2.0 * std::acos(std::clamp(ov, 0.0, 1.0));
        d2 += di * di;
    }
    return std::sqrt(d2);
}

ChartPoint random_point(const Backend& b, RandomStream& rs, double box) {
    const int chart = std::min(int(rs.next_uniform() * b.charts()), b.charts() - 1);
    Vec x(b.real_dim());
    for (int j = 0; j < b.complex_dim(); ++j) {
        const double r = box * std::sqrt(rs.next_uniform());
        const double th = 2.0 * M_PI * rs.next_uniform();
        set_zcoord(x, j, std::polar(r, th));
    }
    return make_point(b, chart, std::move(x));
}

CurvatureExtremes curvature_extremes(const Backend& b, const GradientFn& grad_h,
                                     int samples, uint64_t seed) {
    // Products of projective factors have K = sum(V_i^2)/(sum V_i)^2 over the
    // factor dispersions, so the attainable range is exactly [1/m, 1].
    if (b.projective_only()) return {1.0 / b.factors(), 1.0, true, 0};
    if (samples < 1) throw InvalidInputError("sample count must be positive");
    RandomStream rs(seed, kStreamAux);
    CurvatureExtremes ex;
    ex.kappa = std::numeric_limits<double>::infinity();
    ex.lambda = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < samples; ++k) {
        const ChartPoint p = random_point(b, rs, 3.0);
        const Vec xi = grad_h(b, p);
        // Skip near-critical states: the gradient plane degenerates there.
        double vh = 0.0;
        for (int f = 0; f < b.factors(); ++f) {
            const int o = 2 * b.factor_offset(f);
            const int df = 2 * b.factor(f).n;
            const Vec xf = xi.segment(o, df);
            vh += xf.dot(factor_metric(b, p, f).g.ldlt().solve(xf).eval());
        }
        if (vh < 1e-10) continue;
        const double kk = holomorphic_sectional(b, p, xi);
        ex.kappa = std::min(ex.kappa, kk);
        ex.lambda = std::max(ex.lambda, kk);
        ++ex.used_samples;
    }
    if (ex.used_samples == 0)
        throw EstimationError("no usable samples for curvature extremes");
    return ex;
}

} // namespace kreduce
