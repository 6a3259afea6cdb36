#include "kreduce/observables.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace kreduce {

namespace {

void require_hermitian(const CMat& op) {
    if (!op.allFinite()) throw InvalidInputError("operator entries must be finite");
    if (op.rows() != op.cols()) throw InvalidInputError("operator must be square");
    const double scale = std::max(1.0, op.cwiseAbs().maxCoeff());
    if ((op - op.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw InvalidInputError("operator is not Hermitian");
}

// Per-factor expectation data at the homogeneous lift: value, Wirtinger
// gradient w_j = dF/dzbar_j, and the same for the squared operator.
struct FactorEval {
    double fhat = 0.0, f2hat = 0.0;
    CVec w, w2;
    CVec psi;
    double d = 1.0;
    std::vector<int> slots;
};

FactorEval eval_factor(const Backend& b, const Observable& obs, const ChartPoint& p, int f) {
    FactorEval e;
    e.psi = factor_lift(b, p, f);
    e.d = e.psi.squaredNorm();
    const int n = b.factor(f).n;
    const int c = b.split_chart(p.chart)[size_t(f)];
    e.slots.resize(size_t(n));
    for (int j = 0; j < n; ++j) e.slots[size_t(j)] = affine_slot(c, j);

    const CMat& op = obs.factor_op(f);
    const CMat& op2 = obs.factor_op_sq(f);
    const CVec fp = op * e.psi;
    const CVec f2p = op2 * e.psi;
    e.fhat = e.psi.dot(fp).real() / e.d;
    e.f2hat = e.psi.dot(f2p).real() / e.d;
    e.w.resize(n);
    e.w2.resize(n);
    for (int j = 0; j < n; ++j) {
        const int s = e.slots[size_t(j)];
        e.w[j] = (fp[s] - e.fhat * e.psi[s]) / e.d;
        e.w2[j] = (f2p[s] - e.f2hat * e.psi[s]) / e.d;
    }
    return e;
}

void put_gradient(const CVec& w, int off, Vec& out) {
    for (int j = 0; j < w.size(); ++j) {
        out[2 * (off + j)] = 2.0 * w[j].real();
        out[2 * (off + j) + 1] = 2.0 * w[j].imag();
    }
}

// Richardson-extrapolated central difference of a scalar field.
double fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, int a, double h) {
    auto diff = [&](double step) {
        Vec xp = x, xm = x;
        xp[a] += step;
        xm[a] -= step;
        return (f(xp) - f(xm)) / (2.0 * step);
    };
    const double d1 = diff(h);
    const double d2 = diff(h / 2.0);
    return (4.0 * d2 - d1) / 3.0;
}

} // namespace

Spectrum spectral_decomposition(const CMat& op) {
    require_hermitian(op);
    const int n = int(op.rows());
    Eigen::SelfAdjointEigenSolver<CMat> es((op + op.adjoint()) / 2.0);
    if (es.info() != Eigen::Success) throw EstimationError("eigendecomposition failed");
    const Vec ev = es.eigenvalues();
    const CMat vecs = es.eigenvectors();
    const double gap = 1e-9 * std::max(op.norm(), 1e-300);

    Spectrum s;
    std::vector<double> vals;
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && ev[j + 1] - ev[j] < gap) ++j;
        CMat proj = CMat::Zero(n, n);
        double sum = 0.0;
        for (int k = i; k <= j; ++k) {
            proj += vecs.col(k) * vecs.col(k).adjoint();
            sum += ev[k];
        }
        vals.push_back(sum / (j - i + 1));
        s.projectors.push_back(proj);
        s.multiplicity.push_back(j - i + 1);
        if (j > i) s.degenerate = true;
        i = j + 1;
    }
    s.eigenvalues = Eigen::Map<Vec>(vals.data(), long(vals.size()));
    return s;
}

Observable Observable::op_expectation(const Backend& b, const CMat& op) {
    if (b.factors() != 1 || b.factor(0).kind != Factor::Kind::Projective)
        throw InvalidInputError("operator expectation requires a single projective factor");
    return separable_sum(b, {op});
}

Observable Observable::separable_sum(const Backend& b, const std::vector<CMat>& ops) {
    if (!b.projective_only())
        throw InvalidInputError("separable sums require projective factors");
    if (int(ops.size()) != b.factors())
        throw InvalidInputError("need exactly one operator per factor");
    Observable o;
    o.form_ = Form::Operator;
    o.backend_ = b;
    o.scale_ = 0.0;
    for (int i = 0; i < b.factors(); ++i) {
        const CMat& op = ops[size_t(i)];
        require_hermitian(op);
        if (op.rows() != b.factor(i).n + 1)
            throw InvalidInputError("operator dimension must be factor dimension + 1");
        o.ops_.push_back(op);
        o.ops_sq_.push_back(op * op);
        o.scale_ = std::max(o.scale_, op.norm());
    }
    return o;
}

Observable Observable::quadratic(const Backend& b, double c0, const Vec& c, const Vec& p,
                                 const Vec& q) {
    if (b.factors() != 1 || b.factor(0).kind != Factor::Kind::Potential)
        throw InvalidInputError("quadratic observables require a potential backend");
    const int n = b.complex_dim();
    if (c.size() != n || p.size() != n || q.size() != n)
        throw InvalidInputError("coefficient vectors must have one entry per coordinate");
    if (!std::isfinite(c0) || !c.allFinite() || !p.allFinite() || !q.allFinite())
        throw InvalidInputError("coefficients must be finite");
    Observable o;
    o.form_ = Form::Quadratic;
    o.backend_ = b;
    o.c0_ = c0;
    o.qc_ = c;
    o.qp_ = p;
    o.qq_ = q;
    o.scale_ = std::max({std::abs(c0), c.cwiseAbs().maxCoeff(), p.cwiseAbs().maxCoeff(),
                         q.cwiseAbs().maxCoeff(), 1e-12});
    return o;
}

Observable Observable::commutator(const Observable& f, const Observable& g) {
    if (f.form_ != Form::Operator || g.form_ != Form::Operator)
        throw InvalidInputError("commutator requires operator-form observables");
    if (f.backend_.id() != g.backend_.id())
        throw InvalidInputError("commutator operands live on different backends");
    std::vector<CMat> ops;
    for (size_t i = 0; i < f.ops_.size(); ++i) {
        const CMat& a = f.ops_[i];
        const CMat& c = g.ops_[i];
        ops.push_back(std::complex<double>(0.0, -1.0) * (a * c - c * a));
    }
    return separable_sum(f.backend_, ops);
}

template <class S>
S Observable::quad_value(const std::vector<S>& xy) const {
    S acc(c0_);
    for (int i = 0; i < qc_.size(); ++i) {
        const S& x = xy[size_t(2 * i)];
        const S& y = xy[size_t(2 * i + 1)];
        acc += qc_[i] * (x * x + y * y) + qp_[i] * x + qq_[i] * y;
    }
    return acc;
}

double Observable::value(const ChartPoint& p) const {
    validate_point(backend_, p);
    if (form_ == Form::Quadratic) {
        std::vector<double> xy(p.x.data(), p.x.data() + p.x.size());
        return quad_value(xy);
    }
    double v = 0.0;
    for (int f = 0; f < backend_.factors(); ++f) v += eval_factor(backend_, *this, p, f).fhat;
    return v;
}

Vec Observable::gradient(const ChartPoint& p) const {
    validate_point(backend_, p);
    Vec out = Vec::Zero(backend_.real_dim());
    if (form_ == Form::Quadratic) {
        std::vector<double> xy(p.x.data(), p.x.data() + p.x.size());
        auto f = [this](const auto& v) { return this->quad_value(v); };
        for (int a = 0; a < out.size(); ++a) out[a] = partial1(f, xy, a);
        if (!out.allFinite()) throw DifferentiationError("non-finite gradient");
        return out;
    }
    for (int f = 0; f < backend_.factors(); ++f)
        put_gradient(eval_factor(backend_, *this, p, f).w, backend_.factor_offset(f), out);
    return out;
}

Mat Observable::hessian(const ChartPoint& p) const {
    validate_point(backend_, p);
    const int d = backend_.real_dim();
    Mat out = Mat::Zero(d, d);
    if (form_ == Form::Quadratic) {
        std::vector<double> xy(p.x.data(), p.x.data() + p.x.size());
        auto f = [this](const auto& v) { return this->quad_value(v); };
        for (int a = 0; a < d; ++a)
            for (int b = a; b < d; ++b) {
                out(a, b) = partial2(f, xy, a, b);
                out(b, a) = out(a, b);
            }
        if (!out.allFinite()) throw DifferentiationError("non-finite Hessian");
        return out;
    }
    for (int f = 0; f < backend_.factors(); ++f) {
        const FactorEval e = eval_factor(backend_, *this, p, f);
        const CMat& op = ops_[size_t(f)];
        const int n = backend_.factor(f).n;
        const int off = backend_.factor_offset(f);
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                const int sj = e.slots[size_t(j)], sk = e.slots[size_t(k)];
                // B = d^2 F / dzbar_j dz_k, C = d^2 F / dzbar_j dzbar_k
                std::complex<double> bb = op(sj, sk);
                if (sj == sk) bb -= e.fhat;
                bb -= std::conj(e.w[k]) * e.psi[sj] + e.w[j] * std::conj(e.psi[sk]);
                bb /= e.d;
                const std::complex<double> cc =
                    -(e.w[k] * e.psi[sj] + e.w[j] * e.psi[sk]) / e.d;
                const int a = 2 * (off + j), b = 2 * (off + k);
                out(a, b) = 2.0 * cc.real() + 2.0 * bb.real();
                out(a + 1, b + 1) = -2.0 * cc.real() + 2.0 * bb.real();
                out(a, b + 1) = -2.0 * bb.imag() + 2.0 * cc.imag();
                out(a + 1, b) = 2.0 * bb.imag() + 2.0 * cc.imag();
            }
    }
    return out;
}

Mat Observable::covariant_hessian(const ChartPoint& p) const {
    const Mat h = hessian(p);
    const Vec xi = gradient(p);
    const Tensor3 gam = christoffels_at(backend_, p);
    const int d = backend_.real_dim();
    Mat out = h;
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            double s = 0.0;
            for (int c = 0; c < d; ++c) s += gam(c, a, b) * xi[c];
            out(a, b) -= s;
        }
    return out;
}

double Observable::dispersion(const ChartPoint& p) const {
    validate_point(backend_, p);
    const Vec xi = gradient(p);
    double v = 0.0;
    for (int f = 0; f < backend_.factors(); ++f) {
        const int o = 2 * backend_.factor_offset(f);
        const int df = 2 * backend_.factor(f).n;
        const Vec xf = xi.segment(o, df);
        v += xf.dot(factor_metric(backend_, p, f).g.ldlt().solve(xf).eval());
    }
    return v;
}

Vec Observable::dispersion_gradient(const ChartPoint& p) const {
    validate_point(backend_, p);
    if (form_ == Form::Quadratic) {
        auto f = [this, &p](const Vec& x) {
            ChartPoint q{p.backend_id, p.chart, x};
            return this->dispersion(q);
        };
        Vec out(backend_.real_dim());
        for (int a = 0; a < out.size(); ++a) out[a] = fd_gradient(f, p.x, a, 1e-4);
        if (!out.allFinite()) throw DifferentiationError("non-finite dispersion gradient");
        return out;
    }
    // grad V = grad <F^2> - 2 <F> grad <F>, per factor.
    Vec out = Vec::Zero(backend_.real_dim());
    for (int f = 0; f < backend_.factors(); ++f) {
        const FactorEval e = eval_factor(backend_, *this, p, f);
        const CVec wv = e.w2 - 2.0 * e.fhat * e.w;
        put_gradient(wv, backend_.factor_offset(f), out);
    }
    return out;
}

double Observable::matrix_variance(const ChartPoint& p) const {
    validate_point(backend_, p);
    if (form_ != Form::Operator)
        throw InvalidInputError("matrix variance requires an operator form");
    double v = 0.0;
    for (int f = 0; f < backend_.factors(); ++f) {
        const FactorEval e = eval_factor(backend_, *this, p, f);
        v += e.f2hat - e.fhat * e.fhat;
    }
    return v;
}

double poisson_bracket(const Observable& f, const Observable& g, const ChartPoint& p) {
    if (f.backend().id() != g.backend().id())
        throw InvalidInputError("bracket operands live on different backends");
    const Backend& b = f.backend();
    const Vec xf = f.gradient(p);
    const Vec xg = g.gradient(p);
    double s = 0.0;
    for (int i = 0; i < b.factors(); ++i) {
        const int o = 2 * b.factor_offset(i);
        const int d = 2 * b.factor(i).n;
        const MetricTensors t = factor_metric(b, p, i);
        const Vec ug = t.g.ldlt().solve(xg.segment(o, d));
        s += xf.segment(o, d).dot(t.jmat * ug);
    }
    return 2.0 * s;
}

double killing_residual_raw(const Backend& b, const ChartPoint& p, const Vec& grad,
                            const Mat& hess) {
    const MetricTensors t = metric_at(b, p);
    const Tensor3 gam = christoffels_at(b, p);
    const int d = b.real_dim();
    const Vec z = t.jmat * grad;  // lowered flow field, Z_b = J^b_c grad_c
    Mat m = hess * t.jmat.transpose();
    for (int a = 0; a < d; ++a)
        for (int bb = 0; bb < d; ++bb) {
            double s = 0.0;
            for (int c = 0; c < d; ++c) s += gam(c, a, bb) * z[c];
            m(a, bb) -= s;
        }
    return (0.5 * (m + m.transpose())).norm();
}

double killing_residual(const Observable& obs, const ChartPoint& p) {
    return killing_residual_raw(obs.backend(), p, obs.gradient(p), obs.hessian(p));
}

namespace {

// omega^{ab} grad_a F grad_b G = half the Poisson bracket.
double half_bracket(const Observable& f, const Observable& g, const ChartPoint& p) {
    return 0.5 * poisson_bracket(f, g, p);
}

bool commutes(const Observable& f, const Observable& h) {
    if (f.form() == Observable::Form::Operator && h.form() == Observable::Form::Operator) {
        for (int i = 0; i < f.backend().factors(); ++i) {
            const CMat& a = f.factor_op(i);
            const CMat& b = h.factor_op(i);
            const double scale = 1.0 + a.norm() * b.norm();
            if ((a * b - b * a).norm() > 1e-10 * scale) return false;
        }
        return true;
    }
    return false;
}

} // namespace

ResidualReport identity_residuals(const Observable& f, const Observable& g,
                                  const Observable& h, const ChartPoint& p) {
    const Backend& b = f.backend();
    if (g.backend().id() != b.id() || h.backend().id() != b.id())
        throw InvalidInputError("identity check needs observables on one backend");
    validate_point(b, p);
    const int d = b.real_dim();
    const MetricTensors t = metric_at(b, p);
    Eigen::LDLT<Mat> met(t.g);

    ResidualReport rep;

    // (a) grad_b F grad^b grad^a G - grad_b G grad^b grad^a F
    //     = w^{ab} grad_b (w^{cd} grad_c F grad_d G)
    {
        const Vec xf = f.gradient(p);
        const Vec xg = g.gradient(p);
        const Mat sf = f.covariant_hessian(p);
        const Mat sg = g.covariant_hessian(p);
        const Vec uf = met.solve(xf);
        const Vec ug = met.solve(xg);
        const Vec t1 = met.solve(sg * uf);
        const Vec t2 = met.solve(sf * ug);
        Vec xs(d);
        if (f.form() == Observable::Form::Operator && g.form() == Observable::Form::Operator) {
            xs = 0.5 * Observable::commutator(f, g).gradient(p);
        } else {
            auto sfun = [&](const Vec& x) {
                ChartPoint q{p.backend_id, p.chart, x};
                return half_bracket(f, g, q);
            };
            for (int a = 0; a < d; ++a) xs[a] = fd_gradient(sfun, p.x, a, 1e-5);
        }
        const Vec t3 = t.jmat * met.solve(xs);
        rep.adler_horwitz = (t1 - t2 - t3).cwiseAbs().maxCoeff();
    }

    // (b) w^{ab} grad_a H grad_b V^F, defined when F and H commute
    rep.lemma3_applicable = commutes(f, h);
    if (rep.lemma3_applicable) {
        const Vec xh = h.gradient(p);
        const Vec xv = f.dispersion_gradient(p);
        rep.lemma3 = std::abs(xh.dot(t.jmat * met.solve(xv)));
    }

    // (c) The third covariant derivative of an observable is pure curvature.
    // With Z = J grad F Killing, the Ricci identity plus the Killing equation
    // and first Bianchi give grad_a grad_b Z_c = R_bca^e u_e for u = g^{-1}Z,
    // in the slot and sign convention fixed in geometry.cpp (derivative pair
    // first, R_1212 = -lambda^2 on CP^1). Undoing the J on the last slot of Z
    // leaves T_abc = -J_c^p R_bpa^e u_e with T the third derivative of F.
    {
        const Vec xi = f.gradient(p);
        const Mat s0 = f.covariant_hessian(p);
        const Tensor3 gam = christoffels_at(b, p);
        const Tensor4 r = riemann_at(b, p);
        const Mat ginv = t.g.inverse();

        const double step = 1e-4;
        std::vector<Mat> ds(static_cast<size_t>(d));
        for (int a = 0; a < d; ++a) {
            ChartPoint pp = p, pm = p;
            pp.x[a] += step;
            pm.x[a] -= step;
            ds[size_t(a)] = (f.covariant_hessian(pp) - f.covariant_hessian(pm)) / (2.0 * step);
        }

        const Vec u = ginv * (t.jmat * xi);
        double worst = 0.0;
        for (int a = 0; a < d; ++a)
            for (int bb = 0; bb < d; ++bb)
                for (int c = 0; c < d; ++c) {
                    double third = ds[size_t(a)](bb, c);
                    for (int e = 0; e < d; ++e)
                        third -= gam(e, a, bb) * s0(e, c) + gam(e, a, c) * s0(bb, e);
                    double corr = 0.0;
                    for (int cc = 0; cc < d; ++cc) {
                        if (t.jmat(c, cc) == 0.0) continue;
                        double rz = 0.0;
                        for (int e = 0; e < d; ++e) rz += r(bb, cc, a, e) * u[e];
                        corr += t.jmat(c, cc) * rz;
                    }
                    worst = std::max(worst, std::abs(third + corr));
                }
        rep.lemma5 = worst;
    }

    // (d) V^F V^G - (w^{ab} grad_a F grad_b G)^2 >= 0
    {
        const double s = half_bracket(f, g, p);
        rep.heisenberg_slack = f.dispersion(p) * g.dispersion(p) - s * s;
    }
    return rep;
}

CMat random_hermitian(int dim, RandomStream& rs, double scale) {
    CMat m(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
            m(i, j) = std::complex<double>(rs.next_normal(), rs.next_normal());
    CMat h = 0.5 * (m + m.adjoint()) * scale;
    return h;
}

GradientFn gradient_fn(const Observable& obs) {
    return [obs](const Backend&, const ChartPoint& p) { return obs.gradient(p); };
}

} // namespace kreduce
