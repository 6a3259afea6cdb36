#pragma once

// Observables as real-valued expectation functions on the state manifold.
//
// Two forms:
//   * Operator: one Hermitian matrix per projective factor, the function
//     being the sum of factor Rayleigh quotients. On a single factor this is
//     the ordinary operator expectation.
//   * Quadratic: c0 + sum_i c_i |z_i|^2 + sum_i (p_i x_i + q_i y_i) on
//     potential backends, differentiated with forward-mode duals.
//
// Gradients are cotangent components in the point's chart. Observables are
// exactly the functions whose symplectic flow is a Killing field, and the
// residual of that property is exposed for verification.

#include <complex>
#include <string>
#include <vector>

#include "kreduce/geometry.hpp"

namespace kreduce {

struct Spectrum {
    Vec eigenvalues;               // distinct values, ascending
    std::vector<CMat> projectors;  // eigenspace projectors, same order
    std::vector<int> multiplicity;
    bool degenerate = false;
};

// Eigenvalues closer than 1e-9 * ||op||_F are merged into one eigenspace.
Spectrum spectral_decomposition(const CMat& op);

class Observable {
  public:
    enum class Form { Operator, Quadratic };

    static Observable op_expectation(const Backend& b, const CMat& op);
    static Observable separable_sum(const Backend& b, const std::vector<CMat>& ops);
    static Observable quadratic(const Backend& b, double c0, const Vec& c, const Vec& p,
                                const Vec& q);
    // Observable whose expectation equals the Poisson bracket of f and g.
    static Observable commutator(const Observable& f, const Observable& g);

    Form form() const { return form_; }
    const Backend& backend() const { return backend_; }
    const CMat& factor_op(int i) const { return ops_[size_t(i)]; }
    const CMat& factor_op_sq(int i) const { return ops_sq_[size_t(i)]; }

    // Magnitude heuristic used for step-size control, max factor 2-norm.
    double scale() const { return scale_; }

    double value(const ChartPoint& p) const;
    Vec gradient(const ChartPoint& p) const;
    Mat hessian(const ChartPoint& p) const;            // coordinate second partials
    Mat covariant_hessian(const ChartPoint& p) const;  // connection-corrected
    double dispersion(const ChartPoint& p) const;      // g^{ab} grad_a F grad_b F
    Vec dispersion_gradient(const ChartPoint& p) const;

    // <F^2> - <F>^2 through matrix algebra; operator form only. Used as an
    // independent check of the metric contraction.
    double matrix_variance(const ChartPoint& p) const;

  private:
    Observable() = default;
    Form form_ = Form::Operator;
    Backend backend_;
    std::vector<CMat> ops_;
    std::vector<CMat> ops_sq_;
    double scale_ = 1.0;
    // quadratic coefficients
    double c0_ = 0.0;
    Vec qc_, qp_, qq_;

    template <class S>
    S quad_value(const std::vector<S>& xy) const;
};

// 2 w^{ab} grad_a F grad_b G; equals the expectation of the matrix
// commutator observable.
double poisson_bracket(const Observable& f, const Observable& g, const ChartPoint& p);

// Frobenius norm of the symmetrized covariant derivative of the lowered flow
// field Z^a = w^{ab} grad_b F; vanishes when F generates an isometry.
double killing_residual(const Observable& obs, const ChartPoint& p);

// Same residual from explicit gradient and coordinate-Hessian fields, for
// functions that are not representable as Observable instances.
double killing_residual_raw(const Backend& b, const ChartPoint& p, const Vec& grad,
                            const Mat& hess);

struct ResidualReport {
    double adler_horwitz = 0.0;
    double lemma3 = 0.0;
    bool lemma3_applicable = false;
    double lemma5 = 0.0;
    double heisenberg_slack = 0.0;
};

// Four identity residuals evaluated at one state: (a) the Adler-Horwitz
// vector identity for the pair (F, G); (b) invariance of V^F along H's flow
// when F and H commute; (c) the third-covariant-derivative identity for F;
// (d) the uncertainty slack V^F V^G - (w^{ab} grad_a F grad_b G)^2.
ResidualReport identity_residuals(const Observable& f, const Observable& g,
                                  const Observable& h, const ChartPoint& p);

// Gaussian Hermitian matrix, entries of magnitude ~scale.
CMat random_hermitian(int dim, RandomStream& rs, double scale);

// Adapter for curvature sampling.
GradientFn gradient_fn(const Observable& obs);

} // namespace kreduce
