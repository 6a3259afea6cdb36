#pragma once

// Kaehler state-manifold backends and their tensors.
//
// Three backend families:
//   * projective(n): complex projective space with the Fubini-Study metric,
//     normalized so the holomorphic sectional curvature is exactly 1 (on one
//     complex dimension this is the unit round sphere). Closed forms for the
//     metric, connection and curvature.
//   * product(n_1,...,n_k): Riemannian product of projective factors.
//   * potential(n, form): a single global chart on C^n carrying the metric of
//     a Kaehler potential, differentiated with nested forward-mode duals.
//
// Coordinates are real and interleaved, (x_1, y_1, ..., x_n, y_n) with
// z_j = x_j + i y_j. In every chart the complex structure J acts per pair as
// (v_x, v_y) -> (v_y, -v_x); the symplectic form is omega_ab = g_ac J^c_b,
// and the Hamiltonian flow 2 omega^{ab} d_b H of an operator expectation then
// reproduces its unitary evolution.
//
// A projective factor of dimension n carries n+1 affine charts. Chart c fixes
// homogeneous slot c to 1; affine coordinate j occupies slot j for j < c and
// slot j+1 otherwise. The active chart keeps every |z_j| <= 2, switching to
// the chart of the largest homogeneous component when that fails.

#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kreduce/dual.hpp"
#include "kreduce/errors.hpp"
#include "kreduce/rng.hpp"
#include "kreduce/tensor.hpp"

namespace kreduce {

enum class PotentialForm { Flat, FubiniStudy, Quartic, Concave };

struct PotentialSpec {
    PotentialForm form = PotentialForm::Flat;
    double coeff = 0.0;  // quartic strength; unused by the other forms
};

// Kaehler potential evaluated at interleaved real coordinates. Generic in the
// scalar so dual numbers can flow through for derivatives of any order.
template <class S>
S potential_value(const PotentialSpec& spec, const std::vector<S>& xy) {
    S s2{};
    for (size_t j = 0; j + 1 < xy.size(); j += 2)
        s2 += xy[j] * xy[j] + xy[j + 1] * xy[j + 1];
    switch (spec.form) {
        case PotentialForm::Flat: return s2;
        case PotentialForm::FubiniStudy: return 2.0 * log1p(s2);
        case PotentialForm::Quartic: return s2 + spec.coeff * (s2 * s2);
        case PotentialForm::Concave: return S(0.0) - s2;
    }
    return S(0.0);
}

struct Factor {
    enum class Kind { Projective, Potential };
    Kind kind = Kind::Projective;
    int n = 1;  // complex dimension
    PotentialSpec pot;

    int charts() const { return kind == Kind::Projective ? n + 1 : 1; }
};

class Backend {
  public:
    static Backend projective(int n);
    static Backend product(const std::vector<int>& dims);
    static Backend potential(int n, PotentialSpec spec);

    const std::string& id() const { return id_; }
    int factors() const { return int(fac_.size()); }
    const Factor& factor(int i) const { return fac_[size_t(i)]; }
    int complex_dim() const { return n_total_; }
    int real_dim() const { return 2 * n_total_; }
    int charts() const { return charts_total_; }
    bool projective_only() const;

    // First complex coordinate of factor i inside the interleaved layout.
    int factor_offset(int i) const { return off_[size_t(i)]; }

    std::vector<int> split_chart(int chart) const;
    int join_chart(const std::vector<int>& per_factor) const;

  private:
    std::vector<Factor> fac_;
    std::vector<int> off_;
    int n_total_ = 0;
    int charts_total_ = 1;
    std::string id_;
};

struct ChartPoint {
    std::string backend_id;
    int chart = 0;
    Vec x;  // interleaved real coordinates, size 2n
};

struct MetricTensors {
    Mat g;      // metric, both indices down
    Mat omega;  // symplectic form, both indices down
    Mat jmat;   // complex structure J^a_b
};

inline std::complex<double> zcoord(const Vec& x, int j) {
    return {x[2 * j], x[2 * j + 1]};
}
inline void set_zcoord(Vec& x, int j, std::complex<double> z) {
    x[2 * j] = z.real();
    x[2 * j + 1] = z.imag();
}

// Homogeneous slot occupied by affine coordinate j in chart c.
inline int affine_slot(int chart, int j) { return j < chart ? j : j + 1; }

ChartPoint make_point(const Backend& b, int chart, Vec x);
void validate_point(const Backend& b, const ChartPoint& p);

// Homogeneous representative of one projective factor (size n_i + 1).
CVec factor_lift(const Backend& b, const ChartPoint& p, int factor);

MetricTensors metric_at(const Backend& b, const ChartPoint& p);
Tensor3 christoffels_at(const Backend& b, const ChartPoint& p);
Tensor4 riemann_at(const Backend& b, const ChartPoint& p);

// Factor-local tensors (dimension 2 n_i), used to assemble the global ones
// and to keep curvature contractions cheap inside sampling loops.
MetricTensors factor_metric(const Backend& b, const ChartPoint& p, int factor);
Tensor3 factor_christoffels(const Backend& b, const ChartPoint& p, int factor);
Tensor4 factor_riemann(const Backend& b, const ChartPoint& p, int factor);

// Sectional curvature of the plane spanned by the metric-raised gradient of H
// and its J-rotation; grad_h is the cotangent gradient at p. For an operator
// expectation this controls the decay rate of its dispersion under the
// reduction flow.
double holomorphic_sectional(const Backend& b, const ChartPoint& p, const Vec& grad_h);

// Mixed (bisectional) analogue driving the decay of one observable's
// dispersion under reduction along another.
double bisectional(const Backend& b, const ChartPoint& p, const Vec& grad_f, const Vec& grad_h);

ChartPoint chart_transition(const Backend& b, const ChartPoint& p, int target_chart);
int preferred_chart(const Backend& b, const ChartPoint& p);
bool needs_chart_switch(const Backend& b, const ChartPoint& p);

// Geodesic distance; projective factors only.
double fs_distance(const Backend& b, const ChartPoint& p, const ChartPoint& q);

// Uniform draw over charts and per-coordinate affine disks |z_j| <= box.
ChartPoint random_point(const Backend& b, RandomStream& rs, double box);

struct CurvatureExtremes {
    double kappa = 0.0;   // inf of sampled sectional curvature
    double lambda = 0.0;  // sup
    bool exact = false;   // true when returned from the closed form
    int used_samples = 0;
};

using GradientFn = std::function<Vec(const Backend&, const ChartPoint&)>;

// Monte Carlo inf/sup of the sectional curvature seen by H's gradient over
// random non-critical points; exact (1,1) for a single projective factor.
CurvatureExtremes curvature_extremes(const Backend& b, const GradientFn& grad_h,
                                     int samples, uint64_t seed);

} // namespace kreduce
