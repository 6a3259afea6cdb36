#pragma once

// Forward-mode dual numbers, nestable to arbitrary order. Dual<double> gives
// first derivatives, Dual<Dual<double>> second, and so on. Used for the
// potential-backend geometry (metric through fourth derivatives of the
// Kaehler potential) and as an independent derivative oracle in tests.

#include <cmath>
#include <cstddef>
#include <vector>

namespace kreduce {

template <class T>
struct Dual {
    T v{};  // value
    T d{};  // derivative along the seeded direction

    Dual() = default;
    Dual(double x) : v(x), d() {}  // constants carry zero derivative
    Dual(T v_, T d_) : v(std::move(v_)), d(std::move(d_)) {}

    Dual& operator+=(const Dual& o) { v += o.v; d += o.d; return *this; }
    Dual& operator-=(const Dual& o) { v -= o.v; d -= o.d; return *this; }
    Dual& operator*=(const Dual& o) { d = d * o.v + v * o.d; v = v * o.v; return *this; }
};

template <class T> Dual<T> operator+(Dual<T> a, const Dual<T>& b) { return a += b; }
template <class T> Dual<T> operator-(Dual<T> a, const Dual<T>& b) { return a -= b; }
template <class T> Dual<T> operator-(const Dual<T>& a) { return {T() - a.v, T() - a.d}; }
template <class T> Dual<T> operator*(Dual<T> a, const Dual<T>& b) { return a *= b; }
template <class T> Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
    T inv = T(1.0) / b.v;
    T val = a.v * inv;
    return {val, (a.d - val * b.d) * inv};
}

template <class T> Dual<T> operator+(double a, Dual<T> b) { return Dual<T>(a) + b; }
template <class T> Dual<T> operator+(Dual<T> a, double b) { return a + Dual<T>(b); }
template <class T> Dual<T> operator-(double a, const Dual<T>& b) { return Dual<T>(a) - b; }
template <class T> Dual<T> operator-(Dual<T> a, double b) { return a - Dual<T>(b); }
template <class T> Dual<T> operator*(double a, Dual<T> b) { return Dual<T>(a) * b; }
template <class T> Dual<T> operator*(Dual<T> a, double b) { return a * Dual<T>(b); }
template <class T> Dual<T> operator/(double a, const Dual<T>& b) { return Dual<T>(a) / b; }
template <class T> Dual<T> operator/(Dual<T> a, double b) { return a / Dual<T>(b); }

using std::exp;
using std::log;
using std::log1p;
using std::sqrt;

template <class T> Dual<T> exp(const Dual<T>& a) {
    T e = exp(a.v);
    return {e, a.d * e};
}
template <class T> Dual<T> log(const Dual<T>& a) { return {log(a.v), a.d / a.v}; }
template <class T> Dual<T> log1p(const Dual<T>& a) { return {log1p(a.v), a.d / (T(1.0) + a.v)}; }
template <class T> Dual<T> sqrt(const Dual<T>& a) {
    T s = sqrt(a.v);
    return {s, a.d / (2.0 * s)};
}

// Plain value buried under any nesting depth.
inline double scalar_value(double x) { return x; }
template <class T> double scalar_value(const Dual<T>& a) { return scalar_value(a.v); }

inline bool is_finite_deep(double x) { return std::isfinite(x); }
template <class T> bool is_finite_deep(const Dual<T>& a) {
    return is_finite_deep(a.v) && is_finite_deep(a.d);
}

// Complex arithmetic over a generic real scalar. std::complex is only
// specified for the builtin floating types, so duals get their own.
template <class T>
struct Cplx {
    T re{}, im{};

    Cplx() = default;
    Cplx(T r) : re(std::move(r)), im() {}
    Cplx(T r, T i) : re(std::move(r)), im(std::move(i)) {}

    Cplx& operator+=(const Cplx& o) { re += o.re; im += o.im; return *this; }
    Cplx& operator-=(const Cplx& o) { re -= o.re; im -= o.im; return *this; }
};

template <class T> Cplx<T> operator+(Cplx<T> a, const Cplx<T>& b) { return a += b; }
template <class T> Cplx<T> operator-(Cplx<T> a, const Cplx<T>& b) { return a -= b; }
template <class T> Cplx<T> operator*(const Cplx<T>& a, const Cplx<T>& b) {
    return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
}
template <class T> Cplx<T> operator*(const T& s, Cplx<T> a) { a.re = s * a.re; a.im = s * a.im; return a; }
template <class T> Cplx<T> conj(Cplx<T> a) { a.im = T() - a.im; return a; }
template <class T> T norm2(const Cplx<T>& a) { return a.re * a.re + a.im * a.im; }

using D1 = Dual<double>;
using D2 = Dual<D1>;
using D3 = Dual<D2>;
using D4 = Dual<D3>;

namespace detail {

inline double seed_bit(int i, int dir) { return i == dir ? 1.0 : 0.0; }

inline D1 seed1(double x, int i, int a) { return {x, seed_bit(i, a)}; }
inline D2 seed2(double x, int i, int a, int b) {
    return {D1{x, seed_bit(i, b)}, D1{seed_bit(i, a), 0.0}};
}
inline D3 seed3(double x, int i, int a, int b, int c) {
    return {seed2(x, i, b, c), D2{D1{seed_bit(i, a), 0.0}, D1{0.0, 0.0}}};
}
inline D4 seed4(double x, int i, int a, int b, int c, int d) {
    return {seed3(x, i, b, c, d),
            D3{D2{D1{seed_bit(i, a), 0.0}, D1{0.0, 0.0}}, D2{}}};
}

} // namespace detail

// Mixed partial derivatives of a scalar functor f taking std::vector<S>.
// The functor must be callable at every nesting depth it is asked for.

template <class F>
double partial1(const F& f, const std::vector<double>& x, int a) {
    std::vector<D1> xs(x.size());
    for (size_t i = 0; i < x.size(); ++i) xs[i] = detail::seed1(x[i], int(i), a);
    return f(xs).d;
}

template <class F>
double partial2(const F& f, const std::vector<double>& x, int a, int b) {
    std::vector<D2> xs(x.size());
    for (size_t i = 0; i < x.size(); ++i) xs[i] = detail::seed2(x[i], int(i), a, b);
    return f(xs).d.d;
}

template <class F>
double partial3(const F& f, const std::vector<double>& x, int a, int b, int c) {
    std::vector<D3> xs(x.size());
    for (size_t i = 0; i < x.size(); ++i) xs[i] = detail::seed3(x[i], int(i), a, b, c);
    return f(xs).d.d.d;
}

template <class F>
double partial4(const F& f, const std::vector<double>& x, int a, int b, int c, int d) {
    std::vector<D4> xs(x.size());
    for (size_t i = 0; i < x.size(); ++i) xs[i] = detail::seed4(x[i], int(i), a, b, c, d);
    return f(xs).d.d.d.d;
}

} // namespace kreduce
