#pragma once

// Forward-mode dual numbers. Nesting Dual<Dual<double>> gives exact second
// derivatives, Dual<Dual<Dual<double>>> third derivatives. Used for the
// analytic log-densities where hand-written higher derivatives would be
// error prone.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <type_traits>
#include <vector>

namespace dps {

template <typename T>
struct Dual {
    T v{};
    T d{};

    Dual() = default;
    Dual(double c) : v(c), d(0.0) {}  // NOLINT(google-explicit-constructor)
    Dual(T value, T tangent) : v(value), d(tangent) {}
};

template <typename T>
struct is_dual : std::false_type {};
template <typename T>
struct is_dual<Dual<T>> : std::true_type {};

inline double primal(double x) { return x; }
template <typename T>
double primal(const Dual<T>& x) {
    return primal(x.v);
}

template <typename T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
    return {a.v + b.v, a.d + b.d};
}
template <typename T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
    return {a.v - b.v, a.d - b.d};
}
template <typename T>
Dual<T> operator-(const Dual<T>& a) {
    return {-a.v, -a.d};
}
template <typename T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
    return {a.v * b.v, a.d * b.v + a.v * b.d};
}
template <typename T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
    T inv = T(1.0) / b.v;
    return {a.v * inv, (a.d - a.v * inv * b.d) * inv};
}

template <typename T>
Dual<T> operator+(const Dual<T>& a, double c) {
    return {a.v + c, a.d};
}
template <typename T>
Dual<T> operator+(double c, const Dual<T>& a) {
    return {c + a.v, a.d};
}
template <typename T>
Dual<T> operator-(const Dual<T>& a, double c) {
    return {a.v - c, a.d};
}
template <typename T>
Dual<T> operator-(double c, const Dual<T>& a) {
    return {c - a.v, -a.d};
}
template <typename T>
Dual<T> operator*(const Dual<T>& a, double c) {
    return {a.v * c, a.d * c};
}
template <typename T>
Dual<T> operator*(double c, const Dual<T>& a) {
    return {c * a.v, c * a.d};
}
template <typename T>
Dual<T> operator/(const Dual<T>& a, double c) {
    return {a.v / c, a.d / c};
}
template <typename T>
Dual<T> operator/(double c, const Dual<T>& a) {
    return Dual<T>(c) / a;
}

template <typename T>
Dual<T>& operator+=(Dual<T>& a, const Dual<T>& b) {
    a = a + b;
    return a;
}
template <typename T>
Dual<T>& operator-=(Dual<T>& a, const Dual<T>& b) {
    a = a - b;
    return a;
}
template <typename T>
Dual<T>& operator*=(Dual<T>& a, const Dual<T>& b) {
    a = a * b;
    return a;
}

using std::exp;
using std::log;
using std::sqrt;

template <typename T>
Dual<T> exp(const Dual<T>& a) {
    T e = exp(a.v);
    return {e, e * a.d};
}
template <typename T>
Dual<T> log(const Dual<T>& a) {
    return {log(a.v), a.d / a.v};
}
template <typename T>
Dual<T> sqrt(const Dual<T>& a) {
    T s = sqrt(a.v);
    return {s, a.d / (2.0 * s)};
}

template <typename S>
S square(const S& a) {
    return a * a;
}

// Stable log(sum_i exp(terms_i)); the shift uses the primal maximum so it is
// a constant for every derivative order.
template <typename S>
S log_sum_exp(const std::vector<S>& terms) {
    double shift = primal(terms.front());
    for (const S& t : terms) shift = std::max(shift, primal(t));
    S acc(0.0);
    for (const S& t : terms) acc += exp(t - shift);
    return log(acc) + shift;
}

// Exact derivatives of a scalar function f(z) written generically over its
// scalar type. f is called with a const std::vector<S>&.
namespace autodiff {

template <typename F>
double value(const F& f, const Eigen::VectorXd& z) {
    std::vector<double> zs(z.data(), z.data() + z.size());
    return f(zs);
}

// Derivative along one direction.
template <typename F>
double directional(const F& f, const Eigen::VectorXd& z, const Eigen::VectorXd& v) {
    using D = Dual<double>;
    std::vector<D> zs(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) zs[i] = D(z[i], v[i]);
    return f(zs).d;
}

template <typename F>
Eigen::VectorXd gradient(const F& f, const Eigen::VectorXd& z) {
    Eigen::VectorXd g(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        g[i] = directional(f, z, Eigen::VectorXd::Unit(z.size(), i));
    }
    return g;
}

// v^T H w
template <typename F>
double second_directional(const F& f, const Eigen::VectorXd& z, const Eigen::VectorXd& v,
                          const Eigen::VectorXd& w) {
    using D1 = Dual<double>;
    using D2 = Dual<D1>;
    std::vector<D2> zs(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) zs[i] = D2(D1(z[i], w[i]), D1(v[i], 0.0));
    return f(zs).d.d;
}

template <typename F>
Eigen::MatrixXd hessian(const F& f, const Eigen::VectorXd& z) {
    const Eigen::Index n = z.size();
    Eigen::MatrixXd h(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            h(i, j) = second_directional(f, z, Eigen::VectorXd::Unit(n, i), Eigen::VectorXd::Unit(n, j));
            h(j, i) = h(i, j);
        }
    }
    return h;
}

// Directional third derivative D^3 f [u, v, w].
template <typename F>
double third_directional(const F& f, const Eigen::VectorXd& z, const Eigen::VectorXd& u,
                         const Eigen::VectorXd& v, const Eigen::VectorXd& w) {
    using D1 = Dual<double>;
    using D2 = Dual<D1>;
    using D3 = Dual<D2>;
    std::vector<D3> zs(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        zs[i] = D3(D2(D1(z[i], w[i]), D1(v[i], 0.0)), D2(D1(u[i], 0.0), D1(0.0, 0.0)));
    }
    return f(zs).d.d.d;
}

}  // namespace autodiff

}  // namespace dps
