#pragma once

#include <array>
#include <cmath>

namespace nhrf {

// Largest supported total dimension n+m.
inline constexpr int kMaxDim = 6;

// Value plus coordinate gradient; first-order forward arithmetic.
struct Jet {
    double v = 0.0;
    std::array<double, kMaxDim> d{};

    Jet() = default;
    Jet(double value) : v(value) {}  // NOLINT: constants promote implicitly

    Jet& operator+=(const Jet& o) {
        v += o.v;
        for (int k = 0; k < kMaxDim; ++k) d[k] += o.d[k];
        return *this;
    }
    Jet& operator-=(const Jet& o) {
        v -= o.v;
        for (int k = 0; k < kMaxDim; ++k) d[k] -= o.d[k];
        return *this;
    }
    Jet& operator*=(double s) {
        v *= s;
        for (int k = 0; k < kMaxDim; ++k) d[k] *= s;
        return *this;
    }
    // this += a*b
    void fma(const Jet& a, const Jet& b) {
        v += a.v * b.v;
        for (int k = 0; k < kMaxDim; ++k) d[k] += a.d[k] * b.v + a.v * b.d[k];
    }
    void fma(double s, const Jet& a) {
        v += s * a.v;
        for (int k = 0; k < kMaxDim; ++k) d[k] += s * a.d[k];
    }
};

inline Jet operator+(Jet a, const Jet& b) { return a += b; }
inline Jet operator-(Jet a, const Jet& b) { return a -= b; }
inline Jet operator-(Jet a) { return a *= -1.0; }
inline Jet operator*(Jet a, double s) { return a *= s; }
inline Jet operator*(double s, Jet a) { return a *= s; }
inline Jet operator*(const Jet& a, const Jet& b) {
    Jet r;
    r.v = a.v * b.v;
    for (int k = 0; k < kMaxDim; ++k) r.d[k] = a.d[k] * b.v + a.v * b.d[k];
    return r;
}
inline Jet operator/(const Jet& a, const Jet& b) {
    Jet r;
    r.v = a.v / b.v;
    double ib = 1.0 / b.v;
    for (int k = 0; k < kMaxDim; ++k) r.d[k] = (a.d[k] - r.v * b.d[k]) * ib;
    return r;
}
inline Jet exp(const Jet& a) {
    Jet r;
    r.v = std::exp(a.v);
    for (int k = 0; k < kMaxDim; ++k) r.d[k] = r.v * a.d[k];
    return r;
}
inline Jet sqrt(const Jet& a) {
    Jet r;
    r.v = std::sqrt(a.v);
    for (int k = 0; k < kMaxDim; ++k) r.d[k] = a.d[k] / (2.0 * r.v);
    return r;
}

// Value, gradient and Hessian of a base field at a point.
struct Jet2 {
    double v = 0.0;
    std::array<double, kMaxDim> d{};
    std::array<std::array<double, kMaxDim>, kMaxDim> h{};

    Jet2() = default;
    Jet2(double value) : v(value) {}  // NOLINT

    // first-order jet of the value
    Jet jet() const {
        Jet r;
        r.v = v;
        r.d = d;
        return r;
    }
    // first-order jet of the partial derivative along mu
    Jet partial(int mu) const {
        Jet r;
        r.v = d[mu];
        r.d = h[mu];
        return r;
    }
};

inline Jet2 operator+(Jet2 a, const Jet2& b) {
    a.v += b.v;
    for (int i = 0; i < kMaxDim; ++i) {
        a.d[i] += b.d[i];
        for (int j = 0; j < kMaxDim; ++j) a.h[i][j] += b.h[i][j];
    }
    return a;
}
inline Jet2 operator-(Jet2 a, const Jet2& b) {
    a.v -= b.v;
    for (int i = 0; i < kMaxDim; ++i) {
        a.d[i] -= b.d[i];
        for (int j = 0; j < kMaxDim; ++j) a.h[i][j] -= b.h[i][j];
    }
    return a;
}
inline Jet2 operator*(double s, Jet2 a) {
    a.v *= s;
    for (int i = 0; i < kMaxDim; ++i) {
        a.d[i] *= s;
        for (int j = 0; j < kMaxDim; ++j) a.h[i][j] *= s;
    }
    return a;
}
inline Jet2 operator*(const Jet2& a, const Jet2& b) {
    Jet2 r;
    r.v = a.v * b.v;
    for (int i = 0; i < kMaxDim; ++i) {
        r.d[i] = a.d[i] * b.v + a.v * b.d[i];
        for (int j = 0; j < kMaxDim; ++j)
            r.h[i][j] = a.h[i][j] * b.v + a.v * b.h[i][j] + a.d[i] * b.d[j] + a.d[j] * b.d[i];
    }
    return r;
}
inline Jet2 exp(const Jet2& a) {
    Jet2 r;
    r.v = std::exp(a.v);
    for (int i = 0; i < kMaxDim; ++i) {
        r.d[i] = r.v * a.d[i];
        for (int j = 0; j < kMaxDim; ++j) r.h[i][j] = r.v * (a.h[i][j] + a.d[i] * a.d[j]);
    }
    return r;
}

}  // namespace nhrf
