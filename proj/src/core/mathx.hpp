#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

namespace ltew {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
};

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3 operator+(Vec3 o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(Vec3 o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(Vec3 o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(Vec3 o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
};

struct Mat2 {
    // row major
    std::array<double, 4> m{1.0, 0.0, 0.0, 1.0};

    static Mat2 identity() { return {}; }
    static Mat2 diag(double a, double b) { return {{a, 0.0, 0.0, b}}; }

    double operator()(int r, int c) const { return m[static_cast<size_t>(2 * r + c)]; }
    double& operator()(int r, int c) { return m[static_cast<size_t>(2 * r + c)]; }

    double det() const { return m[0] * m[3] - m[1] * m[2]; }

    Mat2 inverse() const {
        const double d = det();
        if (std::abs(d) < 1e-300) throw std::domain_error("singular 2x2 matrix");
        const double inv = 1.0 / d;
        return {{m[3] * inv, -m[1] * inv, -m[2] * inv, m[0] * inv}};
    }

    Mat2 transpose() const { return {{m[0], m[2], m[1], m[3]}}; }

    Vec2 apply(Vec2 v) const { return {m[0] * v.x + m[1] * v.y, m[2] * v.x + m[3] * v.y}; }

    Mat2 operator*(const Mat2& o) const {
        Mat2 r;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                r(i, j) = (*this)(i, 0) * o(0, j) + (*this)(i, 1) * o(1, j);
        return r;
    }
};

struct Mat3 {
    // row major
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return {}; }

    double operator()(int r, int c) const { return m[static_cast<size_t>(3 * r + c)]; }
    double& operator()(int r, int c) { return m[static_cast<size_t>(3 * r + c)]; }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                r(i, j) = (*this)(i, 0) * o(0, j) + (*this)(i, 1) * o(1, j) +
                          (*this)(i, 2) * o(2, j);
        return r;
    }

    Vec3 apply(Vec3 v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    // Applies to (x, y, 1) and returns the homogeneous triple before division.
    Vec3 apply_homogeneous(Vec2 v) const { return apply({v.x, v.y, 1.0}); }

    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) -
               m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    Mat3 inverse() const {
        const double d = det();
        if (std::abs(d) < 1e-300) throw std::domain_error("singular 3x3 matrix");
        const double i = 1.0 / d;
        Mat3 r;
        r.m = {(m[4] * m[8] - m[5] * m[7]) * i, (m[2] * m[7] - m[1] * m[8]) * i,
               (m[1] * m[5] - m[2] * m[4]) * i, (m[5] * m[6] - m[3] * m[8]) * i,
               (m[0] * m[8] - m[2] * m[6]) * i, (m[2] * m[3] - m[0] * m[5]) * i,
               (m[3] * m[7] - m[4] * m[6]) * i, (m[1] * m[6] - m[0] * m[7]) * i,
               (m[0] * m[4] - m[1] * m[3]) * i};
        return r;
    }

    double inf_norm() const {
        double v = 0.0;
        for (double e : m) v = std::max(v, std::abs(e));
        return v;
    }
};

}  // namespace ltew
