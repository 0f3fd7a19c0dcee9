#pragma once

// Triangle quadrature rules on the reference element (0,0),(1,0),(0,1).

#include <array>
#include <vector>

namespace vdopt {

struct RefQuadPoint {
    Real r, s;  // reference coordinates, point = p0 + r*(p1-p0) + s*(p2-p0)
    Real w;     // weight w.r.t. reference area 1/2 (weights sum to 1/2)
};

// Degree-2 rule: edge midpoints. Exact for quadratics, hence for products of
// two P1 functions on the triangle.
inline const std::array<RefQuadPoint, 3>& midpoint_rule() {
    static const std::array<RefQuadPoint, 3> rule = {{
        {0.5, 0.0, 1.0 / 6.0},
        {0.5, 0.5, 1.0 / 6.0},
        {0.0, 0.5, 1.0 / 6.0},
    }};
    return rule;
}

namespace detail {

// Gauss-Legendre nodes/weights on [0,1].
inline std::vector<std::pair<Real, Real>> gauss01(int n) {
    // abscissae/weights on [-1,1]
    static const Real x4[] = {-0.8611363115940526, -0.3399810435848563,
                                0.3399810435848563, 0.8611363115940526};
    static const Real w4[] = {0.3478548451374538, 0.6521451548625461,
                                0.6521451548625461, 0.3478548451374538};
    static const Real x5[] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                0.5384693101056831, 0.9061798459386640};
    static const Real w5[] = {0.2369268850561891, 0.4786286704993665,
                                0.5688888888888889, 0.4786286704993665,
                                0.2369268850561891};
    std::vector<std::pair<Real, Real>> out;
    const Real* x = (n == 4) ? x4 : x5;
    const Real* w = (n == 4) ? w4 : w5;
    for (int i = 0; i < n; ++i) out.push_back({0.5 * (1.0 + x[i]), 0.5 * w[i]});
    return out;
}

}  // namespace detail

// Degree-7 rule built from a collapsed Gauss product (5x4 points, positive
// weights): r = xi, s = eta*(1-xi), Jacobian (1-xi). Polynomials of total
// degree <= 7 are integrated exactly.
inline const std::vector<RefQuadPoint>& degree7_rule() {
    static const std::vector<RefQuadPoint> rule = [] {
        std::vector<RefQuadPoint> pts;
        const auto gxi = detail::gauss01(5);
        const auto geta = detail::gauss01(4);
        for (const auto& [xi, wxi] : gxi)
            for (const auto& [eta, weta] : geta)
                pts.push_back({xi, eta * (1.0 - xi), wxi * weta * (1.0 - xi)});
        return pts;
    }();
    return rule;
}

}  // namespace vdopt
