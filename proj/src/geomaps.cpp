#include "reln/geomaps.hpp"

#include <cmath>
#include <stdexcept>

#include "reln/forms.hpp"

namespace reln {

Mat lorentz_lift(const FourMomentum& p, const MinkowskiSignature& sig) {
    for (double v : p.p)
        if (!std::isfinite(v)) throw std::invalid_argument("lorentz_lift: non-finite momentum");
    Mat m(5, 5);
    for (std::size_t i = 0; i < 4; ++i) {
        m(i, 4) = p.p[i];
        m(4, i) = p.p[i] * sig.eta[i];
    }
    return m;
}

Mat orthogonal_lift(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) throw std::invalid_argument("orthogonal_lift: non-finite input");
    const std::size_t n = v.size();
    Mat m(n + 1, n + 1);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, n) = v[i];
        m(n, i) = v[i];
    }
    return m;
}

SpdMatrix::SpdMatrix(Mat m) : c(std::move(m)) {
    if (c.rows() != c.cols()) throw std::invalid_argument("SpdMatrix: not square");
    const double asym_tol = 1e-12 * (1.0 + max_abs(c));
    for (std::size_t i = 0; i < c.rows(); ++i)
        for (std::size_t j = i + 1; j < c.cols(); ++j)
            if (std::abs(c(i, j) - c(j, i)) > asym_tol)
                throw std::invalid_argument("SpdMatrix: not symmetric");
    const EighResult e = jacobi_eigh(c);
    const double lo = e.values.front(), hi = e.values.back();
    if (!(lo > 1e-12 * std::max(hi, 0.0)) || lo <= 0.0)
        throw std::invalid_argument("SpdMatrix: not positive-definite");
    if (hi / lo > 1e12)
        throw std::invalid_argument("SpdMatrix: eigenvalue ratio beyond 1e12");
}

namespace {

Mat eig_map(const Mat& s, double (*f)(double)) {
    const EighResult e = jacobi_eigh(s);
    const std::size_t n = s.rows();
    Mat out(n, n);
    for (std::size_t a = 0; a < n; ++a) {
        const double fa = f(e.values[a]);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                out(i, j) += fa * e.vectors(i, a) * e.vectors(j, a);
    }
    // exact symmetry
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = 0.5 * (out(i, j) + out(j, i));
            out(i, j) = v;
            out(j, i) = v;
        }
    return out;
}

}  // namespace

Mat spd_log(const SpdMatrix& c) {
    return eig_map(c.c, +[](double x) { return std::log(x); });
}

SpdMatrix spd_exp(const Mat& s) {
    if (s.rows() != s.cols()) throw std::invalid_argument("spd_exp: not square");
    const double asym_tol = 1e-10 * (1.0 + max_abs(s));
    for (std::size_t i = 0; i < s.rows(); ++i)
        for (std::size_t j = i + 1; j < s.cols(); ++j)
            if (std::abs(s(i, j) - s(j, i)) > asym_tol)
                throw std::invalid_argument("spd_exp: input not symmetric");
    return SpdMatrix(eig_map(s, +[](double x) { return std::exp(x); }));
}

std::array<double, 3> skew_extract(const Mat& a) {
    if (a.rows() != 3 || a.cols() != 3) throw std::invalid_argument("skew_extract: need 3x3");
    // vee of (A - A^T)/2 against hat(v) = [[0,-v3,v2],[v3,0,-v1],[-v2,v1,0]]
    return {0.5 * (a(2, 1) - a(1, 2)), 0.5 * (a(0, 2) - a(2, 0)), 0.5 * (a(1, 0) - a(0, 1))};
}

double pairwise_invariant(const FourMomentum& pi, const FourMomentum& pj,
                          const MinkowskiSignature& sig) {
    const double z = modified_form_gl(lorentz_lift(pi, sig), lorentz_lift(pj, sig));
    return (z < 0.0 ? -1.0 : 1.0) * std::log1p(std::abs(z));
}

}  // namespace reln
