#include "reln/forms.hpp"

#include <cmath>
#include <stdexcept>

namespace reln {

double BilinearForm::apply(const std::vector<double>& x, const std::vector<double>& y) const {
    if (x.size() != gram.rows() || y.size() != gram.cols())
        throw std::invalid_argument("BilinearForm::apply: coordinate length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < gram.rows(); ++i) {
        if (x[i] == 0.0) continue;
        double row = 0.0;
        for (std::size_t j = 0; j < gram.cols(); ++j) row += gram(i, j) * y[j];
        s += x[i] * row;
    }
    return s;
}

double trace_form(const Mat& x, const Mat& y) {
    if (x.rows() != y.rows() || x.cols() != y.cols() || x.rows() != x.cols())
        throw std::invalid_argument("trace_form: shape mismatch");
    // tr(XY) without forming the product
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t k = 0; k < x.cols(); ++k) s += x(i, k) * y(k, i);
    return s;
}

BilinearForm trace_form_on(const LieAlgebra& alg) {
    BilinearForm f;
    f.kind = FormKind::trace;
    f.algebra_name = alg.name;
    f.gram = Mat(alg.K, alg.K);
    for (std::size_t i = 0; i < alg.K; ++i)
        for (std::size_t j = 0; j < alg.K; ++j) f.gram(i, j) = trace_form(alg.basis[i], alg.basis[j]);
    return f;
}

BilinearForm killing_oracle(const LieAlgebra& alg) {
    std::vector<Mat> ad(alg.K);
    for (std::size_t i = 0; i < alg.K; ++i) {
        std::vector<double> e(alg.K, 0.0);
        e[i] = 1.0;
        ad[i] = ad_matrix(e, alg);
    }
    BilinearForm f;
    f.kind = FormKind::killing_oracle;
    f.algebra_name = alg.name;
    f.gram = Mat(alg.K, alg.K);
    for (std::size_t i = 0; i < alg.K; ++i)
        for (std::size_t j = 0; j < alg.K; ++j) f.gram(i, j) = trace_form(ad[i], ad[j]);
    return f;
}

double modified_form_gl(const Mat& x, const Mat& y) {
    if (x.rows() != y.rows() || x.cols() != y.cols() || x.rows() != x.cols())
        throw std::invalid_argument("modified_form_gl: shape mismatch");
    const double n = static_cast<double>(x.rows());
    return 2.0 * n * trace_form(x, y) - trace(x) * trace(y);
}

BilinearForm modified_gl_form(const LieAlgebra& alg) {
    BilinearForm f;
    f.kind = FormKind::modified_gl;
    f.algebra_name = alg.name;
    f.gram = Mat(alg.K, alg.K);
    for (std::size_t i = 0; i < alg.K; ++i)
        for (std::size_t j = 0; j < alg.K; ++j)
            f.gram(i, j) = modified_form_gl(alg.basis[i], alg.basis[j]);
    return f;
}

CenterDecomposition gl_center_decomposition(const LieAlgebra& alg) {
    if (alg.name != "gln")
        throw std::invalid_argument("gl_center_decomposition: only defined for gln");
    const std::size_t n = alg.n;
    CenterDecomposition d;
    d.center.push_back(vee(Mat::identity(n), alg));
    // traceless elementary matrices E_ij (i != j) and diagonal differences
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            Mat e(n, n);
            e(i, j) = 1.0;
            d.semisimple.push_back(vee(e, alg));
        }
    for (std::size_t i = 0; i + 1 < n; ++i) {
        Mat h(n, n);
        h(i, i) = 1.0;
        h(i + 1, i + 1) = -1.0;
        d.semisimple.push_back(vee(h, alg));
    }
    return d;
}

Mat trace_center_inner(const LieAlgebra& alg, const CenterDecomposition& d, double coeff) {
    const std::size_t z = d.center.size();
    Mat inner(z, z);
    for (std::size_t a = 0; a < z; ++a)
        for (std::size_t b = 0; b < z; ++b)
            inner(a, b) = coeff * trace(hat(d.center[a], alg)) * trace(hat(d.center[b], alg));
    return inner;
}

BilinearForm modified_form_general(const LieAlgebra& alg, const CenterDecomposition& d,
                                   const Mat& center_inner) {
    const std::size_t z = d.center.size();
    const std::size_t s = d.semisimple.size();
    if (z + s != alg.K)
        throw std::invalid_argument("modified_form_general: decomposition does not span the algebra");
    if (center_inner.rows() != z || center_inner.cols() != z)
        throw std::invalid_argument("modified_form_general: center_inner shape mismatch");

    for (const auto& cvec : d.center) {
        if (max_abs(ad_matrix(cvec, alg)) > 1e-12)
            throw std::invalid_argument("modified_form_general: center element does not commute");
    }

    if (z > 0) {
        const double sym = [&] {
            double m = 0.0;
            for (std::size_t a = 0; a < z; ++a)
                for (std::size_t b = 0; b < z; ++b)
                    m = std::max(m, std::abs(center_inner(a, b) - center_inner(b, a)));
            return m;
        }();
        if (sym > 1e-12 * (1.0 + max_abs(center_inner)))
            throw std::invalid_argument("modified_form_general: center_inner not symmetric");
        const EighResult eig = jacobi_eigh(center_inner);
        if (eig.values.front() <= 0.0)
            throw std::invalid_argument("modified_form_general: center_inner not positive-definite");
    }

    // Change of basis: columns of P are the decomposition vectors.
    Mat p(alg.K, alg.K);
    for (std::size_t a = 0; a < z; ++a)
        for (std::size_t k = 0; k < alg.K; ++k) p(k, a) = d.center[a][k];
    for (std::size_t a = 0; a < s; ++a)
        for (std::size_t k = 0; k < alg.K; ++k) p(k, z + a) = d.semisimple[a][k];
    LuDecomposition f = lu_factor(p);
    if (f.singular)
        throw std::invalid_argument("modified_form_general: decomposition vectors not independent");
    const Mat p_inv = lu_solve(f, Mat::identity(alg.K));

    const BilinearForm killing = killing_oracle(alg);
    Mat block(alg.K, alg.K);
    for (std::size_t a = 0; a < z; ++a)
        for (std::size_t b = 0; b < z; ++b) block(a, b) = center_inner(a, b);
    for (std::size_t a = 0; a < s; ++a)
        for (std::size_t b = 0; b < s; ++b)
            block(z + a, z + b) = killing.apply(d.semisimple[a], d.semisimple[b]);

    BilinearForm out;
    out.kind = FormKind::modified_general;
    out.algebra_name = alg.name;
    out.gram = transpose(p_inv) * block * p_inv;
    // enforce exact symmetry of the assembled Gram
    for (std::size_t i = 0; i < alg.K; ++i)
        for (std::size_t j = i + 1; j < alg.K; ++j) {
            const double v = 0.5 * (out.gram(i, j) + out.gram(j, i));
            out.gram(i, j) = v;
            out.gram(j, i) = v;
        }
    return out;
}

Mat averaged_center_form(const Mat& center_inner, const std::vector<Mat>& component_actions) {
    if (component_actions.empty())
        throw std::invalid_argument("averaged_center_form: empty action list");
    const std::size_t z = center_inner.rows();
    Mat sum(z, z);
    for (const Mat& g : component_actions) {
        if (g.rows() != z || g.cols() != z)
            throw std::invalid_argument("averaged_center_form: action shape mismatch");
        if (std::abs(determinant(g)) < 1e-12)
            throw std::invalid_argument("averaged_center_form: non-invertible action");
        sum += transpose(g) * center_inner * g;
    }
    return (1.0 / static_cast<double>(component_actions.size())) * sum;
}

double check_ad_invariance(const BilinearForm& form, const LieAlgebra& alg, std::size_t trials,
                           double sigma, Rng& rng) {
    if (trials < 1) throw std::invalid_argument("check_ad_invariance: trials must be >= 1");
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const GroupElement g = sample_group(alg, sigma, rng);
        const std::vector<double> x = sample_algebra(alg, 1.0, rng);
        const std::vector<double> y = sample_algebra(alg, 1.0, rng);
        const double before = form.apply(x, y);
        const double after = form.apply(apply_adjoint(g, x), apply_adjoint(g, y));
        worst = std::max(worst, std::abs(after - before) / (1.0 + std::abs(before)));
    }
    return worst;
}

std::size_t nondegeneracy_rank(const BilinearForm& form) { return numerical_rank(form.gram); }

std::pair<Mat, double> decompose_gl(const Mat& x) {
    if (x.rows() != x.cols()) throw std::invalid_argument("decompose_gl: not square");
    const double t = trace(x);
    const double shift = t / static_cast<double>(x.rows());
    Mat traceless = x;
    for (std::size_t i = 0; i < x.rows(); ++i) traceless(i, i) -= shift;
    return {traceless, t};
}

}  // namespace reln
