#include "reln/liealg.hpp"

#include <cmath>
#include <stdexcept>

namespace reln {

namespace {

Mat unit(std::size_t n, std::size_t r, std::size_t c, double v = 1.0) {
    Mat m(n, n);
    m(r, c) = v;
    return m;
}

std::vector<Mat> so3_basis() {
    // generators matching hat(v) = [[0,-v3,v2],[v3,0,-v1],[-v2,v1,0]]
    Mat e1(3, 3), e2(3, 3), e3(3, 3);
    e1(1, 2) = -1.0; e1(2, 1) = 1.0;
    e2(0, 2) = 1.0;  e2(2, 0) = -1.0;
    e3(0, 1) = -1.0; e3(1, 0) = 1.0;
    return {e1, e2, e3};
}

std::vector<Mat> sl3_basis() {
    std::vector<Mat> b;
    b.push_back(unit(3, 0, 1));  // E_12
    b.push_back(unit(3, 1, 0));  // E_21
    b.push_back(unit(3, 0, 2));  // E_13
    b.push_back(unit(3, 2, 0));  // E_31
    b.push_back(unit(3, 1, 2));  // E_23
    b.push_back(unit(3, 2, 1));  // E_32
    Mat h1(3, 3), h2(3, 3);
    h1(0, 0) = 1.0; h1(1, 1) = -1.0;  // E_11 - E_22
    h2(1, 1) = 1.0; h2(2, 2) = -1.0;  // E_22 - E_33
    b.push_back(h1);
    b.push_back(h2);
    return b;
}

std::vector<Mat> sp4_basis() {
    // sp(4) = {[[A, B], [C, -A^T]] : B, C symmetric 2x2} with the standard
    // J = [[0, I2], [-I2, 0]].
    std::vector<Mat> b;
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            Mat m(4, 4);
            m(i, j) = 1.0;
            m(2 + j, 2 + i) = -1.0;
            b.push_back(m);
        }
    auto sym_block = [](std::size_t row0, std::size_t col0) {
        std::vector<Mat> s;
        Mat s11(4, 4), s22(4, 4), s12(4, 4);
        s11(row0 + 0, col0 + 0) = 1.0;
        s22(row0 + 1, col0 + 1) = 1.0;
        s12(row0 + 0, col0 + 1) = 1.0;
        s12(row0 + 1, col0 + 0) = 1.0;
        s.push_back(s11);
        s.push_back(s22);
        s.push_back(s12);
        return s;
    };
    for (const Mat& m : sym_block(0, 2)) b.push_back(m);  // B block
    for (const Mat& m : sym_block(2, 0)) b.push_back(m);  // C block
    return b;
}

std::vector<Mat> so13_basis() {
    // three rotations and three boosts for eta = diag(-1, 1, 1, 1)
    std::vector<Mat> b;
    Mat j1(4, 4), j2(4, 4), j3(4, 4);
    j1(2, 3) = -1.0; j1(3, 2) = 1.0;
    j2(1, 3) = 1.0;  j2(3, 1) = -1.0;
    j3(1, 2) = -1.0; j3(2, 1) = 1.0;
    b.push_back(j1);
    b.push_back(j2);
    b.push_back(j3);
    for (std::size_t i = 1; i <= 3; ++i) {
        Mat k(4, 4);
        k(0, i) = 1.0;
        k(i, 0) = 1.0;
        b.push_back(k);
    }
    return b;
}

std::vector<Mat> gln_basis(std::size_t n) {
    std::vector<Mat> b;
    b.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) b.push_back(unit(n, i, j));
    return b;
}

}  // namespace

LieAlgebra make_algebra_from_basis(std::string name, std::size_t n, std::vector<Mat> basis) {
    LieAlgebra alg;
    alg.name = std::move(name);
    alg.n = n;
    alg.K = basis.size();
    alg.basis = std::move(basis);
    for (const Mat& e : alg.basis)
        if (e.rows() != n || e.cols() != n)
            throw std::invalid_argument("make_algebra_from_basis: basis element has wrong shape");

    Mat gram(alg.K, alg.K);
    for (std::size_t i = 0; i < alg.K; ++i)
        for (std::size_t j = 0; j < alg.K; ++j)
            gram(i, j) = frobenius_dot(alg.basis[i], alg.basis[j]);
    LuDecomposition f = lu_factor(gram);
    if (f.singular) throw std::invalid_argument("make_algebra_from_basis: basis not linearly independent");
    alg.frobenius_gram_inverse = lu_solve(f, Mat::identity(alg.K));

    alg.structure = structure_constants(alg);
    for (std::uint32_t i = 0; i < alg.K; ++i)
        for (std::uint32_t j = i + 1; j < alg.K; ++j)
            for (std::uint32_t k = 0; k < alg.K; ++k) {
                const double v = alg.c(i, j, k);
                if (v != 0.0) alg.structure_sparse.push_back({i, j, k, v});
            }
    return alg;
}

LieAlgebra make_algebra(std::string_view name, std::size_t n) {
    if (name == "so3") return make_algebra_from_basis("so3", 3, so3_basis());
    if (name == "sl3") return make_algebra_from_basis("sl3", 3, sl3_basis());
    if (name == "sp4") return make_algebra_from_basis("sp4", 4, sp4_basis());
    if (name == "so13") return make_algebra_from_basis("so13", 4, so13_basis());
    if (name == "gln") {
        if (n < 2) throw std::invalid_argument("make_algebra: gln needs n >= 2");
        return make_algebra_from_basis("gln", n, gln_basis(n));
    }
    throw std::invalid_argument("make_algebra: unknown algebra '" + std::string(name) + "'");
}

Mat hat(const std::vector<double>& x, const LieAlgebra& alg) {
    if (x.size() != alg.K) throw std::invalid_argument("hat: coordinate length mismatch");
    Mat out(alg.n, alg.n);
    for (std::size_t i = 0; i < alg.K; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const Mat& e = alg.basis[i];
        for (std::size_t p = 0; p < alg.n * alg.n; ++p) out.data()[p] += xi * e.data()[p];
    }
    return out;
}

std::vector<double> vee(const Mat& x, const LieAlgebra& alg, double tol_scale) {
    if (x.rows() != alg.n || x.cols() != alg.n) throw std::invalid_argument("vee: shape mismatch");
    std::vector<double> b(alg.K);
    for (std::size_t i = 0; i < alg.K; ++i) b[i] = frobenius_dot(alg.basis[i], x);
    std::vector<double> coords = mat_vec(alg.frobenius_gram_inverse, b);
    const Mat residual = x - hat(coords, alg);
    const double tol = tol_scale * (1.0 + frobenius_norm(x));
    if (frobenius_norm(residual) > tol)
        throw std::invalid_argument("vee: matrix not in the span of the basis (residual " +
                                    std::to_string(frobenius_norm(residual)) + ")");
    return coords;
}

Mat bracket(const Mat& x, const Mat& y) {
    if (x.rows() != y.rows() || x.cols() != y.cols() || x.rows() != x.cols())
        throw std::invalid_argument("bracket: shape mismatch");
    return x * y - y * x;
}

std::vector<double> structure_constants(const LieAlgebra& alg) {
    std::vector<double> c(alg.K * alg.K * alg.K, 0.0);
    for (std::size_t i = 0; i < alg.K; ++i)
        for (std::size_t j = 0; j < alg.K; ++j) {
            if (i == j) continue;
            const Mat br = bracket(alg.basis[i], alg.basis[j]);
            std::vector<double> coords;
            try {
                coords = vee(br, alg, 1e-12);
            } catch (const std::invalid_argument&) {
                throw std::invalid_argument("structure_constants: basis not closed under bracket");
            }
            for (std::size_t k = 0; k < alg.K; ++k) c[(i * alg.K + j) * alg.K + k] = coords[k];
        }
    return c;
}

Mat ad_matrix(const std::vector<double>& x, const LieAlgebra& alg) {
    if (x.size() != alg.K) throw std::invalid_argument("ad_matrix: coordinate length mismatch");
    Mat out(alg.K, alg.K);
    for (std::size_t i = 0; i < alg.K; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        for (std::size_t j = 0; j < alg.K; ++j)
            for (std::size_t k = 0; k < alg.K; ++k) out(k, j) += xi * alg.c(i, j, k);
    }
    return out;
}

Mat matrix_exp(const Mat& x) {
    if (x.rows() != x.cols()) throw std::invalid_argument("matrix_exp: not square");
    if (!all_finite(x)) throw std::invalid_argument("matrix_exp: non-finite input");
    const std::size_t n = x.rows();

    int squarings = 0;
    double norm = frobenius_norm(x);
    while (norm > 0.5 && squarings < 64) {
        norm *= 0.5;
        ++squarings;
    }
    Mat a = std::ldexp(1.0, -squarings) * x;

    Mat sum = Mat::identity(n);
    Mat term = Mat::identity(n);
    for (int k = 1; k <= 18; ++k) {
        term = (1.0 / k) * (term * a);
        sum += term;
    }
    for (int s = 0; s < squarings; ++s) sum = sum * sum;
    return sum;
}

std::vector<double> sample_algebra(const LieAlgebra& alg, double sigma, Rng& rng) {
    if (!(sigma > 0.0)) throw std::invalid_argument("sample_algebra: sigma must be positive");
    std::vector<double> x(alg.K);
    for (std::size_t i = 0; i < alg.K; ++i) x[i] = sigma * next_gaussian(rng);
    return x;
}

GroupElement group_from_coords(const LieAlgebra& alg, const std::vector<double>& coords) {
    GroupElement g;
    const Mat xh = hat(coords, alg);
    g.g = matrix_exp(xh);
    g.g_inv = matrix_exp(-1.0 * xh);
    g.adj = Mat(alg.K, alg.K);
    for (std::size_t i = 0; i < alg.K; ++i) {
        const std::vector<double> col = vee(g.g * alg.basis[i] * g.g_inv, alg);
        for (std::size_t k = 0; k < alg.K; ++k) g.adj(k, i) = col[k];
    }
    return g;
}

GroupElement sample_group(const LieAlgebra& alg, double sigma, Rng& rng) {
    if (!(sigma > 0.0)) throw std::invalid_argument("sample_group: sigma must be positive");
    for (int attempt = 0; attempt < 10; ++attempt) {
        const std::vector<double> x = sample_algebra(alg, sigma, rng);
        GroupElement g = group_from_coords(alg, x);
        const double cond = frobenius_norm(g.g) * frobenius_norm(g.g_inv);
        if (cond <= 1e6) return g;
    }
    throw std::runtime_error("sample_group: condition estimate above 1e6 after 10 resamples");
}

std::vector<double> apply_adjoint(const GroupElement& g, const std::vector<double>& x) {
    return mat_vec(g.adj, x);
}

}  // namespace reln
