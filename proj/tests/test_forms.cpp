#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "reln/forms.hpp"

using namespace reln;

namespace {

LieAlgebra make_sl2() {
    Mat e12(2, 2), e21(2, 2), h(2, 2);
    e12(0, 1) = 1;
    e21(1, 0) = 1;
    h(0, 0) = 1;
    h(1, 1) = -1;
    return make_algebra_from_basis("sl2", 2, {e12, e21, h});
}

Mat random_gl(std::size_t n, Rng& rng) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n * n; ++i) m.data()[i] = next_gaussian(rng);
    return m;
}

}  // namespace

TEST_CASE("trace form basics") {
    CHECK(trace_form(Mat::identity(3), Mat::identity(3)) == 3.0);
    Rng rng = make_rng(2);
    const Mat x = random_gl(4, rng), y = random_gl(4, rng);
    CHECK(trace_form(x, y) == doctest::Approx(trace_form(y, x)).epsilon(1e-12));
    CHECK(trace_form(x, y) == doctest::Approx(trace(x * y)).epsilon(1e-12));
}

TEST_CASE("trace of a product of so3 hats recovers -2 v.w") {
    const LieAlgebra so3 = make_algebra("so3");
    Rng rng = make_rng(3);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> v(3), w(3);
        for (double& e : v) e = next_gaussian(rng);
        for (double& e : w) e = next_gaussian(rng);
        const double dot = v[0] * w[0] + v[1] * w[1] + v[2] * w[2];
        CHECK(trace_form(hat(v, so3), hat(w, so3)) ==
              doctest::Approx(-2.0 * dot).epsilon(1e-12));
    }
}

TEST_CASE("killing oracle on so3 is -2 I") {
    const BilinearForm k = killing_oracle(make_algebra("so3"));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(k.gram(i, j) == doctest::Approx(i == j ? -2.0 : 0.0).epsilon(1e-13));
}

TEST_CASE("killing oracle is singular on gln and full rank on semisimple algebras") {
    CHECK(nondegeneracy_rank(killing_oracle(make_algebra("gln", 3))) == 8);
    CHECK(nondegeneracy_rank(killing_oracle(make_algebra("gln", 2))) == 3);
    CHECK(nondegeneracy_rank(killing_oracle(make_algebra("so3"))) == 3);
    CHECK(nondegeneracy_rank(killing_oracle(make_algebra("sl3"))) == 8);
    CHECK(nondegeneracy_rank(killing_oracle(make_algebra("sp4"))) == 10);
    CHECK(nondegeneracy_rank(killing_oracle(make_algebra("so13"))) == 6);
    CHECK(nondegeneracy_rank(killing_oracle(make_sl2())) == 3);
}

TEST_CASE("killing oracle equals 2n tr(XY) on sl(2) and sl(3)") {
    for (const LieAlgebra& alg : {make_sl2(), make_algebra("sl3")}) {
        const BilinearForm oracle = killing_oracle(alg);
        const double two_n = 2.0 * static_cast<double>(alg.n);
        for (std::size_t i = 0; i < alg.K; ++i)
            for (std::size_t j = 0; j < alg.K; ++j) {
                const double expected = two_n * trace_form(alg.basis[i], alg.basis[j]);
                CHECK(oracle.gram(i, j) == doctest::Approx(expected).epsilon(1e-9));
            }
    }
}

TEST_CASE("modified form on the identity") {
    // 2*3*tr(I) - tr(I)^2 = 18 - 9
    CHECK(modified_form_gl(Mat::identity(3), Mat::identity(3)) == 9.0);
}

TEST_CASE("modified form recovers -12 v.w on embedded so3") {
    const LieAlgebra so3 = make_algebra("so3");
    Rng rng = make_rng(5);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> v(3), w(3);
        for (double& e : v) e = next_gaussian(rng);
        for (double& e : w) e = next_gaussian(rng);
        const double dot = v[0] * w[0] + v[1] * w[1] + v[2] * w[2];
        const double val = modified_form_gl(hat(v, so3), hat(w, so3));
        CHECK(std::abs(val + 12.0 * dot) <= 1e-10 * (1.0 + std::abs(dot)));
    }
    // unit-vector version with an absolute bound
    std::vector<double> v{1, 0, 0}, w{0.6, 0.8, 0};
    CHECK(std::abs(modified_form_gl(hat(v, so3), hat(w, so3)) + 12.0 * 0.6) <= 1e-12);
}

TEST_CASE("gl2 gram of the modified form is the frozen matrix with det -128") {
    const LieAlgebra gl2 = make_algebra("gln", 2);
    const BilinearForm f = modified_gl_form(gl2);
    const double expected[4][4] = {
        {3, 0, 0, -1},
        {0, 0, 4, 0},
        {0, 4, 0, 0},
        {-1, 0, 0, 3},
    };
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(f.gram(i, j) == expected[i][j]);
    CHECK(determinant(f.gram) == doctest::Approx(-128.0).epsilon(1e-12));
}

TEST_CASE("general construction reproduces the concrete gl form") {
    const LieAlgebra gl3 = make_algebra("gln", 3);
    const CenterDecomposition d = gl_center_decomposition(gl3);
    const Mat inner = trace_center_inner(gl3, d, 1.0);
    const BilinearForm general = modified_form_general(gl3, d, inner);
    const BilinearForm concrete = modified_gl_form(gl3);
    Rng rng = make_rng(7);
    for (int t = 0; t < 100; ++t) {
        const std::vector<double> x = sample_algebra(gl3, 1.0, rng);
        const std::vector<double> y = sample_algebra(gl3, 1.0, rng);
        const double a = general.apply(x, y);
        const double b = concrete.apply(x, y);
        CHECK(std::abs(a - b) <= 1e-10 * (1.0 + std::abs(b)));
    }
}

TEST_CASE("general construction on a purely semisimple algebra is the killing oracle") {
    const LieAlgebra sl3 = make_algebra("sl3");
    CenterDecomposition d;
    for (std::size_t i = 0; i < sl3.K; ++i) {
        std::vector<double> e(sl3.K, 0.0);
        e[i] = 1.0;
        d.semisimple.push_back(e);
    }
    const BilinearForm general = modified_form_general(sl3, d, Mat(0, 0));
    const BilinearForm oracle = killing_oracle(sl3);
    CHECK(frobenius_norm(general.gram - oracle.gram) <= 1e-9 * (1.0 + frobenius_norm(oracle.gram)));
}

TEST_CASE("general construction keeps the blocks orthogonal") {
    const LieAlgebra gl2 = make_algebra("gln", 2);
    const CenterDecomposition d = gl_center_decomposition(gl2);
    const BilinearForm f = modified_form_general(gl2, d, trace_center_inner(gl2, d, 1.0));
    for (const auto& z : d.center)
        for (const auto& s : d.semisimple) CHECK(std::abs(f.apply(z, s)) <= 1e-12);
}

TEST_CASE("general construction rejects bad inputs") {
    const LieAlgebra gl2 = make_algebra("gln", 2);
    const CenterDecomposition d = gl_center_decomposition(gl2);
    Mat negative(1, 1);
    negative(0, 0) = -1.0;
    CHECK_THROWS_AS(modified_form_general(gl2, d, negative), std::invalid_argument);

    CenterDecomposition bad = d;
    bad.center[0] = bad.semisimple[0];  // not central
    CHECK_THROWS_AS(modified_form_general(gl2, bad, trace_center_inner(gl2, d, 1.0)),
                    std::invalid_argument);
}

TEST_CASE("averaged center form") {
    Mat inner(2, 2);
    inner(0, 0) = 2.0;
    inner(1, 1) = 3.0;
    inner(0, 1) = inner(1, 0) = 0.5;

    CHECK(frobenius_norm(averaged_center_form(inner, {Mat::identity(2)}) - inner) == 0.0);

    // sign flips cancel in the quadratic form
    const Mat flip = -1.0 * Mat::identity(2);
    const Mat avg = averaged_center_form(inner, {Mat::identity(2), flip});
    CHECK(frobenius_norm(avg - inner) <= 1e-14);

    // averaging over {I, P} makes the result commute with the permutation P
    Mat p(2, 2);
    p(0, 1) = 1;
    p(1, 0) = 1;
    const Mat avg_p = averaged_center_form(inner, {Mat::identity(2), p});
    CHECK(frobenius_norm(transpose(p) * avg_p * p - avg_p) <= 1e-12);

    CHECK_THROWS_AS(averaged_center_form(inner, {}), std::invalid_argument);
    CHECK_THROWS_AS(averaged_center_form(inner, {Mat(2, 2)}), std::invalid_argument);
}

TEST_CASE("invariance checker accepts invariant forms and flags a random one") {
    const LieAlgebra gl3 = make_algebra("gln", 3);
    {
        Rng rng = make_rng(11);
        CHECK(check_ad_invariance(modified_gl_form(gl3), gl3, 300, 0.5, rng) <= 1e-8);
    }
    {
        Rng rng = make_rng(11);
        CHECK(check_ad_invariance(trace_form_on(gl3), gl3, 300, 0.5, rng) <= 1e-8);
    }
    {
        Rng rng = make_rng(11);
        BilinearForm random_form = modified_gl_form(gl3);
        Rng noise = make_rng(99);
        Mat g = random_gl(gl3.K, noise);
        random_form.gram = 0.5 * (g + transpose(g));
        CHECK(check_ad_invariance(random_form, gl3, 300, 0.5, rng) > 1e-3);
    }
}

TEST_CASE("gram rank of the modified form is full on gl(n)") {
    for (std::size_t n = 2; n <= 5; ++n) {
        const LieAlgebra gl = make_algebra("gln", n);
        CHECK(nondegeneracy_rank(modified_gl_form(gl)) == n * n);
    }
}

TEST_CASE("decompose_gl") {
    auto [traceless_i, tr_i] = decompose_gl(Mat::identity(3));
    CHECK(frobenius_norm(traceless_i) <= 1e-15);
    CHECK(tr_i == 3.0);

    const LieAlgebra sl3 = make_algebra("sl3");
    Rng rng = make_rng(13);
    const Mat x0 = hat(sample_algebra(sl3, 1.0, rng), sl3);
    auto [traceless_x, tr_x] = decompose_gl(x0);
    CHECK(std::abs(tr_x) <= 1e-14);
    CHECK(frobenius_norm(traceless_x - x0) <= 1e-14);

    const Mat x = random_gl(4, rng);
    auto [t4, tr4] = decompose_gl(x);
    CHECK(std::abs(trace(t4)) <= 1e-12);
    Mat recon = t4;
    for (std::size_t i = 0; i < 4; ++i) recon(i, i) += tr4 / 4.0;
    CHECK(frobenius_norm(recon - x) <= 1e-14 * (1.0 + frobenius_norm(x)));
}

TEST_CASE("orthogonal decomposition identity of the modified form") {
    Rng rng = make_rng(17);
    for (int t = 0; t < 100; ++t) {
        const Mat x = random_gl(3, rng), y = random_gl(3, rng);
        auto [x0, trx] = decompose_gl(x);
        auto [y0, try_] = decompose_gl(y);
        const double lhs = modified_form_gl(x, y);
        const double rhs = 6.0 * trace_form(x0, y0) + trx * try_;
        CHECK(std::abs(lhs - rhs) <= 1e-10 * (1.0 + std::abs(rhs)));
    }
}

TEST_CASE("restriction to traceless inputs drops the trace product term") {
    const LieAlgebra sl3 = make_algebra("sl3");
    // integer coordinates make the assembled diagonals exactly traceless
    const std::vector<double> xc{1, -2, 3, 0, 2, -1, 2, -3};
    const std::vector<double> yc{0, 1, -1, 2, 0, 1, -2, 1};
    const Mat x = hat(xc, sl3), y = hat(yc, sl3);
    CHECK(modified_form_gl(x, y) == 6.0 * trace_form(x, y));

    Rng rng = make_rng(19);
    for (int t = 0; t < 50; ++t) {
        const Mat xr = hat(sample_algebra(sl3, 1.0, rng), sl3);
        const Mat yr = hat(sample_algebra(sl3, 1.0, rng), sl3);
        const double lhs = modified_form_gl(xr, yr);
        const double rhs = 6.0 * trace_form(xr, yr);
        CHECK(std::abs(lhs - rhs) <= 1e-20 * (1.0 + std::abs(rhs)));
    }
}

TEST_CASE("bilinear form apply matches the matrix-level definition") {
    const LieAlgebra sp4 = make_algebra("sp4");
    const BilinearForm f = modified_gl_form(sp4);
    CHECK(f.gram.rows() == 10);
    for (std::size_t i = 0; i < f.gram.rows(); ++i)
        for (std::size_t j = 0; j < f.gram.cols(); ++j)
            CHECK(f.gram(i, j) == doctest::Approx(f.gram(j, i)).epsilon(1e-12));
    Rng rng = make_rng(23);
    for (int t = 0; t < 50; ++t) {
        const std::vector<double> x = sample_algebra(sp4, 1.0, rng);
        const std::vector<double> y = sample_algebra(sp4, 1.0, rng);
        const double via_gram = f.apply(x, y);
        const double via_matrices = modified_form_gl(hat(x, sp4), hat(y, sp4));
        CHECK(std::abs(via_gram - via_matrices) <= 1e-10 * (1.0 + std::abs(via_matrices)));
    }
}
