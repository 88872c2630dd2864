#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "reln/geomaps.hpp"
#include "reln/liealg.hpp"

using namespace reln;

namespace {

FourMomentum apply4(const Mat& lambda, const FourMomentum& p) {
    FourMomentum out;
    for (std::size_t i = 0; i < 4; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 4; ++j) s += lambda(i, j) * p.p[j];
        out.p[i] = s;
    }
    return out;
}

}  // namespace

TEST_CASE("lorentz lift structure") {
    FourMomentum zero;
    CHECK(frobenius_norm(lorentz_lift(zero)) == 0.0);

    FourMomentum p{{1.5, -0.3, 0.2, 2.0}};
    const Mat l = lorentz_lift(p);
    CHECK(l.rows() == 5);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(l(i, 4) == p.p[i]);
        for (std::size_t j = 0; j < 4; ++j) CHECK(l(i, j) == 0.0);
    }
    CHECK(l(4, 4) == 0.0);
    // lower-left row carries p^T eta with the default diag(1,-1,-1,-1)
    CHECK(l(4, 0) == p.p[0]);
    CHECK(l(4, 1) == -p.p[1]);
    CHECK(l(4, 2) == -p.p[2]);
    CHECK(l(4, 3) == -p.p[3]);

    FourMomentum bad;
    bad.p[0] = std::nan("");
    CHECK_THROWS_AS(lorentz_lift(bad), std::invalid_argument);
}

TEST_CASE("lorentz lift conjugation identity over random boosts") {
    const LieAlgebra so13 = make_algebra("so13");
    Rng rng = make_rng(51);
    const MinkowskiSignature sig;
    Mat eta(4, 4);
    for (std::size_t i = 0; i < 4; ++i) eta(i, i) = sig.eta[i];
    for (int t = 0; t < 100; ++t) {
        const GroupElement g = sample_group(so13, 0.5, rng);
        CHECK(frobenius_norm(transpose(g.g) * eta * g.g - eta) <= 1e-9);

        FourMomentum p;
        for (double& e : p.p) e = next_gaussian(rng);
        Mat big = Mat::identity(5), big_inv = Mat::identity(5);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) {
                big(i, j) = g.g(i, j);
                big_inv(i, j) = g.g_inv(i, j);
            }
        const Mat lhs = big * lorentz_lift(p, sig) * big_inv;
        const Mat rhs = lorentz_lift(apply4(g.g, p), sig);
        CHECK(frobenius_norm(lhs - rhs) <= 1e-8 * (1.0 + frobenius_norm(rhs)));
    }
    // identity transformation leaves the lift unchanged
    FourMomentum p{{0.3, 1.0, -2.0, 0.7}};
    const Mat l = lorentz_lift(p);
    const Mat conj = Mat::identity(5) * l * Mat::identity(5);
    CHECK(frobenius_norm(conj - l) == 0.0);
}

TEST_CASE("lift works with the opposite metric signature too") {
    const LieAlgebra so13 = make_algebra("so13");
    MinkowskiSignature mostly_plus;
    mostly_plus.eta = {-1.0, 1.0, 1.0, 1.0};
    Rng rng = make_rng(53);
    for (int t = 0; t < 25; ++t) {
        const GroupElement g = sample_group(so13, 0.5, rng);
        FourMomentum p;
        for (double& e : p.p) e = next_gaussian(rng);
        Mat big = Mat::identity(5), big_inv = Mat::identity(5);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) {
                big(i, j) = g.g(i, j);
                big_inv(i, j) = g.g_inv(i, j);
            }
        const Mat lhs = big * lorentz_lift(p, mostly_plus) * big_inv;
        const Mat rhs = lorentz_lift(apply4(g.g, p), mostly_plus);
        CHECK(frobenius_norm(lhs - rhs) <= 1e-8 * (1.0 + frobenius_norm(rhs)));
    }
}

TEST_CASE("orthogonal lift") {
    CHECK(frobenius_norm(orthogonal_lift({0, 0, 0})) == 0.0);

    const std::vector<double> v{1.0, -2.0, 0.5};
    const Mat l = orthogonal_lift(v);
    CHECK(l.rows() == 4);
    CHECK(frobenius_norm(l - transpose(l)) == 0.0);

    const LieAlgebra so3 = make_algebra("so3");
    Rng rng = make_rng(57);
    for (int t = 0; t < 50; ++t) {
        const GroupElement g = sample_group(so3, 0.5, rng);
        std::vector<double> w(3);
        for (double& e : w) e = next_gaussian(rng);
        Mat big = Mat::identity(4), big_t = Mat::identity(4);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                big(i, j) = g.g(i, j);
                big_t(i, j) = g.g(j, i);
            }
        const Mat lhs = big * orthogonal_lift(w) * big_t;
        const Mat rhs = orthogonal_lift(mat_vec(g.g, w));
        CHECK(frobenius_norm(lhs - rhs) <= 1e-10 * (1.0 + frobenius_norm(rhs)));
    }
}

TEST_CASE("spd log and exp basics") {
    CHECK(frobenius_norm(spd_log(SpdMatrix(Mat::identity(3)))) <= 1e-14);
    CHECK(frobenius_norm(spd_exp(Mat(3, 3)).c - Mat::identity(3)) <= 1e-14);

    Mat d(3, 3);
    d(0, 0) = 0.5;
    d(1, 1) = 2.0;
    d(2, 2) = 7.0;
    const Mat ld = spd_log(SpdMatrix(d));
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(ld(i, i) == doctest::Approx(std::log(d(i, i))).epsilon(1e-12));

    Mat neg(2, 2);
    neg(0, 0) = 1.0;
    neg(1, 1) = -0.5;
    CHECK_THROWS_AS(SpdMatrix{neg}, std::invalid_argument);

    Mat asym(2, 2);
    asym(0, 1) = 1.0;
    CHECK_THROWS_AS(SpdMatrix{asym}, std::invalid_argument);
    CHECK_THROWS_AS(spd_exp(asym), std::invalid_argument);

    Mat spread(2, 2);
    spread(0, 0) = 1.0;
    spread(1, 1) = 1e13;
    CHECK_THROWS_AS(SpdMatrix{spread}, std::invalid_argument);
}

TEST_CASE("spd exp/log round trips and agrees with the series exponential") {
    Rng rng = make_rng(61);
    for (int t = 0; t < 50; ++t) {
        Mat s(3, 3);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = i; j < 3; ++j) {
                const double v = next_gaussian(rng);
                s(i, j) = v;
                s(j, i) = v;
            }
        const SpdMatrix e = spd_exp(s);
        const Mat back = spd_log(e);
        CHECK(frobenius_norm(back - s) <= 1e-9 * (1.0 + frobenius_norm(s)));
        CHECK(frobenius_norm(e.c - matrix_exp(s)) <= 1e-9 * (1.0 + frobenius_norm(e.c)));

        Mat a(3, 3);
        for (std::size_t i = 0; i < 9; ++i) a.data()[i] = next_gaussian(rng);
        Mat c = a * transpose(a);
        for (std::size_t i = 0; i < 3; ++i) c(i, i) += 0.1;
        const SpdMatrix cc(c);
        const Mat recon = spd_exp(spd_log(cc)).c;
        CHECK(frobenius_norm(recon - c) <= 1e-9 * (1.0 + frobenius_norm(c)));
    }
}

TEST_CASE("spd log commutes with rotations") {
    const LieAlgebra so3 = make_algebra("so3");
    Rng rng = make_rng(63);
    for (int t = 0; t < 100; ++t) {
        Mat a(3, 3);
        for (std::size_t i = 0; i < 9; ++i) a.data()[i] = next_gaussian(rng);
        Mat c = a * transpose(a);
        for (std::size_t i = 0; i < 3; ++i) c(i, i) += 0.1;
        const Mat r = sample_group(so3, 0.5, rng).g;
        const Mat lhs = spd_log(SpdMatrix(r * c * transpose(r)));
        const Mat rhs = r * spd_log(SpdMatrix(c)) * transpose(r);
        CHECK(frobenius_norm(lhs - rhs) <= 1e-8);
    }
}

TEST_CASE("skew extraction") {
    Mat sym(3, 3);
    sym(0, 1) = sym(1, 0) = 2.0;
    sym(2, 2) = -1.0;
    for (double v : skew_extract(sym)) CHECK(v == 0.0);

    const LieAlgebra so3 = make_algebra("so3");
    Rng rng = make_rng(67);
    std::vector<double> v(3);
    for (double& e : v) e = next_gaussian(rng);
    const auto back = skew_extract(hat(v, so3));
    for (std::size_t i = 0; i < 3; ++i) CHECK(back[i] == v[i]);

    for (int t = 0; t < 100; ++t) {
        Mat a(3, 3);
        for (std::size_t i = 0; i < 9; ++i) a.data()[i] = next_gaussian(rng);
        const Mat r = sample_group(so3, 0.5, rng).g;
        const auto lhs = skew_extract(r * a * transpose(r));
        const std::vector<double> va{skew_extract(a)[0], skew_extract(a)[1], skew_extract(a)[2]};
        const std::vector<double> rhs = mat_vec(r, va);
        for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(lhs[i] - rhs[i]) <= 1e-10);
    }
}

TEST_CASE("pairwise invariant feature") {
    FourMomentum zero;
    CHECK(pairwise_invariant(zero, zero) == 0.0);

    Rng rng = make_rng(71);
    FourMomentum p, q;
    for (double& e : p.p) e = next_gaussian(rng);
    for (double& e : q.p) e = next_gaussian(rng);

    // symmetric in its arguments
    CHECK(pairwise_invariant(p, q) ==
          doctest::Approx(pairwise_invariant(q, p)).epsilon(1e-12));

    // odd squashing: negating one argument flips the sign exactly
    FourMomentum qneg;
    for (std::size_t i = 0; i < 4; ++i) qneg.p[i] = -q.p[i];
    CHECK(pairwise_invariant(p, qneg) == -pairwise_invariant(p, q));

    // the underlying bilinear value is 20 p^T eta q for the 5x5 lift
    const MinkowskiSignature sig;
    double minkowski = 0.0;
    for (std::size_t i = 0; i < 4; ++i) minkowski += p.p[i] * sig.eta[i] * q.p[i];
    const double z = 20.0 * minkowski;
    const double expected = (z < 0 ? -1.0 : 1.0) * std::log1p(std::abs(z));
    CHECK(pairwise_invariant(p, q) == doctest::Approx(expected).epsilon(1e-10));

    // invariance under a shared transformation
    const LieAlgebra so13 = make_algebra("so13");
    for (int t = 0; t < 50; ++t) {
        const Mat lambda = sample_group(so13, 0.5, rng).g;
        const double before = pairwise_invariant(p, q);
        const double after = pairwise_invariant(apply4(lambda, p), apply4(lambda, q));
        CHECK(std::abs(after - before) <= 1e-8 * (1.0 + std::abs(before)));
    }
}
