#pragma once

#include <string>
#include <utility>
#include <vector>

#include "reln/liealg.hpp"
#include "reln/numeric.hpp"

namespace reln {

enum class FormKind { trace, killing_oracle, modified_gl, modified_general };

/// A symmetric bilinear form on a Lie algebra, stored as its Gram matrix in
/// basis coordinates: form(x, y) = x^T gram y.
struct BilinearForm {
    FormKind kind = FormKind::trace;
    std::string algebra_name;
    Mat gram;

    double apply(const std::vector<double>& x, const std::vector<double>& y) const;
};

/// <X, Y>_tr = tr(XY).
double trace_form(const Mat& x, const Mat& y);

/// Gram of the trace form on the basis.
BilinearForm trace_form_on(const LieAlgebra& alg);

/// Brute-force Killing form B(X, Y) = tr(ad_X ad_Y), assembled entrywise
/// from the structure constants. Used as the independent oracle in tests.
BilinearForm killing_oracle(const LieAlgebra& alg);

/// The nondegenerate invariant form on gl(n): 2n tr(XY) - tr(X) tr(Y).
double modified_form_gl(const Mat& x, const Mat& y);

/// Gram of modified_form_gl on the basis of any matrix algebra (restricting
/// the gl(n) form to the subalgebra).
BilinearForm modified_gl_form(const LieAlgebra& alg);

/// Coordinate vectors spanning the center and the semisimple ideal.
struct CenterDecomposition {
    std::vector<std::vector<double>> center;
    std::vector<std::vector<double>> semisimple;
};

/// For gln: center = span of vee(I), semisimple = the traceless subspace.
CenterDecomposition gl_center_decomposition(const LieAlgebra& alg);

/// Gram (on the listed center vectors) of <Z1, Z2> = coeff tr(Z1) tr(Z2).
Mat trace_center_inner(const LieAlgebra& alg, const CenterDecomposition& d, double coeff = 1.0);

/// Block construction: the Killing oracle on the semisimple ideal, a chosen
/// positive-definite inner product on the center, zero cross terms; the
/// result is expressed back in the original basis coordinates. center_inner
/// is the Gram on the decomposition's center vectors.
BilinearForm modified_form_general(const LieAlgebra& alg, const CenterDecomposition& d,
                                   const Mat& center_inner);

/// (1/|G|) sum_g g^T M g over a finite list of invertible actions on the
/// center. Invariant under every listed g when the list is closed under
/// composition.
Mat averaged_center_form(const Mat& center_inner, const std::vector<Mat>& component_actions);

/// Max relative deviation |form(Ad_g x, Ad_g y) - form(x, y)| / (1 + |form(x, y)|)
/// over `trials` random draws of (g, x, y).
double check_ad_invariance(const BilinearForm& form, const LieAlgebra& alg, std::size_t trials,
                           double sigma, Rng& rng);

/// Numerical rank of the Gram matrix (singular values above 1e-10 of the
/// largest).
std::size_t nondegeneracy_rank(const BilinearForm& form);

/// Splits X into its traceless part and tr(X); X = traceless + (tr/n) I.
std::pair<Mat, double> decompose_gl(const Mat& x);

}  // namespace reln
