#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "reln/numeric.hpp"

namespace reln {

/// A matrix Lie algebra with a fixed ordered basis {E_1..E_K} of n-by-n
/// matrices, its structure constants c (so [E_i, E_j] = sum_k c[i][j][k] E_k)
/// and the inverse Frobenius Gram matrix used by vee.
struct LieAlgebra {
    std::string name;
    std::size_t n = 0;
    std::size_t K = 0;
    std::vector<Mat> basis;
    std::vector<double> structure;  // [K, K, K]
    Mat frobenius_gram_inverse;     // K x K

    /// Nonzero structure constants with i < j, for fast bracket contraction.
    struct StructEntry {
        std::uint32_t i, j, k;
        double v;
    };
    std::vector<StructEntry> structure_sparse;

    double c(std::size_t i, std::size_t j, std::size_t k) const {
        return structure[(i * K + j) * K + k];
    }
};

/// Builds one of the supported algebras: "so3", "sl3", "sp4", "so13", or
/// "gln" (which needs n >= 2; the others ignore n).
LieAlgebra make_algebra(std::string_view name, std::size_t n = 0);

/// Builds an algebra from an explicit basis; the basis must be linearly
/// independent and closed under the bracket.
LieAlgebra make_algebra_from_basis(std::string name, std::size_t n, std::vector<Mat> basis);

/// hat: coordinates -> matrix, x -> sum_i x_i E_i.
Mat hat(const std::vector<double>& x, const LieAlgebra& alg);

/// vee: matrix -> coordinates of the Frobenius-orthogonal projection onto
/// the span of the basis. Throws if the projection residual exceeds
/// tol_scale * (1 + ||X||_F).
std::vector<double> vee(const Mat& x, const LieAlgebra& alg, double tol_scale = 1e-8);

/// Matrix commutator [X, Y] = XY - YX.
Mat bracket(const Mat& x, const Mat& y);

/// Recomputes the structure tensor from the basis (brackets pushed through
/// vee). Throws if some bracket falls outside the span.
std::vector<double> structure_constants(const LieAlgebra& alg);

/// K-by-K matrix of ad_x : y -> [hat(x), y] in basis coordinates.
Mat ad_matrix(const std::vector<double>& x, const LieAlgebra& alg);

/// Matrix exponential by scaling-and-squaring with a degree-18 Taylor
/// series on the scaled matrix (scaled to Frobenius norm <= 0.5).
Mat matrix_exp(const Mat& x);

/// i.i.d. Gaussian coordinates with standard deviation sigma.
std::vector<double> sample_algebra(const LieAlgebra& alg, double sigma, Rng& rng);

/// A group element g = exp(hat(x)) together with its exact-exponential
/// inverse exp(-hat(x)) and the K-by-K vectorized adjoint, whose columns are
/// vee(g E_i g^-1).
struct GroupElement {
    Mat g;
    Mat g_inv;
    Mat adj;  // K x K
};

GroupElement group_from_coords(const LieAlgebra& alg, const std::vector<double>& coords);

/// Samples g = exp(hat(x)) with Gaussian x. Resamples (up to 10 times) when
/// the condition estimate ||g||_F ||g^-1||_F exceeds 1e6, then throws.
GroupElement sample_group(const LieAlgebra& alg, double sigma, Rng& rng);

/// adj * x.
std::vector<double> apply_adjoint(const GroupElement& g, const std::vector<double>& x);

}  // namespace reln
