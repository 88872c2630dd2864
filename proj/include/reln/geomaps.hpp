#pragma once

#include <array>
#include <vector>

#include "reln/numeric.hpp"

namespace reln {

/// Four-momentum (E, p_x, p_y, p_z) in natural units.
struct FourMomentum {
    std::array<double, 4> p{0.0, 0.0, 0.0, 0.0};
};

/// Minkowski signature used by the lift; the default is the proof's
/// convention diag(1, -1, -1, -1). The main-text convention
/// diag(-1, 1, 1, 1) works equally (the equivariance identity holds for
/// either sign).
struct MinkowskiSignature {
    std::array<double, 4> eta{1.0, -1.0, -1.0, -1.0};
};

/// Embeds p into gl(5): zero diagonal blocks, p in the upper-right column
/// and p^T eta in the lower-left row. Conjugating by diag(Lambda, 1) then
/// matches the left action p -> Lambda p.
Mat lorentz_lift(const FourMomentum& p, const MinkowskiSignature& sig = {});

/// Same construction for plain orthogonal groups: v in the upper-right,
/// v^T in the lower-left of an (n+1)x(n+1) matrix.
Mat orthogonal_lift(const std::vector<double>& v);

/// Symmetric positive-definite matrix, validated on construction
/// (symmetry to 1e-12, positive eigenvalues, eigenvalue ratio <= 1e12).
struct SpdMatrix {
    Mat c;
    explicit SpdMatrix(Mat m);
};

/// Matrix logarithm through the eigendecomposition: V log(Lambda) V^T.
Mat spd_log(const SpdMatrix& c);

/// Inverse map: V exp(Lambda) V^T of a symmetric matrix; always SPD.
SpdMatrix spd_exp(const Mat& s);

/// vee of the skew-symmetric part (A - A^T)/2 under the so(3) basis.
std::array<double, 3> skew_extract(const Mat& a);

/// psi(B(lift(p_i), lift(p_j))) with the gl(5) invariant form and the
/// sign-preserving squashing psi(z) = sign(z) log(1 + |z|).
double pairwise_invariant(const FourMomentum& pi, const FourMomentum& pj,
                          const MinkowskiSignature& sig = {});

}  // namespace reln
