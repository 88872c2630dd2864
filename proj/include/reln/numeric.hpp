#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

namespace reln {

/// Bad command-line usage (exit code 2 in the CLI).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Filesystem/stream failure (exit code 3 in the CLI).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles. Sized for the small problems in this
/// library (ambient dimension <= 5, algebra dimension <= 25).
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), d_(rows * cols, 0.0) {}

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return d_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return d_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return d_[r * cols_ + c]; }

    double* data() { return d_.data(); }
    const double* data() const { return d_.data(); }

    Mat& operator+=(const Mat& o);
    Mat& operator-=(const Mat& o);
    Mat& operator*=(double s);

    friend bool operator==(const Mat& a, const Mat& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.d_ == b.d_;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> d_;
};

Mat operator+(Mat a, const Mat& b);
Mat operator-(Mat a, const Mat& b);
Mat operator*(const Mat& a, const Mat& b);
Mat operator*(double s, Mat a);

Mat transpose(const Mat& a);
double trace(const Mat& a);
double frobenius_norm(const Mat& a);
/// Frobenius inner product <A, B> = tr(A^T B) = sum_ij A_ij B_ij.
double frobenius_dot(const Mat& a, const Mat& b);
double max_abs(const Mat& a);
bool all_finite(const Mat& a);

std::vector<double> mat_vec(const Mat& a, const std::vector<double>& x);

/// LU factorization with partial pivoting (Doolittle). `parity` is the sign
/// of the row permutation; `singular` is set when a pivot is exactly zero.
struct LuDecomposition {
    Mat lu;
    std::vector<int> perm;
    double parity = 1.0;
    bool singular = false;
};

LuDecomposition lu_factor(Mat a);
double determinant(const Mat& a);
Mat lu_solve(const LuDecomposition& f, const Mat& rhs);
Mat inverse(const Mat& a);

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenvalues ascending; eigenvectors are the columns of `vectors`.
/// Iterates until the off-diagonal Frobenius norm drops below
/// 1e-13 * ||S||_F (or 100 sweeps, after which it throws).
struct EighResult {
    std::vector<double> values;
    Mat vectors;
};

EighResult jacobi_eigh(const Mat& s);

/// Numerical rank: number of singular values above `rel_tol` times the
/// largest. Singular values are obtained as sqrt of the eigenvalues of
/// A^T A via the Jacobi solver.
std::size_t numerical_rank(const Mat& a, double rel_tol = 1e-10);

/// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320, init and final xor
/// 0xFFFFFFFF). crc32("123456789") == 0xCBF43926.
std::uint32_t crc32(const void* data, std::size_t n, std::uint32_t crc = 0);

/// Counter-based pseudo-random generator (SplitMix64). The state advances by
/// the fixed increment 0x9E3779B97F4A7C15 per draw and each output is the
/// SplitMix64 finalizer of the new state, so a stream is a pure function of
/// (seed, draw index). Substreams are derived by XOR-ing the seed with the
/// FNV-1a hash of a stream name; forks mix in an index through the same
/// finalizer. Gaussians use Box-Muller on two uniform draws (the sine half
/// is discarded so every draw consumes exactly two words).
struct Rng {
    std::uint64_t state = 0;
};

std::uint64_t mix64(std::uint64_t z);
std::uint64_t fnv1a64(std::string_view s);

Rng make_rng(std::uint64_t seed);
Rng substream(std::uint64_t seed, std::string_view name);
Rng fork(const Rng& base, std::uint64_t index);

std::uint64_t next_u64(Rng& r);
/// Uniform double in [0, 1) with 53 random bits.
double next_unit(Rng& r);
/// Standard normal via Box-Muller: sqrt(-2 ln(1-u1)) * cos(2 pi u2).
double next_gaussian(Rng& r);

/// Runs fn(i) for i in [0, n) on up to `threads` workers using a static
/// block partition. fn must only touch state private to its index, so the
/// result is identical for any thread count.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace reln
