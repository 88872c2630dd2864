#include "reln/numeric.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <thread>

namespace reln {

namespace {

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Mat& Mat::operator+=(const Mat& o) {
    check_same_shape(*this, o, "Mat::+=");
    for (std::size_t i = 0; i < d_.size(); ++i) d_[i] += o.d_[i];
    return *this;
}

Mat& Mat::operator-=(const Mat& o) {
    check_same_shape(*this, o, "Mat::-=");
    for (std::size_t i = 0; i < d_.size(); ++i) d_[i] -= o.d_[i];
    return *this;
}

Mat& Mat::operator*=(double s) {
    for (double& v : d_) v *= s;
    return *this;
}

Mat operator+(Mat a, const Mat& b) { return a += b; }
Mat operator-(Mat a, const Mat& b) { return a -= b; }
Mat operator*(double s, Mat a) { return a *= s; }

Mat operator*(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("Mat::*: shape mismatch");
    Mat out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

Mat transpose(const Mat& a) {
    Mat out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

double trace(const Mat& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("trace: not square");
    double t = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
    return t;
}

double frobenius_norm(const Mat& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows() * a.cols(); ++i) s += a.data()[i] * a.data()[i];
    return std::sqrt(s);
}

double frobenius_dot(const Mat& a, const Mat& b) {
    check_same_shape(a, b, "frobenius_dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows() * a.cols(); ++i) s += a.data()[i] * b.data()[i];
    return s;
}

double max_abs(const Mat& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.rows() * a.cols(); ++i) m = std::max(m, std::abs(a.data()[i]));
    return m;
}

bool all_finite(const Mat& a) {
    for (std::size_t i = 0; i < a.rows() * a.cols(); ++i)
        if (!std::isfinite(a.data()[i])) return false;
    return true;
}

std::vector<double> mat_vec(const Mat& a, const std::vector<double>& x) {
    if (a.cols() != x.size()) throw std::invalid_argument("mat_vec: shape mismatch");
    std::vector<double> y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

LuDecomposition lu_factor(Mat a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("lu_factor: not square");
    const std::size_t n = a.rows();
    LuDecomposition f;
    f.perm.resize(n);
    for (std::size_t i = 0; i < n; ++i) f.perm[i] = static_cast<int>(i);

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        double best = std::abs(a(col, col));
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a(r, col)) > best) {
                best = std::abs(a(r, col));
                piv = r;
            }
        }
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(piv, j), a(col, j));
            std::swap(f.perm[piv], f.perm[col]);
            f.parity = -f.parity;
        }
        const double d = a(col, col);
        if (d == 0.0) {
            f.singular = true;
            continue;
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double m = a(r, col) / d;
            a(r, col) = m;
            if (m == 0.0) continue;
            for (std::size_t j = col + 1; j < n; ++j) a(r, j) -= m * a(col, j);
        }
    }
    f.lu = std::move(a);
    return f;
}

double determinant(const Mat& a) {
    LuDecomposition f = lu_factor(a);
    if (f.singular) return 0.0;
    double d = f.parity;
    for (std::size_t i = 0; i < f.lu.rows(); ++i) d *= f.lu(i, i);
    return d;
}

Mat lu_solve(const LuDecomposition& f, const Mat& rhs) {
    if (f.singular) throw std::runtime_error("lu_solve: singular matrix");
    const std::size_t n = f.lu.rows();
    if (rhs.rows() != n) throw std::invalid_argument("lu_solve: shape mismatch");
    Mat x(n, rhs.cols());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < rhs.cols(); ++j)
            x(i, j) = rhs(static_cast<std::size_t>(f.perm[i]), j);
    // forward substitution, unit lower triangle
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t k = 0; k < i; ++k) {
            const double m = f.lu(i, k);
            if (m == 0.0) continue;
            for (std::size_t j = 0; j < rhs.cols(); ++j) x(i, j) -= m * x(k, j);
        }
    // back substitution
    for (std::size_t ii = n; ii-- > 0;) {
        for (std::size_t k = ii + 1; k < n; ++k) {
            const double m = f.lu(ii, k);
            if (m == 0.0) continue;
            for (std::size_t j = 0; j < rhs.cols(); ++j) x(ii, j) -= m * x(k, j);
        }
        const double d = f.lu(ii, ii);
        for (std::size_t j = 0; j < rhs.cols(); ++j) x(ii, j) /= d;
    }
    return x;
}

Mat inverse(const Mat& a) {
    LuDecomposition f = lu_factor(a);
    if (f.singular) throw std::runtime_error("inverse: singular matrix");
    return lu_solve(f, Mat::identity(a.rows()));
}

EighResult jacobi_eigh(const Mat& s) {
    if (s.rows() != s.cols()) throw std::invalid_argument("jacobi_eigh: not square");
    const std::size_t n = s.rows();
    const double asym_tol = 1e-10 * (1.0 + max_abs(s));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(s(i, j) - s(j, i)) > asym_tol)
                throw std::invalid_argument("jacobi_eigh: input not symmetric");

    Mat a = s;
    // symmetrize exactly so rotations keep symmetry
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = 0.5 * (a(i, j) + a(j, i));
            a(i, j) = v;
            a(j, i) = v;
        }
    Mat v = Mat::identity(n);
    const double scale = frobenius_norm(a);
    const double stop = 1e-13 * (scale > 0.0 ? scale : 1.0);

    bool converged = (n < 2);
    for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * a(p, q) * a(p, q);
        if (std::sqrt(off) <= stop) {
            converged = true;
            break;
        }
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
    }
    if (!converged) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * a(p, q) * a(p, q);
        if (std::sqrt(off) > stop) throw std::runtime_error("jacobi_eigh: no convergence in 100 sweeps");
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

    EighResult out;
    out.values.resize(n);
    out.vectors = Mat(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = a(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
    }
    return out;
}

std::size_t numerical_rank(const Mat& a, double rel_tol) {
    const Mat ata = transpose(a) * a;
    EighResult e = jacobi_eigh(ata);
    double smax = 0.0;
    std::vector<double> sv(e.values.size());
    for (std::size_t i = 0; i < e.values.size(); ++i) {
        sv[i] = std::sqrt(std::max(e.values[i], 0.0));
        smax = std::max(smax, sv[i]);
    }
    if (smax == 0.0) return 0;
    std::size_t r = 0;
    for (double s : sv)
        if (s > rel_tol * smax) ++r;
    return r;
}

std::uint32_t crc32(const void* data, std::size_t n, std::uint32_t crc) {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint32_t c = crc ^ 0xFFFFFFFFu;
    for (std::size_t i = 0; i < n; ++i) c = table[(c ^ p[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

Rng make_rng(std::uint64_t seed) { return Rng{seed}; }

Rng substream(std::uint64_t seed, std::string_view name) { return Rng{seed ^ fnv1a64(name)}; }

Rng fork(const Rng& base, std::uint64_t index) {
    return Rng{mix64(base.state + (index + 1) * 0x9E3779B97F4A7C15ull)};
}

std::uint64_t next_u64(Rng& r) {
    r.state += 0x9E3779B97F4A7C15ull;
    return mix64(r.state);
}

double next_unit(Rng& r) { return static_cast<double>(next_u64(r) >> 11) * 0x1.0p-53; }

double next_gaussian(Rng& r) {
    const double u1 = next_unit(r);
    const double u2 = next_unit(r);
    const double radius = std::sqrt(-2.0 * std::log(1.0 - u1));
    return radius * std::cos(2.0 * std::numbers::pi * u2);
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    if (threads <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        pool.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> g(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace reln
