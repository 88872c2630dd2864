#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "reln/liealg.hpp"
#include "reln/numeric.hpp"

namespace reln {

/// In-memory dataset matching the RLND container: N samples, each with
/// `inputs_per_sample` algebra elements of dimension K and a target vector.
/// Targets are stored standardized; the affine parameters (mean, std) are
/// kept so raw values can be recovered exactly.
struct Dataset {
    std::string algebra_name;
    std::uint32_t n = 0;
    std::uint32_t K = 0;
    std::uint32_t inputs_per_sample = 0;
    std::uint32_t channels = 0;
    std::uint32_t target_dim = 0;
    std::uint64_t num_samples = 0;
    std::uint64_t seed = 0;
    double target_mean = 0.0;
    double target_std = 1.0;
    std::vector<double> inputs;   // [N, inputs_per_sample, K]
    std::vector<double> targets;  // [N, target_dim]

    const double* sample_inputs(std::uint64_t i) const {
        return &inputs[i * inputs_per_sample * K];
    }
    const double* sample_targets(std::uint64_t i) const { return &targets[i * target_dim]; }
};

/// The conjugation-invariant regression target on sp(4) pairs:
/// sin(tr XY) + cos(tr YY) - (1/2) tr(YY)^3 + det(XY) + exp(tr XX).
double sp4_target(const Mat& x, const Mat& y);

/// N pairs of sp(4) elements with i.i.d. Gaussian coordinates (sigma keeps
/// the exp term bounded); targets standardized.
Dataset gen_sp4_dataset(std::size_t count, double sigma, std::uint64_t seed);

/// Conjugates every sample's inputs by M sampled group elements; targets
/// are copied unchanged. extend = true keeps the originals as well.
Dataset augment_adjoint(const Dataset& ds, std::size_t m, std::uint64_t seed, bool extend = false,
                        double group_sigma = 0.5);

/// Sigmoid noise magnitude between sigma_min and sigma_max (m/s).
struct NoiseParams {
    double sigma_min = 0.2;
    double sigma_max = 1.0;
    double lambda = 0.8;
    double v_mid = 0.0;  // <= 0 means "use the mean ground-truth speed"
};

double noise_sigma(double speed, const NoiseParams& params);

/// One draw from N(0, cov) through the eigenfactorization of cov.
std::array<double, 3> mvn_noise(const Mat& cov, Rng& rng);

/// A synthetic velocity/covariance sequence: smooth sinusoidal ground-truth
/// velocities, trapezoid-integrated positions, per-step anisotropic
/// covariances (eigenvalue spread 3, slowly rotating axes) whose magnitude
/// follows the sigmoid noise law, and noisy velocities drawn from
/// N(v_gt, C).
struct CovSequence {
    std::size_t steps = 0;
    std::vector<std::array<double, 3>> velocities;
    std::vector<std::array<double, 3>> noisy_velocities;
    std::vector<std::array<double, 3>> positions;
    std::vector<Mat> covariances;
    NoiseParams resolved_params;  // with v_mid filled in
};

CovSequence gen_cov_sequence(std::size_t steps, double dt, NoiseParams params, std::uint64_t seed);

/// Packs cov sequences into the common container on gl(3): per time step the
/// two inputs are hat(v_noisy) and log C (both as gl(3) coordinates) and the
/// target is the ground-truth velocity.
Dataset gen_cov_dataset(std::size_t sequences, std::size_t steps, double dt, NoiseParams params,
                        std::uint64_t seed);

std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes);
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace reln
