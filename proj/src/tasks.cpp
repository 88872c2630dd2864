#include "reln/tasks.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>

#include "reln/geomaps.hpp"
#include "reln/layers.hpp"

namespace reln {

double sp4_target(const Mat& x, const Mat& y) {
    if (x.rows() != 4 || x.cols() != 4 || y.rows() != 4 || y.cols() != 4)
        throw std::invalid_argument("sp4_target: need 4x4 inputs");
#ifndef NDEBUG
    {
        static const LieAlgebra sp4 = make_algebra("sp4");
        vee(x, sp4);  // throws when outside the symplectic span
        vee(y, sp4);
    }
#endif
    const double txy = trace_form(x, y);
    const double tyy = trace_form(y, y);
    const double txx = trace_form(x, x);
    const double value = std::sin(txy) + std::cos(tyy) - 0.5 * tyy * tyy * tyy +
                         determinant(x * y) + std::exp(txx);
    if (!std::isfinite(value)) throw std::runtime_error("sp4_target: non-finite value");
    return value;
}

namespace {

void standardize_targets(Dataset& ds) {
    const std::size_t n = ds.targets.size();
    double mean = 0.0;
    for (double t : ds.targets) mean += t;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double t : ds.targets) var += (t - mean) * (t - mean);
    var /= static_cast<double>(n);
    double sd = std::sqrt(var);
    if (!(sd > 1e-300)) sd = 1.0;
    for (double& t : ds.targets) t = (t - mean) / sd;
    ds.target_mean = mean;
    ds.target_std = sd;
}

}  // namespace

Dataset gen_sp4_dataset(std::size_t count, double sigma, std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("gen_sp4_dataset: need at least one sample");
    if (!(sigma > 0.0)) throw std::invalid_argument("gen_sp4_dataset: sigma must be positive");
    const LieAlgebra alg = make_algebra("sp4");

    Dataset ds;
    ds.algebra_name = alg.name;
    ds.n = static_cast<std::uint32_t>(alg.n);
    ds.K = static_cast<std::uint32_t>(alg.K);
    ds.inputs_per_sample = 2;
    ds.channels = 2;
    ds.target_dim = 1;
    ds.num_samples = count;
    ds.seed = seed;
    ds.inputs.reserve(count * 2 * alg.K);
    ds.targets.reserve(count);

    Rng rng = substream(seed, "data");
    for (std::size_t i = 0; i < count; ++i) {
        const std::vector<double> xc = sample_algebra(alg, sigma, rng);
        const std::vector<double> yc = sample_algebra(alg, sigma, rng);
        ds.inputs.insert(ds.inputs.end(), xc.begin(), xc.end());
        ds.inputs.insert(ds.inputs.end(), yc.begin(), yc.end());
        ds.targets.push_back(sp4_target(hat(xc, alg), hat(yc, alg)));
    }
    standardize_targets(ds);
    return ds;
}

Dataset augment_adjoint(const Dataset& ds, std::size_t m, std::uint64_t seed, bool extend,
                        double group_sigma) {
    if (m < 1) throw std::invalid_argument("augment_adjoint: need m >= 1");
    const LieAlgebra alg = make_algebra(ds.algebra_name, ds.n);

    Dataset out = ds;
    out.seed = seed;
    out.inputs.clear();
    out.targets.clear();
    const std::size_t copies = m + (extend ? 1 : 0);
    out.num_samples = ds.num_samples * copies;
    out.inputs.reserve(out.num_samples * ds.inputs_per_sample * ds.K);
    out.targets.reserve(out.num_samples * ds.target_dim);

    Rng rng = substream(seed, "augment");
    std::vector<double> coords(ds.K);
    for (std::uint64_t i = 0; i < ds.num_samples; ++i) {
        const double* in = ds.sample_inputs(i);
        const double* tg = ds.sample_targets(i);
        if (extend) {
            out.inputs.insert(out.inputs.end(), in, in + ds.inputs_per_sample * ds.K);
            out.targets.insert(out.targets.end(), tg, tg + ds.target_dim);
        }
        for (std::size_t rep = 0; rep < m; ++rep) {
            const GroupElement g = sample_group(alg, group_sigma, rng);
            for (std::size_t p = 0; p < ds.inputs_per_sample; ++p) {
                coords.assign(in + p * ds.K, in + (p + 1) * ds.K);
                const std::vector<double> conj = apply_adjoint(g, coords);
                out.inputs.insert(out.inputs.end(), conj.begin(), conj.end());
            }
            out.targets.insert(out.targets.end(), tg, tg + ds.target_dim);
        }
    }
    return out;
}

double noise_sigma(double speed, const NoiseParams& params) {
    if (!(params.sigma_min > 0.0) || params.sigma_max < params.sigma_min || !(params.lambda > 0.0))
        throw std::invalid_argument("noise_sigma: invalid parameters");
    if (speed < 0.0) throw std::invalid_argument("noise_sigma: speed must be non-negative");
    const double sig = 1.0 / (1.0 + std::exp(-params.lambda * (speed - params.v_mid)));
    return params.sigma_min + (params.sigma_max - params.sigma_min) * sig;
}

CovSequence gen_cov_sequence(std::size_t steps, double dt, NoiseParams params, std::uint64_t seed) {
    if (steps < 2) throw std::invalid_argument("gen_cov_sequence: need at least two steps");
    if (!(dt > 0.0)) throw std::invalid_argument("gen_cov_sequence: dt must be positive");
    const LieAlgebra so3 = make_algebra("so3");
    Rng rng = substream(seed, "covseq");

    // smooth velocity: three sinusoids per axis with random amplitude,
    // frequency and phase
    struct Harmonic {
        double amp, freq, phase;
    };
    std::array<std::array<Harmonic, 3>, 3> vel_h;
    for (auto& axis : vel_h)
        for (auto& h : axis) {
            h.amp = 0.5 + 2.5 * next_unit(rng);
            h.freq = 0.05 + 0.35 * next_unit(rng);
            h.phase = 2.0 * std::numbers::pi * next_unit(rng);
        }
    // slowly varying rotation for the covariance axes
    std::array<std::array<Harmonic, 2>, 3> rot_h;
    for (auto& axis : rot_h)
        for (auto& h : axis) {
            h.amp = 0.3 + 0.9 * next_unit(rng);
            h.freq = 0.02 + 0.12 * next_unit(rng);
            h.phase = 2.0 * std::numbers::pi * next_unit(rng);
        }

    CovSequence seq;
    seq.steps = steps;
    seq.velocities.resize(steps);
    seq.noisy_velocities.resize(steps);
    seq.positions.resize(steps);
    seq.covariances.reserve(steps);

    double mean_speed = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
        const double time = static_cast<double>(t) * dt;
        for (std::size_t a = 0; a < 3; ++a) {
            double v = 0.0;
            for (const Harmonic& h : vel_h[a])
                v += h.amp * std::sin(2.0 * std::numbers::pi * h.freq * time + h.phase);
            seq.velocities[t][a] = v;
        }
        const auto& v = seq.velocities[t];
        mean_speed += std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    }
    mean_speed /= static_cast<double>(steps);
    if (params.v_mid <= 0.0) params.v_mid = mean_speed;
    seq.resolved_params = params;

    seq.positions[0] = {0.0, 0.0, 0.0};
    for (std::size_t t = 1; t < steps; ++t)
        for (std::size_t a = 0; a < 3; ++a)
            seq.positions[t][a] = seq.positions[t - 1][a] +
                                  0.5 * dt * (seq.velocities[t - 1][a] + seq.velocities[t][a]);

    // eigenvalue spread 3: scales (1/sqrt(3), 1, sqrt(3)) around sigma^2
    const double spread = std::sqrt(3.0);
    for (std::size_t t = 0; t < steps; ++t) {
        const auto& v = seq.velocities[t];
        const double speed = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        const double sigma = noise_sigma(speed, params);
        const double time = static_cast<double>(t) * dt;
        std::vector<double> rotvec(3);
        for (std::size_t a = 0; a < 3; ++a) {
            double w = 0.0;
            for (const Harmonic& h : rot_h[a])
                w += h.amp * std::sin(2.0 * std::numbers::pi * h.freq * time + h.phase);
            rotvec[a] = w;
        }
        const Mat r = matrix_exp(hat(rotvec, so3));
        const std::array<double, 3> eig = {sigma * sigma / spread, sigma * sigma,
                                           sigma * sigma * spread};
        Mat c(3, 3);
        for (std::size_t a = 0; a < 3; ++a)
            for (std::size_t i = 0; i < 3; ++i)
                for (std::size_t j = 0; j < 3; ++j) c(i, j) += eig[a] * r(i, a) * r(j, a);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = i + 1; j < 3; ++j) {
                const double s = 0.5 * (c(i, j) + c(j, i));
                c(i, j) = s;
                c(j, i) = s;
            }
        seq.covariances.push_back(c);

        const std::array<double, 3> noise = mvn_noise(c, rng);
        for (std::size_t i = 0; i < 3; ++i) seq.noisy_velocities[t][i] = v[i] + noise[i];
    }
    return seq;
}

std::array<double, 3> mvn_noise(const Mat& cov, Rng& rng) {
    if (cov.rows() != 3 || cov.cols() != 3) throw std::invalid_argument("mvn_noise: need 3x3");
    const EighResult e = jacobi_eigh(cov);
    std::array<double, 3> z;
    for (double& v : z) v = next_gaussian(rng);
    std::array<double, 3> out{0.0, 0.0, 0.0};
    for (std::size_t a = 0; a < 3; ++a) {
        const double s = std::sqrt(std::max(e.values[a], 0.0));
        for (std::size_t i = 0; i < 3; ++i) out[i] += e.vectors(i, a) * s * z[a];
    }
    return out;
}

Dataset gen_cov_dataset(std::size_t sequences, std::size_t steps, double dt, NoiseParams params,
                        std::uint64_t seed) {
    if (sequences < 1) throw std::invalid_argument("gen_cov_dataset: need at least one sequence");
    const LieAlgebra gl3 = make_algebra("gln", 3);
    const LieAlgebra so3 = make_algebra("so3");

    Dataset ds;
    ds.algebra_name = gl3.name;
    ds.n = 3;
    ds.K = static_cast<std::uint32_t>(gl3.K);
    ds.inputs_per_sample = 2;
    ds.channels = 2;
    ds.target_dim = 3;
    ds.num_samples = sequences * steps;
    ds.seed = seed;
    ds.inputs.reserve(ds.num_samples * 2 * gl3.K);
    ds.targets.reserve(ds.num_samples * 3);

    for (std::size_t s = 0; s < sequences; ++s) {
        Rng seq_seed = fork(substream(seed, "covseq-sequence"), s);
        const CovSequence seq = gen_cov_sequence(steps, dt, params, next_u64(seq_seed));
        for (std::size_t t = 0; t < steps; ++t) {
            const std::vector<double> vcoords(seq.noisy_velocities[t].begin(),
                                              seq.noisy_velocities[t].end());
            const std::vector<double> lifted = vee(hat(vcoords, so3), gl3);
            const std::vector<double> logc = vee(spd_log(SpdMatrix(seq.covariances[t])), gl3);
            ds.inputs.insert(ds.inputs.end(), lifted.begin(), lifted.end());
            ds.inputs.insert(ds.inputs.end(), logc.begin(), logc.end());
            ds.targets.insert(ds.targets.end(), seq.velocities[t].begin(),
                              seq.velocities[t].end());
        }
    }
    standardize_targets(ds);
    return ds;
}

namespace {

constexpr std::uint32_t kRlndVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& b, std::size_t& pos) {
    if (pos + 4 > b.size()) throw std::runtime_error("dataset truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[pos + i]) << (8 * i);
    pos += 4;
    return v;
}

std::uint64_t get_u64(const std::vector<std::uint8_t>& b, std::size_t& pos) {
    if (pos + 8 > b.size()) throw std::runtime_error("dataset truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[pos + i]) << (8 * i);
    pos += 8;
    return v;
}

double get_f64(const std::vector<std::uint8_t>& b, std::size_t& pos) {
    const std::uint64_t bits = get_u64(b, pos);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'R', 'L', 'N', 'D'});
    put_u32(out, kRlndVersion);
    put_u32(out, static_cast<std::uint32_t>(ds.algebra_name.size()));
    out.insert(out.end(), ds.algebra_name.begin(), ds.algebra_name.end());
    put_u32(out, ds.n);
    put_u32(out, ds.K);
    put_u32(out, ds.inputs_per_sample);
    put_u32(out, ds.channels);
    put_u32(out, ds.target_dim);
    put_u64(out, ds.num_samples);
    put_u64(out, ds.seed);
    put_f64(out, ds.target_mean);
    put_f64(out, ds.target_std);
    const std::size_t doff = out.size();
    out.resize(doff + (ds.inputs.size() + ds.targets.size()) * 8);
    std::memcpy(out.data() + doff, ds.inputs.data(), ds.inputs.size() * 8);
    std::memcpy(out.data() + doff + ds.inputs.size() * 8, ds.targets.data(), ds.targets.size() * 8);
    put_u32(out, crc32(out.data(), out.size()));
    return out;
}

Dataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8) throw std::runtime_error("dataset truncated");
    if (std::memcmp(bytes.data(), "RLND", 4) != 0) throw std::runtime_error("bad dataset magic");
    {
        std::size_t tail = bytes.size() - 4;
        const std::uint32_t stored = get_u32(bytes, tail);
        if (crc32(bytes.data(), bytes.size() - 4) != stored)
            throw std::runtime_error("dataset checksum failure");
    }
    std::size_t pos = 4;
    const std::uint32_t version = get_u32(bytes, pos);
    if (version != kRlndVersion)
        throw std::runtime_error("unsupported dataset version " + std::to_string(version));
    Dataset ds;
    const std::uint32_t name_len = get_u32(bytes, pos);
    if (pos + name_len > bytes.size()) throw std::runtime_error("dataset truncated");
    ds.algebra_name.assign(bytes.begin() + pos, bytes.begin() + pos + name_len);
    pos += name_len;
    ds.n = get_u32(bytes, pos);
    ds.K = get_u32(bytes, pos);
    ds.inputs_per_sample = get_u32(bytes, pos);
    ds.channels = get_u32(bytes, pos);
    ds.target_dim = get_u32(bytes, pos);
    ds.num_samples = get_u64(bytes, pos);
    ds.seed = get_u64(bytes, pos);
    ds.target_mean = get_f64(bytes, pos);
    ds.target_std = get_f64(bytes, pos);

    const std::size_t n_inputs = ds.num_samples * ds.inputs_per_sample * ds.K;
    const std::size_t n_targets = ds.num_samples * ds.target_dim;
    if (pos + (n_inputs + n_targets) * 8 + 4 != bytes.size())
        throw std::runtime_error("dataset truncated");
    ds.inputs.resize(n_inputs);
    ds.targets.resize(n_targets);
    std::memcpy(ds.inputs.data(), bytes.data() + pos, n_inputs * 8);
    std::memcpy(ds.targets.data(), bytes.data() + pos + n_inputs * 8, n_targets * 8);
    return ds;
}

void write_dataset(const Dataset& ds, const std::string& path) {
    write_file(path, encode_dataset(ds));
}

Dataset read_dataset(const std::string& path) { return decode_dataset(read_file(path)); }

}  // namespace reln
