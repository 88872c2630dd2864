#include "reln/audit.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "reln/geomaps.hpp"

namespace reln {

LieAlgebra algebra_from_cli_name(const std::string& name) {
    if (name == "so3" || name == "sl3" || name == "sp4" || name == "so13")
        return make_algebra(name);
    if (name.size() > 2 && name.substr(0, 2) == "gl") {
        const std::size_t n = std::stoul(name.substr(2));
        return make_algebra("gln", n);
    }
    throw UsageError("unknown algebra '" + name + "' (expected so3, sl3, sp4, so13 or gl<k>)");
}

namespace {

Mat gaussian_mat(std::size_t rows, std::size_t cols, double sd, Rng& rng) {
    Mat m(rows, cols);
    for (std::size_t i = 0; i < rows * cols; ++i) m.data()[i] = sd * next_gaussian(rng);
    return m;
}

AlgFeature gaussian_feature(std::size_t rows, std::size_t K, std::size_t C, Rng& rng) {
    AlgFeature x(rows, K, C);
    for (double& v : x.data) v = next_gaussian(rng);
    return x;
}

double feature_norm(const AlgFeature& x) {
    double s = 0.0;
    for (double v : x.data) s += v * v;
    return std::sqrt(s);
}

double feature_dev(const AlgFeature& a, const AlgFeature& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return std::sqrt(s) / (1.0 + feature_norm(b));
}

}  // namespace

double layer_equivariance_dev(LayerKind kind, const LieAlgebra& alg, const BilinearForm& form,
                              std::size_t n_group, double sigma, double alpha, Rng& rng) {
    const std::size_t B = 2, C = 3;
    const std::size_t N = kind == LayerKind::pool ? 3 : 1;
    const double sd = 1.0 / std::sqrt(static_cast<double>(C));
    const Mat wa = gaussian_mat(C, C, sd, rng);
    const Mat wb = gaussian_mat(C, C, sd, rng);
    const AlgFeature x = gaussian_feature(B * N, alg.K, C, rng);

    auto apply = [&](const AlgFeature& f, PoolCache* pc) {
        switch (kind) {
            case LayerKind::linear: return linear_forward(f, wa);
            case LayerKind::relu: return relu_forward(f, wa, form, 0.0);
            case LayerKind::leaky_relu: return relu_forward(f, wa, form, alpha);
            case LayerKind::bracket: return bracket_forward(f, alg, wa, wb);
            case LayerKind::pool: return pool_forward(f, N, wa, form, pc);
        }
        throw std::logic_error("layer_equivariance_dev: bad kind");
    };

    PoolCache base_pool;
    const AlgFeature base = apply(x, &base_pool);
    double worst = 0.0;
    for (std::size_t t = 0; t < n_group; ++t) {
        const GroupElement g = sample_group(alg, sigma, rng);
        PoolCache conj_pool;
        const AlgFeature lhs = apply(adjoint_feature(g.adj, x), &conj_pool);
        const AlgFeature rhs = adjoint_feature(g.adj, base);
        if (kind == LayerKind::pool) {
            double min_margin = std::numeric_limits<double>::infinity();
            for (double m : base_pool.margins) min_margin = std::min(min_margin, m);
            if (min_margin <= 1e-6) continue;  // tie region: selection not required to be stable
            if (base_pool.selected != conj_pool.selected)
                return std::numeric_limits<double>::infinity();
        }
        worst = std::max(worst, feature_dev(lhs, rhs));
    }
    return worst;
}

double gate_invariance_dev(const LieAlgebra& alg, const BilinearForm& form, std::size_t n_group,
                           double sigma, Rng& rng) {
    const std::size_t B = 2, C = 3;
    const Mat u = gaussian_mat(C, C, 1.0 / std::sqrt(static_cast<double>(C)), rng);
    const AlgFeature x = gaussian_feature(B, alg.K, C, rng);
    ReluCache base;
    relu_forward(x, u, form, 0.0, &base);
    double worst = 0.0;
    for (std::size_t t = 0; t < n_group; ++t) {
        const GroupElement g = sample_group(alg, sigma, rng);
        ReluCache conj;
        relu_forward(adjoint_feature(g.adj, x), u, form, 0.0, &conj);
        for (std::size_t i = 0; i < base.gates.size(); ++i)
            worst = std::max(worst,
                             std::abs(conj.gates[i] - base.gates[i]) / (1.0 + std::abs(base.gates[i])));
    }
    return worst;
}

double readout_invariance_dev(const LieAlgebra& alg, const BilinearForm& form, std::size_t n_group,
                              double sigma, Rng& rng) {
    const std::size_t B = 2, C = 3;
    const AlgFeature x = gaussian_feature(B, alg.K, C, rng);
    const std::vector<double> base = invariant_forward(x, form);
    double worst = 0.0;
    for (std::size_t t = 0; t < n_group; ++t) {
        const GroupElement g = sample_group(alg, sigma, rng);
        const std::vector<double> conj = invariant_forward(adjoint_feature(g.adj, x), form);
        for (std::size_t i = 0; i < base.size(); ++i)
            worst = std::max(worst, std::abs(conj[i] - base[i]) / (1.0 + std::abs(base[i])));
    }
    return worst;
}

std::vector<PropertyResult> audit_algebra(const std::string& algebra_cli_name, std::size_t trials,
                                          std::uint64_t seed, bool corrupt_form) {
    const LieAlgebra alg = algebra_from_cli_name(algebra_cli_name);
    BilinearForm form = modified_gl_form(alg);
    if (corrupt_form) {
        Rng rng = substream(seed, "corrupt");
        Mat g = gaussian_mat(alg.K, alg.K, 1.0, rng);
        form.gram = 0.5 * (g + transpose(g));
    }
    const std::size_t layer_trials = std::min<std::size_t>(trials, 100);
    const double sigma = 0.5;

    std::vector<PropertyResult> out;
    auto push = [&](const std::string& name, double dev, double tol) {
        out.push_back({name, dev, tol, dev <= tol});
    };

    {
        Rng rng = substream(seed, "hatvee");
        double worst = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            std::vector<double> x = sample_algebra(alg, 1.0, rng);
            const std::vector<double> back = vee(hat(x, alg), alg);
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                num += (back[i] - x[i]) * (back[i] - x[i]);
                den += x[i] * x[i];
            }
            worst = std::max(worst, std::sqrt(num) / (1.0 + std::sqrt(den)));
        }
        push("hat_vee_roundtrip", worst, 1e-12);
    }
    {
        double worst = 0.0;
        for (std::size_t i = 0; i < alg.K; ++i)
            for (std::size_t j = 0; j < alg.K; ++j) {
                std::vector<double> c(alg.K);
                for (std::size_t k = 0; k < alg.K; ++k) c[k] = alg.c(i, j, k);
                worst = std::max(worst,
                                 frobenius_norm(bracket(alg.basis[i], alg.basis[j]) - hat(c, alg)));
            }
        push("structure_reproduces_brackets", worst, 1e-12);
    }
    {
        Rng rng = substream(seed, "autom");
        double worst = 0.0;
        for (std::size_t t = 0; t < layer_trials; ++t) {
            const GroupElement g = sample_group(alg, sigma, rng);
            const Mat x = hat(sample_algebra(alg, 1.0, rng), alg);
            const Mat y = hat(sample_algebra(alg, 1.0, rng), alg);
            const Mat lhs = g.g * bracket(x, y) * g.g_inv;
            const Mat rhs = bracket(g.g * x * g.g_inv, g.g * y * g.g_inv);
            worst = std::max(worst, frobenius_norm(lhs - rhs) / (1.0 + frobenius_norm(rhs)));
        }
        push("adjoint_is_bracket_automorphism", worst, 1e-9);
    }
    {
        Rng rng = substream(seed, "compose");
        double worst = 0.0;
        for (std::size_t t = 0; t < layer_trials; ++t) {
            const std::vector<double> xc = sample_algebra(alg, sigma, rng);
            const std::vector<double> yc = sample_algebra(alg, sigma, rng);
            const GroupElement g = group_from_coords(alg, xc);
            const GroupElement h = group_from_coords(alg, yc);
            GroupElement gh;
            gh.g = g.g * h.g;
            gh.g_inv = h.g_inv * g.g_inv;
            Mat adj(alg.K, alg.K);
            for (std::size_t i = 0; i < alg.K; ++i) {
                const std::vector<double> col = vee(gh.g * alg.basis[i] * gh.g_inv, alg);
                for (std::size_t k = 0; k < alg.K; ++k) adj(k, i) = col[k];
            }
            const Mat prod = g.adj * h.adj;
            worst = std::max(worst, frobenius_norm(adj - prod) / (1.0 + frobenius_norm(prod)));
        }
        push("vectorized_adjoint_composes", worst, 1e-9);
    }
    {
        Rng rng = substream(seed, "forminv");
        push("form_ad_invariance", check_ad_invariance(form, alg, trials, sigma, rng), 1e-8);
    }
    {
        const std::size_t rank = nondegeneracy_rank(form);
        push("form_full_rank", static_cast<double>(alg.K - rank), 0.0);
    }

    const struct {
        LayerKind kind;
        const char* name;
        double alpha;
    } layer_list[] = {
        {LayerKind::linear, "layer_equivariance_linear", 0.0},
        {LayerKind::relu, "layer_equivariance_relu", 0.0},
        {LayerKind::leaky_relu, "layer_equivariance_leaky_relu", 0.2},
        {LayerKind::bracket, "layer_equivariance_bracket", 0.0},
        {LayerKind::pool, "layer_equivariance_pool", 0.0},
    };
    for (const auto& l : layer_list) {
        Rng rng = substream(seed, l.name);
        push(l.name, layer_equivariance_dev(l.kind, alg, form, layer_trials, sigma, l.alpha, rng),
             1e-9);
    }
    {
        Rng rng = substream(seed, "gate");
        push("relu_gate_invariance", gate_invariance_dev(alg, form, layer_trials, sigma, rng), 1e-9);
    }
    {
        Rng rng = substream(seed, "readout");
        push("invariant_readout", readout_invariance_dev(alg, form, layer_trials, sigma, rng), 1e-9);
    }

    if (alg.name == "so3") {
        {
            Rng rng = substream(seed, "dot");
            double worst = 0.0;
            for (std::size_t t = 0; t < trials; ++t) {
                std::vector<double> v(3), w(3);
                for (double& e : v) e = next_gaussian(rng);
                for (double& e : w) e = next_gaussian(rng);
                const double dot = v[0] * w[0] + v[1] * w[1] + v[2] * w[2];
                const double val = modified_form_gl(hat(v, alg), hat(w, alg));
                worst = std::max(worst, std::abs(val + 12.0 * dot) / (1.0 + std::abs(dot)));
            }
            push("so3_dot_product_recovery", worst, 1e-10);
        }
        {
            Rng rng = substream(seed, "adjrot");
            double worst = 0.0;
            for (std::size_t t = 0; t < layer_trials; ++t) {
                const GroupElement g = sample_group(alg, sigma, rng);
                const std::vector<double> v = sample_algebra(alg, 1.0, rng);
                const std::vector<double> lhs = apply_adjoint(g, v);
                const std::vector<double> rhs = mat_vec(g.g, v);
                for (std::size_t i = 0; i < 3; ++i)
                    worst = std::max(worst, std::abs(lhs[i] - rhs[i]));
            }
            push("so3_adjoint_is_rotation", worst, 1e-10);
        }
        {
            Rng rng = substream(seed, "spd");
            double worst_eq = 0.0;
            for (std::size_t t = 0; t < layer_trials; ++t) {
                Mat a = gaussian_mat(3, 3, 1.0, rng);
                Mat c = a * transpose(a);
                for (std::size_t i = 0; i < 3; ++i) c(i, i) += 0.1;
                const GroupElement g = sample_group(alg, sigma, rng);
                const Mat& r = g.g;
                const Mat lhs = spd_log(SpdMatrix(r * c * transpose(r)));
                const Mat rhs = r * spd_log(SpdMatrix(c)) * transpose(r);
                worst_eq = std::max(worst_eq, frobenius_norm(lhs - rhs));
            }
            push("spd_log_equivariance", worst_eq, 1e-8);
        }
        {
            Rng rng = substream(seed, "skew");
            double worst = 0.0;
            for (std::size_t t = 0; t < layer_trials; ++t) {
                const Mat a = gaussian_mat(3, 3, 1.0, rng);
                const GroupElement g = sample_group(alg, sigma, rng);
                const Mat& r = g.g;
                const auto lhs = skew_extract(r * a * transpose(r));
                const std::vector<double> va = {skew_extract(a)[0], skew_extract(a)[1],
                                                skew_extract(a)[2]};
                const std::vector<double> rhs = mat_vec(r, va);
                for (std::size_t i = 0; i < 3; ++i)
                    worst = std::max(worst, std::abs(lhs[i] - rhs[i]));
            }
            push("skew_extract_equivariance", worst, 1e-10);
        }
    }

    if (alg.name == "so13") {
        Rng rng = substream(seed, "lorentz");
        const MinkowskiSignature sig;
        double worst_conj = 0.0, worst_eta = 0.0, worst_pair = 0.0;
        Mat eta(4, 4);
        for (std::size_t i = 0; i < 4; ++i) eta(i, i) = sig.eta[i];
        for (std::size_t t = 0; t < layer_trials; ++t) {
            const GroupElement g = sample_group(alg, sigma, rng);
            const Mat& lambda = g.g;
            worst_eta = std::max(worst_eta,
                                 frobenius_norm(transpose(lambda) * eta * lambda - eta));
            FourMomentum p, q;
            for (double& e : p.p) e = next_gaussian(rng);
            for (double& e : q.p) e = next_gaussian(rng);
            Mat big = Mat::identity(5), big_inv = Mat::identity(5);
            for (std::size_t i = 0; i < 4; ++i)
                for (std::size_t j = 0; j < 4; ++j) {
                    big(i, j) = lambda(i, j);
                    big_inv(i, j) = g.g_inv(i, j);
                }
            FourMomentum lp;
            for (std::size_t i = 0; i < 4; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < 4; ++j) s += lambda(i, j) * p.p[j];
                lp.p[i] = s;
            }
            const Mat lhs = big * lorentz_lift(p, sig) * big_inv;
            const Mat rhs = lorentz_lift(lp, sig);
            worst_conj = std::max(worst_conj,
                                  frobenius_norm(lhs - rhs) / (1.0 + frobenius_norm(rhs)));
            FourMomentum lq;
            for (std::size_t i = 0; i < 4; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < 4; ++j) s += lambda(i, j) * q.p[j];
                lq.p[i] = s;
            }
            const double before = pairwise_invariant(p, q, sig);
            const double after = pairwise_invariant(lp, lq, sig);
            worst_pair = std::max(worst_pair, std::abs(after - before) / (1.0 + std::abs(before)));
        }
        push("lorentz_lift_conjugation", worst_conj, 1e-8);
        push("lorentz_metric_preserved", worst_eta, 1e-9);
        push("pairwise_invariant_stability", worst_pair, 1e-8);
    }

    return out;
}

}  // namespace reln
