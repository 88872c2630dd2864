// End-to-end acceptance suite: prints one pass/fail line per criterion and
// exits non-zero if any of them fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "reln/audit.hpp"
#include "reln/cli.hpp"
#include "reln/geomaps.hpp"
#include "reln/tasks.hpp"
#include "reln/train.hpp"

using namespace reln;

namespace {

int g_failures = 0;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void report(int criterion, const std::string& name, bool pass, const std::string& detail,
            double seconds) {
    std::printf("[%s] criterion %2d: %-38s %s (%.1f s)\n", pass ? "PASS" : "FAIL", criterion,
                name.c_str(), detail.c_str(), seconds);
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

LieAlgebra make_sl2() {
    Mat e12(2, 2), e21(2, 2), h(2, 2);
    e12(0, 1) = 1;
    e21(1, 0) = 1;
    h(0, 0) = 1;
    h(1, 1) = -1;
    return make_algebra_from_basis("sl2", 2, {e12, e21, h});
}

unsigned worker_threads() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : std::min(hw, 4u);
}

// ---------------------------------------------------------------------------

void criterion_1_bilinear_form() {
    Timer t;
    double worst_inv = 0.0;
    bool ranks_ok = true;
    for (std::size_t n = 2; n <= 5; ++n) {
        const LieAlgebra gl = make_algebra("gln", n);
        const BilinearForm form = modified_gl_form(gl);
        Rng rng = substream(100 + n, "crit1");
        worst_inv = std::max(worst_inv, check_ad_invariance(form, gl, 1000, 0.5, rng));
        ranks_ok = ranks_ok && nondegeneracy_rank(form) == n * n;
        ranks_ok = ranks_ok && nondegeneracy_rank(killing_oracle(gl)) == n * n - 1;
    }
    for (const LieAlgebra& alg :
         {make_sl2(), make_algebra("sl3"), make_algebra("so3"), make_algebra("sp4"),
          make_algebra("so13")})
        ranks_ok = ranks_ok && nondegeneracy_rank(killing_oracle(alg)) == alg.K;

    report(1, "bilinear form on gl(2..5)", worst_inv <= 1e-8 && ranks_ok,
           "invariance dev " + fmt(worst_inv) + ", ranks " + (ranks_ok ? "exact" : "WRONG"),
           t.seconds());
}

void criterion_2_killing_equivalence() {
    Timer t;
    double worst = 0.0;
    for (const LieAlgebra& alg : {make_sl2(), make_algebra("sl3")}) {
        const BilinearForm oracle = killing_oracle(alg);
        const double two_n = 2.0 * static_cast<double>(alg.n);
        for (std::size_t i = 0; i < alg.K; ++i)
            for (std::size_t j = 0; j < alg.K; ++j)
                worst = std::max(worst, std::abs(oracle.gram(i, j) -
                                                 two_n * trace_form(alg.basis[i], alg.basis[j])));
    }
    report(2, "killing oracle = 2n tr(XY) on sl(n)", worst <= 1e-9, "entrywise dev " + fmt(worst),
           t.seconds());
}

void criterion_3_dot_product() {
    Timer t;
    const LieAlgebra so3 = make_algebra("so3");
    Rng rng = substream(3, "crit3");
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        std::vector<double> v(3), w(3);
        for (double& e : v) e = next_gaussian(rng);
        for (double& e : w) e = next_gaussian(rng);
        const double dot = v[0] * w[0] + v[1] * w[1] + v[2] * w[2];
        const double val = modified_form_gl(hat(v, so3), hat(w, so3));
        worst = std::max(worst, std::abs(val + 12.0 * dot) / (1.0 + std::abs(dot)));
    }
    report(3, "dot-product recovery on so(3)", worst <= 1e-10, "dev " + fmt(worst), t.seconds());
}

void criterion_4_layer_equivariance() {
    Timer t;
    double worst_layer = 0.0, worst_gate = 0.0;
    const struct {
        LayerKind kind;
        double alpha;
    } layers[] = {{LayerKind::linear, 0.0},
                  {LayerKind::relu, 0.0},
                  {LayerKind::leaky_relu, 0.2},
                  {LayerKind::bracket, 0.0},
                  {LayerKind::pool, 0.0}};
    for (const char* name : {"so3", "sl3", "sp4", "gl3"}) {
        const LieAlgebra alg = algebra_from_cli_name(name);
        const BilinearForm form = modified_gl_form(alg);
        for (const auto& l : layers) {
            Rng rng = substream(4, std::string(name) + layer_kind_name(l.kind));
            worst_layer = std::max(
                worst_layer, layer_equivariance_dev(l.kind, alg, form, 100, 0.5, l.alpha, rng));
        }
        Rng rng = substream(4, std::string(name) + "gate");
        worst_gate = std::max(worst_gate, gate_invariance_dev(alg, form, 100, 0.5, rng));
    }
    report(4, "layer equivariance (4 algebras)", worst_layer <= 1e-9 && worst_gate <= 1e-9,
           "layer dev " + fmt(worst_layer) + ", gate dev " + fmt(worst_gate), t.seconds());
}

void criterion_5_structural_invariance() {
    Timer t;
    const Dataset ds = gen_sp4_dataset(200, 0.4, 501);
    ModelSpec spec;
    spec.algebra = "sp4";
    spec.n = 4;
    spec.in_channels = 2;
    spec.layers = parse_layers("linear:16,relu,bracket,linear:16", 2);
    spec.head_widths = {16};
    spec.out_dim = 1;
    auto model = make_reln_trainable(init_params(spec, 502));
    const EvalReport rep = evaluate(*model, ds, 100, 0.5, 503, worker_threads());
    const double mse_gap = std::abs(rep.mse_conjugated - rep.mse_id) / (1.0 + rep.mse_id);
    report(5, "structural model invariance (M=100)",
           rep.invariance_error <= 1e-10 && mse_gap <= 1e-9,
           "inv err " + fmt(rep.invariance_error) + ", mse gap " + fmt(mse_gap), t.seconds());
}

void criterion_6_gradients() {
    Timer t;
    ModelSpec full;
    full.algebra = "sp4";
    full.n = 4;
    full.in_channels = 2;
    full.layers = parse_layers("linear:5,relu,bracket,leaky_relu:0.2,pool,linear:4", 2);
    full.head_widths = {8};
    full.out_dim = 1;
    Model m_full = init_params(full, 601);
    const double err_full = grad_check_auto(m_full, 3, 1e-5, 601).max_rel_err;

    ModelSpec lin;
    lin.algebra = "sp4";
    lin.n = 4;
    lin.in_channels = 2;
    lin.layers = parse_layers("linear:6,linear:4", 2);
    lin.head_widths = {8};
    lin.out_dim = 1;
    Model m_lin = init_params(lin, 602);
    const double err_lin = grad_check_auto(m_lin, 4, 1e-5, 602).max_rel_err;

    report(6, "gradient correctness", err_full <= 1e-4 && err_lin <= 1e-9,
           "full " + fmt(err_full) + ", linear-only " + fmt(err_lin), t.seconds());
}

void criterion_7_sp4_regression() {
    Timer t;
    const unsigned threads = worker_threads();
    const Dataset train = gen_sp4_dataset(2000, 0.4, 701);
    const Dataset test = gen_sp4_dataset(2000, 0.4, 702);

    ModelSpec spec;
    spec.algebra = "sp4";
    spec.n = 4;
    spec.in_channels = 2;
    spec.layers =
        parse_layers("linear:64,relu,bracket,linear:64,relu,bracket,linear:64,relu,linear:64", 2);
    spec.head_widths = {128};
    spec.out_dim = 1;
    auto reln = make_reln_trainable(init_params(spec, 703));

    FlatMlpSpec mlp_spec;
    mlp_spec.algebra = "sp4";
    mlp_spec.n = 4;
    mlp_spec.in_dim = 20;
    mlp_spec.out_dim = 1;
    const std::size_t width = mlp_width_for_params(20, 1, reln->n_params());
    mlp_spec.hidden = {width, width};
    auto mlp = make_mlp_trainable(mlp_spec, 703);

    std::printf("    criterion 7: reln %zu params vs mlp %zu params (width %zu), %u threads\n",
                reln->n_params(), mlp->n_params(), width, threads);
    std::fflush(stdout);

    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.batch = 100;
    cfg.epochs = 300;
    cfg.seed = 703;
    cfg.eval_m = 0;
    cfg.threads = threads;

    const TrainResult reln_result = train_loop(*reln, train, cfg);
    reln->set_params_flat(reln_result.best_params);
    std::printf("    criterion 7: reln trained (best val %.4g at epoch %zu, %.0f s)\n",
                reln_result.best_val, reln_result.best_epoch, t.seconds());
    std::fflush(stdout);

    const TrainResult mlp_result = train_loop(*mlp, train, cfg);
    mlp->set_params_flat(mlp_result.best_params);

    const EvalReport reln_rep = evaluate(*reln, test, 100, 0.5, 704, threads);
    const EvalReport mlp_rep = evaluate(*mlp, test, 100, 0.5, 704, threads);

    const bool inv_ok = reln_rep.invariance_error <= 1e-10 && mlp_rep.invariance_error >= 1e-3;
    const bool mse_ok = reln_rep.mse_conjugated <= 0.2 * mlp_rep.mse_conjugated;
    const double gap = std::abs(reln_rep.mse_conjugated - reln_rep.mse_id) / (1.0 + reln_rep.mse_id);
    const bool tie_ok = gap <= 1e-9;

    report(7, "desk-scale sp(4) regression", inv_ok && mse_ok && tie_ok,
           "reln mse " + fmt(reln_rep.mse_id) + "/" + fmt(reln_rep.mse_conjugated) + " inv " +
               fmt(reln_rep.invariance_error) + "; mlp mse " + fmt(mlp_rep.mse_id) + "/" +
               fmt(mlp_rep.mse_conjugated) + " inv " + fmt(mlp_rep.invariance_error),
           t.seconds());
}

void criterion_8_lorentz() {
    Timer t;
    const LieAlgebra so13 = make_algebra("so13");
    const MinkowskiSignature sig;
    Mat eta(4, 4);
    for (std::size_t i = 0; i < 4; ++i) eta(i, i) = sig.eta[i];
    Rng rng = substream(8, "crit8");
    double worst_conj = 0.0, worst_eta = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const GroupElement g = sample_group(so13, 0.5, rng);
        worst_eta = std::max(worst_eta, frobenius_norm(transpose(g.g) * eta * g.g - eta));
        FourMomentum p;
        for (double& e : p.p) e = next_gaussian(rng);
        Mat big = Mat::identity(5), big_inv = Mat::identity(5);
        FourMomentum lp;
        for (std::size_t i = 0; i < 4; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < 4; ++j) {
                big(i, j) = g.g(i, j);
                big_inv(i, j) = g.g_inv(i, j);
                s += g.g(i, j) * p.p[j];
            }
            lp.p[i] = s;
        }
        const Mat lhs = big * lorentz_lift(p, sig) * big_inv;
        const Mat rhs = lorentz_lift(lp, sig);
        worst_conj = std::max(worst_conj, frobenius_norm(lhs - rhs) / (1.0 + frobenius_norm(rhs)));
    }
    report(8, "lorentz lift conjugation (1000 draws)", worst_conj <= 1e-8 && worst_eta <= 1e-9,
           "conj dev " + fmt(worst_conj) + ", metric dev " + fmt(worst_eta), t.seconds());
}

void criterion_9_spd_log() {
    Timer t;
    const LieAlgebra so3 = make_algebra("so3");
    Rng rng = substream(9, "crit9");
    double worst_eq = 0.0, worst_rt = 0.0;
    for (int k = 0; k < 1000; ++k) {
        Mat a(3, 3);
        for (std::size_t i = 0; i < 9; ++i) a.data()[i] = next_gaussian(rng);
        Mat c = a * transpose(a);
        for (std::size_t i = 0; i < 3; ++i) c(i, i) += 0.1;
        const Mat r = sample_group(so3, 0.5, rng).g;
        const Mat lhs = spd_log(SpdMatrix(r * c * transpose(r)));
        const Mat rhs = r * spd_log(SpdMatrix(c)) * transpose(r);
        worst_eq = std::max(worst_eq, frobenius_norm(lhs - rhs));
        const Mat rt = spd_exp(spd_log(SpdMatrix(c))).c;
        worst_rt = std::max(worst_rt, frobenius_norm(rt - c) / (1.0 + frobenius_norm(c)));
    }
    report(9, "spd log equivariance (1000 draws)", worst_eq <= 1e-8 && worst_rt <= 1e-9,
           "equivariance " + fmt(worst_eq) + ", round trip " + fmt(worst_rt), t.seconds());
}

void criterion_10_skew() {
    Timer t;
    const LieAlgebra so3 = make_algebra("so3");
    Rng rng = substream(10, "crit10");
    double worst = 0.0, worst_id = 0.0;
    for (int k = 0; k < 1000; ++k) {
        Mat a(3, 3);
        for (std::size_t i = 0; i < 9; ++i) a.data()[i] = next_gaussian(rng);
        const Mat r = sample_group(so3, 0.5, rng).g;
        const auto lhs = skew_extract(r * a * transpose(r));
        const std::vector<double> va{skew_extract(a)[0], skew_extract(a)[1], skew_extract(a)[2]};
        const std::vector<double> rhs = mat_vec(r, va);
        for (std::size_t i = 0; i < 3; ++i) worst = std::max(worst, std::abs(lhs[i] - rhs[i]));

        std::vector<double> v(3);
        for (double& e : v) e = next_gaussian(rng);
        const auto back = skew_extract(hat(v, so3));
        for (std::size_t i = 0; i < 3; ++i) worst_id = std::max(worst_id, std::abs(back[i] - v[i]));
    }
    report(10, "skew extraction (1000 draws)", worst <= 1e-10 && worst_id == 0.0,
           "rotation dev " + fmt(worst) + ", hat round trip " + fmt(worst_id), t.seconds());
}

void criterion_11_serialization_determinism() {
    Timer t;
    bool ok = true;
    std::string detail = "all byte-exact";

    const Dataset ds = gen_sp4_dataset(60, 0.4, 1101);
    if (encode_dataset(decode_dataset(encode_dataset(ds))) != encode_dataset(ds)) {
        ok = false;
        detail = "dataset round trip broke";
    }
    if (encode_dataset(gen_sp4_dataset(60, 0.4, 1101)) != encode_dataset(ds)) {
        ok = false;
        detail = "dataset regeneration differs";
    }
    NoiseParams np;
    if (encode_dataset(gen_cov_dataset(2, 30, 0.05, np, 1102)) !=
        encode_dataset(gen_cov_dataset(2, 30, 0.05, np, 1102))) {
        ok = false;
        detail = "covseq regeneration differs";
    }

    ModelSpec spec;
    spec.algebra = "sp4";
    spec.n = 4;
    spec.in_channels = 2;
    spec.layers = parse_layers("linear:6,relu,bracket", 2);
    spec.head_widths = {8};
    spec.out_dim = 1;
    {
        auto model = make_reln_trainable(init_params(spec, 1103));
        const auto bytes = serialize_trainable(*model);
        auto back = deserialize_trainable(bytes);
        if (serialize_trainable(*back) != bytes) {
            ok = false;
            detail = "model round trip broke";
        }
    }

    // thread count must not change training or evaluation bytes
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch = 20;
    cfg.seed = 1104;
    cfg.eval_m = 2;
    auto m1 = make_reln_trainable(init_params(spec, 1104));
    auto m4 = make_reln_trainable(init_params(spec, 1104));
    TrainConfig cfg1 = cfg, cfg4 = cfg;
    cfg1.threads = 1;
    cfg4.threads = 4;
    train_loop(*m1, ds, cfg1);
    train_loop(*m4, ds, cfg4);
    if (m1->get_params() != m4->get_params()) {
        ok = false;
        detail = "thread count changed the trained parameters";
    }
    const EvalReport r1 = evaluate(*m1, ds, 5, 0.5, 1105, 1);
    const EvalReport r4 = evaluate(*m4, ds, 5, 0.5, 1105, 4);
    if (r1.mse_id != r4.mse_id || r1.mse_conjugated != r4.mse_conjugated ||
        r1.invariance_error != r4.invariance_error) {
        ok = false;
        detail = "thread count changed evaluation numbers";
    }

    report(11, "serialization and determinism", ok, detail, t.seconds());
}

void criterion_12_negative_controls() {
    Timer t;
    const LieAlgebra gl3 = make_algebra("gln", 3);
    BilinearForm broken = modified_gl_form(gl3);
    {
        Rng noise = substream(12, "noise");
        Mat g(gl3.K, gl3.K);
        for (std::size_t i = 0; i < gl3.K * gl3.K; ++i) g.data()[i] = next_gaussian(noise);
        broken.gram = 0.5 * (g + transpose(g));
    }
    Rng rng = substream(12, "crit12");
    const double broken_dev = check_ad_invariance(broken, gl3, 200, 0.5, rng);

    const Dataset ds = gen_sp4_dataset(50, 0.4, 1201);
    ModelSpec spec;
    spec.algebra = "sp4";
    spec.n = 4;
    spec.in_channels = 2;
    spec.layers = parse_layers("linear:8,relu,bracket,linear:8", 2);
    spec.head_widths = {16};
    spec.out_dim = 1;
    auto reln = make_reln_trainable(init_params(spec, 1202));
    FlatMlpSpec mlp_spec;
    mlp_spec.algebra = "sp4";
    mlp_spec.n = 4;
    mlp_spec.in_dim = 20;
    mlp_spec.hidden = {64, 64};
    mlp_spec.out_dim = 1;
    auto mlp = make_mlp_trainable(mlp_spec, 1202);

    const double reln_err = invariance_error(*reln, ds, 20, 0.5, 1203, worker_threads());
    const double mlp_err = invariance_error(*mlp, ds, 20, 0.5, 1203, worker_threads());
    const double floor = std::max(reln_err, 1e-300);

    const bool ok = broken_dev > 1e-3 && mlp_err / floor >= 1e6;
    report(12, "negative controls", ok,
           "broken form dev " + fmt(broken_dev) + ", mlp/reln inv ratio " + fmt(mlp_err / floor),
           t.seconds());
}

}  // namespace

int main() {
    std::printf("acceptance suite\n");
    criterion_1_bilinear_form();
    criterion_2_killing_equivalence();
    criterion_3_dot_product();
    criterion_4_layer_equivariance();
    criterion_5_structural_invariance();
    criterion_6_gradients();
    criterion_7_sp4_regression();
    criterion_8_lorentz();
    criterion_9_spd_log();
    criterion_10_skew();
    criterion_11_serialization_determinism();
    criterion_12_negative_controls();
    if (g_failures == 0)
        std::printf("acceptance suite: all 12 criteria hold\n");
    else
        std::printf("acceptance suite: %d criteria FAILED\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
