#include "reln/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace reln {

std::pair<double, std::vector<double>> mse_loss(const std::vector<double>& pred,
                                                const std::vector<double>& target) {
    if (pred.size() != target.size() || pred.empty())
        throw std::invalid_argument("mse_loss: shape mismatch");
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    double loss = 0.0;
    std::vector<double> grad(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        loss += d * d * inv_n;
        grad[i] = 2.0 * d * inv_n;
    }
    return {loss, grad};
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam_step: shape mismatch");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: stale state");
    for (double g : grads)
        if (!std::isfinite(g)) throw std::runtime_error("adam_step: non-finite gradient");

    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

namespace {

class RelnTrainable final : public Trainable {
public:
    explicit RelnTrainable(Model m) : model_(std::move(m)) {}

    std::string arch() const override { return "reln"; }
    std::size_t input_len() const override { return model_.alg.K * model_.spec.in_channels; }
    std::size_t out_dim() const override { return model_.spec.out_dim; }
    std::size_t n_params() const override { return param_count(model_); }
    std::vector<double> get_params() const override { return collect_params(model_); }
    void set_params_flat(const std::vector<double>& p) override { set_params(model_, p); }

    AlgFeature feature_from(const double* input) const {
        const std::size_t K = model_.alg.K, C = model_.spec.in_channels;
        AlgFeature x(1, K, C);
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t k = 0; k < K; ++k) x.at(0, k, c) = input[c * K + k];
        return x;
    }

    void predict_one(const double* input, double* out) const override {
        const std::vector<double> y = model_forward(model_, feature_from(input));
        std::copy(y.begin(), y.end(), out);
    }

    double sample_grad(const double* input, const double* target, double scale,
                       std::vector<double>& grad) const override {
        ModelCache cache;
        const std::vector<double> pred = model_forward(model_, feature_from(input), 1, &cache);
        double sqerr = 0.0;
        std::vector<double> dout(pred.size());
        for (std::size_t j = 0; j < pred.size(); ++j) {
            const double d = pred[j] - target[j];
            sqerr += d * d;
            dout[j] = 2.0 * d * scale;
        }
        model_backward(model_, cache, dout, grad);
        return sqerr;
    }

    std::string descriptor() const override {
        return descriptor_from_model_spec(model_.spec, param_count(model_));
    }

    Model model_;
};

class MlpTrainable final : public Trainable {
public:
    MlpTrainable(FlatMlpSpec spec, std::vector<double> params)
        : spec_(std::move(spec)), params_(std::move(params)) {
        build_layout();
    }

    static MlpTrainable init(FlatMlpSpec spec, std::uint64_t seed) {
        MlpTrainable t(std::move(spec), {});
        t.params_.assign(t.total_, 0.0);
        Rng rng = substream(seed, "init");
        std::size_t off = 0;
        std::size_t in = t.spec_.in_dim;
        for (std::size_t w : t.widths_out()) {
            const double sd = 1.0 / std::sqrt(static_cast<double>(in));
            for (std::size_t i = 0; i < in * w; ++i) t.params_[off + i] = sd * next_gaussian(rng);
            off += in * w + w;  // biases stay zero
            in = w;
        }
        return t;
    }

    std::string arch() const override { return "mlp"; }
    std::size_t input_len() const override { return spec_.in_dim; }
    std::size_t out_dim() const override { return spec_.out_dim; }
    std::size_t n_params() const override { return total_; }
    std::vector<double> get_params() const override { return params_; }
    void set_params_flat(const std::vector<double>& p) override {
        if (p.size() != total_) throw std::invalid_argument("set_params_flat: size mismatch");
        params_ = p;
    }

    std::vector<std::size_t> widths_out() const {
        std::vector<std::size_t> w = spec_.hidden;
        w.push_back(spec_.out_dim);
        return w;
    }

    void forward(const double* input, std::vector<std::vector<double>>& acts) const {
        acts.clear();
        std::vector<double> h(input, input + spec_.in_dim);
        acts.push_back(h);
        std::size_t off = 0;
        std::size_t in = spec_.in_dim;
        const auto outs = widths_out();
        for (std::size_t l = 0; l < outs.size(); ++l) {
            const std::size_t out = outs[l];
            std::vector<double> z(out);
            for (std::size_t j = 0; j < out; ++j) {
                double s = params_[off + in * out + j];  // bias
                for (std::size_t i = 0; i < in; ++i) s += h[i] * params_[off + i * out + j];
                z[j] = s;
            }
            if (l + 1 < outs.size())
                for (double& v : z) v = std::tanh(v);
            acts.push_back(z);
            h = acts.back();
            off += in * out + out;
            in = out;
        }
    }

    void predict_one(const double* input, double* out) const override {
        std::vector<std::vector<double>> acts;
        forward(input, acts);
        const std::vector<double>& y = acts.back();
        std::copy(y.begin(), y.end(), out);
    }

    double sample_grad(const double* input, const double* target, double scale,
                       std::vector<double>& grad) const override {
        if (grad.size() != total_) grad.resize(total_, 0.0);
        std::vector<std::vector<double>> acts;
        forward(input, acts);
        const std::vector<double>& pred = acts.back();
        double sqerr = 0.0;
        std::vector<double> gh(pred.size());
        for (std::size_t j = 0; j < pred.size(); ++j) {
            const double d = pred[j] - target[j];
            sqerr += d * d;
            gh[j] = 2.0 * d * scale;
        }
        const auto outs = widths_out();
        std::size_t off_end = total_;
        for (std::size_t l = outs.size(); l-- > 0;) {
            const std::size_t in = l == 0 ? spec_.in_dim : outs[l - 1];
            const std::size_t out = outs[l];
            const std::vector<double>& h = acts[l];
            if (l + 1 < outs.size())
                for (std::size_t j = 0; j < gh.size(); ++j)
                    gh[j] *= 1.0 - acts[l + 1][j] * acts[l + 1][j];
            const std::size_t w_off = off_end - (in * out + out);
            std::vector<double> gin(in, 0.0);
            for (std::size_t j = 0; j < out; ++j) {
                grad[w_off + in * out + j] += gh[j];
                for (std::size_t i = 0; i < in; ++i) {
                    grad[w_off + i * out + j] += h[i] * gh[j];
                    gin[i] += gh[j] * params_[w_off + i * out + j];
                }
            }
            gh = std::move(gin);
            off_end = w_off;
        }
        return sqerr;
    }

    std::string descriptor() const override {
        nlohmann::json j;
        j["arch"] = "mlp";
        j["algebra"] = spec_.algebra;
        j["n"] = spec_.n;
        j["in_dim"] = spec_.in_dim;
        j["hidden"] = spec_.hidden;
        j["out_dim"] = spec_.out_dim;
        j["params"] = total_;
        return j.dump();
    }

    FlatMlpSpec spec_;
    std::vector<double> params_;

private:
    void build_layout() {
        total_ = 0;
        std::size_t in = spec_.in_dim;
        for (std::size_t w : widths_out()) {
            total_ += in * w + w;
            in = w;
        }
    }
    std::size_t total_ = 0;
};

}  // namespace

std::unique_ptr<Trainable> make_reln_trainable(Model model) {
    return std::make_unique<RelnTrainable>(std::move(model));
}

const Model& reln_model(const Trainable& t) {
    const auto* r = dynamic_cast<const RelnTrainable*>(&t);
    if (!r) throw std::invalid_argument("reln_model: not a ReLN model");
    return r->model_;
}

std::unique_ptr<Trainable> make_mlp_trainable(const FlatMlpSpec& spec, std::uint64_t seed) {
    return std::make_unique<MlpTrainable>(MlpTrainable::init(spec, seed));
}

std::size_t mlp_param_count(const FlatMlpSpec& spec) {
    std::size_t total = 0;
    std::size_t in = spec.in_dim;
    std::vector<std::size_t> outs = spec.hidden;
    outs.push_back(spec.out_dim);
    for (std::size_t w : outs) {
        total += in * w + w;
        in = w;
    }
    return total;
}

std::size_t mlp_width_for_params(std::size_t in_dim, std::size_t out_dim,
                                 std::size_t target_params) {
    std::size_t best_w = 1;
    std::size_t best_diff = std::numeric_limits<std::size_t>::max();
    for (std::size_t w = 1; w < 4096; ++w) {
        FlatMlpSpec s;
        s.in_dim = in_dim;
        s.out_dim = out_dim;
        s.hidden = {w, w};
        const std::size_t p = mlp_param_count(s);
        const std::size_t diff = p > target_params ? p - target_params : target_params - p;
        if (diff < best_diff) {
            best_diff = diff;
            best_w = w;
        }
        if (p > target_params && diff > best_diff) break;
    }
    return best_w;
}

std::vector<std::uint8_t> serialize_trainable(const Trainable& t) {
    RlnmPayload p;
    p.descriptor = t.descriptor();
    p.doubles = t.get_params();
    return rlnm_encode(p);
}

namespace {

std::unique_ptr<Trainable> trainable_from_payload(const RlnmPayload& p, std::size_t take_params) {
    nlohmann::json j = nlohmann::json::parse(p.descriptor);
    const std::string arch = j.value("arch", "");
    if (arch == "reln") {
        const ModelSpec spec = model_spec_from_descriptor(p.descriptor);
        Model m = init_params(spec, 0);
        const std::size_t n = param_count(m);
        if (take_params != n || p.doubles.size() < n)
            throw std::runtime_error("model payload truncated");
        set_params(m, std::vector<double>(p.doubles.begin(), p.doubles.begin() + n));
        return make_reln_trainable(std::move(m));
    }
    if (arch == "mlp") {
        FlatMlpSpec spec;
        spec.algebra = j.value("algebra", "");
        spec.n = j.value("n", 0);
        spec.in_dim = j.at("in_dim").get<std::size_t>();
        spec.hidden = j.at("hidden").get<std::vector<std::size_t>>();
        spec.out_dim = j.at("out_dim").get<std::size_t>();
        auto t = make_mlp_trainable(spec, 0);
        if (take_params != t->n_params() || p.doubles.size() < take_params)
            throw std::runtime_error("model payload truncated");
        t->set_params_flat(
            std::vector<double>(p.doubles.begin(), p.doubles.begin() + take_params));
        return t;
    }
    throw std::runtime_error("unknown model arch '" + arch + "'");
}

}  // namespace

std::unique_ptr<Trainable> deserialize_trainable(const std::vector<std::uint8_t>& bytes) {
    const RlnmPayload p = rlnm_decode(bytes);
    nlohmann::json j = nlohmann::json::parse(p.descriptor);
    const std::size_t declared = j.at("params").get<std::size_t>();
    const std::size_t state = j.value("state_doubles", std::size_t{0});
    if (declared + state != p.doubles.size()) throw std::runtime_error("model payload truncated");
    return trainable_from_payload(p, declared);
}

std::unique_ptr<Trainable> load_trainable(const std::string& path) {
    return deserialize_trainable(read_file(path));
}

std::vector<std::uint8_t> encode_checkpoint(const Trainable& model, const TrainState& state) {
    RlnmPayload p;
    nlohmann::json j = nlohmann::json::parse(model.descriptor());
    const std::size_t n = model.n_params();
    if (state.adam.m.size() != n || state.adam.v.size() != n || state.best_params.size() != n)
        throw std::invalid_argument("encode_checkpoint: inconsistent state sizes");
    j["state_doubles"] = 3 * n;
    j["train_state"] = {{"next_epoch", state.next_epoch},
                        {"adam_t", state.adam.t},
                        {"best_val", state.best_val},
                        {"best_epoch", state.best_epoch}};
    p.descriptor = j.dump();
    p.doubles = model.get_params();
    p.doubles.insert(p.doubles.end(), state.adam.m.begin(), state.adam.m.end());
    p.doubles.insert(p.doubles.end(), state.adam.v.begin(), state.adam.v.end());
    p.doubles.insert(p.doubles.end(), state.best_params.begin(), state.best_params.end());
    return rlnm_encode(p);
}

std::unique_ptr<Trainable> decode_checkpoint(const std::vector<std::uint8_t>& bytes,
                                             TrainState& state) {
    const RlnmPayload p = rlnm_decode(bytes);
    nlohmann::json j = nlohmann::json::parse(p.descriptor);
    if (!j.contains("train_state")) throw std::runtime_error("not a training checkpoint");
    const std::size_t n = j.at("params").get<std::size_t>();
    if (p.doubles.size() != 4 * n) throw std::runtime_error("model payload truncated");
    auto model = trainable_from_payload(p, n);
    state.next_epoch = j["train_state"].at("next_epoch").get<std::size_t>();
    state.adam.t = j["train_state"].at("adam_t").get<std::size_t>();
    state.best_val = j["train_state"].at("best_val").get<double>();
    state.best_epoch = j["train_state"].at("best_epoch").get<std::size_t>();
    state.adam.m.assign(p.doubles.begin() + n, p.doubles.begin() + 2 * n);
    state.adam.v.assign(p.doubles.begin() + 2 * n, p.doubles.begin() + 3 * n);
    state.best_params.assign(p.doubles.begin() + 3 * n, p.doubles.end());
    return model;
}

namespace {

Dataset slice_dataset(const Dataset& ds, std::size_t start, std::size_t count) {
    Dataset out = ds;
    out.num_samples = count;
    out.inputs.assign(ds.inputs.begin() + start * ds.inputs_per_sample * ds.K,
                      ds.inputs.begin() + (start + count) * ds.inputs_per_sample * ds.K);
    out.targets.assign(ds.targets.begin() + start * ds.target_dim,
                       ds.targets.begin() + (start + count) * ds.target_dim);
    return out;
}

void conjugate_inputs(const LieAlgebra& alg, const GroupElement& g, const Dataset& ds,
                      std::vector<double>& out, unsigned threads) {
    out.resize(ds.inputs.size());
    const std::size_t per = ds.inputs_per_sample;
    parallel_for(ds.num_samples, threads, [&](std::size_t i) {
        std::vector<double> coords(ds.K);
        for (std::size_t p = 0; p < per; ++p) {
            const double* in = &ds.inputs[(i * per + p) * ds.K];
            coords.assign(in, in + ds.K);
            const std::vector<double> conj = apply_adjoint(g, coords);
            std::copy(conj.begin(), conj.end(), out.begin() + (i * per + p) * ds.K);
        }
    });
}

void predict_all(const Trainable& model, const double* inputs, std::size_t count,
                 std::vector<double>& out, unsigned threads) {
    const std::size_t len = model.input_len();
    const std::size_t od = model.out_dim();
    out.resize(count * od);
    parallel_for(count, threads, [&](std::size_t i) {
        model.predict_one(inputs + i * len, out.data() + i * od);
    });
}

double mse_of(const std::vector<double>& pred, const std::vector<double>& target) {
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

}  // namespace

EvalReport evaluate(const Trainable& model, const Dataset& ds, std::size_t conj_count, double sigma,
                    std::uint64_t seed, unsigned threads) {
    if (ds.inputs_per_sample * ds.K != model.input_len() || ds.target_dim != model.out_dim())
        throw std::invalid_argument("evaluate: dataset/model incompatibility");
    const auto t0 = std::chrono::steady_clock::now();

    EvalReport rep;
    rep.conj_count = conj_count;
    std::vector<double> base;
    predict_all(model, ds.inputs.data(), ds.num_samples, base, threads);
    rep.mse_id = mse_of(base, ds.targets);

    if (conj_count == 0) {
        rep.mse_conjugated = rep.mse_id;
        rep.invariance_error = 0.0;
    } else {
        const LieAlgebra alg = make_algebra(ds.algebra_name, ds.n);
        Rng rng = substream(seed, "eval-groups");
        double mse_sum = 0.0;
        double inv_sum = 0.0;
        std::vector<double> conj_inputs, pred;
        for (std::size_t gi = 0; gi < conj_count; ++gi) {
            const GroupElement g = sample_group(alg, sigma, rng);
            conjugate_inputs(alg, g, ds, conj_inputs, threads);
            predict_all(model, conj_inputs.data(), ds.num_samples, pred, threads);
            mse_sum += mse_of(pred, ds.targets);
            for (std::size_t i = 0; i < pred.size(); ++i) {
                const double d = pred[i] - base[i];
                inv_sum += d * d;
            }
        }
        rep.mse_conjugated = mse_sum / static_cast<double>(conj_count);
        rep.invariance_error =
            inv_sum / static_cast<double>(conj_count * base.size());
    }
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

double invariance_error(const Trainable& model, const Dataset& ds, std::size_t m, double sigma,
                        std::uint64_t seed, unsigned threads) {
    if (m < 1) throw std::invalid_argument("invariance_error: need m >= 1");
    return evaluate(model, ds, m, sigma, seed, threads).invariance_error;
}

TrainResult train_loop(Trainable& model, const Dataset& ds, const TrainConfig& cfg,
                       std::ostream* metrics, TrainState* state_io) {
    if (ds.inputs_per_sample * ds.K != model.input_len() || ds.target_dim != model.out_dim())
        throw std::invalid_argument("train_loop: dataset/model incompatibility");
    if (!(cfg.lr > 0.0) || cfg.batch < 1 || !(cfg.beta1 > 0.0 && cfg.beta1 < 1.0) ||
        !(cfg.beta2 > 0.0 && cfg.beta2 < 1.0))
        throw std::invalid_argument("train_loop: invalid config");

    const std::size_t n_total = ds.num_samples;
    std::size_t val_count = static_cast<std::size_t>(cfg.val_fraction * static_cast<double>(n_total));
    if (val_count >= n_total) val_count = n_total - 1;
    const std::size_t train_count = n_total - val_count;
    const Dataset val = val_count > 0 ? slice_dataset(ds, train_count, val_count)
                                      : slice_dataset(ds, 0, n_total);

    const LieAlgebra alg = make_algebra(ds.algebra_name, ds.n);
    const std::size_t n_params = model.n_params();
    const std::size_t in_len = model.input_len();
    const std::size_t od = model.out_dim();

    TrainState local_state;
    TrainState& st = state_io ? *state_io : local_state;
    if (st.adam.m.empty()) {
        st.adam.m.assign(n_params, 0.0);
        st.adam.v.assign(n_params, 0.0);
        st.best_params = model.get_params();
        st.best_val = std::numeric_limits<double>::infinity();
        st.best_epoch = 0;
        st.next_epoch = 0;
    }

    TrainResult result;
    const std::size_t copies = std::max<std::size_t>(1, cfg.augment);
    const std::size_t epoch_samples = train_count * copies;

    // fixed number of accumulation groups so reduction order is independent
    // of the thread count
    const std::size_t n_groups = std::min<std::size_t>(16, cfg.batch);
    std::vector<std::vector<double>> group_grads(n_groups);
    std::vector<double> group_sqerr(n_groups, 0.0);
    for (auto& g : group_grads) g.assign(n_params, 0.0);

    std::vector<double> params = model.get_params();
    std::vector<double> grad(n_params, 0.0);
    std::vector<double> aug_inputs, aug_targets;

    if (cfg.epochs == 0) {
        const auto t0 = std::chrono::steady_clock::now();
        const EvalReport rep =
            evaluate(model, val, cfg.eval_m, cfg.group_sigma, fork(substream(cfg.seed, "eval"), 0).state,
                     cfg.threads);
        EpochStats s;
        s.epoch = 0;
        s.train_loss = rep.mse_id;
        s.val_loss = rep.mse_id;
        s.mse_id = rep.mse_id;
        s.mse_conjugated = rep.mse_conjugated;
        s.invariance_error = rep.invariance_error;
        s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.epochs.push_back(s);
        if (metrics)
            *metrics << s.epoch << '\t' << s.train_loss << '\t' << s.val_loss << '\t' << s.mse_id
                     << '\t' << s.mse_conjugated << '\t' << s.invariance_error << '\t' << s.seconds
                     << '\n';
        result.best_params = model.get_params();
        result.best_val = rep.mse_id;
        result.best_epoch = 0;
        st.best_params = result.best_params;
        st.best_val = result.best_val;
        return result;
    }

    for (std::size_t epoch = st.next_epoch + 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();

        const double* epoch_input_ptr = ds.inputs.data();
        const double* epoch_target_ptr = ds.targets.data();
        if (cfg.augment > 0) {
            // fresh conjugations of the training split, sampled in index order
            aug_inputs.resize(epoch_samples * in_len);
            aug_targets.resize(epoch_samples * od);
            Rng rng_aug = fork(substream(cfg.seed, "aug"), epoch);
            std::vector<double> coords(ds.K);
            std::size_t w = 0;
            for (std::size_t i = 0; i < train_count; ++i) {
                for (std::size_t rep = 0; rep < copies; ++rep, ++w) {
                    const GroupElement g = sample_group(alg, cfg.group_sigma, rng_aug);
                    for (std::size_t p = 0; p < ds.inputs_per_sample; ++p) {
                        const double* in = ds.sample_inputs(i) + p * ds.K;
                        coords.assign(in, in + ds.K);
                        const std::vector<double> conj = apply_adjoint(g, coords);
                        std::copy(conj.begin(), conj.end(),
                                  aug_inputs.begin() + w * in_len + p * ds.K);
                    }
                    std::copy(ds.sample_targets(i), ds.sample_targets(i) + od,
                              aug_targets.begin() + w * od);
                }
            }
            epoch_input_ptr = aug_inputs.data();
            epoch_target_ptr = aug_targets.data();
        }

        std::vector<std::size_t> order(epoch_samples);
        for (std::size_t i = 0; i < epoch_samples; ++i)
            order[i] = cfg.augment > 0 ? i : i % train_count;
        {
            Rng rng_sh = fork(substream(cfg.seed, "shuffle"), epoch);
            for (std::size_t i = epoch_samples; i-- > 1;) {
                const std::size_t j = static_cast<std::size_t>(next_u64(rng_sh) % (i + 1));
                std::swap(order[i], order[j]);
            }
        }

        double epoch_sqerr = 0.0;
        for (std::size_t start = 0; start < epoch_samples; start += cfg.batch) {
            const std::size_t bs = std::min(cfg.batch, epoch_samples - start);
            const double scale = 1.0 / static_cast<double>(bs * od);
            const std::size_t groups = std::min(n_groups, bs);
            const std::size_t per_group = (bs + groups - 1) / groups;
            for (std::size_t g = 0; g < groups; ++g) {
                std::fill(group_grads[g].begin(), group_grads[g].end(), 0.0);
                group_sqerr[g] = 0.0;
            }
            parallel_for(groups, cfg.threads, [&](std::size_t g) {
                const std::size_t lo = g * per_group;
                const std::size_t hi = std::min(bs, lo + per_group);
                for (std::size_t j = lo; j < hi; ++j) {
                    const std::size_t idx = order[start + j];
                    group_sqerr[g] += model.sample_grad(epoch_input_ptr + idx * in_len,
                                                        epoch_target_ptr + idx * od, scale,
                                                        group_grads[g]);
                }
            });
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t g = 0; g < groups; ++g) {
                const double* src = group_grads[g].data();
                for (std::size_t i = 0; i < n_params; ++i) grad[i] += src[i];
                epoch_sqerr += group_sqerr[g];
            }
            adam_step(params, grad, st.adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
            model.set_params_flat(params);
        }

        EpochStats s;
        s.epoch = epoch;
        s.train_loss = epoch_sqerr / static_cast<double>(epoch_samples * od);
        const EvalReport rep = evaluate(model, val, cfg.eval_m, cfg.group_sigma,
                                        fork(substream(cfg.seed, "eval"), epoch).state, cfg.threads);
        s.val_loss = rep.mse_id;
        s.mse_id = rep.mse_id;
        s.mse_conjugated = rep.mse_conjugated;
        s.invariance_error = rep.invariance_error;
        s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.epochs.push_back(s);
        if (metrics)
            *metrics << s.epoch << '\t' << s.train_loss << '\t' << s.val_loss << '\t' << s.mse_id
                     << '\t' << s.mse_conjugated << '\t' << s.invariance_error << '\t' << s.seconds
                     << '\n';

        if (s.val_loss < st.best_val) {
            st.best_val = s.val_loss;
            st.best_epoch = epoch;
            st.best_params = params;
        }
        st.next_epoch = epoch;
    }

    result.best_params = st.best_params;
    result.best_val = st.best_val;
    result.best_epoch = st.best_epoch;
    return result;
}

GradCheckReport grad_check(Model& m, const AlgFeature& x, const std::vector<double>& target,
                           double h, std::size_t set_size) {
    if (!(h > 0.0)) throw std::invalid_argument("grad_check: h must be positive");
    ModelCache cache;
    const std::vector<double> pred = model_forward(m, x, set_size, &cache);
    auto [loss0, dout] = mse_loss(pred, target);
    if (!std::isfinite(loss0)) throw std::runtime_error("grad_check: non-finite loss");
    std::vector<double> analytic(param_count(m), 0.0);
    model_backward(m, cache, dout, analytic);

    // tensor names in declaration order
    std::vector<std::string> names;
    for (std::size_t i = 0; i < m.spec.layers.size(); ++i) {
        const std::string base = "layer" + std::to_string(i) + ":" +
                                 layer_kind_name(m.spec.layers[i].kind);
        if (m.spec.layers[i].kind == LayerKind::bracket) {
            names.push_back(base + ":Wa");
            names.push_back(base + ":Wb");
        } else {
            names.push_back(base + ":W");
        }
    }
    for (std::size_t i = 0; i < m.head_w.size(); ++i) {
        names.push_back("head" + std::to_string(i) + ":W");
        names.push_back("head" + std::to_string(i) + ":b");
    }

    GradCheckReport rep;
    auto refs = param_refs(m);
    if (refs.size() != names.size()) throw std::logic_error("grad_check: layout mismatch");
    std::size_t flat = 0;
    for (std::size_t t = 0; t < refs.size(); ++t) {
        double worst = 0.0;
        for (std::size_t i = 0; i < refs[t].size; ++i, ++flat) {
            double& p = refs[t].p[i];
            const double saved = p;
            p = saved + h;
            const double lp = mse_loss(model_forward(m, x, set_size), target).first;
            p = saved - h;
            const double lm = mse_loss(model_forward(m, x, set_size), target).first;
            p = saved;
            const double fd = (lp - lm) / (2.0 * h);
            const double a = analytic[flat];
            const double rel = std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
            worst = std::max(worst, rel);
        }
        rep.per_tensor.emplace_back(names[t], worst);
        rep.max_rel_err = std::max(rep.max_rel_err, worst);
    }
    return rep;
}

GradCheckReport grad_check_auto(Model& m, std::size_t batch, double h, std::uint64_t seed) {
    Rng rng = substream(seed, "gradcheck");
    bool has_pool = false;
    for (const LayerSpec& l : m.spec.layers)
        if (l.kind == LayerKind::pool) has_pool = true;
    const std::size_t set_size = has_pool ? 3 : 1;

    for (int attempt = 0; attempt < 400; ++attempt) {
        const double sigma = std::pow(0.9, attempt % 40);
        AlgFeature x(batch * set_size, m.alg.K, m.spec.in_channels);
        for (double& v : x.data) v = sigma * next_gaussian(rng);
        std::vector<double> target(batch * m.spec.out_dim);
        for (double& v : target) v = next_gaussian(rng);

        ModelCache cache;
        model_forward(m, x, set_size, &cache);
        // keep gates and pool margins away from their kinks
        double min_gap = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m.spec.layers.size(); ++i) {
            if (m.spec.layers[i].kind == LayerKind::relu ||
                m.spec.layers[i].kind == LayerKind::leaky_relu)
                for (double gate : cache.relu[i].gates) min_gap = std::min(min_gap, std::abs(gate));
            if (m.spec.layers[i].kind == LayerKind::pool)
                for (double margin : cache.pool[i].margins) min_gap = std::min(min_gap, margin);
        }
        if (min_gap <= 1e-4) continue;
        // keep the readout squash away from its kink and the head tanh
        // unsaturated, otherwise finite differences see a flat loss
        bool usable = true;
        for (double y : cache.invariant_values)
            if (std::abs(y) < 0.02) usable = false;
        if (m.head_w.size() > 1)
            for (std::size_t l = 0; l + 1 < m.head_w.size(); ++l)
                for (double pre : cache.head_pre[l])
                    if (std::abs(pre) > 4.0) usable = false;
        if (usable) return grad_check(m, x, target, h, set_size);
    }
    throw std::runtime_error("grad_check_auto: could not find a gate-safe input");
}

}  // namespace reln
