#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "reln/layers.hpp"
#include "reln/tasks.hpp"

namespace reln {

/// Mean squared error over all entries and its gradient 2 (pred - target) / N.
std::pair<double, std::vector<double>> mse_loss(const std::vector<double>& pred,
                                                const std::vector<double>& target);

struct AdamState {
    std::vector<double> m, v;
    std::size_t t = 0;
};

/// One bias-corrected Adam update; throws on non-finite gradients.
void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps);

/// Anything the training loop can optimize: a flat parameter vector plus
/// per-sample forward/backward. Inputs are laid out [inputs_per_sample, K]
/// per sample (flattened for the MLP baseline).
class Trainable {
public:
    virtual ~Trainable() = default;
    virtual std::string arch() const = 0;
    virtual std::size_t input_len() const = 0;
    virtual std::size_t out_dim() const = 0;
    virtual std::size_t n_params() const = 0;
    virtual std::vector<double> get_params() const = 0;
    virtual void set_params_flat(const std::vector<double>& p) = 0;
    virtual void predict_one(const double* input, double* out) const = 0;
    /// Adds scale * d(sum of squared errors)/d(params) into grad; returns the
    /// sample's sum of squared errors.
    virtual double sample_grad(const double* input, const double* target, double scale,
                               std::vector<double>& grad) const = 0;
    virtual std::string descriptor() const = 0;
};

/// ReLN model adapter (takes ownership of the model).
std::unique_ptr<Trainable> make_reln_trainable(Model model);
const Model& reln_model(const Trainable& t);

/// Plain fully connected network on flattened coordinates (tanh hidden
/// activations); the non-equivariant baseline.
struct FlatMlpSpec {
    std::string algebra;
    std::size_t n = 0;
    std::size_t in_dim = 0;
    std::vector<std::size_t> hidden;
    std::size_t out_dim = 1;
};
std::unique_ptr<Trainable> make_mlp_trainable(const FlatMlpSpec& spec, std::uint64_t seed);

std::size_t mlp_param_count(const FlatMlpSpec& spec);
/// Width for two equal hidden layers that best matches a parameter budget.
std::size_t mlp_width_for_params(std::size_t in_dim, std::size_t out_dim,
                                 std::size_t target_params);

std::vector<std::uint8_t> serialize_trainable(const Trainable& t);
std::unique_ptr<Trainable> deserialize_trainable(const std::vector<std::uint8_t>& bytes);
std::unique_ptr<Trainable> load_trainable(const std::string& path);

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t batch = 100;
    std::size_t epochs = 0;
    std::uint64_t seed = 0;
    std::size_t eval_m = 4;       // conjugations for the per-epoch metrics
    double group_sigma = 0.5;     // conjugation sampling scale
    std::size_t augment = 0;      // conjugated copies per sample per epoch (0 = off)
    double val_fraction = 0.1;
    unsigned threads = 1;
};

struct EvalReport {
    double mse_id = 0.0;
    double mse_conjugated = 0.0;
    double invariance_error = 0.0;
    std::size_t conj_count = 0;
    double wall_seconds = 0.0;
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double mse_id = 0.0;
    double mse_conjugated = 0.0;
    double invariance_error = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> epochs;
    std::vector<double> best_params;
    double best_val = 0.0;
    std::size_t best_epoch = 0;
};

/// Optimizer/progress state carried across --resume.
struct TrainState {
    std::size_t next_epoch = 0;
    AdamState adam;
    std::vector<double> best_params;
    double best_val = 0.0;
    std::size_t best_epoch = 0;
};

/// Deterministic mini-batch training: fixed shuffle order per (seed, epoch),
/// fixed gradient accumulation order (so any --threads value produces the
/// same bytes), per-epoch metrics on the held-out validation split, best
/// model tracked by validation loss. Metrics lines are tab-separated:
/// epoch, train loss, val loss, mse_id, mse_conjugated, invariance_error,
/// seconds.
TrainResult train_loop(Trainable& model, const Dataset& ds, const TrainConfig& cfg,
                       std::ostream* metrics = nullptr, TrainState* state = nullptr);

/// Mean over samples and M sampled group elements of the squared output
/// change under conjugation of the inputs.
double invariance_error(const Trainable& model, const Dataset& ds, std::size_t m, double sigma,
                        std::uint64_t seed, unsigned threads = 1);

/// mse_id, conjugation-averaged MSE over `conj_count` group elements, and
/// the invariance error (same group draws for both conjugation metrics).
EvalReport evaluate(const Trainable& model, const Dataset& ds, std::size_t conj_count, double sigma,
                    std::uint64_t seed, unsigned threads = 1);

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::vector<std::pair<std::string, double>> per_tensor;
};

/// Central finite differences of the scalar loss against model_backward,
/// relative error |a - f| / max(1, |a|, |f|) per parameter.
GradCheckReport grad_check(Model& m, const AlgFeature& x, const std::vector<double>& target,
                           double h, std::size_t set_size = 1);

/// Samples an input whose ReLU gates (and pool margins) stay at least 1e-4
/// from zero, then runs grad_check.
GradCheckReport grad_check_auto(Model& m, std::size_t batch, double h, std::uint64_t seed);

/// Checkpoint container: the model payload plus optimizer/progress state.
std::vector<std::uint8_t> encode_checkpoint(const Trainable& model, const TrainState& state);
std::unique_ptr<Trainable> decode_checkpoint(const std::vector<std::uint8_t>& bytes,
                                             TrainState& state);

}  // namespace reln
