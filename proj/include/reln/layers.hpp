#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reln/forms.hpp"
#include "reln/liealg.hpp"
#include "reln/numeric.hpp"

namespace reln {

/// Multi-channel algebra-valued feature: rows x K x channels, row-major.
/// Each column (fixed row, channel) is one algebra element in basis
/// coordinates. Set-valued inputs for pooling fold the set index into the
/// row dimension (rows = batch * set_size).
struct AlgFeature {
    std::size_t rows = 0;
    std::size_t K = 0;
    std::size_t channels = 0;
    std::vector<double> data;

    AlgFeature() = default;
    AlgFeature(std::size_t r, std::size_t k, std::size_t c)
        : rows(r), K(k), channels(c), data(r * k * c, 0.0) {}

    double& at(std::size_t r, std::size_t k, std::size_t c) {
        return data[(r * K + k) * channels + c];
    }
    double at(std::size_t r, std::size_t k, std::size_t c) const {
        return data[(r * K + k) * channels + c];
    }
};

/// out[r, :, c'] = sum_c x[r, :, c] W[c, c']   (no bias)
AlgFeature linear_forward(const AlgFeature& x, const Mat& w);
void linear_backward(const AlgFeature& x, const Mat& w, const AlgFeature& gout, AlgFeature& gx,
                     Mat& gw);

struct ReluCache {
    AlgFeature dirs;
    std::vector<double> gates;  // [rows, channels]
};

/// Directional rectification: d = xU, gate s_c = form(x_c, d_c),
/// out_c = x_c + max(0, s_c) d_c, then the leaky mix
/// alpha x + (1 - alpha) out. alpha = 0 is the plain variant.
AlgFeature relu_forward(const AlgFeature& x, const Mat& u, const BilinearForm& form, double alpha,
                        ReluCache* cache = nullptr);
void relu_backward(const AlgFeature& x, const Mat& u, const BilinearForm& form, double alpha,
                   const ReluCache& cache, const AlgFeature& gout, AlgFeature& gx, Mat& gu);

struct BracketCache {
    AlgFeature u, v;
};

/// Commutator residual: out = x + vee([ (xWa)^, (xWb)^ ]) channelwise,
/// contracted through the structure constants.
AlgFeature bracket_forward(const AlgFeature& x, const LieAlgebra& alg, const Mat& wa, const Mat& wb,
                           BracketCache* cache = nullptr);
void bracket_backward(const AlgFeature& x, const LieAlgebra& alg, const Mat& wa, const Mat& wb,
                      const BracketCache& cache, const AlgFeature& gout, AlgFeature& gx, Mat& gwa,
                      Mat& gwb);

struct PoolCache {
    std::size_t set_size = 1;
    std::vector<std::uint32_t> selected;  // [batch, channels]
    std::vector<double> margins;          // [batch, channels]: best gate minus runner-up
};

/// Max pooling over a set dimension: per channel picks the element with the
/// largest form(X_{n,c}, D_{n,c}) where D = xWd; ties go to the lowest set
/// index. x has rows = batch * set_size.
AlgFeature pool_forward(const AlgFeature& x, std::size_t set_size, const Mat& wd,
                        const BilinearForm& form, PoolCache* cache = nullptr);
/// Routes the gradient to the selected set element only; Wd gets none (the
/// selection is piecewise constant in it).
void pool_backward(const AlgFeature& x, const PoolCache& cache, const AlgFeature& gout,
                   AlgFeature& gx);

/// y[r, c] = form(x_c, x_c); invariant readout.
std::vector<double> invariant_forward(const AlgFeature& x, const BilinearForm& form);
void invariant_backward(const AlgFeature& x, const BilinearForm& form,
                        const std::vector<double>& gout, AlgFeature& gx);

enum class LayerKind { linear, relu, leaky_relu, bracket, pool };

std::string layer_kind_name(LayerKind k);
LayerKind parse_layer_kind(const std::string& s);

struct LayerSpec {
    LayerKind kind = LayerKind::linear;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    double alpha = 0.0;  // leaky_relu only
};

struct ModelSpec {
    std::string algebra;
    std::size_t n = 0;
    std::size_t in_channels = 0;
    std::vector<LayerSpec> layers;
    std::vector<std::size_t> head_widths;  // hidden widths of the scalar head
    std::size_t out_dim = 1;
};

/// A ReLN model: equivariant layer stack, invariant readout, then a small
/// fully connected head (tanh hidden activations) on the invariant channels.
/// The head squashes its inputs with sign(z) log(1 + |z|) to keep the raw
/// quadratic readout in a trainable range.
struct Model {
    ModelSpec spec;
    LieAlgebra alg;
    BilinearForm form;
    std::vector<std::vector<Mat>> layer_params;  // linear: {W}; relu: {U}; bracket: {Wa, Wb}; pool: {Wd}
    std::vector<Mat> head_w;
    std::vector<std::vector<double>> head_b;
};

/// Validates the spec chain and draws Gaussian weights with std
/// 1/sqrt(fan_in) (head biases start at zero). Deterministic in the seed.
Model init_params(const ModelSpec& spec, std::uint64_t seed);

std::size_t param_count(const Model& m);

/// Mutable views of every parameter tensor in declaration order (layers
/// first, then head weight/bias pairs).
struct ParamRef {
    double* p;
    std::size_t size;
};
std::vector<ParamRef> param_refs(Model& m);
std::vector<double> collect_params(const Model& m);
void set_params(Model& m, const std::vector<double>& flat);

struct ModelCache {
    std::size_t batch = 0;
    std::size_t set_size = 1;
    std::vector<AlgFeature> inputs;  // input to each layer
    std::vector<ReluCache> relu;
    std::vector<BracketCache> bracket;
    std::vector<PoolCache> pool;
    AlgFeature invariant_in;
    std::vector<double> invariant_values;         // raw quadratic readout [batch, C_last]
    std::vector<double> head_in;                  // squashed readout fed to the head
    std::vector<std::vector<double>> head_pre;    // pre-activations per head layer
    std::vector<std::vector<double>> head_act;    // activations per head layer
};

/// Dynamic-range squashing applied to the invariant values before the head:
/// psi(z) = sign(z) log(1 + |z|).
double head_squash(double z);
double head_squash_derivative(double z);

/// Runs layers, the invariant readout and the head; returns [batch, out_dim].
/// set_size > 1 requires exactly one pool layer in the stack.
std::vector<double> model_forward(const Model& m, const AlgFeature& x, std::size_t set_size = 1,
                                  ModelCache* cache = nullptr);

/// Accumulates dLoss/dParam into `grad` (flat, declaration order; caller
/// zeroes it). `dout` is dLoss/dOutput of shape [batch, out_dim].
void model_backward(const Model& m, const ModelCache& cache, const std::vector<double>& dout,
                    std::vector<double>& grad);

/// Applies a vectorized adjoint to every channel of every row.
AlgFeature adjoint_feature(const Mat& adj, const AlgFeature& x);

/// Self-describing binary container: "RLNM", format version u32 LE, a
/// length-prefixed UTF-8 JSON descriptor, all tensors as f64 LE, and a
/// trailing CRC-32 of everything before it.
struct RlnmPayload {
    std::string descriptor;
    std::vector<double> doubles;
};
std::vector<std::uint8_t> rlnm_encode(const RlnmPayload& p);
RlnmPayload rlnm_decode(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> serialize_model(const Model& m);
Model deserialize_model(const std::vector<std::uint8_t>& bytes);

ModelSpec model_spec_from_descriptor(const std::string& descriptor_json);
std::string descriptor_from_model_spec(const ModelSpec& spec, std::size_t param_count);

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::string& path);

}  // namespace reln
