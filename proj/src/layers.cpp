#include "reln/layers.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace reln {

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

namespace {

void check_feature(const AlgFeature& x, const char* op) {
    if (x.data.size() != x.rows * x.K * x.channels)
        throw std::invalid_argument(std::string(op) + ": inconsistent feature shape");
}

}  // namespace

AlgFeature linear_forward(const AlgFeature& x, const Mat& w) {
    check_feature(x, "linear_forward");
    if (w.rows() != x.channels) throw std::invalid_argument("linear_forward: channel mismatch");
    AlgFeature out(x.rows, x.K, w.cols());
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t k = 0; k < x.K; ++k) {
            const double* xr = &x.data[(r * x.K + k) * x.channels];
            double* or_ = &out.data[(r * x.K + k) * out.channels];
            for (std::size_t c = 0; c < x.channels; ++c) {
                const double xv = xr[c];
                if (xv == 0.0) continue;
                const double* wr = &w.data()[c * w.cols()];
                for (std::size_t c2 = 0; c2 < out.channels; ++c2) or_[c2] += xv * wr[c2];
            }
        }
    return out;
}

void linear_backward(const AlgFeature& x, const Mat& w, const AlgFeature& gout, AlgFeature& gx,
                     Mat& gw) {
    gx = AlgFeature(x.rows, x.K, x.channels);
    gw = Mat(w.rows(), w.cols());
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t k = 0; k < x.K; ++k) {
            const double* xr = &x.data[(r * x.K + k) * x.channels];
            const double* gr = &gout.data[(r * x.K + k) * gout.channels];
            double* gxr = &gx.data[(r * x.K + k) * x.channels];
            for (std::size_t c = 0; c < x.channels; ++c) {
                const double* wr = &w.data()[c * w.cols()];
                double* gwr = &gw.data()[c * w.cols()];
                double acc = 0.0;
                for (std::size_t c2 = 0; c2 < gout.channels; ++c2) {
                    gwr[c2] += xr[c] * gr[c2];
                    acc += gr[c2] * wr[c2];
                }
                gxr[c] = acc;
            }
        }
}

namespace {

// gate s = x_c^T G d_c for one (row, channel)
double form_gate(const AlgFeature& x, const AlgFeature& d, const Mat& g, std::size_t r,
                 std::size_t c) {
    const std::size_t K = x.K;
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const double xv = x.at(r, k, c);
        if (xv == 0.0) continue;
        double row = 0.0;
        for (std::size_t k2 = 0; k2 < K; ++k2) row += g(k, k2) * d.at(r, k2, c);
        s += xv * row;
    }
    return s;
}

}  // namespace

AlgFeature relu_forward(const AlgFeature& x, const Mat& u, const BilinearForm& form, double alpha,
                        ReluCache* cache) {
    check_feature(x, "relu_forward");
    if (u.rows() != x.channels || u.cols() != x.channels)
        throw std::invalid_argument("relu_forward: direction map must be square in channels");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("relu_forward: alpha out of range");
    if (form.gram.rows() != x.K) throw std::invalid_argument("relu_forward: form/algebra mismatch");

    AlgFeature d = linear_forward(x, u);
    AlgFeature relu(x.rows, x.K, x.channels);
    std::vector<double> gates(x.rows * x.channels);
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t c = 0; c < x.channels; ++c) {
            const double s = form_gate(x, d, form.gram, r, c);
            gates[r * x.channels + c] = s;
            const double coef = s > 0.0 ? s : 0.0;
            for (std::size_t k = 0; k < x.K; ++k)
                relu.at(r, k, c) = x.at(r, k, c) + coef * d.at(r, k, c);
        }

    AlgFeature out = relu;
    if (alpha != 0.0) {
        for (std::size_t i = 0; i < out.data.size(); ++i)
            out.data[i] = alpha * x.data[i] + (1.0 - alpha) * relu.data[i];
    }
    if (cache) {
        cache->dirs = std::move(d);
        cache->gates = std::move(gates);
    }
    return out;
}

void relu_backward(const AlgFeature& x, const Mat& u, const BilinearForm& form, double alpha,
                   const ReluCache& cache, const AlgFeature& gout, AlgFeature& gx, Mat& gu) {
    const std::size_t K = x.K, C = x.channels;
    const double m = 1.0 - alpha;
    const Mat& g = form.gram;
    gx = AlgFeature(x.rows, K, C);
    AlgFeature gd(x.rows, K, C);

    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t c = 0; c < C; ++c) {
            // identity paths: alpha x + m x contribute exactly gout
            for (std::size_t k = 0; k < K; ++k) gx.at(r, k, c) += gout.at(r, k, c);
            const double s = cache.gates[r * C + c];
            if (s <= 0.0) continue;
            double dot_gd = 0.0;
            for (std::size_t k = 0; k < K; ++k) dot_gd += gout.at(r, k, c) * cache.dirs.at(r, k, c);
            for (std::size_t k = 0; k < K; ++k) {
                // (G d)_k and (G^T x)_k; the Gram is symmetric by construction
                double gd_k = 0.0, gtx_k = 0.0;
                for (std::size_t k2 = 0; k2 < K; ++k2) {
                    gd_k += g(k, k2) * cache.dirs.at(r, k2, c);
                    gtx_k += g(k2, k) * x.at(r, k2, c);
                }
                gx.at(r, k, c) += m * dot_gd * gd_k;
                gd.at(r, k, c) = m * (s * gout.at(r, k, c) + dot_gd * gtx_k);
            }
        }

    // d = xU: push gd into U and x
    AlgFeature gx_from_d;
    linear_backward(x, u, gd, gx_from_d, gu);
    for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += gx_from_d.data[i];
}

AlgFeature bracket_forward(const AlgFeature& x, const LieAlgebra& alg, const Mat& wa, const Mat& wb,
                           BracketCache* cache) {
    check_feature(x, "bracket_forward");
    if (x.K != alg.K) throw std::invalid_argument("bracket_forward: algebra dimension mismatch");
    if (wa.rows() != x.channels || wa.cols() != x.channels || wb.rows() != x.channels ||
        wb.cols() != x.channels)
        throw std::invalid_argument("bracket_forward: channel maps must be square");

    AlgFeature u = linear_forward(x, wa);
    AlgFeature v = linear_forward(x, wb);
    AlgFeature out = x;
    for (std::size_t r = 0; r < x.rows; ++r)
        for (const auto& e : alg.structure_sparse) {
            const double* ur = &u.data[(r * x.K) * x.channels];
            const double* vr = &v.data[(r * x.K) * x.channels];
            double* or_ = &out.data[(r * x.K + e.k) * x.channels];
            for (std::size_t c = 0; c < x.channels; ++c) {
                const double ui = ur[e.i * x.channels + c], uj = ur[e.j * x.channels + c];
                const double vi = vr[e.i * x.channels + c], vj = vr[e.j * x.channels + c];
                or_[c] += e.v * (ui * vj - uj * vi);
            }
        }
    if (cache) {
        cache->u = std::move(u);
        cache->v = std::move(v);
    }
    return out;
}

void bracket_backward(const AlgFeature& x, const LieAlgebra& alg, const Mat& wa, const Mat& wb,
                      const BracketCache& cache, const AlgFeature& gout, AlgFeature& gx, Mat& gwa,
                      Mat& gwb) {
    AlgFeature gu(x.rows, x.K, x.channels);
    AlgFeature gv(x.rows, x.K, x.channels);
    for (std::size_t r = 0; r < x.rows; ++r)
        for (const auto& e : alg.structure_sparse) {
            const double* ur = &cache.u.data[(r * x.K) * x.channels];
            const double* vr = &cache.v.data[(r * x.K) * x.channels];
            const double* gr = &gout.data[(r * x.K + e.k) * x.channels];
            double* gur = &gu.data[(r * x.K) * x.channels];
            double* gvr = &gv.data[(r * x.K) * x.channels];
            for (std::size_t c = 0; c < x.channels; ++c) {
                const double gk = e.v * gr[c];
                gur[e.i * x.channels + c] += gk * vr[e.j * x.channels + c];
                gur[e.j * x.channels + c] -= gk * vr[e.i * x.channels + c];
                gvr[e.j * x.channels + c] += gk * ur[e.i * x.channels + c];
                gvr[e.i * x.channels + c] -= gk * ur[e.j * x.channels + c];
            }
        }

    AlgFeature gx_u, gx_v;
    linear_backward(x, wa, gu, gx_u, gwa);
    linear_backward(x, wb, gv, gx_v, gwb);
    gx = gout;  // residual path
    for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += gx_u.data[i] + gx_v.data[i];
}

AlgFeature pool_forward(const AlgFeature& x, std::size_t set_size, const Mat& wd,
                        const BilinearForm& form, PoolCache* cache) {
    check_feature(x, "pool_forward");
    if (set_size == 0) throw std::invalid_argument("pool_forward: empty set");
    if (x.rows % set_size != 0) throw std::invalid_argument("pool_forward: rows not divisible by set size");
    if (wd.rows() != x.channels || wd.cols() != x.channels)
        throw std::invalid_argument("pool_forward: direction map must be square");

    const std::size_t batch = x.rows / set_size;
    const AlgFeature dirs = linear_forward(x, wd);
    AlgFeature out(batch, x.K, x.channels);
    std::vector<std::uint32_t> selected(batch * x.channels, 0);
    std::vector<double> margins(batch * x.channels, 0.0);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < x.channels; ++c) {
            std::size_t best = 0;
            double best_gate = form_gate(x, dirs, form.gram, b * set_size, c);
            double second = -std::numeric_limits<double>::infinity();
            for (std::size_t nidx = 1; nidx < set_size; ++nidx) {
                const double gate = form_gate(x, dirs, form.gram, b * set_size + nidx, c);
                if (gate > best_gate) {
                    second = best_gate;
                    best_gate = gate;
                    best = nidx;
                } else if (gate > second) {
                    second = gate;
                }
            }
            selected[b * x.channels + c] = static_cast<std::uint32_t>(best);
            margins[b * x.channels + c] =
                set_size > 1 ? best_gate - second : std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < x.K; ++k) out.at(b, k, c) = x.at(b * set_size + best, k, c);
        }
    if (cache) {
        cache->set_size = set_size;
        cache->selected = std::move(selected);
        cache->margins = std::move(margins);
    }
    return out;
}

void pool_backward(const AlgFeature& x, const PoolCache& cache, const AlgFeature& gout,
                   AlgFeature& gx) {
    gx = AlgFeature(x.rows, x.K, x.channels);
    const std::size_t batch = x.rows / cache.set_size;
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < x.channels; ++c) {
            const std::size_t sel = cache.selected[b * x.channels + c];
            for (std::size_t k = 0; k < x.K; ++k)
                gx.at(b * cache.set_size + sel, k, c) += gout.at(b, k, c);
        }
}

std::vector<double> invariant_forward(const AlgFeature& x, const BilinearForm& form) {
    check_feature(x, "invariant_forward");
    std::vector<double> y(x.rows * x.channels);
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t c = 0; c < x.channels; ++c)
            y[r * x.channels + c] = form_gate(x, x, form.gram, r, c);
    return y;
}

void invariant_backward(const AlgFeature& x, const BilinearForm& form,
                        const std::vector<double>& gout, AlgFeature& gx) {
    const Mat& g = form.gram;
    gx = AlgFeature(x.rows, x.K, x.channels);
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t c = 0; c < x.channels; ++c) {
            const double go = gout[r * x.channels + c];
            if (go == 0.0) continue;
            for (std::size_t k = 0; k < x.K; ++k) {
                double row = 0.0;
                for (std::size_t k2 = 0; k2 < x.K; ++k2)
                    row += (g(k, k2) + g(k2, k)) * x.at(r, k2, c);
                gx.at(r, k, c) = go * row;
            }
        }
}

std::string layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::linear: return "linear";
        case LayerKind::relu: return "relu";
        case LayerKind::leaky_relu: return "leaky_relu";
        case LayerKind::bracket: return "bracket";
        case LayerKind::pool: return "pool";
    }
    throw std::logic_error("layer_kind_name: bad kind");
}

LayerKind parse_layer_kind(const std::string& s) {
    if (s == "linear") return LayerKind::linear;
    if (s == "relu") return LayerKind::relu;
    if (s == "leaky_relu") return LayerKind::leaky_relu;
    if (s == "bracket") return LayerKind::bracket;
    if (s == "pool") return LayerKind::pool;
    throw std::invalid_argument("unknown layer kind '" + s + "'");
}

namespace {

void validate_spec(const ModelSpec& spec) {
    if (spec.in_channels == 0) throw std::invalid_argument("model spec: in_channels must be >= 1");
    if (spec.out_dim == 0) throw std::invalid_argument("model spec: out_dim must be >= 1");
    std::size_t cur = spec.in_channels;
    std::size_t pools = 0;
    for (const LayerSpec& l : spec.layers) {
        if (l.in_channels != cur)
            throw std::invalid_argument("model spec: layer in_channels does not match previous layer");
        switch (l.kind) {
            case LayerKind::linear:
                if (l.out_channels == 0) throw std::invalid_argument("model spec: linear out_channels");
                break;
            case LayerKind::relu:
            case LayerKind::leaky_relu:
                if (l.out_channels != l.in_channels)
                    throw std::invalid_argument("model spec: relu preserves channel count");
                if (!(l.alpha >= 0.0 && l.alpha < 1.0))
                    throw std::invalid_argument("model spec: alpha must be in [0, 1)");
                break;
            case LayerKind::bracket:
                if (l.out_channels != l.in_channels)
                    throw std::invalid_argument("model spec: bracket needs in_channels == out_channels");
                break;
            case LayerKind::pool:
                if (l.out_channels != l.in_channels)
                    throw std::invalid_argument("model spec: pool preserves channel count");
                ++pools;
                break;
        }
        cur = l.out_channels;
    }
    if (pools > 1) throw std::invalid_argument("model spec: at most one pool layer");
}

std::size_t last_channels(const ModelSpec& spec) {
    return spec.layers.empty() ? spec.in_channels : spec.layers.back().out_channels;
}

Mat gaussian_mat(std::size_t rows, std::size_t cols, double std_dev, Rng& rng) {
    Mat m(rows, cols);
    for (std::size_t i = 0; i < rows * cols; ++i) m.data()[i] = std_dev * next_gaussian(rng);
    return m;
}

}  // namespace

Model init_params(const ModelSpec& spec, std::uint64_t seed) {
    validate_spec(spec);
    Model m;
    m.spec = spec;
    m.alg = make_algebra(spec.algebra, spec.n);
    m.form = modified_gl_form(m.alg);

    Rng rng = substream(seed, "init");
    for (const LayerSpec& l : spec.layers) {
        const double sd = 1.0 / std::sqrt(static_cast<double>(l.in_channels));
        std::vector<Mat> params;
        switch (l.kind) {
            case LayerKind::linear:
                params.push_back(gaussian_mat(l.in_channels, l.out_channels, sd, rng));
                break;
            case LayerKind::relu:
            case LayerKind::leaky_relu:
            case LayerKind::pool:
                params.push_back(gaussian_mat(l.in_channels, l.in_channels, sd, rng));
                break;
            case LayerKind::bracket:
                params.push_back(gaussian_mat(l.in_channels, l.in_channels, sd, rng));
                params.push_back(gaussian_mat(l.in_channels, l.in_channels, sd, rng));
                break;
        }
        m.layer_params.push_back(std::move(params));
    }

    std::size_t in = last_channels(spec);
    for (std::size_t w : spec.head_widths) {
        m.head_w.push_back(gaussian_mat(in, w, 1.0 / std::sqrt(static_cast<double>(in)), rng));
        m.head_b.emplace_back(w, 0.0);
        in = w;
    }
    m.head_w.push_back(gaussian_mat(in, spec.out_dim, 1.0 / std::sqrt(static_cast<double>(in)), rng));
    m.head_b.emplace_back(spec.out_dim, 0.0);
    return m;
}

std::vector<ParamRef> param_refs(Model& m) {
    std::vector<ParamRef> refs;
    for (auto& layer : m.layer_params)
        for (Mat& t : layer) refs.push_back({t.data(), t.rows() * t.cols()});
    for (std::size_t i = 0; i < m.head_w.size(); ++i) {
        refs.push_back({m.head_w[i].data(), m.head_w[i].rows() * m.head_w[i].cols()});
        refs.push_back({m.head_b[i].data(), m.head_b[i].size()});
    }
    return refs;
}

std::size_t param_count(const Model& m) {
    std::size_t total = 0;
    for (const auto& layer : m.layer_params)
        for (const Mat& t : layer) total += t.rows() * t.cols();
    for (std::size_t i = 0; i < m.head_w.size(); ++i)
        total += m.head_w[i].rows() * m.head_w[i].cols() + m.head_b[i].size();
    return total;
}

std::vector<double> collect_params(const Model& m) {
    std::vector<double> out;
    out.reserve(param_count(m));
    auto refs = param_refs(const_cast<Model&>(m));
    for (const ParamRef& r : refs) out.insert(out.end(), r.p, r.p + r.size);
    return out;
}

void set_params(Model& m, const std::vector<double>& flat) {
    auto refs = param_refs(m);
    std::size_t off = 0;
    for (const ParamRef& r : refs) {
        if (off + r.size > flat.size()) throw std::invalid_argument("set_params: too few values");
        std::copy(flat.begin() + off, flat.begin() + off + r.size, r.p);
        off += r.size;
    }
    if (off != flat.size()) throw std::invalid_argument("set_params: too many values");
}

std::vector<double> model_forward(const Model& m, const AlgFeature& x, std::size_t set_size,
                                  ModelCache* cache) {
    check_feature(x, "model_forward");
    if (x.K != m.alg.K) throw std::invalid_argument("model_forward: algebra dimension mismatch");
    if (x.channels != m.spec.in_channels)
        throw std::invalid_argument("model_forward: channel count mismatch");
    if (set_size == 0 || x.rows % set_size != 0)
        throw std::invalid_argument("model_forward: bad set size");
    for (double v : x.data)
        if (!std::isfinite(v)) throw std::invalid_argument("model_forward: non-finite input");

    ModelCache local;
    ModelCache& c = cache ? *cache : local;
    c = ModelCache{};
    c.batch = x.rows / set_size;
    c.set_size = set_size;
    c.relu.resize(m.spec.layers.size());
    c.bracket.resize(m.spec.layers.size());
    c.pool.resize(m.spec.layers.size());

    AlgFeature cur = x;
    std::size_t cur_set = set_size;
    for (std::size_t i = 0; i < m.spec.layers.size(); ++i) {
        const LayerSpec& l = m.spec.layers[i];
        c.inputs.push_back(cur);
        switch (l.kind) {
            case LayerKind::linear:
                cur = linear_forward(cur, m.layer_params[i][0]);
                break;
            case LayerKind::relu:
            case LayerKind::leaky_relu:
                cur = relu_forward(cur, m.layer_params[i][0], m.form, l.alpha, &c.relu[i]);
                break;
            case LayerKind::bracket:
                cur = bracket_forward(cur, m.alg, m.layer_params[i][0], m.layer_params[i][1],
                                      &c.bracket[i]);
                break;
            case LayerKind::pool:
                cur = pool_forward(cur, cur_set, m.layer_params[i][0], m.form, &c.pool[i]);
                cur_set = 1;
                break;
        }
    }
    if (cur_set != 1)
        throw std::invalid_argument("model_forward: set-valued input needs a pool layer");

    c.invariant_in = cur;
    c.invariant_values = invariant_forward(cur, m.form);
    c.head_in.resize(c.invariant_values.size());
    for (std::size_t i = 0; i < c.invariant_values.size(); ++i)
        c.head_in[i] = head_squash(c.invariant_values[i]);

    // head: tanh hidden layers, linear output
    const std::size_t batch = c.batch;
    std::vector<double> h = c.head_in;
    std::size_t h_dim = cur.channels;
    for (std::size_t l = 0; l < m.head_w.size(); ++l) {
        const Mat& w = m.head_w[l];
        const std::vector<double>& b = m.head_b[l];
        std::vector<double> pre(batch * w.cols());
        for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t j = 0; j < w.cols(); ++j) {
                double s = b[j];
                for (std::size_t i2 = 0; i2 < h_dim; ++i2) s += h[r * h_dim + i2] * w(i2, j);
                pre[r * w.cols() + j] = s;
            }
        c.head_pre.push_back(pre);
        if (l + 1 < m.head_w.size()) {
            for (double& v : pre) v = std::tanh(v);
        }
        c.head_act.push_back(pre);
        h = pre;
        h_dim = w.cols();
    }
    return h;
}

void model_backward(const Model& m, const ModelCache& c, const std::vector<double>& dout,
                    std::vector<double>& grad) {
    const std::size_t batch = c.batch;
    if (dout.size() != batch * m.spec.out_dim)
        throw std::invalid_argument("model_backward: upstream gradient shape mismatch");
    if (c.inputs.size() != m.spec.layers.size())
        throw std::invalid_argument("model_backward: stale cache");
    const std::size_t total = param_count(m);
    if (grad.size() != total) grad.resize(total, 0.0);

    // tensor offsets in declaration order
    std::vector<std::size_t> layer_offset(m.spec.layers.size(), 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < m.layer_params.size(); ++i) {
        layer_offset[i] = off;
        for (const Mat& t : m.layer_params[i]) off += t.rows() * t.cols();
    }
    const std::size_t head_offset = off;

    // head backward
    std::vector<double> gh = dout;
    std::size_t head_off_end = total;
    for (std::size_t li = m.head_w.size(); li-- > 0;) {
        const Mat& w = m.head_w[li];
        const std::vector<double>& in =
            li == 0 ? c.head_in : c.head_act[li - 1];
        const std::size_t in_dim = w.rows(), out_dim = w.cols();
        if (li + 1 < m.head_w.size()) {
            // gh is d/d act of a tanh layer; convert to d/d pre
            const std::vector<double>& act = c.head_act[li];
            for (std::size_t idx = 0; idx < gh.size(); ++idx)
                gh[idx] *= 1.0 - act[idx] * act[idx];
        }
        const std::size_t b_off = head_off_end - out_dim;
        const std::size_t w_off = b_off - in_dim * out_dim;
        std::vector<double> gin(batch * in_dim, 0.0);
        for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t j = 0; j < out_dim; ++j) {
                const double go = gh[r * out_dim + j];
                grad[b_off + j] += go;
                for (std::size_t i2 = 0; i2 < in_dim; ++i2) {
                    grad[w_off + i2 * out_dim + j] += in[r * in_dim + i2] * go;
                    gin[r * in_dim + i2] += go * w(i2, j);
                }
            }
        gh = std::move(gin);
        head_off_end = w_off;
    }
    if (head_off_end != head_offset) throw std::logic_error("model_backward: layout mismatch");

    // undo the head input squashing, then the invariant readout
    for (std::size_t i = 0; i < gh.size(); ++i)
        gh[i] *= head_squash_derivative(c.invariant_values[i]);
    AlgFeature gfeat;
    invariant_backward(c.invariant_in, m.form, gh, gfeat);

    // layers in reverse
    for (std::size_t i = m.spec.layers.size(); i-- > 0;) {
        const LayerSpec& l = m.spec.layers[i];
        const AlgFeature& in = c.inputs[i];
        AlgFeature gin;
        switch (l.kind) {
            case LayerKind::linear: {
                Mat gw;
                linear_backward(in, m.layer_params[i][0], gfeat, gin, gw);
                double* dst = &grad[layer_offset[i]];
                for (std::size_t p = 0; p < gw.rows() * gw.cols(); ++p) dst[p] += gw.data()[p];
                break;
            }
            case LayerKind::relu:
            case LayerKind::leaky_relu: {
                Mat gu;
                relu_backward(in, m.layer_params[i][0], m.form, l.alpha, c.relu[i], gfeat, gin, gu);
                double* dst = &grad[layer_offset[i]];
                for (std::size_t p = 0; p < gu.rows() * gu.cols(); ++p) dst[p] += gu.data()[p];
                break;
            }
            case LayerKind::bracket: {
                Mat gwa, gwb;
                bracket_backward(in, m.alg, m.layer_params[i][0], m.layer_params[i][1], c.bracket[i],
                                 gfeat, gin, gwa, gwb);
                double* dst = &grad[layer_offset[i]];
                const std::size_t sz = gwa.rows() * gwa.cols();
                for (std::size_t p = 0; p < sz; ++p) dst[p] += gwa.data()[p];
                for (std::size_t p = 0; p < sz; ++p) dst[sz + p] += gwb.data()[p];
                break;
            }
            case LayerKind::pool:
                // selection is piecewise constant in Wd: no parameter gradient
                pool_backward(in, c.pool[i], gfeat, gin);
                break;
        }
        gfeat = std::move(gin);
    }
}

double head_squash(double z) { return (z < 0.0 ? -1.0 : 1.0) * std::log1p(std::abs(z)); }

double head_squash_derivative(double z) { return 1.0 / (1.0 + std::abs(z)); }

AlgFeature adjoint_feature(const Mat& adj, const AlgFeature& x) {
    if (adj.rows() != x.K || adj.cols() != x.K)
        throw std::invalid_argument("adjoint_feature: adjoint shape mismatch");
    AlgFeature out(x.rows, x.K, x.channels);
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t k = 0; k < x.K; ++k) {
            double* orow = &out.data[(r * x.K + k) * x.channels];
            for (std::size_t k2 = 0; k2 < x.K; ++k2) {
                const double a = adj(k, k2);
                if (a == 0.0) continue;
                const double* xrow = &x.data[(r * x.K + k2) * x.channels];
                for (std::size_t c = 0; c < x.channels; ++c) orow[c] += a * xrow[c];
            }
        }
    return out;
}

namespace {

constexpr std::uint32_t kRlnmVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& b, std::size_t& pos) {
    if (pos + 4 > b.size()) throw std::runtime_error("payload truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[pos + i]) << (8 * i);
    pos += 4;
    return v;
}

}  // namespace

std::vector<std::uint8_t> rlnm_encode(const RlnmPayload& p) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'R', 'L', 'N', 'M'});
    put_u32(out, kRlnmVersion);
    put_u32(out, static_cast<std::uint32_t>(p.descriptor.size()));
    out.insert(out.end(), p.descriptor.begin(), p.descriptor.end());
    const std::size_t doff = out.size();
    out.resize(doff + p.doubles.size() * 8);
    std::memcpy(out.data() + doff, p.doubles.data(), p.doubles.size() * 8);
    put_u32(out, crc32(out.data(), out.size()));
    return out;
}

RlnmPayload rlnm_decode(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 16) throw std::runtime_error("model payload truncated");
    if (std::memcmp(bytes.data(), "RLNM", 4) != 0) throw std::runtime_error("bad model magic");
    const std::uint32_t stored_crc = [&] {
        std::size_t pos = bytes.size() - 4;
        return get_u32(bytes, pos);
    }();
    if (crc32(bytes.data(), bytes.size() - 4) != stored_crc)
        throw std::runtime_error("model checksum failure");
    std::size_t pos = 4;
    const std::uint32_t version = get_u32(bytes, pos);
    if (version != kRlnmVersion)
        throw std::runtime_error("unsupported model format version " + std::to_string(version));
    const std::uint32_t dlen = get_u32(bytes, pos);
    if (pos + dlen + 4 > bytes.size()) throw std::runtime_error("model payload truncated");
    RlnmPayload p;
    p.descriptor.assign(bytes.begin() + pos, bytes.begin() + pos + dlen);
    pos += dlen;
    const std::size_t body = bytes.size() - 4 - pos;
    if (body % 8 != 0) throw std::runtime_error("model payload truncated");
    p.doubles.resize(body / 8);
    std::memcpy(p.doubles.data(), bytes.data() + pos, body);
    return p;
}

std::string descriptor_from_model_spec(const ModelSpec& spec, std::size_t params) {
    nlohmann::json j;
    j["arch"] = "reln";
    j["algebra"] = spec.algebra;
    j["n"] = spec.n;
    j["in_channels"] = spec.in_channels;
    j["out_dim"] = spec.out_dim;
    j["params"] = params;
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerSpec& l : spec.layers) {
        nlohmann::json e;
        e["kind"] = layer_kind_name(l.kind);
        e["in"] = l.in_channels;
        e["out"] = l.out_channels;
        if (l.kind == LayerKind::leaky_relu) e["alpha"] = l.alpha;
        layers.push_back(e);
    }
    j["layers"] = layers;
    j["head"] = spec.head_widths;
    return j.dump();
}

ModelSpec model_spec_from_descriptor(const std::string& descriptor_json) {
    nlohmann::json j = nlohmann::json::parse(descriptor_json);
    if (j.value("arch", "") != "reln")
        throw std::runtime_error("descriptor arch is not 'reln'");
    ModelSpec spec;
    spec.algebra = j.at("algebra").get<std::string>();
    spec.n = j.at("n").get<std::size_t>();
    spec.in_channels = j.at("in_channels").get<std::size_t>();
    spec.out_dim = j.at("out_dim").get<std::size_t>();
    for (const auto& e : j.at("layers")) {
        LayerSpec l;
        l.kind = parse_layer_kind(e.at("kind").get<std::string>());
        l.in_channels = e.at("in").get<std::size_t>();
        l.out_channels = e.at("out").get<std::size_t>();
        l.alpha = e.value("alpha", 0.0);
        spec.layers.push_back(l);
    }
    spec.head_widths = j.at("head").get<std::vector<std::size_t>>();
    return spec;
}

std::vector<std::uint8_t> serialize_model(const Model& m) {
    RlnmPayload p;
    p.descriptor = descriptor_from_model_spec(m.spec, param_count(m));
    p.doubles = collect_params(m);
    return rlnm_encode(p);
}

Model deserialize_model(const std::vector<std::uint8_t>& bytes) {
    const RlnmPayload p = rlnm_decode(bytes);
    const ModelSpec spec = model_spec_from_descriptor(p.descriptor);
    Model m = init_params(spec, 0);
    const std::size_t params = param_count(m);
    if (p.doubles.size() != params) {
        nlohmann::json j = nlohmann::json::parse(p.descriptor);
        if (!(j.contains("state_doubles") &&
              params + j["state_doubles"].get<std::size_t>() == p.doubles.size()))
            throw std::runtime_error("model payload truncated");
    }
    set_params(m, std::vector<double>(p.doubles.begin(), p.doubles.begin() + params));
    return m;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for '" + path + "'");
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open '" + path + "'");
    const std::streamsize size = f.tellg();
    f.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    f.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!f) throw IoError("read failed for '" + path + "'");
    return bytes;
}

}  // namespace reln
