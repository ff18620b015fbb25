#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "baselines.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "image.hpp"
#include "nn.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "weights_io.hpp"

namespace ltew {

// The warping model: a small conv encoder produces one latent per input
// pixel; two conv heads estimate per-cell Fourier amplitudes and frequencies;
// a linear head turns the query's 10-entry shape descriptor into a phase; a
// 4-layer MLP decodes the synthesized features into an RGB residual added to
// a bilinear skip sample. Templated on the scalar so the same code runs in
// float for production and double for finite-difference checks.

struct ModelConfig {
    int channels = 64;  // encoder feature channels C
    int freqs = 32;     // frequency pairs D (amp/freq heads emit 2D channels)
    int hidden = 128;   // decoder MLP width
};

template <typename T>
struct LtewModel {
    int channels = 0, freqs = 0, hidden = 0;
    std::array<Tensor<T>, 4> enc_w, enc_b;
    Tensor<T> amp_w, amp_b, freq_w, freq_b, phase_w, phase_b;
    std::array<Tensor<T>, 4> dec_w, dec_b;
};

// Canonical tensor enumeration: forward-topological order, weight before
// bias. Random init draws, Adam state and gradient accumulation all follow
// this order, which keeps training runs reproducible.
template <typename M, typename Fn>
void for_each_model_tensor(M& m, Fn&& fn) {
    for (int i = 0; i < 4; ++i) {
        fn("encoder.conv" + std::to_string(i) + ".w", m.enc_w[static_cast<size_t>(i)]);
        fn("encoder.conv" + std::to_string(i) + ".b", m.enc_b[static_cast<size_t>(i)]);
    }
    fn(std::string("amp.conv.w"), m.amp_w);
    fn(std::string("amp.conv.b"), m.amp_b);
    fn(std::string("freq.conv.w"), m.freq_w);
    fn(std::string("freq.conv.b"), m.freq_b);
    fn(std::string("phase.linear.w"), m.phase_w);
    fn(std::string("phase.linear.b"), m.phase_b);
    for (int i = 0; i < 4; ++i) {
        fn("decoder.layer" + std::to_string(i) + ".w", m.dec_w[static_cast<size_t>(i)]);
        fn("decoder.layer" + std::to_string(i) + ".b", m.dec_b[static_cast<size_t>(i)]);
    }
}

namespace detail {

inline void check_model_config(const ModelConfig& cfg) {
    if (cfg.channels < 1 || cfg.freqs < 1 || cfg.hidden < 1)
        throw std::invalid_argument("model config: channels, freqs and hidden must be positive");
}

template <typename T>
void shape_model_tensors(LtewModel<T>& m) {
    const int c = m.channels, d2 = 2 * m.freqs, hid = m.hidden;
    m.enc_w[0] = Tensor<T>({c, 3, 3, 3});
    m.enc_b[0] = Tensor<T>({c});
    for (int i = 1; i < 4; ++i) {
        m.enc_w[static_cast<size_t>(i)] = Tensor<T>({c, c, 3, 3});
        m.enc_b[static_cast<size_t>(i)] = Tensor<T>({c});
    }
    m.amp_w = Tensor<T>({d2, c, 3, 3});
    m.amp_b = Tensor<T>({d2});
    m.freq_w = Tensor<T>({d2, c, 3, 3});
    m.freq_b = Tensor<T>({d2});
    m.phase_w = Tensor<T>({m.freqs, 10});
    m.phase_b = Tensor<T>({m.freqs});
    m.dec_w[0] = Tensor<T>({hid, d2});
    m.dec_b[0] = Tensor<T>({hid});
    m.dec_w[1] = Tensor<T>({hid, hid});
    m.dec_b[1] = Tensor<T>({hid});
    m.dec_w[2] = Tensor<T>({hid, hid});
    m.dec_b[2] = Tensor<T>({hid});
    m.dec_w[3] = Tensor<T>({3, hid});
    m.dec_b[3] = Tensor<T>({3});
}

template <typename T>
int tensor_fan_in(const Tensor<T>& w) {
    return w.ndim() == 4 ? w.dim(1) * w.dim(2) * w.dim(3) : w.dim(1);
}

}  // namespace detail

// Fresh model with every layer drawn U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
// weight then bias, in canonical tensor order. Draws happen in double so the
// float and double instantiations of one seed agree up to rounding.
template <typename T>
LtewModel<T> make_model(const ModelConfig& cfg, uint64_t seed) {
    detail::check_model_config(cfg);
    LtewModel<T> m;
    m.channels = cfg.channels;
    m.freqs = cfg.freqs;
    m.hidden = cfg.hidden;
    detail::shape_model_tensors(m);
    Rng rng(seed);
    const Tensor<T>* current_w = nullptr;
    for_each_model_tensor(m, [&](const std::string&, Tensor<T>& t) {
        if (t.ndim() >= 2) current_w = &t;  // bias reuses its layer's fan-in
        const double bound = 1.0 / std::sqrt(static_cast<double>(detail::tensor_fan_in(*current_w)));
        for (size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(-bound, bound));
    });
    return m;
}

// Gradient accumulator: dimensions recorded, tensors left empty so the layer
// backwards can lazily zero-init and accumulate.
template <typename T>
LtewModel<T> make_grads(const LtewModel<T>& like) {
    LtewModel<T> g;
    g.channels = like.channels;
    g.freqs = like.freqs;
    g.hidden = like.hidden;
    return g;
}

// Builds a model from a named weight collection, inferring (channels, freqs,
// hidden) from tensor shapes and validating every record. Missing, unknown,
// or mis-shaped tensors raise FormatError naming the offender.
template <typename T>
LtewModel<T> model_from_weights(const WeightMap& wm) {
    auto fetch = [&](const std::string& name) -> const Tensor<float>& {
        auto it = wm.find(name);
        if (it == wm.end()) throw FormatError("weights: missing tensor '" + name + "'");
        return it->second;
    };
    const Tensor<float>& e0 = fetch("encoder.conv0.w");
    if (e0.ndim() != 4) throw FormatError("weights: tensor 'encoder.conv0.w' must have rank 4");
    const Tensor<float>& aw = fetch("amp.conv.w");
    if (aw.ndim() != 4) throw FormatError("weights: tensor 'amp.conv.w' must have rank 4");
    if (aw.dim(0) % 2 != 0)
        throw FormatError("weights: tensor 'amp.conv.w' needs an even channel count (cos/sin halves)");
    const Tensor<float>& d0 = fetch("decoder.layer0.w");
    if (d0.ndim() != 2) throw FormatError("weights: tensor 'decoder.layer0.w' must have rank 2");

    ModelConfig cfg;
    cfg.channels = e0.dim(0);
    cfg.freqs = aw.dim(0) / 2;
    cfg.hidden = d0.dim(0);
    detail::check_model_config(cfg);

    LtewModel<T> m;
    m.channels = cfg.channels;
    m.freqs = cfg.freqs;
    m.hidden = cfg.hidden;
    detail::shape_model_tensors(m);

    size_t seen = 0;
    for_each_model_tensor(m, [&](const std::string& name, Tensor<T>& t) {
        const Tensor<float>& src = fetch(name);
        if (src.shape() != t.shape())
            throw FormatError("weights: tensor '" + name + "' expected shape " + shape_string(t.shape()) +
                              ", got " + shape_string(src.shape()));
        t = src.template cast<T>();
        ++seen;
    });
    if (seen != wm.size())
        for (const auto& [name, tensor] : wm) {
            (void)tensor;
            bool known = false;
            for_each_model_tensor(m, [&](const std::string& n, Tensor<T>&) { known = known || n == name; });
            if (!known) throw FormatError("weights: unexpected tensor '" + name + "'");
        }
    return m;
}

template <typename T>
WeightMap model_to_weights(const LtewModel<T>& m) {
    WeightMap wm;
    for_each_model_tensor(m, [&](const std::string& name, const Tensor<T>& t) {
        wm.emplace(name, t.template cast<float>());
    });
    return wm;
}

// Planar (3,h,w) float tensor from the interleaved image RGB.
template <typename T = float>
Tensor<T> image_to_tensor(const ImageBuffer& img) {
    Tensor<T> x({3, img.height, img.width});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int xx = 0; xx < img.width; ++xx)
                x.at3(c, y, xx) = static_cast<T>(img.at(xx, y, c));
    return x;
}

// ---------------------------------------------------------------------------
// Forward pieces

// Latent field: 4 stride-1 padded convs with ReLU between (none after the
// last), spatial size preserved. Intermediates are released as they die.
template <typename T>
Tensor<T> encode(const LtewModel<T>& m, const Tensor<T>& x) {
    Tensor<T> a = conv3x3_forward(x, m.enc_w[0], m.enc_b[0]);
    for (int i = 1; i < 4; ++i) {
        for (size_t j = 0; j < a.size(); ++j)
            if (a[j] < T{}) a[j] = T{};
        a = conv3x3_forward(a, m.enc_w[static_cast<size_t>(i)], m.enc_b[static_cast<size_t>(i)]);
    }
    return a;
}

template <typename T>
struct FourierMaps {
    Tensor<T> amp;   // (2D,h,w): cos amplitudes [0,D), sin amplitudes [D,2D)
    Tensor<T> freq;  // (2D,h,w): x coefficients [0,D), y coefficients [D,2D)
};

template <typename T>
FourierMaps<T> estimate_fourier(const LtewModel<T>& m, const Tensor<T>& z) {
    return {conv3x3_forward(z, m.amp_w, m.amp_b), conv3x3_forward(z, m.freq_w, m.freq_b)};
}

template <typename T>
FourierMaps<T> infer_fourier(const LtewModel<T>& m, const Tensor<T>& x) {
    return estimate_fourier(m, encode(m, x));
}

// Phase head over a batch of shape descriptors, (m,10) -> (m,D).
template <typename T>
Tensor<T> estimate_phase(const LtewModel<T>& m, const Tensor<T>& shapes) {
    if (shapes.ndim() != 2 || shapes.dim(1) != 10)
        throw std::invalid_argument("phase: shapes must be (m,10), got " + shape_string(shapes.shape()));
    for (size_t i = 0; i < shapes.size(); ++i)
        if (!std::isfinite(static_cast<double>(shapes[i])))
            throw NumericError("phase: non-finite shape input");
    return linear_forward(shapes, m.phase_w, m.phase_b);
}

// One cell's feature row: feat[k] = A_cos[k] cos(pi * arg_k), feat[D+k] =
// A_sin[k] sin(pi * arg_k) with arg_k = Fx[k] dx + Fy[k] dy + p[k]. Amp and
// freq values live chan_stride apart (dense maps) or contiguously (stride 1).
template <typename T>
void synthesize_row(const T* amp_base, const T* freq_base, size_t chan_stride, int d, T dx, T dy,
                    const T* phase_row, T* args_row, T* feat_row) {
    const size_t off = static_cast<size_t>(d) * chan_stride;
    for (int k = 0; k < d; ++k) {
        const size_t sk = static_cast<size_t>(k) * chan_stride;
        const T arg = freq_base[sk] * dx + freq_base[off + sk] * dy + phase_row[k];
        args_row[k] = arg;
        feat_row[k] = amp_base[sk] * static_cast<T>(std::cos(static_cast<T>(kPiD) * arg));
        feat_row[d + k] = amp_base[off + sk] * static_cast<T>(std::sin(static_cast<T>(kPiD) * arg));
    }
}

// Reverse of synthesize_row. damp/dfreq/dphase accumulate.
template <typename T>
void synthesize_row_backward(const T* amp_base, size_t chan_stride, int d, T dx, T dy,
                             const T* args_row, const T* dfeat_row, T* damp_base, T* dfreq_base,
                             T* dphase_row) {
    const size_t off = static_cast<size_t>(d) * chan_stride;
    for (int k = 0; k < d; ++k) {
        const size_t sk = static_cast<size_t>(k) * chan_stride;
        const T ca = static_cast<T>(std::cos(static_cast<T>(kPiD) * args_row[k]));
        const T sa = static_cast<T>(std::sin(static_cast<T>(kPiD) * args_row[k]));
        damp_base[sk] += ca * dfeat_row[k];
        damp_base[off + sk] += sa * dfeat_row[d + k];
        const T darg = static_cast<T>(kPiD) * (amp_base[off + sk] * ca * dfeat_row[d + k] -
                                               amp_base[sk] * sa * dfeat_row[k]);
        dfreq_base[sk] += darg * dx;
        dfreq_base[off + sk] += darg * dy;
        dphase_row[k] += darg;
    }
}

// Spec-shaped single-cell synthesis on contiguous vectors: amp = 2D values
// (cos half then sin half), freq = 2D coefficients (x half then y half).
template <typename T>
std::vector<T> synthesize_features(const std::vector<T>& amp, const std::vector<T>& freq, T dx, T dy,
                                   const std::vector<T>& phase) {
    const int d = static_cast<int>(phase.size());
    if (amp.size() != static_cast<size_t>(2 * d) || freq.size() != static_cast<size_t>(2 * d))
        throw std::invalid_argument("synthesize: amp/freq need 2D entries matching the D-entry phase");
    std::vector<T> args(static_cast<size_t>(d)), feat(static_cast<size_t>(2 * d));
    synthesize_row(amp.data(), freq.data(), 1, d, dx, dy, phase.data(), args.data(), feat.data());
    return feat;
}

// ---------------------------------------------------------------------------
// Local ensemble

// The 2x2 latent cells around a continuous input-pixel position. Cell
// centers sit at half-integers; indices are clamped at the borders. Deltas
// are the query minus each (clamped) center, in normalized units scaled by
// the axis size (2 per input pixel), matching the frequency units the model
// trains in. Weights follow the opposite-area rule, renormalized to sum 1;
// a degenerate spread (1-wide axis) falls back to equal weights.
struct EnsembleCells {
    std::array<int, 2> ix{}, iy{};
    std::array<double, 2> dx{}, dy{};
    std::array<double, 4> w{};  // cell (row b, col a) at index b*2 + a
};

inline EnsembleCells ensemble_cells(double px, double py, int w, int h) {
    EnsembleCells e;
    const double tx = px - 0.5, ty = py - 0.5;
    const int jx = static_cast<int>(std::floor(tx)), jy = static_cast<int>(std::floor(ty));
    e.ix = {std::clamp(jx, 0, w - 1), std::clamp(jx + 1, 0, w - 1)};
    e.iy = {std::clamp(jy, 0, h - 1), std::clamp(jy + 1, 0, h - 1)};
    std::array<double, 2> cx{e.ix[0] + 0.5, e.ix[1] + 0.5}, cy{e.iy[0] + 0.5, e.iy[1] + 0.5};
    for (int a = 0; a < 2; ++a) {
        e.dx[static_cast<size_t>(a)] = 2.0 * (px - cx[static_cast<size_t>(a)]);
        e.dy[static_cast<size_t>(a)] = 2.0 * (py - cy[static_cast<size_t>(a)]);
    }
    double total = 0.0;
    for (int b = 0; b < 2; ++b)
        for (int a = 0; a < 2; ++a) {
            const double area = std::abs(px - cx[static_cast<size_t>(1 - a)]) *
                                std::abs(py - cy[static_cast<size_t>(1 - b)]);
            e.w[static_cast<size_t>(b * 2 + a)] = area;
            total += area;
        }
    if (total > 0.0)
        for (double& v : e.w) v /= total;
    else
        e.w = {0.25, 0.25, 0.25, 0.25};
    return e;
}

// ---------------------------------------------------------------------------
// Query batch forward/backward (training path, all activations retained)

template <typename T>
struct ImageTrace {
    Tensor<T> x;                      // (3,h,w)
    std::array<Tensor<T>, 4> conv;    // pre-activation conv outputs; conv[3] is z
    std::array<Tensor<T>, 3> rel;     // relu outputs feeding the next conv
    Tensor<T> amp, freq;              // (2D,h,w)
};

template <typename T>
ImageTrace<T> forward_image(const LtewModel<T>& m, Tensor<T> x) {
    ImageTrace<T> tr;
    tr.x = std::move(x);
    tr.conv[0] = conv3x3_forward(tr.x, m.enc_w[0], m.enc_b[0]);
    for (int i = 1; i < 4; ++i) {
        tr.rel[static_cast<size_t>(i - 1)] = relu_forward(tr.conv[static_cast<size_t>(i - 1)]);
        tr.conv[static_cast<size_t>(i)] = conv3x3_forward(tr.rel[static_cast<size_t>(i - 1)],
                                                          m.enc_w[static_cast<size_t>(i)],
                                                          m.enc_b[static_cast<size_t>(i)]);
    }
    tr.amp = conv3x3_forward(tr.conv[3], m.amp_w, m.amp_b);
    tr.freq = conv3x3_forward(tr.conv[3], m.freq_w, m.freq_b);
    return tr;
}

template <typename T>
struct QueryTrace {
    int m = 0;
    std::vector<EnsembleCells> cells;  // m entries
    Tensor<T> shapes;                  // (m,10)
    Tensor<T> phase;                   // (m,D)
    Tensor<T> args;                    // (4m,D) synthesis arguments
    Tensor<T> feat;                    // (4m,2D)
    std::array<Tensor<T>, 4> lin;      // decoder pre-activations; lin[3] is (4m,3)
    std::array<Tensor<T>, 3> act;
    Tensor<T> skip;                    // (m,3)
    Tensor<T> pred;                    // (m,3) skip + weighted residual, unclipped
};

// Runs phase estimation, per-cell Fourier synthesis, the decoder MLP and the
// ensemble combination for m queries. Residual summation is fixed in cell
// index order, so results do not depend on how queries are batched.
template <typename T>
QueryTrace<T> forward_queries(const LtewModel<T>& m, const Tensor<T>& amp, const Tensor<T>& freq,
                              std::vector<EnsembleCells> cells, const Tensor<T>& shapes,
                              const Tensor<T>& skip) {
    const int n = static_cast<int>(cells.size());
    if (n == 0) throw std::invalid_argument("forward_queries: empty query batch");
    if (shapes.ndim() != 2 || shapes.dim(0) != n || shapes.dim(1) != 10)
        throw std::invalid_argument("forward_queries: shapes must be (m,10)");
    if (skip.ndim() != 2 || skip.dim(0) != n || skip.dim(1) != 3)
        throw std::invalid_argument("forward_queries: skip must be (m,3)");
    if (amp.ndim() != 3 || !amp.same_shape(freq) || amp.dim(0) != 2 * m.freqs)
        throw std::invalid_argument("forward_queries: fourier maps must be (2D,h,w)");

    const int d = m.freqs, mh = amp.dim(1), mw = amp.dim(2);
    const size_t plane = static_cast<size_t>(mh) * mw;
    QueryTrace<T> q;
    q.m = n;
    q.cells = std::move(cells);
    q.shapes = shapes;
    q.skip = skip;
    q.phase = estimate_phase(m, q.shapes);
    q.args = Tensor<T>({4 * n, d});
    q.feat = Tensor<T>({4 * n, 2 * d});
    for (int i = 0; i < n; ++i) {
        const EnsembleCells& e = q.cells[static_cast<size_t>(i)];
        const T* prow = q.phase.data() + static_cast<size_t>(i) * d;
        for (int c = 0; c < 4; ++c) {
            const int a = c & 1, b = c >> 1;
            const size_t base = static_cast<size_t>(e.iy[static_cast<size_t>(b)]) * mw +
                                static_cast<size_t>(e.ix[static_cast<size_t>(a)]);
            const int r = i * 4 + c;
            synthesize_row(amp.data() + base, freq.data() + base, plane, d,
                           static_cast<T>(e.dx[static_cast<size_t>(a)]),
                           static_cast<T>(e.dy[static_cast<size_t>(b)]), prow,
                           q.args.data() + static_cast<size_t>(r) * d,
                           q.feat.data() + static_cast<size_t>(r) * 2 * d);
        }
    }
    q.lin[0] = linear_forward(q.feat, m.dec_w[0], m.dec_b[0]);
    for (int l = 1; l < 4; ++l) {
        q.act[static_cast<size_t>(l - 1)] = relu_forward(q.lin[static_cast<size_t>(l - 1)]);
        q.lin[static_cast<size_t>(l)] = linear_forward(q.act[static_cast<size_t>(l - 1)],
                                                       m.dec_w[static_cast<size_t>(l)],
                                                       m.dec_b[static_cast<size_t>(l)]);
    }
    q.pred = Tensor<T>({n, 3});
    for (int i = 0; i < n; ++i) {
        const EnsembleCells& e = q.cells[static_cast<size_t>(i)];
        for (int ch = 0; ch < 3; ++ch) {
            T acc = q.skip.at2(i, ch);
            for (int c = 0; c < 4; ++c)
                acc += static_cast<T>(e.w[static_cast<size_t>(c)]) * q.lin[3].at2(i * 4 + c, ch);
            q.pred.at2(i, ch) = acc;
        }
    }
    return q;
}

// Full reverse pass for one image's query batch: decoder, synthesis, phase
// head, Fourier heads and encoder, accumulating into grads (lazily shaped).
// Scatter into the dense amp/freq gradient maps runs query-major then
// cell-minor, a fixed order for bitwise-reproducible training.
template <typename T>
void backward_sample(const LtewModel<T>& m, const ImageTrace<T>& it, const QueryTrace<T>& qt,
                     const Tensor<T>& dpred, LtewModel<T>& grads) {
    const int n = qt.m, d = m.freqs;
    if (!dpred.same_shape(qt.pred)) throw std::invalid_argument("backward: dpred must be (m,3)");
    const int mh = it.amp.dim(1), mw = it.amp.dim(2);
    const size_t plane = static_cast<size_t>(mh) * mw;

    Tensor<T> dout({4 * n, 3});
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < 4; ++c)
            for (int ch = 0; ch < 3; ++ch)
                dout.at2(i * 4 + c, ch) =
                    static_cast<T>(qt.cells[static_cast<size_t>(i)].w[static_cast<size_t>(c)]) *
                    dpred.at2(i, ch);

    Tensor<T> dx, up = std::move(dout);
    for (int l = 3; l >= 1; --l) {
        linear_backward(qt.act[static_cast<size_t>(l - 1)], m.dec_w[static_cast<size_t>(l)], up, dx,
                        grads.dec_w[static_cast<size_t>(l)], grads.dec_b[static_cast<size_t>(l)]);
        up = relu_backward(qt.lin[static_cast<size_t>(l - 1)], dx);
    }
    Tensor<T> dfeat;
    linear_backward(qt.feat, m.dec_w[0], up, dfeat, grads.dec_w[0], grads.dec_b[0]);

    Tensor<T> damp = Tensor<T>::zeros_like(it.amp);
    Tensor<T> dfreq = Tensor<T>::zeros_like(it.freq);
    Tensor<T> dphase({n, d});
    for (int i = 0; i < n; ++i) {
        const EnsembleCells& e = qt.cells[static_cast<size_t>(i)];
        T* dprow = dphase.data() + static_cast<size_t>(i) * d;
        for (int c = 0; c < 4; ++c) {
            const int a = c & 1, b = c >> 1;
            const size_t base = static_cast<size_t>(e.iy[static_cast<size_t>(b)]) * mw +
                                static_cast<size_t>(e.ix[static_cast<size_t>(a)]);
            const int r = i * 4 + c;
            synthesize_row_backward(it.amp.data() + base, plane, d,
                                    static_cast<T>(e.dx[static_cast<size_t>(a)]),
                                    static_cast<T>(e.dy[static_cast<size_t>(b)]),
                                    qt.args.data() + static_cast<size_t>(r) * d,
                                    dfeat.data() + static_cast<size_t>(r) * 2 * d,
                                    damp.data() + base, dfreq.data() + base, dprow);
        }
    }
    Tensor<T> dshapes;
    linear_backward(qt.shapes, m.phase_w, dphase, dshapes, grads.phase_w, grads.phase_b);

    Tensor<T> dza, dzf;
    conv3x3_backward(it.conv[3], m.amp_w, damp, dza, grads.amp_w, grads.amp_b);
    conv3x3_backward(it.conv[3], m.freq_w, dfreq, dzf, grads.freq_w, grads.freq_b);
    for (size_t i = 0; i < dza.size(); ++i) dza[i] += dzf[i];

    up = std::move(dza);
    for (int l = 3; l >= 1; --l) {
        conv3x3_backward(it.rel[static_cast<size_t>(l - 1)], m.enc_w[static_cast<size_t>(l)], up, dx,
                         grads.enc_w[static_cast<size_t>(l)], grads.enc_b[static_cast<size_t>(l)]);
        up = relu_backward(it.conv[static_cast<size_t>(l - 1)], dx);
    }
    conv3x3_backward(it.x, m.enc_w[0], up, dx, grads.enc_w[0], grads.enc_b[0]);
}

// ---------------------------------------------------------------------------
// Spec-level single-query and skip helpers

// RGB residual at one output point (no skip), or nullopt when the query is
// invalid under the transform.
template <typename T>
std::optional<std::array<T, 3>> local_ensemble_query(const LtewModel<T>& m, const Tensor<T>& amp,
                                                     const Tensor<T>& freq, const Transform& t,
                                                     Vec2 y_norm) {
    if (!query_valid(t, y_norm)) return std::nullopt;
    const Vec2 x = *t.apply_inverse(y_norm);
    const ShapeVector s = *shape_vector(t, y_norm);
    std::vector<EnsembleCells> cells{
        ensemble_cells(norm_to_pixel(x.x, t.in_w()), norm_to_pixel(x.y, t.in_h()), t.in_w(), t.in_h())};
    Tensor<T> shapes({1, 10});
    for (int i = 0; i < 10; ++i) shapes[static_cast<size_t>(i)] = static_cast<T>(s.v[static_cast<size_t>(i)]);
    Tensor<T> skip({1, 3});
    QueryTrace<T> q = forward_queries(m, amp, freq, std::move(cells), shapes, skip);
    return std::array<T, 3>{q.pred.at2(0, 0), q.pred.at2(0, 1), q.pred.at2(0, 2)};
}

// Bilinear sample of the input at f^-1(y); nullopt out of domain. Uses the
// same kernel taps as the classical warper, so a zero residual reproduces
// the bilinear baseline bit for bit.
inline std::optional<std::array<float, 3>> bilinear_skip(const ImageBuffer& img, const Transform& t,
                                                         Vec2 y_norm) {
    const std::optional<Vec2> x = t.apply_inverse(y_norm);
    if (!x) return std::nullopt;
    const double px = norm_to_pixel(x->x, img.width), py = norm_to_pixel(x->y, img.height);
    return std::array<float, 3>{sample_kernel(img, px, py, 0, Kernel1D::Bilinear),
                                sample_kernel(img, px, py, 1, Kernel1D::Bilinear),
                                sample_kernel(img, px, py, 2, Kernel1D::Bilinear)};
}

// ---------------------------------------------------------------------------
// Whole-image warp

struct WarpOptions {
    int chunk = 16384;   // queries per evaluation chunk (bounds memory)
    int workers = 1;     // worker threads; results are worker-count invariant
    bool clamp_shape = false;  // pull Jacobian entries up to the training floor
    double shape_floor = 0.35; // |entry| floor applied when clamp_shape is set
};

namespace detail {

// Lean decoder for inference: two live activations, no trace.
template <typename T>
Tensor<T> decode_rows(const LtewModel<T>& m, const Tensor<T>& feat) {
    Tensor<T> a = linear_forward(feat, m.dec_w[0], m.dec_b[0]);
    for (int l = 1; l < 4; ++l) {
        for (size_t i = 0; i < a.size(); ++i)
            if (a[i] < T{}) a[i] = T{};
        a = linear_forward(a, m.dec_w[static_cast<size_t>(l)], m.dec_b[static_cast<size_t>(l)]);
    }
    return a;
}

}  // namespace detail

// Evaluates every output pixel of t against the input image: shape-phased
// Fourier synthesis, ensemble-decoded residual plus bilinear skip, clipped to
// [0,1]. Pixels failing the query validity test are black with mask 0.
// Output is bitwise independent of chunk size and worker count: each query's
// arithmetic is self-contained and written to a disjoint pixel.
inline ImageBuffer warp_image(const LtewModel<float>& m, const ImageBuffer& img, const Transform& t,
                              const WarpOptions& opt = {}) {
    if (img.width != t.in_w() || img.height != t.in_h())
        throw std::invalid_argument("warp: image size does not match the transform input size");
    if (opt.chunk < 1 || opt.workers < 1)
        throw std::invalid_argument("warp: chunk and workers must be positive");

    const FourierMaps<float> f = infer_fourier(m, image_to_tensor(img));
    const int ow = t.out_w(), oh = t.out_h(), d = m.freqs;
    ImageBuffer out = ImageBuffer::make(ow, oh, 0.0f);
    std::fill(out.mask.begin(), out.mask.end(), uint8_t{0});

    const size_t total = static_cast<size_t>(ow) * oh;
    const size_t nchunks = (total + static_cast<size_t>(opt.chunk) - 1) / static_cast<size_t>(opt.chunk);
    const size_t plane = static_cast<size_t>(f.amp.dim(1)) * f.amp.dim(2);

    std::atomic<size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;

    auto run_chunk = [&](size_t ci) {
        const size_t lo = ci * static_cast<size_t>(opt.chunk);
        const size_t hi = std::min(total, lo + static_cast<size_t>(opt.chunk));
        std::vector<size_t> idx;
        std::vector<EnsembleCells> cells;
        std::vector<float> skips;
        std::vector<double> shp;
        idx.reserve(hi - lo);
        for (size_t q = lo; q < hi; ++q) {
            const int oy = static_cast<int>(q / static_cast<size_t>(ow));
            const int ox = static_cast<int>(q % static_cast<size_t>(ow));
            const Vec2 y{pixel_center_norm(ox, ow), pixel_center_norm(oy, oh)};
            if (!query_valid(t, y)) continue;
            const Vec2 x = *t.apply_inverse(y);
            ShapeVector s = *shape_vector(t, y);
            if (opt.clamp_shape)
                for (int i = 0; i < 4; ++i) {
                    double& v = s.v[static_cast<size_t>(i)];
                    if (v > 0.0) v = std::max(v, opt.shape_floor);
                    else if (v < 0.0) v = std::min(v, -opt.shape_floor);
                }
            const double px = norm_to_pixel(x.x, img.width), py = norm_to_pixel(x.y, img.height);
            idx.push_back(q);
            cells.push_back(ensemble_cells(px, py, img.width, img.height));
            for (int c = 0; c < 3; ++c) skips.push_back(sample_kernel(img, px, py, c, Kernel1D::Bilinear));
            for (int i = 0; i < 10; ++i) shp.push_back(s.v[static_cast<size_t>(i)]);
        }
        const int n = static_cast<int>(idx.size());
        if (n == 0) return;

        Tensor<float> shapes({n, 10});
        for (size_t i = 0; i < shp.size(); ++i) shapes[i] = static_cast<float>(shp[i]);
        const Tensor<float> phase = estimate_phase(m, shapes);
        Tensor<float> feat({4 * n, 2 * d});
        std::vector<float> args(static_cast<size_t>(d));
        for (int i = 0; i < n; ++i) {
            const EnsembleCells& e = cells[static_cast<size_t>(i)];
            const float* prow = phase.data() + static_cast<size_t>(i) * d;
            for (int c = 0; c < 4; ++c) {
                const int a = c & 1, b = c >> 1;
                const size_t base = static_cast<size_t>(e.iy[static_cast<size_t>(b)]) * f.amp.dim(2) +
                                    static_cast<size_t>(e.ix[static_cast<size_t>(a)]);
                synthesize_row(f.amp.data() + base, f.freq.data() + base, plane, d,
                               static_cast<float>(e.dx[static_cast<size_t>(a)]),
                               static_cast<float>(e.dy[static_cast<size_t>(b)]), prow, args.data(),
                               feat.data() + (static_cast<size_t>(i) * 4 + static_cast<size_t>(c)) * 2 * d);
            }
        }
        const Tensor<float> res = detail::decode_rows(m, feat);
        for (int i = 0; i < n; ++i) {
            const EnsembleCells& e = cells[static_cast<size_t>(i)];
            const size_t q = idx[static_cast<size_t>(i)];
            const int oy = static_cast<int>(q / static_cast<size_t>(ow));
            const int ox = static_cast<int>(q % static_cast<size_t>(ow));
            for (int ch = 0; ch < 3; ++ch) {
                float v = skips[static_cast<size_t>(i) * 3 + static_cast<size_t>(ch)];
                for (int c = 0; c < 4; ++c)
                    v += static_cast<float>(e.w[static_cast<size_t>(c)]) * res.at2(i * 4 + c, ch);
                out.at(ox, oy, ch) = std::min(1.0f, std::max(0.0f, v));
            }
            out.mask[q] = 255;
        }
    };

    auto drain = [&] {
        for (;;) {
            const size_t ci = next.fetch_add(1);
            if (ci >= nchunks) return;
            try {
                run_chunk(ci);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err) err = std::current_exception();
                return;
            }
        }
    };

    if (opt.workers == 1) {
        drain();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < opt.workers; ++i) pool.emplace_back(drain);
        for (auto& th : pool) th.join();
    }
    if (err) std::rethrow_exception(err);
    return out;
}

// ---------------------------------------------------------------------------
// Frequency scatter records

struct FreqRecord {
    int cx = 0, cy = 0;
    double fx = 0.0, fy = 0.0, magnitude = 0.0;
};

// One record per (cell, frequency index) over the given cell rectangle:
// the frequency pair and the amplitude magnitude sqrt(Acos^2 + Asin^2).
// The rectangle must lie within the field; an empty one yields no records.
inline std::vector<FreqRecord> freq_dump(const FourierMaps<float>& f, int x0, int y0, int w, int h) {
    const int fh = f.amp.dim(1), fw = f.amp.dim(2), d = f.amp.dim(0) / 2;
    if (w < 0 || h < 0 || x0 < 0 || y0 < 0 || x0 + w > fw || y0 + h > fh)
        throw std::invalid_argument("freq_dump: cell range outside the field");
    std::vector<FreqRecord> recs;
    recs.reserve(static_cast<size_t>(w) * static_cast<size_t>(h) * static_cast<size_t>(d));
    for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x)
            for (int k = 0; k < d; ++k) {
                FreqRecord r;
                r.cx = x;
                r.cy = y;
                r.fx = f.freq.at3(k, y, x);
                r.fy = f.freq.at3(d + k, y, x);
                const double ac = f.amp.at3(k, y, x), as = f.amp.at3(d + k, y, x);
                r.magnitude = std::sqrt(ac * ac + as * as);
                recs.push_back(r);
            }
    return recs;
}

}  // namespace ltew
