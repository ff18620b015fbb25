#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "image.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "weights_io.hpp"

namespace ltew {

// Desk-scale trainer: batches of cropped degraded inputs with query points in
// the ground-truth frame, an L1 objective, Adam, and a step-decayed learning
// rate. Runs are single-threaded and bitwise deterministic given a seed.

struct TrainConfig {
    std::string dataset;       // directory of .png/.ppm training images
    enum class Regime { AxisScale, Homography } regime = Regime::AxisScale;

    int epochs = 100;
    int batch_size = 4;
    int queries = 256;         // query points per image
    double lr = 1e-4;
    std::vector<int> lr_decay_epochs = {20, 40, 60, 80};
    double lr_decay_factor = 0.5;
    uint64_t seed = 0;
    int crop_w = 48, crop_h = 48;

    // Asymmetric-scale regime: per-axis inverse scales drawn U(min,max); the
    // input is the ground truth shrunk by that factor.
    double scale_min = 0.25, scale_max = 1.0;

    // GT colors at query points: exact pixel centers (default) or continuous
    // positions read back by bilinear interpolation.
    bool gt_subpixel = false;

    int model_channels = 64, model_freqs = 32, model_hidden = 128;
};

// Flat key=value text, '#' comments. Unknown keys, bad values or violated
// bounds raise FormatError naming the key.
TrainConfig parse_train_config_text(const std::string& text);
TrainConfig parse_train_config_file(const std::string& path);

// Learning rate for a 0-based epoch: lr * factor^(decay epochs passed).
double lr_at_epoch(const TrainConfig& cfg, int epoch);

// One training pair: a degraded input crop, the transform taking ground-truth
// frame coordinates into that crop, query points (normalized, ground-truth
// frame) and their GT colors.
struct TrainSample {
    ImageBuffer input;
    Transform t = Transform::axis_scale(1.0, 1.0, 1, 1);
    std::vector<Vec2> queries;
    std::vector<float> gt_rgb;  // queries * 3
};

// Raised when the given transform leaves no fully valid crop of the requested
// size; the sampling wrapper reacts by drawing a fresh transform.
struct NoValidCropError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Builds the pair for one ground-truth image under a given transform whose
// output frame is the ground truth: degrades via bicubic inverse warping,
// finds a fully valid crop, re-references the transform to it, and samples
// queries uniformly over the valid ground-truth coordinates.
TrainSample prepare_pair(const ImageBuffer& gt, const Transform& t, const TrainConfig& cfg, Rng& rng);

// Draws regime-appropriate transforms until prepare_pair succeeds (capped).
TrainSample prepare_pair_sampled(const ImageBuffer& gt, const TrainConfig& cfg, Rng& rng);

// Mean absolute error over all entries; the optional gradient uses the
// subgradient convention sign(0) = 0.
template <typename T>
double loss_l1(const Tensor<T>& pred, const Tensor<T>& gt, Tensor<T>* grad = nullptr) {
    if (!pred.same_shape(gt))
        throw std::invalid_argument("loss: shape mismatch " + shape_string(pred.shape()) + " vs " +
                                    shape_string(gt.shape()));
    if (grad && !grad->same_shape(pred)) *grad = Tensor<T>::zeros_like(pred);
    const double inv = 1.0 / static_cast<double>(pred.size());
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
        acc += std::abs(d);
        if (grad) (*grad)[i] = d > 0.0 ? static_cast<T>(inv) : (d < 0.0 ? static_cast<T>(-inv) : T{});
    }
    return acc * inv;
}

struct TraceRow {
    int64_t step = 0;  // 1-based optimizer step
    double lr = 0.0;
    double loss = 0.0;
};

struct TrainResult {
    WeightMap weights;
    std::vector<TraceRow> trace;
};

// Full run over in-memory images (sorted order supplied by the caller) or a
// dataset directory (files sorted by name). Epochs comprise
// ceil(n_images / batch_size) steps; batch members are drawn uniformly with
// replacement. A non-finite loss or gradient aborts with NumericError naming
// the step, learning rate and offending tensor.
TrainResult run_training_images(const TrainConfig& cfg, const std::vector<ImageBuffer>& images);
TrainResult run_training(const TrainConfig& cfg);

// CSV rows `step,lr,loss` under that header.
void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);

}  // namespace ltew
