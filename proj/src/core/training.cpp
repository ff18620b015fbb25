#include "training.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "baselines.hpp"
#include "errors.hpp"
#include "nn.hpp"

namespace ltew {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

double parse_double(const std::string& key, const std::string& v) {
    if (v.empty()) throw FormatError("config: key '" + key + "' has an empty value");
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size() || !std::isfinite(x))
        throw FormatError("config: key '" + key + "' has a malformed number '" + v + "'");
    return x;
}

long long parse_ll(const std::string& key, const std::string& v) {
    if (v.empty()) throw FormatError("config: key '" + key + "' has an empty value");
    char* end = nullptr;
    const long long x = std::strtoll(v.c_str(), &end, 10);
    if (end != v.c_str() + v.size())
        throw FormatError("config: key '" + key + "' has a malformed integer '" + v + "'");
    return x;
}

int parse_int(const std::string& key, const std::string& v, long long lo, long long hi) {
    const long long x = parse_ll(key, v);
    if (x < lo || x > hi)
        throw FormatError("config: key '" + key + "' is out of range [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "]");
    return static_cast<int>(x);
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    if (v.empty()) throw FormatError("config: key '" + key + "' has an empty value");
    char* end = nullptr;
    const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (end != v.c_str() + v.size() || v[0] == '-')
        throw FormatError("config: key '" + key + "' has a malformed integer '" + v + "'");
    return static_cast<uint64_t>(x);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw FormatError("config: key '" + key + "' wants 0/1/true/false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    if (trim(v).empty()) return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(parse_int(key, trim(item), 0, 1000000000));
    return out;
}

void validate_config(const TrainConfig& cfg) {
    auto bad = [](const std::string& why) { throw FormatError("config: " + why); };
    if (cfg.epochs < 1) bad("epochs must be at least 1");
    if (cfg.batch_size < 1) bad("batch_size must be at least 1");
    if (cfg.queries < 1) bad("queries must be at least 1");
    if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr)) bad("lr must be a positive number");
    if (!(cfg.lr_decay_factor > 0.0) || cfg.lr_decay_factor > 1.0)
        bad("lr_decay_factor must lie in (0, 1]");
    for (size_t i = 1; i < cfg.lr_decay_epochs.size(); ++i)
        if (cfg.lr_decay_epochs[i] <= cfg.lr_decay_epochs[i - 1])
            bad("lr_decay_epochs must be strictly increasing");
    if (cfg.crop_w < 2 || cfg.crop_h < 2) bad("crop sides must be at least 2 pixels");
    if (!(cfg.scale_min > 0.0) || cfg.scale_max < cfg.scale_min || !std::isfinite(cfg.scale_max))
        bad("scales must satisfy 0 < scale_min <= scale_max");
    if (cfg.model_channels < 1 || cfg.model_freqs < 1 || cfg.model_hidden < 1)
        bad("model dims must be positive");
}

}  // namespace

TrainConfig parse_train_config_text(const std::string& text) {
    TrainConfig cfg;
    std::map<std::string, bool> seen;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("config: expected key=value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw FormatError("config: missing key before '='");
        if (seen.count(key)) throw FormatError("config: duplicate key '" + key + "'");
        seen[key] = true;

        if (key == "dataset") cfg.dataset = val;
        else if (key == "regime") {
            if (val == "axis-scale") cfg.regime = TrainConfig::Regime::AxisScale;
            else if (val == "homography") cfg.regime = TrainConfig::Regime::Homography;
            else throw FormatError("config: regime must be 'axis-scale' or 'homography', got '" + val + "'");
        } else if (key == "epochs") cfg.epochs = parse_int(key, val, 1, 1000000);
        else if (key == "batch_size") cfg.batch_size = parse_int(key, val, 1, 100000);
        else if (key == "queries") cfg.queries = parse_int(key, val, 1, 10000000);
        else if (key == "lr") cfg.lr = parse_double(key, val);
        else if (key == "lr_decay_epochs") cfg.lr_decay_epochs = parse_int_list(key, val);
        else if (key == "lr_decay_factor") cfg.lr_decay_factor = parse_double(key, val);
        else if (key == "seed") cfg.seed = parse_u64(key, val);
        else if (key == "crop_w") cfg.crop_w = parse_int(key, val, 1, 1 << 20);
        else if (key == "crop_h") cfg.crop_h = parse_int(key, val, 1, 1 << 20);
        else if (key == "scale_min") cfg.scale_min = parse_double(key, val);
        else if (key == "scale_max") cfg.scale_max = parse_double(key, val);
        else if (key == "gt_subpixel") cfg.gt_subpixel = parse_bool(key, val);
        else if (key == "model_channels") cfg.model_channels = parse_int(key, val, 1, 4096);
        else if (key == "model_freqs") cfg.model_freqs = parse_int(key, val, 1, 4096);
        else if (key == "model_hidden") cfg.model_hidden = parse_int(key, val, 1, 65536);
        else throw FormatError("config: unknown key '" + key + "'");
    }
    validate_config(cfg);
    return cfg;
}

TrainConfig parse_train_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_train_config_text(buf.str());
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    int decays = 0;
    for (int e : cfg.lr_decay_epochs)
        if (e <= epoch) ++decays;
    return cfg.lr * std::pow(cfg.lr_decay_factor, static_cast<double>(decays));
}

TrainSample prepare_pair(const ImageBuffer& gt, const Transform& t, const TrainConfig& cfg, Rng& rng) {
    if (t.out_w() != gt.width || t.out_h() != gt.height)
        throw std::invalid_argument("prepare_pair: transform output frame must match the ground truth");
    const int cw = cfg.crop_w, ch = cfg.crop_h;
    if (cw > t.in_w() || ch > t.in_h())
        throw NoValidCropError("prepare_pair: crop exceeds the transform input frame");

    // Degrade: resample the ground truth onto the transform's input frame.
    const ImageBuffer input_full = classical_warp(gt, t.inverse(), Kernel1D::Bicubic);

    // Fully valid crop positions via a summed-area table of the mask.
    const int iw = input_full.width, ih = input_full.height;
    std::vector<int> sat(static_cast<size_t>(iw + 1) * (ih + 1), 0);
    for (int y = 0; y < ih; ++y)
        for (int x = 0; x < iw; ++x)
            sat[static_cast<size_t>(y + 1) * (iw + 1) + (x + 1)] =
                (input_full.valid(x, y) ? 1 : 0) +
                sat[static_cast<size_t>(y) * (iw + 1) + (x + 1)] +
                sat[static_cast<size_t>(y + 1) * (iw + 1) + x] -
                sat[static_cast<size_t>(y) * (iw + 1) + x];
    auto window_count = [&](int x, int y) {
        return sat[static_cast<size_t>(y + ch) * (iw + 1) + (x + cw)] -
               sat[static_cast<size_t>(y) * (iw + 1) + (x + cw)] -
               sat[static_cast<size_t>(y + ch) * (iw + 1) + x] +
               sat[static_cast<size_t>(y) * (iw + 1) + x];
    };
    std::vector<std::pair<int, int>> spots;
    for (int y = 0; y + ch <= ih; ++y)
        for (int x = 0; x + cw <= iw; ++x)
            if (window_count(x, y) == cw * ch) spots.emplace_back(x, y);
    if (spots.empty()) throw NoValidCropError("prepare_pair: no fully valid crop of the requested size");
    const auto [ox, oy] = spots[static_cast<size_t>(rng.below(spots.size()))];

    TrainSample s;
    s.t = t.with_input_crop(static_cast<double>(ox), static_cast<double>(oy), cw, ch);
    s.input = ImageBuffer::make(cw, ch);
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x)
            for (int c = 0; c < 3; ++c) s.input.at(x, y, c) = input_full.at(ox + x, oy + y, c);

    // Queries by rejection over the ground-truth frame; validity against the
    // re-referenced transform keeps every inverse inside the crop.
    const int m = cfg.queries;
    s.queries.reserve(static_cast<size_t>(m));
    s.gt_rgb.reserve(static_cast<size_t>(m) * 3);
    const long long cap = 1000LL * m + 10000;
    long long attempts = 0;
    while (static_cast<int>(s.queries.size()) < m) {
        if (++attempts > cap)
            throw NoValidCropError("prepare_pair: query sampling could not find valid coordinates");
        Vec2 y{};
        float rgb[3];
        if (cfg.gt_subpixel) {
            y.x = rng.uniform(-1.0, 1.0);
            y.y = rng.uniform(-1.0, 1.0);
            if (!query_valid(s.t, y)) continue;
            const double px = norm_to_pixel(y.x, gt.width), py = norm_to_pixel(y.y, gt.height);
            for (int c = 0; c < 3; ++c) rgb[c] = sample_kernel(gt, px, py, c, Kernel1D::Bilinear);
        } else {
            const int qx = static_cast<int>(rng.below(static_cast<uint64_t>(gt.width)));
            const int qy = static_cast<int>(rng.below(static_cast<uint64_t>(gt.height)));
            y = {pixel_center_norm(qx, gt.width), pixel_center_norm(qy, gt.height)};
            if (!query_valid(s.t, y)) continue;
            for (int c = 0; c < 3; ++c) rgb[c] = gt.at(qx, qy, c);
        }
        s.queries.push_back(y);
        for (int c = 0; c < 3; ++c) s.gt_rgb.push_back(rgb[c]);
    }
    return s;
}

TrainSample prepare_pair_sampled(const ImageBuffer& gt, const TrainConfig& cfg, Rng& rng) {
    std::string last = "no attempt made";
    for (int attempt = 0; attempt < 100; ++attempt) {
        Transform t = Transform::axis_scale(1.0, 1.0, 1, 1);
        if (cfg.regime == TrainConfig::Regime::AxisScale) {
            const double sx = rng.uniform(cfg.scale_min, cfg.scale_max);
            const double sy = rng.uniform(cfg.scale_min, cfg.scale_max);
            const int in_w = std::max(1, static_cast<int>(std::llround(sx * gt.width)));
            const int in_h = std::max(1, static_cast<int>(std::llround(sy * gt.height)));
            if (in_w < cfg.crop_w || in_h < cfg.crop_h) {
                last = "scaled input smaller than the crop";
                continue;
            }
            t = Transform::axis_scale_for_sizes(in_w, in_h, gt.width, gt.height);
        } else {
            t = sample_homography(rng, ScaleRegime::InScale, gt.width, gt.height);
        }
        try {
            return prepare_pair(gt, t, cfg, rng);
        } catch (const NoValidCropError& e) {
            last = e.what();
        }
    }
    throw NoValidCropError("prepare_pair: gave up after 100 transform draws (" + last + ")");
}

namespace {

// Network-facing tensors for one prepared sample: ensemble cells, shape
// descriptors and bilinear skip colors for every query.
struct QueryInputs {
    std::vector<EnsembleCells> cells;
    Tensor<float> shapes, skip, gt;
};

QueryInputs build_query_inputs(const TrainSample& s) {
    const int m = static_cast<int>(s.queries.size());
    QueryInputs q{{}, Tensor<float>({m, 10}), Tensor<float>({m, 3}), Tensor<float>({m, 3})};
    q.cells.reserve(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        const Vec2 y = s.queries[static_cast<size_t>(i)];
        const Vec2 x = *s.t.apply_inverse(y);
        const ShapeVector sv = *shape_vector(s.t, y);
        const double px = norm_to_pixel(x.x, s.input.width), py = norm_to_pixel(x.y, s.input.height);
        q.cells.push_back(ensemble_cells(px, py, s.input.width, s.input.height));
        for (int k = 0; k < 10; ++k) q.shapes.at2(i, k) = static_cast<float>(sv.v[static_cast<size_t>(k)]);
        for (int c = 0; c < 3; ++c) {
            q.skip.at2(i, c) = sample_kernel(s.input, px, py, c, Kernel1D::Bilinear);
            q.gt.at2(i, c) = s.gt_rgb[static_cast<size_t>(i) * 3 + static_cast<size_t>(c)];
        }
    }
    return q;
}

}  // namespace

TrainResult run_training_images(const TrainConfig& cfg, const std::vector<ImageBuffer>& images) {
    validate_config(cfg);
    if (images.empty()) throw std::invalid_argument("training: no images to train on");
    for (const ImageBuffer& img : images)
        if (img.width < cfg.crop_w || img.height < cfg.crop_h)
            throw std::invalid_argument("training: crop exceeds an image (" + std::to_string(img.width) +
                                        "x" + std::to_string(img.height) + ")");

    LtewModel<float> model =
        make_model<float>(ModelConfig{cfg.model_channels, cfg.model_freqs, cfg.model_hidden}, cfg.seed);
    std::vector<AdamState<float>> states;
    for_each_model_tensor(model, [&](const std::string&, Tensor<float>&) { states.emplace_back(); });
    Rng rng(mix_seed(cfg.seed, 1));

    const int n = static_cast<int>(images.size());
    const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const int64_t total_steps = static_cast<int64_t>(cfg.epochs) * steps_per_epoch;

    TrainResult result;
    result.trace.reserve(static_cast<size_t>(total_steps));

    for (int64_t step = 1; step <= total_steps; ++step) {
        const int epoch = static_cast<int>((step - 1) / steps_per_epoch);
        const double lr = lr_at_epoch(cfg, epoch);
        LtewModel<float> grads = make_grads(model);
        double loss = 0.0;
        const float inv_batch = 1.0f / static_cast<float>(cfg.batch_size);

        for (int b = 0; b < cfg.batch_size; ++b) {
            const ImageBuffer& gt = images[static_cast<size_t>(rng.below(static_cast<uint64_t>(n)))];
            const TrainSample sample = prepare_pair_sampled(gt, cfg, rng);
            QueryInputs q = build_query_inputs(sample);
            const ImageTrace<float> it = forward_image(model, image_to_tensor(sample.input));
            const QueryTrace<float> qt =
                forward_queries(model, it.amp, it.freq, std::move(q.cells), q.shapes, q.skip);
            Tensor<float> dpred;
            loss += loss_l1(qt.pred, q.gt, &dpred) / static_cast<double>(cfg.batch_size);
            for (size_t i = 0; i < dpred.size(); ++i) dpred[i] *= inv_batch;
            backward_sample(model, it, qt, dpred, grads);
        }

        if (!std::isfinite(loss))
            throw NumericError("training aborted at step " + std::to_string(step) + " (lr=" +
                               std::to_string(lr) + "): non-finite loss");
        try {
            std::vector<Tensor<float>*> gptrs;
            gptrs.reserve(states.size());
            for_each_model_tensor(grads,
                                  [&](const std::string&, Tensor<float>& g) { gptrs.push_back(&g); });
            size_t slot = 0;
            for_each_model_tensor(model, [&](const std::string& name, Tensor<float>& p) {
                adam_update(p, *gptrs[slot], states[slot], lr, name);
                ++slot;
            });
        } catch (const NumericError& e) {
            throw NumericError("training aborted at step " + std::to_string(step) + " (lr=" +
                               std::to_string(lr) + "): " + e.what());
        }
        result.trace.push_back({step, lr, loss});
    }
    result.weights = model_to_weights(model);
    return result;
}

TrainResult run_training(const TrainConfig& cfg) {
    if (cfg.dataset.empty()) throw std::invalid_argument("training: config has no dataset path");
    std::error_code ec;
    std::filesystem::directory_iterator it(cfg.dataset, ec);
    if (ec) throw IoError("cannot open dataset directory '" + cfg.dataset + "': " + ec.message());
    std::vector<std::string> names;
    for (const auto& entry : it) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".png" || ext == ".ppm" || ext == ".pgm") names.push_back(entry.path().string());
    }
    if (names.empty())
        throw IoError("training: no .png/.ppm/.pgm images in '" + cfg.dataset + "'");
    std::sort(names.begin(), names.end());
    std::vector<ImageBuffer> images;
    images.reserve(names.size());
    for (const std::string& name : names) images.push_back(load_image(name));
    return run_training_images(cfg, images);
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open trace file '" + path + "' for writing");
    std::fputs("step,lr,loss\n", f);
    for (const TraceRow& row : trace)
        std::fprintf(f, "%lld,%.9g,%.9g\n", static_cast<long long>(row.step), row.lr, row.loss);
    if (std::fclose(f) != 0) throw IoError("failed to finish writing '" + path + "'");
}

}  // namespace ltew
