#include "ltew/ltew.h"

#include <cstdio>
#include <cstring>
#include <new>
#include <string>
#include <utility>

#include "core/baselines.hpp"
#include "core/gradcheck.hpp"
#include "core/metrics.hpp"
#include "core/model.hpp"
#include "core/training.hpp"

struct ltew_image {
    ltew::ImageBuffer img;
};
struct ltew_transform {
    ltew::Transform t;
};
struct ltew_model {
    ltew::LtewModel<float> m;
};

namespace {

thread_local std::string g_last_error = "no error";

ltew_status fail(ltew_status s, const char* what) {
    g_last_error = what;
    return s;
}

// Runs fn, translating the library's exception taxonomy to status codes.
template <typename Fn>
ltew_status guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const ltew::IoError& e) {
        return fail(LTEW_E_IO, e.what());
    } catch (const ltew::FormatError& e) {
        return fail(LTEW_E_FORMAT, e.what());
    } catch (const ltew::NumericError& e) {
        return fail(LTEW_E_NUMERIC, e.what());
    } catch (const std::invalid_argument& e) {
        return fail(LTEW_E_INVALID_ARGUMENT, e.what());
    } catch (const std::bad_alloc&) {
        return fail(LTEW_E_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(LTEW_E_INTERNAL, e.what());
    } catch (...) {
        return fail(LTEW_E_INTERNAL, "unknown error");
    }
}

// True (after recording the error) when a precondition fails.
bool bad(bool ok, const char* what) {
    if (!ok) fail(LTEW_E_INVALID_ARGUMENT, what);
    return !ok;
}

}  // namespace

extern "C" {

const char* ltew_last_error(void) { return g_last_error.c_str(); }

const char* ltew_version(void) { return "1.0.0"; }

/* ---------------------------------------------------------------- images */

ltew_status ltew_image_create(int width, int height, ltew_image** out) {
    if (bad(out != nullptr, "ltew_image_create: out is null")) return LTEW_E_INVALID_ARGUMENT;
    return guarded([&] {
        if (width < 1 || height < 1)
            throw std::invalid_argument("ltew_image_create: size must be positive");
        *out = new ltew_image{ltew::ImageBuffer::make(width, height)};
        return LTEW_OK;
    });
}

ltew_status ltew_image_load(const char* path, ltew_image** out) {
    if (bad(path && out, "ltew_image_load: null argument")) return LTEW_E_INVALID_ARGUMENT;
    return guarded([&] {
        *out = new ltew_image{ltew::load_image(path)};
        return LTEW_OK;
    });
}

ltew_status ltew_image_save(const ltew_image* img, const char* path) {
    if (bad(img && path, "ltew_image_save: null argument")) return LTEW_E_INVALID_ARGUMENT;
    return guarded([&] {
        ltew::save_image(img->img, path);
        return LTEW_OK;
    });
}

ltew_status ltew_image_save_mask(const ltew_image* img, const char* path) {
    if (bad(img && path, "ltew_image_save_mask: null argument")) return LTEW_E_INVALID_ARGUMENT;
    return guarded([&] {
        ltew::save_mask(img->img.mask, img->img.width, img->img.height, path);
        return LTEW_OK;
    });
}

ltew_status ltew_image_set_mask_from_file(ltew_image* img, const char* path) {
    if (bad(img && path, "ltew_image_set_mask_from_file: null argument"))
        return LTEW_E_INVALID_ARGUMENT;
    return guarded([&] {
        img->img.mask = ltew::load_mask(path, img->img.width, img->img.height);
        return LTEW_OK;
    });
}

void ltew_image_free(ltew_image* img) { delete img; }

int ltew_image_width(const ltew_image* img) { return img ? img->img.width : 0; }

int ltew_image_height(const ltew_image* img) { return img ? img->img.height : 0; }

float* ltew_image_pixels(ltew_image* img) { return img ? img->img.rgb.data() : nullptr; }

const unsigned char* ltew_image_mask(const ltew_image* img) {
    return img ? img->img.mask.data() : nullptr;
}

/* ------------------------------------------------------------ transforms */

ltew_status ltew_transform_parse_text(const char* text, int in_w, int in_h,
                                      ltew_transform** out) {
    if (bad(text && out, "ltew_transform_parse_text: null argument"))
        return LTEW_E_INVALID_ARGUMENT;
    return guarded([&] {
        *out = new ltew_transform{ltew::parse_transform_text(text, in_w, in_h)};
        return LTEW_OK;
    });
}

ltew_status ltew_transform_parse_file(const char* path, int in_w, int in_h,
                                      ltew_transform** out) {
    if (bad(path && out, "ltew_transform_parse_file: null argument"))
        return LTEW_E_INVALID_ARGUMENT;
    return guarded([&] {
        *out = new ltew_transform{ltew::parse_transform_file(path, in_w, in_h)};
        return LTEW_OK;
    });
}

void ltew_transform_free(ltew_transform* t) { delete t; }

int ltew_transform_out_w(const ltew_transform* t) { return t ? t->t.out_w() : 0; }

int ltew_transform_out_h(const ltew_transform* t) { return t ? t->t.out_h() : 0; }

ltew_status ltew_transform_set_out_size(ltew_transform* t, int out_w, int out_h) {
    if (bad(t != nullptr, "ltew_transform_set_out_size: transform is null"))
        return LTEW_E_INVALID_ARGUMENT;
    return guarded([&] {
        t->t.set_out_size(out_w, out_h);
        return LTEW_OK;
    });
}

/* ---------------------------------------------------------------- models */

ltew_status ltew_model_load(const char* path, ltew_model** out) {
    if (bad(path && out, "ltew_model_load: null argument")) return LTEW_E_INVALID_ARGUMENT;
    return guarded([&] {
        *out = new ltew_model{ltew::model_from_weights<float>(ltew::load_weights(path))};
        return LTEW_OK;
    });
}

void ltew_model_free(ltew_model* m) { delete m; }

/* --------------------------------------------------------------- warping */

ltew_status ltew_warp(const ltew_model* model, const ltew_image* input,
                      const ltew_transform* t, ltew_method method,
                      const ltew_warp_options* opt, ltew_image** out) {
    if (bad(input && t && out, "ltew_warp: null argument")) return LTEW_E_INVALID_ARGUMENT;
    return guarded([&] {
        ltew::ImageBuffer res;
        switch (method) {
            case LTEW_METHOD_MODEL: {
                if (!model) throw std::invalid_argument("ltew_warp: model method needs a model");
                ltew::WarpOptions o;
                if (opt) {
                    if (opt->chunk > 0) o.chunk = opt->chunk;
                    if (opt->workers > 0) o.workers = opt->workers;
                    o.clamp_shape = opt->clamp_shape != 0;
                    if (opt->shape_floor > 0.0) o.shape_floor = opt->shape_floor;
                }
                res = ltew::warp_image(model->m, input->img, t->t, o);
                break;
            }
            case LTEW_METHOD_BILINEAR:
                res = ltew::classical_warp(input->img, t->t, ltew::Kernel1D::Bilinear);
                break;
            case LTEW_METHOD_BICUBIC:
                res = ltew::classical_warp(input->img, t->t, ltew::Kernel1D::Bicubic);
                break;
            default:
                throw std::invalid_argument("ltew_warp: unknown method");
        }
        *out = new ltew_image{std::move(res)};
        return LTEW_OK;
    });
}

/* --------------------------------------------------------------- metrics */

ltew_status ltew_psnr(const ltew_image* a, const ltew_image* b, int masked, double* db,
                      long long* valid_px) {
    if (bad(a && b, "ltew_psnr: null argument")) return LTEW_E_INVALID_ARGUMENT;
    return guarded([&] {
        const ltew::PsnrResult r =
            masked ? ltew::masked_psnr(a->img, b->img) : ltew::psnr(a->img, b->img);
        if (db) *db = r.db;
        if (valid_px) *valid_px = r.valid_px;
        return LTEW_OK;
    });
}

/* -------------------------------------------------------------- training */

ltew_status ltew_train(const char* config_path, const char* out_weights_path,
                       const char* trace_csv_path) {
    if (bad(config_path && out_weights_path, "ltew_train: null argument"))
        return LTEW_E_INVALID_ARGUMENT;
    return guarded([&] {
        const ltew::TrainConfig cfg = ltew::parse_train_config_file(config_path);
        const ltew::TrainResult r = ltew::run_training(cfg);
        ltew::save_weights(r.weights, out_weights_path);
        if (trace_csv_path) ltew::write_trace_csv(r.trace, trace_csv_path);
        return LTEW_OK;
    });
}

/* ---------------------------------------------------- checks, inspection */

ltew_status ltew_grad_check(unsigned long long seed, char* report, size_t report_cap) {
    return guarded([&] {
        const ltew::GradCheckResult r = ltew::run_grad_checks(seed);
        if (report && report_cap > 0) {
            const std::string text = r.report();
            const size_t n = std::min(report_cap - 1, text.size());
            std::memcpy(report, text.data(), n);
            report[n] = '\0';
        }
        if (!r.all_pass) {
            size_t failed = 0;
            for (const ltew::GradCheckEntry& e : r.entries)
                if (!e.pass) ++failed;
            return fail(LTEW_E_CHECK_FAILED,
                        (std::to_string(failed) + " of " + std::to_string(r.entries.size()) +
                         " gradient checks failed")
                            .c_str());
        }
        return LTEW_OK;
    });
}

ltew_status ltew_freq_dump(const ltew_model* model, const ltew_image* input,
                           const char* out_csv) {
    if (bad(model && input && out_csv, "ltew_freq_dump: null argument"))
        return LTEW_E_INVALID_ARGUMENT;
    return guarded([&] {
        const ltew::FourierMaps<float> f =
            ltew::infer_fourier(model->m, ltew::image_to_tensor(input->img));
        const std::vector<ltew::FreqRecord> recs =
            ltew::freq_dump(f, 0, 0, input->img.width, input->img.height);
        std::FILE* fp = std::fopen(out_csv, "wb");
        if (!fp) throw ltew::IoError(std::string("cannot write '") + out_csv + "'");
        std::fputs("cx,cy,fx,fy,magnitude\n", fp);
        for (const ltew::FreqRecord& rec : recs)
            std::fprintf(fp, "%d,%d,%.9g,%.9g,%.9g\n", rec.cx, rec.cy, rec.fx, rec.fy,
                         rec.magnitude);
        if (std::fclose(fp) != 0) throw ltew::IoError(std::string("write failed: '") + out_csv + "'");
        return LTEW_OK;
    });
}

} /* extern "C" */
