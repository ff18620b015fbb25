#ifndef LTEW_H
#define LTEW_H

/*
 * C interface to the ltew warping engine.
 *
 * Every function that can fail returns ltew_status; LTEW_OK is 0.  After a
 * failing call, ltew_last_error() returns a human-readable message for the
 * calling thread, valid until that thread's next failing call.  Objects
 * returned through ltew_*_load/parse/create/warp calls are owned by the
 * caller and released with the matching ltew_*_free; passing NULL to a free
 * function is a no-op.
 */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ltew_status {
    LTEW_OK = 0,
    LTEW_E_INVALID_ARGUMENT = 1, /* bad sizes, null pointers, bad enum values */
    LTEW_E_IO = 2,               /* missing/unreadable/unwritable files */
    LTEW_E_FORMAT = 3,           /* file exists but its content is malformed */
    LTEW_E_NUMERIC = 4,          /* non-finite values where none are allowed */
    LTEW_E_CHECK_FAILED = 5,     /* a verification suite reported failures */
    LTEW_E_INTERNAL = 6          /* anything unexpected */
} ltew_status;

/* Message for this thread's most recent failure. Never NULL. */
const char* ltew_last_error(void);

/* Library version as "major.minor.patch". */
const char* ltew_version(void);

/* ------------------------------------------------------------------ */
/* Images: interleaved RGB in [0,1] plus a per-pixel validity mask.    */

typedef struct ltew_image ltew_image;

/* Black image with a fully valid mask. */
ltew_status ltew_image_create(int width, int height, ltew_image** out);
/* PNG, binary PPM (P6) or PGM (P5). */
ltew_status ltew_image_load(const char* path, ltew_image** out);
ltew_status ltew_image_save(const ltew_image* img, const char* path);
/* Writes the validity mask as an 8-bit grayscale image (0 or 255). */
ltew_status ltew_image_save_mask(const ltew_image* img, const char* path);
/* Replaces the image's validity mask with a grayscale image from disk
 * (same size; nonzero = valid). */
ltew_status ltew_image_set_mask_from_file(ltew_image* img, const char* path);
void ltew_image_free(ltew_image* img);

int ltew_image_width(const ltew_image* img);
int ltew_image_height(const ltew_image* img);
/* Pixel storage, row-major, 3 floats per pixel (RGB). writable. */
float* ltew_image_pixels(ltew_image* img);
/* width*height bytes, nonzero = valid. */
const unsigned char* ltew_image_mask(const ltew_image* img);

/* ------------------------------------------------------------------ */
/* Transforms: continuous output-to-input coordinate maps.             */
/*                                                                     */
/* Spec text, one record per file or string:                           */
/*   scale <sx> <sy>                                                   */
/*   homography <9 reals, row-major output-to-input pixel matrix>      */
/*   erp <fov_deg> <yaw_deg> <pitch_deg> <out_w> <out_h>               */
/* in_w/in_h describe the image the transform reads from.              */

typedef struct ltew_transform ltew_transform;

ltew_status ltew_transform_parse_text(const char* text, int in_w, int in_h,
                                      ltew_transform** out);
ltew_status ltew_transform_parse_file(const char* path, int in_w, int in_h,
                                      ltew_transform** out);
void ltew_transform_free(ltew_transform* t);

int ltew_transform_out_w(const ltew_transform* t);
int ltew_transform_out_h(const ltew_transform* t);
ltew_status ltew_transform_set_out_size(ltew_transform* t, int out_w, int out_h);

/* ------------------------------------------------------------------ */
/* Models.                                                             */

typedef struct ltew_model ltew_model;

/* Reads an "LTEW0001" weight file. */
ltew_status ltew_model_load(const char* path, ltew_model** out);
void ltew_model_free(ltew_model* m);

/* ------------------------------------------------------------------ */
/* Warping.                                                            */

typedef enum ltew_method {
    LTEW_METHOD_MODEL = 0,
    LTEW_METHOD_BILINEAR = 1,
    LTEW_METHOD_BICUBIC = 2
} ltew_method;

typedef struct ltew_warp_options {
    int chunk;          /* queries per chunk; <= 0 selects the default (16384) */
    int workers;        /* worker threads; <= 0 selects 1; output is invariant */
    int clamp_shape;    /* nonzero: raise |Jacobian entries| to shape_floor */
    double shape_floor; /* <= 0 selects the default (0.35) */
} ltew_warp_options;

/* Resamples `input` through `t`. `model` may be NULL for the classical
 * methods and is required for LTEW_METHOD_MODEL. `opt` may be NULL.
 * Invalid output pixels are black with a zero mask bit. */
ltew_status ltew_warp(const ltew_model* model, const ltew_image* input,
                      const ltew_transform* t, ltew_method method,
                      const ltew_warp_options* opt, ltew_image** out);

/* ------------------------------------------------------------------ */
/* Metrics.                                                            */

/* PSNR in dB between same-sized images. masked=0 compares every pixel;
 * nonzero restricts to the intersection of both validity masks.
 * Identical pixels give +inf; an empty mask gives NaN. Either output
 * pointer may be NULL. */
ltew_status ltew_psnr(const ltew_image* a, const ltew_image* b, int masked,
                      double* db, long long* valid_px);

/* ------------------------------------------------------------------ */
/* Training.                                                           */

/* Runs the trainer described by a key=value config file and writes the
 * final weights; optionally writes a step,lr,loss CSV. */
ltew_status ltew_train(const char* config_path, const char* out_weights_path,
                       const char* trace_csv_path /* nullable */);

/* ------------------------------------------------------------------ */
/* Verification and inspection.                                        */

/* Runs the finite-difference gradient suite. Returns LTEW_OK when every
 * check passes, LTEW_E_CHECK_FAILED otherwise. When `report` is non-NULL,
 * up to report_cap-1 bytes of the text report are stored, always
 * NUL-terminated. */
ltew_status ltew_grad_check(unsigned long long seed, char* report, size_t report_cap);

/* Writes the per-cell Fourier content of `input` under `model` as a CSV
 * with header cx,cy,fx,fy,magnitude. */
ltew_status ltew_freq_dump(const ltew_model* model, const ltew_image* input,
                           const char* out_csv);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* LTEW_H */
