#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "mathx.hpp"
#include "rng.hpp"

namespace ltew {

// Coordinate conventions
// ----------------------
// Normalized coordinates span [-1, 1] per axis; the center of pixel i on an
// N-pixel axis sits at -1 + (2i + 1)/N. Continuous pixel coordinates put that
// center at i + 0.5, so pix = (u + 1) * N / 2.
//
// All transforms here are stored as the inverse map f^-1 taking OUTPUT
// coordinates to INPUT coordinates; warping resamples the input at f^-1(y).
// Jacobians/Hessians of f^-1 are reported in input-pixels per output-pixel:
// that is the unit the resampling stencil sees, and it is resolution-aware
// (an axis-scale x2 upsample has Jacobian diag(1/2, 1/2), not identity).

inline double norm_to_pixel(double u, int n) { return (u + 1.0) * 0.5 * static_cast<double>(n); }
inline double pixel_to_norm(double p, int n) { return 2.0 * p / static_cast<double>(n) - 1.0; }
inline double pixel_center_norm(int i, int n) {
    return -1.0 + (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
}

// Queries whose inverse-map Jacobian determinant falls below this (in pixel
// units) are treated as degenerate and masked out of warps and metrics.
inline constexpr double kMinJacobianDet = 1e-8;

// Relative threshold deciding when a homogeneous divide sits on the horizon.
inline constexpr double kHomogeneousEps = 1e-12;

// 10-entry local descriptor of f^-1 around one query: flattened 2x2 Jacobian
// followed by the six independent second-derivative entries, ordered
// (x:dd00, x:dd01, x:dd11, y:dd00, y:dd01, y:dd11).
struct ShapeVector {
    std::array<double, 10> v{};

    Mat2 jacobian() const { return {{v[0], v[1], v[2], v[3]}}; }
    double jacobian_det() const { return v[0] * v[3] - v[1] * v[2]; }

    // h[a][b][i] = d^2 x_i / (dy_a dy_b); folding guarantees h[0][1] == h[1][0].
    std::array<std::array<std::array<double, 2>, 2>, 2> hessian() const {
        std::array<std::array<std::array<double, 2>, 2>, 2> h{};
        h[0][0][0] = v[4];
        h[0][1][0] = h[1][0][0] = v[5];
        h[1][1][0] = v[6];
        h[0][0][1] = v[7];
        h[0][1][1] = h[1][0][1] = v[8];
        h[1][1][1] = v[9];
        return h;
    }
};

// Inverse-map samples one output pixel apart: s[dy + 1][dx + 1] is
// f^-1(y + (dx, dy) output pixels) in input pixel coordinates.
struct Stencil {
    std::array<std::array<Vec2, 3>, 3> s{};
};

class Transform {
public:
    enum class Kind { AxisScale, Homography, ErpPerspective };

    // Axis-aligned magnification by (sx, sy): output is round(s * in) pixels,
    // inverse map divides pixel coordinates by s.
    static Transform axis_scale(double sx, double sy, int in_w, int in_h);

    // Axis scale pinned to exact pixel coverage between two known sizes.
    static Transform axis_scale_for_sizes(int in_w, int in_h, int out_w, int out_h);

    // M maps homogeneous output-pixel coordinates to input-pixel coordinates
    // (the inverse map), row major. Requires |det M| > 1e-12.
    static Transform homography(const Mat3& out_to_in_px, int in_w, int in_h, int out_w,
                                int out_h);

    // Perspective view extraction from an equirectangular panorama.
    // Longitude in [-pi, pi] maps linearly to panorama width, latitude in
    // [-pi/2, pi/2] to height; camera aimed by yaw (about +z, toward +lon)
    // then pitch (toward +lat); fov_deg is the horizontal field of view and
    // the vertical one follows the out aspect ratio. Requires 0 < fov < 180.
    static Transform erp_perspective(double fov_deg, double yaw_deg, double pitch_deg,
                                     int out_w, int out_h, int erp_w, int erp_h);

    Kind kind() const { return kind_; }
    int in_w() const { return in_w_; }
    int in_h() const { return in_h_; }
    int out_w() const { return out_w_; }
    int out_h() const { return out_h_; }
    void set_out_size(int out_w, int out_h);

    // Homography matrix (output px -> input px); axis-scale reports its
    // diagonal equivalent. Unavailable for ERP.
    Mat3 matrix() const;

    // x = f^-1(y) in normalized input coordinates. Out-of-domain (nullopt) when
    // x lands outside [-1,1]^2 or the map is undefined at y; not a failure.
    std::optional<Vec2> apply_inverse(Vec2 y_norm) const;

    // y = f(x) on normalized coordinates. nullopt where f is undefined: points
    // behind the perspective camera or on the homography horizon.
    std::optional<Vec2> apply_forward(Vec2 x_norm) const;

    // Raw inverse map on pixel coordinates, no input-domain clamp; nullopt only
    // where the map itself is undefined. Used for bounding input windows and
    // building difference stencils.
    std::optional<Vec2> inverse_pixel_map(Vec2 out_px) const;

    // Closed-form d(input px)/d(output px) of f^-1. Throws for ERP, which has
    // no closed form here; use shape_vector / numeric_jacobian instead.
    std::optional<Mat2> analytic_jacobian(Vec2 y_norm) const;

    // 3x3 ring of inverse samples one output pixel apart. nullopt when any of
    // the nine points is not evaluable (homography horizon crossing). Points
    // mapping outside the input rectangle are still evaluable; ERP longitudes
    // are unwrapped around the center sample so seam-adjacent differences stay
    // meaningful.
    std::optional<Stencil> stencil(Vec2 y_norm) const;

    // Mapping inverse (input and output roles swapped). Axis-scale and
    // homography only.
    Transform inverse() const;

    // Re-reference the input frame to a crop whose top-left corner sits at
    // (off_x, off_y) input pixels; the result is a homography onto the crop.
    // Axis-scale and homography only.
    Transform with_input_crop(double off_x, double off_y, int crop_w, int crop_h) const;

private:
    Transform() = default;

    Kind kind_ = Kind::Homography;
    int in_w_ = 0, in_h_ = 0, out_w_ = 0, out_h_ = 0;

    // axis-scale: inverse-map pixel factors (input px per output px)
    double inv_sx_ = 1.0, inv_sy_ = 1.0;

    // homography
    Mat3 m_ = Mat3::identity();
    Mat3 fwd_ = Mat3::identity();
    double horizon_eps_ = kHomogeneousEps;

    // erp-perspective
    double tan_half_u_ = 1.0, tan_half_v_ = 1.0;
    Vec3 cam_f_{1, 0, 0}, cam_r_{0, 1, 0}, cam_u_{0, 0, 1};
    double fov_deg_ = 90.0, yaw_deg_ = 0.0, pitch_deg_ = 0.0;

    std::optional<Vec2> raw_inverse_px(Vec2 out_px, const double* lon_center) const;
};

// Shape descriptor from the difference stencil. Jacobian by central
// differences, Hessian by second differences with the cross term computed once
// and stored folded. nullopt when the stencil is not evaluable.
std::optional<ShapeVector> shape_vector(const Transform& t, Vec2 y_norm);

// Central-difference Jacobian alone (pixel units).
std::optional<Mat2> numeric_jacobian(const Transform& t, Vec2 y_norm);

// Second central differences, ordered (x:dd00, x:dd01, x:dd11, y:...).
std::optional<std::array<double, 6>> numeric_hessian(const Transform& t, Vec2 y_norm);

// Full acceptance test for one warp query: center in-domain, stencil
// evaluable, and |det J| >= min_det.
bool query_valid(const Transform& t, Vec2 y_norm, double min_det = kMinJacobianDet);

// Random homography sampling: shear, rotation, anisotropic scale and a
// translation/projection block composed in that order. Scale regimes cover
// magnifications seen in training (in-scale) or beyond (out-of-scale).
enum class ScaleRegime { InScale, OutOfScale };

struct HomographyParams {
    double shear_x = 0.0, shear_y = 0.0;
    double rot_deg = 0.0;
    double scale_x = 1.0, scale_y = 1.0;
    double translate_x = 0.0, translate_y = 0.0;  // output pixels
    double persp_x = 0.0, persp_y = 0.0;          // per output pixel
};

Mat3 homography_from_params(const HomographyParams& p);

// Draw order: shear_x, shear_y, rot, scale_x, scale_y, translate_x,
// translate_y, persp_x, persp_y. Shears ~ U(-0.25, 0.25); rotation ~
// N(0, 0.15^2) degrees; scales ~ U(0.35, 0.5) in-scale or U(0.125, 0.25)
// out-of-scale; translations ~ U(-0.75, 0.125) * axis size in pixels;
// projection terms ~ U(-0.6, 0.6) / axis size.
HomographyParams sample_homography_params(Rng& rng, ScaleRegime regime, int out_w, int out_h);

// Composed transform with in_size = out_size = (out_w, out_h); callers
// re-reference the input frame afterwards. Resamples if |det M| < 1e-12.
Transform sample_homography(Rng& rng, ScaleRegime regime, int out_w, int out_h);

// Transform-spec text, one record:
//   scale <sx> <sy>
//   homography <9 reals row-major>
//   erp <fov_deg> <yaw_deg> <pitch_deg> <out_w> <out_h>
// in_w/in_h describe the image the transform will read from (for erp, the
// panorama size). Output size defaults: scale rounds s * in, homography keeps
// the input size, erp takes it from the record. Strict arity; malformed input
// throws FormatError.
Transform parse_transform_text(const std::string& text, int in_w, int in_h);
Transform parse_transform_file(const std::string& path, int in_w, int in_h);

}  // namespace ltew
