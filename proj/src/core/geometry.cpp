#include "geometry.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

#include "errors.hpp"

namespace ltew {

namespace {

constexpr double kPi = 3.14159265358979323846;

double deg2rad(double d) { return d * kPi / 180.0; }

Vec3 unit(Vec3 v) {
    const double n = v.norm();
    return {v.x / n, v.y / n, v.z / n};
}

}  // namespace

Transform Transform::axis_scale(double sx, double sy, int in_w, int in_h) {
    if (!(sx > 0.0) || !(sy > 0.0)) throw std::invalid_argument("axis-scale factors must be positive");
    if (in_w < 1 || in_h < 1) throw std::invalid_argument("input size must be positive");
    Transform t;
    t.kind_ = Kind::AxisScale;
    t.in_w_ = in_w;
    t.in_h_ = in_h;
    t.out_w_ = static_cast<int>(std::llround(sx * in_w));
    t.out_h_ = static_cast<int>(std::llround(sy * in_h));
    if (t.out_w_ < 1 || t.out_h_ < 1) throw std::invalid_argument("axis-scale output collapses to zero pixels");
    t.inv_sx_ = 1.0 / sx;
    t.inv_sy_ = 1.0 / sy;
    return t;
}

Transform Transform::axis_scale_for_sizes(int in_w, int in_h, int out_w, int out_h) {
    if (in_w < 1 || in_h < 1 || out_w < 1 || out_h < 1)
        throw std::invalid_argument("sizes must be positive");
    Transform t;
    t.kind_ = Kind::AxisScale;
    t.in_w_ = in_w;
    t.in_h_ = in_h;
    t.out_w_ = out_w;
    t.out_h_ = out_h;
    t.inv_sx_ = static_cast<double>(in_w) / out_w;
    t.inv_sy_ = static_cast<double>(in_h) / out_h;
    return t;
}

Transform Transform::homography(const Mat3& m, int in_w, int in_h, int out_w, int out_h) {
    if (in_w < 1 || in_h < 1 || out_w < 1 || out_h < 1)
        throw std::invalid_argument("sizes must be positive");
    if (std::abs(m.det()) <= 1e-12) throw std::invalid_argument("homography matrix is singular (|det| <= 1e-12)");
    Transform t;
    t.kind_ = Kind::Homography;
    t.in_w_ = in_w;
    t.in_h_ = in_h;
    t.out_w_ = out_w;
    t.out_h_ = out_h;
    t.m_ = m;
    t.fwd_ = m.inverse();
    t.horizon_eps_ = kHomogeneousEps * std::max(1.0, m.inf_norm());
    return t;
}

Transform Transform::erp_perspective(double fov_deg, double yaw_deg, double pitch_deg, int out_w,
                                     int out_h, int erp_w, int erp_h) {
    if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw std::invalid_argument("fov must lie in (0, 180) degrees");
    if (out_w < 1 || out_h < 1 || erp_w < 1 || erp_h < 1)
        throw std::invalid_argument("sizes must be positive");
    Transform t;
    t.kind_ = Kind::ErpPerspective;
    t.in_w_ = erp_w;
    t.in_h_ = erp_h;
    t.out_w_ = out_w;
    t.out_h_ = out_h;
    t.fov_deg_ = fov_deg;
    t.yaw_deg_ = yaw_deg;
    t.pitch_deg_ = pitch_deg;
    t.tan_half_u_ = std::tan(deg2rad(fov_deg) * 0.5);
    t.tan_half_v_ = t.tan_half_u_ * static_cast<double>(out_h) / out_w;
    const double yaw = deg2rad(yaw_deg);
    const double pitch = deg2rad(pitch_deg);
    // Forward +x at yaw=pitch=0; yaw turns toward +longitude (+y east), pitch
    // lifts toward +latitude (+z up).
    t.cam_f_ = {std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch)};
    t.cam_r_ = {-std::sin(yaw), std::cos(yaw), 0.0};
    t.cam_u_ = unit(t.cam_f_.cross(t.cam_r_));
    return t;
}

void Transform::set_out_size(int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) throw std::invalid_argument("output size must be positive");
    if (kind_ == Kind::ErpPerspective) {
        // Keep the field of view; the vertical half-angle follows the aspect.
        tan_half_v_ = tan_half_u_ * static_cast<double>(out_h) / out_w;
    }
    out_w_ = out_w;
    out_h_ = out_h;
}

Mat3 Transform::matrix() const {
    switch (kind_) {
        case Kind::AxisScale: {
            Mat3 m;
            m.m = {inv_sx_, 0, 0, 0, inv_sy_, 0, 0, 0, 1};
            return m;
        }
        case Kind::Homography:
            return m_;
        case Kind::ErpPerspective:
            throw std::domain_error("erp-perspective has no matrix form");
    }
    throw std::logic_error("unreachable");
}

std::optional<Vec2> Transform::raw_inverse_px(Vec2 out_px, const double* lon_center) const {
    switch (kind_) {
        case Kind::AxisScale:
            return Vec2{out_px.x * inv_sx_, out_px.y * inv_sy_};
        case Kind::Homography: {
            const Vec3 h = m_.apply_homogeneous({out_px.x, out_px.y});
            if (std::abs(h.z) <= horizon_eps_) return std::nullopt;
            return Vec2{h.x / h.z, h.y / h.z};
        }
        case Kind::ErpPerspective: {
            const double u = pixel_to_norm(out_px.x, out_w_);
            const double v = pixel_to_norm(out_px.y, out_h_);
            // Positive v is the lower half of the view, hence minus cam_u_.
            const Vec3 d = cam_f_ + cam_r_ * (tan_half_u_ * u) - cam_u_ * (tan_half_v_ * v);
            double lon = std::atan2(d.y, d.x);
            const double lat = std::atan2(d.z, std::hypot(d.x, d.y));
            if (lon_center != nullptr) {
                // Pick the longitude branch nearest the stencil center so the
                // differences stay continuous across the +-pi seam.
                lon += 2.0 * kPi * std::round((*lon_center - lon) / (2.0 * kPi));
            }
            const double xu = lon / kPi;
            const double xv = -2.0 * lat / kPi;
            return Vec2{norm_to_pixel(xu, in_w_), norm_to_pixel(xv, in_h_)};
        }
    }
    throw std::logic_error("unreachable");
}

std::optional<Vec2> Transform::inverse_pixel_map(Vec2 out_px) const {
    return raw_inverse_px(out_px, nullptr);
}

std::optional<Vec2> Transform::apply_inverse(Vec2 y_norm) const {
    const Vec2 out_px{norm_to_pixel(y_norm.x, out_w_), norm_to_pixel(y_norm.y, out_h_)};
    const auto in_px = raw_inverse_px(out_px, nullptr);
    if (!in_px) return std::nullopt;
    const Vec2 x{pixel_to_norm(in_px->x, in_w_), pixel_to_norm(in_px->y, in_h_)};
    if (!std::isfinite(x.x) || !std::isfinite(x.y)) return std::nullopt;
    if (kind_ != Kind::ErpPerspective && (x.x < -1.0 || x.x > 1.0 || x.y < -1.0 || x.y > 1.0))
        return std::nullopt;
    return x;
}

std::optional<Vec2> Transform::apply_forward(Vec2 x_norm) const {
    switch (kind_) {
        case Kind::AxisScale: {
            const Vec2 in_px{norm_to_pixel(x_norm.x, in_w_), norm_to_pixel(x_norm.y, in_h_)};
            return Vec2{pixel_to_norm(in_px.x / inv_sx_, out_w_),
                        pixel_to_norm(in_px.y / inv_sy_, out_h_)};
        }
        case Kind::Homography: {
            const Vec2 in_px{norm_to_pixel(x_norm.x, in_w_), norm_to_pixel(x_norm.y, in_h_)};
            const Vec3 h = fwd_.apply_homogeneous({in_px.x, in_px.y});
            const double eps = kHomogeneousEps * std::max(1.0, fwd_.inf_norm());
            if (std::abs(h.z) <= eps) return std::nullopt;
            return Vec2{pixel_to_norm(h.x / h.z, out_w_), pixel_to_norm(h.y / h.z, out_h_)};
        }
        case Kind::ErpPerspective: {
            const double lon = x_norm.x * kPi;
            const double lat = -x_norm.y * kPi / 2.0;
            const Vec3 d{std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon),
                         std::sin(lat)};
            const double s = d.dot(cam_f_);
            if (s <= 1e-9) return std::nullopt;  // behind or grazing the view plane
            const double u = d.dot(cam_r_) / (s * tan_half_u_);
            const double v = -d.dot(cam_u_) / (s * tan_half_v_);
            return Vec2{u, v};
        }
    }
    throw std::logic_error("unreachable");
}

std::optional<Mat2> Transform::analytic_jacobian(Vec2 y_norm) const {
    const Vec2 p{norm_to_pixel(y_norm.x, out_w_), norm_to_pixel(y_norm.y, out_h_)};
    switch (kind_) {
        case Kind::AxisScale:
            return Mat2::diag(inv_sx_, inv_sy_);
        case Kind::Homography: {
            const Vec3 h = m_.apply_homogeneous({p.x, p.y});
            if (std::abs(h.z) <= horizon_eps_) return std::nullopt;
            const double w = h.z, w2 = w * w;
            Mat2 j;
            j(0, 0) = (m_(0, 0) * w - h.x * m_(2, 0)) / w2;
            j(0, 1) = (m_(0, 1) * w - h.x * m_(2, 1)) / w2;
            j(1, 0) = (m_(1, 0) * w - h.y * m_(2, 0)) / w2;
            j(1, 1) = (m_(1, 1) * w - h.y * m_(2, 1)) / w2;
            return j;
        }
        case Kind::ErpPerspective:
            throw std::domain_error(
                "no closed-form jacobian for erp-perspective; use the numeric stencil");
    }
    throw std::logic_error("unreachable");
}

std::optional<Stencil> Transform::stencil(Vec2 y_norm) const {
    const Vec2 c{norm_to_pixel(y_norm.x, out_w_), norm_to_pixel(y_norm.y, out_h_)};
    double lon_center = 0.0;
    const double* unwrap = nullptr;
    if (kind_ == Kind::ErpPerspective) {
        const auto center = raw_inverse_px(c, nullptr);
        lon_center = pixel_to_norm(center->x, in_w_) * kPi;
        unwrap = &lon_center;
    }
    double w_sign = 0.0;
    if (kind_ == Kind::Homography) {
        const Vec3 h = m_.apply_homogeneous({c.x, c.y});
        if (std::abs(h.z) <= horizon_eps_) return std::nullopt;
        w_sign = h.z > 0.0 ? 1.0 : -1.0;
    }
    Stencil st;
    for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
            const Vec2 q{c.x + dx, c.y + dy};
            if (kind_ == Kind::Homography) {
                // Reject stencils straddling the horizon: differences across a
                // sign flip of the homogeneous w are meaningless.
                const Vec3 h = m_.apply_homogeneous({q.x, q.y});
                if (std::abs(h.z) <= horizon_eps_ || h.z * w_sign < 0.0) return std::nullopt;
            }
            const auto p = raw_inverse_px(q, unwrap);
            if (!p || !std::isfinite(p->x) || !std::isfinite(p->y)) return std::nullopt;
            st.s[static_cast<size_t>(dy + 1)][static_cast<size_t>(dx + 1)] = *p;
        }
    }
    return st;
}

std::optional<ShapeVector> shape_vector(const Transform& t, Vec2 y_norm) {
    const auto st = t.stencil(y_norm);
    if (!st) return std::nullopt;
    const auto& s = st->s;
    ShapeVector sv;
    sv.v[0] = (s[1][2].x - s[1][0].x) * 0.5;
    sv.v[1] = (s[2][1].x - s[0][1].x) * 0.5;
    sv.v[2] = (s[1][2].y - s[1][0].y) * 0.5;
    sv.v[3] = (s[2][1].y - s[0][1].y) * 0.5;
    sv.v[4] = s[1][2].x - 2.0 * s[1][1].x + s[1][0].x;
    sv.v[5] = (s[2][2].x - s[2][0].x - s[0][2].x + s[0][0].x) * 0.25;
    sv.v[6] = s[2][1].x - 2.0 * s[1][1].x + s[0][1].x;
    sv.v[7] = s[1][2].y - 2.0 * s[1][1].y + s[1][0].y;
    sv.v[8] = (s[2][2].y - s[2][0].y - s[0][2].y + s[0][0].y) * 0.25;
    sv.v[9] = s[2][1].y - 2.0 * s[1][1].y + s[0][1].y;
    return sv;
}

std::optional<Mat2> numeric_jacobian(const Transform& t, Vec2 y_norm) {
    const auto sv = shape_vector(t, y_norm);
    if (!sv) return std::nullopt;
    return sv->jacobian();
}

std::optional<std::array<double, 6>> numeric_hessian(const Transform& t, Vec2 y_norm) {
    const auto sv = shape_vector(t, y_norm);
    if (!sv) return std::nullopt;
    return std::array<double, 6>{sv->v[4], sv->v[5], sv->v[6], sv->v[7], sv->v[8], sv->v[9]};
}

bool query_valid(const Transform& t, Vec2 y_norm, double min_det) {
    if (!t.apply_inverse(y_norm)) return false;
    const auto sv = shape_vector(t, y_norm);
    if (!sv) return false;
    return std::abs(sv->jacobian_det()) >= min_det;
}

Transform Transform::inverse() const {
    switch (kind_) {
        case Kind::AxisScale: {
            Transform t;
            t.kind_ = Kind::AxisScale;
            t.in_w_ = out_w_;
            t.in_h_ = out_h_;
            t.out_w_ = in_w_;
            t.out_h_ = in_h_;
            t.inv_sx_ = 1.0 / inv_sx_;
            t.inv_sy_ = 1.0 / inv_sy_;
            return t;
        }
        case Kind::Homography:
            return homography(fwd_, out_w_, out_h_, in_w_, in_h_);
        case Kind::ErpPerspective:
            throw std::domain_error("erp-perspective is not invertible as a transform object");
    }
    throw std::logic_error("unreachable");
}

Transform Transform::with_input_crop(double off_x, double off_y, int crop_w, int crop_h) const {
    if (kind_ == Kind::ErpPerspective)
        throw std::domain_error("cannot re-reference an erp-perspective input frame");
    Mat3 shift;
    shift.m = {1, 0, -off_x, 0, 1, -off_y, 0, 0, 1};
    return homography(shift * matrix(), crop_w, crop_h, out_w_, out_h_);
}

Mat3 homography_from_params(const HomographyParams& p) {
    Mat3 shear;
    shear.m = {1, p.shear_x, 0, p.shear_y, 1, 0, 0, 0, 1};
    const double th = deg2rad(p.rot_deg);
    const double c = std::cos(th), s = std::sin(th);
    Mat3 rot;
    rot.m = {c, s, 0, -s, c, 0, 0, 0, 1};
    Mat3 scale;
    scale.m = {p.scale_x, 0, 0, 0, p.scale_y, 0, 0, 0, 1};
    Mat3 proj;
    proj.m = {1, 0, p.translate_x, 0, 1, p.translate_y, p.persp_x, p.persp_y, 1};
    return shear * rot * scale * proj;
}

HomographyParams sample_homography_params(Rng& rng, ScaleRegime regime, int out_w, int out_h) {
    HomographyParams p;
    p.shear_x = rng.uniform(-0.25, 0.25);
    p.shear_y = rng.uniform(-0.25, 0.25);
    p.rot_deg = rng.normal(0.0, 0.15);
    const double lo = regime == ScaleRegime::InScale ? 0.35 : 0.125;
    const double hi = regime == ScaleRegime::InScale ? 0.5 : 0.25;
    p.scale_x = rng.uniform(lo, hi);
    p.scale_y = rng.uniform(lo, hi);
    p.translate_x = rng.uniform(-0.75, 0.125) * out_w;
    p.translate_y = rng.uniform(-0.75, 0.125) * out_h;
    // Projection strengths scale with 1/size so the horizon stays outside the
    // frame for typical draws.
    p.persp_x = rng.uniform(-0.6, 0.6) / out_w;
    p.persp_y = rng.uniform(-0.6, 0.6) / out_h;
    return p;
}

Transform sample_homography(Rng& rng, ScaleRegime regime, int out_w, int out_h) {
    for (;;) {
        const HomographyParams p = sample_homography_params(rng, regime, out_w, out_h);
        const Mat3 m = homography_from_params(p);
        if (std::abs(m.det()) < 1e-12) continue;
        return Transform::homography(m, out_w, out_h, out_w, out_h);
    }
}

namespace {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tok;
    std::istringstream in(text);
    std::string t;
    while (in >> t) tok.push_back(t);
    return tok;
}

double parse_real(const std::string& tok, const char* what) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size() || !std::isfinite(v))
        throw FormatError(std::string("transform spec: bad ") + what + " '" + tok + "'");
    return v;
}

int parse_int(const std::string& tok, const char* what) {
    const double v = parse_real(tok, what);
    if (v != std::floor(v) || v < 1 || v > 1e9)
        throw FormatError(std::string("transform spec: ") + what + " must be a positive integer, got '" +
                          tok + "'");
    return static_cast<int>(v);
}

}  // namespace

Transform parse_transform_text(const std::string& text, int in_w, int in_h) {
    const auto tok = tokenize(text);
    if (tok.empty()) throw FormatError("transform spec: empty");
    const std::string& kind = tok[0];
    const size_t nargs = tok.size() - 1;
    if (kind == "scale") {
        if (nargs != 2) throw FormatError("transform spec: scale takes 2 arguments, got " + std::to_string(nargs));
        const double sx = parse_real(tok[1], "scale factor");
        const double sy = parse_real(tok[2], "scale factor");
        if (sx <= 0 || sy <= 0) throw FormatError("transform spec: scale factors must be positive");
        return Transform::axis_scale(sx, sy, in_w, in_h);
    }
    if (kind == "homography") {
        if (nargs != 9) throw FormatError("transform spec: homography takes 9 arguments, got " + std::to_string(nargs));
        Mat3 m;
        for (int i = 0; i < 9; ++i) m.m[static_cast<size_t>(i)] = parse_real(tok[static_cast<size_t>(i) + 1], "matrix entry");
        if (std::abs(m.det()) <= 1e-12) throw FormatError("transform spec: homography matrix is singular");
        return Transform::homography(m, in_w, in_h, in_w, in_h);
    }
    if (kind == "erp") {
        if (nargs != 5) throw FormatError("transform spec: erp takes 5 arguments, got " + std::to_string(nargs));
        const double fov = parse_real(tok[1], "fov");
        const double yaw = parse_real(tok[2], "yaw");
        const double pitch = parse_real(tok[3], "pitch");
        const int ow = parse_int(tok[4], "out width");
        const int oh = parse_int(tok[5], "out height");
        if (!(fov > 0.0 && fov < 180.0)) throw FormatError("transform spec: fov must lie in (0, 180)");
        return Transform::erp_perspective(fov, yaw, pitch, ow, oh, in_w, in_h);
    }
    throw FormatError("transform spec: unknown kind '" + kind + "'");
}

Transform parse_transform_file(const std::string& path, int in_w, int in_h) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open transform spec '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_transform_text(ss.str(), in_w, in_h);
}

}  // namespace ltew
