/*
 * gpmm - Gaussian-process morphable models built from a single template.
 *
 * Copyright 2026 The gpmm authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "gpmm/render.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <limits>

namespace gpmm {

Mat3 Pose::rotation() const
{
    using Eigen::AngleAxisd;
    const Mat3 flip = Vec3(1.0, -1.0, -1.0).asDiagonal();
    const Mat3 r = (AngleAxisd(roll, Vec3::UnitZ()) * AngleAxisd(pitch, Vec3::UnitX()) *
                    AngleAxisd(yaw, Vec3::UnitY()))
                       .toRotationMatrix();
    return flip * r;
}

Camera Camera::centered(int width, int height, double focal)
{
    Camera c;
    c.width = width;
    c.height = height;
    c.focal = focal;
    c.principal = Vec2(0.5 * width, 0.5 * height);
    return c;
}

void Camera::validate() const
{
    if (!(focal > 0.0) || !std::isfinite(focal))
        throw usage_error("camera focal length must be positive");
    if (width < 1 || height < 1)
        throw usage_error("image size must be at least 1x1");
    if (!principal.allFinite())
        throw usage_error("principal point must be finite");
}

Eigen::Matrix<double, 9, 1> sh_basis(const Vec3& n)
{
    const double x = n.x(), y = n.y(), z = n.z();
    Eigen::Matrix<double, 9, 1> b;
    b << 0.282095, 0.488603 * y, 0.488603 * z, 0.488603 * x, 1.092548 * x * y, 1.092548 * y * z,
        0.315392 * (3.0 * z * z - 1.0), 1.092548 * x * z, 0.546274 * (x * x - y * y);
    return b;
}

Eigen::Matrix<double, 9, 1> irradiance_basis(const Vec3& n)
{
    Eigen::Matrix<double, 9, 1> b = sh_basis(n);
    b(0) *= pi;
    b.segment<3>(1) *= 2.0 * pi / 3.0;
    b.tail<5>() *= pi / 4.0;
    return b;
}

ShCoefficients ambient_illumination(double level)
{
    ShCoefficients sh = ShCoefficients::Zero();
    sh.row(0).setConstant(level / (0.282095 * pi));
    return sh;
}

ShCoefficients directional_illumination(double ambient, double directional, const Vec3& towards_light)
{
    ShCoefficients sh = ambient_illumination(ambient);
    const Vec3 d = towards_light.normalized();
    // irradiance gains directional * dot(n, d) from the band-1 terms
    const double k = directional / (0.488603 * 2.0 * pi / 3.0);
    sh.row(1).setConstant(k * d.y());
    sh.row(2).setConstant(k * d.z());
    sh.row(3).setConstant(k * d.x());
    return sh;
}

Vec3 shade_unclamped(const Vec3& albedo, const Vec3& normal, const ShCoefficients& sh)
{
    const Eigen::Matrix<double, 9, 1> b = irradiance_basis(normal);
    return albedo.cwiseProduct(sh.transpose() * b);
}

Vec3 shade(const Vec3& albedo, const Vec3& normal, const ShCoefficients& sh)
{
    return shade_unclamped(albedo, normal, sh).cwiseMax(0.0);
}

Projected project_camera_point(const Camera& camera, const Vec3& p)
{
    Projected out;
    out.depth = p.z();
    out.valid = p.z() > near_plane && p.allFinite();
    if (out.valid)
        out.pixel = camera.principal + camera.focal * Vec2(p.x() / p.z(), p.y() / p.z());
    return out;
}

Projected project(const Camera& camera, const Pose& pose, const Vec3& point)
{
    return project_camera_point(camera, pose.apply(point));
}

ImageRGB ImageRGB::zeros(int width, int height)
{
    ImageRGB im;
    im.width = width;
    im.height = height;
    im.pixels = Points3d::Zero(3, Index(width) * height);
    return im;
}

RenderOutput rasterize_geometry(const Points3d& vertices, const Triangles& triangles, const SceneParams& scene)
{
    const Camera& cam = scene.camera;
    cam.validate();
    const int w = cam.width, h = cam.height;
    const Index npix = Index(w) * h;

    RenderOutput out;
    out.width = w;
    out.height = h;
    out.color = ImageRGB::zeros(w, h);
    out.depth = Eigen::ArrayXd::Constant(npix, std::numeric_limits<double>::infinity());
    out.silhouette = Mask::Constant(npix, false);
    out.triangle_id = Eigen::ArrayXi::Constant(npix, -1);
    out.barycentric = Points3d::Zero(3, npix);

    const Mat3 r = scene.pose.rotation();
    const Points3d cam_pts = (r * vertices).colwise() + scene.pose.translation;
    Eigen::Matrix<double, 2, Eigen::Dynamic> screen(2, cam_pts.cols());
    for (Index i = 0; i < cam_pts.cols(); ++i) {
        const double z = cam_pts(2, i);
        screen.col(i) = cam.principal + cam.focal * Vec2(cam_pts(0, i) / z, cam_pts(1, i) / z);
    }

    for (Index t = 0; t < triangles.cols(); ++t) {
        const int ia = triangles(0, t), ib = triangles(1, t), ic = triangles(2, t);
        const Vec3 a = cam_pts.col(ia), b = cam_pts.col(ib), c = cam_pts.col(ic);
        if (a.z() <= near_plane || b.z() <= near_plane || c.z() <= near_plane)
            continue;
        if ((b - a).cross(c - a).dot(a) >= 0.0)
            continue; // back-facing
        const Vec2 pa = screen.col(ia), pb = screen.col(ib), pc = screen.col(ic);
        const double area = (pb.x() - pa.x()) * (pc.y() - pa.y()) - (pb.y() - pa.y()) * (pc.x() - pa.x());
        if (area == 0.0 || !std::isfinite(area))
            continue;
        const double xmin = std::min({pa.x(), pb.x(), pc.x()});
        const double xmax = std::max({pa.x(), pb.x(), pc.x()});
        const double ymin = std::min({pa.y(), pb.y(), pc.y()});
        const double ymax = std::max({pa.y(), pb.y(), pc.y()});
        const int x0 = std::max(0, static_cast<int>(std::floor(xmin - 0.5)));
        const int x1 = std::min(w - 1, static_cast<int>(std::ceil(xmax - 0.5)));
        const int y0 = std::max(0, static_cast<int>(std::floor(ymin - 0.5)));
        const int y1 = std::min(h - 1, static_cast<int>(std::ceil(ymax - 0.5)));
        if (x0 > x1 || y0 > y1)
            continue;
        const double inv_area = 1.0 / area;
        const double iza = 1.0 / a.z(), izb = 1.0 / b.z(), izc = 1.0 / c.z();
        for (int y = y0; y <= y1; ++y) {
            const double py = y + 0.5;
            for (int x = x0; x <= x1; ++x) {
                const double px = x + 0.5;
                // screen-space barycentrics; the sign of area fixes orientation
                double l0 = ((pb.x() - px) * (pc.y() - py) - (pb.y() - py) * (pc.x() - px)) * inv_area;
                double l1 = ((pc.x() - px) * (pa.y() - py) - (pc.y() - py) * (pa.x() - px)) * inv_area;
                double l2 = 1.0 - l0 - l1;
                if (l0 < 0.0 || l1 < 0.0 || l2 < 0.0)
                    continue;
                const double w0 = l0 * iza, w1 = l1 * izb, w2 = l2 * izc;
                const double s = w0 + w1 + w2;
                const double depth = 1.0 / s;
                const Index p = Index(y) * w + x;
                if (depth < out.depth(p)) {
                    out.depth(p) = depth;
                    out.triangle_id(p) = static_cast<int>(t);
                    out.barycentric.col(p) = Vec3(w0, w1, w2) * depth;
                    out.silhouette(p) = true;
                }
            }
        }
    }
    return out;
}

void shade_buffer(RenderOutput& out, const Triangles& triangles, const Points3d& albedo, const Points3d& normals,
                  const SceneParams& scene)
{
    const Mat3 r = scene.pose.rotation();
    const Eigen::Matrix<double, 3, 9> sh_t = scene.illumination.transpose();
    const Index npix = out.triangle_id.size();
    if (out.color.pixels.cols() != npix)
        out.color = ImageRGB::zeros(out.width, out.height);
    for (Index p = 0; p < npix; ++p) {
        const int t = out.triangle_id(p);
        if (t < 0) {
            out.color.pixels.col(p).setZero();
            continue;
        }
        const Vec3 wts = out.barycentric.col(p);
        const int ia = triangles(0, t), ib = triangles(1, t), ic = triangles(2, t);
        const Vec3 alb = wts(0) * albedo.col(ia) + wts(1) * albedo.col(ib) + wts(2) * albedo.col(ic);
        Vec3 n = wts(0) * normals.col(ia) + wts(1) * normals.col(ib) + wts(2) * normals.col(ic);
        const double len = n.norm();
        n = len > 0.0 ? Vec3(r * n / len) : Vec3(0.0, 0.0, -1.0);
        out.color.pixels.col(p) = alb.cwiseProduct(sh_t * irradiance_basis(n)).cwiseMax(0.0);
    }
}

RenderOutput rasterize(const Mesh& mesh, const SceneParams& scene)
{
    RenderOutput out = rasterize_geometry(mesh.vertices, mesh.triangles, scene);
    NormalOptions opts;
    opts.default_normal = Vec3(0.0, 0.0, 1.0);
    shade_buffer(out, mesh.triangles, mesh.albedo, vertex_normals(mesh, opts), scene);
    return out;
}

BackgroundModel BackgroundModel::from_image(const ImageRGB& image, int bins)
{
    if (bins < 1)
        throw usage_error("background histogram needs at least one bin");
    BackgroundModel bg;
    bg.bins = bins;
    const Index n = image.pixels.cols();
    const Index cells = Index(bins) * bins * bins;
    std::vector<Index> bin_of(n);
    std::vector<double> counts(cells, 0.0);
    auto quantize = [bins](double v) {
        const int b = static_cast<int>(std::floor(std::clamp(v, 0.0, 1.0) * bins));
        return std::min(b, bins - 1);
    };
    for (Index i = 0; i < n; ++i) {
        const Index k = (Index(quantize(image.pixels(0, i))) * bins + quantize(image.pixels(1, i))) * bins +
                        quantize(image.pixels(2, i));
        bin_of[i] = k;
        counts[k] += 1.0;
    }
    const double denom = double(n) + double(cells);
    bg.log_density.resize(n);
    for (Index i = 0; i < n; ++i)
        bg.log_density(i) = std::log((counts[bin_of[i]] + 1.0) / denom * double(cells));
    bg.total = bg.log_density.sum();
    return bg;
}

double gaussian_log_density(const Vec3& residual, const Vec3& sigma)
{
    double s = 0.0;
    for (int c = 0; c < 3; ++c) {
        const double z = residual(c) / sigma(c);
        s += -0.5 * z * z - std::log(std::sqrt(2.0 * pi) * sigma(c));
    }
    return s;
}

double image_log_likelihood(const RenderOutput& rendered, const ImageRGB& observed, const Vec3& sigma,
                            const BackgroundModel& background)
{
    if (rendered.width != observed.width || rendered.height != observed.height)
        throw data_error("rendered " + std::to_string(rendered.width) + "x" + std::to_string(rendered.height) +
                         " vs observed " + std::to_string(observed.width) + "x" + std::to_string(observed.height));
    if (background.log_density.size() != observed.pixels.cols())
        throw data_error("background model does not match the observed image");
    double total = background.total;
    const Index n = rendered.silhouette.size();
    for (Index p = 0; p < n; ++p) {
        if (!rendered.silhouette(p))
            continue;
        total -= background.log_density(p);
        total += gaussian_log_density(rendered.color.pixels.col(p) - observed.pixels.col(p), sigma);
    }
    return total;
}

double silhouette_iou(const Mask& a, const Mask& b)
{
    if (a.size() != b.size())
        throw data_error("silhouette masks differ in size");
    const Index inter = (a && b).count();
    const Index uni = (a || b).count();
    return uni == 0 ? 1.0 : double(inter) / double(uni);
}

nlohmann::json to_json(const SceneParams& scene)
{
    nlohmann::json sh = nlohmann::json::array();
    for (int k = 0; k < 9; ++k)
        sh.push_back({scene.illumination(k, 0), scene.illumination(k, 1), scene.illumination(k, 2)});
    const Pose& p = scene.pose;
    const Camera& c = scene.camera;
    return {{"pose",
             {{"yaw", p.yaw},
              {"pitch", p.pitch},
              {"roll", p.roll},
              {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}}}},
            {"camera",
             {{"focal", c.focal},
              {"principal", {c.principal.x(), c.principal.y()}},
              {"width", c.width},
              {"height", c.height}}},
            {"illumination", sh}};
}

SceneParams scene_from_json(const nlohmann::json& j)
{
    SceneParams s;
    try {
        const auto& p = j.at("pose");
        s.pose.yaw = p.at("yaw").get<double>();
        s.pose.pitch = p.at("pitch").get<double>();
        s.pose.roll = p.at("roll").get<double>();
        const auto& t = p.at("translation");
        s.pose.translation = Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>());
        const auto& c = j.at("camera");
        s.camera.focal = c.at("focal").get<double>();
        s.camera.principal = Vec2(c.at("principal").at(0).get<double>(), c.at("principal").at(1).get<double>());
        s.camera.width = c.at("width").get<int>();
        s.camera.height = c.at("height").get<int>();
        const auto& sh = j.at("illumination");
        if (sh.size() != 9)
            throw data_error("scene illumination needs 9 rows of RGB coefficients");
        for (int k = 0; k < 9; ++k)
            for (int ch = 0; ch < 3; ++ch)
                s.illumination(k, ch) = sh.at(k).at(ch).get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("scene parameters: ") + e.what());
    }
    s.camera.validate();
    return s;
}

} // namespace gpmm
