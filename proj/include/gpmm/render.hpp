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
#pragma once

#ifndef GPMM_RENDER_HPP
#define GPMM_RENDER_HPP

#include "gpmm/mesh.hpp"

#include "json.hpp"

#include <optional>

namespace gpmm {

/**
 * Rigid model-to-camera transform. The camera sits at the origin looking down
 * +z with image y pointing down; zero angles show the model's +z side (face
 * front, +y up) to the camera. camera = F * Rz(roll) * Rx(pitch) * Ry(yaw) * p + t
 * with F = diag(1, -1, -1).
 */
struct Pose
{
    double yaw = 0.0;
    double pitch = 0.0;
    double roll = 0.0;
    Vec3 translation = Vec3(0.0, 0.0, 600.0);

    Mat3 rotation() const;
    Vec3 apply(const Vec3& p) const { return rotation() * p + translation; }
};

struct Camera
{
    double focal = 500.0; ///< pixels
    Vec2 principal = Vec2(64.0, 64.0);
    int width = 128;
    int height = 128;

    static Camera centered(int width, int height, double focal);
    void validate() const;
};

/// Order-2 real spherical-harmonics coefficients, one column per RGB channel.
using ShCoefficients = Eigen::Matrix<double, 9, 3>;

struct SceneParams
{
    Pose pose;
    Camera camera;
    ShCoefficients illumination = ShCoefficients::Zero();
};

/// Real SH basis Y_0..Y_8 at a unit direction (ordering: 00, 1-1, 10, 11, 2-2, 2-1, 20, 21, 22).
Eigen::Matrix<double, 9, 1> sh_basis(const Vec3& n);
/// SH basis premultiplied by the Lambertian convolution constants (pi, 2pi/3, pi/4).
Eigen::Matrix<double, 9, 1> irradiance_basis(const Vec3& n);

/// Band-0 only lighting whose irradiance equals `level` for every normal.
ShCoefficients ambient_illumination(double level = 1.0);
/// Ambient plus one directional band-1 term pointing from the surface towards the light.
ShCoefficients directional_illumination(double ambient, double directional, const Vec3& towards_light);

/// albedo * (sh^T irradiance_basis(n)) per channel, before clamping.
Vec3 shade_unclamped(const Vec3& albedo, const Vec3& normal, const ShCoefficients& sh);
/// Same, clamped to [0, inf).
Vec3 shade(const Vec3& albedo, const Vec3& normal, const ShCoefficients& sh);

struct Projected
{
    Vec2 pixel = Vec2::Zero();
    double depth = 0.0;
    bool valid = false; ///< false when the point is closer than the near plane
};

constexpr double near_plane = 1.0; // mm

/// Perspective projection of a camera-space point.
Projected project_camera_point(const Camera& camera, const Vec3& camera_point);
/// Perspective projection of a model-space point under a pose.
Projected project(const Camera& camera, const Pose& pose, const Vec3& point);

using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Linear RGB image; pixel (x, y) lives in column y * width + x.
struct ImageRGB
{
    int width = 0;
    int height = 0;
    Points3d pixels;

    static ImageRGB zeros(int width, int height);
    Index index(int x, int y) const { return Index(y) * width + x; }
};

struct RenderOutput
{
    int width = 0;
    int height = 0;
    ImageRGB color;
    Eigen::ArrayXd depth;       ///< +inf where nothing was drawn
    Mask silhouette;
    Eigen::ArrayXi triangle_id; ///< -1 where nothing was drawn
    Points3d barycentric;       ///< perspective-correct weights of the winning triangle

    Index silhouette_pixels() const { return silhouette.count(); }
};

/// Visibility pass: z-buffered, back-face culled, pixel-centre coverage.
RenderOutput rasterize_geometry(const Points3d& vertices, const Triangles& triangles, const SceneParams& scene);

/// Shading pass over the visibility buffer; `normals` are model-space unit normals.
void shade_buffer(RenderOutput& out, const Triangles& triangles, const Points3d& albedo, const Points3d& normals,
                  const SceneParams& scene);

/// Both passes.
RenderOutput rasterize(const Mesh& mesh, const SceneParams& scene);

/**
 * Background colour likelihood of an observed image: a global colour histogram
 * with add-one smoothing, expressed as a density over [0,1]^3.
 */
struct BackgroundModel
{
    int bins = 16;
    Eigen::ArrayXd log_density; ///< per observed pixel
    double total = 0.0;         ///< sum of log_density

    static BackgroundModel from_image(const ImageRGB& image, int bins = 16);
};

/// Isotropic per-channel Gaussian log density of a residual.
double gaussian_log_density(const Vec3& residual, const Vec3& sigma);

/**
 * Foreground pixels: Gaussian noise around the rendering. Remaining pixels:
 * background histogram density of the observed colour.
 */
double image_log_likelihood(const RenderOutput& rendered, const ImageRGB& observed, const Vec3& sigma,
                            const BackgroundModel& background);

/// |a and b| / |a or b|, 1 when both are empty.
double silhouette_iou(const Mask& a, const Mask& b);

nlohmann::json to_json(const SceneParams& scene);
SceneParams scene_from_json(const nlohmann::json& j);

} // namespace gpmm

#endif // GPMM_RENDER_HPP
