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

#ifndef GPMM_REGISTRATION_HPP
#define GPMM_REGISTRATION_HPP

#include "gpmm/inference.hpp"
#include "gpmm/lowrank.hpp"
#include "gpmm/render.hpp"

#include "json.hpp"

#include <optional>
#include <vector>

namespace gpmm {

/// Rotation plus translation; apply() is R * p + t.
struct RigidTransform
{
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
    Points3d apply(const Points3d& p) const { return (rotation * p).colwise() + translation; }
};

/// Least-squares rigid transform taking `source` onto `target` (no scaling, det R = +1).
RigidTransform umeyama_align(const Points3d& source, const Points3d& target);

enum class RegistrationMode { shape_only, shape_and_albedo };

struct RegistrationConfig
{
    RegistrationMode mode = RegistrationMode::shape_and_albedo;
    double shape_weight = 200.0;   ///< per mm of symmetric chamfer distance
    double albedo_weight = 2.0e4;  ///< per unit of summed per-view pixel MSE
    int steps = 4000;
    std::uint64_t seed = 0;
    /// Rendering views for the albedo term; empty means canonical_views().
    std::vector<SceneParams> views;
    bool fit_pose = true;
    /// Steps between greedy closest-point Gauss-Newton updates of pose and shape; 0 disables them.
    int refine_interval = 250;
    int refine_iterations = 3;
    int final_refine_iterations = 20;
    double start_angle = 0.07; ///< rad; offsets of the extra refined starts
    /// mm; schedule of the soft-correspondence start, empty to skip it.
    std::vector<double> soft_bandwidths{16.0, 11.0, 8.0, 5.6, 4.0, 2.8, 2.0, 1.4, 1.0};
    std::optional<Index> shape_components;
    std::optional<Index> albedo_components;

    DriftScales rotation{0.02, 0.005, 0.001}; ///< rad
    DriftScales translation{2.0, 0.5, 0.1};  ///< mm
    DriftScales shape{0.2, 0.05, 0.01};
    DriftScales albedo{0.2, 0.05, 0.01};
    std::array<double, 3> scale_probabilities{0.2, 0.3, 0.5};
    /// Chance that a coefficient proposal moves a single random coefficient instead of all of them.
    double single_coefficient_probability = 0.5;

    void validate() const;
    nlohmann::json to_json() const;
};

/// Frontal and +-45 degree yaw views under ambient light.
std::vector<SceneParams> canonical_views(int width = 64, int height = 64, double distance = 600.0);

struct RegistrationResult
{
    Mesh registered; ///< model topology, in the target's frame
    LatentCode code;
    RigidTransform pose; ///< applied to the model instance
    double chamfer = 0.0;   ///< symmetric, final state
    double albedo_mse = 0.0;
    double log_posterior = 0.0;
    nlohmann::json diagnostics = nlohmann::json::object();
};

RegistrationResult register_mesh(const MorphableModel& model, const Mesh& target, const RegistrationConfig& config);

struct AlbedoTransfer
{
    Mesh mesh;
    std::vector<int> missed; ///< vertices whose rays hit nothing; they keep their albedo
};

/**
 * Sets each vertex's albedo from the closest scan surface point hit by a line
 * along its normal, within `max_distance` mm either way.
 */
AlbedoTransfer transfer_albedo(const Mesh& registered, const Mesh& scan, double max_distance = 20.0);

/**
 * PCA model of meshes in shared topology, through the dataset Gram matrix.
 * Eigenvalues are sample variances (normalized by N - 1) so coefficients of
 * the training meshes have unit variance.
 */
MorphableModel build_pca_model(const std::vector<Mesh>& meshes);

} // namespace gpmm

#endif // GPMM_REGISTRATION_HPP
