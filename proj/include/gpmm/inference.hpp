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

#ifndef GPMM_INFERENCE_HPP
#define GPMM_INFERENCE_HPP

#include "gpmm/lowrank.hpp"
#include "gpmm/render.hpp"

#include "json.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace gpmm {

/// Gaussian drift standard deviations at coarse, intermediate and fine scale.
using DriftScales = std::array<double, 3>;

struct ProposalConfig
{
    DriftScales rotation{0.1, 0.03, 0.01};     ///< rad, yaw/pitch/roll together
    DriftScales translation{30.0, 10.0, 3.0};  ///< mm, in-plane x/y
    DriftScales distance{0.05, 0.015, 0.005};  ///< log of the camera distance
    DriftScales shape{0.2, 0.05, 0.01};        ///< standard-normal units
    DriftScales albedo{0.2, 0.05, 0.01};
    DriftScales illumination{0.1, 0.03, 0.01};
    std::array<double, 3> scale_probabilities{0.2, 0.3, 0.5};
    /// Chance that a multi-dimensional block moves one random coordinate instead of all of them.
    double single_coordinate_probability = 0.5;

    void validate() const;
};

/// Weak priors keeping pose and light near plausible values.
struct ScenePriorConfig
{
    double rotation_std = degrees_to_radians(30.0); ///< about zero
    double translation_std = 100.0;                 ///< mm, about the initial x/y
    double log_distance_std = 0.3;                  ///< about the initial distance
    double illumination_std = 2.0;                  ///< about ambient_illumination()
};

struct FitConfig
{
    int illumination_steps = 1000; ///< phase 1
    int full_steps = 10000;        ///< phase 2
    double foreground_sigma = 0.043;
    /// Overrides the per-observation landmark sigma when set.
    std::optional<double> landmark_sigma;
    int background_bins = 16;
    /// Closed-form light re-estimation period during phase 2; 0 disables it.
    int illumination_interval = 500;
    int max_empty_proposals = 1000;
    /// Greedy Gauss-Newton jumps over pose, coefficients and light alongside each closed-form light estimate.
    bool local_refinement = true;
    int local_iterations = 3;  ///< Gauss-Newton jumps per refresh
    int final_iterations = 20; ///< Gauss-Newton jumps polishing the best state
    /// Nelder-Mead evaluations spent aligning the initial pose to the landmarks; 0 disables it.
    int landmark_alignment_evaluations = 600;
    /// Likelihood temperature at the start of phase 2, lowered geometrically to 1.
    double initial_temperature = 1.0;
    double anneal_fraction = 0.5; ///< share of phase 2 spent cooling
    /// Share of phase 2 during which the shape code is frozen.
    double pose_warmup_fraction = 0.3;
    /// Leading components left free; the rest stay at zero.
    std::optional<Index> shape_components;
    std::optional<Index> albedo_components;
    std::uint64_t seed = 0;
    ProposalConfig proposals;
    ScenePriorConfig priors;

    void validate() const;
    nlohmann::json to_json() const;
};

struct ChainState
{
    SceneParams scene;
    LatentCode code;
    double log_posterior = 0.0;
    int iteration = 0;
};

enum class Block { rotation, translation, distance, shape, albedo, illumination };
constexpr int block_count = 6;
std::string block_name(Block b);

struct FitTrace
{
    std::array<int, block_count> proposed{};
    std::array<int, block_count> accepted{};
    int empty_proposals = 0;
    int illumination_estimates = 0;
    int illumination_estimates_accepted = 0;
    int local_steps = 0;
    int local_steps_accepted = 0;
    bool landmark_aligned = false;
    double initial_log_posterior = 0.0;
    int best_iteration = 0;
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
};

struct FitResult
{
    ChainState best;        ///< maximum posterior state seen
    ChainState phase1_end;  ///< best state when the illumination-only phase ended
    FitTrace trace;
};

/// MH acceptance for a log posterior ratio and a uniform draw in [0, 1).
inline bool metropolis_accept(double log_ratio, double uniform)
{
    return log_ratio >= 0.0 || std::log(uniform) < log_ratio;
}

/**
 * Sum over 2D observations of an isotropic Gaussian log density around the
 * projected landmark vertex. Landmarks behind the camera add a fixed -1e6.
 */
double landmark_log_likelihood(const SceneParams& scene, const MorphableModel& model, const LatentCode& code,
                               const LandmarkSet& landmarks, std::optional<double> sigma_override = std::nullopt);
double landmark_log_likelihood(const SceneParams& scene, const Points3d& vertices, const LandmarkSet& landmarks,
                               std::optional<double> sigma_override = std::nullopt);

constexpr double landmark_behind_camera_penalty = -1e6;

/// Log density of the pose and illumination priors (up to a constant).
double scene_log_prior(const SceneParams& scene, const SceneParams& init, const ScenePriorConfig& priors);

struct IlluminationEstimate
{
    ShCoefficients coefficients = ShCoefficients::Zero();
    std::vector<std::string> warnings;
};

/// Per-channel linear least squares for the SH coefficients over visible pixels.
IlluminationEstimate estimate_illumination(const SceneParams& scene, const MorphableModel& model,
                                           const LatentCode& code, const ImageRGB& observed);
/// Same from a precomputed visibility buffer.
IlluminationEstimate estimate_illumination(const RenderOutput& geometry, const Triangles& triangles,
                                           const Points3d& albedo, const Points3d& normals, const Mat3& rotation,
                                           const ImageRGB& observed);

/// Full unnormalized log posterior of a state.
double log_posterior(const MorphableModel& model, const ImageRGB& image, const LandmarkSet* landmarks,
                     const SceneParams& scene, const LatentCode& code, const SceneParams& init,
                     const FitConfig& config);

/**
 * Two-phase Metropolis-Hastings fit: illumination-only steps, then steps over
 * every block. Deterministic for a seed.
 */
FitResult fit_image(const MorphableModel& model, const ImageRGB& image, const LandmarkSet* landmarks,
                    const SceneParams& init, const FitConfig& config);
/// Same, starting from a given latent code instead of the mean.
FitResult fit_image(const MorphableModel& model, const ImageRGB& image, const LandmarkSet* landmarks,
                    const SceneParams& init, const LatentCode& init_code, const FitConfig& config);

/**
 * Rigid pose from 2D landmarks: a coarse yaw/pitch/roll grid, each with a
 * linear least-squares translation, scored by reprojection error.
 */
Pose pose_from_landmarks(const Mesh& mesh, const LandmarkSet& landmarks, const Camera& camera);

/// Yaw grid search (-45..45 degrees in 15 degree steps) scored by the image likelihood.
SceneParams search_yaw(const MorphableModel& model, const ImageRGB& image, const SceneParams& init,
                       const FitConfig& config);

/// Camera used for images that come without a scene.
struct InitConfig
{
    double focal_per_height = 0.5 * 600.0 / 200.0; ///< focal length over image height
    double distance = 600.0;                       ///< mm
};

/**
 * Starting scene for an image: pose from landmarks when at least three are
 * given, otherwise a yaw search. `source` receives "landmarks" or "yaw-search".
 */
SceneParams initial_scene(const MorphableModel& model, const ImageRGB& image, const LandmarkSet* landmarks,
                          const InitConfig& init, const FitConfig& config, std::string* source = nullptr);

struct RecognitionResult
{
    std::string identity;
    Index index = 0;
    double similarity = 0.0;
    std::vector<double> similarities; ///< per gallery entry
};

/// Largest cosine similarity of joint latents; ties go to the earliest gallery entry.
RecognitionResult recognize(const LatentCode& probe, const std::vector<std::pair<std::string, LatentCode>>& gallery);

/// Fit passes when silhouette IoU >= r1.
bool quality_check_silhouette(const RenderOutput& fit, const RenderOutput& reference, double r1);

nlohmann::json code_to_json(const LatentCode& code);
LatentCode code_from_json(const nlohmann::json& j);
nlohmann::json fit_to_json(const FitResult& fit);
/// Reads the "scene" and "code" of a fit document.
ChainState state_from_fit_json(const nlohmann::json& j);

} // namespace gpmm

#endif // GPMM_INFERENCE_HPP
