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

#ifndef GPMM_LEARN_HPP
#define GPMM_LEARN_HPP

#include "gpmm/inference.hpp"
#include "gpmm/lowrank.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gpmm {

struct TrainingImage
{
    std::string name;
    ImageRGB image;
    std::optional<LandmarkSet> landmarks; ///< 2D observations plus their vertex ids
    std::optional<SceneParams> init;      ///< known pose/camera/light, if any
};

/// What the fitted model albedo is compared against in the albedo-drift check.
enum class DriftReference {
    refinement,    ///< per-vertex albedo re-estimated from the image under the fitted shape and light
    phase_boundary ///< the model albedo at the end of the illumination-only phase
};

struct LearnConfig
{
    int iterations = 1;
    double r1 = 0.625; ///< silhouette IoU threshold
    double r2 = 8.0;   ///< albedo-drift threshold at iteration 0, 8-bit RGB units
    double r3 = 0.5;   ///< drift threshold decrement per iteration
    double spike_threshold = 10.0; ///< mm
    DriftReference drift_reference = DriftReference::refinement;
    /// Focal length used when an image has no initial scene, as a multiple of its height.
    double focal_per_height = 0.5 * 600.0 / 200.0;
    double distance = 600.0; ///< mm, default camera distance
    FitConfig fit;
    std::uint64_t seed = 0;

    double albedo_threshold(int n) const { return r2 - double(n) * r3; }
    void validate() const;
    nlohmann::json to_json() const;
};

struct ImageDiagnostics
{
    std::string name;
    std::string init_source; ///< "scene", "landmarks" or "yaw-search"
    double log_posterior = 0.0;
    double silhouette_iou = 0.0;
    bool passed_silhouette = false;
    double albedo_drift = 0.0; ///< mean per-vertex albedo change, 8-bit RGB units
    bool passed_albedo_drift = false;
    bool used = false;
    std::string error;
};

struct IterationReport
{
    int iteration = 0;
    int attempted = 0;
    int passed_silhouette = 0;
    int passed_albedo_drift = 0;
    int used_for_pca = 0;
    double albedo_threshold = 0.0;
    std::string drift_reference;
    bool success = false;
    std::string message;
    std::string model_path;
    std::vector<ImageDiagnostics> images;

    nlohmann::json to_json() const;
};

struct LearnOutcome
{
    MorphableModel model; ///< rebuilt model, or the input model if the iteration failed
    IterationReport report;
};

/**
 * Fits every image, keeps fits passing the silhouette and albedo-drift checks,
 * denoises and rigidly aligns them, and rebuilds the model with PCA.
 */
LearnOutcome learn_iteration(const MorphableModel& model, const std::vector<TrainingImage>& images,
                             const LearnConfig& config, int iteration);

struct AlbedoRefinement
{
    Points3d albedo;           ///< image-implied albedo; the fitted albedo where not visible
    std::vector<int> visible;  ///< vertices seen away from the silhouette border
};

/**
 * Per-vertex albedo that explains the observed colours under the fitted
 * shape, pose and light: each visible vertex's albedo scaled by the ratio of
 * observed to rendered colour at its pixel.
 */
AlbedoRefinement refine_albedo(const Mesh& fitted, const ImageRGB& image, const SceneParams& scene);

/// Mean per-vertex RGB distance between `albedo` and the refinement over its visible vertices, 8-bit units.
double albedo_drift(const Points3d& albedo, const AlbedoRefinement& refined);

/// Vertices farther than `threshold` from their 1-ring average move onto it (averaging over non-spike neighbours when possible).
Mesh denoise_shape(const Mesh& mesh, double threshold);

/// Horizontal mirror of an image.
ImageRGB flip_image(const ImageRGB& image);
/// "left" <-> "right" inside a landmark name.
std::string swap_left_right(const std::string& name);
/// Originals followed by their left-right mirrored copies.
std::vector<TrainingImage> flip_augment(const std::vector<TrainingImage>& images);

} // namespace gpmm

#endif // GPMM_LEARN_HPP
