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

#ifndef GPMM_KDE_HPP
#define GPMM_KDE_HPP

#include "gpmm/lowrank.hpp"

#include <string>
#include <vector>

namespace gpmm {

/// Weighted mixture of independent models; components may differ in topology.
struct MixtureModel
{
    std::vector<MorphableModel> components;
    std::vector<double> weights;

    Index size() const { return static_cast<Index>(components.size()); }
    void validate() const;
};

/// One GP model per template, uniform weights.
MixtureModel build_mixture(const std::vector<Mesh>& templates, const KernelRecipe& recipe,
                           const NystromConfig& shape_config, const NystromConfig& albedo_config);

struct MixtureSample
{
    Index component = 0;
    LatentCode code;
    Mesh mesh;
};

/// Picks a component by weight, then draws from it with the same seed the component's own sampler uses.
MixtureSample sample_mixture(const MixtureModel& mixture, std::uint64_t seed);

struct MixtureRecognition
{
    Index identity = 0;
    Index component = 0;
    double similarity = 0.0;
    /// No gallery entry has positive similarity to the probe.
    bool low_confidence = false;
    /// similarity[identity][component]
    std::vector<std::vector<double>> table;
};

/**
 * Identity whose fit under some component has the largest cosine similarity
 * to the probe's fit under the same component. probe[c] is the probe fit
 * under component c; gallery[i][c] the fit of identity i under component c.
 */
MixtureRecognition recognize_mixture(const std::vector<LatentCode>& probe,
                                     const std::vector<std::vector<LatentCode>>& gallery);

/// Manifest {"components": [{"model": path, "weight": w}, ...]}; paths relative to the manifest.
void save_mixture(const MixtureModel& mixture, const std::string& manifest_path);
MixtureModel load_mixture(const std::string& manifest_path);

} // namespace gpmm

#endif // GPMM_KDE_HPP
