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

#ifndef GPMM_METRICS_HPP
#define GPMM_METRICS_HPP

#include "gpmm/lowrank.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gpmm {

enum class QualityMetric { specificity, generalization, compactness };
enum class Channel { shape, albedo };

std::string metric_name(QualityMetric m);
std::string channel_name(Channel c);

/**
 * Metric value per number of leading model components. Shape values are in
 * mm, albedo values in RGB units, compactness is a fraction.
 */
struct MetricCurve
{
    std::vector<Index> component_counts;
    std::vector<double> values;
    QualityMetric metric = QualityMetric::compactness;
    Channel channel = Channel::shape;

    void validate() const;
};

/// 0, 1, ..., rank of the channel.
std::vector<Index> all_counts(const MorphableModel& model, Channel channel);

/// Mean over the dataset of the per-vertex mean reconstruction error with k components.
MetricCurve generalization(const MorphableModel& model, const std::vector<Mesh>& dataset,
                           const std::vector<Index>& counts, Channel channel);

/**
 * Mean over `samples` model samples of the distance to the closest dataset
 * mesh. The same random coefficients are reused for every k, truncated to
 * their first k entries.
 */
MetricCurve specificity(const MorphableModel& model, const std::vector<Mesh>& dataset,
                        const std::vector<Index>& counts, Index samples, std::uint64_t seed, Channel channel);

/// Cumulative eigenvalue fraction.
MetricCurve compactness(const MorphableModel& model, const std::vector<Index>& counts, Channel channel);

/// count,value rows preceded by a comment naming the metric and distance.
std::string curve_to_csv(const MetricCurve& curve);
/// Small line plot of several curves on one axis.
std::string curves_to_svg(const std::vector<MetricCurve>& curves, const std::string& title);

/// Shape errors of a fitted or registered mesh against a scan.
struct SurfaceErrors
{
    double chamfer = 0.0;   ///< mean nearest-neighbour distance, fit to scan
    double hausdorff = 0.0; ///< largest nearest-neighbour distance, fit to scan
    std::optional<double> vertex;   ///< mean corresponding-vertex distance when topologies agree
    std::optional<double> landmark; ///< mean distance over landmark vertices when topologies agree
};

SurfaceErrors surface_errors(const Mesh& fit, const Mesh& scan, const std::vector<Landmark3D>& landmarks = {});

} // namespace gpmm

#endif // GPMM_METRICS_HPP
