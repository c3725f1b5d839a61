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

#ifndef GPMM_LOWRANK_HPP
#define GPMM_LOWRANK_HPP

#include "gpmm/kernels.hpp"
#include "gpmm/mesh.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gpmm {

/**
 * Orthonormal basis of vector fields over the n mesh vertices together with the
 * variance of each direction. Column k is a 3n vector laid out vertex-major
 * (x0, y0, z0, x1, ...), matching the memory layout of Points3d.
 */
struct LowRankBasis
{
    MatrixX components;  ///< 3n x r, orthonormal columns
    VectorX eigenvalues; ///< r, descending, positive
    Index requested_rank = 0;
    std::vector<std::string> warnings;

    Index rank() const { return eigenvalues.size(); }
    Index domain_size() const { return components.rows() / 3; }
    bool truncated() const { return rank() < requested_rank; }

    /// components * diag(sqrt(eigenvalues)) applied to the leading coefficients.
    VectorX deformation(const VectorX& coefficients) const;
};

/// Shape and albedo coefficients in standard-normal units.
struct LatentCode
{
    VectorX shape;
    VectorX albedo;

    /// shape || albedo
    VectorX joint() const;
    static LatentCode zeros(Index shape_rank, Index albedo_rank);
};

/**
 * Mean mesh plus shape and albedo bases. Provenance records how the model was
 * made: {"kind": "gp" | "pca" | "kde-component", ...}.
 */
struct MorphableModel
{
    Mesh mean;
    LowRankBasis shape;
    LowRankBasis albedo;
    nlohmann::json provenance = nlohmann::json::object();

    void validate() const;
};

struct NystromConfig
{
    Index landmarks = 1000;
    Index rank = 200;
    std::uint64_t seed = 0;
    /// Eigenvalues below this fraction of the largest are treated as numerically zero.
    double relative_tolerance = 1e-10;
    /// Vertices processed per block when extending to the whole mesh.
    Index block_size = 256;
};

/// Farthest-point sampling starting from a seed-selected vertex.
std::vector<Index> farthest_point_sample(const Points3d& points, Index count, std::uint64_t seed);

/**
 * Low-rank Mercer decomposition of a matrix kernel on the template via the
 * Nystrom method: eigenpairs of the landmark Gram matrix are extended to every
 * vertex and the resulting rank-r approximation is re-diagonalized on an
 * orthonormal (thin-QR) basis.
 */
LowRankBasis nystrom_decompose(const MatrixKernelSpec& kernel, const Mesh& templ, const NystromConfig& config);

/// Builds a GP morphable model of a template for a named recipe.
MorphableModel build_gp_model(const Mesh& templ, const KernelRecipe& recipe, const NystromConfig& shape_config,
                              const NystromConfig& albedo_config);

struct InstanceOptions
{
    bool clamp_albedo = true;
};

/// mean + sum_k c_k sqrt(lambda_k) phi_k for shape and albedo; albedo clamped to [0,1].
Mesh instance(const MorphableModel& model, const LatentCode& code, const InstanceOptions& options = {});

/// i.i.d. standard-normal coefficients over the full ranks.
LatentCode sample_code(const MorphableModel& model, Rng& rng);

struct Sample
{
    LatentCode code;
    Mesh mesh;
};

Sample sample(const MorphableModel& model, std::uint64_t seed);

struct Projection
{
    LatentCode code;
    double shape_residual = 0.0;  ///< mean per-vertex distance, mm
    double albedo_residual = 0.0; ///< mean per-vertex distance, RGB units
};

/**
 * Least-squares coefficients of a mesh in model topology; optional limits keep
 * only the leading components.
 */
Projection project(const MorphableModel& model, const Mesh& mesh, std::optional<Index> shape_components = std::nullopt,
                   std::optional<Index> albedo_components = std::nullopt);

/// Standard-normal log density summed over every coefficient.
double log_prior(const LatentCode& code);

/// Cosine similarity; 0 when either vector is zero.
double cosine_similarity(const VectorX& a, const VectorX& b);

} // namespace gpmm

#endif // GPMM_LOWRANK_HPP
