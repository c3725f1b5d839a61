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

#ifndef GPMM_KERNELS_HPP
#define GPMM_KERNELS_HPP

#include "gpmm/mesh.hpp"

#include "json.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gpmm {

/// Which per-vertex quantity a radial basis term measures distance in.
enum class Metric { xyz, rgb };

/// amplitude * exp(-d^2 / scale^2)
struct RbfTerm
{
    double amplitude = 1.0;
    double scale = 1.0;
    Metric metric = Metric::xyz;
};

/**
 * Sum of radial basis function kernels. Each term measures distance either
 * between template positions (mm) or between template albedos (RGB units).
 */
struct ScalarKernelSpec
{
    std::vector<RbfTerm> terms;

    void validate() const;
    double sum_of_amplitudes() const;
};

/// Mirrored-argument term: weight * (Phi_m or I) * channel * k(x, Phi_m y).
struct Symmetrization
{
    MirrorTransform mirror;
    double weight = 0.7;
    /// Negate the mirrored axis of the block (shape kernels) or keep channels as-is (albedo kernels).
    bool negate_mirrored_axis = true;
};

/// One summand of a matrix kernel: weight * channel * base(x, y), optionally symmetrized.
struct MatrixKernelTerm
{
    double weight = 1.0;
    ScalarKernelSpec base;
    Mat3 channel = Mat3::Identity();
    std::optional<Symmetrization> symmetrize;
};

/**
 * Matrix-valued (3x3 block) kernel over mesh vertices, expressed as a positive
 * weighted sum of channel-matrix-times-scalar-kernel terms.
 */
struct MatrixKernelSpec
{
    std::vector<MatrixKernelTerm> terms;

    void validate() const;
    bool needs_mirror() const;
};

/// Returns I3 with x on every off-diagonal entry; PSD for -0.5 <= x <= 1.
Mat3 correlation_matrix(double x);

/**
 * Fixed evaluation domain: the template's positions, albedos and mirrored
 * positions. The RGB metric always uses the template (mean) albedo.
 */
class KernelContext
{
public:
    explicit KernelContext(const Mesh& templ, MirrorTransform mirror = {});

    const Points3d& positions() const { return positions_; }
    const Points3d& colors() const { return colors_; }
    const Points3d& mirrored() const { return mirrored_; }
    Index size() const { return positions_.cols(); }

private:
    Points3d positions_;
    Points3d colors_;
    Points3d mirrored_;
};

double eval_scalar(const ScalarKernelSpec& spec, const KernelContext& ctx, Index i, Index j);
/// Scalar kernel between vertex i and the mirror image of vertex j.
double eval_scalar_mirrored(const ScalarKernelSpec& spec, const KernelContext& ctx, Index i, Index j);

Mat3 eval_matrix(const MatrixKernelSpec& spec, const KernelContext& ctx, Index i, Index j);

/// Dense 3n x 3n Gram matrix over the given vertices (test-scale subsets only).
MatrixX gram_matrix(const MatrixKernelSpec& spec, const KernelContext& ctx, std::span<const Index> indices);
/// 3|rows| x 3|cols| cross-covariance block.
MatrixX cross_gram(const MatrixKernelSpec& spec, const KernelContext& ctx, std::span<const Index> rows,
                   std::span<const Index> cols);

/// Default hyperparameters of the face kernels.
struct KernelHyperparameters
{
    double a_s = 7.0, b_s = 5.0, c_s = 3.0;
    double A_s = 100.0, B_s = 50.0, C_s = 10.0;
    double a_a = 0.02, b_a = 0.01, c_a = 0.01;
    double A_a = 500.0, B_a = 20.0, C_a = 2.0;
    double d = 0.015, D = 0.15;
    double alpha = 0.7;
    double beta = 0.9375;
    double gamma = 0.95;
    Axis mirror_axis = Axis::x;
    /// Symmetric XYZ albedo term uses the colour-correlated M_beta channel matrix;
    /// false gives the uncorrelated I3 variant.
    bool xyz_symmetric_correlated = true;

    /// Apply `key=value`; throws a usage error on unknown keys.
    void set(const std::string& key, const std::string& value);
    nlohmann::json to_json() const;
};

/// Shape and albedo kernels of a named model.
struct KernelRecipe
{
    std::string name;
    MatrixKernelSpec shape;
    MatrixKernelSpec albedo;
    KernelHyperparameters hyper;
};

const std::vector<std::string>& recipe_names();
KernelRecipe recipe(const std::string& name, const KernelHyperparameters& hyper = {});

/// Individual named kernels (K_s, K_s^sym, K_a, ...), exposed for tests and custom recipes.
namespace face_kernels {
ScalarKernelSpec shape_scalar(const KernelHyperparameters& h);
ScalarKernelSpec albedo_xyz_scalar(const KernelHyperparameters& h);
ScalarKernelSpec albedo_rgb_scalar(const KernelHyperparameters& h);
MatrixKernelSpec shape(const KernelHyperparameters& h);
MatrixKernelSpec shape_symmetric(const KernelHyperparameters& h);
MatrixKernelSpec albedo_xyz(const KernelHyperparameters& h);
MatrixKernelSpec albedo_rgb(const KernelHyperparameters& h);
MatrixKernelSpec albedo_full(const KernelHyperparameters& h);
MatrixKernelSpec albedo_xyz_correlated(const KernelHyperparameters& h);
MatrixKernelSpec albedo_rgb_correlated(const KernelHyperparameters& h);
MatrixKernelSpec albedo_xyz_symmetric(const KernelHyperparameters& h);
MatrixKernelSpec albedo_symmetric(const KernelHyperparameters& h);
MatrixKernelSpec albedo_correlated(const KernelHyperparameters& h);
} // namespace face_kernels

/// Weighted sum of two kernels (concatenated, rescaled terms).
MatrixKernelSpec combine(double wa, const MatrixKernelSpec& a, double wb, const MatrixKernelSpec& b);

nlohmann::json to_json(const MatrixKernelSpec& spec);
MatrixKernelSpec matrix_kernel_from_json(const nlohmann::json& j);
nlohmann::json to_json(const KernelRecipe& recipe);
KernelRecipe recipe_from_json(const nlohmann::json& j);

} // namespace gpmm

#endif // GPMM_KERNELS_HPP
