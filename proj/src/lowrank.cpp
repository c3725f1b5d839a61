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
#include "gpmm/lowrank.hpp"

#include "Eigen/Eigenvalues"
#include "Eigen/QR"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gpmm {

VectorX LowRankBasis::deformation(const VectorX& coefficients) const
{
    const Index k = coefficients.size();
    if (k > rank())
        throw data_error("coefficient count " + std::to_string(k) + " exceeds basis rank " + std::to_string(rank()));
    if (k == 0)
        return VectorX::Zero(components.rows());
    return components.leftCols(k) * (eigenvalues.head(k).cwiseSqrt().cwiseProduct(coefficients));
}

VectorX LatentCode::joint() const
{
    VectorX j(shape.size() + albedo.size());
    j << shape, albedo;
    return j;
}

LatentCode LatentCode::zeros(Index shape_rank, Index albedo_rank)
{
    return {VectorX::Zero(shape_rank), VectorX::Zero(albedo_rank)};
}

void MorphableModel::validate() const
{
    mean.validate();
    const Index n = mean.num_vertices();
    if (shape.components.rows() != 3 * n || albedo.components.rows() != 3 * n)
        throw data_error("model: basis domain size does not match mean vertex count");
    if (shape.components.cols() != shape.rank() || albedo.components.cols() != albedo.rank())
        throw data_error("model: basis column count does not match eigenvalue count");
}

std::vector<Index> farthest_point_sample(const Points3d& points, Index count, std::uint64_t seed)
{
    const Index n = points.cols();
    count = std::min(count, n);
    std::vector<Index> chosen;
    if (count <= 0)
        return chosen;
    chosen.reserve(count);
    Rng rng(substream_seed(seed, "farthest-point"));
    Index next = static_cast<Index>(rng() % static_cast<std::uint64_t>(n));
    VectorX dist = VectorX::Constant(n, std::numeric_limits<double>::infinity());
    for (Index k = 0; k < count; ++k) {
        chosen.push_back(next);
        dist = dist.cwiseMin((points.colwise() - points.col(next)).colwise().squaredNorm().transpose());
        dist.maxCoeff(&next); // first maximal index on ties
    }
    return chosen;
}

namespace {

/// Eigenpairs sorted by descending eigenvalue.
void sorted_eigen(const MatrixX& symmetric, VectorX& values, MatrixX& vectors)
{
    Eigen::SelfAdjointEigenSolver<MatrixX> es(symmetric);
    if (es.info() != Eigen::Success)
        throw numerical_error("eigendecomposition failed to converge");
    values = es.eigenvalues().reverse();
    vectors = es.eigenvectors().rowwise().reverse();
}

/// Fixes column signs so the largest-magnitude entry of each column is positive.
void canonical_signs(MatrixX& columns)
{
    for (Index k = 0; k < columns.cols(); ++k) {
        Index i = 0;
        columns.col(k).cwiseAbs().maxCoeff(&i);
        if (columns(i, k) < 0.0)
            columns.col(k) *= -1.0;
    }
}

} // namespace

LowRankBasis nystrom_decompose(const MatrixKernelSpec& kernel, const Mesh& templ, const NystromConfig& config)
{
    kernel.validate();
    templ.validate();
    const Index n = templ.num_vertices();
    const Index m = std::min(config.landmarks, n);
    if (m <= 0 || config.rank <= 0)
        throw usage_error("nystrom: landmark count and rank must be positive");
    if (3 * m < config.rank)
        throw usage_error("nystrom: rank " + std::to_string(config.rank) + " exceeds 3 x landmark count " +
                          std::to_string(3 * m));

    MirrorTransform mirror;
    for (const auto& t : kernel.terms)
        if (t.symmetrize)
            mirror = t.symmetrize->mirror;
    const KernelContext ctx(templ, mirror);

    // landmarks in ascending order so that m = n reproduces the vertex order
    std::vector<Index> landmarks = m == n ? std::vector<Index>(n) : farthest_point_sample(templ.vertices, m, config.seed);
    if (m == n)
        std::iota(landmarks.begin(), landmarks.end(), Index(0));
    std::sort(landmarks.begin(), landmarks.end());

    VectorX lm_values;
    MatrixX lm_vectors;
    sorted_eigen(gram_matrix(kernel, ctx, landmarks), lm_values, lm_vectors);

    LowRankBasis basis;
    basis.requested_rank = config.rank;
    const double lambda_max = lm_values(0);
    if (!(lambda_max > 0.0))
        throw numerical_error("nystrom: landmark Gram matrix has no positive eigenvalue");
    Index keep = 0;
    while (keep < std::min<Index>(config.rank, lm_values.size()) && lm_values(keep) > config.relative_tolerance * lambda_max)
        ++keep;

    // phi = K(x, landmarks) U diag(1/lambda), evaluated blockwise over the vertices
    const MatrixX extension = lm_vectors.leftCols(keep) * lm_values.head(keep).cwiseInverse().asDiagonal();
    MatrixX phi(3 * n, keep);
    for (Index start = 0; start < n; start += config.block_size) {
        const Index count = std::min(config.block_size, n - start);
        std::vector<Index> rows(count);
        std::iota(rows.begin(), rows.end(), start);
        phi.middleRows(3 * start, 3 * count) = cross_gram(kernel, ctx, rows, landmarks) * extension;
    }

    // Nystrom approximation K ~ phi diag(lambda) phi^T, re-diagonalized on an orthonormal basis
    Eigen::HouseholderQR<MatrixX> qr(phi);
    const MatrixX q = qr.householderQ() * MatrixX::Identity(3 * n, keep);
    const MatrixX r = qr.matrixQR().topRows(keep).triangularView<Eigen::Upper>();
    const MatrixX core = r * lm_values.head(keep).asDiagonal() * r.transpose();
    VectorX values;
    MatrixX vectors;
    sorted_eigen(0.5 * (core + core.transpose()), values, vectors);

    Index final_rank = 0;
    while (final_rank < values.size() && values(final_rank) > config.relative_tolerance * values(0))
        ++final_rank;
    basis.components = q * vectors.leftCols(final_rank);
    canonical_signs(basis.components);
    basis.eigenvalues = values.head(final_rank);
    if (basis.truncated())
        basis.warnings.push_back("rank truncated from " + std::to_string(config.rank) + " to " +
                                 std::to_string(final_rank) + ": remaining eigenvalues are numerically zero");
    return basis;
}

MorphableModel build_gp_model(const Mesh& templ, const KernelRecipe& recipe, const NystromConfig& shape_config,
                              const NystromConfig& albedo_config)
{
    MorphableModel model;
    model.mean = templ;
    model.shape = nystrom_decompose(recipe.shape, templ, shape_config);
    model.albedo = nystrom_decompose(recipe.albedo, templ, albedo_config);
    auto cfg_json = [](const NystromConfig& c) {
        return nlohmann::json{{"landmarks", c.landmarks}, {"rank", c.rank}, {"seed", c.seed},
                              {"landmark_selection", "farthest-point"}, {"relative_tolerance", c.relative_tolerance}};
    };
    nlohmann::json warnings = nlohmann::json::array();
    for (const auto& w : model.shape.warnings)
        warnings.push_back("shape: " + w);
    for (const auto& w : model.albedo.warnings)
        warnings.push_back("albedo: " + w);
    model.provenance = {{"kind", "gp"},
                        {"kernel", to_json(recipe)},
                        {"nystrom", {{"shape", cfg_json(shape_config)}, {"albedo", cfg_json(albedo_config)}}},
                        {"warnings", warnings}};
    return model;
}

Mesh instance(const MorphableModel& model, const LatentCode& code, const InstanceOptions& options)
{
    Mesh out = model.mean;
    const VectorX ds = model.shape.deformation(code.shape);
    const VectorX da = model.albedo.deformation(code.albedo);
    out.vertices += Eigen::Map<const Points3d>(ds.data(), 3, out.num_vertices());
    out.albedo += Eigen::Map<const Points3d>(da.data(), 3, out.num_vertices());
    if (options.clamp_albedo)
        out.albedo = out.albedo.cwiseMax(0.0).cwiseMin(1.0);
    return out;
}

LatentCode sample_code(const MorphableModel& model, Rng& rng)
{
    NormalSampler normal;
    LatentCode code = LatentCode::zeros(model.shape.rank(), model.albedo.rank());
    for (Index k = 0; k < code.shape.size(); ++k)
        code.shape(k) = normal(rng);
    for (Index k = 0; k < code.albedo.size(); ++k)
        code.albedo(k) = normal(rng);
    return code;
}

Sample sample(const MorphableModel& model, std::uint64_t seed)
{
    Rng rng(substream_seed(seed, "sample"));
    Sample s;
    s.code = sample_code(model, rng);
    s.mesh = instance(model, s.code);
    return s;
}

namespace {

VectorX project_channel(const LowRankBasis& basis, const VectorX& residual, Index components)
{
    VectorX c = VectorX::Zero(components);
    if (components > 0)
        c = (basis.components.leftCols(components).transpose() * residual).cwiseQuotient(
            basis.eigenvalues.head(components).cwiseSqrt());
    return c;
}

} // namespace

Projection project(const MorphableModel& model, const Mesh& mesh, std::optional<Index> shape_components,
                   std::optional<Index> albedo_components)
{
    if (mesh.num_vertices() != model.mean.num_vertices())
        throw data_error("project: topology mismatch (" + std::to_string(mesh.num_vertices()) + " vs " +
                         std::to_string(model.mean.num_vertices()) + " vertices)");
    const Index ks = std::clamp<Index>(shape_components.value_or(model.shape.rank()), 0, model.shape.rank());
    const Index ka = std::clamp<Index>(albedo_components.value_or(model.albedo.rank()), 0, model.albedo.rank());
    const Index n = mesh.num_vertices();

    Points3d ds = mesh.vertices - model.mean.vertices;
    Points3d da = mesh.albedo - model.mean.albedo;
    const Eigen::Map<const VectorX> ds_flat(ds.data(), 3 * n);
    const Eigen::Map<const VectorX> da_flat(da.data(), 3 * n);

    Projection p;
    p.code.shape = project_channel(model.shape, ds_flat, ks);
    p.code.albedo = project_channel(model.albedo, da_flat, ka);
    const VectorX rs = ds_flat - model.shape.deformation(p.code.shape);
    const VectorX ra = da_flat - model.albedo.deformation(p.code.albedo);
    p.shape_residual = Eigen::Map<const Points3d>(rs.data(), 3, n).colwise().norm().mean();
    p.albedo_residual = Eigen::Map<const Points3d>(ra.data(), 3, n).colwise().norm().mean();
    return p;
}

double log_prior(const LatentCode& code)
{
    const double log_norm = 0.5 * std::log(2.0 * pi);
    const Index count = code.shape.size() + code.albedo.size();
    return -0.5 * (code.shape.squaredNorm() + code.albedo.squaredNorm()) - log_norm * double(count);
}

double cosine_similarity(const VectorX& a, const VectorX& b)
{
    if (a.size() != b.size())
        throw data_error("cosine similarity: dimension mismatch");
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0)
        return 0.0;
    return a.dot(b) / (na * nb);
}

} // namespace gpmm
