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
#include "gpmm/registration.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace gpmm {

RigidTransform umeyama_align(const Points3d& source, const Points3d& target)
{
    if (source.cols() != target.cols())
        throw data_error("umeyama: point sets differ in size (" + std::to_string(source.cols()) + " vs " +
                         std::to_string(target.cols()) + ")");
    if (source.cols() < 3)
        throw data_error("umeyama: need at least 3 point pairs");
    const Vec3 ms = source.rowwise().mean();
    const Vec3 mt = target.rowwise().mean();
    const Points3d cs = source.colwise() - ms;
    const Points3d ct = target.colwise() - mt;
    const Vec3 spread = Eigen::JacobiSVD<MatrixX>(cs).singularValues();
    if (!(spread(0) > 0.0) || spread(1) <= 1e-12 * spread(0))
        throw numerical_error("umeyama: degenerate (collinear or coincident) source points");

    const Mat3 cov = ct * cs.transpose() / double(source.cols());
    const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 s = Mat3::Identity();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0)
        s(2, 2) = -1.0;
    RigidTransform out;
    out.rotation = svd.matrixU() * s * svd.matrixV().transpose();
    out.translation = mt - out.rotation * ms;
    return out;
}

void RegistrationConfig::validate() const
{
    if (steps < 0)
        throw usage_error("registration steps must be non-negative");
    if (refine_interval < 0 || refine_iterations < 0 || final_refine_iterations < 0)
        throw usage_error("registration refinement counts must be non-negative");
    for (double b : soft_bandwidths)
        if (!(b > 0.0))
            throw usage_error("soft-correspondence bandwidths must be positive");
    if (!(shape_weight > 0.0))
        throw usage_error("shape weight must be positive");
    if (mode == RegistrationMode::shape_and_albedo && !(albedo_weight > 0.0))
        throw usage_error("albedo weight must be positive in shape-and-albedo mode");
    for (const DriftScales* d : {&rotation, &translation, &shape, &albedo})
        for (double v : *d)
            if (!(v > 0.0))
                throw usage_error("registration proposal stds must be positive");
    double total = 0.0;
    for (double p : scale_probabilities)
        total += p;
    if (std::abs(total - 1.0) > 1e-9)
        throw usage_error("registration scale probabilities must sum to 1");
    if (single_coefficient_probability < 0.0 || single_coefficient_probability > 1.0)
        throw usage_error("single-coefficient probability must lie in [0, 1]");
}

nlohmann::json RegistrationConfig::to_json() const
{
    auto arr = [](const std::array<double, 3>& s) { return nlohmann::json{s[0], s[1], s[2]}; };
    nlohmann::json views_json = nlohmann::json::array();
    for (const auto& v : views)
        views_json.push_back(gpmm::to_json(v));
    return {{"mode", mode == RegistrationMode::shape_only ? "shape-only" : "shape-and-albedo"},
            {"shape_weight", shape_weight},
            {"albedo_weight", albedo_weight},
            {"steps", steps},
            {"seed", seed},
            {"fit_pose", fit_pose},
            {"refine_interval", refine_interval},
            {"refine_iterations", refine_iterations},
            {"final_refine_iterations", final_refine_iterations},
            {"start_angle", start_angle},
            {"soft_bandwidths", soft_bandwidths},
            {"views", views_json},
            {"rotation", arr(rotation)},
            {"translation", arr(translation)},
            {"shape", arr(shape)},
            {"albedo", arr(albedo)},
            {"scale_probabilities", arr(scale_probabilities)},
            {"single_coefficient_probability", single_coefficient_probability}};
}

std::vector<SceneParams> canonical_views(int width, int height, double distance)
{
    std::vector<SceneParams> views;
    for (double yaw : {0.0, 45.0, -45.0}) {
        SceneParams s;
        s.camera = Camera::centered(width, height, 0.8 * height * distance / 200.0);
        s.pose.yaw = degrees_to_radians(yaw);
        s.pose.translation = Vec3(0.0, 0.0, distance);
        s.illumination = ambient_illumination();
        views.push_back(s);
    }
    return views;
}

namespace {


struct RegState
{
    VectorX shape;
    VectorX albedo;
    Vec3 angles = Vec3::Zero(); ///< yaw, pitch, roll
    Vec3 shift = Vec3::Zero();
    Points3d posed;
    Points3d colors;
    double chamfer = 0.0;
    double mse = 0.0;
    double prior = 0.0;
    double total = 0.0;
};

Mat3 rotation_of(const Vec3& angles)
{
    using Eigen::AngleAxisd;
    return (AngleAxisd(angles(2), Vec3::UnitZ()) * AngleAxisd(angles(1), Vec3::UnitX()) *
            AngleAxisd(angles(0), Vec3::UnitY()))
        .toRotationMatrix();
}

double image_mse(const ImageRGB& a, const ImageRGB& b)
{
    return (a.pixels - b.pixels).squaredNorm() / double(a.pixels.size());
}

} // namespace

RegistrationResult register_mesh(const MorphableModel& model, const Mesh& target, const RegistrationConfig& config)
{
    config.validate();
    model.validate();
    target.validate();
    if (target.num_vertices() == 0)
        throw data_error("registration target is empty");
    const bool use_albedo = config.mode == RegistrationMode::shape_and_albedo;
    const std::vector<SceneParams> views = config.views.empty() ? canonical_views() : config.views;

    std::vector<ImageRGB> target_images;
    if (use_albedo) {
        Index drawn = 0;
        for (const auto& v : views) {
            RenderOutput r = rasterize(target, v);
            drawn += r.silhouette_pixels();
            target_images.push_back(std::move(r.color));
        }
        if (drawn == 0)
            throw data_error("registration: target renders empty in every view");
    }

    const NearestNeighborIndex target_index(target.vertices);
    const Index n = model.mean.num_vertices();
    const Vec3 centre = model.mean.vertices.rowwise().mean();
    const Index free_shape = std::clamp<Index>(config.shape_components.value_or(model.shape.rank()), 0, model.shape.rank());
    const Index free_albedo =
        use_albedo ? std::clamp<Index>(config.albedo_components.value_or(model.albedo.rank()), 0, model.albedo.rank())
                   : 0;

    Mesh work = model.mean;
    auto evaluate = [&](RegState& s, bool geometry, bool colour) {
        if (geometry) {
            const VectorX d = model.shape.deformation(s.shape);
            const Points3d local = (model.mean.vertices + Eigen::Map<const Points3d>(d.data(), 3, n)).colwise() - centre;
            s.posed = (rotation_of(s.angles) * local).colwise() + (centre + s.shift);
            const NearestNeighborIndex own(s.posed);
            s.chamfer = 0.5 * (chamfer_distance(s.posed, target_index) + chamfer_distance(target.vertices, own));
        }
        if (colour) {
            const VectorX d = model.albedo.deformation(s.albedo);
            s.colors = (model.mean.albedo + Eigen::Map<const Points3d>(d.data(), 3, n)).cwiseMax(0.0).cwiseMin(1.0);
        }
        bool drawn = !use_albedo;
        if (use_albedo && (geometry || colour)) {
            work.vertices = s.posed;
            work.albedo = s.colors;
            s.mse = 0.0;
            for (std::size_t v = 0; v < views.size(); ++v) {
                const RenderOutput r = rasterize(work, views[v]);
                drawn = drawn || r.silhouette_pixels() > 0;
                s.mse += image_mse(r.color, target_images[v]);
            }
        } else {
            drawn = true;
        }
        s.prior = log_prior(LatentCode{s.shape, s.albedo});
        s.total = -config.shape_weight * s.chamfer - (use_albedo ? config.albedo_weight * s.mse : 0.0) + s.prior;
        return drawn;
    };

    RegState current;
    current.shape = VectorX::Zero(model.shape.rank());
    current.albedo = VectorX::Zero(model.albedo.rank());
    if (config.fit_pose)
        current.shift = target.vertices.rowwise().mean() - centre;
    evaluate(current, true, true);
    const double initial_chamfer = current.chamfer;
    RegState best = current;
    int refinements = 0, refinements_accepted = 0;

    Rng rng(substream_seed(config.seed, "register"));
    NormalSampler normal;
    auto pick_scale = [&](const DriftScales& s) {
        const double u = NormalSampler::uniform(rng);
        double acc = 0.0;
        for (int k = 0; k < 3; ++k) {
            acc += config.scale_probabilities[k];
            if (u < acc)
                return s[k];
        }
        return s[2];
    };
    auto drift_coefficients = [&](VectorX& c, Index free, const DriftScales& scales) {
        const double sd = pick_scale(scales);
        if (NormalSampler::uniform(rng) < config.single_coefficient_probability) {
            const Index k = std::min<Index>(static_cast<Index>(NormalSampler::uniform(rng) * double(free)), free - 1);
            c(k) += sd * normal(rng);
        } else {
            for (Index k = 0; k < free; ++k)
                c(k) += sd * normal(rng);
        }
    };

    // Greedy Gauss-Newton step on pose and shape with frozen closest-point pairs. Each
    // distance d enters as d^2 / (2 max(d, floor)), a quadratic bound on the chamfer term.
    const MatrixX shape_jacobian =
        model.shape.components.leftCols(free_shape) *
        model.shape.eigenvalues.head(free_shape).cwiseMax(0.0).cwiseSqrt().asDiagonal();
    NormalOptions loose;
    loose.default_normal = Vec3::Zero();
    const Points3d target_normals = target.triangles.cols() > 0 ? vertex_normals(target, loose)
                                                                : Points3d::Zero(3, target.num_vertices());
    const double tangential = 0.1;
    double bandwidth = 0.0; ///< mm; positive while following soft correspondences
    auto refine = [&](Index active) {
        const Index p = 6 + active;
        const Mat3 r = rotation_of(current.angles);
        std::array<Points3d, 3> turned;
        const double h = 1e-6;
        for (int k = 0; k < 3; ++k) {
            Vec3 a = current.angles;
            a(k) += h;
            turned[k] = (rotation_of(a) * r.transpose()) * (current.posed.colwise() - (centre + current.shift));
        }
        const Points3d local = current.posed.colwise() - (centre + current.shift);
        MatrixX hess = MatrixX::Zero(p, p);
        VectorX grad = VectorX::Zero(p);
        Eigen::Matrix<double, 3, Eigen::Dynamic> rows(3, p);
        // Mostly point-to-plane so the surfaces can slide along each other.
        auto jacobian_rows = [&](Index vertex) {
            Eigen::Matrix<double, 3, Eigen::Dynamic> out(3, p);
            for (int k = 0; k < 3; ++k)
                out.col(k) = (turned[k].col(vertex) - local.col(vertex)) / h;
            out.middleCols(3, 3) = Mat3::Identity();
            out.rightCols(active) = r * shape_jacobian.block(3 * vertex, 0, 3, active);
            return out;
        };
        auto add_rows = [&](const Vec3& residual, const Vec3& normal, double weight) {
            const Mat3 metric = normal * normal.transpose() + tangential * (Mat3::Identity() - normal * normal.transpose());
            hess.noalias() += weight * rows.transpose() * metric * rows;
            grad.noalias() += weight * rows.transpose() * (metric * residual);
        };
        auto add = [&](Index vertex, const Vec3& residual, const Vec3& normal, double weight) {
            rows = jacobian_rows(vertex);
            add_rows(residual, normal, weight);
        };
        const Points3d own_normals = vertex_normals(current.posed, model.mean.triangles, loose);
        const double floor = 0.05;
        const NearestNeighborIndex own(current.posed);
        const Index m = target.num_vertices();
        if (bandwidth > 0.0) {
            // Gaussian-weighted correspondences: each point pairs with the local weighted mean of the other set.
            const double cutoff = 9.0 * bandwidth * bandwidth;
            const double w_fwd = 0.5 * config.shape_weight / double(n) / bandwidth;
            const double w_bwd = 0.5 * config.shape_weight / double(m) / bandwidth;
            std::vector<std::pair<Index, double>> near;
            auto gather = [&](const Vec3& q, const Points3d& set) {
                near.clear();
                double total = 0.0;
                for (Index j = 0; j < set.cols(); ++j) {
                    const double d2 = (set.col(j) - q).squaredNorm();
                    if (d2 < cutoff) {
                        const double w = std::exp(-0.5 * d2 / (bandwidth * bandwidth));
                        near.emplace_back(j, w);
                        total += w;
                    }
                }
                for (auto& e : near)
                    e.second /= total;
            };
            for (Index i = 0; i < n; ++i) {
                gather(current.posed.col(i), target.vertices);
                if (near.empty())
                    continue;
                Vec3 point = Vec3::Zero(), normal = Vec3::Zero();
                for (const auto& [j, w] : near) {
                    point += w * target.vertices.col(j);
                    normal += w * target_normals.col(j);
                }
                normal = normal.norm() > 0.0 ? Vec3(normal.normalized()) : Vec3::Zero();
                add(i, current.posed.col(i) - point, normal, w_fwd);
            }
            for (Index j = 0; j < m; ++j) {
                gather(target.vertices.col(j), current.posed);
                if (near.empty())
                    continue;
                Vec3 point = Vec3::Zero(), normal = Vec3::Zero();
                rows.setZero();
                for (const auto& [i, w] : near) {
                    point += w * current.posed.col(i);
                    normal += w * own_normals.col(i);
                    rows += w * jacobian_rows(i);
                }
                normal = normal.norm() > 0.0 ? Vec3(normal.normalized()) : Vec3::Zero();
                add_rows(point - target.vertices.col(j), normal, w_bwd);
            }
        } else {
        for (Index i = 0; i < n; ++i) {
            const auto [j, d2] = target_index.nearest(current.posed.col(i));
            const double w = 0.5 * config.shape_weight / double(n) / std::max(std::sqrt(d2), floor);
            add(i, current.posed.col(i) - target.vertices.col(j), target_normals.col(j), w);
        }
        for (Index j = 0; j < m; ++j) {
            const auto [i, d2] = own.nearest(target.vertices.col(j));
            const double w = 0.5 * config.shape_weight / double(m) / std::max(std::sqrt(d2), floor);
            add(i, current.posed.col(i) - target.vertices.col(j), own_normals.col(i), w);
        }
        }
        hess.diagonal().tail(active).array() += 1.0;
        grad.tail(active) += current.shape.head(active);
        if (!config.fit_pose) {
            hess.topRows(6).setZero();
            hess.leftCols(6).setZero();
            hess.diagonal().head(6).setOnes();
            grad.head(6).setZero();
        }
        const VectorX delta = -hess.ldlt().solve(grad);
        if (!delta.allFinite())
            return false;
        for (double f = 1.0; f >= 1.0 / 16.0; f *= 0.5) {
            RegState prop = current;
            prop.angles += f * delta.head<3>();
            prop.shift += f * delta.segment<3>(3);
            prop.shape.head(active) += f * delta.tail(active);
            ++refinements;
            if (evaluate(prop, true, false) && (bandwidth > 0.0 || prop.total > current.total)) {
                ++refinements_accepted;
                current = std::move(prop);
                if (current.total > best.total)
                    best = current;
                return true;
            }
        }
        return false;
    };
    auto refine_burst = [&](int count, Index active) {
        if (active == 0 && !config.fit_pose)
            return;
        for (int k = 0; k < count; ++k)
            if (!refine(active))
                break;
    };
    // Refined starts from small rotations about each axis; vertex-lattice minima lie a few degrees apart.
    if (config.refine_interval > 0) {
        const RegState start = current;
        RegState chosen = current;
        bool have = false;
        for (int k = -1; k < (config.fit_pose ? 6 : 0); ++k) {
            current = start;
            if (k >= 0)
                current.angles(k / 2) += (k % 2 == 0 ? 1.0 : -1.0) * config.start_angle;
            if (!evaluate(current, true, true))
                continue;
            refine_burst(config.refine_iterations, 0);
            refine_burst(config.final_refine_iterations, free_shape);
            if (!have || current.total > chosen.total)
                chosen = current;
            have = true;
        }
        // One more start that follows Gaussian-weighted correspondences from wide to narrow bandwidths.
        if (!config.soft_bandwidths.empty()) {
            current = start;
            if (evaluate(current, true, true)) {
                for (double b : config.soft_bandwidths) {
                    bandwidth = b;
                    for (int k = 0; k < config.refine_iterations; ++k)
                        refine(free_shape);
                }
                bandwidth = 0.0;
                refine_burst(config.final_refine_iterations, free_shape);
                if (!have || current.total > chosen.total)
                    chosen = current;
            }
        }
        current = chosen;
        if (current.total > best.total)
            best = current;
    }

    enum { rot, trans, shp, alb };
    std::vector<int> blocks;
    if (config.fit_pose) {
        blocks.push_back(rot);
        blocks.push_back(trans);
    }
    if (free_shape > 0)
        blocks.push_back(shp);
    if (free_albedo > 0)
        blocks.push_back(alb);
    std::array<int, 4> proposed{}, accepted{};
    int empty = 0;
    for (int step = 0; step < config.steps && !blocks.empty(); ++step) {
        if (config.refine_interval > 0 && step % config.refine_interval == 0)
            refine_burst(config.refine_iterations, free_shape);
        const int block = blocks[std::min<std::size_t>(
            static_cast<std::size_t>(NormalSampler::uniform(rng) * double(blocks.size())), blocks.size() - 1)];
        RegState prop = current;
        switch (block) {
        case rot: {
            const double sd = pick_scale(config.rotation);
            for (int k = 0; k < 3; ++k)
                prop.angles(k) += sd * normal(rng);
            break;
        }
        case trans: {
            const double sd = pick_scale(config.translation);
            for (int k = 0; k < 3; ++k)
                prop.shift(k) += sd * normal(rng);
            break;
        }
        case shp: drift_coefficients(prop.shape, free_shape, config.shape); break;
        case alb: drift_coefficients(prop.albedo, free_albedo, config.albedo); break;
        }
        ++proposed[block];
        if (!evaluate(prop, block != alb, block == alb)) {
            ++empty;
            continue;
        }
        const double ratio = prop.total - current.total;
        if (!metropolis_accept(ratio, NormalSampler::uniform(rng)))
            continue;
        ++accepted[block];
        current = std::move(prop);
        if (current.total > best.total)
            best = current;
    }

    if (config.refine_interval > 0) {
        current = best;
        refine_burst(config.final_refine_iterations, free_shape);
    }

    RegistrationResult out;
    out.code = LatentCode{best.shape, best.albedo};
    out.registered = model.mean;
    out.registered.vertices = best.posed;
    out.registered.albedo = best.colors;
    out.pose.rotation = rotation_of(best.angles);
    out.pose.translation = centre + best.shift - out.pose.rotation * centre;
    out.chamfer = best.chamfer;
    out.albedo_mse = best.mse;
    out.log_posterior = best.total;
    static const char* names[] = {"rotation", "translation", "shape", "albedo"};
    nlohmann::json blocks_json = nlohmann::json::object();
    for (int b = 0; b < 4; ++b)
        blocks_json[names[b]] = {{"proposed", proposed[b]}, {"accepted", accepted[b]}};
    nlohmann::json views_json = nlohmann::json::array();
    for (const auto& v : views)
        views_json.push_back(to_json(v));
    out.diagnostics = {{"mode", use_albedo ? "shape-and-albedo" : "shape-only"},
                       {"initial_chamfer", initial_chamfer},
                       {"final_chamfer", best.chamfer},
                       {"chamfer_definition", "symmetric mean nearest-vertex distance"},
                       {"albedo_mse", best.mse},
                       {"empty_proposals", empty},
                       {"refinements", refinements},
                       {"refinements_accepted", refinements_accepted},
                       {"blocks", blocks_json},
                       {"views", use_albedo ? views_json : nlohmann::json::array()}};
    return out;
}

namespace {

/// Uniform grid of triangle bounding boxes.
class TriangleGrid
{
public:
    TriangleGrid(const Mesh& mesh, double cell) : mesh_(mesh), cell_(cell)
    {
        lo_ = mesh.vertices.rowwise().minCoeff();
        const Vec3 hi = mesh.vertices.rowwise().maxCoeff();
        dims_ = ((hi - lo_) / cell_).array().floor().cast<int>() + 1;
        buckets_.resize(std::size_t(dims_.prod()));
        for (Index t = 0; t < mesh.triangles.cols(); ++t) {
            Vec3 a = mesh.vertices.col(mesh.triangles(0, t)), b = a;
            for (int k = 1; k < 3; ++k) {
                a = a.cwiseMin(Vec3(mesh.vertices.col(mesh.triangles(k, t))));
                b = b.cwiseMax(Vec3(mesh.vertices.col(mesh.triangles(k, t))));
            }
            visit(a, b, [&](std::size_t c) { buckets_[c].push_back(int(t)); });
        }
        stamp_.assign(std::size_t(mesh.triangles.cols()), -1);
    }

    template <typename F>
    void candidates(const Vec3& a, const Vec3& b, F&& f)
    {
        ++query_;
        visit(a, b, [&](std::size_t c) {
            for (int t : buckets_[c])
                if (stamp_[t] != query_) {
                    stamp_[t] = query_;
                    f(t);
                }
        });
    }

private:
    template <typename F>
    void visit(const Vec3& a, const Vec3& b, F&& f) const
    {
        const Eigen::Vector3i c0 = clamp_cell(a), c1 = clamp_cell(b);
        for (int z = c0.z(); z <= c1.z(); ++z)
            for (int y = c0.y(); y <= c1.y(); ++y)
                for (int x = c0.x(); x <= c1.x(); ++x)
                    f((std::size_t(z) * dims_.y() + y) * dims_.x() + x);
    }

    Eigen::Vector3i clamp_cell(const Vec3& p) const
    {
        Eigen::Vector3i c;
        for (int k = 0; k < 3; ++k)
            c(k) = std::clamp(static_cast<int>(std::floor((p(k) - lo_(k)) / cell_)), 0, dims_(k) - 1);
        return c;
    }

    const Mesh& mesh_;
    double cell_;
    Vec3 lo_;
    Eigen::Vector3i dims_;
    std::vector<std::vector<int>> buckets_;
    std::vector<long> stamp_;
    long query_ = 0;
};

} // namespace

AlbedoTransfer transfer_albedo(const Mesh& registered, const Mesh& scan, double max_distance)
{
    if (!(max_distance > 0.0))
        throw usage_error("ray length must be positive");
    AlbedoTransfer out;
    out.mesh = registered;
    if (scan.num_triangles() == 0) {
        for (Index v = 0; v < registered.num_vertices(); ++v)
            out.missed.push_back(int(v));
        return out;
    }
    NormalOptions opts;
    opts.default_normal = Vec3(0.0, 0.0, 1.0);
    const Points3d normals = vertex_normals(registered, opts);
    TriangleGrid grid(scan, std::max(max_distance * 0.5, 1e-6));
    constexpr double eps = 1e-9;
    for (Index v = 0; v < registered.num_vertices(); ++v) {
        const Vec3 o = registered.vertices.col(v);
        const Vec3 d = normals.col(v);
        double best_t = std::numeric_limits<double>::infinity();
        Vec3 colour = Vec3::Zero();
        grid.candidates((o - max_distance * d).cwiseMin(o + max_distance * d),
                        (o - max_distance * d).cwiseMax(o + max_distance * d), [&](int t) {
                            const int i0 = scan.triangles(0, t), i1 = scan.triangles(1, t), i2 = scan.triangles(2, t);
                            const Vec3 v0 = scan.vertices.col(i0);
                            const Vec3 e1 = Vec3(scan.vertices.col(i1)) - v0;
                            const Vec3 e2 = Vec3(scan.vertices.col(i2)) - v0;
                            const Vec3 p = d.cross(e2);
                            const double det = e1.dot(p);
                            if (std::abs(det) < 1e-12)
                                return;
                            const double inv = 1.0 / det;
                            const Vec3 s = o - v0;
                            const double u = s.dot(p) * inv;
                            if (u < -eps || u > 1.0 + eps)
                                return;
                            const Vec3 q = s.cross(e1);
                            const double w = d.dot(q) * inv;
                            if (w < -eps || u + w > 1.0 + eps)
                                return;
                            const double tt = e2.dot(q) * inv;
                            if (std::abs(tt) > max_distance || std::abs(tt) >= std::abs(best_t))
                                return;
                            best_t = tt;
                            Vec3 bary(1.0 - u - w, u, w);
                            bary = bary.cwiseMax(0.0);
                            bary /= bary.sum();
                            colour = bary(0) * scan.albedo.col(i0) + bary(1) * scan.albedo.col(i1) +
                                     bary(2) * scan.albedo.col(i2);
                        });
        if (std::isfinite(best_t))
            out.mesh.albedo.col(v) = colour;
        else
            out.missed.push_back(int(v));
    }
    return out;
}

MorphableModel build_pca_model(const std::vector<Mesh>& meshes)
{
    if (meshes.size() < 2)
        throw usage_error("PCA needs at least 2 meshes, got " + std::to_string(meshes.size()));
    for (std::size_t i = 1; i < meshes.size(); ++i)
        if (!same_topology(meshes[0], meshes[i]))
            throw data_error("PCA: mesh " + std::to_string(i) + " does not share the topology of mesh 0");
    const Index count = Index(meshes.size());
    const Index n = meshes[0].num_vertices();

    MorphableModel model;
    model.mean = meshes[0];
    model.mean.vertices.setZero();
    model.mean.albedo.setZero();
    for (const Mesh& m : meshes) {
        model.mean.vertices += m.vertices;
        model.mean.albedo += m.albedo;
    }
    model.mean.vertices /= double(count);
    model.mean.albedo /= double(count);

    auto channel = [&](auto field) {
        MatrixX x(3 * n, count);
        for (Index i = 0; i < count; ++i) {
            const Points3d d = field(meshes[i]) - field(model.mean);
            x.col(i) = Eigen::Map<const VectorX>(d.data(), 3 * n);
        }
        const MatrixX gram = x.transpose() * x / double(count - 1);
        const Eigen::SelfAdjointEigenSolver<MatrixX> eig(gram);
        const double top = std::max(eig.eigenvalues().maxCoeff(), 0.0);
        const double floor = std::max(1e-12, 1e-10 * top);
        LowRankBasis basis;
        basis.requested_rank = count - 1;
        std::vector<Index> keep;
        for (Index k = count - 1; k >= 0; --k)
            if (eig.eigenvalues()(k) > floor && Index(keep.size()) < count - 1)
                keep.push_back(k);
        basis.components.resize(3 * n, Index(keep.size()));
        basis.eigenvalues.resize(Index(keep.size()));
        for (std::size_t j = 0; j < keep.size(); ++j) {
            const double lambda = eig.eigenvalues()(keep[j]);
            VectorX u = x * eig.eigenvectors().col(keep[j]) / std::sqrt(lambda * double(count - 1));
            // deterministic sign: largest-magnitude entry positive
            Index arg = 0;
            u.cwiseAbs().maxCoeff(&arg);
            if (u(arg) < 0.0)
                u = -u;
            basis.components.col(Index(j)) = u;
            basis.eigenvalues(Index(j)) = lambda;
        }
        return basis;
    };
    model.shape = channel([](const Mesh& m) -> const Points3d& { return m.vertices; });
    model.albedo = channel([](const Mesh& m) -> const Points3d& { return m.albedo; });
    model.shape.requested_rank = model.shape.rank();
    model.albedo.requested_rank = model.albedo.rank();
    model.provenance = {{"kind", "pca"}, {"dataset_size", count}, {"variance_normalization", "N-1"}};
    return model;
}

} // namespace gpmm
