#include <numeric>
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
#include "gpmm/inference.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>

namespace gpmm {

namespace {

void check_scales(const DriftScales& s, const char* name)
{
    for (double v : s)
        if (!(v > 0.0) || !std::isfinite(v))
            throw usage_error(std::string("proposal stds for ") + name + " must be positive");
}

Points3d shape_vertices(const MorphableModel& model, const VectorX& coeffs)
{
    const VectorX d = model.shape.deformation(coeffs);
    return model.mean.vertices + Eigen::Map<const Points3d>(d.data(), 3, model.mean.num_vertices());
}

Points3d albedo_field(const MorphableModel& model, const VectorX& coeffs)
{
    const VectorX d = model.albedo.deformation(coeffs);
    return (model.mean.albedo + Eigen::Map<const Points3d>(d.data(), 3, model.mean.num_vertices()))
        .cwiseMax(0.0)
        .cwiseMin(1.0);
}

Points3d normals_of(const Points3d& vertices, const Triangles& triangles)
{
    NormalOptions o;
    o.default_normal = Vec3(0.0, 0.0, 1.0);
    return vertex_normals(vertices, triangles, o);
}

VectorX padded(const VectorX& v, Index size)
{
    if (v.size() > size)
        throw data_error("latent code longer than the model rank");
    VectorX out = VectorX::Zero(size);
    out.head(v.size()) = v;
    return out;
}

/// Everything the posterior of one state depends on, kept so that blocks only redo what they touch.
struct Evaluation
{
    SceneParams scene;
    LatentCode code;
    Points3d vertices;
    Points3d normals;
    Points3d albedo;
    RenderOutput render;
    double image_ll = 0.0;
    double landmark_ll = 0.0;
    double code_prior = 0.0;
    double scene_prior = 0.0;

    double total() const { return image_ll + landmark_ll + code_prior + scene_prior; }
};

class Posterior
{
public:
    Posterior(const MorphableModel& model, const ImageRGB& image, const LandmarkSet* landmarks,
              const SceneParams& init, const FitConfig& config)
        : model_(model), image_(image), landmarks_(landmarks), init_(init), config_(config),
          background_(BackgroundModel::from_image(image, config.background_bins)),
          sigma_(Vec3::Constant(config.foreground_sigma))
    {
        if (init.camera.width != image.width || init.camera.height != image.height)
            throw data_error("camera size " + std::to_string(init.camera.width) + "x" +
                             std::to_string(init.camera.height) + " does not match image " +
                             std::to_string(image.width) + "x" + std::to_string(image.height));
        if (landmarks_ && !landmarks_->observations.empty())
            landmarks_->validate(model.mean.num_vertices());
    }

    /// Recomputes the parts of `e` invalidated by a change of `block`; nullopt means "everything".
    bool update(Evaluation& e, std::optional<Block> block) const
    {
        const bool all = !block.has_value();
        const bool shape = all || *block == Block::shape;
        const bool albedo = all || *block == Block::albedo;
        const bool pose = all || shape || *block == Block::rotation || *block == Block::translation ||
                          *block == Block::distance;
        if (shape) {
            e.vertices = shape_vertices(model_, e.code.shape);
            e.normals = normals_of(e.vertices, model_.mean.triangles);
        }
        if (albedo)
            e.albedo = albedo_field(model_, e.code.albedo);
        if (pose)
            e.render = rasterize_geometry(e.vertices, model_.mean.triangles, e.scene);
        if (e.render.silhouette_pixels() == 0)
            return false;
        shade_buffer(e.render, model_.mean.triangles, e.albedo, e.normals, e.scene);
        e.image_ll = image_log_likelihood(e.render, image_, sigma_, background_);
        if (pose && landmarks_)
            e.landmark_ll = landmark_log_likelihood(e.scene, e.vertices, *landmarks_, config_.landmark_sigma);
        if (shape || albedo)
            e.code_prior = log_prior(e.code);
        e.scene_prior = scene_log_prior(e.scene, init_, config_.priors);
        return true;
    }

    const ImageRGB& image() const { return image_; }

    /**
     * Whitened residuals over a fixed pixel list plus landmarks. Pixels that
     * left the silhouette take their value from `fallback`.
     */
    VectorX residuals(const Evaluation& e, const std::vector<Index>& pixels, const VectorX* fallback) const
    {
        const Index nl = landmarks_ ? Index(landmarks_->observations.size()) : 0;
        VectorX r(3 * Index(pixels.size()) + 2 * nl);
        for (std::size_t i = 0; i < pixels.size(); ++i) {
            const Index p = pixels[i];
            if (e.render.silhouette(p))
                r.segment<3>(3 * Index(i)) =
                    (e.render.color.pixels.col(p) - image_.pixels.col(p)).cwiseQuotient(sigma_);
            else if (fallback)
                r.segment<3>(3 * Index(i)) = fallback->segment<3>(3 * Index(i));
            else
                r.segment<3>(3 * Index(i)).setZero();
        }
        const Index base = 3 * Index(pixels.size());
        for (Index l = 0; l < nl; ++l) {
            const auto& obs = landmarks_->observations[l];
            const Projected p = project(e.scene.camera, e.scene.pose, e.vertices.col(*landmarks_->vertex_of(obs.name)));
            const double s = config_.landmark_sigma.value_or(obs.sigma);
            r.segment<2>(base + 2 * l) = p.valid ? Vec2((p.pixel - obs.pixel) / s) : Vec2::Zero();
        }
        return r;
    }

private:
    const MorphableModel& model_;
    const ImageRGB& image_;
    const LandmarkSet* landmarks_;
    SceneParams init_;
    const FitConfig& config_;
    BackgroundModel background_;
    Vec3 sigma_;
};

using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Downhill simplex minimisation of `f` from `x0` with initial edge lengths `scale`.
template <typename F>
Vec6 nelder_mead(F&& f, const Vec6& x0, const Vec6& scale, int max_evaluations)
{
    std::array<Vec6, 7> x;
    std::array<double, 7> fx;
    for (int i = 0; i < 7; ++i) {
        x[i] = x0;
        if (i > 0)
            x[i](i - 1) += scale(i - 1);
        fx[i] = f(x[i]);
    }
    int evaluations = 7;
    std::array<int, 7> order;
    while (evaluations < max_evaluations) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) { return fx[a] < fx[b]; });
        const int best = order[0], worst = order[6], second = order[5];
        Vec6 centroid = Vec6::Zero();
        for (int i = 0; i < 6; ++i)
            centroid += x[order[i]] / 6.0;
        const Vec6 reflected = centroid + (centroid - x[worst]);
        const double fr = f(reflected);
        ++evaluations;
        if (fr < fx[best]) {
            const Vec6 expanded = centroid + 2.0 * (centroid - x[worst]);
            const double fe = f(expanded);
            ++evaluations;
            x[worst] = fe < fr ? expanded : reflected;
            fx[worst] = std::min(fe, fr);
        } else if (fr < fx[second]) {
            x[worst] = reflected;
            fx[worst] = fr;
        } else {
            const Vec6 contracted = centroid + 0.5 * (x[worst] - centroid);
            const double fc = f(contracted);
            ++evaluations;
            if (fc < fx[worst]) {
                x[worst] = contracted;
                fx[worst] = fc;
            } else {
                for (int i = 1; i < 7; ++i) {
                    x[order[i]] = x[best] + 0.5 * (x[order[i]] - x[best]);
                    fx[order[i]] = f(x[order[i]]);
                }
                evaluations += 6;
            }
        }
    }
    return x[std::min_element(fx.begin(), fx.end()) - fx.begin()];
}

/// Flat view of the continuous chain parameters used by the Gauss-Newton refinement.

struct ParameterLayout
{
    static constexpr Index pose = 6; // yaw, pitch, roll, tx, ty, log tz
    Index shape = 0;
    Index albedo = 0;

    Index size() const { return pose + shape + albedo + 27; }

    Block block_of(Index k) const
    {
        if (k < 3)
            return Block::rotation;
        if (k < 5)
            return Block::translation;
        if (k == 5)
            return Block::distance;
        if (k < pose + shape)
            return Block::shape;
        if (k < pose + shape + albedo)
            return Block::albedo;
        return Block::illumination;
    }

    VectorX pack(const Evaluation& e) const
    {
        VectorX v(size());
        const Pose& p = e.scene.pose;
        v.head<6>() << p.yaw, p.pitch, p.roll, p.translation.x(), p.translation.y(), std::log(p.translation.z());
        v.segment(pose, shape) = e.code.shape.head(shape);
        v.segment(pose + shape, albedo) = e.code.albedo.head(albedo);
        for (int k = 0; k < 27; ++k)
            v(pose + shape + albedo + k) = e.scene.illumination(k / 3, k % 3);
        return v;
    }

    void unpack(const VectorX& v, Evaluation& e) const
    {
        Pose& p = e.scene.pose;
        p.yaw = v(0);
        p.pitch = v(1);
        p.roll = v(2);
        p.translation = Vec3(v(3), v(4), std::exp(v(5)));
        e.code.shape.head(shape) = v.segment(pose, shape);
        e.code.albedo.head(albedo) = v.segment(pose + shape, albedo);
        for (int k = 0; k < 27; ++k)
            e.scene.illumination(k / 3, k % 3) = v(pose + shape + albedo + k);
    }

    VectorX step_sizes() const
    {
        VectorX h(size());
        h.head<6>() << 1e-3, 1e-3, 1e-3, 0.2, 0.2, 1e-3;
        h.segment(pose, shape + albedo).setConstant(1e-2);
        h.tail<27>().setConstant(1e-2);
        return h;
    }
};

} // namespace

void ProposalConfig::validate() const
{
    check_scales(rotation, "rotation");
    check_scales(translation, "translation");
    check_scales(distance, "distance");
    check_scales(shape, "shape");
    check_scales(albedo, "albedo");
    check_scales(illumination, "illumination");
    double total = 0.0;
    for (double p : scale_probabilities) {
        if (!(p >= 0.0))
            throw usage_error("proposal scale probabilities must be non-negative");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw usage_error("proposal scale probabilities must sum to 1");
    if (!(single_coordinate_probability >= 0.0 && single_coordinate_probability <= 1.0))
        throw usage_error("single-coordinate probability must lie in [0, 1]");
}

void FitConfig::validate() const
{
    if (illumination_steps < 0 || full_steps < 0)
        throw usage_error("step counts must be non-negative");
    if (!(foreground_sigma > 0.0))
        throw usage_error("foreground sigma must be positive");
    if (landmark_sigma && !(*landmark_sigma > 0.0))
        throw usage_error("landmark sigma must be positive");
    if (background_bins < 1)
        throw usage_error("background histogram needs at least one bin");
    if (!(initial_temperature >= 1.0) || !(anneal_fraction >= 0.0 && anneal_fraction <= 1.0))
        throw usage_error("fit: initial_temperature must be >= 1 and anneal_fraction in [0, 1]");
    if (!(pose_warmup_fraction >= 0.0 && pose_warmup_fraction <= 1.0))
        throw usage_error("fit: pose_warmup_fraction must lie in [0, 1]");
    if (illumination_interval < 0 || max_empty_proposals < 1 || local_iterations < 0 || final_iterations < 0 || landmark_alignment_evaluations < 0)
        throw usage_error("invalid illumination interval or empty-proposal limit");
    proposals.validate();
}

nlohmann::json FitConfig::to_json() const
{
    auto arr = [](const DriftScales& s) { return nlohmann::json{s[0], s[1], s[2]}; };
    nlohmann::json j{{"illumination_steps", illumination_steps},
                     {"full_steps", full_steps},
                     {"foreground_sigma", foreground_sigma},
                     {"background_bins", background_bins},
                     {"illumination_interval", illumination_interval},
                     {"max_empty_proposals", max_empty_proposals},
                     {"seed", seed},
                     {"proposals",
                      {{"rotation", arr(proposals.rotation)},
                       {"translation", arr(proposals.translation)},
                       {"distance", arr(proposals.distance)},
                       {"shape", arr(proposals.shape)},
                       {"albedo", arr(proposals.albedo)},
                       {"illumination", arr(proposals.illumination)},
                       {"scale_probabilities", arr(proposals.scale_probabilities)},
                       {"single_coordinate_probability", proposals.single_coordinate_probability}}},
                     {"priors",
                      {{"rotation_std", priors.rotation_std},
                       {"translation_std", priors.translation_std},
                       {"log_distance_std", priors.log_distance_std},
                       {"illumination_std", priors.illumination_std}}}};
    j["local_refinement"] = local_refinement;
    j["local_iterations"] = local_iterations;
    j["final_iterations"] = final_iterations;
    j["landmark_alignment_evaluations"] = landmark_alignment_evaluations;
    j["initial_temperature"] = initial_temperature;
    j["anneal_fraction"] = anneal_fraction;
    j["pose_warmup_fraction"] = pose_warmup_fraction;
    j["landmark_sigma"] = landmark_sigma ? nlohmann::json(*landmark_sigma) : nlohmann::json(nullptr);
    j["shape_components"] = shape_components ? nlohmann::json(*shape_components) : nlohmann::json(nullptr);
    j["albedo_components"] = albedo_components ? nlohmann::json(*albedo_components) : nlohmann::json(nullptr);
    return j;
}

std::string block_name(Block b)
{
    switch (b) {
    case Block::rotation: return "rotation";
    case Block::translation: return "translation";
    case Block::distance: return "distance";
    case Block::shape: return "shape";
    case Block::albedo: return "albedo";
    case Block::illumination: return "illumination";
    }
    return "?";
}

nlohmann::json FitTrace::to_json() const
{
    nlohmann::json blocks = nlohmann::json::object();
    for (int b = 0; b < block_count; ++b)
        blocks[block_name(static_cast<Block>(b))] = {{"proposed", proposed[b]}, {"accepted", accepted[b]}};
    return {{"blocks", blocks},
            {"empty_proposals", empty_proposals},
            {"illumination_estimates", illumination_estimates},
            {"illumination_estimates_accepted", illumination_estimates_accepted},
            {"local_steps", local_steps},
            {"local_steps_accepted", local_steps_accepted},
            {"landmark_aligned", landmark_aligned},
            {"initial_log_posterior", initial_log_posterior},
            {"best_iteration", best_iteration},
            {"warnings", warnings}};
}

double landmark_log_likelihood(const SceneParams& scene, const Points3d& vertices, const LandmarkSet& landmarks,
                               std::optional<double> sigma_override)
{
    double total = 0.0;
    for (const auto& obs : landmarks.observations) {
        const auto v = landmarks.vertex_of(obs.name);
        if (!v)
            throw data_error("landmark '" + obs.name + "' has no vertex");
        if (*v < 0 || *v >= vertices.cols())
            throw data_error("landmark '" + obs.name + "' vertex out of range");
        const Projected p = project(scene.camera, scene.pose, vertices.col(*v));
        if (!p.valid) {
            total += landmark_behind_camera_penalty;
            continue;
        }
        const double s = sigma_override.value_or(obs.sigma);
        total += -0.5 * (p.pixel - obs.pixel).squaredNorm() / (s * s) - 2.0 * std::log(std::sqrt(2.0 * pi) * s);
    }
    return total;
}

double landmark_log_likelihood(const SceneParams& scene, const MorphableModel& model, const LatentCode& code,
                               const LandmarkSet& landmarks, std::optional<double> sigma_override)
{
    return landmark_log_likelihood(scene, instance(model, code).vertices, landmarks, sigma_override);
}

double scene_log_prior(const SceneParams& scene, const SceneParams& init, const ScenePriorConfig& priors)
{
    const Pose& p = scene.pose;
    const double rot = (p.yaw * p.yaw + p.pitch * p.pitch + p.roll * p.roll) / (priors.rotation_std * priors.rotation_std);
    const double tr = (p.translation.head<2>() - init.pose.translation.head<2>()).squaredNorm() /
                      (priors.translation_std * priors.translation_std);
    double dist = std::numeric_limits<double>::infinity();
    if (p.translation.z() > 0.0 && init.pose.translation.z() > 0.0) {
        const double d = std::log(p.translation.z() / init.pose.translation.z()) / priors.log_distance_std;
        dist = d * d;
    }
    const double sh = (scene.illumination - ambient_illumination()).squaredNorm() /
                      (priors.illumination_std * priors.illumination_std);
    return -0.5 * (rot + tr + dist + sh);
}

IlluminationEstimate estimate_illumination(const RenderOutput& geometry, const Triangles& triangles,
                                           const Points3d& albedo, const Points3d& normals, const Mat3& rotation,
                                           const ImageRGB& observed)
{
    if (geometry.width != observed.width || geometry.height != observed.height)
        throw data_error("illumination estimate: image size mismatch");
    using Mat9 = Eigen::Matrix<double, 9, 9>;
    using Vec9 = Eigen::Matrix<double, 9, 1>;
    std::array<Mat9, 3> normal_matrix;
    std::array<Vec9, 3> rhs;
    for (int c = 0; c < 3; ++c) {
        normal_matrix[c].setZero();
        rhs[c].setZero();
    }
    Index visible = 0;
    for (Index p = 0; p < geometry.triangle_id.size(); ++p) {
        const int t = geometry.triangle_id(p);
        if (t < 0)
            continue;
        ++visible;
        const Vec3 w = geometry.barycentric.col(p);
        const int ia = triangles(0, t), ib = triangles(1, t), ic = triangles(2, t);
        const Vec3 a = w(0) * albedo.col(ia) + w(1) * albedo.col(ib) + w(2) * albedo.col(ic);
        Vec3 n = w(0) * normals.col(ia) + w(1) * normals.col(ib) + w(2) * normals.col(ic);
        const double len = n.norm();
        n = len > 0.0 ? Vec3(rotation * n / len) : Vec3(0.0, 0.0, -1.0);
        const Vec9 b = irradiance_basis(n);
        const Mat9 bb = b * b.transpose();
        for (int c = 0; c < 3; ++c) {
            normal_matrix[c].noalias() += (a(c) * a(c)) * bb;
            rhs[c].noalias() += (a(c) * observed.pixels(c, p)) * b;
        }
    }
    if (visible < 9)
        throw data_error("illumination estimate needs at least 9 visible pixels, got " + std::to_string(visible));
    IlluminationEstimate out;
    static const char* channel[] = {"red", "green", "blue"};
    for (int c = 0; c < 3; ++c) {
        Mat9 m = normal_matrix[c];
        Eigen::SelfAdjointEigenSolver<Mat9> eig(m, Eigen::EigenvaluesOnly);
        const double trace = m.trace();
        const double lo = eig.eigenvalues()(0), hi = eig.eigenvalues()(8);
        if (!(hi > 0.0) || lo <= 1e-12 * hi) {
            const double ridge = trace > 0.0 ? 1e-6 * trace : 1e-12;
            m.diagonal().array() += ridge;
            out.warnings.push_back(std::string("rank-deficient light estimate in ") + channel[c] +
                                   " channel; ridge " + std::to_string(ridge));
        }
        out.coefficients.col(c) = m.ldlt().solve(rhs[c]);
    }
    return out;
}

IlluminationEstimate estimate_illumination(const SceneParams& scene, const MorphableModel& model,
                                           const LatentCode& code, const ImageRGB& observed)
{
    const Points3d vertices = shape_vertices(model, padded(code.shape, model.shape.rank()));
    const Points3d albedo = albedo_field(model, padded(code.albedo, model.albedo.rank()));
    const RenderOutput g = rasterize_geometry(vertices, model.mean.triangles, scene);
    if (g.silhouette_pixels() == 0)
        throw data_error("illumination estimate: empty silhouette");
    return estimate_illumination(g, model.mean.triangles, albedo, normals_of(vertices, model.mean.triangles),
                                 scene.pose.rotation(), observed);
}

double log_posterior(const MorphableModel& model, const ImageRGB& image, const LandmarkSet* landmarks,
                     const SceneParams& scene, const LatentCode& code, const SceneParams& init,
                     const FitConfig& config)
{
    Posterior post(model, image, landmarks, init, config);
    Evaluation e;
    e.scene = scene;
    e.code = {padded(code.shape, model.shape.rank()), padded(code.albedo, model.albedo.rank())};
    if (!post.update(e, std::nullopt))
        return -std::numeric_limits<double>::infinity();
    return e.total();
}

FitResult fit_image(const MorphableModel& model, const ImageRGB& image, const LandmarkSet* landmarks,
                    const SceneParams& init, const FitConfig& config)
{
    return fit_image(model, image, landmarks, init, LatentCode::zeros(model.shape.rank(), model.albedo.rank()),
                     config);
}

FitResult fit_image(const MorphableModel& model, const ImageRGB& image, const LandmarkSet* landmarks,
                    const SceneParams& init, const LatentCode& init_code, const FitConfig& config)
{
    config.validate();
    model.validate();
    const Posterior post(model, image, landmarks, init, config);
    const Index free_shape = std::clamp<Index>(config.shape_components.value_or(model.shape.rank()), 0, model.shape.rank());
    const Index free_albedo =
        std::clamp<Index>(config.albedo_components.value_or(model.albedo.rank()), 0, model.albedo.rank());

    Evaluation current;
    current.scene = init;
    current.code = {padded(init_code.shape, model.shape.rank()), padded(init_code.albedo, model.albedo.rank())};
    if (!post.update(current, std::nullopt))
        throw data_error("initial scene renders an empty silhouette");

    FitResult result;
    FitTrace& trace = result.trace;
    trace.initial_log_posterior = current.total();
    auto snapshot = [](const Evaluation& e, int iteration) {
        return ChainState{e.scene, e.code, e.total(), iteration};
    };
    result.best = snapshot(current, 0);
    result.phase1_end = result.best;

    const Vec3 pivot = model.mean.vertices.rowwise().mean();
    Rng rng(substream_seed(config.seed, "fit"));
    NormalSampler normal;
    const ProposalConfig& pc = config.proposals;
    auto pick_scale = [&](const DriftScales& s) {
        const double u = NormalSampler::uniform(rng);
        double acc = 0.0;
        for (int k = 0; k < 3; ++k) {
            acc += pc.scale_probabilities[k];
            if (u < acc)
                return s[k];
        }
        return s[2];
    };

    int iteration = 0;
    int empty_run = 0;
    double temperature = 1.0;
    auto consider = [&](Evaluation& proposal, Block block, bool greedy) {
        ++iteration;
        const int b = static_cast<int>(block);
        ++trace.proposed[b];
        const bool rendered = post.update(proposal, block);
        if (!rendered) {
            ++trace.empty_proposals;
            if (++empty_run >= config.max_empty_proposals)
                throw numerical_error("fit aborted: " + std::to_string(empty_run) +
                                      " consecutive proposals rendered an empty silhouette (iteration " +
                                      std::to_string(iteration) + ")");
            return false;
        }
        empty_run = 0;
        const double ratio = (proposal.image_ll + proposal.landmark_ll - current.image_ll - current.landmark_ll) /
                                 temperature +
                             (proposal.code_prior + proposal.scene_prior - current.code_prior - current.scene_prior);
        const double u = greedy ? 0.0 : NormalSampler::uniform(rng);
        const bool accept = greedy ? ratio > 0.0 : metropolis_accept(ratio, u);
        if (!accept)
            return false;
        ++trace.accepted[b];
        std::swap(current, proposal);
        if (current.total() > result.best.log_posterior) {
            result.best = snapshot(current, iteration);
            trace.best_iteration = iteration;
        }
        return true;
    };

    // Deterministic jumps: taken only when they raise the posterior.
    auto try_greedy = [&](Evaluation& proposal, std::optional<Block> block) {
        if (!post.update(proposal, block) || !(proposal.total() > current.total()))
            return false;
        std::swap(current, proposal);
        if (current.total() > result.best.log_posterior) {
            result.best = snapshot(current, iteration);
            trace.best_iteration = iteration;
        }
        return true;
    };

    auto closed_form_light = [&]() {
        if (current.render.silhouette_pixels() < 9)
            return;
        ++trace.illumination_estimates;
        IlluminationEstimate est = estimate_illumination(current.render, model.mean.triangles, current.albedo,
                                                         current.normals, current.scene.pose.rotation(), image);
        for (auto& w : est.warnings)
            trace.warnings.push_back(std::move(w));
        Evaluation proposal = current;
        proposal.scene.illumination = est.coefficients;
        if (try_greedy(proposal, Block::illumination))
            ++trace.illumination_estimates_accepted;
    };

    const ParameterLayout full_layout{free_shape, free_albedo};
    VectorX prior_precision(full_layout.size());
    {
        const ScenePriorConfig& pr = config.priors;
        prior_precision.head<6>() << 1.0 / (pr.rotation_std * pr.rotation_std),
            1.0 / (pr.rotation_std * pr.rotation_std), 1.0 / (pr.rotation_std * pr.rotation_std),
            1.0 / (pr.translation_std * pr.translation_std), 1.0 / (pr.translation_std * pr.translation_std),
            1.0 / (pr.log_distance_std * pr.log_distance_std);
        prior_precision.segment(ParameterLayout::pose, free_shape + free_albedo).setOnes();
        prior_precision.tail<27>().setConstant(1.0 / (pr.illumination_std * pr.illumination_std));
    }
    VectorX prior_mean = VectorX::Zero(full_layout.size());
    prior_mean(3) = init.pose.translation.x();
    prior_mean(4) = init.pose.translation.y();
    prior_mean(5) = std::log(init.pose.translation.z());
    {
        const ShCoefficients ambient = ambient_illumination();
        for (int k = 0; k < 27; ++k)
            prior_mean(full_layout.size() - 27 + k) = ambient(k / 3, k % 3);
    }

    // Coordinate subsets of the full layout refined at different stages.
    auto coordinates = [&](bool pose, bool shape, bool albedo) {
        std::vector<Index> out;
        for (Index k = 0; k < full_layout.size(); ++k) {
            const Block b = full_layout.block_of(k);
            const bool on = b == Block::shape ? shape : b == Block::albedo ? albedo : b == Block::illumination || pose;
            if (on)
                out.push_back(k);
        }
        return out;
    };
    const VectorX step = full_layout.step_sizes();

    auto gauss_newton = [&](const std::vector<Index>& active) {
        std::vector<Index> pixels;
        for (Index p = 0; p < current.render.silhouette.size(); ++p)
            if (current.render.silhouette(p))
                pixels.push_back(p);
        const VectorX r0 = post.residuals(current, pixels, nullptr);
        const VectorX theta = full_layout.pack(current);
        const Index n = Index(active.size());
        MatrixX jac(r0.size(), n);
        VectorX precision(n), offset(n);
        for (Index j = 0; j < n; ++j) {
            const Index k = active[j];
            precision(j) = prior_precision(k);
            offset(j) = theta(k) - prior_mean(k);
            Evaluation e = current;
            VectorX t = theta;
            t(k) += step(k);
            full_layout.unpack(t, e);
            if (!post.update(e, full_layout.block_of(k))) {
                jac.col(j).setZero();
                continue;
            }
            jac.col(j) = (post.residuals(e, pixels, &r0) - r0) / step(k);
        }
        MatrixX h = jac.transpose() * jac;
        h.diagonal() += precision;
        const VectorX g = jac.transpose() * r0 + precision.cwiseProduct(offset);
        const VectorX delta = -h.ldlt().solve(g);
        if (!delta.allFinite())
            return false;
        for (double f = 1.0; f >= 1.0 / 16.0; f *= 0.5) {
            ++trace.local_steps;
            VectorX t = theta;
            for (Index j = 0; j < n; ++j)
                t(active[j]) += f * delta(j);
            Evaluation e = current;
            full_layout.unpack(t, e);
            if (try_greedy(e, std::nullopt)) {
                ++trace.local_steps_accepted;
                return true;
            }
        }
        return false;
    };

    auto refresh = [&](const std::vector<Index>& active) {
        closed_form_light();
        if (!config.local_refinement)
            return;
        for (int k = 0; k < config.local_iterations; ++k)
            if (!gauss_newton(active))
                break;
    };
    const auto appearance = coordinates(false, false, true);
    const auto warmup_coordinates = coordinates(true, false, true);
    const auto all_coordinates = coordinates(true, true, true);

    // Moves every coordinate of a block, or one random coordinate of it.
    auto drift = [&](auto&& coordinate, Index count, const DriftScales& scales) {
        const double sd = pick_scale(scales);
        if (count > 1 && NormalSampler::uniform(rng) < pc.single_coordinate_probability) {
            const Index k = std::min<Index>(static_cast<Index>(NormalSampler::uniform(rng) * double(count)), count - 1);
            coordinate(k) += sd * normal(rng);
        } else {
            for (Index k = 0; k < count; ++k)
                coordinate(k) += sd * normal(rng);
        }
    };

    auto propose = [&](Block block) {
        Evaluation proposal = current;
        SceneParams& s = proposal.scene;
        Pose& p = s.pose;
        switch (block) {
        case Block::rotation: {
            // pivot about the model centroid: its camera-space position stays put
            const Vec3 before = p.rotation() * pivot;
            drift([&](Index k) -> double& { return k == 0 ? p.yaw : k == 1 ? p.pitch : p.roll; }, 3, pc.rotation);
            p.translation += before - p.rotation() * pivot;
            break;
        }
        case Block::translation:
            drift([&](Index k) -> double& { return p.translation(k); }, 2, pc.translation);
            break;
        case Block::distance: {
            const double sd = pick_scale(pc.distance);
            p.translation.z() *= std::exp(sd * normal(rng));
            break;
        }
        case Block::shape:
            drift([&](Index k) -> double& { return proposal.code.shape(k); }, free_shape, pc.shape);
            break;
        case Block::albedo:
            drift([&](Index k) -> double& { return proposal.code.albedo(k); }, free_albedo, pc.albedo);
            break;
        case Block::illumination:
            drift([&](Index k) -> double& { return s.illumination(k / 3, k % 3); }, 27, pc.illumination);
            break;
        }
        consider(proposal, block, false);
    };

    // Landmark alignment: the pose that best explains the clicked points near the initial one.
    if (landmarks && config.landmark_alignment_evaluations > 0 && landmarks->observations.size() >= 3) {
        const VectorX theta = full_layout.pack(current);
        auto cost = [&](const Vec6& x) {
            SceneParams scene = current.scene;
            scene.pose = {x(0), x(1), x(2), Vec3(x(3), x(4), std::exp(x(5)))};
            return -(landmark_log_likelihood(scene, current.vertices, *landmarks, config.landmark_sigma) +
                     scene_log_prior(scene, init, config.priors));
        };
        Vec6 scale;
        scale << 0.05, 0.05, 0.05, 10.0, 10.0, 0.05;
        const Vec6 x = nelder_mead(cost, theta.head<6>(), scale, config.landmark_alignment_evaluations);
        if (cost(x) < cost(theta.head<6>())) {
            VectorX t = theta;
            t.head<6>() = x;
            Evaluation proposal = current;
            full_layout.unpack(t, proposal);
            if (post.update(proposal, Block::rotation)) {
                std::swap(current, proposal);
                trace.landmark_aligned = true;
                if (current.total() > result.best.log_posterior)
                    result.best = snapshot(current, iteration);
            }
        }
    }
    if (config.illumination_steps > 0)
        refresh(appearance);
    for (int step = 0; step < config.illumination_steps; ++step)
        propose(Block::illumination);
    result.phase1_end = result.best;

    std::vector<Block> pose_blocks{Block::rotation, Block::translation, Block::distance};
    if (free_albedo > 0)
        pose_blocks.push_back(Block::albedo);
    pose_blocks.push_back(Block::illumination);
    std::vector<Block> all_blocks{Block::rotation, Block::translation, Block::distance};
    if (free_shape > 0)
        all_blocks.push_back(Block::shape);
    if (free_albedo > 0)
        all_blocks.push_back(Block::albedo);
    all_blocks.push_back(Block::illumination);

    const int warmup_steps = static_cast<int>(config.pose_warmup_fraction * config.full_steps);
    const int anneal_steps = static_cast<int>(config.anneal_fraction * config.full_steps);
    for (int step = 0; step < config.full_steps; ++step) {
        temperature = step < anneal_steps
                          ? std::pow(config.initial_temperature, 1.0 - double(step) / double(anneal_steps))
                          : 1.0;
        const bool warmup = step < warmup_steps;
        const auto& blocks = warmup ? pose_blocks : all_blocks;
        if (step == 0 || step == warmup_steps ||
            (config.illumination_interval > 0 && step % config.illumination_interval == 0))
            refresh(warmup ? warmup_coordinates : all_coordinates);
        const auto pick = std::min<std::size_t>(
            static_cast<std::size_t>(NormalSampler::uniform(rng) * double(blocks.size())), blocks.size() - 1);
        propose(blocks[pick]);
    }
    // Polish the best state found by the chain.
    if (config.local_refinement && config.full_steps > 0) {
        Evaluation best;
        best.scene = result.best.scene;
        best.code = result.best.code;
        if (post.update(best, std::nullopt)) {
            std::swap(current, best);
            for (int k = 0; k < config.final_iterations; ++k) {
                closed_form_light();
                if (!gauss_newton(all_coordinates))
                    break;
            }
        }
    }
    return result;
}

Pose pose_from_landmarks(const Mesh& mesh, const LandmarkSet& landmarks, const Camera& camera)
{
    std::vector<Vec3> model_pts;
    std::vector<Vec2> image_pts;
    for (const auto& obs : landmarks.observations) {
        const auto v = landmarks.vertex_of(obs.name);
        if (!v || *v < 0 || *v >= mesh.num_vertices())
            continue;
        model_pts.push_back(mesh.vertices.col(*v));
        image_pts.push_back(obs.pixel);
    }
    if (model_pts.size() < 3)
        throw data_error("pose from landmarks needs at least 3 matched landmarks");
    const Index n = static_cast<Index>(model_pts.size());

    auto solve = [&](Pose pose, double& error) {
        pose.translation.setZero();
        const Mat3 r = pose.rotation();
        MatrixX a = MatrixX::Zero(2 * n, 3);
        VectorX b(2 * n);
        for (Index i = 0; i < n; ++i) {
            const Vec3 q = r * model_pts[i];
            const Vec2 d = image_pts[i] - camera.principal;
            a(2 * i, 0) = camera.focal;
            a(2 * i, 2) = -d.x();
            b(2 * i) = d.x() * q.z() - camera.focal * q.x();
            a(2 * i + 1, 1) = camera.focal;
            a(2 * i + 1, 2) = -d.y();
            b(2 * i + 1) = d.y() * q.z() - camera.focal * q.y();
        }
        pose.translation = a.colPivHouseholderQr().solve(b);
        error = 0.0;
        for (Index i = 0; i < n; ++i) {
            const Projected p = project(camera, pose, model_pts[i]);
            error += p.valid ? (p.pixel - image_pts[i]).squaredNorm() : 1e12;
        }
        return pose;
    };

    Pose best;
    double best_error = std::numeric_limits<double>::infinity();
    auto scan = [&](double yc, double pc, double rc, double half_y, double half_p, double half_r, double step) {
        const Pose centre = best;
        for (double dy = -half_y; dy <= half_y + 1e-9; dy += step)
            for (double dp = -half_p; dp <= half_p + 1e-9; dp += step)
                for (double dr = -half_r; dr <= half_r + 1e-9; dr += step) {
                    Pose p = centre;
                    p.yaw = degrees_to_radians(yc + dy);
                    p.pitch = degrees_to_radians(pc + dp);
                    p.roll = degrees_to_radians(rc + dr);
                    double e = 0.0;
                    const Pose solved = solve(p, e);
                    if (e < best_error) {
                        best_error = e;
                        best = solved;
                    }
                }
    };
    scan(0.0, 0.0, 0.0, 60.0, 30.0, 20.0, 5.0);
    scan(radians_to_degrees(best.yaw), radians_to_degrees(best.pitch), radians_to_degrees(best.roll), 4.0, 4.0, 4.0,
         1.0);
    return best;
}

SceneParams search_yaw(const MorphableModel& model, const ImageRGB& image, const SceneParams& init,
                       const FitConfig& config)
{
    const Posterior post(model, image, nullptr, init, config);
    SceneParams best = init;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int deg = -45; deg <= 45; deg += 15) {
        Evaluation e;
        e.scene = init;
        e.scene.pose.yaw = degrees_to_radians(deg);
        e.code = LatentCode::zeros(model.shape.rank(), model.albedo.rank());
        if (!post.update(e, std::nullopt))
            continue;
        const IlluminationEstimate light = estimate_illumination(e.render, model.mean.triangles, e.albedo, e.normals,
                                                                 e.scene.pose.rotation(), image);
        e.scene.illumination = light.coefficients;
        post.update(e, Block::illumination);
        if (e.total() > best_score) {
            best_score = e.total();
            best = e.scene;
        }
    }
    return best;
}

RecognitionResult recognize(const LatentCode& probe, const std::vector<std::pair<std::string, LatentCode>>& gallery)
{
    if (gallery.empty())
        throw usage_error("recognition needs a non-empty gallery");
    RecognitionResult r;
    r.similarity = -std::numeric_limits<double>::infinity();
    const VectorX p = probe.joint();
    for (std::size_t i = 0; i < gallery.size(); ++i) {
        const VectorX g = gallery[i].second.joint();
        if (g.size() != p.size())
            throw data_error("gallery entry '" + gallery[i].first + "' has latent dimension " +
                             std::to_string(g.size()) + ", probe has " + std::to_string(p.size()));
        const double s = cosine_similarity(p, g);
        r.similarities.push_back(s);
        if (s > r.similarity) {
            r.similarity = s;
            r.index = static_cast<Index>(i);
            r.identity = gallery[i].first;
        }
    }
    return r;
}

bool quality_check_silhouette(const RenderOutput& fit, const RenderOutput& reference, double r1)
{
    if (fit.width != reference.width || fit.height != reference.height)
        throw data_error("silhouette check: image sizes differ");
    return silhouette_iou(fit.silhouette, reference.silhouette) >= r1;
}

nlohmann::json code_to_json(const LatentCode& code)
{
    return {{"shape", std::vector<double>(code.shape.data(), code.shape.data() + code.shape.size())},
            {"albedo", std::vector<double>(code.albedo.data(), code.albedo.data() + code.albedo.size())}};
}

LatentCode code_from_json(const nlohmann::json& j)
{
    try {
        const auto s = j.at("shape").get<std::vector<double>>();
        const auto a = j.at("albedo").get<std::vector<double>>();
        LatentCode c;
        c.shape = Eigen::Map<const VectorX>(s.data(), Index(s.size()));
        c.albedo = Eigen::Map<const VectorX>(a.data(), Index(a.size()));
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("latent code: ") + e.what());
    }
}

nlohmann::json fit_to_json(const FitResult& fit)
{
    return {{"scene", to_json(fit.best.scene)},
            {"code", code_to_json(fit.best.code)},
            {"log_posterior", fit.best.log_posterior},
            {"iteration", fit.best.iteration},
            {"phase1_end",
             {{"scene", to_json(fit.phase1_end.scene)},
              {"code", code_to_json(fit.phase1_end.code)},
              {"log_posterior", fit.phase1_end.log_posterior}}},
            {"diagnostics", fit.trace.to_json()}};
}

ChainState state_from_fit_json(const nlohmann::json& j)
{
    ChainState s;
    try {
        s.scene = scene_from_json(j.at("scene"));
        s.code = code_from_json(j.at("code"));
        s.log_posterior = j.value("log_posterior", 0.0);
        s.iteration = j.value("iteration", 0);
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("fit document: ") + e.what());
    }
    return s;
}

SceneParams initial_scene(const MorphableModel& model, const ImageRGB& image, const LandmarkSet* landmarks,
                          const InitConfig& init, const FitConfig& config, std::string* source)
{
    if (!(init.focal_per_height > 0.0 && init.distance > near_plane))
        throw usage_error("initial scene: focal and distance must be positive");
    SceneParams scene;
    scene.camera = Camera::centered(image.width, image.height, init.focal_per_height * image.height);
    scene.pose.translation = Vec3(0.0, 0.0, init.distance);
    scene.illumination = ambient_illumination();
    int usable = 0;
    if (landmarks)
        for (const auto& o : landmarks->observations)
            usable += landmarks->vertex_of(o.name).has_value();
    if (usable >= 3) {
        scene.pose = pose_from_landmarks(model.mean, *landmarks, scene.camera);
        if (source)
            *source = "landmarks";
        return scene;
    }
    if (source)
        *source = "yaw-search";
    return search_yaw(model, image, scene, config);
}

} // namespace gpmm
