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
#include "gpmm/learn.hpp"

#include "gpmm/registration.hpp"

#include <cmath>
#include <limits>

namespace gpmm {

namespace {

std::string drift_reference_name(DriftReference r)
{
    return r == DriftReference::refinement ? "final fit vs per-vertex albedo refined from the image"
                                           : "phase-1-end fit vs final fit";
}

} // namespace

void LearnConfig::validate() const
{
    if (iterations < 1)
        throw usage_error("learn needs at least one iteration");
    if (!(r1 > 0.0 && r1 <= 1.0))
        throw usage_error("r1 must lie in (0, 1]");
    if (!(r2 > 0.0))
        throw usage_error("r2 must be positive");
    if (!(r3 >= 0.0))
        throw usage_error("r3 must be non-negative");
    if (!(spike_threshold > 0.0))
        throw usage_error("spike threshold must be positive");
    fit.validate();
}

nlohmann::json LearnConfig::to_json() const
{
    return {{"iterations", iterations},
            {"r1", r1},
            {"r2", r2},
            {"r3", r3},
            {"spike_threshold", spike_threshold},
            {"focal_per_height", focal_per_height},
            {"distance", distance},
            {"seed", seed},
            {"fit", fit.to_json()},
            {"albedo_drift_reference", drift_reference_name(drift_reference)},
            {"silhouette_reference", "phase-1-end render"}};
}

nlohmann::json IterationReport::to_json() const
{
    nlohmann::json imgs = nlohmann::json::array();
    for (const auto& d : images)
        imgs.push_back({{"name", d.name},
                        {"init_source", d.init_source},
                        {"log_posterior", d.log_posterior},
                        {"silhouette_iou", d.silhouette_iou},
                        {"passed_silhouette", d.passed_silhouette},
                        {"albedo_drift", d.albedo_drift},
                        {"passed_albedo_drift", d.passed_albedo_drift},
                        {"used", d.used},
                        {"error", d.error}});
    return {{"iteration", iteration},
            {"attempted", attempted},
            {"passed_silhouette", passed_silhouette},
            {"passed_albedo_drift", passed_albedo_drift},
            {"used_for_pca", used_for_pca},
            {"albedo_threshold", albedo_threshold},
            {"albedo_drift_reference", drift_reference},
            {"success", success},
            {"message", message},
            {"model_path", model_path},
            {"images", imgs}};
}

AlbedoRefinement refine_albedo(const Mesh& fitted, const ImageRGB& image, const SceneParams& scene)
{
    if (image.width != scene.camera.width || image.height != scene.camera.height)
        throw usage_error("refine_albedo: image size differs from the camera");
    AlbedoRefinement out;
    out.albedo = fitted.albedo;
    const RenderOutput rendered = rasterize(fitted, scene);
    const auto inside = [&](int x, int y) {
        return x >= 0 && y >= 0 && x < image.width && y < image.height && rendered.silhouette(image.index(x, y));
    };
    for (Index v = 0; v < fitted.num_vertices(); ++v) {
        const Projected proj = project(scene.camera, scene.pose, fitted.vertices.col(v));
        if (!proj.valid)
            continue;
        const int x = int(std::lround(proj.pixel.x())), y = int(std::lround(proj.pixel.y()));
        if (!(inside(x, y) && inside(x - 1, y) && inside(x + 1, y) && inside(x, y - 1) && inside(x, y + 1)))
            continue;
        const Index p = image.index(x, y);
        if (std::abs(rendered.depth(p) - proj.depth) > 2.0)
            continue;
        const Vec3 model = rendered.color.pixels.col(p);
        if (model.minCoeff() < 0.02)
            continue;
        const Vec3 ratio = image.pixels.col(p).cwiseQuotient(model);
        out.albedo.col(v) = fitted.albedo.col(v).cwiseProduct(ratio).cwiseMax(0.0).cwiseMin(1.0);
        out.visible.push_back(int(v));
    }
    return out;
}

double albedo_drift(const Points3d& albedo, const AlbedoRefinement& refined)
{
    if (refined.visible.empty())
        return std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (int v : refined.visible)
        sum += (albedo.col(v) - refined.albedo.col(v)).norm();
    return 255.0 * sum / double(refined.visible.size());
}

Mesh denoise_shape(const Mesh& mesh, double threshold)
{
    Mesh out = mesh;
    if (!std::isfinite(threshold))
        return out;
    const Index n = mesh.num_vertices();
    const auto rings = vertex_neighbors(mesh.triangles, n);
    std::vector<char> spike(std::size_t(n), 0);
    for (Index v = 0; v < n; ++v) {
        if (rings[v].empty())
            continue;
        Vec3 avg = Vec3::Zero();
        for (int u : rings[v])
            avg += mesh.vertices.col(u);
        avg /= double(rings[v].size());
        spike[v] = (Vec3(mesh.vertices.col(v)) - avg).norm() > threshold;
    }
    for (Index v = 0; v < n; ++v) {
        if (!spike[v])
            continue;
        Vec3 clean = Vec3::Zero(), all = Vec3::Zero();
        int clean_count = 0;
        for (int u : rings[v]) {
            all += mesh.vertices.col(u);
            if (!spike[u]) {
                clean += mesh.vertices.col(u);
                ++clean_count;
            }
        }
        out.vertices.col(v) = clean_count > 0 ? Vec3(clean / clean_count) : Vec3(all / double(rings[v].size()));
    }
    return out;
}

ImageRGB flip_image(const ImageRGB& image)
{
    ImageRGB out = image;
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            out.pixels.col(out.index(image.width - 1 - x, y)) = image.pixels.col(image.index(x, y));
    return out;
}

std::string swap_left_right(const std::string& name)
{
    std::string out;
    for (std::size_t i = 0; i < name.size();) {
        if (name.compare(i, 4, "left") == 0) {
            out += "right";
            i += 4;
        } else if (name.compare(i, 5, "right") == 0) {
            out += "left";
            i += 5;
        } else if (name.compare(i, 4, "Left") == 0) {
            out += "Right";
            i += 4;
        } else if (name.compare(i, 5, "Right") == 0) {
            out += "Left";
            i += 5;
        } else {
            out += name[i++];
        }
    }
    return out;
}

std::vector<TrainingImage> flip_augment(const std::vector<TrainingImage>& images)
{
    std::vector<TrainingImage> out = images;
    out.reserve(images.size() * 2);
    for (const auto& im : images) {
        TrainingImage f;
        f.name = im.name + "_flip";
        f.image = flip_image(im.image);
        if (im.landmarks) {
            f.landmarks = im.landmarks;
            for (auto& obs : f.landmarks->observations) {
                obs.name = swap_left_right(obs.name);
                obs.pixel.x() = double(im.image.width) - 1.0 - obs.pixel.x();
            }
        }
        if (im.init) {
            SceneParams s = *im.init;
            s.pose.yaw = -s.pose.yaw;
            s.pose.roll = -s.pose.roll;
            s.pose.translation.x() = -s.pose.translation.x();
            s.camera.principal.x() = double(s.camera.width) - s.camera.principal.x();
            for (int c = 0; c < 3; ++c)
                for (int k : {3, 4, 7}) // SH terms odd in camera x
                    s.illumination(k, c) = -s.illumination(k, c);
            f.init = s;
        }
        out.push_back(std::move(f));
    }
    return out;
}

LearnOutcome learn_iteration(const MorphableModel& model, const std::vector<TrainingImage>& images,
                             const LearnConfig& config, int iteration)
{
    config.validate();
    LearnOutcome outcome{model, {}};
    IterationReport& report = outcome.report;
    report.iteration = iteration;
    report.albedo_threshold = config.albedo_threshold(iteration);
    report.drift_reference = drift_reference_name(config.drift_reference);

    std::vector<Mesh> survivors;
    for (const auto& im : images) {
        ImageDiagnostics d;
        d.name = im.name;
        ++report.attempted;
        try {
            FitConfig fc = config.fit;
            fc.seed = substream_seed(config.seed, "learn/" + std::to_string(iteration) + "/" + im.name);
            SceneParams init;
            const LandmarkSet* lms = im.landmarks && !im.landmarks->observations.empty() ? &*im.landmarks : nullptr;
            if (im.init) {
                init = *im.init;
                d.init_source = "scene";
            } else {
                init = initial_scene(model, im.image, lms, InitConfig{config.focal_per_height, config.distance}, fc,
                                     &d.init_source);
            }
            const FitResult fit = fit_image(model, im.image, lms, init, fc);
            d.log_posterior = fit.best.log_posterior;
            const Mesh final_mesh = instance(model, fit.best.code);
            const Mesh reference = instance(model, fit.phase1_end.code);
            const RenderOutput fit_render = rasterize_geometry(final_mesh.vertices, final_mesh.triangles, fit.best.scene);
            const RenderOutput ref_render =
                rasterize_geometry(reference.vertices, reference.triangles, fit.phase1_end.scene);
            d.silhouette_iou = silhouette_iou(fit_render.silhouette, ref_render.silhouette);
            d.passed_silhouette = quality_check_silhouette(fit_render, ref_render, config.r1);
            if (config.drift_reference == DriftReference::refinement)
                d.albedo_drift = albedo_drift(final_mesh.albedo, refine_albedo(final_mesh, im.image, fit.best.scene));
            else
                d.albedo_drift = 255.0 * mean_correspondence_distance(final_mesh.albedo, reference.albedo);
            if (d.passed_silhouette) {
                ++report.passed_silhouette;
                d.passed_albedo_drift = d.albedo_drift <= report.albedo_threshold;
                if (d.passed_albedo_drift) {
                    ++report.passed_albedo_drift;
                    survivors.push_back(denoise_shape(final_mesh, config.spike_threshold));
                }
            }
        } catch (const Error& e) {
            d.error = e.what();
        }
        report.images.push_back(std::move(d));
    }

    if (survivors.size() < 2) {
        report.success = false;
        report.message = "only " + std::to_string(survivors.size()) +
                         " fits survived quality control; previous model retained";
        return outcome;
    }
    for (std::size_t i = 1; i < survivors.size(); ++i) {
        const RigidTransform t = umeyama_align(survivors[i].vertices, survivors[0].vertices);
        survivors[i].vertices = t.apply(survivors[i].vertices);
    }
    // Survivors share the first survivor's frame; move the set into the input model's frame.
    Points3d centre = Points3d::Zero(3, survivors[0].vertices.cols());
    for (const auto& m : survivors)
        centre += m.vertices;
    centre /= double(survivors.size());
    const RigidTransform back = umeyama_align(centre, model.mean.vertices);
    for (auto& m : survivors)
        m.vertices = back.apply(m.vertices);
    outcome.model = build_pca_model(survivors);
    outcome.model.provenance["learn_iteration"] = iteration;
    outcome.model.provenance["parent"] = model.provenance;
    report.used_for_pca = static_cast<int>(survivors.size());
    std::size_t s = 0;
    for (auto& d : report.images)
        if (d.passed_albedo_drift && s < survivors.size()) {
            d.used = true;
            ++s;
        }
    report.success = true;
    report.message = "model rebuilt from " + std::to_string(survivors.size()) + " fits";
    return outcome;
}

} // namespace gpmm
