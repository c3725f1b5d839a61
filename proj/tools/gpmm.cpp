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
#include "run_context.hpp"

#include "gpmm/archive.hpp"
#include "gpmm/image_io.hpp"
#include "gpmm/inference.hpp"
#include "gpmm/kde.hpp"
#include "gpmm/learn.hpp"
#include "gpmm/mesh_io.hpp"
#include "gpmm/metrics.hpp"
#include "gpmm/model_io.hpp"
#include "gpmm/registration.hpp"
#include "gpmm/synthetic.hpp"

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>

namespace fs = std::filesystem;
using namespace gpmm;
using gpmm::cli::RunContext;

namespace {

int exit_code(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::usage: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::numerical: return 4;
    }
    return 4;
}

std::string kind_name(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::data: return "data";
    case ErrorKind::numerical: return "numerical";
    }
    return "numerical";
}

void write_json(const std::string& path, const nlohmann::json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const std::string& path)
{
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw data_error(path + ": " + e.what());
    }
}

std::vector<std::string> list_files(const std::string& dir, const std::vector<std::string>& extensions)
{
    if (!fs::is_directory(dir))
        throw data_error("'" + dir + "' is not a directory");
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file())
            continue;
        const std::string name = e.path().filename().string();
        for (const auto& ext : extensions)
            if (name.size() > ext.size() && name.compare(name.size() - ext.size(), ext.size(), ext) == 0 &&
                name.find(".manifest.") == std::string::npos) {
                out.push_back(e.path().string());
                break;
            }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string stem_of(const std::string& path, const std::string& extension)
{
    std::string name = fs::path(path).filename().string();
    if (name.size() >= extension.size() && name.compare(name.size() - extension.size(), extension.size(), extension) == 0)
        name.resize(name.size() - extension.size());
    return name;
}

void make_parent(const std::string& path)
{
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty())
        fs::create_directories(parent);
}

std::string numbered(const std::string& prefix, int i, const std::string& suffix)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%03d", i);
    return prefix + buf + suffix;
}

std::optional<Index> components(int n) { return n < 0 ? std::nullopt : std::optional<Index>(n); }

struct FitOptions
{
    int n1 = 1000;
    int n2 = 10000;
    double sigma = 0.043;
    int illumination_interval = 500;
    int shape_components = -1;
    int albedo_components = -1;
    double focal_per_height = InitConfig{}.focal_per_height;
    double distance = InitConfig{}.distance;

    void add(CLI::App* app)
    {
        app->add_option("--n1", n1, "illumination-only steps")->capture_default_str();
        app->add_option("--n2", n2, "full steps")->capture_default_str();
        app->add_option("--sigma", sigma, "foreground noise std")->capture_default_str();
        app->add_option("--illumination-interval", illumination_interval, "steps between light estimates")
            ->capture_default_str();
        app->add_option("--shape-components", shape_components, "free shape components, -1 for all")
            ->capture_default_str();
        app->add_option("--albedo-components", albedo_components, "free albedo components, -1 for all")
            ->capture_default_str();
        app->add_option("--focal-per-height", focal_per_height, "focal length over image height")
            ->capture_default_str();
        app->add_option("--distance", distance, "initial camera distance, mm")->capture_default_str();
    }

    FitConfig config(std::uint64_t seed) const
    {
        FitConfig c;
        c.illumination_steps = n1;
        c.full_steps = n2;
        c.foreground_sigma = sigma;
        c.illumination_interval = illumination_interval;
        c.shape_components = components(shape_components);
        c.albedo_components = components(albedo_components);
        c.seed = seed;
        c.validate();
        return c;
    }

    InitConfig init() const { return {focal_per_height, distance}; }
};

struct BuildOptions
{
    std::string kernel = "standard-full";
    std::vector<std::string> overrides;
    int rank = 50;
    int albedo_rank = -1;
    int points = 500;

    void add(CLI::App* app)
    {
        app->add_option("--kernel", kernel, "kernel recipe")->capture_default_str();
        app->add_option("--set", overrides, "hyperparameter override key=value");
        app->add_option("--rank", rank, "shape rank")->capture_default_str();
        app->add_option("--albedo-rank", albedo_rank, "albedo rank, -1 for the shape rank")->capture_default_str();
        app->add_option("--nystrom-points", points, "Nystrom sample vertices")->capture_default_str();
    }

    KernelRecipe recipe() const
    {
        KernelHyperparameters h;
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw usage_error("--set expects key=value, got '" + kv + "'");
            h.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        return gpmm::recipe(kernel, h);
    }

    std::pair<NystromConfig, NystromConfig> nystrom(std::uint64_t seed) const
    {
        if (rank < 1 || points < 1)
            throw usage_error("rank and Nystrom points must be positive");
        NystromConfig s;
        s.rank = rank;
        s.landmarks = points;
        s.seed = substream_seed(seed, "nystrom/shape");
        NystromConfig a = s;
        a.rank = albedo_rank < 0 ? rank : albedo_rank;
        a.seed = substream_seed(seed, "nystrom/albedo");
        return {s, a};
    }
};

std::optional<LandmarkSet> landmarks_from(const std::string& path, RunContext& run)
{
    if (path.empty())
        return std::nullopt;
    run.input(path);
    return load_landmarks(path);
}

FitResult fit_one(const MorphableModel& model, const ImageRGB& image, const std::optional<LandmarkSet>& landmarks,
                  const std::string& scene_path, const FitOptions& opts, std::uint64_t seed)
{
    const FitConfig config = opts.config(seed);
    const LandmarkSet* lms = landmarks && !landmarks->observations.empty() ? &*landmarks : nullptr;
    const SceneParams init = scene_path.empty() ? initial_scene(model, image, lms, opts.init(), config)
                                                : scene_from_json(read_json(scene_path));
    return fit_image(model, image, lms, init, config);
}

/// One subcommand: its options live in `state`, `run` does the work.
struct Command
{
    CLI::App* app = nullptr;
    std::shared_ptr<void> state;
    std::function<std::string()> primary;
    std::function<std::uint64_t()> seed;
    std::function<void(RunContext&)> run;
};

template <typename S>
Command make_command(CLI::App& root, const std::string& name, const std::string& help)
{
    Command c;
    c.app = root.add_subcommand(name, help);
    c.state = std::make_shared<S>();
    return c;
}

struct TemplateArgs
{
    std::string out, landmarks_out;
    int rows = 32, cols = 32;
    double nose = 22.0;
    bool plain = false;
};

struct BuildArgs
{
    std::string templ, out;
    bool fallback_albedo = false;
    std::uint64_t seed = 0;
    BuildOptions build;
};

struct SampleArgs
{
    std::string model, out_dir;
    int count = 1;
    std::uint64_t seed = 0;
};

struct RenderArgs
{
    std::string mesh, model, code, landmarks, out, landmarks_out, scene_out;
    int width = 128, height = 128;
    double yaw = 0, pitch = 0, roll = 0, tx = 0, ty = 0, distance = 600.0, focal = -1.0;
    double ambient = 1.0, directional = 0.0;
    std::vector<double> light_dir{0.0, 0.0, 1.0};
    double landmark_sigma = 4.0;
};

struct MetricsArgs
{
    std::string model, dataset, out_dir, channel = "shape";
    int samples = 100;
    std::uint64_t seed = 0;
};

struct FitArgs
{
    std::string model, image, landmarks, scene, out, render_out, mesh_out;
    std::uint64_t seed = 0;
    FitOptions fit;
};

struct RecognizeArgs
{
    std::string gallery, probe, out;
};

struct RegisterArgs
{
    std::string model, scan, out, report, mode = "full";
    int steps = 4000, shape_components = -1, albedo_components = -1;
    double shape_weight = RegistrationConfig{}.shape_weight, albedo_weight = RegistrationConfig{}.albedo_weight;
    bool no_pose = false;
    std::uint64_t seed = 0;
};

struct PcaArgs
{
    std::string in, out;
};

struct KdeBuildArgs
{
    std::vector<std::string> templates;
    std::string out;
    std::uint64_t seed = 0;
    BuildOptions build;
};

struct KdeFitArgs
{
    std::string mixture, image, landmarks, scene, out;
    std::uint64_t seed = 0;
    FitOptions fit;
};

struct KdeRecognizeArgs
{
    std::string gallery, probe, out;
};

struct LearnArgs
{
    std::string model, images, out;
    int iterations = 1;
    double r1 = 0.625, r2 = 8.0, r3 = 0.5, spike = 10.0;
    std::string drift_reference = "refinement";
    bool flip = false;
    std::uint64_t seed = 0;
    FitOptions fit;
};

std::vector<Command> register_commands(CLI::App& root)
{
    std::vector<Command> cmds;

    {
        auto c = make_command<TemplateArgs>(root, "template", "write the synthetic face template");
        auto* a = static_cast<TemplateArgs*>(c.state.get());
        c.app->add_option("--out", a->out, "PLY path")->required();
        c.app->add_option("--landmarks-out", a->landmarks_out, "landmark CSV path");
        c.app->add_option("--rows", a->rows)->capture_default_str();
        c.app->add_option("--cols", a->cols)->capture_default_str();
        c.app->add_option("--nose", a->nose, "nose height, mm")->capture_default_str();
        c.app->add_flag("--plain", a->plain, "no eyes, brows or lips");
        c.primary = [a] { return a->out; };
        c.seed = [] { return std::uint64_t(0); };
        c.run = [a](RunContext& run) {
            FaceTemplateOptions o;
            o.rows = a->rows;
            o.cols = a->cols;
            o.nose = a->nose;
            o.features = !a->plain;
            const FaceTemplate t = make_face_template(o);
            make_parent(a->out);
            save_ply(t.mesh, a->out);
            run.output(a->out);
            if (!a->landmarks_out.empty()) {
                LandmarkSet l;
                l.points = t.landmarks;
                make_parent(a->landmarks_out);
                save_landmarks(l, a->landmarks_out);
                run.output(a->landmarks_out);
            }
        };
        cmds.push_back(std::move(c));
    }

    {
        auto c = make_command<BuildArgs>(root, "build", "build a GP morphable model from a template mesh");
        auto* a = static_cast<BuildArgs*>(c.state.get());
        c.app->add_option("--template", a->templ, "template PLY or OBJ")->required();
        c.app->add_option("--out", a->out, "model archive")->required();
        c.app->add_flag("--fallback-albedo", a->fallback_albedo, "gray albedo when the template has no colour");
        c.app->add_option("--seed", a->seed)->capture_default_str();
        a->build.add(c.app);
        c.primary = [a] { return a->out; };
        c.seed = [a] { return a->seed; };
        c.run = [a](RunContext& run) {
            run.input(a->templ);
            MeshReadOptions ro;
            ro.fallback_albedo = a->fallback_albedo;
            const Mesh templ = load_mesh(a->templ, ro);
            const KernelRecipe r = a->build.recipe();
            const auto [s, al] = a->build.nystrom(a->seed);
            const MorphableModel m = build_gp_model(templ, r, s, al);
            make_parent(a->out);
            save_model(m, a->out);
            run.output(a->out);
            for (const auto& w : m.shape.warnings)
                std::cerr << "warning: shape: " << w << "\n";
            for (const auto& w : m.albedo.warnings)
                std::cerr << "warning: albedo: " << w << "\n";
        };
        cmds.push_back(std::move(c));
    }

    {
        auto c = make_command<SampleArgs>(root, "sample", "draw random instances of a model");
        auto* a = static_cast<SampleArgs*>(c.state.get());
        c.app->add_option("--model", a->model)->required();
        c.app->add_option("--count", a->count)->capture_default_str();
        c.app->add_option("--seed", a->seed)->capture_default_str();
        c.app->add_option("--out-dir", a->out_dir)->required();
        c.primary = [a] { return a->out_dir; };
        c.seed = [a] { return a->seed; };
        c.run = [a](RunContext& run) {
            if (a->count < 0)
                throw usage_error("--count must be non-negative");
            run.input(a->model);
            const MorphableModel m = load_model(a->model);
            fs::create_directories(a->out_dir);
            for (int i = 0; i < a->count; ++i) {
                const Sample s = sample(m, substream_seed(a->seed, "sample/" + std::to_string(i)));
                const std::string base = (fs::path(a->out_dir) / numbered("sample-", i, "")).string();
                save_ply(s.mesh, base + ".ply");
                write_json(base + ".json", {{"code", code_to_json(s.code)}});
                run.output(base + ".ply");
                run.output(base + ".json");
            }
        };
        cmds.push_back(std::move(c));
    }

    {
        auto c = make_command<RenderArgs>(root, "render", "render a mesh or model instance to PNG");
        auto* a = static_cast<RenderArgs*>(c.state.get());
        c.app->add_option("--mesh", a->mesh, "mesh to render");
        c.app->add_option("--model", a->model, "model whose instance is rendered");
        c.app->add_option("--code", a->code, "JSON with a \"code\" (model mean if absent)");
        c.app->add_option("--landmarks", a->landmarks, "CSV of 3D landmark vertices to project");
        c.app->add_option("--out", a->out, "PNG path")->required();
        c.app->add_option("--landmarks-out", a->landmarks_out, "CSV with the projected landmarks");
        c.app->add_option("--scene-out", a->scene_out, "JSON with the scene");
        c.app->add_option("--width", a->width)->capture_default_str();
        c.app->add_option("--height", a->height)->capture_default_str();
        c.app->add_option("--yaw", a->yaw, "degrees")->capture_default_str();
        c.app->add_option("--pitch", a->pitch, "degrees")->capture_default_str();
        c.app->add_option("--roll", a->roll, "degrees")->capture_default_str();
        c.app->add_option("--tx", a->tx, "mm")->capture_default_str();
        c.app->add_option("--ty", a->ty, "mm")->capture_default_str();
        c.app->add_option("--distance", a->distance, "mm")->capture_default_str();
        c.app->add_option("--focal", a->focal, "pixels; -1 frames a 200 mm face in half the height")
            ->capture_default_str();
        c.app->add_option("--ambient", a->ambient)->capture_default_str();
        c.app->add_option("--directional", a->directional)->capture_default_str();
        c.app->add_option("--light-dir", a->light_dir, "towards the light, camera frame")->expected(3);
        c.app->add_option("--landmark-sigma", a->landmark_sigma, "pixels")->capture_default_str();
        c.primary = [a] { return a->out; };
        c.seed = [] { return std::uint64_t(0); };
        c.run = [a](RunContext& run) {
            if (a->mesh.empty() == a->model.empty())
                throw usage_error("render needs exactly one of --mesh and --model");
            Mesh mesh;
            if (!a->mesh.empty()) {
                run.input(a->mesh);
                mesh = load_mesh(a->mesh);
            } else {
                run.input(a->model);
                const MorphableModel m = load_model(a->model);
                LatentCode code = LatentCode::zeros(m.shape.rank(), m.albedo.rank());
                if (!a->code.empty()) {
                    run.input(a->code);
                    code = code_from_json(read_json(a->code).at("code"));
                }
                mesh = instance(m, code);
            }
            SceneParams scene = default_scene(a->width, a->height, a->distance);
            if (a->focal > 0.0)
                scene.camera.focal = a->focal;
            scene.pose.yaw = degrees_to_radians(a->yaw);
            scene.pose.pitch = degrees_to_radians(a->pitch);
            scene.pose.roll = degrees_to_radians(a->roll);
            scene.pose.translation = Vec3(a->tx, a->ty, a->distance);
            scene.illumination = a->directional == 0.0
                                     ? ambient_illumination(a->ambient)
                                     : directional_illumination(a->ambient, a->directional,
                                                                Vec3(a->light_dir[0], a->light_dir[1], a->light_dir[2]));
            scene.camera.validate();
            const RenderOutput r = rasterize(mesh, scene);
            make_parent(a->out);
            save_png(r.color, a->out);
            run.output(a->out);
            if (!a->scene_out.empty()) {
                make_parent(a->scene_out);
                write_json(a->scene_out, to_json(scene));
                run.output(a->scene_out);
            }
            if (!a->landmarks.empty()) {
                run.input(a->landmarks);
                LandmarkSet l = load_landmarks(a->landmarks);
                l.validate(mesh.num_vertices());
                l.observations.clear();
                for (const auto& p : l.points) {
                    const Projected pr = project(scene.camera, scene.pose, mesh.vertices.col(p.vertex));
                    if (pr.valid)
                        l.observations.push_back({p.name, pr.pixel, a->landmark_sigma});
                }
                const std::string path = a->landmarks_out.empty() ? a->out + ".landmarks.csv" : a->landmarks_out;
                make_parent(path);
                save_landmarks(l, path);
                run.output(path);
            }
        };
        cmds.push_back(std::move(c));
    }

    {
        auto c = make_command<MetricsArgs>(root, "metrics", "specificity, generalization and compactness curves");
        auto* a = static_cast<MetricsArgs*>(c.state.get());
        c.app->add_option("--model", a->model)->required();
        c.app->add_option("--dataset", a->dataset, "directory of meshes in model topology")->required();
        c.app->add_option("--out-dir", a->out_dir)->required();
        c.app->add_option("--channel", a->channel, "shape or albedo")->capture_default_str();
        c.app->add_option("--samples", a->samples, "specificity samples per count")->capture_default_str();
        c.app->add_option("--seed", a->seed)->capture_default_str();
        c.primary = [a] { return a->out_dir; };
        c.seed = [a] { return a->seed; };
        c.run = [a](RunContext& run) {
            Channel ch;
            if (a->channel == "shape")
                ch = Channel::shape;
            else if (a->channel == "albedo")
                ch = Channel::albedo;
            else
                throw usage_error("--channel must be shape or albedo");
            if (a->samples < 1)
                throw usage_error("--samples must be positive");
            run.input(a->model);
            run.input(a->dataset);
            const MorphableModel m = load_model(a->model);
            std::vector<Mesh> data;
            for (const auto& f : list_files(a->dataset, {".ply", ".obj"}))
                data.push_back(load_mesh(f));
            if (data.empty())
                throw data_error("metrics: no meshes in '" + a->dataset + "'");
            const auto counts = all_counts(m, ch);
            const std::vector<MetricCurve> curves{
                specificity(m, data, counts, a->samples, substream_seed(a->seed, "specificity"), ch),
                generalization(m, data, counts, ch), compactness(m, counts, ch)};
            fs::create_directories(a->out_dir);
            for (const auto& curve : curves) {
                const std::string path = (fs::path(a->out_dir) / (channel_name(ch) + "-" +
                                                                  metric_name(curve.metric) + ".csv"))
                                             .string();
                write_file_atomic(path, curve_to_csv(curve));
                run.output(path);
            }
            const std::string svg = (fs::path(a->out_dir) / (channel_name(ch) + "-curves.svg")).string();
            write_file_atomic(svg, curves_to_svg(curves, channel_name(ch)));
            run.output(svg);
        };
        cmds.push_back(std::move(c));
    }

    {
        auto c = make_command<FitArgs>(root, "fit", "fit a model to one image");
        auto* a = static_cast<FitArgs*>(c.state.get());
        c.app->add_option("--model", a->model)->required();
        c.app->add_option("--image", a->image, "PNG")->required();
        c.app->add_option("--landmarks", a->landmarks, "CSV with 3D landmark vertices and 2D observations");
        c.app->add_option("--scene", a->scene, "initial scene JSON instead of landmarks or yaw search");
        c.app->add_option("--out", a->out, "fit JSON")->required();
        c.app->add_option("--render-out", a->render_out, "PNG of the fitted state");
        c.app->add_option("--mesh-out", a->mesh_out, "PLY of the fitted instance");
        c.app->add_option("--seed", a->seed)->capture_default_str();
        a->fit.add(c.app);
        c.primary = [a] { return a->out; };
        c.seed = [a] { return a->seed; };
        c.run = [a](RunContext& run) {
            run.input(a->model);
            run.input(a->image);
            if (!a->scene.empty())
                run.input(a->scene);
            const MorphableModel m = load_model(a->model);
            const ImageRGB image = load_png(a->image);
            const auto lms = landmarks_from(a->landmarks, run);
            const FitResult fit = fit_one(m, image, lms, a->scene, a->fit, substream_seed(a->seed, "fit"));
            make_parent(a->out);
            write_json(a->out, fit_to_json(fit));
            run.output(a->out);
            const Mesh fitted = instance(m, fit.best.code);
            if (!a->render_out.empty()) {
                make_parent(a->render_out);
                save_png(rasterize(fitted, fit.best.scene).color, a->render_out);
                run.output(a->render_out);
            }
            if (!a->mesh_out.empty()) {
                make_parent(a->mesh_out);
                save_ply(fitted, a->mesh_out);
                run.output(a->mesh_out);
            }
        };
        cmds.push_back(std::move(c));
    }

    {
        auto c = make_command<RecognizeArgs>(root, "recognize", "match a probe fit against a gallery of fits");
        auto* a = static_cast<RecognizeArgs*>(c.state.get());
        c.app->add_option("--gallery", a->gallery, "directory of fit JSON files, one per identity")->required();
        c.app->add_option("--probe", a->probe, "fit JSON")->required();
        c.app->add_option("--out", a->out, "result JSON")->required();
        c.primary = [a] { return a->out; };
        c.seed = [] { return std::uint64_t(0); };
        c.run = [a](RunContext& run) {
            run.input(a->gallery);
            run.input(a->probe);
            std::vector<std::pair<std::string, LatentCode>> gallery;
            for (const auto& f : list_files(a->gallery, {".json"}))
                gallery.emplace_back(stem_of(f, ".json"), state_from_fit_json(read_json(f)).code);
            if (gallery.empty())
                throw data_error("recognize: gallery '" + a->gallery + "' holds no fits");
            const RecognitionResult r = recognize(state_from_fit_json(read_json(a->probe)).code, gallery);
            nlohmann::json table = nlohmann::json::array();
            for (std::size_t i = 0; i < gallery.size(); ++i)
                table.push_back({{"identity", gallery[i].first}, {"similarity", r.similarities[i]}});
            make_parent(a->out);
            write_json(a->out, {{"identity", r.identity}, {"similarity", r.similarity}, {"table", table}});
            run.output(a->out);
        };
        cmds.push_back(std::move(c));
    }

    {
        auto c = make_command<RegisterArgs>(root, "register", "register a model to a scan");
        auto* a = static_cast<RegisterArgs*>(c.state.get());
        c.app->add_option("--model", a->model)->required();
        c.app->add_option("--scan", a->scan, "PLY or OBJ")->required();
        c.app->add_option("--out", a->out, "registered PLY")->required();
        c.app->add_option("--report", a->report, "JSON with code, pose and diagnostics (default <out>.json)");
        c.app->add_option("--mode", a->mode, "shape-only or full")->capture_default_str();
        c.app->add_option("--steps", a->steps)->capture_default_str();
        c.app->add_option("--shape-weight", a->shape_weight)->capture_default_str();
        c.app->add_option("--albedo-weight", a->albedo_weight)->capture_default_str();
        c.app->add_option("--shape-components", a->shape_components)->capture_default_str();
        c.app->add_option("--albedo-components", a->albedo_components)->capture_default_str();
        c.app->add_flag("--no-pose", a->no_pose, "keep the model frame fixed");
        c.app->add_option("--seed", a->seed)->capture_default_str();
        c.primary = [a] { return a->out; };
        c.seed = [a] { return a->seed; };
        c.run = [a](RunContext& run) {
            RegistrationConfig rc;
            if (a->mode == "shape-only")
                rc.mode = RegistrationMode::shape_only;
            else if (a->mode == "full")
                rc.mode = RegistrationMode::shape_and_albedo;
            else
                throw usage_error("--mode must be shape-only or full");
            rc.steps = a->steps;
            rc.shape_weight = a->shape_weight;
            rc.albedo_weight = a->albedo_weight;
            rc.shape_components = components(a->shape_components);
            rc.albedo_components = components(a->albedo_components);
            rc.fit_pose = !a->no_pose;
            rc.seed = substream_seed(a->seed, "register");
            run.input(a->model);
            run.input(a->scan);
            const MorphableModel m = load_model(a->model);
            MeshReadOptions ro;
            ro.fallback_albedo = rc.mode == RegistrationMode::shape_only;
            const Mesh scan = load_mesh(a->scan, ro);
            const RegistrationResult r = register_mesh(m, scan, rc);
            make_parent(a->out);
            save_ply(r.registered, a->out);
            run.output(a->out);
            const std::string report = a->report.empty() ? a->out + ".json" : a->report;
            nlohmann::json rot = nlohmann::json::array();
            for (int i = 0; i < 3; ++i)
                rot.push_back({r.pose.rotation(i, 0), r.pose.rotation(i, 1), r.pose.rotation(i, 2)});
            make_parent(report);
            write_json(report, {{"code", code_to_json(r.code)},
                                {"rotation", rot},
                                {"translation", {r.pose.translation.x(), r.pose.translation.y(), r.pose.translation.z()}},
                                {"chamfer", r.chamfer},
                                {"albedo_mse", r.albedo_mse},
                                {"log_posterior", r.log_posterior},
                                {"config", rc.to_json()},
                                {"diagnostics", r.diagnostics}});
            run.output(report);
        };
        cmds.push_back(std::move(c));
    }

    {
        auto c = make_command<PcaArgs>(root, "pca-build", "PCA model from meshes in shared topology");
        auto* a = static_cast<PcaArgs*>(c.state.get());
        c.app->add_option("--in", a->in, "directory of meshes")->required();
        c.app->add_option("--out", a->out, "model archive")->required();
        c.primary = [a] { return a->out; };
        c.seed = [] { return std::uint64_t(0); };
        c.run = [a](RunContext& run) {
            run.input(a->in);
            std::vector<Mesh> meshes;
            for (const auto& f : list_files(a->in, {".ply", ".obj"}))
                meshes.push_back(load_mesh(f));
            const MorphableModel m = build_pca_model(meshes);
            make_parent(a->out);
            save_model(m, a->out);
            run.output(a->out);
        };
        cmds.push_back(std::move(c));
    }

    {
        auto c = make_command<KdeBuildArgs>(root, "kde-build", "mixture of GP models, one per template");
        auto* a = static_cast<KdeBuildArgs*>(c.state.get());
        c.app->add_option("--template", a->templates, "template meshes")->required();
        c.app->add_option("--out", a->out, "mixture manifest JSON; component archives go beside it")->required();
        c.app->add_option("--seed", a->seed)->capture_default_str();
        a->build.add(c.app);
        c.primary = [a] { return a->out; };
        c.seed = [a] { return a->seed; };
        c.run = [a](RunContext& run) {
            std::vector<Mesh> templates;
            for (const auto& t : a->templates) {
                run.input(t);
                templates.push_back(load_mesh(t));
            }
            const auto [s, al] = a->build.nystrom(a->seed);
            const MixtureModel mix = build_mixture(templates, a->build.recipe(), s, al);
            make_parent(a->out);
            save_mixture(mix, a->out);
            run.output(a->out);
            const nlohmann::json written = read_json(a->out);
            for (const auto& comp : written.at("components"))
                run.output((fs::path(a->out).parent_path() / comp.at("model").get<std::string>()).string());
        };
        cmds.push_back(std::move(c));
    }

    {
        auto c = make_command<KdeFitArgs>(root, "kde-fit", "fit every mixture component to one image");
        auto* a = static_cast<KdeFitArgs*>(c.state.get());
        c.app->add_option("--mixture", a->mixture)->required();
        c.app->add_option("--image", a->image)->required();
        c.app->add_option("--landmarks", a->landmarks);
        c.app->add_option("--scene", a->scene);
        c.app->add_option("--out", a->out, "JSON with one fit per component")->required();
        c.app->add_option("--seed", a->seed)->capture_default_str();
        a->fit.add(c.app);
        c.primary = [a] { return a->out; };
        c.seed = [a] { return a->seed; };
        c.run = [a](RunContext& run) {
            run.input(a->mixture);
            run.input(a->image);
            if (!a->scene.empty())
                run.input(a->scene);
            const MixtureModel mix = load_mixture(a->mixture);
            const ImageRGB image = load_png(a->image);
            const auto lms = landmarks_from(a->landmarks, run);
            nlohmann::json fits = nlohmann::json::array();
            for (Index k = 0; k < mix.size(); ++k)
                fits.push_back(fit_to_json(fit_one(mix.components[k], image, lms, a->scene, a->fit,
                                                   substream_seed(a->seed, "kde-fit/" + std::to_string(k)))));
            make_parent(a->out);
            write_json(a->out, {{"components", fits}});
            run.output(a->out);
        };
        cmds.push_back(std::move(c));
    }

    {
        auto c = make_command<KdeRecognizeArgs>(root, "kde-recognize", "mixture recognition from per-component fits");
        auto* a = static_cast<KdeRecognizeArgs*>(c.state.get());
        c.app->add_option("--gallery", a->gallery, "directory of kde-fit JSON files, one per identity")->required();
        c.app->add_option("--probe", a->probe, "kde-fit JSON")->required();
        c.app->add_option("--out", a->out)->required();
        c.primary = [a] { return a->out; };
        c.seed = [] { return std::uint64_t(0); };
        c.run = [a](RunContext& run) {
            run.input(a->gallery);
            run.input(a->probe);
            auto codes = [](const nlohmann::json& j) {
                std::vector<LatentCode> out;
                for (const auto& f : j.at("components"))
                    out.push_back(state_from_fit_json(f).code);
                return out;
            };
            std::vector<std::string> names;
            std::vector<std::vector<LatentCode>> gallery;
            for (const auto& f : list_files(a->gallery, {".json"})) {
                names.push_back(stem_of(f, ".json"));
                gallery.push_back(codes(read_json(f)));
            }
            if (gallery.empty())
                throw data_error("kde-recognize: gallery '" + a->gallery + "' holds no fits");
            const MixtureRecognition r = recognize_mixture(codes(read_json(a->probe)), gallery);
            nlohmann::json table = nlohmann::json::array();
            for (std::size_t i = 0; i < names.size(); ++i)
                table.push_back({{"identity", names[i]}, {"similarity", r.table[i]}});
            make_parent(a->out);
            write_json(a->out, {{"identity", names[std::size_t(r.identity)]},
                                {"component", r.component},
                                {"similarity", r.similarity},
                                {"low_confidence", r.low_confidence},
                                {"table", table}});
            run.output(a->out);
        };
        cmds.push_back(std::move(c));
    }

    {
        auto c = make_command<LearnArgs>(root, "learn", "rebuild a model from fits to 2D images");
        auto* a = static_cast<LearnArgs*>(c.state.get());
        c.app->add_option("--model", a->model)->required();
        c.app->add_option("--images", a->images, "directory of PNGs with optional <stem>.csv landmarks")->required();
        c.app->add_option("--out", a->out, "output directory")->required();
        c.app->add_option("--iterations", a->iterations)->capture_default_str();
        c.app->add_option("--r1", a->r1, "silhouette IoU threshold")->capture_default_str();
        c.app->add_option("--r2", a->r2, "albedo drift threshold, 8-bit units")->capture_default_str();
        c.app->add_option("--r3", a->r3, "threshold decrement per iteration")->capture_default_str();
        c.app->add_option("--spike", a->spike, "denoising threshold, mm")->capture_default_str();
        c.app->add_option("--drift-reference", a->drift_reference, "refinement or phase-boundary")
            ->capture_default_str();
        c.app->add_flag("--flip", a->flip, "add left-right mirrored images");
        c.app->add_option("--seed", a->seed)->capture_default_str();
        a->fit.add(c.app);
        c.primary = [a] { return a->out; };
        c.seed = [a] { return a->seed; };
        c.run = [a](RunContext& run) {
            LearnConfig lc;
            lc.iterations = a->iterations;
            lc.r1 = a->r1;
            lc.r2 = a->r2;
            lc.r3 = a->r3;
            lc.spike_threshold = a->spike;
            if (a->drift_reference == "refinement")
                lc.drift_reference = DriftReference::refinement;
            else if (a->drift_reference == "phase-boundary")
                lc.drift_reference = DriftReference::phase_boundary;
            else
                throw usage_error("--drift-reference must be refinement or phase-boundary");
            lc.focal_per_height = a->fit.focal_per_height;
            lc.distance = a->fit.distance;
            lc.fit = a->fit.config(0);
            lc.seed = substream_seed(a->seed, "learn");
            lc.validate();
            run.input(a->model);
            run.input(a->images);
            MorphableModel model = load_model(a->model);
            std::vector<TrainingImage> images;
            for (const auto& f : list_files(a->images, {".png"})) {
                TrainingImage t;
                t.name = stem_of(f, ".png");
                t.image = load_png(f);
                const std::string lm = (fs::path(a->images) / (t.name + ".csv")).string();
                if (fs::exists(lm))
                    t.landmarks = load_landmarks(lm);
                images.push_back(std::move(t));
            }
            if (images.empty())
                throw data_error("learn: no PNG images in '" + a->images + "'");
            if (a->flip)
                images = flip_augment(images);
            fs::create_directories(a->out);
            for (int n = 0; n < lc.iterations; ++n) {
                LearnOutcome o = learn_iteration(model, images, lc, n);
                const std::string model_path = (fs::path(a->out) / numbered("model-iter-", n + 1, ".gpmm")).string();
                if (o.report.success) {
                    save_model(o.model, model_path);
                    run.output(model_path);
                    o.report.model_path = model_path;
                } else {
                    o.report.model_path = n == 0 ? a->model
                                                 : (fs::path(a->out) / numbered("model-iter-", n, ".gpmm")).string();
                }
                const std::string report = (fs::path(a->out) / numbered("report-iter-", n + 1, ".json")).string();
                write_json(report, o.report.to_json());
                run.output(report);
                std::cerr << "iteration " << n + 1 << ": " << o.report.message << "\n";
                if (!o.report.success)
                    break;
                model = std::move(o.model);
            }
        };
        cmds.push_back(std::move(c));
    }

    return cmds;
}

struct Invocation
{
    bool json_errors = false;
    bool write_manifest = true;
    std::vector<std::string> outputs; ///< filled after a successful run
};

int report_error(const Invocation& inv, int code, const std::string& kind, const std::string& message)
{
    if (inv.json_errors)
        std::cerr << nlohmann::json{{"error", {{"kind", kind}, {"exit_code", code}, {"message", message}}}}.dump()
                  << "\n";
    else
        std::cerr << "gpmm: " << kind << " error: " << message << "\n";
    return code;
}

int execute(const std::vector<std::string>& args, Invocation& inv);

int replay(const std::string& manifest_path, Invocation& inv)
{
    const nlohmann::json m = read_json(manifest_path);
    const fs::path cwd = m.at("cwd").get<std::string>();
    const fs::path before = fs::current_path();
    fs::current_path(cwd);
    std::vector<std::string> args{"gpmm"};
    for (const auto& a : m.at("arguments"))
        args.push_back(a.get<std::string>());
    Invocation inner;
    inner.json_errors = inv.json_errors;
    inner.write_manifest = false;
    const int code = execute(args, inner);
    nlohmann::json rows = nlohmann::json::array();
    bool identical = code == 0;
    std::vector<std::string> recorded;
    for (const auto& o : m.at("outputs"))
        recorded.push_back(o.at("path").get<std::string>());
    const nlohmann::json now = gpmm::cli::output_digests(recorded);
    for (std::size_t i = 0; i < recorded.size(); ++i) {
        const std::string was = m["outputs"][i].at("digest").get<std::string>();
        const std::string is = now[i].at("digest").get<std::string>();
        identical = identical && was == is;
        rows.push_back({{"path", recorded[i]}, {"recorded", was}, {"replayed", is}, {"identical", was == is}});
    }
    fs::current_path(before);
    std::cout << nlohmann::json{{"identical", identical}, {"outputs", rows}}.dump(2) << "\n";
    if (code != 0)
        return code;
    return identical ? 0 : report_error(inv, 4, "numerical", "replayed outputs differ from the manifest");
}

int execute(const std::vector<std::string>& args, Invocation& inv)
{
    CLI::App app{"Gaussian-process morphable models from a single template", "gpmm"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "TOML file with option defaults (flags > GPMM_* env > file)");
    app.add_flag("--json-errors", inv.json_errors, "machine-readable errors on stderr");
    app.set_version_flag("--version", gpmm::cli::tool_version);
    std::vector<Command> cmds = register_commands(app);
    std::string manifest_arg;
    CLI::App* rep = app.add_subcommand("replay", "re-run a command from its manifest and compare outputs");
    rep->add_option("--manifest", manifest_arg)->required();
    for (auto& c : cmds)
        c.app->fallthrough();
    rep->fallthrough();

    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error(inv, 2, "usage", e.what());
    }

    try {
        if (rep->parsed())
            return replay(manifest_arg, inv);
        for (auto& c : cmds) {
            if (!c.app->parsed())
                continue;
            gpmm::cli::resolve_fallbacks(*c.app, config_path);
            const nlohmann::json snapshot = gpmm::cli::option_snapshot(*c.app);
            RunContext run(c.app->get_name(), snapshot, gpmm::cli::snapshot_arguments(c.app->get_name(), snapshot),
                           c.seed());
            if (!config_path.empty())
                run.input(config_path);
            c.run(run);
            inv.outputs = run.output_paths();
            if (inv.write_manifest)
                run.write_manifest(c.primary());
            return 0;
        }
        return report_error(inv, 2, "usage", "no command given");
    } catch (const Error& e) {
        return report_error(inv, exit_code(e.kind()), kind_name(e.kind()), e.what());
    } catch (const fs::filesystem_error& e) {
        return report_error(inv, 3, "data", e.what());
    } catch (const nlohmann::json::exception& e) {
        return report_error(inv, 3, "data", e.what());
    } catch (const std::exception& e) {
        return report_error(inv, 4, "numerical", e.what());
    }
}

} // namespace

int main(int argc, char** argv)
{
    std::vector<std::string> args(argv, argv + argc);
    Invocation inv;
    for (const auto& a : args)
        inv.json_errors = inv.json_errors || a == "--json-errors";
    return execute(args, inv);
}
