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
#include "doctest.h"

#include "gpmm/inference.hpp"
#include "gpmm/kernels.hpp"
#include "gpmm/synthetic.hpp"

#include <Eigen/Dense>

#include <cmath>

using namespace gpmm;

namespace {

const MorphableModel& small_model()
{
    static const MorphableModel model = [] {
        FaceTemplateOptions o;
        o.rows = 16;
        o.cols = 16;
        NystromConfig c;
        c.landmarks = 120;
        c.rank = 6;
        return build_gp_model(make_face_template(o).mesh, recipe("standard-full"), c, c);
    }();
    return model;
}

LandmarkSet three_landmarks(const SceneParams& scene, const Points3d& v, double sigma = 4.0)
{
    LandmarkSet l;
    const int ids[3] = {0, int(v.cols() / 2), int(v.cols() - 1)};
    for (int k = 0; k < 3; ++k) {
        l.points.push_back({"p" + std::to_string(k), ids[k]});
        l.observations.push_back({"p" + std::to_string(k), project(scene.camera, scene.pose, v.col(ids[k])).pixel, sigma});
    }
    return l;
}

FitConfig quick_fit(int n1, int n2)
{
    FitConfig c;
    c.illumination_steps = n1;
    c.full_steps = n2;
    c.illumination_interval = 100;
    c.landmark_alignment_evaluations = 100;
    c.seed = 7;
    return c;
}

} // namespace

TEST_CASE("landmark likelihood")
{
    const SceneParams scene = default_scene(64, 64);
    const Points3d v = small_model().mean.vertices;
    LandmarkSet l = three_landmarks(scene, v);
    const double per = 2.0 * std::log(1.0 / (std::sqrt(2.0 * pi) * 4.0));
    CHECK(landmark_log_likelihood(scene, v, l) == doctest::Approx(3.0 * per).epsilon(1e-12));

    l.observations[1].pixel.x() += 4.0; // one sigma off
    CHECK(landmark_log_likelihood(scene, v, l) == doctest::Approx(3.0 * per - 0.5).epsilon(1e-12));

    const double per2 = 2.0 * std::log(1.0 / (std::sqrt(2.0 * pi) * 2.0));
    CHECK(landmark_log_likelihood(scene, v, l, 2.0) == doctest::Approx(3.0 * per2 - 2.0).epsilon(1e-12));

    CHECK(landmark_log_likelihood(scene, v, LandmarkSet{}) == 0.0);

    SceneParams behind = scene;
    behind.pose.translation.z() = -600.0;
    const LandmarkSet one{{{"a", 0}}, {{"a", Vec2(1, 1), 4.0}}};
    CHECK(landmark_log_likelihood(behind, v, one) == landmark_behind_camera_penalty);

    const LandmarkSet orphan{{}, {{"nobody", Vec2(1, 1), 4.0}}};
    CHECK_THROWS_AS(landmark_log_likelihood(scene, v, orphan), Error);

    // the model overload evaluates the instance
    CHECK(landmark_log_likelihood(scene, small_model(), LatentCode::zeros(6, 6), l) ==
          landmark_log_likelihood(scene, v, l));
}

TEST_CASE("illumination estimate recovers the light")
{
    const MorphableModel& model = small_model();
    SceneParams scene = default_scene(96, 96);
    scene.pose.yaw = 0.2;
    scene.illumination = directional_illumination(0.9, 0.3, Vec3(1, 1, 3));
    const LatentCode zero = LatentCode::zeros(6, 6);
    const RenderOutput r = rasterize(instance(model, zero), scene);
    // stays in the unclamped regime
    REQUIRE(r.color.pixels.minCoeff() >= 0.0);
    ImageRGB observed = r.color;
    const IlluminationEstimate est = estimate_illumination(scene, model, zero, observed);
    SceneParams back = scene;
    back.illumination = est.coefficients;
    const RenderOutput again = rasterize(instance(model, zero), back);
    double worst = 0.0;
    for (Index p = 0; p < r.silhouette.size(); ++p)
        if (r.silhouette(p))
            worst = std::max(worst, (again.color.pixels.col(p) - r.color.pixels.col(p)).cwiseAbs().maxCoeff());
    CHECK(worst < 1e-3);
    CHECK((est.coefficients - scene.illumination).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("illumination of a black image is zero")
{
    const MorphableModel& model = small_model();
    const SceneParams scene = default_scene(64, 64);
    const IlluminationEstimate est =
        estimate_illumination(scene, model, LatentCode::zeros(6, 6), ImageRGB::zeros(64, 64));
    CHECK(est.coefficients.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a uniformly lit grey sphere is ambient")
{
    MorphableModel sphere;
    sphere.mean = make_icosphere(3, 80.0);
    sphere.shape.components = MatrixX::Zero(3 * sphere.mean.num_vertices(), 0);
    sphere.shape.eigenvalues = VectorX::Zero(0);
    sphere.albedo = sphere.shape;
    SceneParams scene = default_scene(64, 64);
    scene.illumination = ambient_illumination(0.8);
    const RenderOutput r = rasterize(sphere.mean, scene);
    const IlluminationEstimate est = estimate_illumination(scene, sphere, LatentCode::zeros(0, 0), r.color);
    for (int ch = 0; ch < 3; ++ch) {
        CHECK(est.coefficients(0, ch) == doctest::Approx(scene.illumination(0, ch)).epsilon(1e-3));
        CHECK(est.coefficients.col(ch).tail<8>().cwiseAbs().maxCoeff() < 1e-2 * est.coefficients(0, ch));
    }
}

TEST_CASE("metropolis acceptance")
{
    CHECK(metropolis_accept(0.0, 0.999));
    CHECK(metropolis_accept(2.0, 0.999));
    CHECK(metropolis_accept(std::log(0.5), 0.49));
    CHECK(!metropolis_accept(std::log(0.5), 0.51));
    CHECK(!metropolis_accept(-1e300, 0.0001));
}

TEST_CASE("scene prior")
{
    SceneParams init = default_scene(64, 64);
    init.illumination = ambient_illumination(); // the light prior's centre
    const ScenePriorConfig p;
    CHECK(scene_log_prior(init, init, p) == 0.0);
    SceneParams s = init;
    s.pose.yaw = p.rotation_std;
    CHECK(scene_log_prior(s, init, p) == doctest::Approx(-0.5));
    s = init;
    s.pose.translation.z() *= std::exp(p.log_distance_std);
    CHECK(scene_log_prior(s, init, p) == doctest::Approx(-0.5));
    s.pose.translation.z() = -1.0;
    CHECK(scene_log_prior(s, init, p) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("zero steps return the initial state")
{
    const MorphableModel& model = small_model();
    SceneParams truth = default_scene(48, 48);
    const ImageRGB img = rasterize(model.mean, truth).color;
    FitConfig c = quick_fit(0, 0);
    c.landmark_alignment_evaluations = 0;
    c.local_refinement = false;
    c.final_iterations = 0;
    const FitResult f = fit_image(model, img, nullptr, truth, c);
    CHECK(f.best.scene.pose.translation == truth.pose.translation);
    CHECK(f.best.code.joint().isZero());
    CHECK(f.best.log_posterior == doctest::Approx(log_posterior(model, img, nullptr, truth, LatentCode::zeros(6, 6), truth, c)));
}

TEST_CASE("fits are deterministic and only improve")
{
    const MorphableModel& model = small_model();
    SceneParams truth = default_scene(48, 48);
    truth.pose.yaw = 0.1;
    const Mesh target = sample(model, 3).mesh;
    const ImageRGB img = rasterize(target, truth).color;
    const LandmarkSet lm = three_landmarks(truth, target.vertices);
    SceneParams init = truth;
    init.pose.yaw = 0.0;
    init.pose.translation.x() += 10.0;
    init.illumination = ambient_illumination();
    const FitConfig c = quick_fit(50, 400);
    const FitResult a = fit_image(model, img, &lm, init, c);
    const FitResult b = fit_image(model, img, &lm, init, c);
    CHECK(a.best.log_posterior == b.best.log_posterior);
    CHECK(a.best.code.joint() == b.best.code.joint());
    CHECK(fit_to_json(a).dump() == fit_to_json(b).dump());
    CHECK(a.best.log_posterior >= a.trace.initial_log_posterior);
    CHECK(a.best.log_posterior >= a.phase1_end.log_posterior);
    CHECK(a.best.log_posterior ==
          doctest::Approx(log_posterior(model, img, &lm, a.best.scene, a.best.code, init, c)).epsilon(1e-9));
    // a different seed takes a different path
    FitConfig c2 = c;
    c2.seed = 8;
    CHECK(fit_image(model, img, &lm, init, c2).best.code.joint() != a.best.code.joint());
}

TEST_CASE("pose from landmarks")
{
    const MorphableModel& model = small_model();
    SceneParams truth = default_scene(128, 128);
    truth.pose.yaw = degrees_to_radians(20.0);
    truth.pose.translation += Vec3(15, -10, 0);
    LandmarkSet lm;
    for (int v = 0; v < model.mean.num_vertices(); v += 23) {
        lm.points.push_back({"v" + std::to_string(v), v});
        lm.observations.push_back({"v" + std::to_string(v), project(truth.camera, truth.pose, model.mean.vertices.col(v)).pixel, 4.0});
    }
    SceneParams s = truth;
    s.pose = pose_from_landmarks(model.mean, lm, truth.camera);
    CHECK(std::abs(s.pose.yaw - truth.pose.yaw) < degrees_to_radians(5.0));
    double err = 0.0;
    for (const auto& o : lm.observations)
        err = std::max(err, (project(s.camera, s.pose, model.mean.vertices.col(*lm.vertex_of(o.name))).pixel - o.pixel).norm());
    CHECK(err < 3.0);
}

TEST_CASE("recognition")
{
    const std::vector<std::pair<std::string, LatentCode>> gallery{
        {"a", {VectorX::Unit(2, 0), VectorX::Zero(1)}},
        {"b", {VectorX::Unit(2, 1), VectorX::Zero(1)}},
        {"c", {VectorX::Unit(2, 1), VectorX::Zero(1)}},
    };
    const RecognitionResult r = recognize({Eigen::Vector2d(0.1, 1.0), VectorX::Zero(1)}, gallery);
    CHECK(r.identity == "b"); // tie with c goes to the earlier entry
    CHECK(r.index == 1);
    CHECK(r.similarities.size() == 3);
    // cosine similarity ignores scale
    const RecognitionResult scaled = recognize({Eigen::Vector2d(10.0, 100.0), VectorX::Zero(1)}, gallery);
    CHECK(scaled.similarity == doctest::Approx(r.similarity).epsilon(1e-15));
    CHECK_THROWS_AS(recognize({VectorX::Ones(3), VectorX::Zero(1)}, gallery), Error);
    CHECK_THROWS_AS(recognize({VectorX::Ones(2), VectorX::Zero(1)}, {}), Error);
}

TEST_CASE("silhouette quality gate")
{
    RenderOutput ref, fit;
    ref.width = fit.width = 8;
    ref.height = fit.height = 1;
    ref.silhouette = Mask::Constant(8, false);
    ref.silhouette.head(8).setConstant(true);
    fit.silhouette = Mask::Constant(8, false);
    fit.silhouette.head(5).setConstant(true); // 5/8 = 0.625
    CHECK(quality_check_silhouette(fit, ref, 0.625));
    CHECK(!quality_check_silhouette(fit, ref, 0.626));
    fit.silhouette(4) = false;
    CHECK(!quality_check_silhouette(fit, ref, 0.625));
    fit.width = 4;
    CHECK_THROWS_AS(quality_check_silhouette(fit, ref, 0.5), Error);
}

TEST_CASE("fit json round trip")
{
    ChainState s;
    s.scene = default_scene(40, 30);
    s.scene.pose.pitch = 0.05;
    s.code = {Eigen::Vector3d(0.1, -0.2, 0.3), Eigen::Vector2d(1.5, -1.0)};
    FitResult f;
    f.best = s;
    const ChainState back = state_from_fit_json(fit_to_json(f));
    CHECK(back.code.shape == s.code.shape);
    CHECK(back.code.albedo == s.code.albedo);
    CHECK(back.scene.pose.pitch == s.scene.pose.pitch);
    CHECK(code_from_json(code_to_json(s.code)).joint() == s.code.joint());
}

TEST_CASE("configuration validation")
{
    FitConfig c;
    CHECK_NOTHROW(c.validate());
    c.foreground_sigma = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = FitConfig{};
    c.full_steps = -1;
    CHECK_THROWS_AS(c.validate(), Error);
    c = FitConfig{};
    c.proposals.scale_probabilities = {0.5, 0.5, 0.5};
    CHECK_THROWS_AS(c.validate(), Error);
}
