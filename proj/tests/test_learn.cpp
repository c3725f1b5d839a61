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

#include "gpmm/kernels.hpp"
#include "gpmm/learn.hpp"
#include "gpmm/synthetic.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

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
        c.rank = 5;
        return build_gp_model(make_face_template(o).mesh, recipe("standard-full"), c, c);
    }();
    return model;
}

std::vector<TrainingImage> rendered_set(int count)
{
    std::vector<TrainingImage> out;
    for (int i = 0; i < count; ++i) {
        SceneParams s = default_scene(48, 48);
        s.pose.yaw = degrees_to_radians(-10.0 + 10.0 * i);
        TrainingImage t;
        t.name = "img" + std::to_string(i);
        t.image = rasterize(sample(small_model(), 50 + i).mesh, s).color;
        t.init = s;
        out.push_back(t);
    }
    return out;
}

LearnConfig quick_learn()
{
    LearnConfig c;
    c.fit.illumination_steps = 30;
    c.fit.full_steps = 200;
    c.fit.illumination_interval = 100;
    c.fit.landmark_alignment_evaluations = 0;
    return c;
}

void check_counts(const IterationReport& r)
{
    CHECK(r.attempted >= r.passed_silhouette);
    CHECK(r.passed_silhouette >= r.passed_albedo_drift);
    CHECK(r.passed_albedo_drift >= r.used_for_pca);
    CHECK(r.images.size() == std::size_t(r.attempted));
}

} // namespace

TEST_CASE("albedo threshold schedule")
{
    const LearnConfig c;
    CHECK(c.albedo_threshold(0) == 8.0);
    CHECK(c.albedo_threshold(1) == 7.5);
    CHECK(c.albedo_threshold(2) == 7.0);
    CHECK(c.albedo_threshold(16) == 0.0);
}

TEST_CASE("spike removal")
{
    const Mesh grid = make_grid(7, 7, 10.0);
    Mesh spiky = grid;
    spiky.vertices(2, 24) += 50.0;
    const Mesh clean = denoise_shape(spiky, 10.0);
    CHECK(clean.vertices.isApprox(grid.vertices, 1e-12));
    CHECK(denoise_shape(spiky, std::numeric_limits<double>::infinity()).vertices == spiky.vertices);
    CHECK(denoise_shape(clean, 10.0).vertices == clean.vertices);
    // a bump below the threshold is kept
    Mesh bump = grid;
    bump.vertices(2, 24) += 5.0;
    CHECK(denoise_shape(bump, 10.0).vertices == bump.vertices);
}

TEST_CASE("image flips")
{
    ImageRGB im = ImageRGB::zeros(5, 3);
    im.pixels.col(im.index(0, 1)) = Vec3(1, 0, 0);
    const ImageRGB f = flip_image(im);
    CHECK(f.pixels.col(f.index(4, 1)) == Vec3(1, 0, 0));
    CHECK(flip_image(f).pixels == im.pixels);
}

TEST_CASE("left and right names")
{
    CHECK(swap_left_right("left_eye") == "right_eye");
    CHECK(swap_left_right("Right.mouth") == "Left.mouth");
    CHECK(swap_left_right("nose") == "nose");
    CHECK(swap_left_right(swap_left_right("leftright")) == "leftright");
}

TEST_CASE("flip augmentation doubles the set")
{
    std::vector<TrainingImage> set;
    for (int i = 0; i < 200; ++i) {
        TrainingImage t;
        t.name = "i" + std::to_string(i);
        t.image = ImageRGB::zeros(10, 8);
        if (i == 0) {
            LandmarkSet l;
            l.points = {{"left_eye", 1}, {"right_eye", 2}};
            l.observations = {{"left_eye", Vec2(2.0, 3.0), 4.0}};
            t.landmarks = l;
        }
        set.push_back(t);
    }
    const auto out = flip_augment(set);
    REQUIRE(out.size() == 400);
    CHECK(out[0].name == "i0");
    CHECK(out[200].name == "i0_flip");
    const auto& obs = out[200].landmarks->observations[0];
    CHECK(obs.name == "right_eye");
    CHECK(obs.pixel == Vec2(10 - 1 - 2.0, 3.0));
}

TEST_CASE("a flipped scene renders the flipped image")
{
    const Mesh face = make_face_template().mesh;
    SceneParams s = default_scene(96, 96);
    s.pose.yaw = 0.25;
    s.pose.translation.x() = 12.0;
    s.illumination = directional_illumination(0.6, 0.5, Vec3(1, 0.5, 1));
    TrainingImage t;
    t.name = "x";
    t.image = rasterize(face, s).color;
    t.init = s;
    const TrainingImage f = flip_augment({t})[1];
    const ImageRGB direct = rasterize(face, *f.init).color;
    // the template is mirror symmetric up to its triangulation
    CHECK((direct.pixels - f.image.pixels).cwiseAbs().mean() < 0.01);
}

TEST_CASE("albedo refinement at the truth")
{
    const MorphableModel& model = small_model();
    SceneParams s = default_scene(96, 96);
    s.illumination = directional_illumination(0.7, 0.3, Vec3(0.2, 0.3, 1));
    const Mesh m = sample(model, 9).mesh;
    const ImageRGB img = rasterize(m, s).color;
    const AlbedoRefinement r = refine_albedo(m, img, s);
    REQUIRE(r.visible.size() > 20);
    CHECK(albedo_drift(m.albedo, r) < 0.5);
    // a darker albedo drifts by the difference, in 8-bit units
    CHECK(albedo_drift(m.albedo * 0.9, r) > 5.0);
}

TEST_CASE("an impossible silhouette gate keeps the model")
{
    LearnConfig c = quick_learn();
    c.r1 = 1.0;
    const LearnOutcome out = learn_iteration(small_model(), rendered_set(3), c, 0);
    CHECK(!out.report.success);
    CHECK(out.report.used_for_pca == 0);
    CHECK(!out.report.message.empty());
    CHECK(out.model.mean.vertices == small_model().mean.vertices);
    CHECK(out.model.shape.components == small_model().shape.components);
    check_counts(out.report);
}

TEST_CASE("iteration counts shrink along the checks")
{
    LearnConfig c = quick_learn();
    c.r2 = 4.0; // strict enough that some fits may fail
    const LearnOutcome out = learn_iteration(small_model(), rendered_set(4), c, 1);
    CHECK(out.report.albedo_threshold == 3.5);
    CHECK(out.report.attempted == 4);
    check_counts(out.report);
    const nlohmann::json j = out.report.to_json();
    CHECK(j.contains("images"));
}

TEST_CASE("learn config validation")
{
    LearnConfig c;
    CHECK_NOTHROW(c.validate());
    c.r1 = 1.5;
    CHECK_THROWS_AS(c.validate(), Error);
    c = LearnConfig{};
    c.iterations = 0;
    CHECK_THROWS_AS(c.validate(), Error);
}
