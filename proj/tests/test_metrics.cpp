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

#include "gpmm/metrics.hpp"
#include "gpmm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

using namespace gpmm;

namespace {

MorphableModel small_model()
{
    FaceTemplateOptions o;
    o.rows = 12;
    o.cols = 12;
    NystromConfig c;
    c.landmarks = 100;
    c.rank = 10;
    return build_gp_model(make_face_template(o).mesh, recipe("standard-full"), c, c);
}

std::vector<Mesh> dataset(const MorphableModel& model, int count, std::uint64_t first_seed)
{
    std::vector<Mesh> out;
    for (int i = 0; i < count; ++i) {
        Mesh m = sample(model, first_seed + std::uint64_t(i)).mesh;
        // a little off-span noise so generalization does not reach zero
        Rng rng(first_seed + 1000 + std::uint64_t(i));
        NormalSampler normal;
        for (Index k = 0; k < m.vertices.size(); ++k)
            m.vertices.data()[k] += 0.3 * normal(rng);
        out.push_back(m);
    }
    return out;
}

} // namespace

TEST_CASE("generalization of the mean is zero")
{
    const MorphableModel model = small_model();
    const MetricCurve c = generalization(model, {model.mean}, all_counts(model, Channel::shape), Channel::shape);
    for (double v : c.values)
        CHECK(v == 0.0);
}

TEST_CASE("samples are generalized exactly at full rank")
{
    const MorphableModel model = small_model();
    std::vector<Mesh> data;
    for (std::uint64_t s = 0; s < 5; ++s)
        data.push_back(sample(model, s).mesh);
    const MetricCurve c = generalization(model, data, {model.shape.rank()}, Channel::shape);
    CHECK(c.values[0] < 1e-4);
}

TEST_CASE("generalization of an off-span offset is flat")
{
    const MorphableModel model = small_model();
    const Index n = model.mean.num_vertices();
    VectorX v = VectorX::LinSpaced(3 * n, -1.0, 1.0);
    for (Index k = 0; k < model.shape.rank(); ++k)
        v -= model.shape.components.col(k).dot(v) * model.shape.components.col(k);
    Mesh m = model.mean;
    m.vertices += Eigen::Map<const Points3d>(v.data(), 3, n);
    const double expected = Eigen::Map<const Points3d>(v.data(), 3, n).colwise().norm().mean();
    const MetricCurve c = generalization(model, {m}, all_counts(model, Channel::shape), Channel::shape);
    for (double x : c.values)
        CHECK(x == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("metric laws hold exactly")
{
    const MorphableModel model = small_model();
    const auto data = dataset(model, 10, 50);
    for (Channel ch : {Channel::shape, Channel::albedo}) {
        const auto counts = all_counts(model, ch);
        const MetricCurve g = generalization(model, data, counts, ch);
        for (std::size_t k = 1; k < g.values.size(); ++k)
            CHECK(g.values[k] <= g.values[k - 1]);
        const MetricCurve c = compactness(model, counts, ch);
        CHECK(c.values.front() == 0.0);
        CHECK(c.values.back() == 1.0);
        for (std::size_t k = 1; k < c.values.size(); ++k) {
            CHECK(c.values[k] >= c.values[k - 1]);
            if (k + 1 < c.values.size()) // concave: increments shrink
                CHECK(c.values[k + 1] - c.values[k] <= c.values[k] - c.values[k - 1] + 1e-15);
        }
    }
}

TEST_CASE("specificity with no components is the mean-to-nearest distance")
{
    const MorphableModel model = small_model();
    const auto data = dataset(model, 10, 70);
    double nearest = std::numeric_limits<double>::infinity();
    for (const Mesh& m : data)
        nearest = std::min(nearest, (m.vertices - model.mean.vertices).colwise().norm().mean());
    const MetricCurve s = specificity(model, data, {0, 5, 10}, 50, 9, Channel::shape);
    CHECK(std::abs(s.values[0] - nearest) < 1e-9);

    std::vector<Mesh> with_mean = data;
    with_mean.push_back(model.mean);
    CHECK(specificity(model, with_mean, {0}, 20, 9, Channel::shape).values[0] == 0.0);
}

TEST_CASE("specificity is deterministic per seed and stable across seeds")
{
    const MorphableModel model = small_model();
    const auto data = dataset(model, 10, 90);
    const auto counts = all_counts(model, Channel::shape);
    const MetricCurve a = specificity(model, data, counts, 1000, 1, Channel::shape);
    const MetricCurve b = specificity(model, data, counts, 1000, 1, Channel::shape);
    CHECK(a.values == b.values);
    const MetricCurve c = specificity(model, data, counts, 1000, 2, Channel::shape);
    for (std::size_t k = 0; k < a.values.size(); ++k)
        CHECK(std::abs(a.values[k] - c.values[k]) <= 0.05 * a.values[k]);
}

TEST_CASE("curves serialize")
{
    const MorphableModel model = small_model();
    const MetricCurve c = compactness(model, {0, 1, 2}, Channel::albedo);
    const std::string csv = curve_to_csv(c);
    CHECK(csv.find("count,value") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    CHECK(csv.find("\n0,0\n") != std::string::npos);
    const std::string svg = curves_to_svg({c}, "compactness");
    CHECK(svg.rfind("<svg", 0) == 0);
    MetricCurve bad = c;
    bad.values.pop_back();
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("surface errors")
{
    const Mesh m = make_face_template().mesh;
    Mesh shifted = m;
    shifted.vertices.row(2).array() += 0.25;
    const SurfaceErrors e = surface_errors(shifted, m, make_face_template().landmarks);
    CHECK(e.vertex.value() == doctest::Approx(0.25));
    CHECK(e.landmark.value() == doctest::Approx(0.25));
    CHECK(e.chamfer <= 0.25 + 1e-12);
    CHECK(e.hausdorff <= 0.25 + 1e-12);
    const SurfaceErrors other = surface_errors(m, make_icosphere(2, 50.0));
    CHECK(!other.vertex.has_value());
}
