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
#include "gpmm/synthetic.hpp"

#include "Eigen/Eigenvalues"

#include <cmath>
#include <numeric>
#include <random>

using namespace gpmm;

namespace {

// Closed-form face shape kernel, written out independently of the library.
double shape_rbf(double r2) { return 7.0 * std::exp(-r2 / 1e4) + 5.0 * std::exp(-r2 / 2500.0) + 3.0 * std::exp(-r2 / 100.0); }

std::vector<Index> random_indices(Index n, Index count, unsigned seed)
{
    std::vector<Index> all(n);
    std::iota(all.begin(), all.end(), Index(0));
    std::mt19937 rng(seed);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(count);
    return all;
}

double min_eigenvalue(const MatrixX& g) { return Eigen::SelfAdjointEigenSolver<MatrixX>(g, Eigen::EigenvaluesOnly).eigenvalues()(0); }

Mesh template_500()
{
    FaceTemplateOptions o;
    o.rows = 25;
    o.cols = 20;
    return make_face_template(o).mesh;
}

} // namespace

TEST_CASE("scalar shape kernel values")
{
    Mesh m = make_grid(2, 2, 10.0);
    const KernelContext ctx(m);
    const KernelHyperparameters h;
    const ScalarKernelSpec s = face_kernels::shape_scalar(h);
    CHECK(eval_scalar(s, ctx, 0, 0) == doctest::Approx(15.0).epsilon(1e-15));
    const double expected = 7.0 * std::exp(-0.01) + 5.0 * std::exp(-0.04) + 3.0 * std::exp(-1.0);
    CHECK(eval_scalar(s, ctx, 0, 1) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(expected == doctest::Approx(12.838).epsilon(1e-4));
    CHECK(eval_scalar(s, ctx, 0, 1) == eval_scalar(s, ctx, 1, 0));
}

TEST_CASE("rgb kernel between black and white vanishes")
{
    Mesh m = make_grid(2, 2, 10.0);
    m.albedo.col(0).setZero();
    m.albedo.col(1).setOnes();
    const KernelContext ctx(m);
    const ScalarKernelSpec s = face_kernels::albedo_rgb_scalar({});
    const double v = eval_scalar(s, ctx, 0, 1);
    CHECK(v == doctest::Approx(0.015 * std::exp(-3.0 / 0.0225)));
    CHECK(v < 1e-10);
    CHECK(eval_scalar(s, ctx, 0, 0) == doctest::Approx(0.015));
}

TEST_CASE("matrix kernels on the diagonal")
{
    Mesh m = make_grid(3, 2, 10.0); // middle vertex lies on x = 0
    REQUIRE(m.vertices(0, 1) == 0.0);
    const KernelContext ctx(m);
    const KernelHyperparameters h;
    CHECK(eval_matrix(face_kernels::shape(h), ctx, 1, 1).isApprox(15.0 * Mat3::Identity(), 1e-15));
    const Mat3 sym = eval_matrix(face_kernels::shape_symmetric(h), ctx, 1, 1);
    CHECK((sym - Eigen::Vector3d(4.5, 25.5, 25.5).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff() < 1e-12);
    const Mat3 ka = eval_matrix(face_kernels::albedo_full(h), ctx, 1, 1);
    CHECK((ka - 0.0275 * Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("symmetric shape block matches the closed form off the diagonal")
{
    const Mesh m = make_face_template().mesh;
    const KernelContext ctx(m);
    const MatrixKernelSpec k = face_kernels::shape_symmetric({});
    Mat3 phi = Mat3::Identity();
    phi(0, 0) = -1.0;
    for (auto [i, j] : {std::pair<Index, Index>{3, 900}, {100, 101}, {512, 40}}) {
        const Vec3 x = m.vertices.col(i), y = m.vertices.col(j);
        const Mat3 expected = Mat3::Identity() * shape_rbf((x - y).squaredNorm()) +
                              0.7 * phi * shape_rbf((x - phi * y).squaredNorm());
        CHECK((eval_matrix(k, ctx, i, j) - expected).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("block kernels are symmetric under argument swap")
{
    const Mesh m = make_face_template().mesh;
    const KernelContext ctx(m);
    std::mt19937 rng(1);
    std::uniform_int_distribution<Index> pick(0, m.num_vertices() - 1);
    for (const auto& name : recipe_names()) {
        const KernelRecipe r = recipe(name);
        for (int t = 0; t < 20; ++t) {
            const Index i = pick(rng), j = pick(rng);
            CHECK((eval_matrix(r.shape, ctx, i, j) - eval_matrix(r.shape, ctx, j, i).transpose()).cwiseAbs().maxCoeff() < 1e-12);
            CHECK((eval_matrix(r.albedo, ctx, i, j) - eval_matrix(r.albedo, ctx, j, i).transpose()).cwiseAbs().maxCoeff() < 1e-12);
        }
        for (const auto& term : r.albedo.terms)
            for (int t = 0; t < 5; ++t) {
                const Index i = pick(rng), j = pick(rng);
                CHECK(eval_scalar(term.base, ctx, i, j) == eval_scalar(term.base, ctx, j, i));
            }
    }
}

TEST_CASE("gram matrices of every recipe are numerically PSD")
{
    const Mesh m = template_500();
    REQUIRE(m.num_vertices() == 500);
    const KernelContext ctx(m);
    unsigned seed = 0;
    for (const auto& name : recipe_names()) {
        const KernelRecipe r = recipe(name);
        for (Index count : {20, 30, 50}) {
            const auto idx = random_indices(m.num_vertices(), count, ++seed);
            for (const MatrixKernelSpec* k : {&r.shape, &r.albedo}) {
                const MatrixX g = gram_matrix(*k, ctx, idx);
                CHECK(g.isApprox(g.transpose(), 0.0));
                CHECK(min_eigenvalue(g) >= -1e-9 * g.trace());
            }
        }
    }
}

TEST_CASE("single-index gram equals the diagonal block")
{
    const Mesh m = make_face_template().mesh;
    const KernelContext ctx(m);
    const std::vector<Index> idx{17};
    const MatrixKernelSpec k = face_kernels::albedo_symmetric({});
    CHECK(gram_matrix(k, ctx, idx) == eval_matrix(k, ctx, 17, 17));
}

TEST_CASE("weighted sums of kernels give weighted sums of grams")
{
    const Mesh m = make_face_template().mesh;
    const KernelContext ctx(m);
    const auto idx = random_indices(m.num_vertices(), 25, 9);
    const KernelHyperparameters h;
    const MatrixKernelSpec k1 = face_kernels::shape_symmetric(h), k2 = face_kernels::albedo_rgb_correlated(h);
    const double a = 0.3, b = 2.5;
    const MatrixX lhs = gram_matrix(combine(a, k1, b, k2), ctx, idx);
    const MatrixX rhs = a * gram_matrix(k1, ctx, idx) + b * gram_matrix(k2, ctx, idx);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(combine(0.0, k1, 1.0, k2), Error);
}

TEST_CASE("colour correlation matrix spectrum")
{
    for (double x : {0.9375, 0.95, -0.25, 0.0, 0.5}) {
        const Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Mat3>(correlation_matrix(x)).eigenvalues();
        std::vector<double> got{ev(0), ev(1), ev(2)}, want{1 + 2 * x, 1 - x, 1 - x};
        std::sort(want.begin(), want.end());
        for (int k = 0; k < 3; ++k)
            CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-12));
        CHECK(ev.minCoeff() >= -1e-15);
    }
}

TEST_CASE("correlated symmetric albedo gram is PSD with gamma = 0.95")
{
    const Mesh m = template_500();
    const KernelContext ctx(m);
    const auto idx = random_indices(m.num_vertices(), 30, 77);
    KernelHyperparameters h;
    h.gamma = 0.95;
    const MatrixX g = gram_matrix(face_kernels::albedo_symmetric(h), ctx, idx);
    CHECK(min_eigenvalue(g) >= -1e-9 * g.trace());
}

TEST_CASE("rgb albedo gram is unchanged by swapping vertices with their mirror partners")
{
    const Mesh m = make_face_template().mesh;
    const auto partner = mirror_partners(m.vertices);
    for (Index i = 0; i < m.num_vertices(); ++i)
        REQUIRE((mirror_positions(m.vertices, {}).col(partner[i]) - m.vertices.col(i)).norm() < 1e-9);
    const KernelContext ctx(m);
    const auto idx = random_indices(m.num_vertices(), 30, 5);
    std::vector<Index> swapped;
    for (Index i : idx)
        swapped.push_back(partner[i]);
    const MatrixKernelSpec k = face_kernels::albedo_rgb_correlated({});
    CHECK((gram_matrix(k, ctx, idx) - gram_matrix(k, ctx, swapped)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("recipes are wired to the named kernels")
{
    const KernelHyperparameters h;
    namespace fk = face_kernels;
    auto same = [](const MatrixKernelSpec& a, const MatrixKernelSpec& b) { return to_json(a) == to_json(b); };
    struct Row
    {
        const char* name;
        MatrixKernelSpec shape, albedo;
    };
    const std::vector<Row> rows{
        {"standard-full", fk::shape(h), fk::albedo_full(h)},
        {"standard-RGB", fk::shape(h), fk::albedo_rgb(h)},
        {"standard-XYZ", fk::shape(h), fk::albedo_xyz(h)},
        {"symmetric-full", fk::shape_symmetric(h), fk::albedo_symmetric(h)},
        {"symmetric-RGB", fk::shape_symmetric(h), fk::albedo_rgb_correlated(h)},
        {"symmetric-XYZ", fk::shape_symmetric(h), fk::albedo_xyz_symmetric(h)},
        {"correlated-full", fk::shape(h), fk::albedo_correlated(h)},
        {"correlated-RGB", fk::shape(h), fk::albedo_rgb_correlated(h)},
        {"correlated-XYZ", fk::shape(h), fk::albedo_xyz_correlated(h)},
    };
    REQUIRE(rows.size() == recipe_names().size());
    for (const auto& row : rows) {
        CAPTURE(row.name);
        const KernelRecipe r = recipe(row.name);
        CHECK(same(r.shape, row.shape));
        CHECK(same(r.albedo, row.albedo));
    }

    // structure of the pieces
    const MatrixKernelSpec ks = fk::shape_symmetric(h);
    REQUIRE(ks.terms.size() == 1);
    REQUIRE(ks.terms[0].symmetrize.has_value());
    CHECK(ks.terms[0].symmetrize->weight == 0.7);
    CHECK(ks.terms[0].symmetrize->negate_mirrored_axis);
    const MatrixKernelSpec ka = fk::albedo_symmetric(h);
    REQUIRE(ka.terms.size() == 2);
    CHECK(ka.terms[0].weight == 0.5);
    CHECK(ka.terms[1].weight == 0.5);
    CHECK(ka.terms[0].channel == correlation_matrix(0.95));
    CHECK(ka.terms[1].channel == correlation_matrix(0.9375));
    CHECK(!ka.terms[1].symmetrize->negate_mirrored_axis);
}

TEST_CASE("unknown recipe lists the valid names")
{
    try {
        recipe("standard-fll");
        FAIL("expected a usage error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::usage);
        for (const auto& n : recipe_names())
            CHECK(std::string(e.what()).find(n) != std::string::npos);
    }
}

TEST_CASE("hyperparameter overrides and json round trip")
{
    KernelHyperparameters h;
    h.set("alpha", "0.5");
    h.set("a_s", "9");
    CHECK(h.alpha == 0.5);
    CHECK(h.a_s == 9.0);
    CHECK_THROWS_AS(h.set("nonsense", "1"), Error);
    const KernelRecipe r = recipe("symmetric-full", h);
    const KernelRecipe back = recipe_from_json(to_json(r));
    CHECK(to_json(back.shape) == to_json(r.shape));
    CHECK(to_json(back.albedo) == to_json(r.albedo));
    CHECK(back.hyper.alpha == 0.5);
}

TEST_CASE("spec validation")
{
    ScalarKernelSpec s{{{-1.0, 10.0, Metric::xyz}}};
    CHECK_THROWS_AS(s.validate(), Error);
    ScalarKernelSpec empty;
    CHECK_THROWS_AS(empty.validate(), Error);
    MatrixKernelSpec k = face_kernels::shape_symmetric({});
    k.terms[0].symmetrize->weight = 1.0;
    CHECK_THROWS_AS(k.validate(), Error);
    k = face_kernels::albedo_xyz({});
    k.terms[0].channel = correlation_matrix(-0.9);
    CHECK_THROWS_AS(k.validate(), Error);
}
