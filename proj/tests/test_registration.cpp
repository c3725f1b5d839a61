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
#include "gpmm/mesh.hpp"
#include "gpmm/registration.hpp"
#include "gpmm/synthetic.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <random>

using namespace gpmm;

namespace {

Points3d random_cloud(Index n, unsigned seed)
{
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    Points3d p(3, n);
    for (Index i = 0; i < p.size(); ++i)
        p.data()[i] = u(rng);
    return p;
}

Mat3 rotation_about(const Vec3& axis, double degrees)
{
    return Eigen::AngleAxisd(degrees_to_radians(degrees), axis.normalized()).toRotationMatrix();
}

const MorphableModel& small_model()
{
    static const MorphableModel model = [] {
        FaceTemplateOptions o;
        o.rows = 16;
        o.cols = 16;
        NystromConfig c;
        c.landmarks = 120;
        c.rank = 8;
        return build_gp_model(make_face_template(o).mesh, recipe("standard-full"), c, c);
    }();
    return model;
}

} // namespace

TEST_CASE("umeyama recovers a known motion")
{
    const Points3d src = random_cloud(40, 1);
    CHECK(umeyama_align(src, src).rotation.isApprox(Mat3::Identity(), 1e-12));
    CHECK(umeyama_align(src, src).translation.norm() < 1e-9);

    const Mat3 r = rotation_about(Vec3::UnitZ(), 30.0);
    const Vec3 t(1, 2, 3);
    const RigidTransform f = umeyama_align(src, (r * src).colwise() + t);
    CHECK((f.rotation - r).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((f.translation - t).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("umeyama never returns a reflection")
{
    const Points3d src = random_cloud(30, 2);
    Points3d mirrored = src;
    mirrored.row(0) *= -1.0;
    const RigidTransform f = umeyama_align(src, mirrored);
    CHECK(f.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((f.rotation * f.rotation.transpose() - Mat3::Identity()).norm() < 1e-12);
}

TEST_CASE("umeyama commutes with a common motion")
{
    const Points3d a = random_cloud(25, 3);
    const Mat3 r = rotation_about(Vec3(1, 2, -1), 50.0);
    const Points3d b = (r * a).colwise() + Vec3(-4, 0, 9);
    const Mat3 q = rotation_about(Vec3(0.2, 1, 0.3), -70.0);
    const Vec3 s(10, 20, 30);
    const RigidTransform f = umeyama_align((q * a).colwise() + s, (q * b).colwise() + s);
    CHECK((f.rotation - q * r * q.transpose()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("umeyama rejects bad input")
{
    CHECK_THROWS_AS(umeyama_align(random_cloud(3, 1), random_cloud(4, 1)), Error);
    CHECK_THROWS_AS(umeyama_align(Points3d(3, 0), Points3d(3, 0)), Error);
}

TEST_CASE("albedo transfer along normals")
{
    Mesh plate = make_grid(6, 6, 10.0, Vec3(0.2, 0.2, 0.2));
    Mesh scan = make_grid(12, 12, 6.0, Vec3(0.9, 0.1, 0.4));
    scan.vertices.row(2).setConstant(5.0); // 5 mm in front

    const AlbedoTransfer hit = transfer_albedo(plate, scan);
    CHECK(hit.mesh.vertices == plate.vertices);
    for (Index v = 0; v < plate.num_vertices(); ++v) {
        bool missed = std::find(hit.missed.begin(), hit.missed.end(), int(v)) != hit.missed.end();
        if (!missed)
            CHECK(hit.mesh.albedo.col(v).isApprox(Vec3(0.9, 0.1, 0.4), 1e-12));
    }
    CHECK(hit.missed.size() < std::size_t(plate.num_vertices()) / 2);

    // behind works too
    scan.vertices.row(2).setConstant(-5.0);
    CHECK(transfer_albedo(plate, scan).missed.size() == hit.missed.size());

    // beyond the search distance nothing changes
    scan.vertices.row(2).setConstant(30.0);
    const AlbedoTransfer far = transfer_albedo(plate, scan, 20.0);
    CHECK(far.missed.size() == std::size_t(plate.num_vertices()));
    CHECK(far.mesh.albedo == plate.albedo);
}

TEST_CASE("pca of two meshes")
{
    const Mesh a = make_grid(4, 4, 10.0);
    Mesh b = a;
    b.vertices.row(2).array() += 3.0;
    const MorphableModel m = build_pca_model({a, b});
    CHECK(m.shape.rank() == 1);
    CHECK(m.mean.vertices.isApprox(0.5 * (a.vertices + b.vertices)));
    // sample variance of two points at +-1.5 along a unit direction of 16 vertices
    CHECK(m.shape.eigenvalues(0) == doctest::Approx(16.0 * 2.0 * 1.5 * 1.5));
    const LatentCode code = project(m, b).code;
    CHECK(instance(m, code).vertices.isApprox(b.vertices, 1e-9));
    CHECK(std::abs(code.shape(0)) == doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("pca of identical meshes has no components")
{
    const Mesh a = make_grid(3, 3, 10.0);
    const MorphableModel m = build_pca_model({a, a, a});
    CHECK(m.shape.rank() == 0);
    CHECK(m.albedo.rank() == 0);
    CHECK(m.mean.vertices == a.vertices);
}

TEST_CASE("pca recovers samples and their subspace")
{
    const MorphableModel& gp = small_model();
    std::vector<Mesh> data;
    for (std::uint64_t s = 0; s < 40; ++s)
        data.push_back(sample(gp, 100 + s).mesh);
    const MorphableModel pca = build_pca_model(data);
    CHECK(pca.shape.rank() <= 39);
    for (const Mesh& m : {data[0], data[17]})
        CHECK((instance(pca, project(pca, m).code).vertices - m.vertices).cwiseAbs().maxCoeff() < 1e-5);
    // the leading direction sits in the generating span
    const VectorX u = pca.shape.components.col(0);
    const VectorX inside = gp.shape.components * (gp.shape.components.transpose() * u);
    const double angle = std::acos(std::min(1.0, inside.norm() / u.norm()));
    CHECK(angle < degrees_to_radians(15.0));
    CHECK_THROWS_AS(build_pca_model({data[0]}), Error);
}

TEST_CASE("registering the mean to itself")
{
    const MorphableModel& model = small_model();
    RegistrationConfig c;
    c.steps = 300;
    c.seed = 1;
    c.views = canonical_views(32, 32);
    const RegistrationResult r = register_mesh(model, model.mean, c);
    CHECK(r.chamfer < 0.5);
    CHECK(r.registered.num_vertices() == model.mean.num_vertices());
    CHECK(r.pose.rotation.determinant() == doctest::Approx(1.0));
    // deterministic
    CHECK(register_mesh(model, model.mean, c).code.joint() == r.code.joint());
}

TEST_CASE("registration follows a moved target")
{
    const MorphableModel& model = small_model();
    Mesh target = sample(model, 5).mesh;
    const Mat3 r = rotation_about(Vec3::UnitY(), 4.0);
    target.vertices = (r * target.vertices).colwise() + Vec3(3, -2, 1);
    RegistrationConfig c;
    c.mode = RegistrationMode::shape_only;
    c.steps = 500;
    c.seed = 2;
    const RegistrationResult res = register_mesh(model, target, c);
    CHECK(res.chamfer < 1.0);
    CHECK((res.pose.rotation - r).cwiseAbs().maxCoeff() < degrees_to_radians(1.5));
}

TEST_CASE("registration config validation")
{
    RegistrationConfig c;
    CHECK_NOTHROW(c.validate());
    c.steps = -1;
    CHECK_THROWS_AS(c.validate(), Error);
    c = RegistrationConfig{};
    c.shape_weight = -1.0;
    CHECK_THROWS_AS(c.validate(), Error);
    CHECK(canonical_views().size() == 3);
}
