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

#include <Eigen/Dense>

#include "gpmm/mesh.hpp"
#include "gpmm/mesh_io.hpp"
#include "gpmm/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

using namespace gpmm;

namespace {

const char* tetrahedron_ply = R"(ply
format ascii 1.0
element vertex 4
property float x
property float y
property float z
property uchar red
property uchar green
property uchar blue
element face 4
property list uchar int vertex_indices
end_header
0 0 0 255 255 255
1 0 0 255 255 255
0 1 0 255 255 255
0 0 1 255 255 255
3 0 2 1
3 0 1 3
3 0 3 2
3 1 2 3
)";

// Brute-force nearest-neighbour distances, independent of the grid index.
std::vector<double> nn_distances(const Points3d& a, const Points3d& b)
{
    std::vector<double> out;
    for (Index i = 0; i < a.cols(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Index j = 0; j < b.cols(); ++j) {
            const double dx = a(0, i) - b(0, j), dy = a(1, i) - b(1, j), dz = a(2, i) - b(2, j);
            best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
        }
        out.push_back(best);
    }
    return out;
}

Points3d random_cloud(Index n, double size, unsigned seed)
{
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-size, size);
    Points3d p(3, n);
    for (Index i = 0; i < n; ++i)
        p.col(i) = Vec3(u(rng), u(rng), u(rng));
    return p;
}

std::string temp_path(const std::string& name)
{
    return (std::filesystem::temp_directory_path() / ("gpmm_test_" + name)).string();
}

} // namespace

TEST_CASE("ply tetrahedron loads with white albedo")
{
    const Mesh m = parse_ply(tetrahedron_ply);
    CHECK(m.num_vertices() == 4);
    CHECK(m.num_triangles() == 4);
    CHECK(m.albedo.isApprox(Points3d::Ones(3, 4)));
    m.validate();
}

TEST_CASE("loaded tetrahedron faces outward")
{
    const Mesh m = parse_ply(tetrahedron_ply);
    const Vec3 centroid = m.vertices.rowwise().mean();
    for (Index t = 0; t < m.num_triangles(); ++t) {
        const Vec3 a = m.vertices.col(m.triangles(0, t)), b = m.vertices.col(m.triangles(1, t)),
                   c = m.vertices.col(m.triangles(2, t));
        const Vec3 n = (b - a).cross(c - a);
        CHECK(n.dot((a + b + c) / 3.0 - centroid) > 0.0);
    }
}

TEST_CASE("obj without colour needs the gray fallback")
{
    const std::string obj = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
    CHECK_THROWS_AS(parse_obj(obj), Error);
    MeshReadOptions opt;
    opt.fallback_albedo = true;
    const Mesh m = parse_obj(obj, opt);
    CHECK(m.num_vertices() == 3);
    CHECK(m.albedo.isApprox(Points3d::Constant(3, 3, 0.5)));
}

TEST_CASE("triangle index out of range is rejected")
{
    const std::string ply = R"(ply
format ascii 1.0
element vertex 5
property float x
property float y
property float z
property uchar red
property uchar green
property uchar blue
element face 1
property list uchar int vertex_indices
end_header
0 0 0 1 1 1
1 0 0 1 1 1
0 1 0 1 1 1
0 0 1 1 1 1
1 1 1 1 1 1
3 0 1 7
)";
    CHECK_THROWS_AS(parse_ply(ply), Error);
}

TEST_CASE("malformed ply reports a line")
{
    const std::string ply = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
                            "property float z\nend_header\n0 zero 0\n";
    try {
        parse_ply(ply);
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::data);
        CHECK(std::string(e.what()).find("line") != std::string::npos);
    }
}

TEST_CASE("ply round trip")
{
    const Mesh m = make_face_template().mesh;
    SUBCASE("binary, double positions, float colours: exact")
    {
        PlyWriteOptions opt;
        opt.double_positions = true;
        opt.float_colors = true;
        MeshReadOptions ro;
        ro.reorient = false;
        const Mesh back = parse_ply(serialize_ply(m, opt), ro);
        CHECK(back.vertices == m.vertices);
        CHECK(back.albedo == m.albedo.cast<float>().cast<double>());
        CHECK(back.triangles == m.triangles);
    }
    SUBCASE("ascii float32: within quantization")
    {
        PlyWriteOptions opt;
        opt.encoding = PlyEncoding::ascii;
        const Mesh back = parse_ply(serialize_ply(m, opt));
        CHECK((back.vertices - m.vertices).cwiseAbs().maxCoeff() < 1e-4);
        CHECK((back.albedo - m.albedo).cwiseAbs().maxCoeff() <= 0.5 / 255.0 + 1e-12);
        // a second trip is exact
        const Mesh again = parse_ply(serialize_ply(back, opt));
        CHECK(again.vertices == back.vertices);
        CHECK(again.albedo == back.albedo);
    }
    SUBCASE("through a file")
    {
        const std::string path = temp_path("roundtrip.ply");
        save_ply(m, path);
        const Mesh back = load_mesh(path);
        CHECK(back.vertices == m.vertices.cast<float>().cast<double>());
        std::filesystem::remove(path);
    }
}

TEST_CASE("normals of a flat square point up")
{
    const Mesh m = make_grid(2, 2, 1.0);
    const Points3d n = vertex_normals(m);
    for (Index i = 0; i < n.cols(); ++i)
        CHECK((n.col(i) - Vec3::UnitZ()).norm() < 1e-12);
}

TEST_CASE("icosphere normals follow the radius")
{
    const Mesh m = make_icosphere(2, 3.0);
    const Points3d n = vertex_normals(m);
    for (Index i = 0; i < n.cols(); ++i) {
        CHECK(std::abs(n.col(i).norm() - 1.0) < 1e-6);
        CHECK(n.col(i).dot(m.vertices.col(i).normalized()) > 0.9);
    }
}

TEST_CASE("isolated vertex has no normal")
{
    Mesh m = make_grid(2, 2, 1.0);
    m.vertices.conservativeResize(3, 5);
    m.vertices.col(4) = Vec3(5, 5, 5);
    m.albedo.conservativeResize(3, 5);
    m.albedo.col(4).setConstant(0.5);
    CHECK_THROWS_AS(vertex_normals(m), Error);
    NormalOptions opt;
    opt.default_normal = Vec3::UnitY();
    CHECK(vertex_normals(m, opt).col(4) == Vec3::UnitY());
}

TEST_CASE("mirror transform")
{
    MirrorTransform t;
    CHECK(t.matrix().determinant() == doctest::Approx(-1.0));
    CHECK((t.matrix() * t.matrix()).isIdentity(0.0));
    Points3d p(3, 2);
    p.col(0) = Vec3(1, 2, 3);
    p.col(1) = Vec3(0, 2, 3);
    const Points3d q = mirror_positions(p, t);
    CHECK(q.col(0) == Vec3(-1, 2, 3));
    CHECK(q.col(1) == Vec3(0, 2, 3));
    CHECK(mirror_positions(q, t) == p);

    const Mesh m = make_face_template().mesh;
    const Points3d before = m.vertices;
    CHECK(mirror_positions(mirror_positions(m, t), t) == before);
    CHECK(m.vertices == before);
    for (Axis a : {Axis::y, Axis::z}) {
        const MirrorTransform s{a};
        CHECK(s.matrix().determinant() == doctest::Approx(-1.0));
        CHECK(mirror_positions(mirror_positions(m, s), s) == before);
    }
}

TEST_CASE("chamfer and hausdorff of simple sets")
{
    const Mesh m = make_face_template().mesh;
    CHECK(chamfer_distance(m, m) == 0.0);
    CHECK(hausdorff_distance(m, m) == 0.0);
    CHECK(chamfer_distance(m, m, Direction::symmetric) == 0.0);

    Points3d a(3, 2);
    a.col(0) = Vec3(0, 0, 0);
    a.col(1) = Vec3(100, 0, 0);
    const Points3d b = a.colwise() + Vec3(3, 4, 0);
    CHECK(chamfer_distance(a, b) == doctest::Approx(5.0));
    CHECK(hausdorff_distance(a, b) == doctest::Approx(5.0));
}

TEST_CASE("one displaced vertex in a random cloud")
{
    const Points3d b = random_cloud(100, 500.0, 3);
    Points3d a = b;
    a.col(17) += Vec3(6, 0, 8);
    const auto d = nn_distances(a, b);
    double mean = 0.0, max = 0.0;
    for (double x : d) {
        mean += x / double(d.size());
        max = std::max(max, x);
    }
    CHECK(chamfer_distance(a, b) == doctest::Approx(mean).epsilon(1e-12));
    CHECK(hausdorff_distance(a, b) == doctest::Approx(max).epsilon(1e-12));
    CHECK(max == doctest::Approx(10.0));
    CHECK(mean == doctest::Approx(0.1));
}

TEST_CASE("symmetric variants average or max both directions")
{
    const Points3d a = random_cloud(60, 50.0, 4);
    const Points3d b = random_cloud(80, 50.0, 5);
    const auto ab = nn_distances(a, b), ba = nn_distances(b, a);
    double mab = 0, mba = 0, hab = 0, hba = 0;
    for (double x : ab) {
        mab += x / double(ab.size());
        hab = std::max(hab, x);
    }
    for (double x : ba) {
        mba += x / double(ba.size());
        hba = std::max(hba, x);
    }
    CHECK(chamfer_distance(a, b, Direction::symmetric) == doctest::Approx(0.5 * (mab + mba)));
    CHECK(hausdorff_distance(a, b, Direction::symmetric) == doctest::Approx(std::max(hab, hba)));
}

TEST_CASE("distances never grow when the target grows")
{
    for (unsigned seed = 10; seed < 20; ++seed) {
        const Points3d a = random_cloud(50, 30.0, seed);
        const Points3d sub = random_cloud(40, 30.0, seed + 100);
        Points3d super(3, 90);
        super << sub, random_cloud(50, 30.0, seed + 200);
        CHECK(chamfer_distance(a, super) <= chamfer_distance(a, sub));
        CHECK(hausdorff_distance(a, super) <= hausdorff_distance(a, sub));
    }
}

TEST_CASE("nearest neighbour index agrees with brute force")
{
    const Points3d pts = random_cloud(300, 80.0, 7);
    const Points3d queries = random_cloud(200, 120.0, 8);
    const NearestNeighborIndex index(pts);
    const auto d = nn_distances(queries, pts);
    for (Index i = 0; i < queries.cols(); ++i)
        CHECK(std::sqrt(index.nearest(queries.col(i)).second) == doctest::Approx(d[i]).epsilon(1e-12));
}

TEST_CASE("empty point sets are rejected")
{
    const Points3d empty(3, 0);
    const Points3d one = Points3d::Zero(3, 1);
    CHECK_THROWS_AS(chamfer_distance(empty, one), Error);
    CHECK_THROWS_AS(hausdorff_distance(one, empty), Error);
}

TEST_CASE("landmark csv round trip")
{
    LandmarkSet s;
    s.points = {{"left_eye", 3}, {"nose_tip", 10}};
    s.observations = {{"left_eye", Vec2(12.5, 40.25), 4.0}, {"nose_tip", Vec2(64.0, 70.0), 2.5}};
    const std::string path = temp_path("landmarks.csv");
    save_landmarks(s, path);
    const LandmarkSet back = load_landmarks(path);
    REQUIRE(back.points.size() == 2);
    REQUIRE(back.observations.size() == 2);
    CHECK(back.vertex_of("nose_tip") == 10);
    CHECK(back.observations[0].pixel == Vec2(12.5, 40.25));
    CHECK(back.observations[1].sigma == 2.5);
    std::filesystem::remove(path);

    LandmarkSet dup;
    dup.points = {{"a", 1}, {"a", 2}};
    CHECK_THROWS_AS(dup.validate(10), Error);
    LandmarkSet bad;
    bad.points = {{"a", 12}};
    CHECK_THROWS_AS(bad.validate(10), Error);
}

TEST_CASE("mesh validation catches broken invariants")
{
    Mesh m = make_tetrahedron();
    m.validate();
    SUBCASE("albedo out of range")
    {
        m.albedo(0, 0) = 1.5;
        CHECK_THROWS_AS(m.validate(), Error);
    }
    SUBCASE("nan position")
    {
        m.vertices(1, 2) = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(m.validate(), Error);
    }
    SUBCASE("albedo count")
    {
        m.albedo.conservativeResize(3, 3);
        CHECK_THROWS_AS(m.validate(), Error);
    }
}
