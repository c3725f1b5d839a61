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
#include "gpmm/synthetic.hpp"

#include <limits>
#include <map>

namespace gpmm {

namespace {

Vec3 face_color(double x, double y)
{
    const double ax = std::abs(x);
    const double eye = (ax - 30.0) * (ax - 30.0) + (y - 28.0) * (y - 28.0);
    if (eye < 9.0 * 9.0)
        return Vec3(0.12, 0.10, 0.10);
    if (ax > 14.0 && ax < 46.0 && std::abs(y - 44.0) < 4.5)
        return Vec3(0.25, 0.16, 0.10);
    const double lx = x / 26.0, ly = (y + 48.0) / 7.5;
    if (lx * lx + ly * ly < 1.0)
        return Vec3(0.70, 0.28, 0.28);
    return Vec3(0.80, 0.60, 0.50);
}

} // namespace

FaceTemplate make_face_template(const FaceTemplateOptions& o)
{
    if (o.rows < 2 || o.cols < 2 || o.cols % 2 != 0)
        throw usage_error("face template needs rows >= 2 and an even column count >= 2");
    const int rows = o.rows, cols = o.cols, half = cols / 2;
    const double a = o.semi_axes.x(), b = o.semi_axes.y(), c = o.semi_axes.z();

    FaceTemplate ft;
    Mesh& m = ft.mesh;
    m.vertices.resize(3, Index(rows) * cols);
    m.albedo.resize(3, Index(rows) * cols);
    for (int i = 0; i < rows; ++i) {
        const double phi = (-1.0 + 2.0 * i / (rows - 1)) * o.extent;
        for (int j = half; j < cols; ++j) {
            const double t = (j - 0.5 * (cols - 1)) / (0.5 * (cols - 1));
            const double theta = t * o.extent;
            const double x = a * std::sin(theta) * std::cos(phi);
            const double y = b * std::sin(phi);
            double z = c * std::cos(theta) * std::cos(phi);
            z += o.nose * std::exp(-x * x / (2.0 * 9.0 * 9.0) - (y + 5.0) * (y + 5.0) / (2.0 * 20.0 * 20.0));
            const Index right = Index(i) * cols + j;
            const Index left = Index(i) * cols + (cols - 1 - j);
            m.vertices.col(right) = Vec3(x, y, z);
            m.vertices.col(left) = Vec3(-x, y, z);
            const Vec3 col = o.features ? face_color(x, y) : Vec3(0.80, 0.60, 0.50);
            m.albedo.col(right) = col;
            m.albedo.col(left) = col;
        }
    }
    m.triangles.resize(3, 2 * Index(rows - 1) * (cols - 1));
    Index t = 0;
    for (int i = 0; i + 1 < rows; ++i)
        for (int j = 0; j + 1 < cols; ++j) {
            const int v00 = i * cols + j, v01 = v00 + 1, v10 = v00 + cols, v11 = v10 + 1;
            m.triangles.col(t++) = Eigen::Vector3i(v00, v01, v11);
            m.triangles.col(t++) = Eigen::Vector3i(v00, v11, v10);
        }

    auto nearest_right = [&](double x, double y) {
        // search only on the +x half so mirror partners are exact
        int best = half;
        double best_d = std::numeric_limits<double>::infinity();
        for (int i = 0; i < rows; ++i)
            for (int j = half; j < cols; ++j) {
                const Vec3 p = m.vertices.col(Index(i) * cols + j);
                const double d = (p.x() - x) * (p.x() - x) + (p.y() - y) * (p.y() - y);
                if (d < best_d) {
                    best_d = d;
                    best = i * cols + j;
                }
            }
        return best;
    };
    auto partner = [&](int v) { return (v / cols) * cols + (cols - 1 - v % cols); };
    const int eye = nearest_right(30.0, 28.0);
    const int mouth = nearest_right(24.0, -48.0);
    ft.landmarks = {{"left_eye", eye},
                    {"right_eye", partner(eye)},
                    {"nose_tip", nearest_right(0.0, -5.0)},
                    {"left_mouth", mouth},
                    {"right_mouth", partner(mouth)},
                    {"chin", nearest_right(0.0, -b * 0.92)}};
    m.validate();
    return ft;
}

Mesh make_icosphere(int subdivisions, double radius, const Vec3& albedo)
{
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                           {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& p : v)
        p.normalize();
    std::vector<Eigen::Vector3i> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> cache;
        auto mid = [&](int i, int j) {
            const auto key = std::minmax(i, j);
            const auto it = cache.find(key);
            if (it != cache.end())
                return it->second;
            v.push_back((v[i] + v[j]).normalized());
            const int id = static_cast<int>(v.size()) - 1;
            cache.emplace(key, id);
            return id;
        };
        std::vector<Eigen::Vector3i> next;
        next.reserve(f.size() * 4);
        for (const auto& tri : f) {
            const int a = mid(tri[0], tri[1]), b = mid(tri[1], tri[2]), c = mid(tri[2], tri[0]);
            next.emplace_back(tri[0], a, c);
            next.emplace_back(tri[1], b, a);
            next.emplace_back(tri[2], c, b);
            next.emplace_back(a, b, c);
        }
        f.swap(next);
    }
    Mesh m;
    m.vertices.resize(3, Index(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
        m.vertices.col(Index(i)) = radius * v[i];
    m.triangles.resize(3, Index(f.size()));
    for (std::size_t i = 0; i < f.size(); ++i)
        m.triangles.col(Index(i)) = f[i];
    m.albedo = albedo.replicate(1, m.vertices.cols());
    orient_consistently(m);
    return m;
}

Mesh make_grid(int nx, int ny, double spacing, const Vec3& albedo)
{
    if (nx < 2 || ny < 2)
        throw usage_error("grid needs at least 2x2 vertices");
    Mesh m;
    m.vertices.resize(3, Index(nx) * ny);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            m.vertices.col(Index(j) * nx + i) =
                Vec3((i - 0.5 * (nx - 1)) * spacing, (j - 0.5 * (ny - 1)) * spacing, 0.0);
    m.triangles.resize(3, 2 * Index(nx - 1) * (ny - 1));
    Index t = 0;
    for (int j = 0; j + 1 < ny; ++j)
        for (int i = 0; i + 1 < nx; ++i) {
            const int v00 = j * nx + i, v01 = v00 + 1, v10 = v00 + nx, v11 = v10 + 1;
            m.triangles.col(t++) = Eigen::Vector3i(v00, v01, v11);
            m.triangles.col(t++) = Eigen::Vector3i(v00, v11, v10);
        }
    m.albedo = albedo.replicate(1, m.vertices.cols());
    return m;
}

Mesh make_tetrahedron()
{
    Mesh m;
    m.vertices.resize(3, 4);
    m.vertices << 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, -1, -1;
    m.triangles.resize(3, 4);
    m.triangles << 0, 0, 0, 1, 1, 2, 3, 3, 2, 3, 1, 2;
    m.albedo = Points3d::Constant(3, 4, 0.5);
    orient_consistently(m);
    return m;
}

SceneParams default_scene(int width, int height, double distance)
{
    SceneParams s;
    s.camera = Camera::centered(width, height, 0.5 * height * distance / 200.0);
    s.pose.translation = Vec3(0.0, 0.0, distance);
    s.illumination = directional_illumination(0.8, 0.4, Vec3(0.3, -0.4, -1.0));
    return s;
}

std::vector<int> mirror_partners(const Points3d& vertices, Axis axis)
{
    const NearestNeighborIndex index(vertices);
    const Mat3 mirror = MirrorTransform{axis}.matrix();
    std::vector<int> partner(vertices.cols());
    for (Index i = 0; i < vertices.cols(); ++i)
        partner[i] = static_cast<int>(index.nearest(mirror * vertices.col(i)).first);
    return partner;
}

double asymmetry(const Points3d& vertices, const std::vector<int>& mirror_partner)
{
    if (Index(mirror_partner.size()) != vertices.cols())
        throw data_error("asymmetry: partner map has the wrong size");
    if (vertices.cols() == 0)
        return 0.0;
    const Mat3 mirror = MirrorTransform{Axis::x}.matrix();
    double s = 0.0;
    for (Index i = 0; i < vertices.cols(); ++i)
        s += (vertices.col(i) - mirror * vertices.col(mirror_partner[i])).norm();
    return s / double(vertices.cols());
}

} // namespace gpmm
