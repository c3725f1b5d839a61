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
#include "gpmm/mesh.hpp"

#include "Eigen/Geometry"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <sstream>

namespace gpmm {

void Mesh::validate() const
{
    if (albedo.cols() != vertices.cols())
        throw data_error("mesh: albedo count " + std::to_string(albedo.cols()) + " does not match vertex count " +
                         std::to_string(vertices.cols()));
    if (!vertices.allFinite())
        throw data_error("mesh: non-finite vertex coordinate");
    if (!albedo.allFinite() || (albedo.size() > 0 && (albedo.minCoeff() < 0.0 || albedo.maxCoeff() > 1.0)))
        throw data_error("mesh: albedo outside [0,1]");
    for (Index t = 0; t < triangles.cols(); ++t) {
        for (int k = 0; k < 3; ++k) {
            const int v = triangles(k, t);
            if (v < 0 || v >= vertices.cols())
                throw data_error("mesh: triangle " + std::to_string(t) + " references vertex " + std::to_string(v) +
                                 " out of range (vertex count " + std::to_string(vertices.cols()) + ")");
        }
    }
}

bool same_topology(const Mesh& a, const Mesh& b)
{
    return a.num_vertices() == b.num_vertices() && a.triangles.cols() == b.triangles.cols() &&
           a.triangles == b.triangles;
}

Index orient_consistently(Mesh& mesh)
{
    const Index nt = mesh.triangles.cols();
    if (nt == 0)
        return 0;
    // undirected edge -> incident triangles
    std::map<std::pair<int, int>, std::vector<Index>> edges;
    for (Index t = 0; t < nt; ++t) {
        for (int k = 0; k < 3; ++k) {
            int a = mesh.triangles(k, t), b = mesh.triangles((k + 1) % 3, t);
            edges[{std::min(a, b), std::max(a, b)}].push_back(t);
        }
    }
    auto has_directed = [&](Index t, int a, int b) {
        for (int k = 0; k < 3; ++k)
            if (mesh.triangles(k, t) == a && mesh.triangles((k + 1) % 3, t) == b)
                return true;
        return false;
    };

    std::vector<char> visited(nt, 0);
    std::vector<char> flipped(nt, 0);
    for (Index seed = 0; seed < nt; ++seed) {
        if (visited[seed])
            continue;
        visited[seed] = 1;
        std::queue<Index> queue;
        queue.push(seed);
        while (!queue.empty()) {
            const Index t = queue.front();
            queue.pop();
            for (int k = 0; k < 3; ++k) {
                const int a = mesh.triangles(k, t), b = mesh.triangles((k + 1) % 3, t);
                for (Index u : edges[{std::min(a, b), std::max(a, b)}]) {
                    if (u == t || visited[u])
                        continue;
                    visited[u] = 1;
                    // a consistent neighbour traverses the shared edge in the opposite direction
                    if (has_directed(u, a, b)) {
                        std::swap(mesh.triangles(1, u), mesh.triangles(2, u));
                        flipped[u] = 1;
                    }
                    queue.push(u);
                }
            }
        }
    }

    const Vec3 centroid = mesh.vertices.rowwise().mean();
    double signed_volume = 0.0;
    for (Index t = 0; t < nt; ++t) {
        const Vec3 a = mesh.vertices.col(mesh.triangles(0, t)) - centroid;
        const Vec3 b = mesh.vertices.col(mesh.triangles(1, t)) - centroid;
        const Vec3 c = mesh.vertices.col(mesh.triangles(2, t)) - centroid;
        signed_volume += a.dot(b.cross(c));
    }
    Index count = std::count(flipped.begin(), flipped.end(), 1);
    if (signed_volume < 0.0) {
        mesh.triangles.row(1).swap(mesh.triangles.row(2));
        count = nt - count;
    }
    return count;
}

Axis parse_axis(const std::string& name)
{
    if (name == "x" || name == "X")
        return Axis::x;
    if (name == "y" || name == "Y")
        return Axis::y;
    if (name == "z" || name == "Z")
        return Axis::z;
    throw usage_error("unknown mirror axis '" + name + "' (expected x, y or z)");
}

std::string axis_name(Axis axis)
{
    switch (axis) {
    case Axis::x:
        return "x";
    case Axis::y:
        return "y";
    case Axis::z:
        return "z";
    }
    return "x";
}

Points3d mirror_positions(const Points3d& points, const MirrorTransform& t)
{
    Points3d out = points;
    out.row(static_cast<int>(t.axis)) *= -1.0;
    return out;
}

Points3d mirror_positions(const Mesh& mesh, const MirrorTransform& t) { return mirror_positions(mesh.vertices, t); }

Points3d vertex_normals(const Points3d& vertices, const Triangles& triangles, const NormalOptions& options)
{
    Points3d normals = Points3d::Zero(3, vertices.cols());
    for (Index t = 0; t < triangles.cols(); ++t) {
        const int i0 = triangles(0, t), i1 = triangles(1, t), i2 = triangles(2, t);
        // un-normalized cross product is twice the area times the unit normal
        const Vec3 n = (vertices.col(i1) - vertices.col(i0)).cross(vertices.col(i2) - vertices.col(i0));
        normals.col(i0) += n;
        normals.col(i1) += n;
        normals.col(i2) += n;
    }
    for (Index v = 0; v < normals.cols(); ++v) {
        const double len = normals.col(v).norm();
        if (len > 0.0 && std::isfinite(len)) {
            normals.col(v) /= len;
        } else if (options.default_normal) {
            normals.col(v) = options.default_normal->normalized();
        } else {
            throw data_error("vertex_normals: vertex " + std::to_string(v) + " has no incident triangle area");
        }
    }
    return normals;
}

Points3d vertex_normals(const Mesh& mesh, const NormalOptions& options)
{
    return vertex_normals(mesh.vertices, mesh.triangles, options);
}

std::vector<std::vector<int>> vertex_neighbors(const Triangles& triangles, Index num_vertices)
{
    std::vector<std::vector<int>> rings(num_vertices);
    for (Index t = 0; t < triangles.cols(); ++t) {
        for (int k = 0; k < 3; ++k) {
            const int a = triangles(k, t);
            rings[a].push_back(triangles((k + 1) % 3, t));
            rings[a].push_back(triangles((k + 2) % 3, t));
        }
    }
    for (auto& ring : rings) {
        std::sort(ring.begin(), ring.end());
        ring.erase(std::unique(ring.begin(), ring.end()), ring.end());
    }
    return rings;
}

NearestNeighborIndex::NearestNeighborIndex(const Points3d& points) : points_(points)
{
    if (points_.cols() == 0)
        throw data_error("nearest-neighbour index: empty point set");
    const Vec3 lo = points_.rowwise().minCoeff();
    const Vec3 hi = points_.rowwise().maxCoeff();
    const Vec3 extent = (hi - lo).cwiseMax(1e-9);
    // roughly two points per cell for surface-like sets
    const double volume_per_cell = extent.prod() / std::max<double>(1.0, points_.cols() / 2.0);
    cell_size_ = std::max({std::cbrt(volume_per_cell), extent.maxCoeff() / 256.0, 1e-9});
    origin_ = lo;
    for (int k = 0; k < 3; ++k)
        dims_[k] = std::clamp(static_cast<int>(std::floor(extent[k] / cell_size_)) + 1, 1, 512);

    const Index num_cells = Index(dims_.x()) * dims_.y() * dims_.z();
    std::vector<Index> counts(num_cells + 1, 0);
    std::vector<Index> cell_of_point(points_.cols());
    for (Index i = 0; i < points_.cols(); ++i) {
        cell_of_point[i] = flat(cell_of(points_.col(i)));
        ++counts[cell_of_point[i] + 1];
    }
    for (Index c = 0; c < num_cells; ++c)
        counts[c + 1] += counts[c];
    cell_start_ = counts;
    cell_items_.resize(points_.cols());
    std::vector<Index> fill = counts;
    for (Index i = 0; i < points_.cols(); ++i)
        cell_items_[fill[cell_of_point[i]]++] = i;
}

Eigen::Vector3i NearestNeighborIndex::cell_of(const Vec3& p) const
{
    Eigen::Vector3i c;
    for (int k = 0; k < 3; ++k)
        c[k] = std::clamp(static_cast<int>(std::floor((p[k] - origin_[k]) / cell_size_)), 0, dims_[k] - 1);
    return c;
}

std::pair<Index, double> NearestNeighborIndex::nearest(const Vec3& query) const
{
    const Eigen::Vector3i center = cell_of(query);
    Index best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    const int max_ring = dims_.maxCoeff();
    for (int ring = 0; ring <= max_ring; ++ring) {
        for (int dz = -ring; dz <= ring; ++dz) {
            const int z = center.z() + dz;
            if (z < 0 || z >= dims_.z())
                continue;
            for (int dy = -ring; dy <= ring; ++dy) {
                const int y = center.y() + dy;
                if (y < 0 || y >= dims_.y())
                    continue;
                for (int dx = -ring; dx <= ring; ++dx) {
                    // only the shell of the current ring
                    if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring)
                        continue;
                    const int x = center.x() + dx;
                    if (x < 0 || x >= dims_.x())
                        continue;
                    const Index c = flat({x, y, z});
                    for (Index k = cell_start_[c]; k < cell_start_[c + 1]; ++k) {
                        const Index i = cell_items_[k];
                        const double d2 = (points_.col(i) - query).squaredNorm();
                        if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
                            best_d2 = d2;
                            best = i;
                        }
                    }
                }
            }
        }
        if (best >= 0) {
            // Everything outside the searched cube is at least this far from the query,
            // measured against the query's own position inside its cell.
            double margin = std::numeric_limits<double>::infinity();
            for (int k = 0; k < 3; ++k) {
                const double lo = origin_[k] + (center[k] - ring) * cell_size_;
                const double hi = origin_[k] + (center[k] + ring + 1) * cell_size_;
                if (center[k] - ring > 0)
                    margin = std::min(margin, query[k] - lo);
                if (center[k] + ring + 1 < dims_[k])
                    margin = std::min(margin, hi - query[k]);
            }
            if (best_d2 <= margin * margin)
                break;
        }
    }
    return {best, best_d2};
}

namespace {

void require_nonempty(const Points3d& a, const Points3d& b)
{
    if (a.cols() == 0 || b.cols() == 0)
        throw data_error("distance: empty vertex set");
}

Eigen::VectorXd nearest_distances(const Points3d& a, const NearestNeighborIndex& index)
{
    Eigen::VectorXd d(a.cols());
    for (Index i = 0; i < a.cols(); ++i)
        d[i] = std::sqrt(index.nearest(a.col(i)).second);
    return d;
}

} // namespace

double chamfer_distance(const Points3d& a, const NearestNeighborIndex& b)
{
    if (a.cols() == 0)
        throw data_error("chamfer_distance: empty vertex set");
    return nearest_distances(a, b).mean();
}

double chamfer_distance(const Points3d& a, const Points3d& b, Direction direction)
{
    require_nonempty(a, b);
    const double ab = chamfer_distance(a, NearestNeighborIndex(b));
    if (direction == Direction::directed)
        return ab;
    return 0.5 * (ab + chamfer_distance(b, NearestNeighborIndex(a)));
}

double chamfer_distance(const Mesh& a, const Mesh& b, Direction direction)
{
    return chamfer_distance(a.vertices, b.vertices, direction);
}

double hausdorff_distance(const Points3d& a, const Points3d& b, Direction direction)
{
    require_nonempty(a, b);
    const double ab = nearest_distances(a, NearestNeighborIndex(b)).maxCoeff();
    if (direction == Direction::directed)
        return ab;
    return std::max(ab, nearest_distances(b, NearestNeighborIndex(a)).maxCoeff());
}

double hausdorff_distance(const Mesh& a, const Mesh& b, Direction direction)
{
    return hausdorff_distance(a.vertices, b.vertices, direction);
}

std::optional<int> LandmarkSet::vertex_of(const std::string& name) const
{
    for (const auto& p : points)
        if (p.name == name)
            return p.vertex;
    return std::nullopt;
}

void LandmarkSet::validate(Index num_vertices) const
{
    std::set<std::string> seen;
    for (const auto& p : points) {
        if (!seen.insert(p.name).second)
            throw data_error("landmarks: duplicate name '" + p.name + "'");
        if (p.vertex < 0 || p.vertex >= num_vertices)
            throw data_error("landmarks: '" + p.name + "' references vertex " + std::to_string(p.vertex) +
                             " out of range");
    }
    seen.clear();
    for (const auto& o : observations) {
        if (!seen.insert(o.name).second)
            throw data_error("landmarks: duplicate observation '" + o.name + "'");
        if (!(o.sigma > 0.0))
            throw data_error("landmarks: observation '" + o.name + "' needs sigma > 0");
    }
}

namespace {

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ','))
        fields.push_back(field);
    for (auto& f : fields) {
        const auto b = f.find_first_not_of(" \t\r");
        const auto e = f.find_last_not_of(" \t\r");
        f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
    }
    return fields;
}

bool is_number(const std::string& s)
{
    if (s.empty())
        return false;
    char* end = nullptr;
    std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

} // namespace

LandmarkSet load_landmarks(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw data_error("landmarks: cannot open '" + path + "'");
    LandmarkSet set;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#')
            continue;
        const auto f = split_csv(line);
        if (f.size() == 2 && is_number(f[1])) {
            set.points.push_back({f[0], std::stoi(f[1])});
        } else if (f.size() == 4 && is_number(f[1]) && is_number(f[2]) && is_number(f[3])) {
            set.observations.push_back({f[0], Vec2(std::stod(f[1]), std::stod(f[2])), std::stod(f[3])});
        } else if (line_no == 1) {
            continue; // header row
        } else {
            throw data_error("landmarks: " + path + ":" + std::to_string(line_no) + ": malformed row");
        }
    }
    set.validate(std::numeric_limits<int>::max());
    return set;
}

void save_landmarks(const LandmarkSet& landmarks, const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw data_error("landmarks: cannot write '" + path + "'");
    out.precision(17);
    for (const auto& p : landmarks.points)
        out << p.name << ',' << p.vertex << '\n';
    for (const auto& o : landmarks.observations)
        out << o.name << ',' << o.pixel.x() << ',' << o.pixel.y() << ',' << o.sigma << '\n';
}

} // namespace gpmm
