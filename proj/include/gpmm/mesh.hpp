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
#pragma once

#ifndef GPMM_MESH_HPP
#define GPMM_MESH_HPP

#include "gpmm/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gpmm {

/**
 * Triangle mesh with per-vertex albedo. Positions are in millimetres, albedo is
 * linear RGB in [0,1]^3. All meshes produced by one model share the topology of
 * its mean.
 */
struct Mesh
{
    Points3d vertices;
    Triangles triangles;
    Points3d albedo;

    Index num_vertices() const { return vertices.cols(); }
    Index num_triangles() const { return triangles.cols(); }

    /// Throws a data error naming the first violated invariant.
    void validate() const;
};

/// True when both meshes have the same vertex count and identical triangle lists.
bool same_topology(const Mesh& a, const Mesh& b);

/// Reorients triangles so that neighbours agree and normals point away from the centroid.
/// Returns the number of flipped triangles.
Index orient_consistently(Mesh& mesh);

enum class Axis { x = 0, y = 1, z = 2 };

/// Reflection negating one coordinate axis (the left-right axis of a scan).
struct MirrorTransform
{
    Axis axis = Axis::x;

    Mat3 matrix() const
    {
        Mat3 m = Mat3::Identity();
        m(static_cast<int>(axis), static_cast<int>(axis)) = -1.0;
        return m;
    }
};

Axis parse_axis(const std::string& name);
std::string axis_name(Axis axis);

/// Per-vertex mirrored positions; the mesh is left untouched.
Points3d mirror_positions(const Mesh& mesh, const MirrorTransform& t);
Points3d mirror_positions(const Points3d& points, const MirrorTransform& t);

struct NormalOptions
{
    /// When set, isolated vertices get this normal instead of raising an error.
    std::optional<Vec3> default_normal;
};

/// Area-weighted average of incident face normals, normalized.
Points3d vertex_normals(const Mesh& mesh, const NormalOptions& options = {});
Points3d vertex_normals(const Points3d& vertices, const Triangles& triangles, const NormalOptions& options = {});

/// Unique 1-ring neighbours of each vertex.
std::vector<std::vector<int>> vertex_neighbors(const Triangles& triangles, Index num_vertices);

/**
 * Uniform-grid nearest-neighbour index over a fixed point set. Queries are exact;
 * the grid only prunes the search.
 */
class NearestNeighborIndex
{
public:
    explicit NearestNeighborIndex(const Points3d& points);

    /// Index of the nearest point and the squared distance to it.
    std::pair<Index, double> nearest(const Vec3& query) const;

    const Points3d& points() const { return points_; }

private:
    Eigen::Vector3i cell_of(const Vec3& p) const;
    Index flat(const Eigen::Vector3i& c) const { return (Index(c.z()) * dims_.y() + c.y()) * dims_.x() + c.x(); }

    Points3d points_;
    Vec3 origin_;
    double cell_size_ = 1.0;
    Eigen::Vector3i dims_;
    std::vector<Index> cell_start_;
    std::vector<Index> cell_items_;
};

enum class Direction { directed, symmetric };

/// Mean over vertices of `a` of the distance to the nearest vertex of `b`.
double chamfer_distance(const Points3d& a, const Points3d& b, Direction direction = Direction::directed);
double chamfer_distance(const Mesh& a, const Mesh& b, Direction direction = Direction::directed);
/// Same, reusing a prebuilt index over the target vertices.
double chamfer_distance(const Points3d& a, const NearestNeighborIndex& b);

/// Max over vertices of `a` of the distance to the nearest vertex of `b`.
double hausdorff_distance(const Points3d& a, const Points3d& b, Direction direction = Direction::directed);
double hausdorff_distance(const Mesh& a, const Mesh& b, Direction direction = Direction::directed);

/// Mean per-vertex Euclidean distance between corresponding columns.
template <typename DerivedA, typename DerivedB>
double mean_correspondence_distance(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b)
{
    if (a.cols() == 0)
        return 0.0;
    return (a - b).colwise().norm().mean();
}

/// Named 3D landmark on the reference topology.
struct Landmark3D
{
    std::string name;
    int vertex = 0;
};

/// Named 2D image observation.
struct Landmark2D
{
    std::string name;
    Vec2 pixel = Vec2::Zero();
    double sigma = 4.0;
};

struct LandmarkSet
{
    std::vector<Landmark3D> points;
    std::vector<Landmark2D> observations;

    std::optional<int> vertex_of(const std::string& name) const;
    /// Names unique and vertex ids valid for a mesh of the given size.
    void validate(Index num_vertices) const;
};

LandmarkSet load_landmarks(const std::string& path);
void save_landmarks(const LandmarkSet& landmarks, const std::string& path);

} // namespace gpmm

#endif // GPMM_MESH_HPP
