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

#ifndef GPMM_SYNTHETIC_HPP
#define GPMM_SYNTHETIC_HPP

#include "gpmm/mesh.hpp"
#include "gpmm/render.hpp"

#include <vector>

namespace gpmm {

/**
 * Procedural face-like template: the front of an ellipsoid with a nose bump,
 * coloured eyes, brows and lips. Built exactly mirror-symmetric about x = 0,
 * facing +z with +y up, in millimetres.
 */
struct FaceTemplateOptions
{
    int rows = 32;    ///< vertical samples
    int cols = 32;    ///< horizontal samples, even
    Vec3 semi_axes = Vec3(75.0, 100.0, 60.0);
    double extent = degrees_to_radians(72.0); ///< angular half-width of the patch
    double nose = 22.0;                       ///< nose height, mm
    bool features = true;                     ///< eyes, brows, lips
};

struct FaceTemplate
{
    Mesh mesh;
    /// left_eye, right_eye, nose_tip, left_mouth, right_mouth, chin (subject's left is +x).
    std::vector<Landmark3D> landmarks;
};

FaceTemplate make_face_template(const FaceTemplateOptions& options = {});

/// Unit-icosahedron subdivision projected onto a sphere, uniform albedo.
Mesh make_icosphere(int subdivisions, double radius, const Vec3& albedo = Vec3::Constant(0.5));

/// Flat nx x ny vertex grid in the z = 0 plane facing +z, centred on the origin.
Mesh make_grid(int nx, int ny, double spacing, const Vec3& albedo = Vec3::Constant(0.5));

Mesh make_tetrahedron();

/// Frontal view at `distance` mm with a camera sized so a 200 mm face spans half the height.
SceneParams default_scene(int width = 128, int height = 128, double distance = 600.0);

/// Mean left-right asymmetry: average distance between each vertex and the mirror image of its mirror partner.
double asymmetry(const Points3d& vertices, const std::vector<int>& mirror_partner);
/// Index of the vertex closest to each vertex's mirror image (exact partners on symmetric templates).
std::vector<int> mirror_partners(const Points3d& vertices, Axis axis = Axis::x);

} // namespace gpmm

#endif // GPMM_SYNTHETIC_HPP
