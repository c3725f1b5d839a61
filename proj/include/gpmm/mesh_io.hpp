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

#ifndef GPMM_MESH_IO_HPP
#define GPMM_MESH_IO_HPP

#include "gpmm/mesh.hpp"

#include <string>

namespace gpmm {

enum class MeshFormat { ply, obj };

struct MeshReadOptions
{
    /// Assign gray 0.5 albedo when the file carries no colour instead of failing.
    bool fallback_albedo = false;
    /// Make triangle winding consistent and outward-facing after parsing.
    bool reorient = true;
};

enum class PlyEncoding { binary_little_endian, ascii };

struct PlyWriteOptions
{
    PlyEncoding encoding = PlyEncoding::binary_little_endian;
    /// float64 positions instead of float32.
    bool double_positions = false;
    /// float32 colour channels instead of uchar.
    bool float_colors = false;
};

/// Guesses the format from the file extension.
MeshFormat format_from_path(const std::string& path);

Mesh load_mesh(const std::string& path, const MeshReadOptions& options = {});
Mesh load_mesh(const std::string& path, MeshFormat format, const MeshReadOptions& options = {});

/// PLY parsing from an in-memory buffer (also used for model archives).
Mesh parse_ply(const std::string& bytes, const MeshReadOptions& options = {});
Mesh parse_obj(const std::string& text, const MeshReadOptions& options = {});

std::string serialize_ply(const Mesh& mesh, const PlyWriteOptions& options = {});
void save_ply(const Mesh& mesh, const std::string& path, const PlyWriteOptions& options = {});

} // namespace gpmm

#endif // GPMM_MESH_IO_HPP
