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

#ifndef GPMM_MODEL_IO_HPP
#define GPMM_MODEL_IO_HPP

#include "gpmm/lowrank.hpp"

#include <string>

namespace gpmm {

/**
 * Model container (".gpmm"): a ustar archive holding
 *
 *   manifest.json         format_version, ranks, provenance
 *   mean.ply              binary PLY, float64 positions, float32 colours
 *   shape_basis.bin       3n x r_s matrix, float32
 *   shape_eigenvalues.bin r_s x 1, float64
 *   albedo_basis.bin      3n x r_a matrix, float32
 *   albedo_eigenvalues.bin r_a x 1, float64
 *
 * Every .bin blob starts with a 24 byte little-endian header
 * {char magic[4] = "GPMB"; uint32 dtype (1 = float32, 2 = float64);
 *  uint64 rows; uint64 cols} followed by row-major data.
 */
constexpr int model_format_version = 1;

std::string serialize_matrix(const MatrixX& m, bool single_precision);
MatrixX deserialize_matrix(const std::string& bytes);

std::string serialize_model(const MorphableModel& model);
MorphableModel deserialize_model(const std::string& bytes);

void save_model(const MorphableModel& model, const std::string& path);
MorphableModel load_model(const std::string& path);

} // namespace gpmm

#endif // GPMM_MODEL_IO_HPP
