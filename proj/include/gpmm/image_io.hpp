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

#ifndef GPMM_IMAGE_IO_HPP
#define GPMM_IMAGE_IO_HPP

#include "gpmm/render.hpp"

#include <string>

namespace gpmm {

double srgb_to_linear(double v);
double linear_to_srgb(double v);

/// 8-bit sRGB PNG (gray, RGB, with or without alpha) to linear RGB.
ImageRGB load_png(const std::string& path);
/// Linear RGB clamped to [0,1], written as 8-bit sRGB.
void save_png(const ImageRGB& image, const std::string& path);

/// In-memory variants.
ImageRGB decode_png(const std::string& bytes);
std::string encode_png(const ImageRGB& image);

/// 8-bit grayscale, 255 for set pixels.
void save_mask_png(const Mask& mask, int width, int height, const std::string& path);
Mask load_mask_png(const std::string& path, int* width = nullptr, int* height = nullptr);

/// Round trip through 8-bit sRGB as a stored PNG would.
ImageRGB quantize_srgb8(const ImageRGB& image);

} // namespace gpmm

#endif // GPMM_IMAGE_IO_HPP
