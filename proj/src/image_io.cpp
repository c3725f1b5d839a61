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
#include "gpmm/image_io.hpp"

#include "gpmm/archive.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <vector>

namespace gpmm {

namespace {

const std::array<double, 256>& srgb_table()
{
    static const std::array<double, 256> table = [] {
        std::array<double, 256> t{};
        for (int i = 0; i < 256; ++i)
            t[i] = srgb_to_linear(i / 255.0);
        return t;
    }();
    return table;
}

std::uint8_t encode_channel(double linear)
{
    const double s = linear_to_srgb(std::clamp(linear, 0.0, 1.0));
    return static_cast<std::uint8_t>(std::lround(s * 255.0));
}

std::vector<std::uint8_t> decode_raw(const std::string& bytes, png_uint_32 format, int& width, int& height)
{
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
        throw data_error(std::string("png: ") + image.message);
    image.format = format;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw data_error("png: " + msg);
    }
    width = static_cast<int>(image.width);
    height = static_cast<int>(image.height);
    return buffer;
}

std::string encode_raw(const std::vector<std::uint8_t>& pixels, int width, int height, png_uint_32 format)
{
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = format;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr))
        throw data_error(std::string("png: ") + image.message);
    std::string out(size, '\0');
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr))
        throw data_error(std::string("png: ") + image.message);
    out.resize(size);
    return out;
}

} // namespace

double srgb_to_linear(double v)
{
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double v)
{
    return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

ImageRGB decode_png(const std::string& bytes)
{
    int w = 0, h = 0;
    const auto raw = decode_raw(bytes, PNG_FORMAT_RGB, w, h);
    ImageRGB im = ImageRGB::zeros(w, h);
    const auto& lut = srgb_table();
    for (Index i = 0; i < im.pixels.cols(); ++i)
        for (int c = 0; c < 3; ++c)
            im.pixels(c, i) = lut[raw[3 * i + c]];
    return im;
}

std::string encode_png(const ImageRGB& image)
{
    std::vector<std::uint8_t> raw(3 * image.pixels.cols());
    for (Index i = 0; i < image.pixels.cols(); ++i)
        for (int c = 0; c < 3; ++c)
            raw[3 * i + c] = encode_channel(image.pixels(c, i));
    return encode_raw(raw, image.width, image.height, PNG_FORMAT_RGB);
}

ImageRGB load_png(const std::string& path)
{
    try {
        return decode_png(read_file(path));
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.what());
    }
}

void save_png(const ImageRGB& image, const std::string& path)
{
    write_file_atomic(path, encode_png(image));
}

void save_mask_png(const Mask& mask, int width, int height, const std::string& path)
{
    if (mask.size() != Index(width) * height)
        throw data_error("mask size does not match image size");
    std::vector<std::uint8_t> raw(mask.size());
    for (Index i = 0; i < mask.size(); ++i)
        raw[i] = mask(i) ? 255 : 0;
    write_file_atomic(path, encode_raw(raw, width, height, PNG_FORMAT_GRAY));
}

Mask load_mask_png(const std::string& path, int* width, int* height)
{
    int w = 0, h = 0;
    std::vector<std::uint8_t> raw;
    try {
        raw = decode_raw(read_file(path), PNG_FORMAT_GRAY, w, h);
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.what());
    }
    Mask m(Index(w) * h);
    for (Index i = 0; i < m.size(); ++i)
        m(i) = raw[i] >= 128;
    if (width)
        *width = w;
    if (height)
        *height = h;
    return m;
}

ImageRGB quantize_srgb8(const ImageRGB& image)
{
    ImageRGB out = image;
    const auto& lut = srgb_table();
    for (Index i = 0; i < out.pixels.cols(); ++i)
        for (int c = 0; c < 3; ++c)
            out.pixels(c, i) = lut[encode_channel(image.pixels(c, i))];
    return out;
}

} // namespace gpmm
