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

#ifndef GPMM_COMMON_HPP
#define GPMM_COMMON_HPP

#include "Eigen/Core"

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gpmm {

using Index = Eigen::Index;

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
/// Column-per-point 3D data (positions, albedos, normals).
template <typename Scalar>
using Points3 = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;

using Vec2 = Eigen::Vector2d;
using Vec3 = Vector3<double>;
using Mat3 = Matrix3<double>;
using Points3d = Points3<double>;
using Triangles = Eigen::Matrix<int, 3, Eigen::Dynamic>;
using VectorX = Eigen::VectorXd;
using MatrixX = Eigen::MatrixXd;

/// Failure categories; the CLI maps them onto exit codes.
enum class ErrorKind { usage, data, numerical };

class Error : public std::runtime_error
{
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error data_error(const std::string& what) { return Error(ErrorKind::data, what); }
inline Error numerical_error(const std::string& what) { return Error(ErrorKind::numerical, what); }
inline Error usage_error(const std::string& what) { return Error(ErrorKind::usage, what); }

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent named substreams from one run seed.
inline std::uint64_t mix_seed(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL)
{
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t substream_seed(std::uint64_t seed, std::string_view name)
{
    return mix_seed(seed ^ fnv1a(name));
}

/// Box-Muller on top of the raw engine output: unlike std::normal_distribution
/// the sequence is identical across standard library implementations.
class NormalSampler
{
public:
    double operator()(Rng& rng)
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform(rng);
        while (u1 <= 0.0)
            u1 = uniform(rng);
        const double u2 = uniform(rng);
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.14159265358979323846 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    static double uniform(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

private:
    double spare_ = 0.0;
    bool has_spare_ = false;
};

constexpr double pi = 3.14159265358979323846;

inline double degrees_to_radians(double deg) { return deg * pi / 180.0; }
inline double radians_to_degrees(double rad) { return rad * 180.0 / pi; }

} // namespace gpmm

#endif // GPMM_COMMON_HPP
