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
#include "gpmm/model_io.hpp"

#include "gpmm/archive.hpp"
#include "gpmm/mesh_io.hpp"

#include <cstring>
#include <map>

namespace gpmm {

namespace {

template <typename T>
void put(std::string& out, T v)
{
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& pos)
{
    if (pos + sizeof(T) > in.size())
        throw data_error("matrix blob truncated");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

} // namespace

std::string serialize_matrix(const MatrixX& m, bool single_precision)
{
    std::string out("GPMB", 4);
    put<std::uint32_t>(out, single_precision ? 1u : 2u);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    out.reserve(out.size() + m.size() * (single_precision ? 4 : 8));
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) {
            if (single_precision)
                put<float>(out, static_cast<float>(m(r, c)));
            else
                put<double>(out, m(r, c));
        }
    return out;
}

MatrixX deserialize_matrix(const std::string& bytes)
{
    if (bytes.size() < 24 || bytes.compare(0, 4, "GPMB") != 0)
        throw data_error("matrix blob: bad magic");
    std::size_t pos = 4;
    const auto dtype = get<std::uint32_t>(bytes, pos);
    const auto rows = get<std::uint64_t>(bytes, pos);
    const auto cols = get<std::uint64_t>(bytes, pos);
    if (dtype != 1 && dtype != 2)
        throw data_error("matrix blob: unknown dtype " + std::to_string(dtype));
    const std::size_t width = dtype == 1 ? 4 : 8;
    if (bytes.size() != 24 + rows * cols * width)
        throw data_error("matrix blob: size does not match header");
    MatrixX m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c)
            m(r, c) = dtype == 1 ? static_cast<double>(get<float>(bytes, pos)) : get<double>(bytes, pos);
    return m;
}

std::string serialize_model(const MorphableModel& model)
{
    model.validate();
    nlohmann::json manifest{{"format_version", model_format_version},
                            {"vertices", model.mean.num_vertices()},
                            {"triangles", model.mean.num_triangles()},
                            {"shape_rank", model.shape.rank()},
                            {"albedo_rank", model.albedo.rank()},
                            {"shape_requested_rank", model.shape.requested_rank},
                            {"albedo_requested_rank", model.albedo.requested_rank},
                            {"provenance", model.provenance}};
    PlyWriteOptions ply;
    ply.double_positions = true;
    ply.float_colors = true;
    std::vector<TarEntry> entries{
        {"manifest.json", manifest.dump(2) + "\n"},
        {"mean.ply", serialize_ply(model.mean, ply)},
        {"shape_basis.bin", serialize_matrix(model.shape.components, true)},
        {"shape_eigenvalues.bin", serialize_matrix(model.shape.eigenvalues, false)},
        {"albedo_basis.bin", serialize_matrix(model.albedo.components, true)},
        {"albedo_eigenvalues.bin", serialize_matrix(model.albedo.eigenvalues, false)},
    };
    return write_tar(entries);
}

MorphableModel deserialize_model(const std::string& bytes)
{
    std::map<std::string, std::string> files;
    for (auto& e : read_tar(bytes))
        files[e.name] = std::move(e.data);
    auto need = [&](const std::string& name) -> const std::string& {
        const auto it = files.find(name);
        if (it == files.end())
            throw data_error("model archive: missing '" + name + "'");
        return it->second;
    };
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(need("manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("model archive: bad manifest: ") + e.what());
    }
    if (!manifest.contains("format_version"))
        throw data_error("model archive: manifest lacks format_version");
    if (manifest["format_version"].get<int>() != model_format_version)
        throw data_error("model archive: unsupported format_version " + manifest["format_version"].dump());

    MorphableModel model;
    MeshReadOptions read_options;
    read_options.reorient = false;
    model.mean = parse_ply(need("mean.ply"), read_options);
    model.shape.components = deserialize_matrix(need("shape_basis.bin"));
    model.shape.eigenvalues = deserialize_matrix(need("shape_eigenvalues.bin")).col(0);
    model.albedo.components = deserialize_matrix(need("albedo_basis.bin"));
    model.albedo.eigenvalues = deserialize_matrix(need("albedo_eigenvalues.bin")).col(0);
    model.shape.requested_rank = manifest.value("shape_requested_rank", model.shape.rank());
    model.albedo.requested_rank = manifest.value("albedo_requested_rank", model.albedo.rank());
    model.provenance = manifest.value("provenance", nlohmann::json::object());
    model.validate();
    return model;
}

void save_model(const MorphableModel& model, const std::string& path)
{
    write_file_atomic(path, serialize_model(model));
}

MorphableModel load_model(const std::string& path)
{
    try {
        return deserialize_model(read_file(path));
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.what());
    }
}

} // namespace gpmm
