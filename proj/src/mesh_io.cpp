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
#include "gpmm/mesh_io.hpp"

#include "gpmm/archive.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <sstream>
#include <vector>

namespace gpmm {

static_assert(std::endian::native == std::endian::little, "binary PLY I/O assumes a little-endian host");

MeshFormat format_from_path(const std::string& path)
{
    std::string ext = path.substr(path.find_last_of('.') == std::string::npos ? path.size() : path.find_last_of('.'));
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".ply")
        return MeshFormat::ply;
    if (ext == ".obj")
        return MeshFormat::obj;
    throw data_error("unrecognized mesh extension for '" + path + "' (expected .ply or .obj)");
}

Mesh load_mesh(const std::string& path, const MeshReadOptions& options)
{
    return load_mesh(path, format_from_path(path), options);
}

Mesh load_mesh(const std::string& path, MeshFormat format, const MeshReadOptions& options)
{
    const std::string bytes = read_file(path);
    try {
        return format == MeshFormat::ply ? parse_ply(bytes, options) : parse_obj(bytes, options);
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.what());
    }
}

namespace {

enum class PlyType { int8, uint8, int16, uint16, int32, uint32, float32, float64 };

PlyType parse_type(const std::string& t)
{
    if (t == "char" || t == "int8")
        return PlyType::int8;
    if (t == "uchar" || t == "uint8")
        return PlyType::uint8;
    if (t == "short" || t == "int16")
        return PlyType::int16;
    if (t == "ushort" || t == "uint16")
        return PlyType::uint16;
    if (t == "int" || t == "int32")
        return PlyType::int32;
    if (t == "uint" || t == "uint32")
        return PlyType::uint32;
    if (t == "float" || t == "float32")
        return PlyType::float32;
    if (t == "double" || t == "float64")
        return PlyType::float64;
    throw data_error("ply: unknown property type '" + t + "'");
}

std::size_t type_size(PlyType t)
{
    switch (t) {
    case PlyType::int8:
    case PlyType::uint8:
        return 1;
    case PlyType::int16:
    case PlyType::uint16:
        return 2;
    case PlyType::int32:
    case PlyType::uint32:
    case PlyType::float32:
        return 4;
    case PlyType::float64:
        return 8;
    }
    return 0;
}

struct PlyProperty
{
    std::string name;
    PlyType type = PlyType::float32;
    bool is_list = false;
    PlyType count_type = PlyType::uint8;
};

struct PlyElement
{
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
};

/// Sequential reader over the body of a PLY file in either encoding.
class PlyBody
{
public:
    PlyBody(const std::string& bytes, std::size_t offset, bool ascii) : bytes_(bytes), pos_(offset), ascii_(ascii)
    {
        if (ascii_)
            advance_line();
    }

    double read(PlyType t)
    {
        if (ascii_)
            return read_ascii();
        const std::size_t n = type_size(t);
        if (pos_ + n > bytes_.size())
            throw data_error("ply: unexpected end of binary data at offset " + std::to_string(pos_));
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        switch (t) {
        case PlyType::int8:
            return load<std::int8_t>(p);
        case PlyType::uint8:
            return load<std::uint8_t>(p);
        case PlyType::int16:
            return load<std::int16_t>(p);
        case PlyType::uint16:
            return load<std::uint16_t>(p);
        case PlyType::int32:
            return load<std::int32_t>(p);
        case PlyType::uint32:
            return load<std::uint32_t>(p);
        case PlyType::float32:
            return load<float>(p);
        case PlyType::float64:
            return load<double>(p);
        }
        return 0.0;
    }

    void end_record()
    {
        if (ascii_)
            advance_line();
    }

    std::size_t line() const { return line_; }

private:
    template <typename T>
    static double load(const char* p)
    {
        T v;
        std::memcpy(&v, p, sizeof(T));
        return static_cast<double>(v);
    }

    void advance_line()
    {
        if (pos_ > bytes_.size()) {
            tokens_.clear();
            return;
        }
        std::size_t end = bytes_.find('\n', pos_);
        if (end == std::string::npos)
            end = bytes_.size();
        std::istringstream ss(bytes_.substr(pos_, end - pos_));
        tokens_.clear();
        std::string tok;
        while (ss >> tok)
            tokens_.push_back(tok);
        token_ = 0;
        pos_ = end + 1;
        ++line_;
    }

    double read_ascii()
    {
        if (token_ >= tokens_.size())
            throw data_error("ply: line " + std::to_string(line_) + ": too few values");
        const std::string& tok = tokens_[token_++];
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end != tok.c_str() + tok.size())
            throw data_error("ply: line " + std::to_string(line_) + ": bad number '" + tok + "'");
        return v;
    }

    const std::string& bytes_;
    std::size_t pos_;
    bool ascii_;
    std::vector<std::string> tokens_;
    std::size_t token_ = 0;
    std::size_t line_ = 0;
};

double color_scale(PlyType t)
{
    switch (t) {
    case PlyType::uint8:
        return 1.0 / 255.0;
    case PlyType::uint16:
        return 1.0 / 65535.0;
    case PlyType::float32:
    case PlyType::float64:
        return 1.0;
    default:
        throw data_error("ply: unsupported colour property type");
    }
}

void finalize(Mesh& mesh, bool has_color, const MeshReadOptions& options)
{
    if (!has_color) {
        if (!options.fallback_albedo)
            throw data_error("no albedo: mesh has no per-vertex colour (enable the gray fallback to load it anyway)");
        mesh.albedo = Points3d::Constant(3, mesh.vertices.cols(), 0.5);
    }
    mesh.albedo = mesh.albedo.cwiseMax(0.0).cwiseMin(1.0);
    mesh.validate();
    if (options.reorient)
        orient_consistently(mesh);
}

} // namespace

Mesh parse_ply(const std::string& bytes, const MeshReadOptions& options)
{
    std::size_t pos = 0;
    auto next_line = [&](std::size_t& line_no) {
        const std::size_t end = bytes.find('\n', pos);
        if (end == std::string::npos)
            throw data_error("ply: unterminated header");
        std::string line = bytes.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        pos = end + 1;
        ++line_no;
        return line;
    };

    std::size_t line_no = 0;
    if (next_line(line_no) != "ply")
        throw data_error("ply: line 1: missing 'ply' magic");
    bool ascii = false;
    std::vector<PlyElement> elements;
    for (;;) {
        const std::string line = next_line(line_no);
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "format") {
            std::string enc;
            ss >> enc;
            if (enc == "ascii")
                ascii = true;
            else if (enc != "binary_little_endian")
                throw data_error("ply: line " + std::to_string(line_no) + ": unsupported encoding '" + enc + "'");
        } else if (key == "element") {
            PlyElement e;
            ss >> e.name >> e.count;
            if (!ss)
                throw data_error("ply: line " + std::to_string(line_no) + ": malformed element");
            elements.push_back(e);
        } else if (key == "property") {
            if (elements.empty())
                throw data_error("ply: line " + std::to_string(line_no) + ": property before element");
            PlyProperty p;
            std::string type;
            ss >> type;
            if (type == "list") {
                std::string count_type, item_type;
                ss >> count_type >> item_type;
                p.is_list = true;
                p.count_type = parse_type(count_type);
                p.type = parse_type(item_type);
            } else {
                p.type = parse_type(type);
            }
            ss >> p.name;
            if (!ss)
                throw data_error("ply: line " + std::to_string(line_no) + ": malformed property");
            elements.back().properties.push_back(p);
        } else if (key == "end_header") {
            break;
        } else if (key != "comment" && key != "obj_info" && !key.empty()) {
            throw data_error("ply: line " + std::to_string(line_no) + ": unexpected header keyword '" + key + "'");
        }
    }

    Mesh mesh;
    bool has_color = false;
    PlyBody body(bytes, pos, ascii);
    for (const auto& e : elements) {
        if (e.name == "vertex") {
            std::array<int, 6> slot{-1, -1, -1, -1, -1, -1};
            for (std::size_t k = 0; k < e.properties.size(); ++k) {
                const auto& n = e.properties[k].name;
                if (n == "x")
                    slot[0] = int(k);
                else if (n == "y")
                    slot[1] = int(k);
                else if (n == "z")
                    slot[2] = int(k);
                else if (n == "red" || n == "r" || n == "diffuse_red")
                    slot[3] = int(k);
                else if (n == "green" || n == "g" || n == "diffuse_green")
                    slot[4] = int(k);
                else if (n == "blue" || n == "b" || n == "diffuse_blue")
                    slot[5] = int(k);
            }
            if (slot[0] < 0 || slot[1] < 0 || slot[2] < 0)
                throw data_error("ply: vertex element lacks x/y/z");
            has_color = slot[3] >= 0 && slot[4] >= 0 && slot[5] >= 0;
            mesh.vertices.resize(3, Index(e.count));
            mesh.albedo.resize(3, Index(e.count));
            std::vector<double> values(e.properties.size());
            for (std::size_t v = 0; v < e.count; ++v) {
                for (std::size_t k = 0; k < e.properties.size(); ++k) {
                    const auto& p = e.properties[k];
                    if (p.is_list) {
                        const auto n = static_cast<std::size_t>(body.read(p.count_type));
                        for (std::size_t i = 0; i < n; ++i)
                            body.read(p.type);
                        values[k] = 0.0;
                    } else {
                        values[k] = body.read(p.type);
                    }
                }
                body.end_record();
                for (int c = 0; c < 3; ++c)
                    mesh.vertices(c, Index(v)) = values[slot[c]];
                if (has_color)
                    for (int c = 0; c < 3; ++c)
                        mesh.albedo(c, Index(v)) = values[slot[3 + c]] * color_scale(e.properties[slot[3 + c]].type);
            }
        } else if (e.name == "face") {
            int list_slot = -1;
            for (std::size_t k = 0; k < e.properties.size(); ++k)
                if (e.properties[k].is_list &&
                    (e.properties[k].name == "vertex_indices" || e.properties[k].name == "vertex_index"))
                    list_slot = int(k);
            if (list_slot < 0)
                throw data_error("ply: face element lacks a vertex_indices list");
            std::vector<Eigen::Vector3i> tris;
            tris.reserve(e.count);
            for (std::size_t f = 0; f < e.count; ++f) {
                for (std::size_t k = 0; k < e.properties.size(); ++k) {
                    const auto& p = e.properties[k];
                    if (!p.is_list) {
                        body.read(p.type);
                        continue;
                    }
                    const auto n = static_cast<std::size_t>(body.read(p.count_type));
                    std::vector<int> idx(n);
                    for (auto& i : idx)
                        i = static_cast<int>(body.read(p.type));
                    if (int(k) != list_slot)
                        continue;
                    if (n < 3)
                        throw data_error("ply: face " + std::to_string(f) + " has fewer than 3 vertices");
                    for (std::size_t i = 1; i + 1 < n; ++i)
                        tris.emplace_back(idx[0], idx[i], idx[i + 1]);
                }
                body.end_record();
            }
            mesh.triangles.resize(3, Index(tris.size()));
            for (std::size_t t = 0; t < tris.size(); ++t)
                mesh.triangles.col(Index(t)) = tris[t];
        } else {
            for (std::size_t r = 0; r < e.count; ++r) {
                for (const auto& p : e.properties) {
                    if (p.is_list) {
                        const auto n = static_cast<std::size_t>(body.read(p.count_type));
                        for (std::size_t i = 0; i < n; ++i)
                            body.read(p.type);
                    } else {
                        body.read(p.type);
                    }
                }
                body.end_record();
            }
        }
    }
    finalize(mesh, has_color, options);
    return mesh;
}

Mesh parse_obj(const std::string& text, const MeshReadOptions& options)
{
    std::vector<Vec3> positions, colors;
    std::vector<Eigen::Vector3i> tris;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool all_colored = true;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "v") {
            std::vector<double> vals;
            double x;
            while (ss >> x)
                vals.push_back(x);
            if (vals.size() != 3 && vals.size() != 6 && vals.size() != 4 && vals.size() != 7)
                throw data_error("obj: line " + std::to_string(line_no) + ": malformed vertex");
            positions.emplace_back(vals[0], vals[1], vals[2]);
            if (vals.size() >= 6) {
                const std::size_t o = vals.size() - 3;
                colors.emplace_back(vals[o], vals[o + 1], vals[o + 2]);
            } else {
                all_colored = false;
                colors.emplace_back(0.5, 0.5, 0.5);
            }
        } else if (key == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ss >> tok) {
                const int i = std::stoi(tok.substr(0, tok.find('/')));
                idx.push_back(i < 0 ? int(positions.size()) + i : i - 1);
            }
            if (idx.size() < 3)
                throw data_error("obj: line " + std::to_string(line_no) + ": face with fewer than 3 vertices");
            for (std::size_t i = 1; i + 1 < idx.size(); ++i)
                tris.emplace_back(idx[0], idx[i], idx[i + 1]);
        }
    }
    Mesh mesh;
    mesh.vertices.resize(3, Index(positions.size()));
    mesh.albedo.resize(3, Index(positions.size()));
    for (std::size_t i = 0; i < positions.size(); ++i) {
        mesh.vertices.col(Index(i)) = positions[i];
        mesh.albedo.col(Index(i)) = colors[i];
    }
    mesh.triangles.resize(3, Index(tris.size()));
    for (std::size_t t = 0; t < tris.size(); ++t)
        mesh.triangles.col(Index(t)) = tris[t];
    finalize(mesh, all_colored && !positions.empty(), options);
    return mesh;
}

namespace {

template <typename T>
void append(std::string& out, T v)
{
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

} // namespace

std::string serialize_ply(const Mesh& mesh, const PlyWriteOptions& options)
{
    mesh.validate();
    const bool ascii = options.encoding == PlyEncoding::ascii;
    const char* pos_type = options.double_positions ? "double" : "float";
    const char* col_type = options.float_colors ? "float" : "uchar";
    std::ostringstream header;
    header << "ply\nformat " << (ascii ? "ascii" : "binary_little_endian") << " 1.0\n"
           << "element vertex " << mesh.num_vertices() << "\n"
           << "property " << pos_type << " x\nproperty " << pos_type << " y\nproperty " << pos_type << " z\n"
           << "property " << col_type << " red\nproperty " << col_type << " green\nproperty " << col_type
           << " blue\n"
           << "element face " << mesh.num_triangles() << "\n"
           << "property list uchar int vertex_indices\nend_header\n";
    std::string out = header.str();

    auto quantize = [](double c) { return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0)); };
    if (ascii) {
        std::ostringstream body;
        body.precision(options.double_positions ? 17 : 9);
        for (Index v = 0; v < mesh.num_vertices(); ++v) {
            for (int c = 0; c < 3; ++c) {
                if (options.double_positions)
                    body << mesh.vertices(c, v) << ' ';
                else
                    body << static_cast<float>(mesh.vertices(c, v)) << ' ';
            }
            for (int c = 0; c < 3; ++c) {
                if (options.float_colors)
                    body << static_cast<float>(mesh.albedo(c, v));
                else
                    body << int(quantize(mesh.albedo(c, v)));
                body << (c < 2 ? ' ' : '\n');
            }
        }
        for (Index t = 0; t < mesh.num_triangles(); ++t)
            body << "3 " << mesh.triangles(0, t) << ' ' << mesh.triangles(1, t) << ' ' << mesh.triangles(2, t) << '\n';
        out += body.str();
        return out;
    }
    for (Index v = 0; v < mesh.num_vertices(); ++v) {
        for (int c = 0; c < 3; ++c) {
            if (options.double_positions)
                append<double>(out, mesh.vertices(c, v));
            else
                append<float>(out, static_cast<float>(mesh.vertices(c, v)));
        }
        for (int c = 0; c < 3; ++c) {
            if (options.float_colors)
                append<float>(out, static_cast<float>(mesh.albedo(c, v)));
            else
                append<std::uint8_t>(out, quantize(mesh.albedo(c, v)));
        }
    }
    for (Index t = 0; t < mesh.num_triangles(); ++t) {
        append<std::uint8_t>(out, 3);
        for (int k = 0; k < 3; ++k)
            append<std::int32_t>(out, mesh.triangles(k, t));
    }
    return out;
}

void save_ply(const Mesh& mesh, const std::string& path, const PlyWriteOptions& options)
{
    write_file_atomic(path, serialize_ply(mesh, options));
}

} // namespace gpmm
