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
#include "gpmm/archive.hpp"

#include "gpmm/common.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace gpmm {

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw data_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& bytes)
{
    const std::filesystem::path target(path);
    if (target.has_parent_path())
        std::filesystem::create_directories(target.parent_path());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw data_error("cannot write '" + tmp + "'");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out)
            throw data_error("short write to '" + tmp + "'");
    }
    std::filesystem::rename(tmp, target);
}

std::string file_digest(const std::string& path)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(read_file(path))));
    return buf;
}

namespace {

constexpr std::size_t block = 512;

void put_octal(char* field, std::size_t width, std::uint64_t value)
{
    // width includes the terminating NUL
    std::snprintf(field, width, "%0*llo", static_cast<int>(width - 1), static_cast<unsigned long long>(value));
}

std::uint64_t get_octal(const char* field, std::size_t width)
{
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width && field[i]; ++i) {
        if (field[i] == ' ')
            continue;
        if (field[i] < '0' || field[i] > '7')
            throw data_error("tar: bad octal field");
        v = v * 8 + static_cast<std::uint64_t>(field[i] - '0');
    }
    return v;
}

} // namespace

std::string write_tar(const std::vector<TarEntry>& entries)
{
    std::string out;
    for (const auto& e : entries) {
        if (e.name.empty() || e.name.size() > 99)
            throw data_error("tar: entry name must have 1..99 characters: '" + e.name + "'");
        char header[block];
        std::memset(header, 0, block);
        std::memcpy(header, e.name.data(), e.name.size());
        put_octal(header + 100, 8, 0644);
        put_octal(header + 108, 8, 0);
        put_octal(header + 116, 8, 0);
        put_octal(header + 124, 12, e.data.size());
        put_octal(header + 136, 12, 0);
        header[156] = '0';
        std::memcpy(header + 257, "ustar", 6);
        std::memcpy(header + 263, "00", 2);
        std::memset(header + 148, ' ', 8);
        unsigned sum = 0;
        for (std::size_t i = 0; i < block; ++i)
            sum += static_cast<unsigned char>(header[i]);
        std::snprintf(header + 148, 7, "%06o", sum);
        header[155] = ' ';
        out.append(header, block);
        out += e.data;
        out.append((block - e.data.size() % block) % block, '\0');
    }
    out.append(2 * block, '\0');
    return out;
}

std::vector<TarEntry> read_tar(const std::string& bytes)
{
    std::vector<TarEntry> entries;
    std::size_t pos = 0;
    while (pos + block <= bytes.size()) {
        const char* header = bytes.data() + pos;
        if (header[0] == '\0')
            break;
        unsigned sum = 0;
        for (std::size_t i = 0; i < block; ++i)
            sum += (i >= 148 && i < 156) ? ' ' : static_cast<unsigned char>(header[i]);
        if (sum != get_octal(header + 148, 8))
            throw data_error("tar: header checksum mismatch at offset " + std::to_string(pos));
        TarEntry e;
        e.name.assign(header, strnlen(header, 100));
        const std::uint64_t size = get_octal(header + 124, 12);
        pos += block;
        if (pos + size > bytes.size())
            throw data_error("tar: truncated entry '" + e.name + "'");
        e.data = bytes.substr(pos, size);
        pos += (size + block - 1) / block * block;
        if (header[156] == '0' || header[156] == '\0')
            entries.push_back(std::move(e));
    }
    return entries;
}

} // namespace gpmm
