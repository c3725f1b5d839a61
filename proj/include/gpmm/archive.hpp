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

#ifndef GPMM_ARCHIVE_HPP
#define GPMM_ARCHIVE_HPP

#include <string>
#include <utility>
#include <vector>

namespace gpmm {

std::string read_file(const std::string& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& bytes);

/// Hex FNV-1a digest of a file's bytes, used for provenance records.
std::string file_digest(const std::string& path);

/**
 * Minimal POSIX ustar archive: regular files only, fixed metadata (mode 0644,
 * mtime 0, uid/gid 0) so the same entries always give the same bytes.
 */
struct TarEntry
{
    std::string name;
    std::string data;
};

std::string write_tar(const std::vector<TarEntry>& entries);
std::vector<TarEntry> read_tar(const std::string& bytes);

} // namespace gpmm

#endif // GPMM_ARCHIVE_HPP
