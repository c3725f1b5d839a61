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

#ifndef GPMM_TOOLS_RUN_CONTEXT_HPP
#define GPMM_TOOLS_RUN_CONTEXT_HPP

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

namespace gpmm::cli {

constexpr const char* tool_version = "0.1.0";

/**
 * Fills options not given on the command line, first from GPMM_<NAME>
 * environment variables and then from a TOML file (top-level keys apply to
 * every command, [command] tables to one).
 */
void resolve_fallbacks(CLI::App& command, const std::string& config_path);

/// Every option of a command with its resolved value(s); flags map to booleans.
nlohmann::json option_snapshot(const CLI::App& command);

/// Argument list that re-creates a snapshot.
std::vector<std::string> snapshot_arguments(const std::string& command, const nlohmann::json& snapshot);

/// Inputs, outputs and timing of one command; written as <primary>.manifest.json.
class RunContext
{
public:
    RunContext(std::string command, nlohmann::json config, std::vector<std::string> arguments, std::uint64_t seed);

    /// Records a file, or every file below a directory, with its digest.
    void input(const std::string& path);
    void output(const std::string& path);

    const std::vector<std::string>& output_paths() const { return outputs_; }

    nlohmann::json manifest() const;
    void write_manifest(const std::string& primary_output) const;

private:
    std::string command_;
    nlohmann::json config_;
    std::vector<std::string> arguments_;
    std::uint64_t seed_;
    nlohmann::json inputs_ = nlohmann::json::array();
    std::vector<std::string> outputs_;
    std::chrono::system_clock::time_point started_;
    std::chrono::steady_clock::time_point clock_;
};

std::string manifest_path_for(const std::string& primary_output);

/// Digests of the files named in a manifest's outputs.
nlohmann::json output_digests(const std::vector<std::string>& paths);

} // namespace gpmm::cli

#endif // GPMM_TOOLS_RUN_CONTEXT_HPP
