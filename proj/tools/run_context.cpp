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
#include "run_context.hpp"

#include "gpmm/archive.hpp"
#include "gpmm/common.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>

namespace gpmm::cli {

namespace fs = std::filesystem;

namespace {

bool is_flag(const CLI::Option* opt) { return opt->get_type_size_max() == 0; }

std::string env_name(const std::string& option)
{
    std::string out = "GPMM_";
    for (char c : option)
        out += c == '-' ? '_' : char(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::vector<std::string> files_below(const std::string& path)
{
    std::vector<std::string> out;
    if (fs::is_directory(path)) {
        for (const auto& e : fs::recursive_directory_iterator(path))
            if (e.is_regular_file())
                out.push_back(e.path().string());
        std::sort(out.begin(), out.end());
    } else {
        out.push_back(path);
    }
    return out;
}

std::string utc_timestamp(std::chrono::system_clock::time_point t)
{
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace

void resolve_fallbacks(CLI::App& command, const std::string& config_path)
{
    std::vector<CLI::ConfigItem> items;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in)
            throw data_error("config: cannot open '" + config_path + "'");
        items = CLI::ConfigTOML().from_config(in);
    }
    auto from_config = [&](const std::string& name) -> const CLI::ConfigItem* {
        const CLI::ConfigItem* general = nullptr;
        for (const auto& item : items) {
            if (item.name != name)
                continue;
            if (item.parents.size() == 1 && item.parents[0] == command.get_name())
                return &item;
            if (item.parents.empty())
                general = &item;
        }
        return general;
    };
    for (CLI::Option* opt : command.get_options()) {
        const std::string name = opt->get_single_name();
        if (opt->count() > 0 || name == "help")
            continue;
        std::vector<std::string> values;
        if (const char* v = std::getenv(env_name(name).c_str()); v != nullptr && *v != '\0')
            values.emplace_back(v);
        else if (const CLI::ConfigItem* item = from_config(name))
            values = item->inputs;
        if (values.empty())
            continue;
        for (const auto& v : values)
            opt->add_result(v);
        try {
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw usage_error("option --" + name + ": " + e.what());
        }
    }
}

nlohmann::json option_snapshot(const CLI::App& command)
{
    nlohmann::json out = nlohmann::json::object();
    for (const CLI::Option* opt : command.get_options()) {
        const std::string name = opt->get_single_name();
        if (name == "help")
            continue;
        if (is_flag(opt)) {
            bool value = false;
            if (opt->count() > 0)
                value = opt->as<bool>();
            out[name] = value;
        } else if (opt->count() > 0) {
            out[name] = opt->results();
        } else if (!opt->get_default_str().empty()) {
            out[name] = std::vector<std::string>{opt->get_default_str()};
        }
    }
    return out;
}

std::vector<std::string> snapshot_arguments(const std::string& command, const nlohmann::json& snapshot)
{
    std::vector<std::string> args{command};
    for (const auto& [name, value] : snapshot.items()) {
        if (value.is_boolean()) {
            if (value.get<bool>())
                args.push_back("--" + name);
            continue;
        }
        args.push_back("--" + name);
        for (const auto& v : value)
            args.push_back(v.get<std::string>());
    }
    return args;
}

RunContext::RunContext(std::string command, nlohmann::json config, std::vector<std::string> arguments,
                       std::uint64_t seed)
    : command_(std::move(command)), config_(std::move(config)), arguments_(std::move(arguments)), seed_(seed),
      started_(std::chrono::system_clock::now()), clock_(std::chrono::steady_clock::now())
{
}

void RunContext::input(const std::string& path)
{
    if (!fs::exists(path))
        throw data_error("input '" + path + "' does not exist");
    for (const auto& f : files_below(path))
        inputs_.push_back({{"path", f}, {"digest", file_digest(f)}});
}

void RunContext::output(const std::string& path)
{
    for (const auto& f : files_below(path))
        outputs_.push_back(f);
}

nlohmann::json RunContext::manifest() const
{
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_).count();
    return {{"tool", "gpmm"},
            {"version", tool_version},
            {"command", command_},
            {"arguments", arguments_},
            {"config", config_},
            {"seed", seed_},
            {"cwd", fs::current_path().string()},
            {"inputs", inputs_},
            {"outputs", output_digests(outputs_)},
            {"started", utc_timestamp(started_)},
            {"wall_seconds", seconds}};
}

void RunContext::write_manifest(const std::string& primary_output) const
{
    write_file_atomic(manifest_path_for(primary_output), manifest().dump(2) + "\n");
}

std::string manifest_path_for(const std::string& primary_output)
{
    std::string p = primary_output;
    while (p.size() > 1 && (p.back() == '/' || p.back() == '\\'))
        p.pop_back();
    return p + ".manifest.json";
}

nlohmann::json output_digests(const std::vector<std::string>& paths)
{
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : paths)
        out.push_back({{"path", p}, {"digest", fs::exists(p) ? file_digest(p) : std::string()}});
    return out;
}

} // namespace gpmm::cli
