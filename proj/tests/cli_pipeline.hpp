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

#ifndef GPMM_TESTS_CLI_PIPELINE_HPP
#define GPMM_TESTS_CLI_PIPELINE_HPP

// Drives the command-line tool through every command on a small synthetic
// problem. Shared by the CLI tests and the acceptance run.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

namespace gpmm::testing {

struct CliRunner
{
    std::string tool;
    std::filesystem::path dir;
    std::string env; ///< prefix such as "GPMM_SEED=3 "

    int operator()(const std::string& args) const
    {
        const std::string cmd =
            "cd '" + dir.string() + "' && " + env + "'" + tool + "' " + args + " > /dev/null 2> last_stderr.txt";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
};

inline std::filesystem::path fresh_directory(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

struct PipelineStep
{
    std::string args;
    std::string manifest; ///< relative to the working directory
};

/// Every command once, in dependency order, sized to run in seconds.
inline std::vector<PipelineStep> pipeline_steps()
{
    const std::string fit = " --n1 50 --n2 200 --seed 3";
    return {
        {"template --out t.ply --landmarks-out t.csv --rows 20 --cols 20", "t.ply.manifest.json"},
        {"template --out t2.ply --rows 20 --cols 20 --nose 30", "t2.ply.manifest.json"},
        {"build --template t.ply --out m.gpmm --rank 8 --nystrom-points 150", "m.gpmm.manifest.json"},
        {"sample --model m.gpmm --count 3 --seed 7 --out-dir samples", "samples.manifest.json"},
        {"render --mesh samples/sample-000.ply --landmarks t.csv --landmarks-out imgs/a.csv --out imgs/a.png "
         "--width 64 --height 64",
         "imgs/a.png.manifest.json"},
        {"render --mesh samples/sample-001.ply --landmarks t.csv --landmarks-out imgs/b.csv --out imgs/b.png "
         "--width 64 --height 64 --yaw 15 --scene-out imgs/b.scene.json",
         "imgs/b.png.manifest.json"},
        {"metrics --model m.gpmm --dataset samples --out-dir met --samples 10", "met.manifest.json"},
        {"fit --model m.gpmm --image imgs/a.png --landmarks imgs/a.csv --out gal/a.json --render-out fa.png "
         "--mesh-out fa.ply" + fit,
         "gal/a.json.manifest.json"},
        {"fit --model m.gpmm --image imgs/b.png --landmarks imgs/b.csv --out gal/b.json" + fit,
         "gal/b.json.manifest.json"},
        {"recognize --gallery gal --probe gal/b.json --out rec.json", "rec.json.manifest.json"},
        {"register --model m.gpmm --scan samples/sample-002.ply --out reg.ply --steps 200", "reg.ply.manifest.json"},
        {"pca-build --in samples --out pca.gpmm", "pca.gpmm.manifest.json"},
        {"kde-build --template t.ply t2.ply --out kde/mix.json --rank 4 --nystrom-points 100", "kde/mix.json.manifest.json"},
        {"kde-fit --mixture kde/mix.json --image imgs/a.png --landmarks imgs/a.csv --out kg/a.json" + fit,
         "kg/a.json.manifest.json"},
        {"kde-fit --mixture kde/mix.json --image imgs/b.png --landmarks imgs/b.csv --out kg/b.json" + fit,
         "kg/b.json.manifest.json"},
        {"kde-recognize --gallery kg --probe kg/a.json --out krec.json", "krec.json.manifest.json"},
        {"learn --model m.gpmm --images imgs --out learn --n1 30 --n2 150 --r1 0.3 --r2 40", "learn.manifest.json"},
    };
}

} // namespace gpmm::testing

#endif // GPMM_TESTS_CLI_PIPELINE_HPP
