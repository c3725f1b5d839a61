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
#include "doctest.h"

#include "cli_pipeline.hpp"

#include "gpmm/archive.hpp"

#include "json.hpp"

#include <fstream>

using namespace gpmm;
using gpmm::testing::CliRunner;
namespace fs = std::filesystem;

namespace {

struct Fixture
{
    fs::path dir = gpmm::testing::fresh_directory("gpmm_test_cli");
    CliRunner run{GPMM_CLI_PATH, dir, ""};

    Fixture()
    {
        REQUIRE(run("template --out t.ply --landmarks-out t.csv --rows 12 --cols 12") == 0);
        REQUIRE(run("build --template t.ply --out m.gpmm --rank 4 --nystrom-points 60") == 0);
    }

    std::size_t count_samples(const std::string& sub) const
    {
        std::size_t n = 0;
        for (const auto& e : fs::directory_iterator(dir / sub))
            n += e.path().extension() == ".ply";
        return n;
    }

    std::string stderr_text() const { return read_file((dir / "last_stderr.txt").string()); }
};

} // namespace

TEST_CASE("exit codes")
{
    Fixture f;
    CHECK(f.run("--version") == 0);
    CHECK(f.run("") == 2);
    CHECK(f.run("no-such-command") == 2);
    CHECK(f.run("sample --model m.gpmm") == 2); // --out-dir missing
    CHECK(f.run("build --template t.ply --out x.gpmm --kernel bogus") == 2);
    CHECK(f.stderr_text().find("standard-full") != std::string::npos);
    CHECK(f.run("sample --model absent.gpmm --out-dir s") == 3);
    std::ofstream(f.dir / "junk.png") << "not an image";
    CHECK(f.run("fit --model m.gpmm --image junk.png --out fit.json") == 3);
}

TEST_CASE("machine readable errors")
{
    Fixture f;
    CHECK(f.run("--json-errors sample --model absent.gpmm --out-dir s") == 3);
    const auto j = nlohmann::json::parse(f.stderr_text());
    CHECK(j["error"]["kind"] == "data");
    CHECK(j["error"]["exit_code"] == 3);
}

TEST_CASE("sample writes the requested count with a manifest")
{
    Fixture f;
    REQUIRE(f.run("sample --model m.gpmm --count 3 --seed 2 --out-dir s") == 0);
    CHECK(f.count_samples("s") == 3);
    const auto m = nlohmann::json::parse(read_file((f.dir / "s.manifest.json").string()));
    CHECK(m["command"] == "sample");
    CHECK(m["seed"] == 2);
    CHECK(m["outputs"].size() == 6);
    CHECK(m["inputs"][0]["path"] == "m.gpmm");
    for (const char* key : {"tool", "version", "arguments", "config", "cwd", "started", "wall_seconds"})
        CHECK(m.contains(key));
}

TEST_CASE("option precedence: flag over environment over file")
{
    Fixture f;
    std::ofstream(f.dir / "c.toml") << "count = 2\n[sample]\nseed = 4\n";
    REQUIRE(f.run("--config c.toml sample --model m.gpmm --out-dir from_file") == 0);
    CHECK(f.count_samples("from_file") == 2);
    const auto m = nlohmann::json::parse(read_file((f.dir / "from_file.manifest.json").string()));
    CHECK(m["seed"] == 4);

    CliRunner env = f.run;
    env.env = "GPMM_COUNT=3 ";
    REQUIRE(env("--config c.toml sample --model m.gpmm --out-dir from_env") == 0);
    CHECK(f.count_samples("from_env") == 3);
    REQUIRE(env("--config c.toml sample --model m.gpmm --count 1 --out-dir from_flag") == 0);
    CHECK(f.count_samples("from_flag") == 1);

    env.env = "GPMM_COUNT=many ";
    CHECK(env("sample --model m.gpmm --out-dir bad") == 2);
}

TEST_CASE("same seed, same bytes; other seed, other bytes")
{
    Fixture f;
    REQUIRE(f.run("sample --model m.gpmm --seed 5 --out-dir a") == 0);
    REQUIRE(f.run("sample --model m.gpmm --seed 5 --out-dir b") == 0);
    REQUIRE(f.run("sample --model m.gpmm --seed 6 --out-dir c") == 0);
    const auto bytes = [&](const char* d) { return read_file((f.dir / d / "sample-000.ply").string()); };
    CHECK(bytes("a") == bytes("b"));
    CHECK(bytes("a") != bytes("c"));
}

TEST_CASE("replay regenerates and compares")
{
    Fixture f;
    REQUIRE(f.run("sample --model m.gpmm --count 2 --seed 9 --out-dir s") == 0);
    const std::string before = read_file((f.dir / "s/sample-001.ply").string());
    fs::remove(f.dir / "s/sample-001.ply");
    CHECK(f.run("replay --manifest s.manifest.json") == 0);
    CHECK(read_file((f.dir / "s/sample-001.ply").string()) == before);

    // a manifest whose recorded digest does not match is reported
    auto m = nlohmann::json::parse(read_file((f.dir / "s.manifest.json").string()));
    m["outputs"][0]["digest"] = "0000";
    std::ofstream(f.dir / "tampered.json") << m.dump();
    CHECK(f.run("replay --manifest tampered.json") == 4);
}
