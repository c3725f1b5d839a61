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
#include "gpmm/kde.hpp"

#include "gpmm/archive.hpp"
#include "gpmm/model_io.hpp"

#include <cstdio>
#include <filesystem>
#include <limits>
#include <numeric>

namespace gpmm {

void MixtureModel::validate() const
{
    if (components.empty())
        throw data_error("mixture has no components");
    if (weights.size() != components.size())
        throw data_error("mixture weights and components differ in count");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w))
            throw data_error("mixture weights must be non-negative");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw data_error("mixture weights must sum to 1");
    for (std::size_t i = 0; i < components.size(); ++i) {
        try {
            components[i].validate();
        } catch (const Error& e) {
            throw Error(e.kind(), "mixture component " + std::to_string(i) + ": " + e.what());
        }
    }
}

MixtureModel build_mixture(const std::vector<Mesh>& templates, const KernelRecipe& recipe,
                           const NystromConfig& shape_config, const NystromConfig& albedo_config)
{
    if (templates.empty())
        throw usage_error("mixture needs at least one template");
    MixtureModel mix;
    for (std::size_t i = 0; i < templates.size(); ++i) {
        try {
            MorphableModel m = build_gp_model(templates[i], recipe, shape_config, albedo_config);
            m.provenance["mixture_component"] = i;
            mix.components.push_back(std::move(m));
        } catch (const Error& e) {
            throw Error(e.kind(), "mixture component " + std::to_string(i) + ": " + e.what());
        }
    }
    mix.weights.assign(templates.size(), 1.0 / double(templates.size()));
    return mix;
}

MixtureSample sample_mixture(const MixtureModel& mixture, std::uint64_t seed)
{
    mixture.validate();
    Rng rng(substream_seed(seed, "mixture"));
    const double u = NormalSampler::uniform(rng) * std::accumulate(mixture.weights.begin(), mixture.weights.end(), 0.0);
    Index chosen = -1;
    double acc = 0.0;
    for (Index c = 0; c < mixture.size(); ++c) {
        if (mixture.weights[c] <= 0.0)
            continue;
        acc += mixture.weights[c];
        chosen = c;
        if (u < acc)
            break;
    }
    Sample s = sample(mixture.components[chosen], seed);
    return {chosen, std::move(s.code), std::move(s.mesh)};
}

MixtureRecognition recognize_mixture(const std::vector<LatentCode>& probe,
                                     const std::vector<std::vector<LatentCode>>& gallery)
{
    if (gallery.empty())
        throw usage_error("recognition needs a non-empty gallery");
    const std::size_t components = probe.size();
    if (components == 0)
        throw usage_error("probe has no component fits");
    MixtureRecognition r;
    r.similarity = -std::numeric_limits<double>::infinity();
    r.table.assign(gallery.size(), std::vector<double>(components, 0.0));
    for (std::size_t i = 0; i < gallery.size(); ++i) {
        if (gallery[i].size() != components)
            throw data_error("gallery identity " + std::to_string(i) + " has " + std::to_string(gallery[i].size()) +
                             " component fits, probe has " + std::to_string(components));
        for (std::size_t c = 0; c < components; ++c) {
            const double s = cosine_similarity(probe[c].joint(), gallery[i][c].joint());
            r.table[i][c] = s;
            if (s > r.similarity) {
                r.similarity = s;
                r.identity = static_cast<Index>(i);
                r.component = static_cast<Index>(c);
            }
        }
    }
    r.low_confidence = !(r.similarity > 0.0);
    return r;
}

void save_mixture(const MixtureModel& mixture, const std::string& manifest_path)
{
    mixture.validate();
    namespace fs = std::filesystem;
    const fs::path manifest(manifest_path);
    const std::string stem = manifest.stem().string();
    nlohmann::json j{{"format_version", 1}, {"components", nlohmann::json::array()}};
    for (Index c = 0; c < mixture.size(); ++c) {
        char name[64];
        std::snprintf(name, sizeof(name), "-component-%03d.gpmm", static_cast<int>(c));
        const std::string file = stem + name;
        save_model(mixture.components[c], (manifest.parent_path() / file).string());
        j["components"].push_back({{"model", file}, {"weight", mixture.weights[c]}});
    }
    write_file_atomic(manifest_path, j.dump(2) + "\n");
}

MixtureModel load_mixture(const std::string& manifest_path)
{
    namespace fs = std::filesystem;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw data_error(manifest_path + ": " + e.what());
    }
    MixtureModel mix;
    if (!j.contains("components") || !j["components"].is_array())
        throw data_error(manifest_path + ": no component list");
    const fs::path base = fs::path(manifest_path).parent_path();
    for (const auto& c : j["components"]) {
        const fs::path p = c.at("model").get<std::string>();
        mix.components.push_back(load_model((p.is_absolute() ? p : base / p).string()));
        mix.weights.push_back(c.value("weight", 0.0));
    }
    mix.validate();
    return mix;
}

} // namespace gpmm
