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
#include "gpmm/kernels.hpp"

#include "Eigen/Eigenvalues"

#include <cmath>

namespace gpmm {

void ScalarKernelSpec::validate() const
{
    if (terms.empty())
        throw usage_error("kernel: scalar kernel needs at least one term");
    for (const auto& t : terms)
        if (!(t.amplitude > 0.0) || !(t.scale > 0.0))
            throw usage_error("kernel: amplitudes and scales must be positive");
}

double ScalarKernelSpec::sum_of_amplitudes() const
{
    double s = 0.0;
    for (const auto& t : terms)
        s += t.amplitude;
    return s;
}

void MatrixKernelSpec::validate() const
{
    if (terms.empty())
        throw usage_error("kernel: matrix kernel needs at least one term");
    for (const auto& t : terms) {
        if (!(t.weight > 0.0))
            throw usage_error("kernel: combination weights must be positive");
        t.base.validate();
        if (!t.channel.isApprox(t.channel.transpose(), 1e-12))
            throw usage_error("kernel: channel matrix must be symmetric");
        const Eigen::SelfAdjointEigenSolver<Mat3> es(t.channel, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-12)
            throw usage_error("kernel: channel matrix must be positive semi-definite");
        if (t.symmetrize && !(t.symmetrize->weight >= 0.0 && t.symmetrize->weight < 1.0))
            throw usage_error("kernel: symmetry weight must lie in [0,1)");
    }
}

bool MatrixKernelSpec::needs_mirror() const
{
    for (const auto& t : terms)
        if (t.symmetrize)
            return true;
    return false;
}

Mat3 correlation_matrix(double x)
{
    Mat3 m = Mat3::Constant(x);
    m.diagonal().setOnes();
    return m;
}

KernelContext::KernelContext(const Mesh& templ, MirrorTransform mirror)
    : positions_(templ.vertices), colors_(templ.albedo), mirrored_(mirror_positions(templ.vertices, mirror))
{
}

namespace {

inline double rbf_sum(const ScalarKernelSpec& spec, double d2_xyz, double d2_rgb)
{
    double v = 0.0;
    for (const auto& t : spec.terms) {
        const double d2 = t.metric == Metric::xyz ? d2_xyz : d2_rgb;
        v += t.amplitude * std::exp(-d2 / (t.scale * t.scale));
    }
    return v;
}

} // namespace

double eval_scalar(const ScalarKernelSpec& spec, const KernelContext& ctx, Index i, Index j)
{
    return rbf_sum(spec, (ctx.positions().col(i) - ctx.positions().col(j)).squaredNorm(),
                   (ctx.colors().col(i) - ctx.colors().col(j)).squaredNorm());
}

double eval_scalar_mirrored(const ScalarKernelSpec& spec, const KernelContext& ctx, Index i, Index j)
{
    // mirroring acts on positions only; albedo of the partner is unchanged
    return rbf_sum(spec, (ctx.positions().col(i) - ctx.mirrored().col(j)).squaredNorm(),
                   (ctx.colors().col(i) - ctx.colors().col(j)).squaredNorm());
}

Mat3 eval_matrix(const MatrixKernelSpec& spec, const KernelContext& ctx, Index i, Index j)
{
    Mat3 k = Mat3::Zero();
    for (const auto& t : spec.terms) {
        k += t.weight * eval_scalar(t.base, ctx, i, j) * t.channel;
        if (t.symmetrize) {
            const double s = t.symmetrize->weight * eval_scalar_mirrored(t.base, ctx, i, j);
            if (t.symmetrize->negate_mirrored_axis)
                k += t.weight * s * (t.symmetrize->mirror.matrix() * t.channel);
            else
                k += t.weight * s * t.channel;
        }
    }
    return k;
}

MatrixX cross_gram(const MatrixKernelSpec& spec, const KernelContext& ctx, std::span<const Index> rows,
                   std::span<const Index> cols)
{
    MatrixX g(3 * rows.size(), 3 * cols.size());
    for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t b = 0; b < cols.size(); ++b)
            g.block<3, 3>(3 * a, 3 * b) = eval_matrix(spec, ctx, rows[a], cols[b]);
    return g;
}

MatrixX gram_matrix(const MatrixKernelSpec& spec, const KernelContext& ctx, std::span<const Index> indices)
{
    const std::size_t n = indices.size();
    MatrixX g(3 * n, 3 * n);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a; b < n; ++b) {
            const Mat3 k = eval_matrix(spec, ctx, indices[a], indices[b]);
            g.block<3, 3>(3 * a, 3 * b) = k;
            if (b != a)
                g.block<3, 3>(3 * b, 3 * a) = k.transpose();
        }
    }
    return g;
}

void KernelHyperparameters::set(const std::string& key, const std::string& value)
{
    if (key == "mirror_axis") {
        mirror_axis = parse_axis(value);
        return;
    }
    if (key == "xyz_symmetric_correlated") {
        xyz_symmetric_correlated = value == "1" || value == "true";
        return;
    }
    double v = 0.0;
    try {
        std::size_t used = 0;
        v = std::stod(value, &used);
        if (used != value.size())
            throw std::invalid_argument(value);
    } catch (const std::exception&) {
        throw usage_error("kernel override '" + key + "': not a number: '" + value + "'");
    }
    const std::map<std::string, double*> fields{
        {"a_s", &a_s}, {"b_s", &b_s}, {"c_s", &c_s}, {"A_s", &A_s}, {"B_s", &B_s}, {"C_s", &C_s},
        {"a_a", &a_a}, {"b_a", &b_a}, {"c_a", &c_a}, {"A_a", &A_a}, {"B_a", &B_a}, {"C_a", &C_a},
        {"d", &d},     {"D", &D},     {"alpha", &alpha}, {"beta", &beta}, {"gamma", &gamma}};
    const auto it = fields.find(key);
    if (it == fields.end())
        throw usage_error("unknown kernel hyperparameter '" + key + "'");
    *it->second = v;
}

nlohmann::json KernelHyperparameters::to_json() const
{
    return {{"a_s", a_s},     {"b_s", b_s},     {"c_s", c_s},         {"A_s", A_s},       {"B_s", B_s},
            {"C_s", C_s},     {"a_a", a_a},     {"b_a", b_a},         {"c_a", c_a},       {"A_a", A_a},
            {"B_a", B_a},     {"C_a", C_a},     {"d", d},             {"D", D},           {"alpha", alpha},
            {"beta", beta},   {"gamma", gamma}, {"mirror_axis", axis_name(mirror_axis)},
            {"xyz_symmetric_correlated", xyz_symmetric_correlated}};
}

namespace face_kernels {

namespace {

MatrixKernelSpec single(const ScalarKernelSpec& base, const Mat3& channel,
                        std::optional<Symmetrization> sym = std::nullopt)
{
    MatrixKernelSpec spec;
    spec.terms.push_back({1.0, base, channel, sym});
    return spec;
}

} // namespace

ScalarKernelSpec shape_scalar(const KernelHyperparameters& h)
{
    return {{{h.a_s, h.A_s, Metric::xyz}, {h.b_s, h.B_s, Metric::xyz}, {h.c_s, h.C_s, Metric::xyz}}};
}

ScalarKernelSpec albedo_xyz_scalar(const KernelHyperparameters& h)
{
    return {{{h.a_a, h.A_a, Metric::xyz}, {h.b_a, h.B_a, Metric::xyz}, {h.c_a, h.C_a, Metric::xyz}}};
}

ScalarKernelSpec albedo_rgb_scalar(const KernelHyperparameters& h) { return {{{h.d, h.D, Metric::rgb}}}; }

MatrixKernelSpec shape(const KernelHyperparameters& h) { return single(shape_scalar(h), Mat3::Identity()); }

MatrixKernelSpec shape_symmetric(const KernelHyperparameters& h)
{
    return single(shape_scalar(h), Mat3::Identity(), Symmetrization{{h.mirror_axis}, h.alpha, true});
}

MatrixKernelSpec albedo_xyz(const KernelHyperparameters& h) { return single(albedo_xyz_scalar(h), Mat3::Identity()); }

MatrixKernelSpec albedo_rgb(const KernelHyperparameters& h) { return single(albedo_rgb_scalar(h), Mat3::Identity()); }

MatrixKernelSpec albedo_full(const KernelHyperparameters& h) { return combine(0.5, albedo_xyz(h), 0.5, albedo_rgb(h)); }

MatrixKernelSpec albedo_xyz_correlated(const KernelHyperparameters& h)
{
    return single(albedo_xyz_scalar(h), correlation_matrix(h.beta));
}

MatrixKernelSpec albedo_rgb_correlated(const KernelHyperparameters& h)
{
    return single(albedo_rgb_scalar(h), correlation_matrix(h.gamma));
}

MatrixKernelSpec albedo_xyz_symmetric(const KernelHyperparameters& h)
{
    const Mat3 channel = h.xyz_symmetric_correlated ? correlation_matrix(h.beta) : Mat3::Identity();
    return single(albedo_xyz_scalar(h), channel, Symmetrization{{h.mirror_axis}, h.alpha, false});
}

MatrixKernelSpec albedo_symmetric(const KernelHyperparameters& h)
{
    return combine(0.5, albedo_rgb_correlated(h), 0.5, albedo_xyz_symmetric(h));
}

MatrixKernelSpec albedo_correlated(const KernelHyperparameters& h)
{
    return combine(0.5, albedo_rgb_correlated(h), 0.5, albedo_xyz_correlated(h));
}

} // namespace face_kernels

MatrixKernelSpec combine(double wa, const MatrixKernelSpec& a, double wb, const MatrixKernelSpec& b)
{
    if (!(wa > 0.0) || !(wb > 0.0))
        throw usage_error("kernel: combination weights must be positive");
    MatrixKernelSpec out;
    for (auto t : a.terms) {
        t.weight *= wa;
        out.terms.push_back(t);
    }
    for (auto t : b.terms) {
        t.weight *= wb;
        out.terms.push_back(t);
    }
    return out;
}

const std::vector<std::string>& recipe_names()
{
    static const std::vector<std::string> names{"standard-full",  "standard-RGB",  "standard-XYZ",
                                                "symmetric-full", "symmetric-RGB", "symmetric-XYZ",
                                                "correlated-full", "correlated-RGB", "correlated-XYZ"};
    return names;
}

KernelRecipe recipe(const std::string& name, const KernelHyperparameters& h)
{
    namespace fk = face_kernels;
    KernelRecipe r{name, {}, {}, h};
    if (name == "standard-full") {
        r.shape = fk::shape(h);
        r.albedo = fk::albedo_full(h);
    } else if (name == "standard-RGB") {
        r.shape = fk::shape(h);
        r.albedo = fk::albedo_rgb(h);
    } else if (name == "standard-XYZ") {
        r.shape = fk::shape(h);
        r.albedo = fk::albedo_xyz(h);
    } else if (name == "symmetric-full") {
        r.shape = fk::shape_symmetric(h);
        r.albedo = fk::albedo_symmetric(h);
    } else if (name == "symmetric-RGB") {
        r.shape = fk::shape_symmetric(h);
        r.albedo = fk::albedo_rgb_correlated(h);
    } else if (name == "symmetric-XYZ") {
        r.shape = fk::shape_symmetric(h);
        r.albedo = fk::albedo_xyz_symmetric(h);
    } else if (name == "correlated-full") {
        r.shape = fk::shape(h);
        r.albedo = fk::albedo_correlated(h);
    } else if (name == "correlated-RGB") {
        r.shape = fk::shape(h);
        r.albedo = fk::albedo_rgb_correlated(h);
    } else if (name == "correlated-XYZ") {
        r.shape = fk::shape(h);
        r.albedo = fk::albedo_xyz_correlated(h);
    } else {
        std::string valid;
        for (const auto& n : recipe_names())
            valid += (valid.empty() ? "" : ", ") + n;
        throw usage_error("unknown kernel '" + name + "'; valid names: " + valid);
    }
    r.shape.validate();
    r.albedo.validate();
    return r;
}

nlohmann::json to_json(const MatrixKernelSpec& spec)
{
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : spec.terms) {
        nlohmann::json base = nlohmann::json::array();
        for (const auto& r : t.base.terms)
            base.push_back({{"amplitude", r.amplitude},
                            {"scale", r.scale},
                            {"metric", r.metric == Metric::xyz ? "xyz" : "rgb"}});
        nlohmann::json channel = nlohmann::json::array();
        for (int i = 0; i < 3; ++i)
            channel.push_back({t.channel(i, 0), t.channel(i, 1), t.channel(i, 2)});
        nlohmann::json term{{"weight", t.weight}, {"base", base}, {"channel", channel}};
        if (t.symmetrize)
            term["symmetrize"] = {{"axis", axis_name(t.symmetrize->mirror.axis)},
                                  {"weight", t.symmetrize->weight},
                                  {"negate_mirrored_axis", t.symmetrize->negate_mirrored_axis}};
        terms.push_back(term);
    }
    return {{"terms", terms}};
}

MatrixKernelSpec matrix_kernel_from_json(const nlohmann::json& j)
{
    MatrixKernelSpec spec;
    try {
        for (const auto& term : j.at("terms")) {
            MatrixKernelTerm t;
            t.weight = term.value("weight", 1.0);
            for (const auto& r : term.at("base")) {
                const std::string metric = r.value("metric", "xyz");
                if (metric != "xyz" && metric != "rgb")
                    throw usage_error("kernel json: metric must be xyz or rgb");
                t.base.terms.push_back(
                    {r.at("amplitude").get<double>(), r.at("scale").get<double>(), metric == "xyz" ? Metric::xyz : Metric::rgb});
            }
            if (term.contains("channel"))
                for (int r = 0; r < 3; ++r)
                    for (int c = 0; c < 3; ++c)
                        t.channel(r, c) = term.at("channel").at(r).at(c).get<double>();
            if (term.contains("symmetrize")) {
                const auto& s = term.at("symmetrize");
                t.symmetrize = Symmetrization{{parse_axis(s.value("axis", "x"))},
                                              s.value("weight", 0.7),
                                              s.value("negate_mirrored_axis", true)};
            }
            spec.terms.push_back(t);
        }
    } catch (const nlohmann::json::exception& e) {
        throw usage_error(std::string("kernel json: ") + e.what());
    }
    spec.validate();
    return spec;
}

nlohmann::json to_json(const KernelRecipe& r)
{
    return {{"name", r.name}, {"hyperparameters", r.hyper.to_json()}, {"shape", to_json(r.shape)},
            {"albedo", to_json(r.albedo)}};
}

KernelRecipe recipe_from_json(const nlohmann::json& j)
{
    KernelRecipe r;
    r.name = j.value("name", "custom");
    if (j.contains("hyperparameters"))
        for (const auto& [k, v] : j.at("hyperparameters").items())
            r.hyper.set(k, v.is_string() ? v.get<std::string>() : v.is_boolean() ? (v.get<bool>() ? "1" : "0") : v.dump());
    r.shape = matrix_kernel_from_json(j.at("shape"));
    r.albedo = matrix_kernel_from_json(j.at("albedo"));
    return r;
}

} // namespace gpmm
