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
#include "gpmm/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <limits>
#include <sstream>

namespace gpmm {

namespace {

const LowRankBasis& basis_of(const MorphableModel& model, Channel channel)
{
    return channel == Channel::shape ? model.shape : model.albedo;
}

const Points3d& field_of(const Mesh& mesh, Channel channel)
{
    return channel == Channel::shape ? mesh.vertices : mesh.albedo;
}

void check_counts(const std::vector<Index>& counts, Index rank)
{
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] < 0 || counts[i] > rank)
            throw usage_error("component count " + std::to_string(counts[i]) + " outside [0, " +
                              std::to_string(rank) + "]");
        if (i > 0 && counts[i] <= counts[i - 1])
            throw usage_error("component counts must be strictly ascending");
    }
}

void check_dataset(const MorphableModel& model, const std::vector<Mesh>& dataset)
{
    for (std::size_t i = 0; i < dataset.size(); ++i)
        if (dataset[i].num_vertices() != model.mean.num_vertices())
            throw data_error("dataset mesh " + std::to_string(i) + " has " +
                             std::to_string(dataset[i].num_vertices()) + " vertices, model has " +
                             std::to_string(model.mean.num_vertices()));
}

} // namespace

std::string metric_name(QualityMetric m)
{
    switch (m) {
    case QualityMetric::specificity: return "specificity";
    case QualityMetric::generalization: return "generalization";
    case QualityMetric::compactness: return "compactness";
    }
    return "?";
}

std::string channel_name(Channel c) { return c == Channel::shape ? "shape" : "albedo"; }

void MetricCurve::validate() const
{
    if (component_counts.size() != values.size())
        throw data_error("metric curve: counts and values differ in length");
    for (std::size_t i = 1; i < component_counts.size(); ++i)
        if (component_counts[i] <= component_counts[i - 1])
            throw data_error("metric curve: counts not ascending");
}

std::vector<Index> all_counts(const MorphableModel& model, Channel channel)
{
    std::vector<Index> counts(basis_of(model, channel).rank() + 1);
    for (std::size_t i = 0; i < counts.size(); ++i)
        counts[i] = static_cast<Index>(i);
    return counts;
}

MetricCurve generalization(const MorphableModel& model, const std::vector<Mesh>& dataset,
                           const std::vector<Index>& counts, Channel channel)
{
    const LowRankBasis& basis = basis_of(model, channel);
    check_counts(counts, basis.rank());
    check_dataset(model, dataset);
    MetricCurve curve{counts, std::vector<double>(counts.size(), 0.0), QualityMetric::generalization, channel};
    if (dataset.empty())
        return curve;
    const Index n = model.mean.num_vertices();
    for (const Mesh& m : dataset) {
        Points3d d = field_of(m, channel) - field_of(model.mean, channel);
        const Eigen::Map<const VectorX> flat(d.data(), 3 * n);
        const VectorX coeffs = basis.components.transpose() * flat;
        VectorX residual = flat;
        Index used = 0;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            for (; used < counts[i]; ++used)
                residual -= coeffs(used) * basis.components.col(used);
            curve.values[i] += Eigen::Map<const Points3d>(residual.data(), 3, n).colwise().norm().mean();
        }
    }
    for (double& v : curve.values)
        v /= double(dataset.size());
    return curve;
}

MetricCurve specificity(const MorphableModel& model, const std::vector<Mesh>& dataset,
                        const std::vector<Index>& counts, Index samples, std::uint64_t seed, Channel channel)
{
    if (samples < 1)
        throw usage_error("specificity needs at least one sample");
    if (dataset.empty())
        throw usage_error("specificity needs a non-empty dataset");
    const LowRankBasis& basis = basis_of(model, channel);
    check_counts(counts, basis.rank());
    check_dataset(model, dataset);

    Rng rng(substream_seed(seed, "specificity"));
    NormalSampler normal;
    const Index rank = basis.rank();
    const Index n = model.mean.num_vertices();
    MatrixX codes(rank, samples);
    for (Index s = 0; s < samples; ++s)
        for (Index k = 0; k < rank; ++k)
            codes(k, s) = normal(rng);

    const Points3d& mean = field_of(model.mean, channel);
    const VectorX sd = basis.eigenvalues.cwiseSqrt();
    MetricCurve curve{counts, std::vector<double>(counts.size(), 0.0), QualityMetric::specificity, channel};
    for (Index s = 0; s < samples; ++s) {
        VectorX offset = VectorX::Zero(3 * n);
        Index used = 0;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            for (; used < counts[i]; ++used)
                offset += (codes(used, s) * sd(used)) * basis.components.col(used);
            Points3d inst = mean + Eigen::Map<const Points3d>(offset.data(), 3, n);
            if (channel == Channel::albedo)
                inst = inst.cwiseMax(0.0).cwiseMin(1.0);
            double best = std::numeric_limits<double>::infinity();
            for (const Mesh& m : dataset)
                best = std::min(best, mean_correspondence_distance(inst, field_of(m, channel)));
            curve.values[i] += best;
        }
    }
    for (double& v : curve.values)
        v /= double(samples);
    return curve;
}

MetricCurve compactness(const MorphableModel& model, const std::vector<Index>& counts, Channel channel)
{
    const LowRankBasis& basis = basis_of(model, channel);
    check_counts(counts, basis.rank());
    const double total = basis.eigenvalues.sum();
    MetricCurve curve{counts, {}, QualityMetric::compactness, channel};
    for (Index k : counts) {
        if (total <= 0.0)
            curve.values.push_back(k == 0 ? 0.0 : 1.0);
        else if (k == basis.rank())
            curve.values.push_back(1.0);
        else
            curve.values.push_back(basis.eigenvalues.head(k).sum() / total);
    }
    return curve;
}

std::string curve_to_csv(const MetricCurve& curve)
{
    curve.validate();
    std::ostringstream os;
    os << std::setprecision(17);
    os << "# metric=" << metric_name(curve.metric) << " channel=" << channel_name(curve.channel);
    if (curve.metric != QualityMetric::compactness)
        os << " distance=mean-per-vertex-euclidean correspondence=vertex-index";
    os << "\ncount,value\n";
    for (std::size_t i = 0; i < curve.values.size(); ++i)
        os << curve.component_counts[i] << ',' << curve.values[i] << '\n';
    return os.str();
}

std::string curves_to_svg(const std::vector<MetricCurve>& curves, const std::string& title)
{
    const double width = 480, height = 320, margin = 48;
    double xmax = 1, ymax = 0;
    for (const auto& c : curves) {
        if (!c.component_counts.empty())
            xmax = std::max(xmax, double(c.component_counts.back()));
        for (double v : c.values)
            ymax = std::max(ymax, v);
    }
    if (ymax <= 0)
        ymax = 1;
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    std::ostringstream os;
    os << std::setprecision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << margin << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << title
       << "</text>\n";
    os << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin / 2 << "\" y2=\""
       << height - margin << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << margin << "\" y1=\"" << margin / 2 << "\" x2=\"" << margin << "\" y2=\""
       << height - margin << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << margin << "\" y=\"" << height - margin / 3 << "\" font-size=\"11\">0</text>\n";
    os << "<text x=\"" << width - margin << "\" y=\"" << height - margin / 3 << "\" font-size=\"11\">" << xmax
       << " components</text>\n";
    os << "<text x=\"4\" y=\"" << margin / 2 + 10 << "\" font-size=\"11\">" << ymax << "</text>\n";
    for (std::size_t ci = 0; ci < curves.size(); ++ci) {
        const auto& c = curves[ci];
        os << "<polyline fill=\"none\" stroke=\"" << colors[ci % 6] << "\" points=\"";
        for (std::size_t i = 0; i < c.values.size(); ++i) {
            const double x = margin + (width - 1.5 * margin) * double(c.component_counts[i]) / xmax;
            const double y = height - margin - (height - 1.5 * margin) * c.values[i] / ymax;
            os << x << ',' << y << ' ';
        }
        os << "\"/>\n";
        os << "<text x=\"" << width - 150 << "\" y=\"" << 40 + 14 * ci << "\" font-size=\"11\" fill=\""
           << colors[ci % 6] << "\">" << metric_name(c.metric) << " / " << channel_name(c.channel) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

SurfaceErrors surface_errors(const Mesh& fit, const Mesh& scan, const std::vector<Landmark3D>& landmarks)
{
    SurfaceErrors e;
    e.chamfer = chamfer_distance(fit.vertices, scan.vertices, Direction::directed);
    e.hausdorff = hausdorff_distance(fit.vertices, scan.vertices, Direction::directed);
    if (fit.num_vertices() == scan.num_vertices()) {
        e.vertex = mean_correspondence_distance(fit.vertices, scan.vertices);
        if (!landmarks.empty()) {
            double s = 0.0;
            for (const auto& l : landmarks) {
                if (l.vertex < 0 || l.vertex >= fit.num_vertices())
                    throw data_error("landmark '" + l.name + "' vertex out of range");
                s += (fit.vertices.col(l.vertex) - scan.vertices.col(l.vertex)).norm();
            }
            e.landmark = s / double(landmarks.size());
        }
    }
    return e;
}

} // namespace gpmm
