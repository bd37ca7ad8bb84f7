#include "facstat/eda.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "facstat/errors.hpp"

namespace facstat::eda {

namespace {

void require_nonempty(const Dataset& d, const char* what)
{
    if (d.empty()) {
        throw DataError(std::string(what) + " needs a nonempty dataset");
    }
}

std::vector<double> normalize_probes(std::vector<double> probes)
{
    if (probes.empty()) {
        throw DataError("at least one percentile probe is required");
    }
    for (double p : probes) {
        if (!(p > 0.0 && p < 100.0)) {
            throw DataError("percentile probes must lie in (0, 100), got " + std::to_string(p));
        }
    }
    std::sort(probes.begin(), probes.end());
    probes.erase(std::unique(probes.begin(), probes.end()), probes.end());
    return probes;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

double sample_deviation(const Eigen::VectorXd& v)
{
    if (v.size() < 2) {
        return 0.0;
    }
    const double mean = v.mean();
    return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
}

} // namespace

std::vector<std::pair<std::string, Dataset>> partition(const Dataset& d, const Grouping& g)
{
    std::vector<std::pair<std::string, Dataset>> out;
    switch (g.kind) {
    case GroupKind::All:
        out.emplace_back("All", d);
        break;
    case GroupKind::University: {
        auto names = d.universities();
        std::sort(names.begin(), names.end());
        for (const auto& u : names) {
            out.emplace_back(u, filter_university(d, u));
        }
        break;
    }
    case GroupKind::Cohort:
        if (g.tags.empty()) {
            throw DataError("cohort grouping needs at least one tag");
        }
        for (const auto& tag : g.tags) {
            out.emplace_back(tag, filter_cohort(d, tag, g.cohorts));
        }
        break;
    }
    return out;
}

SummaryTable summary(const Dataset& d, const Grouping& g, const std::vector<Field>& fields)
{
    require_nonempty(d, "summary");
    SummaryTable table;
    table.grouping = g.kind;
    table.fields = fields;
    for (const auto& [label, group] : partition(d, g)) {
        if (group.empty()) {
            throw DataError("group '" + label + "' is empty");
        }
        SummaryRow row;
        row.group = label;
        row.n = group.size();
        for (Field f : fields) {
            const auto col = group.column(f);
            row.mean.push_back(col.mean());
            row.deviation.push_back(sample_deviation(col));
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

double percentile(std::vector<double> values, double probe)
{
    if (values.empty()) {
        throw DataError("percentile of an empty field");
    }
    std::sort(values.begin(), values.end());
    const double pos = (static_cast<double>(values.size()) - 1.0) * probe / 100.0;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

PercentileTable percentiles(const Dataset& d, std::vector<double> probes, const std::vector<Field>& fields)
{
    require_nonempty(d, "percentiles");
    PercentileTable table;
    table.probes = normalize_probes(std::move(probes));
    for (Field f : fields) {
        const auto col = to_vector(d.column(f));
        std::vector<double> row;
        for (double p : table.probes) {
            row.push_back(percentile(col, p));
        }
        table.row_labels.emplace_back(field_label(f));
        table.values.push_back(std::move(row));
    }
    return table;
}

PercentileTable percentiles_by_group(const Dataset& d, Field field, const Grouping& g, std::vector<double> probes)
{
    require_nonempty(d, "percentiles");
    PercentileTable table;
    table.probes = normalize_probes(std::move(probes));
    for (const auto& [label, group] : partition(d, g)) {
        if (group.empty()) {
            throw DataError("group '" + label + "' is empty");
        }
        const auto col = to_vector(group.column(field));
        std::vector<double> row;
        for (double p : table.probes) {
            row.push_back(percentile(col, p));
        }
        table.row_labels.push_back(label);
        table.values.push_back(std::move(row));
    }
    return table;
}

MomentMatrix covariance(const Dataset& d, const std::vector<Field>& fields)
{
    if (d.size() < 2) {
        throw DataError("covariance needs at least two records");
    }
    const auto m = static_cast<Eigen::Index>(d.size());
    const auto k = static_cast<Eigen::Index>(fields.size());
    Eigen::MatrixXd centered(m, k);
    for (Eigen::Index c = 0; c < k; ++c) {
        const auto col = d.column(fields[static_cast<std::size_t>(c)]);
        centered.col(c) = col.array() - col.mean();
    }
    MomentMatrix out;
    out.kind = MomentKind::Covariance;
    out.fields = fields;
    out.values = (centered.transpose() * centered) / static_cast<double>(m - 1);
    // Exact symmetry regardless of summation order.
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = i + 1; j < k; ++j) {
            out.values(j, i) = out.values(i, j);
        }
    }
    return out;
}

std::vector<Field> constant_fields(const Dataset& d, const std::vector<Field>& fields)
{
    std::vector<Field> out;
    for (Field f : fields) {
        const auto col = d.column(f);
        if (col.size() == 0 || col.maxCoeff() == col.minCoeff()) {
            out.push_back(f);
        }
    }
    return out;
}

MomentMatrix correlation(const Dataset& d, const std::vector<Field>& fields)
{
    const auto constant = constant_fields(d, fields);
    if (!constant.empty()) {
        throw DataError("field '" + std::string(field_key(constant.front())) +
                        "' is constant; correlation is undefined");
    }
    auto out = covariance(d, fields);
    out.kind = MomentKind::Correlation;
    const Eigen::VectorXd dev = out.values.diagonal().array().sqrt();
    const auto k = out.values.rows();
    for (Eigen::Index i = 0; i < k; ++i) {
        out.values(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < k; ++j) {
            const double r = std::clamp(out.values(i, j) / (dev(i) * dev(j)), -1.0, 1.0);
            out.values(i, j) = r;
            out.values(j, i) = r;
        }
    }
    return out;
}

DensitySeries histogram(const Dataset& d, Field field, const Bins& bins, bool normalized)
{
    require_nonempty(d, "histogram");
    const auto col = d.column(field);
    std::vector<double> edges;
    if (const auto* count = std::get_if<std::size_t>(&bins)) {
        if (*count < 1) {
            throw DataError("histogram needs at least one bin");
        }
        double lo = col.minCoeff();
        double hi = col.maxCoeff();
        if (lo == hi) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double width = (hi - lo) / static_cast<double>(*count);
        for (std::size_t i = 0; i <= *count; ++i) {
            edges.push_back(lo + width * static_cast<double>(i));
        }
        edges.back() = hi;
    } else {
        edges = std::get<std::vector<double>>(bins);
        if (edges.size() < 2) {
            throw DataError("explicit histogram edges need at least two values");
        }
        if (!std::is_sorted(edges.begin(), edges.end()) ||
            std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
            throw DataError("histogram edges must be strictly increasing");
        }
        if (col.minCoeff() < edges.front() || col.maxCoeff() > edges.back()) {
            throw DataError("histogram edges do not cover the range of '" + std::string(field_key(field)) + "'");
        }
    }

    const auto nbins = static_cast<Eigen::Index>(edges.size() - 1);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(nbins);
    for (Eigen::Index i = 0; i < col.size(); ++i) {
        const double v = col(i);
        auto it = std::upper_bound(edges.begin(), edges.end(), v);
        auto bin = static_cast<Eigen::Index>(std::distance(edges.begin(), it)) - 1;
        bin = std::clamp<Eigen::Index>(bin, 0, nbins - 1);
        counts(bin) += 1.0;
    }

    DensitySeries out;
    out.kind = DensityKind::Histogram;
    out.field = field;
    out.n = d.size();
    out.edges = edges;
    out.normalized = normalized;
    out.abscissae.resize(nbins);
    out.ordinates = counts;
    for (Eigen::Index b = 0; b < nbins; ++b) {
        const auto ub = static_cast<std::size_t>(b);
        const double width = edges[ub + 1] - edges[ub];
        out.abscissae(b) = 0.5 * (edges[ub] + edges[ub + 1]);
        if (normalized) {
            out.ordinates(b) = counts(b) / (static_cast<double>(d.size()) * width);
        }
    }
    out.width = (edges.back() - edges.front()) / static_cast<double>(nbins);
    return out;
}

DensitySeries kde(const Dataset& d, Field field, std::optional<double> bandwidth)
{
    if (d.size() < 2) {
        throw DataError("kernel density estimate needs at least two records");
    }
    const auto col = d.column(field);
    const auto n = static_cast<double>(col.size());
    double h = 0.0;
    if (bandwidth) {
        if (!(*bandwidth > 0.0)) {
            throw DataError("bandwidth must be positive");
        }
        h = *bandwidth;
    } else {
        const double sd = sample_deviation(col);
        if (!(sd > 0.0)) {
            throw DataError("field '" + std::string(field_key(field)) +
                            "' has zero variance; automatic bandwidth is undefined");
        }
        h = 1.06 * sd * std::pow(n, -0.2);
    }

    const double lo = col.minCoeff() - 3.0 * h;
    const double hi = col.maxCoeff() + 3.0 * h;
    const auto points = static_cast<Eigen::Index>(kKdeGridPoints);
    DensitySeries out;
    out.kind = DensityKind::Kde;
    out.field = field;
    out.n = d.size();
    out.width = h;
    out.normalized = true;
    out.abscissae = Eigen::VectorXd::LinSpaced(points, lo, hi);
    out.ordinates.resize(points);
    const double norm = 1.0 / (n * h * std::sqrt(2.0 * std::numbers::pi));
    for (Eigen::Index g = 0; g < points; ++g) {
        const double x = out.abscissae(g);
        out.ordinates(g) = norm * ((col.array() - x) / h).square().unaryExpr([](double z) {
            return std::exp(-0.5 * z);
        }).sum();
    }
    return out;
}

CohortReport cohort_report(const Dataset& d, const std::pair<std::string, std::string>& tags,
                           const CohortTable& table, const std::vector<Field>& fields)
{
    CohortReport report;
    const std::array<std::string, 2> names = {tags.first, tags.second};
    for (std::size_t s = 0; s < 2; ++s) {
        const auto cohort = filter_cohort(d, names[s], table);
        if (cohort.empty()) {
            throw DataError("cohort '" + names[s] + "' is empty");
        }
        auto& side = report.sides[s];
        side.tag = names[s];
        side.summary = summary(cohort, Grouping::all(), fields);
        side.summary.rows.front().group = names[s];
        side.covariance = covariance(cohort, fields);
        side.correlation_omitted = constant_fields(cohort, fields);
        std::vector<Field> varying;
        for (Field f : fields) {
            if (std::find(side.correlation_omitted.begin(), side.correlation_omitted.end(), f) ==
                side.correlation_omitted.end()) {
                varying.push_back(f);
            }
        }
        side.correlation = correlation(cohort, varying);
    }
    return report;
}

} // namespace facstat::eda
