#include "facstat/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "facstat/errors.hpp"

namespace facstat::report {

namespace {

using Eigen::Index;

std::string label(Field f) { return std::string(field_label(f)); }

std::string cell_or_na(const std::optional<double>& v) { return v ? fixed(*v) : "n/a"; }

Json field_list(const std::vector<Field>& fields)
{
    Json out = Json::array();
    for (Field f : fields) {
        out.push_back(std::string(field_key(f)));
    }
    return out;
}

std::string kind_name(eda::MomentKind k) { return k == eda::MomentKind::Covariance ? "covariance" : "correlation"; }

std::string cell_key(const regress::CellKey& k)
{
    return std::to_string(k.first) + ":" + std::string(regress::method_tag(k.second));
}

} // namespace

std::string fixed(double v, int decimals)
{
    if (!std::isfinite(v)) {
        return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    std::string s(buf);
    if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) {
        s.erase(0, 1);
    }
    return s;
}

std::string number(double v)
{
    if (!std::isfinite(v)) {
        return fixed(v);
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

void MarkdownTable::add_row(std::vector<std::string> cells)
{
    if (cells.size() != header_.size()) {
        throw DataError("markdown row width does not match the header");
    }
    rows_.push_back(std::move(cells));
}

std::string MarkdownTable::str() const
{
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& cells) {
        os << '|';
        for (const auto& c : cells) {
            os << ' ' << c << " |";
        }
        os << '\n';
    };
    line(header_);
    os << '|';
    for (std::size_t i = 0; i < header_.size(); ++i) {
        os << " --- |";
    }
    os << '\n';
    for (const auto& r : rows_) {
        line(r);
    }
    return os.str();
}

std::string markdown_field_summary(const eda::SummaryRow& row, const std::vector<Field>& fields)
{
    MarkdownTable t({"Field", "Mean", "Standard Deviation"});
    for (std::size_t i = 0; i < fields.size(); ++i) {
        t.add_row({std::string(field_long_label(fields[i])), fixed(row.mean[i]), fixed(row.deviation[i])});
    }
    return t.str();
}

std::string markdown_group_summary(const eda::SummaryTable& t, bool deviations)
{
    std::vector<std::string> header{t.grouping == eda::GroupKind::Cohort ? "Cohort" : "University", "n"};
    for (Field f : t.fields) {
        header.push_back(label(f));
    }
    MarkdownTable md(std::move(header));
    for (const auto& row : t.rows) {
        std::vector<std::string> cells{row.group, std::to_string(row.n)};
        for (double v : deviations ? row.deviation : row.mean) {
            cells.push_back(fixed(v));
        }
        md.add_row(std::move(cells));
    }
    return md.str();
}

std::string markdown_percentiles(const eda::PercentileTable& t, std::string_view first_header)
{
    std::vector<std::string> header{std::string(first_header)};
    for (double p : t.probes) {
        header.push_back(number(p));
    }
    MarkdownTable md(std::move(header));
    for (std::size_t r = 0; r < t.row_labels.size(); ++r) {
        std::vector<std::string> cells{t.row_labels[r]};
        for (double v : t.values[r]) {
            cells.push_back(fixed(v));
        }
        md.add_row(std::move(cells));
    }
    return md.str();
}

std::string markdown_moments(const eda::MomentMatrix& m)
{
    std::vector<std::string> header{""};
    for (Field f : m.fields) {
        header.push_back(label(f));
    }
    MarkdownTable md(std::move(header));
    for (std::size_t i = 0; i < m.fields.size(); ++i) {
        std::vector<std::string> cells{label(m.fields[i])};
        for (std::size_t j = 0; j < m.fields.size(); ++j) {
            cells.push_back(fixed(m.values(static_cast<Index>(i), static_cast<Index>(j))));
        }
        md.add_row(std::move(cells));
    }
    return md.str();
}

std::string markdown_sweep_grid(const regress::SweepResult& s, bool ar)
{
    std::vector<std::string> header{""};
    for (auto method : s.methods) {
        header.emplace_back(regress::method_tag(method));
    }
    MarkdownTable md(std::move(header));
    for (int combo : s.combos) {
        std::vector<std::string> cells{std::to_string(combo)};
        for (auto method : s.methods) {
            const auto& cell = s.grid.at({combo, method});
            cells.push_back(cell_or_na(ar ? cell.ar : cell.add));
        }
        md.add_row(std::move(cells));
    }
    return md.str();
}

std::string markdown_cluster(const nltv::ClusterReport& r)
{
    MarkdownTable md({"", "Quantity", "Rank", "Publications", "Citations", "H-Index", "AMS", "Year of PhD"});
    for (std::size_t l = 0; l < r.rows.size(); ++l) {
        const auto& row = r.rows[l];
        md.add_row({"Centroid " + std::to_string(l + 1), std::to_string(row.count), fixed(row.rank),
                    fixed(row.publications), fixed(row.citations), fixed(row.h_index), fixed(row.ams),
                    fixed(row.phd_year)});
    }
    return md.str();
}

std::string markdown_crosstab(const nltv::ClusterReport& r)
{
    MarkdownTable md({"", "Rank 1", "Rank 2", "Rank 3", "Rank 4"});
    for (std::size_t l = 0; l < r.rank_crosstab.size(); ++l) {
        std::vector<std::string> cells{"Cluster " + std::to_string(l + 1)};
        for (auto c : r.rank_crosstab[l]) {
            cells.push_back(std::to_string(c));
        }
        md.add_row(std::move(cells));
    }
    return md.str();
}

Json to_json(const Eigen::VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Json to_json(const Eigen::MatrixXd& m)
{
    Json out = Json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        out.push_back(to_json(Eigen::VectorXd(m.row(i).transpose())));
    }
    return out;
}

Json to_json(const eda::SummaryTable& t)
{
    Json rows = Json::array();
    for (const auto& r : t.rows) {
        rows.push_back({{"group", r.group}, {"n", r.n}, {"mean", r.mean}, {"deviation", r.deviation}});
    }
    return {{"fields", field_list(t.fields)}, {"rows", rows}};
}

Json to_json(const eda::PercentileTable& t)
{
    return {{"probes", t.probes}, {"rows", t.row_labels}, {"values", t.values}};
}

Json to_json(const eda::MomentMatrix& m)
{
    return {{"kind", kind_name(m.kind)}, {"fields", field_list(m.fields)}, {"values", to_json(m.values)}};
}

Json to_json(const eda::DensitySeries& s)
{
    Json j = {{"kind", s.kind == eda::DensityKind::Histogram ? "histogram" : "kde"},
              {"field", std::string(field_key(s.field))},
              {"n", s.n},
              {"x", to_json(s.abscissae)},
              {"y", to_json(s.ordinates)},
              {"normalized", s.normalized}};
    if (s.kind == eda::DensityKind::Histogram) {
        j["bin_width"] = s.width;
        j["edges"] = s.edges;
    } else {
        j["bandwidth"] = s.width;
    }
    return j;
}

Json to_json(const eda::CohortSide& s)
{
    return {{"tag", s.tag},
            {"summary", to_json(s.summary)},
            {"covariance", to_json(s.covariance)},
            {"correlation", to_json(s.correlation)},
            {"correlation_omitted", field_list(s.correlation_omitted)}};
}

Json to_json(const regress::SweepResult& s)
{
    Json cells = Json::object();
    for (const auto& [key, cell] : s.grid) {
        Json c = {{"hyperparameters", cell.hyperparameters}};
        c["ar"] = cell.ar ? Json(*cell.ar) : Json(nullptr);
        c["add"] = cell.add ? Json(*cell.add) : Json(nullptr);
        if (!cell.failure.empty()) {
            c["failure"] = cell.failure;
        }
        cells[cell_key(key)] = std::move(c);
    }
    auto keys = [](const std::vector<regress::CellKey>& v) {
        Json out = Json::array();
        for (const auto& k : v) {
            out.push_back({{"combo", k.first}, {"method", std::string(regress::method_tag(k.second))}});
        }
        return out;
    };
    Json methods = Json::array();
    for (auto m : s.methods) {
        methods.push_back(std::string(regress::method_tag(m)));
    }
    return {{"target", std::string(field_key(s.target))},
            {"seed", s.seed},
            {"train_size", s.train_size},
            {"test_size", s.test_size},
            {"methods", methods},
            {"combos", s.combos},
            {"cells", cells},
            {"best_by_ar", keys(s.best_by_ar)},
            {"best_by_add", keys(s.best_by_add)},
            {"best_ar", s.best_ar ? Json(*s.best_ar) : Json(nullptr)},
            {"best_add", s.best_add ? Json(*s.best_add) : Json(nullptr)}};
}

Json to_json(const nltv::ClusterReport& r)
{
    Json rows = Json::array();
    for (std::size_t l = 0; l < r.rows.size(); ++l) {
        const auto& row = r.rows[l];
        rows.push_back({{"cluster", l + 1},
                        {"quantity", row.count},
                        {"rank", row.rank},
                        {"publications", row.publications},
                        {"citations", row.citations},
                        {"h_index", row.h_index},
                        {"ams_fellow", row.ams},
                        {"phd_year", row.phd_year}});
    }
    return {{"centroids", rows}, {"rank_crosstab", r.rank_crosstab}};
}

Json to_json(const FeatureStats& s) { return {{"mean", to_json(s.mean)}, {"deviation", to_json(s.deviation)}}; }

Json to_json(const softmax::SoftmaxModel& m)
{
    Json j = {{"columns", field_list(m.columns)}, {"weights", to_json(m.weights)}, {"biases", to_json(m.biases)}};
    j["feature_stats"] = m.feature_stats ? to_json(*m.feature_stats) : Json(nullptr);
    return j;
}

softmax::SoftmaxModel softmax_model_from_json(const Json& j)
{
    auto vec = [](const Json& a) {
        const auto v = a.get<std::vector<double>>();
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size())));
    };
    try {
        softmax::SoftmaxModel m;
        for (const auto& c : j.at("columns")) {
            m.columns.push_back(parse_field(c.get<std::string>()));
        }
        const auto& w = j.at("weights");
        const auto rows = static_cast<Index>(w.size());
        const auto cols = static_cast<Index>(m.columns.size());
        m.weights.resize(rows, cols);
        for (Index r = 0; r < rows; ++r) {
            const auto row = vec(w.at(static_cast<std::size_t>(r)));
            if (row.size() != cols) {
                throw DataError("weight row width does not match the column list");
            }
            m.weights.row(r) = row.transpose();
        }
        m.biases = vec(j.at("biases"));
        if (m.biases.size() != rows) {
            throw DataError("bias count does not match the weight rows");
        }
        if (j.contains("feature_stats") && !j.at("feature_stats").is_null()) {
            m.feature_stats = FeatureStats{vec(j["feature_stats"].at("mean")), vec(j["feature_stats"].at("deviation"))};
        }
        return m;
    } catch (const Json::exception& e) {
        throw DataError(std::string("malformed softmax model: ") + e.what());
    }
}

std::string csv_escape(std::string_view cell)
{
    if (cell.find_first_of(",\"\n\r") == std::string_view::npos) {
        return std::string(cell);
    }
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

void CsvRows::add(std::string_view table, std::string_view row, std::string_view column, const std::string& value)
{
    body_ += csv_escape(table) + ',' + csv_escape(row) + ',' + csv_escape(column) + ',' + csv_escape(value) + '\n';
}

void CsvRows::add(std::string_view table, std::string_view row, std::string_view column, double value)
{
    add(table, row, column, number(value));
}

std::string CsvRows::str() const { return "table,row,column,value\n" + body_; }

void csv_summary(CsvRows& out, std::string_view table, const eda::SummaryTable& t)
{
    for (const auto& r : t.rows) {
        out.add(table, r.group, "n", static_cast<double>(r.n));
        for (std::size_t i = 0; i < t.fields.size(); ++i) {
            const std::string key(field_key(t.fields[i]));
            out.add(table, r.group, key + ".mean", r.mean[i]);
            out.add(table, r.group, key + ".deviation", r.deviation[i]);
        }
    }
}

void csv_percentiles(CsvRows& out, std::string_view table, const eda::PercentileTable& t)
{
    for (std::size_t r = 0; r < t.row_labels.size(); ++r) {
        for (std::size_t c = 0; c < t.probes.size(); ++c) {
            out.add(table, t.row_labels[r], number(t.probes[c]), t.values[r][c]);
        }
    }
}

void csv_moments(CsvRows& out, std::string_view table, const eda::MomentMatrix& m)
{
    for (std::size_t i = 0; i < m.fields.size(); ++i) {
        for (std::size_t j = 0; j < m.fields.size(); ++j) {
            out.add(table, field_key(m.fields[i]), field_key(m.fields[j]),
                    m.values(static_cast<Index>(i), static_cast<Index>(j)));
        }
    }
}

void csv_density(CsvRows& out, std::string_view table, const eda::DensitySeries& s)
{
    for (Index i = 0; i < s.abscissae.size(); ++i) {
        out.add(table, number(s.abscissae(i)), "y", s.ordinates(i));
    }
}

void csv_sweep(CsvRows& out, std::string_view table, const regress::SweepResult& s)
{
    for (const auto& [key, cell] : s.grid) {
        const std::string row = std::to_string(key.first);
        const std::string method(regress::method_tag(key.second));
        out.add(table, row, method + ".ar", cell.ar ? number(*cell.ar) : std::string());
        out.add(table, row, method + ".add", cell.add ? number(*cell.add) : std::string());
        if (!cell.failure.empty()) {
            out.add(table, row, method + ".failure", cell.failure);
        }
    }
}

void csv_cluster(CsvRows& out, std::string_view table, const nltv::ClusterReport& r)
{
    for (std::size_t l = 0; l < r.rows.size(); ++l) {
        const auto& row = r.rows[l];
        const std::string name = "Centroid " + std::to_string(l + 1);
        out.add(table, name, "quantity", static_cast<double>(row.count));
        out.add(table, name, "rank", row.rank);
        out.add(table, name, "publications", row.publications);
        out.add(table, name, "citations", row.citations);
        out.add(table, name, "h_index", row.h_index);
        out.add(table, name, "ams_fellow", row.ams);
        out.add(table, name, "phd_year", row.phd_year);
        for (std::size_t k = 0; k < 4; ++k) {
            out.add(table, name, "rank" + std::to_string(k + 1) + ".count",
                    static_cast<double>(r.rank_crosstab[l][k]));
        }
    }
}

std::string density_series_csv(const eda::DensitySeries& s)
{
    std::string out = "x,y\n";
    for (Index i = 0; i < s.abscissae.size(); ++i) {
        out += number(s.abscissae(i)) + ',' + number(s.ordinates(i)) + '\n';
    }
    return out;
}

std::string loss_curve_csv(const softmax::LossCurve& curve)
{
    std::string out = "epoch,loss\n";
    for (std::size_t i = 0; i < curve.size(); ++i) {
        out += std::to_string(i + 1) + ',' + number(curve[i]) + '\n';
    }
    return out;
}

} // namespace facstat::report
