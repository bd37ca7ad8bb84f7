#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "facstat/dataset.hpp"
#include "facstat/eda.hpp"
#include "facstat/nltv.hpp"
#include "facstat/regress.hpp"
#include "facstat/softmax.hpp"

namespace facstat::report {

using Json = nlohmann::json;

// Fixed-point with `decimals` places; negative zero prints as zero.
std::string fixed(double v, int decimals = 3);

// Pipe table with a dashed separator row.
class MarkdownTable {
public:
    explicit MarkdownTable(std::vector<std::string> header) : header_(std::move(header)) {}
    void add_row(std::vector<std::string> cells);
    [[nodiscard]] std::string str() const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

// | Field | Mean | Standard Deviation |, one row per field. Expects a single group.
std::string markdown_field_summary(const eda::SummaryRow& row, const std::vector<Field>& fields);
// | University | n | Rank | ... | with either the means or the deviations.
std::string markdown_group_summary(const eda::SummaryTable& t, bool deviations);
// | <first> | 5 | 10 | ... |
std::string markdown_percentiles(const eda::PercentileTable& t, std::string_view first_header);
// Square matrix with a blank corner cell.
std::string markdown_moments(const eda::MomentMatrix& m);
// Rows combo 1..14, columns the methods; `ar` picks AR or ADD.
std::string markdown_sweep_grid(const regress::SweepResult& s, bool ar);
// |  | Quantity | Rank | Publications | Citations | H-Index | AMS | Year of PhD |
std::string markdown_cluster(const nltv::ClusterReport& r);
// |  | Rank 1 | Rank 2 | Rank 3 | Rank 4 |
std::string markdown_crosstab(const nltv::ClusterReport& r);

Json to_json(const Eigen::VectorXd& v);
Json to_json(const Eigen::MatrixXd& m);
Json to_json(const eda::SummaryTable& t);
Json to_json(const eda::PercentileTable& t);
Json to_json(const eda::MomentMatrix& m);
Json to_json(const eda::DensitySeries& s);
Json to_json(const eda::CohortSide& s);
Json to_json(const regress::SweepResult& s);
Json to_json(const nltv::ClusterReport& r);
Json to_json(const softmax::SoftmaxModel& m);
Json to_json(const FeatureStats& s);

softmax::SoftmaxModel softmax_model_from_json(const Json& j);

// Long-form rows: table,row,column,value. Cells are quoted when needed.
class CsvRows {
public:
    void add(std::string_view table, std::string_view row, std::string_view column, const std::string& value);
    void add(std::string_view table, std::string_view row, std::string_view column, double value);
    [[nodiscard]] std::string str() const;

private:
    std::string body_;
};

std::string csv_escape(std::string_view cell);
// Shortest text that parses back to the same double.
std::string number(double v);

void csv_summary(CsvRows& out, std::string_view table, const eda::SummaryTable& t);
void csv_percentiles(CsvRows& out, std::string_view table, const eda::PercentileTable& t);
void csv_moments(CsvRows& out, std::string_view table, const eda::MomentMatrix& m);
void csv_density(CsvRows& out, std::string_view table, const eda::DensitySeries& s);
void csv_sweep(CsvRows& out, std::string_view table, const regress::SweepResult& s);
void csv_cluster(CsvRows& out, std::string_view table, const nltv::ClusterReport& r);

// Two columns x,y for external plotters.
std::string density_series_csv(const eda::DensitySeries& s);

// epoch,loss with epochs counted from 1.
std::string loss_curve_csv(const softmax::LossCurve& curve);

} // namespace facstat::report
