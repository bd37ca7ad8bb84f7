#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "facstat/dataset.hpp"

namespace facstat::eda {

enum class GroupKind { All, University, Cohort };

// How records are grouped for per-group tables.
struct Grouping {
    GroupKind kind = GroupKind::All;
    std::vector<std::string> tags; // cohort tags, for GroupKind::Cohort
    CohortTable cohorts = CohortTable::builtin();

    static Grouping all() { return {}; }
    static Grouping by_university() { return {GroupKind::University, {}, CohortTable::builtin()}; }
    static Grouping by_cohort(std::vector<std::string> tags, CohortTable table)
    {
        return {GroupKind::Cohort, std::move(tags), std::move(table)};
    }
};

// Label and members of every group, in output order. For All the single group
// is labelled "All". Cohort groups need not be disjoint.
std::vector<std::pair<std::string, Dataset>> partition(const Dataset& d, const Grouping& g);

struct SummaryRow {
    std::string group;
    std::size_t n = 0;
    std::vector<double> mean;      // parallel to SummaryTable::fields
    std::vector<double> deviation; // sample (n-1) convention; 0 when n == 1
};

struct SummaryTable {
    GroupKind grouping = GroupKind::All;
    std::vector<Field> fields;
    std::vector<SummaryRow> rows;
};

SummaryTable summary(const Dataset& d, const Grouping& g = Grouping::all(),
                     const std::vector<Field>& fields = {kAllFields.begin(), kAllFields.end()});

inline const std::vector<double> kDefaultProbes = {5, 10, 25, 50, 75, 90, 95};

// Rows are either fields (one group) or groups (one field).
struct PercentileTable {
    std::vector<double> probes; // ascending, unique
    std::vector<std::string> row_labels;
    std::vector<std::vector<double>> values;
};

// Linear interpolation at 1-based rank 1 + (n-1) p / 100.
double percentile(std::vector<double> values, double probe);

PercentileTable percentiles(const Dataset& d, std::vector<double> probes = kDefaultProbes,
                            const std::vector<Field>& fields = {kAllFields.begin(), kAllFields.end()});
PercentileTable percentiles_by_group(const Dataset& d, Field field, const Grouping& g,
                                     std::vector<double> probes = kDefaultProbes);

enum class MomentKind { Covariance, Correlation };

struct MomentMatrix {
    MomentKind kind = MomentKind::Covariance;
    std::vector<Field> fields;
    Eigen::MatrixXd values;
};

// Sample covariance. Constant fields give zero rows and columns.
MomentMatrix covariance(const Dataset& d,
                        const std::vector<Field>& fields = {kAllFields.begin(), kAllFields.end()});
// Throws DataError naming the first constant field.
MomentMatrix correlation(const Dataset& d,
                         const std::vector<Field>& fields = {kAllFields.begin(), kAllFields.end()});

// Fields among `fields` that take a single value over `d`.
std::vector<Field> constant_fields(const Dataset& d, const std::vector<Field>& fields);

enum class DensityKind { Histogram, Kde };

struct DensitySeries {
    DensityKind kind = DensityKind::Histogram;
    Field field = Field::Rank;
    std::size_t n = 0;
    Eigen::VectorXd abscissae; // bin centres or grid points
    Eigen::VectorXd ordinates; // counts, densities, or KDE values
    double width = 0.0;        // equal bin width, or bandwidth
    std::vector<double> edges; // histogram only
    bool normalized = false;
};

inline constexpr std::size_t kDefaultBins = 20;
inline constexpr std::size_t kKdeGridPoints = 256;

// Either an equal-width bin count over [min, max] or explicit increasing edges.
using Bins = std::variant<std::size_t, std::vector<double>>;

// Bins are [e_i, e_{i+1}) except the last, which is closed on the right.
// Normalized ordinates are count / (n * bin width).
DensitySeries histogram(const Dataset& d, Field field, const Bins& bins = kDefaultBins, bool normalized = false);

// Gaussian KDE on a 256-point grid over [min - 3h, max + 3h]. Without a
// bandwidth, Silverman's rule 1.06 * sd * n^(-1/5) is used.
DensitySeries kde(const Dataset& d, Field field, std::optional<double> bandwidth = std::nullopt);

struct CohortSide {
    std::string tag;
    SummaryTable summary;
    MomentMatrix covariance;
    MomentMatrix correlation;                // over non-constant fields only
    std::vector<Field> correlation_omitted;  // constant within this cohort
};

struct CohortReport {
    std::array<CohortSide, 2> sides;
};

CohortReport cohort_report(const Dataset& d, const std::pair<std::string, std::string>& tags,
                           const CohortTable& table,
                           const std::vector<Field>& fields = {kAllFields.begin(), kAllFields.end()});

} // namespace facstat::eda
