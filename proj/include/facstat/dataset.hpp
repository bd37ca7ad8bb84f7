#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace facstat {

// Numeric fields of a faculty record, in table order.
enum class Field { Rank, Publications, Citations, HIndex, AmsFellow, PhdYear };

inline constexpr std::array<Field, 6> kAllFields = {
    Field::Rank, Field::Publications, Field::Citations,
    Field::HIndex, Field::AmsFellow, Field::PhdYear,
};

// Machine key as used in the CSV header ("h_index").
std::string_view field_key(Field f);
// Short column label ("Publications").
std::string_view field_label(Field f);
// Long row label ("Number of Publications").
std::string_view field_long_label(Field f);
// Accepts CSV keys and the aliases pubs, cites, h, ams, year.
Field parse_field(std::string_view name);

struct FacultyRecord {
    std::string last_name;
    std::string first_name;
    int rank = 1;
    std::int64_t publications = 0;
    std::int64_t citations = 0;
    std::int64_t h_index = 0;
    int ams_fellow = 0;
    int phd_year = 2000;
    std::string university;

    [[nodiscard]] double value(Field f) const;

    friend bool operator==(const FacultyRecord&, const FacultyRecord&) = default;
};

// Throws SchemaError naming the first violated field.
void validate(const FacultyRecord& r);

class Dataset {
public:
    Dataset() = default;
    // Validates every record.
    explicit Dataset(std::vector<FacultyRecord> records, std::string source = {});

    [[nodiscard]] std::size_t size() const noexcept { return records_.size(); }
    [[nodiscard]] bool empty() const noexcept { return records_.empty(); }
    [[nodiscard]] const std::vector<FacultyRecord>& records() const noexcept { return records_; }
    [[nodiscard]] const FacultyRecord& operator[](std::size_t i) const { return records_[i]; }
    [[nodiscard]] auto begin() const noexcept { return records_.begin(); }
    [[nodiscard]] auto end() const noexcept { return records_.end(); }
    [[nodiscard]] const std::string& source() const noexcept { return source_; }

    [[nodiscard]] Eigen::VectorXd column(Field f) const;
    // Universities in first-appearance order.
    [[nodiscard]] std::vector<std::string> universities() const;

private:
    std::vector<FacultyRecord> records_;
    std::string source_;
};

inline constexpr std::string_view kCsvHeader =
    "last_name,first_name,rank,publications,citations,h_index,ams_fellow,phd_year,university";

Dataset load_csv(const std::filesystem::path& path);
Dataset parse_csv(std::istream& in, std::string source);
void write_csv(const Dataset& d, std::ostream& out);

// ---------------------------------------------------------------------------
// Predictor combinations and design matrices

inline constexpr int kComboCount = 14;

struct PredictorCombo {
    int index = 0;
    std::vector<Field> columns;

    // Index 1..14 in the fixed enumeration: singles, pairs, triples, all four.
    static PredictorCombo from_index(int index);
};

struct FeatureStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd deviation;
};

struct DesignMatrix {
    Eigen::MatrixXd features;
    Eigen::VectorXd target;
    std::vector<Field> columns;
    Field target_field = Field::Rank;
    int combo_index = 0; // 0 when built from an ad-hoc column list
    bool standardized = false;

    [[nodiscard]] Eigen::Index rows() const { return features.rows(); }
    [[nodiscard]] Eigen::Index cols() const { return features.cols(); }
};

DesignMatrix select_features(const Dataset& d, const PredictorCombo& combo, Field target);
DesignMatrix select_columns(const Dataset& d, const std::vector<Field>& columns, Field target);

// Z-scores each column with the sample (n-1) deviation. When `stats` is given it
// is applied as-is; otherwise it is fitted on `m`.
std::pair<DesignMatrix, FeatureStats> standardize(const DesignMatrix& m,
                                                  const std::optional<FeatureStats>& stats = {});
DesignMatrix destandardize(const DesignMatrix& m, const FeatureStats& stats);

// ---------------------------------------------------------------------------
// Splitting and filtering

// Train size is round-half-up(train_fraction * m). Both parts keep input order.
std::pair<Dataset, Dataset> train_test_split(const Dataset& d, double train_fraction, std::uint64_t seed);
std::pair<Dataset, Dataset> train_test_split_count(const Dataset& d, std::size_t train_count,
                                                   std::uint64_t seed);

// Tag -> set of university labels.
class CohortTable {
public:
    // public/private split of the ten surveyed departments.
    static CohortTable builtin();

    void set(const std::string& tag, std::set<std::string> universities);
    [[nodiscard]] bool contains(const std::string& tag) const { return tags_.count(tag) != 0; }
    // Throws DataError for unknown tags.
    [[nodiscard]] const std::set<std::string>& members(const std::string& tag) const;
    [[nodiscard]] std::vector<std::string> tags() const;

private:
    std::map<std::string, std::set<std::string>> tags_;
};

Dataset filter_university(const Dataset& d, const std::string& university);
Dataset filter_cohort(const Dataset& d, const std::string& tag, const CohortTable& table);

// ---------------------------------------------------------------------------
// Synthetic fixtures

struct FieldMoments {
    double mean = 0.0;
    double deviation = 0.0;
};

struct InstitutionProfile {
    std::string university;
    double weight = 1.0; // share of generated records
    std::array<FieldMoments, kAllFields.size()> fields{};
};

struct SynthProfile {
    std::vector<InstitutionProfile> institutions;

    // Per-department means and deviations of the surveyed data.
    static SynthProfile builtin();
};

// Truncated-normal draws rounded to integers, clipped to record invariants.
// Records are grouped by institution in profile order.
Dataset synth_generate(const SynthProfile& profile, std::size_t m, std::uint64_t seed);

} // namespace facstat
