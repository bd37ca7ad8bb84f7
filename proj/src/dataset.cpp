#include "facstat/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "facstat/errors.hpp"
#include "facstat/rng.hpp"

namespace facstat {

namespace {

constexpr std::size_t kCsvColumns = 9;

std::string trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

// Splits one CSV line. Supports double-quoted cells with "" escapes.
std::vector<std::string> split_csv_line(const std::string& line, std::size_t lineno)
{
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(trim(cell));
            cell.clear();
        } else {
            cell.push_back(c);
        }
    }
    if (quoted) {
        throw ParseError(lineno, "unterminated quoted field");
    }
    cells.push_back(trim(cell));
    return cells;
}

template <typename T>
T parse_integer(const std::string& text, std::string_view field, std::size_t lineno)
{
    T value{};
    const auto* begin = text.data();
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
        throw ParseError(lineno, "field '" + std::string(field) + "' is not an integer: '" + text + "'");
    }
    return value;
}

std::string csv_escape(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += "\"\"";
        } else {
            out.push_back(c);
        }
    }
    out.push_back('"');
    return out;
}

double round_half_up(double x) { return std::floor(x + 0.5); }

} // namespace

// ---------------------------------------------------------------------------

std::string_view field_key(Field f)
{
    switch (f) {
    case Field::Rank: return "rank";
    case Field::Publications: return "publications";
    case Field::Citations: return "citations";
    case Field::HIndex: return "h_index";
    case Field::AmsFellow: return "ams_fellow";
    case Field::PhdYear: return "phd_year";
    }
    return "?";
}

std::string_view field_label(Field f)
{
    switch (f) {
    case Field::Rank: return "Rank";
    case Field::Publications: return "Publications";
    case Field::Citations: return "Citations";
    case Field::HIndex: return "h-index";
    case Field::AmsFellow: return "AMS Fellowship";
    case Field::PhdYear: return "Year of PhD";
    }
    return "?";
}

std::string_view field_long_label(Field f)
{
    switch (f) {
    case Field::Publications: return "Number of Publications";
    case Field::Citations: return "Number of Citations";
    default: return field_label(f);
    }
}

Field parse_field(std::string_view name)
{
    for (Field f : kAllFields) {
        if (name == field_key(f)) {
            return f;
        }
    }
    if (name == "pubs") return Field::Publications;
    if (name == "cites") return Field::Citations;
    if (name == "h" || name == "h-index" || name == "hindex") return Field::HIndex;
    if (name == "ams") return Field::AmsFellow;
    if (name == "year" || name == "phd") return Field::PhdYear;
    throw DataError("unknown field '" + std::string(name) + "'");
}

double FacultyRecord::value(Field f) const
{
    switch (f) {
    case Field::Rank: return rank;
    case Field::Publications: return static_cast<double>(publications);
    case Field::Citations: return static_cast<double>(citations);
    case Field::HIndex: return static_cast<double>(h_index);
    case Field::AmsFellow: return ams_fellow;
    case Field::PhdYear: return phd_year;
    }
    return 0.0;
}

void validate(const FacultyRecord& r)
{
    if (r.rank < 1 || r.rank > 4) {
        throw SchemaError("rank", std::to_string(r.rank), "must be in {1,2,3,4}");
    }
    if (r.publications < 0) {
        throw SchemaError("publications", std::to_string(r.publications), "must be nonnegative");
    }
    if (r.citations < 0) {
        throw SchemaError("citations", std::to_string(r.citations), "must be nonnegative");
    }
    if (r.h_index < 0) {
        throw SchemaError("h_index", std::to_string(r.h_index), "must be nonnegative");
    }
    if (r.h_index > r.publications) {
        throw SchemaError("h_index", std::to_string(r.h_index), "must not exceed publications");
    }
    if (r.ams_fellow != 0 && r.ams_fellow != 1) {
        throw SchemaError("ams_fellow", std::to_string(r.ams_fellow), "must be 0 or 1");
    }
    if (r.phd_year < 1900 || r.phd_year > 2100) {
        throw SchemaError("phd_year", std::to_string(r.phd_year), "must be within 1900..2100");
    }
}

// ---------------------------------------------------------------------------

Dataset::Dataset(std::vector<FacultyRecord> records, std::string source)
    : records_(std::move(records)), source_(std::move(source))
{
    for (const auto& r : records_) {
        validate(r);
    }
}

Eigen::VectorXd Dataset::column(Field f) const
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(records_.size()));
    for (std::size_t i = 0; i < records_.size(); ++i) {
        v(static_cast<Eigen::Index>(i)) = records_[i].value(f);
    }
    return v;
}

std::vector<std::string> Dataset::universities() const
{
    std::vector<std::string> out;
    for (const auto& r : records_) {
        if (std::find(out.begin(), out.end(), r.university) == out.end()) {
            out.push_back(r.university);
        }
    }
    return out;
}

Dataset parse_csv(std::istream& in, std::string source)
{
    std::string line;
    std::size_t lineno = 0;
    // Leading '#' lines are comments (generated fixtures carry their manifest there).
    do {
        if (!std::getline(in, line)) {
            throw ParseError(lineno + 1, "missing header");
        }
        ++lineno;
        if (lineno == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) {
            line.erase(0, 3); // UTF-8 BOM
        }
    } while (!line.empty() && line[0] == '#');
    if (trim(line) != kCsvHeader) {
        throw ParseError(lineno, "header must be exactly '" + std::string(kCsvHeader) + "'");
    }

    std::vector<FacultyRecord> records;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) {
            continue;
        }
        auto cells = split_csv_line(line, lineno);
        if (cells.size() != kCsvColumns) {
            throw ParseError(lineno, "expected " + std::to_string(kCsvColumns) + " fields, found " +
                                         std::to_string(cells.size()));
        }
        static constexpr std::array<std::string_view, kCsvColumns> names = {
            "last_name", "first_name", "rank", "publications", "citations",
            "h_index", "ams_fellow", "phd_year", "university"};
        for (std::size_t c = 0; c < kCsvColumns; ++c) {
            if (cells[c].empty()) {
                throw ParseError(lineno, "field '" + std::string(names[c]) + "' is empty");
            }
        }
        FacultyRecord r;
        r.last_name = cells[0];
        r.first_name = cells[1];
        r.rank = parse_integer<int>(cells[2], names[2], lineno);
        r.publications = parse_integer<std::int64_t>(cells[3], names[3], lineno);
        r.citations = parse_integer<std::int64_t>(cells[4], names[4], lineno);
        r.h_index = parse_integer<std::int64_t>(cells[5], names[5], lineno);
        r.ams_fellow = parse_integer<int>(cells[6], names[6], lineno);
        r.phd_year = parse_integer<int>(cells[7], names[7], lineno);
        r.university = cells[8];
        try {
            validate(r);
        } catch (const SchemaError& e) {
            throw SchemaError(e.field(), e.value(), e.why() + " (line " + std::to_string(lineno) + ")");
        }
        records.push_back(std::move(r));
    }
    return Dataset(std::move(records), std::move(source));
}

Dataset load_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open '" + path.string() + "'");
    }
    return parse_csv(in, path.string());
}

void write_csv(const Dataset& d, std::ostream& out)
{
    out << kCsvHeader << '\n';
    for (const auto& r : d) {
        out << csv_escape(r.last_name) << ',' << csv_escape(r.first_name) << ',' << r.rank << ','
            << r.publications << ',' << r.citations << ',' << r.h_index << ',' << r.ams_fellow << ','
            << r.phd_year << ',' << csv_escape(r.university) << '\n';
    }
}

// ---------------------------------------------------------------------------

PredictorCombo PredictorCombo::from_index(int index)
{
    using F = Field;
    static const std::array<std::vector<Field>, kComboCount> table = {{
        {F::Publications},
        {F::Citations},
        {F::HIndex},
        {F::PhdYear},
        {F::Publications, F::Citations},
        {F::Publications, F::HIndex},
        {F::Publications, F::PhdYear},
        {F::Citations, F::HIndex},
        {F::Citations, F::PhdYear},
        {F::HIndex, F::PhdYear},
        {F::Publications, F::Citations, F::HIndex},
        {F::Publications, F::Citations, F::PhdYear},
        {F::Publications, F::HIndex, F::PhdYear},
        {F::Publications, F::Citations, F::HIndex, F::PhdYear},
    }};
    if (index < 1 || index > kComboCount) {
        throw DataError("predictor combination index must be in 1..14, got " + std::to_string(index));
    }
    return PredictorCombo{index, table[static_cast<std::size_t>(index - 1)]};
}

DesignMatrix select_columns(const Dataset& d, const std::vector<Field>& columns, Field target)
{
    if (d.empty()) {
        throw DataError("cannot build a design matrix from an empty dataset");
    }
    if (columns.empty()) {
        throw DataError("at least one predictor column is required");
    }
    if (std::find(columns.begin(), columns.end(), target) != columns.end()) {
        throw DataError("target '" + std::string(field_key(target)) + "' is also a predictor");
    }
    const auto m = static_cast<Eigen::Index>(d.size());
    DesignMatrix out;
    out.features.resize(m, static_cast<Eigen::Index>(columns.size()));
    out.target.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto& r = d[static_cast<std::size_t>(i)];
        for (std::size_t c = 0; c < columns.size(); ++c) {
            out.features(i, static_cast<Eigen::Index>(c)) = r.value(columns[c]);
        }
        out.target(i) = r.value(target);
    }
    out.columns = columns;
    out.target_field = target;
    return out;
}

DesignMatrix select_features(const Dataset& d, const PredictorCombo& combo, Field target)
{
    if (target != Field::Rank && target != Field::AmsFellow) {
        throw DataError("target must be rank or ams_fellow");
    }
    auto out = select_columns(d, combo.columns, target);
    out.combo_index = combo.index;
    return out;
}

std::pair<DesignMatrix, FeatureStats> standardize(const DesignMatrix& m, const std::optional<FeatureStats>& stats)
{
    FeatureStats applied;
    const auto k = m.cols();
    if (stats) {
        if (stats->mean.size() != k || stats->deviation.size() != k) {
            throw DataError("feature stats width does not match design matrix");
        }
        applied = *stats;
    } else {
        if (m.rows() < 2) {
            throw DataError("standardization needs at least two rows");
        }
        applied.mean = m.features.colwise().mean().transpose();
        applied.deviation.resize(k);
        for (Eigen::Index c = 0; c < k; ++c) {
            const double ss = (m.features.col(c).array() - applied.mean(c)).square().sum();
            applied.deviation(c) = std::sqrt(ss / static_cast<double>(m.rows() - 1));
            if (!(applied.deviation(c) > 0.0)) {
                throw DataError("column '" + std::string(field_key(m.columns[static_cast<std::size_t>(c)])) +
                                "' has zero deviation and cannot be standardized");
            }
        }
    }
    DesignMatrix out = m;
    for (Eigen::Index c = 0; c < k; ++c) {
        out.features.col(c) = (m.features.col(c).array() - applied.mean(c)) / applied.deviation(c);
    }
    out.standardized = true;
    return {std::move(out), std::move(applied)};
}

DesignMatrix destandardize(const DesignMatrix& m, const FeatureStats& stats)
{
    DesignMatrix out = m;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        out.features.col(c) = m.features.col(c).array() * stats.deviation(c) + stats.mean(c);
    }
    out.standardized = false;
    return out;
}

// ---------------------------------------------------------------------------

std::pair<Dataset, Dataset> train_test_split_count(const Dataset& d, std::size_t train_count, std::uint64_t seed)
{
    if (d.size() < 2) {
        throw DataError("splitting needs at least two records");
    }
    if (train_count == 0 || train_count >= d.size()) {
        throw DataError("train size " + std::to_string(train_count) + " leaves an empty part of " +
                        std::to_string(d.size()) + " records");
    }
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = make_rng(seed, RngStream::Split);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<bool> in_train(d.size(), false);
    for (std::size_t i = 0; i < train_count; ++i) {
        in_train[order[i]] = true;
    }
    std::vector<FacultyRecord> train;
    std::vector<FacultyRecord> test;
    for (std::size_t i = 0; i < d.size(); ++i) {
        (in_train[i] ? train : test).push_back(d[i]);
    }
    return {Dataset(std::move(train), d.source()), Dataset(std::move(test), d.source())};
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& d, double train_fraction, std::uint64_t seed)
{
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw DataError("train fraction must lie strictly between 0 and 1");
    }
    if (d.size() < 2) {
        throw DataError("splitting needs at least two records");
    }
    auto count = static_cast<std::size_t>(round_half_up(train_fraction * static_cast<double>(d.size())));
    count = std::clamp<std::size_t>(count, 1, d.size() - 1);
    return train_test_split_count(d, count, seed);
}

CohortTable CohortTable::builtin()
{
    CohortTable t;
    t.set("public", {"Berkeley", "Florida", "Michigan", "Rutgers", "UCLA"});
    t.set("private", {"Dartmouth", "Harvard", "MIT", "Penn", "Princeton"});
    return t;
}

void CohortTable::set(const std::string& tag, std::set<std::string> universities)
{
    tags_[tag] = std::move(universities);
}

const std::set<std::string>& CohortTable::members(const std::string& tag) const
{
    auto it = tags_.find(tag);
    if (it == tags_.end()) {
        throw DataError("unknown cohort tag '" + tag + "'");
    }
    return it->second;
}

std::vector<std::string> CohortTable::tags() const
{
    std::vector<std::string> out;
    for (const auto& [tag, _] : tags_) {
        out.push_back(tag);
    }
    return out;
}

Dataset filter_university(const Dataset& d, const std::string& university)
{
    std::vector<FacultyRecord> out;
    std::copy_if(d.begin(), d.end(), std::back_inserter(out),
                 [&](const FacultyRecord& r) { return r.university == university; });
    return Dataset(std::move(out), d.source());
}

Dataset filter_cohort(const Dataset& d, const std::string& tag, const CohortTable& table)
{
    const auto& members = table.members(tag);
    std::vector<FacultyRecord> out;
    std::copy_if(d.begin(), d.end(), std::back_inserter(out),
                 [&](const FacultyRecord& r) { return members.count(r.university) != 0; });
    return Dataset(std::move(out), d.source());
}

// ---------------------------------------------------------------------------

SynthProfile SynthProfile::builtin()
{
    struct Row {
        const char* name;
        double n;
        std::array<double, 6> mean;
        std::array<double, 6> dev;
    };
    static constexpr std::array<Row, 10> rows = {{
        {"Berkeley", 58, {2.741, 64.914, 1579.017, 17.207, 0.362, 1992.776},
         {0.609, 48.665, 2174.119, 9.472, 0.485, 12.445}},
        {"Dartmouth", 23, {2.478, 36.783, 360.435, 8.652, 0.043, 1993.652},
         {0.790, 30.705, 399.379, 4.914, 0.209, 12.463}},
        {"Florida", 44, {2.500, 50.568, 416.477, 9.136, 0.045, 1992.091},
         {0.876, 37.279, 507.301, 5.129, 0.211, 15.397}},
        {"Harvard", 20, {3.000, 100.400, 2810.800, 24.500, 0.400, 1984.000},
         {0.000, 106.460, 3291.795, 11.390, 0.503, 12.645}},
        {"MIT", 53, {2.642, 63.491, 1460.094, 16.377, 0.415, 1995.717},
         {0.787, 59.765, 2083.936, 10.895, 0.497, 15.468}},
        {"Michigan", 62, {2.871, 54.258, 936.742, 12.887, 0.339, 1991.694},
         {0.614, 45.168, 1364.324, 7.378, 0.477, 13.745}},
        {"Penn", 25, {2.800, 53.960, 633.200, 12.320, 0.400, 1989.440},
         {0.645, 31.798, 465.785, 5.429, 0.500, 14.509}},
        {"Princeton", 42, {2.452, 73.524, 2123.738, 19.357, 0.452, 1995.071},
         {0.889, 90.541, 2465.433, 13.483, 0.504, 17.374}},
        {"Rutgers", 59, {3.153, 71.661, 1027.525, 14.271, 0.559, 1989.051},
         {0.979, 62.757, 1128.886, 7.850, 0.501, 15.234}},
        {"UCLA", 58, {2.776, 60.241, 1371.379, 14.517, 0.379, 1994.397},
         {0.531, 59.434, 2898.606, 10.881, 0.489, 13.124}},
    }};
    SynthProfile p;
    for (const auto& row : rows) {
        InstitutionProfile inst;
        inst.university = row.name;
        inst.weight = row.n;
        for (std::size_t f = 0; f < kAllFields.size(); ++f) {
            inst.fields[f] = FieldMoments{row.mean[f], row.dev[f]};
        }
        p.institutions.push_back(std::move(inst));
    }
    return p;
}

namespace {

struct Bounds {
    double lo;
    double hi;
};

// Continuous draw range whose rounding lands inside the record invariants.
Bounds draw_bounds(Field f)
{
    switch (f) {
    case Field::Rank: return {0.5, 4.5};
    case Field::AmsFellow: return {-0.5, 1.5};
    case Field::PhdYear: return {1899.5, 2100.5};
    default: return {-0.5, 1e18};
    }
}

double truncated_normal(std::mt19937_64& rng, FieldMoments moments, Bounds b)
{
    if (moments.deviation == 0.0) {
        return std::clamp(moments.mean, b.lo, b.hi);
    }
    std::normal_distribution<double> normal(moments.mean, moments.deviation);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const double x = normal(rng);
        if (x >= b.lo && x < b.hi) {
            return x;
        }
    }
    return std::clamp(moments.mean, b.lo, b.hi);
}

// Largest-remainder apportionment of m records by institution weight.
std::vector<std::size_t> apportion(const SynthProfile& profile, std::size_t m)
{
    const double total = std::accumulate(profile.institutions.begin(), profile.institutions.end(), 0.0,
                                         [](double acc, const auto& inst) { return acc + inst.weight; });
    if (!(total > 0.0)) {
        throw DataError("profile weights must sum to a positive value");
    }
    std::vector<std::size_t> counts(profile.institutions.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const double share = static_cast<double>(m) * profile.institutions[i].weight / total;
        counts[i] = static_cast<std::size_t>(std::floor(share));
        assigned += counts[i];
        remainders.emplace_back(share - std::floor(share), i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < m; ++k, ++assigned) {
        ++counts[remainders[k % remainders.size()].second];
    }
    return counts;
}

} // namespace

Dataset synth_generate(const SynthProfile& profile, std::size_t m, std::uint64_t seed)
{
    if (m == 0) {
        throw DataError("synthetic dataset size must be positive");
    }
    if (profile.institutions.empty()) {
        throw DataError("synthetic profile has no institutions");
    }
    for (const auto& inst : profile.institutions) {
        for (std::size_t f = 0; f < kAllFields.size(); ++f) {
            if (inst.fields[f].deviation < 0.0) {
                throw DataError("profile '" + inst.university + "' has a negative deviation for '" +
                                std::string(field_key(kAllFields[f])) + "'");
            }
        }
    }

    auto rng = make_rng(seed, RngStream::Generator);
    const auto counts = apportion(profile, m);
    std::vector<FacultyRecord> records;
    records.reserve(m);
    std::size_t serial = 0;
    for (std::size_t i = 0; i < profile.institutions.size(); ++i) {
        const auto& inst = profile.institutions[i];
        for (std::size_t j = 0; j < counts[i]; ++j) {
            std::array<double, 6> v{};
            for (std::size_t f = 0; f < kAllFields.size(); ++f) {
                const Field field = kAllFields[f];
                const auto moments = inst.fields[f];
                if (field == Field::AmsFellow && moments.deviation > 0.0) {
                    std::bernoulli_distribution coin(std::clamp(moments.mean, 0.0, 1.0));
                    v[f] = coin(rng) ? 1.0 : 0.0;
                } else {
                    const auto b = draw_bounds(field);
                    v[f] = round_half_up(truncated_normal(rng, moments, b));
                }
            }
            FacultyRecord r;
            r.last_name = "Synthetic";
            r.first_name = "R" + std::to_string(++serial);
            r.rank = static_cast<int>(std::clamp(v[0], 1.0, 4.0));
            r.publications = static_cast<std::int64_t>(std::max(v[1], 0.0));
            r.citations = static_cast<std::int64_t>(std::max(v[2], 0.0));
            r.h_index = std::min(static_cast<std::int64_t>(std::max(v[3], 0.0)), r.publications);
            r.ams_fellow = static_cast<int>(std::clamp(v[4], 0.0, 1.0));
            r.phd_year = static_cast<int>(std::clamp(v[5], 1900.0, 2100.0));
            r.university = inst.university;
            records.push_back(std::move(r));
        }
    }
    return Dataset(std::move(records), "synthetic(seed=" + std::to_string(seed) + ")");
}

} // namespace facstat
