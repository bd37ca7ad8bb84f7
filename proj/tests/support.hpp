#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "facstat/dataset.hpp"

namespace support {

inline facstat::FacultyRecord rec(int rank, long pubs, long cites, long h, int ams, int year,
                                  std::string univ = "Rutgers", std::string last = "Doe")
{
    facstat::FacultyRecord r;
    r.last_name = std::move(last);
    r.first_name = "X";
    r.rank = rank;
    r.publications = pubs;
    r.citations = cites;
    r.h_index = h;
    r.ams_fellow = ams;
    r.phd_year = year;
    r.university = std::move(univ);
    return r;
}

inline const std::vector<std::string> kUniversities = {"Berkeley", "Dartmouth", "Florida", "Harvard", "MIT",
                                                       "Michigan", "Penn",     "Princeton", "Rutgers", "UCLA"};

// Valid records with independent uniform fields.
inline facstat::Dataset random_dataset(std::mt19937_64& rng, std::size_t m)
{
    std::uniform_int_distribution<int> rank(1, 4), ams(0, 1), year(1950, 2020), univ(0, 9);
    std::uniform_int_distribution<long> pubs(0, 300), cites(0, 20000);
    std::vector<facstat::FacultyRecord> out;
    for (std::size_t i = 0; i < m; ++i) {
        const long p = pubs(rng);
        std::uniform_int_distribution<long> h(0, p);
        out.push_back(rec(rank(rng), p, cites(rng), h(rng), ams(rng), year(rng),
                          kUniversities[static_cast<std::size_t>(univ(rng))], "R" + std::to_string(i)));
    }
    return facstat::Dataset(std::move(out), "random");
}

inline bool close_rel(double a, double b, double rel, double abs_floor = 1e-12)
{
    return std::abs(a - b) <= std::max(rel * std::max(std::abs(a), std::abs(b)), abs_floor);
}

// ---------------------------------------------------------------------------
// Brute-force oracles: two-pass textbook formulas in long double.

namespace oracle {

inline long double mean(const std::vector<double>& v)
{
    long double s = 0;
    for (double x : v) {
        s += x;
    }
    return s / static_cast<long double>(v.size());
}

inline long double cov(const std::vector<double>& a, const std::vector<double>& b)
{
    if (a.size() < 2) {
        return 0;
    }
    const long double ma = mean(a), mb = mean(b);
    long double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += (a[i] - ma) * (b[i] - mb);
    }
    return s / static_cast<long double>(a.size() - 1);
}

inline long double sd(const std::vector<double>& v) { return std::sqrt(cov(v, v)); }

inline long double corr(const std::vector<double>& a, const std::vector<double>& b)
{
    return cov(a, b) / (sd(a) * sd(b));
}

// Rank 1 + (n-1) p / 100, interpolating between the neighbouring order statistics.
inline long double percentile(std::vector<double> v, double p)
{
    std::sort(v.begin(), v.end());
    const long double r = 1.0L + (static_cast<long double>(v.size()) - 1.0L) * p / 100.0L;
    const auto lo = static_cast<std::size_t>(std::floor(r));
    const auto hi = static_cast<std::size_t>(std::ceil(r));
    const long double frac = r - static_cast<long double>(lo);
    return v[lo - 1] + frac * (static_cast<long double>(v[hi - 1]) - v[lo - 1]);
}

} // namespace oracle

inline std::vector<double> column(const facstat::Dataset& d, facstat::Field f)
{
    std::vector<double> out;
    for (const auto& r : d) {
        out.push_back(r.value(f));
    }
    return out;
}

// Two isotropic Gaussian blobs of 20 points each, unit spread, centres
// (10, -5) and (10, 5): separation 10x the spread, both clear of the origin
// so the angular distance separates them too. Rows 0..19 are the first blob.
inline Eigen::MatrixXd blobs(std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0, 1);
    Eigen::MatrixXd x(40, 2);
    for (int i = 0; i < 40; ++i) {
        x(i, 0) = 10.0 + n(rng);
        x(i, 1) = (i < 20 ? -5.0 : 5.0) + n(rng);
    }
    return x;
}

namespace oracle {

// Lloyd iterations from the given labels until nothing moves (Euclidean,
// ties to the lower label).
inline std::vector<int> nearest_centroid(const Eigen::MatrixXd& x, std::vector<int> labels, int k)
{
    for (int pass = 0; pass < 1000; ++pass) {
        Eigen::MatrixXd c = Eigen::MatrixXd::Zero(k, x.cols());
        std::vector<int> count(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            c.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
            ++count[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
        }
        for (int l = 0; l < k; ++l) {
            c.row(l) /= std::max(count[static_cast<std::size_t>(l)], 1);
        }
        bool moved = false;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            Eigen::Index best = 0;
            (c.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
            moved |= labels[static_cast<std::size_t>(i)] != static_cast<int>(best);
            labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
        }
        if (!moved) {
            break;
        }
    }
    return labels;
}

} // namespace oracle

// Fraction of agreeing labels for two 2-cluster partitions, up to relabeling.
inline double agreement2(const std::vector<int>& a, const std::vector<int>& b)
{
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        same += a[i] == b[i];
    }
    return double(std::max(same, a.size() - same)) / double(a.size());
}

// Cells of the first pipe table after the line `heading`, header row first,
// separator row dropped. Empty when the heading is missing.
inline std::vector<std::vector<std::string>> markdown_table(const std::string& text, const std::string& heading)
{
    std::istringstream in(text);
    std::string line;
    bool found = false;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (!found) {
            found = line == heading;
            continue;
        }
        if (line.rfind("|", 0) != 0) {
            if (!rows.empty()) {
                break;
            }
            continue;
        }
        std::vector<std::string> cells;
        std::size_t start = 1;
        for (std::size_t bar = line.find('|', start); bar != std::string::npos; bar = line.find('|', start)) {
            std::string cell = line.substr(start, bar - start);
            const auto b = cell.find_first_not_of(' ');
            const auto e = cell.find_last_not_of(' ');
            cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
            start = bar + 1;
        }
        if (!cells.empty() && cells[0] == "---") {
            continue;
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

// Column/row layout of the all-records mean table, the all-records percentile
// table, the Year-of-PhD percentiles by university and the covariance matrix.
// Returns an empty string when all match, else the first mismatch.
inline std::string check_table_shapes(const std::string& md)
{
    const std::vector<std::string> long_labels = {"Rank", "Number of Publications", "Number of Citations",
                                                  "h-index", "AMS Fellowship", "Year of PhD"};
    const std::vector<std::string> short_labels = {"Rank", "Publications", "Citations",
                                                   "h-index", "AMS Fellowship", "Year of PhD"};
    const std::vector<std::string> probes = {"5", "10", "25", "50", "75", "90", "95"};

    auto check = [&](const std::string& heading, std::vector<std::string> header,
                     const std::vector<std::string>& labels) -> std::string {
        const auto t = markdown_table(md, heading);
        if (t.empty()) {
            return "missing table under '" + heading + "'";
        }
        if (t[0] != header) {
            return "header mismatch under '" + heading + "'";
        }
        if (t.size() != labels.size() + 1) {
            return "row count mismatch under '" + heading + "'";
        }
        for (std::size_t r = 0; r < labels.size(); ++r) {
            const auto& row = t[r + 1];
            if (row.size() != header.size() || row[0] != labels[r]) {
                return "row '" + labels[r] + "' mismatch under '" + heading + "'";
            }
            for (std::size_t c = 1; c < row.size(); ++c) {
                std::size_t used = 0;
                try {
                    std::stod(row[c], &used);
                } catch (...) {
                    used = 0;
                }
                if (used == 0 || used != row[c].size()) {
                    return "non-numeric cell '" + row[c] + "' under '" + heading + "'";
                }
            }
        }
        return "";
    };

    std::vector<std::string> pct_header = {"Field"};
    pct_header.insert(pct_header.end(), probes.begin(), probes.end());
    std::vector<std::string> univ_header = {"University"};
    univ_header.insert(univ_header.end(), probes.begin(), probes.end());
    std::vector<std::string> cov_header = {""};
    cov_header.insert(cov_header.end(), short_labels.begin(), short_labels.end());

    for (const auto& err : {
             check("## Means and standard deviations", {"Field", "Mean", "Standard Deviation"}, long_labels),
             check("## Percentiles", pct_header, short_labels),
             check("## Percentiles by university: Year of PhD", univ_header, kUniversities),
             check("## Covariance matrix", cov_header, short_labels),
         }) {
        if (!err.empty()) {
            return err;
        }
    }
    return "";
}

} // namespace support
