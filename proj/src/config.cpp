#include "facstat/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "facstat/errors.hpp"

namespace facstat {

namespace {

std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

double parse_number(const std::string& s, std::size_t lineno)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) {
            throw std::invalid_argument(s);
        }
        return v;
    } catch (const std::exception&) {
        throw ParseError(lineno, "not a number: '" + s + "'");
    }
}

struct PartialInstitution {
    InstitutionProfile profile;
    std::array<bool, kAllFields.size()> seen{};
};

} // namespace

Config parse_config(std::istream& in)
{
    Config cfg;
    std::vector<PartialInstitution> institutions;
    std::string line;
    std::size_t lineno = 0;

    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line.front() == '#') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(lineno, "expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        if (key.rfind("cohort.", 0) == 0) {
            const std::string tag = key.substr(7);
            if (tag.empty()) {
                throw ParseError(lineno, "empty cohort tag");
            }
            const auto names = split_list(value);
            cfg.cohorts.set(tag, std::set<std::string>(names.begin(), names.end()));
        } else if (key.rfind("profile.", 0) == 0) {
            const std::string rest = key.substr(8);
            const auto dot = rest.rfind('.');
            if (dot == std::string::npos || dot == 0) {
                throw ParseError(lineno, "expected profile.<university>.<field>");
            }
            const std::string univ = rest.substr(0, dot);
            const std::string attr = rest.substr(dot + 1);
            auto it = std::find_if(institutions.begin(), institutions.end(),
                                   [&](const auto& p) { return p.profile.university == univ; });
            if (it == institutions.end()) {
                institutions.push_back({});
                institutions.back().profile.university = univ;
                it = std::prev(institutions.end());
            }
            if (attr == "weight") {
                it->profile.weight = parse_number(value, lineno);
            } else {
                Field f{};
                try {
                    f = parse_field(attr);
                } catch (const DataError&) {
                    throw ParseError(lineno, "unknown profile field '" + attr + "'");
                }
                const auto parts = split_list(value);
                if (parts.size() != 2) {
                    throw ParseError(lineno, "profile values are 'mean, deviation'");
                }
                const auto idx = static_cast<std::size_t>(f);
                it->profile.fields[idx] = {parse_number(parts[0], lineno), parse_number(parts[1], lineno)};
                it->seen[idx] = true;
            }
        } else {
            throw ParseError(lineno, "unknown key '" + key + "'");
        }
    }

    if (!institutions.empty()) {
        cfg.profile.institutions.clear();
        for (auto& p : institutions) {
            for (std::size_t f = 0; f < kAllFields.size(); ++f) {
                if (!p.seen[f]) {
                    throw ParseError(lineno, "profile '" + p.profile.university + "' is missing field '" +
                                                 std::string(field_key(kAllFields[f])) + "'");
                }
            }
            cfg.profile.institutions.push_back(std::move(p.profile));
        }
    }
    return cfg;
}

Config load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open config '" + path.string() + "'");
    }
    return parse_config(in);
}

} // namespace facstat
