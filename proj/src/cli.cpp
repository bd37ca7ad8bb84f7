#include "facstat/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "facstat/config.hpp"
#include "facstat/dataset.hpp"
#include "facstat/eda.hpp"
#include "facstat/errors.hpp"
#include "facstat/nltv.hpp"
#include "facstat/regress.hpp"
#include "facstat/report.hpp"
#include "facstat/softmax.hpp"

namespace facstat::cli {

namespace {

using report::Json;

const std::vector<std::string> kFormats = {"json", "csv", "md"};

struct CommonOptions {
    std::string input;
    std::vector<std::string> universities;
    std::string cohort;
    std::uint64_t seed = 0;
    std::string format;
    std::string output;
    std::string config;
};

void add_common(CLI::App* sub, CommonOptions& c, bool needs_input, const std::string& default_format)
{
    c.format = default_format;
    if (needs_input) {
        sub->add_option("--input,-i", c.input, "Faculty CSV file")->required();
        sub->add_option("--university", c.universities, "Keep only these universities (repeatable)");
        sub->add_option("--cohort", c.cohort, "Keep only universities in this cohort tag");
    }
    sub->add_option("--seed", c.seed, "Seed for every random stream")->capture_default_str();
    sub->add_option("--format", c.format, "Output format")->check(CLI::IsMember(kFormats))->capture_default_str();
    sub->add_option("--output,-o", c.output, "Write the report here instead of stdout");
    sub->add_option("--config", c.config,
                    std::string("Config file (default: $") + kConfigEnvVar + ")");
}

std::string resolved_config_path(const CommonOptions& c)
{
    if (!c.config.empty()) {
        return c.config;
    }
    if (const char* env = std::getenv(kConfigEnvVar); env != nullptr && *env != '\0') {
        return env;
    }
    return {};
}

Config load_effective_config(const std::string& path)
{
    return path.empty() ? Config{} : load_config(path);
}

Dataset load_filtered(const CommonOptions& c, const Config& cfg)
{
    Dataset d = load_csv(c.input);
    if (!c.universities.empty()) {
        std::vector<FacultyRecord> kept;
        for (const auto& u : c.universities) {
            const bool present = std::any_of(d.begin(), d.end(), [&](const auto& r) { return r.university == u; });
            if (!present) {
                throw DataError("no records for university '" + u + "'");
            }
        }
        for (const auto& r : d) {
            if (std::find(c.universities.begin(), c.universities.end(), r.university) != c.universities.end()) {
                kept.push_back(r);
            }
        }
        d = Dataset(std::move(kept), d.source());
    }
    if (!c.cohort.empty()) {
        d = filter_cohort(d, c.cohort, cfg.cohorts);
    }
    if (d.empty()) {
        throw DataError("no records remain after filtering");
    }
    return d;
}

Json make_manifest(const std::string& subcommand, const CommonOptions& c, const std::string& config_path,
                   Json parameters)
{
    Json m;
    m["tool"] = std::string(kToolName);
    m["version"] = std::string(kToolVersion);
    m["subcommand"] = subcommand;
    m["input"] = c.input;
    m["input_digest"] = c.input.empty() ? std::string() : file_digest(c.input);
    m["config"] = config_path;
    m["config_digest"] = config_path.empty() ? std::string() : file_digest(config_path);
    m["filters"] = {{"university", c.universities}, {"cohort", c.cohort}};
    m["seed"] = c.seed;
    m["format"] = c.format;
    m["parameters"] = std::move(parameters);
    return m;
}

std::string with_manifest(const std::string& format, const Json& manifest, Json body, const std::string& md,
                          const std::string& csv)
{
    if (format == "json") {
        body["manifest"] = manifest;
        return body.dump(2) + "\n";
    }
    if (format == "md") {
        return "<!-- manifest: " + manifest.dump() + " -->\n" + md;
    }
    return "# manifest: " + manifest.dump() + "\n" + csv;
}

void write_text_file(const std::string& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw Error("cannot open '" + path + "' for writing");
    }
    f << text;
    if (!f) {
        throw Error("failed writing '" + path + "'");
    }
}

void emit(const CommonOptions& c, const std::string& text, std::ostream& out)
{
    if (c.output.empty()) {
        out << text;
    } else {
        write_text_file(c.output, text);
    }
}

std::vector<Field> parse_fields(const std::vector<std::string>& names, std::vector<Field> fallback)
{
    if (names.empty()) {
        return fallback;
    }
    std::vector<Field> out;
    for (const auto& n : names) {
        Field f{};
        try {
            f = parse_field(n);
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
        if (std::find(out.begin(), out.end(), f) != out.end()) {
            throw UsageError("field '" + n + "' listed twice");
        }
        out.push_back(f);
    }
    return out;
}

Json field_keys(const std::vector<Field>& fields)
{
    Json out = Json::array();
    for (Field f : fields) {
        out.push_back(std::string(field_key(f)));
    }
    return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep)
{
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        out += (i ? std::string(sep) : std::string()) + parts[i];
    }
    return out;
}

std::vector<std::string> field_names(const std::vector<Field>& fields)
{
    std::vector<std::string> out;
    for (Field f : fields) {
        out.emplace_back(field_key(f));
    }
    return out;
}

// ---------------------------------------------------------------------------
// eda

struct EdaOptions {
    CommonOptions common;
    std::string by = "all";
    std::vector<std::string> cohorts;
    std::vector<std::string> fields;
    std::vector<double> probes;
    std::size_t bins = eda::kDefaultBins;
    double bandwidth = 0.0;
    std::string series_dir;
};

void register_eda(CLI::App& app, EdaOptions& o)
{
    auto* sub = app.add_subcommand("eda", "Summary, percentile, moment and density tables");
    add_common(sub, o.common, true, "json");
    sub->add_option("--by", o.by, "Grouping for per-group tables")
        ->check(CLI::IsMember({"all", "university", "cohort"}))
        ->capture_default_str();
    sub->add_option("--cohorts", o.cohorts, "Two cohort tags for a paired report, e.g. public,private")
        ->delimiter(',');
    sub->add_option("--fields", o.fields, "Fields to tabulate (default all six)")->delimiter(',');
    sub->add_option("--probes", o.probes, "Percentile probes (default 5,10,25,50,75,90,95)")->delimiter(',');
    sub->add_option("--bins", o.bins, "Histogram bin count")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--bandwidth", o.bandwidth, "KDE bandwidth (0: Silverman's rule)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    sub->add_option("--series-dir", o.series_dir, "Also write each density series as x,y CSV into this directory")
        ->check(CLI::ExistingDirectory);
}

std::string cmd_eda(const EdaOptions& o)
{
    const auto& c = o.common;
    const std::string cfg_path = resolved_config_path(c);
    const Config cfg = load_effective_config(cfg_path);

    std::string by = o.by;
    if (!o.cohorts.empty()) {
        if (o.cohorts.size() != 2) {
            throw UsageError("--cohorts takes exactly two tags");
        }
        if (by == "all") {
            by = "cohort";
        }
        if (by != "cohort") {
            throw UsageError("--cohorts conflicts with --by " + by);
        }
    }
    const auto fields = parse_fields(o.fields, {kAllFields.begin(), kAllFields.end()});
    std::vector<double> probes = o.probes.empty() ? eda::kDefaultProbes : o.probes;
    std::sort(probes.begin(), probes.end());
    probes.erase(std::unique(probes.begin(), probes.end()), probes.end());

    Json params = {{"by", by},           {"cohorts", o.cohorts}, {"fields", field_keys(fields)},
                   {"probes", probes},   {"bins", o.bins},       {"bandwidth", o.bandwidth}};
    const Json manifest = make_manifest("eda", c, cfg_path, params);

    const Dataset d = load_filtered(c, cfg);
    eda::Grouping grouping;
    if (by == "university") {
        grouping = eda::Grouping::by_university();
    } else if (by == "cohort") {
        grouping = eda::Grouping::by_cohort(o.cohorts.empty() ? cfg.cohorts.tags() : o.cohorts, cfg.cohorts);
    }

    const auto overall = eda::summary(d, eda::Grouping::all(), fields);
    const auto pct = eda::percentiles(d, probes, fields);
    const auto cov = eda::covariance(d, fields);
    const auto constant = eda::constant_fields(d, fields);
    std::vector<Field> varying;
    for (Field f : fields) {
        if (std::find(constant.begin(), constant.end(), f) == constant.end()) {
            varying.push_back(f);
        }
    }
    std::optional<eda::MomentMatrix> corr;
    if (!varying.empty()) {
        corr = eda::correlation(d, varying);
    }

    Json body;
    report::CsvRows csv;
    std::ostringstream md;
    const std::string first_header = by == "cohort" ? "Cohort" : "University";

    body["records"] = d.size();
    body["summary"] = report::to_json(overall);
    body["percentiles"] = report::to_json(pct);
    body["covariance"] = report::to_json(cov);
    body["correlation"] = corr ? report::to_json(*corr) : Json(nullptr);
    body["correlation_omitted"] = field_keys(constant);
    report::csv_summary(csv, "summary", overall);
    report::csv_percentiles(csv, "percentiles", pct);
    report::csv_moments(csv, "covariance", cov);
    if (corr) {
        report::csv_moments(csv, "correlation", *corr);
    }

    md << "# Descriptive statistics\n\n";
    md << "Records: " << d.size() << "\n\n";
    md << "## Means and standard deviations\n\n" << report::markdown_field_summary(overall.rows.front(), fields);

    if (by != "all") {
        const auto grouped = eda::summary(d, grouping, fields);
        body["group_summary"] = report::to_json(grouped);
        report::csv_summary(csv, "group_summary", grouped);
        md << "\n## Means by " << (by == "cohort" ? "cohort" : "university") << "\n\n"
           << report::markdown_group_summary(grouped, false);
        md << "\n## Standard deviations by " << (by == "cohort" ? "cohort" : "university") << "\n\n"
           << report::markdown_group_summary(grouped, true);
    }

    md << "\n## Percentiles\n\n" << report::markdown_percentiles(pct, "Field");
    if (by != "all") {
        Json per_field = Json::object();
        for (Field f : fields) {
            const auto t = eda::percentiles_by_group(d, f, grouping, probes);
            per_field[std::string(field_key(f))] = report::to_json(t);
            report::csv_percentiles(csv, "group_percentiles." + std::string(field_key(f)), t);
            md << "\n## Percentiles by " << (by == "cohort" ? "cohort" : "university") << ": "
               << field_long_label(f) << "\n\n"
               << report::markdown_percentiles(t, first_header);
        }
        body["group_percentiles"] = per_field;
    }

    md << "\n## Covariance matrix\n\n" << report::markdown_moments(cov);
    md << "\n## Correlation matrix\n\n";
    if (corr) {
        md << report::markdown_moments(*corr);
    }
    if (!constant.empty()) {
        md << (corr ? "\n" : "") << "Omitted from the correlation matrix (constant): "
           << join(field_names(constant), ", ") << "\n";
    }

    Json hist = Json::object();
    Json kdes = Json::object();
    for (Field f : fields) {
        const std::string key(field_key(f));
        const auto h = eda::histogram(d, f, o.bins, true);
        hist[key] = report::to_json(h);
        report::csv_density(csv, "histogram." + key, h);
        if (!o.series_dir.empty()) {
            write_text_file(o.series_dir + "/histogram_" + key + ".csv", report::density_series_csv(h));
        }
        const bool is_constant = std::find(constant.begin(), constant.end(), f) != constant.end();
        if (d.size() >= 2 && !is_constant) {
            const auto k = eda::kde(d, f, o.bandwidth > 0.0 ? std::optional<double>(o.bandwidth) : std::nullopt);
            kdes[key] = report::to_json(k);
            report::csv_density(csv, "kde." + key, k);
            if (!o.series_dir.empty()) {
                write_text_file(o.series_dir + "/kde_" + key + ".csv", report::density_series_csv(k));
            }
        } else {
            kdes[key] = nullptr;
        }
    }
    body["histograms"] = hist;
    body["kde"] = kdes;
    md << "\nNormalized histogram and kernel density series are included in the json and csv formats.\n";

    if (o.cohorts.size() == 2) {
        const auto pair = eda::cohort_report(d, {o.cohorts[0], o.cohorts[1]}, cfg.cohorts, fields);
        Json sides = Json::array();
        for (const auto& side : pair.sides) {
            sides.push_back(report::to_json(side));
            const std::string prefix = "cohort." + side.tag;
            report::csv_summary(csv, prefix + ".summary", side.summary);
            report::csv_moments(csv, prefix + ".covariance", side.covariance);
            report::csv_moments(csv, prefix + ".correlation", side.correlation);
            md << "\n## Cohort " << side.tag << " (n=" << side.summary.rows.front().n << ")\n\n"
               << report::markdown_field_summary(side.summary.rows.front(), side.summary.fields);
            md << "\n### Covariance matrix (" << side.tag << ")\n\n" << report::markdown_moments(side.covariance);
            md << "\n### Correlation matrix (" << side.tag << ")\n\n" << report::markdown_moments(side.correlation);
            if (!side.correlation_omitted.empty()) {
                md << "\nOmitted from the correlation matrix (constant): "
                   << join(field_names(side.correlation_omitted), ", ") << "\n";
            }
        }
        body["cohort_report"] = sides;
    }

    return with_manifest(c.format, manifest, std::move(body), md.str(), csv.str());
}

// ---------------------------------------------------------------------------
// regress

struct RegressOptions {
    CommonOptions common;
    std::string target = "rank";
    double train_fraction = 0.7;
    std::vector<int> combos;
    std::vector<std::string> methods;
    std::vector<std::string> sets;
    bool pooled = false;
};

void register_regress(CLI::App& app, RegressOptions& o)
{
    auto* sub = app.add_subcommand("regress", "AR/ADD grids over methods and predictor combinations");
    add_common(sub, o.common, true, "json");
    sub->add_option("--target", o.target, "Response to classify")
        ->check(CLI::IsMember({"rank", "ams", "ams_fellow"}))
        ->capture_default_str();
    sub->add_option("--train-fraction", o.train_fraction, "Training share of each split")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    sub->add_option("--combo", o.combos, "Predictor combination index 1..14 (repeatable)")
        ->check(CLI::Range(1, kComboCount))
        ->delimiter(',');
    sub->add_option("--method", o.methods, "Method tag: LnR LgR PoR RR LR ENR ByR (repeatable)")->delimiter(',');
    sub->add_option("--set", o.sets, "Hyperparameter override METHOD.key=value (repeatable)");
    sub->add_flag("--pooled", o.pooled, "One sweep over all selected records instead of one per university");
}

regress::Method parse_method_flag(const std::string& s)
{
    try {
        return regress::parse_method(s);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
}

std::string cell_label(const regress::CellKey& k)
{
    return "(" + std::string(regress::method_tag(k.second)) + ", " + std::to_string(k.first) + ")";
}

std::string cmd_regress(const RegressOptions& o)
{
    const auto& c = o.common;
    const std::string cfg_path = resolved_config_path(c);
    const Config cfg = load_effective_config(cfg_path);
    const Field target = o.target == "rank" ? Field::Rank : Field::AmsFellow;

    regress::SweepOptions sweep_opts;
    sweep_opts.train_fraction = o.train_fraction;
    if (!o.combos.empty()) {
        sweep_opts.combos = o.combos;
        std::sort(sweep_opts.combos.begin(), sweep_opts.combos.end());
        sweep_opts.combos.erase(std::unique(sweep_opts.combos.begin(), sweep_opts.combos.end()),
                                sweep_opts.combos.end());
    }
    if (!o.methods.empty()) {
        std::vector<regress::Method> chosen;
        for (const auto& m : o.methods) {
            chosen.push_back(parse_method_flag(m));
        }
        sweep_opts.methods.clear();
        for (auto m : regress::kAllMethods) {
            if (std::find(chosen.begin(), chosen.end(), m) != chosen.end()) {
                sweep_opts.methods.push_back(m);
            }
        }
    }
    std::vector<std::string> canonical_sets;
    for (const auto& s : o.sets) {
        const auto dot = s.find('.');
        const auto eq = s.find('=');
        if (dot == std::string::npos || eq == std::string::npos || eq < dot + 2 || eq + 1 == s.size()) {
            throw UsageError("--set expects METHOD.key=value, got '" + s + "'");
        }
        const auto method = parse_method_flag(s.substr(0, dot));
        const std::string key = s.substr(dot + 1, eq - dot - 1);
        const auto defaults = regress::default_hyperparameters(method);
        if (defaults.count(key) == 0 && !(method == regress::Method::RR && key == "alpha")) {
            throw UsageError("method " + std::string(regress::method_tag(method)) + " has no hyperparameter '" +
                             key + "'");
        }
        double value = 0.0;
        try {
            std::size_t used = 0;
            value = std::stod(s.substr(eq + 1), &used);
            if (used != s.size() - eq - 1) {
                throw std::invalid_argument("trailing text");
            }
        } catch (const std::exception&) {
            throw UsageError("--set value is not a number in '" + s + "'");
        }
        sweep_opts.overrides[method][key] = value;
        canonical_sets.push_back(std::string(regress::method_tag(method)) + "." + key + "=" + report::number(value));
    }
    std::sort(canonical_sets.begin(), canonical_sets.end());

    Json method_tags = Json::array();
    for (auto m : sweep_opts.methods) {
        method_tags.push_back(std::string(regress::method_tag(m)));
    }
    Json params = {{"target", o.target == "rank" ? "rank" : "ams"},
                   {"train-fraction", o.train_fraction},
                   {"combo", sweep_opts.combos},
                   {"method", method_tags},
                   {"set", canonical_sets},
                   {"pooled", o.pooled}};
    const Json manifest = make_manifest("regress", c, cfg_path, params);

    const Dataset d = load_filtered(c, cfg);
    std::vector<std::pair<std::string, Dataset>> groups;
    if (o.pooled) {
        groups.emplace_back("All", d);
    } else {
        groups = eda::partition(d, eda::Grouping::by_university());
    }

    Json body;
    Json sweeps = Json::array();
    Json hyper = Json::object();
    report::CsvRows csv;
    std::ostringstream md;

    md << "# Regression classification sweep\n\n";
    md << "Target: " << (target == Field::Rank ? "rank" : "AMS fellowship") << ". Seed: " << c.seed
       << ". Train fraction: " << report::number(o.train_fraction) << ".\n\n";
    md << "Predictor combinations: 1 publications, 2 citations, 3 h-index, 4 year of PhD, 5 1+2, 6 1+3, 7 1+4, "
          "8 2+3, 9 2+4, 10 3+4, 11 1+2+3, 12 1+2+4, 13 1+3+4, 14 1+2+3+4.\n\n";
    md << "## Hyperparameters\n\n";
    for (auto m : sweep_opts.methods) {
        auto h = regress::default_hyperparameters(m);
        if (auto it = sweep_opts.overrides.find(m); it != sweep_opts.overrides.end()) {
            for (const auto& [k, v] : it->second) {
                h[k] = v;
            }
        }
        hyper[std::string(regress::method_tag(m))] = h;
        std::vector<std::string> parts;
        for (const auto& [k, v] : h) {
            parts.push_back(k + "=" + report::number(v));
        }
        md << "- " << regress::method_tag(m) << " (" << regress::method_name(m) << "): " << join(parts, ", ")
           << (m == regress::Method::RR && h.count("alpha") == 0 ? ", alpha by 5-fold CV" : "") << "\n";
    }
    body["hyperparameters"] = hyper;

    for (const auto& [name, group] : groups) {
        const auto result = regress::sweep(group, target, c.seed, sweep_opts);
        sweeps.push_back({{"group", name}, {"records", group.size()}, {"result", report::to_json(result)}});
        report::csv_sweep(csv, name, result);

        md << "\n## " << name << " (n=" << group.size() << ", train " << result.train_size << ", test "
           << result.test_size << ")\n\n";
        md << "### AR\n\n" << report::markdown_sweep_grid(result, true);
        md << "\n### ADD\n\n" << report::markdown_sweep_grid(result, false) << "\n";
        auto best_line = [&](const char* what, const std::optional<double>& v,
                             const std::vector<regress::CellKey>& cells) {
            md << "Best " << what << ": ";
            if (!v) {
                md << "none (no cell produced scores)\n";
                return;
            }
            std::vector<std::string> labels;
            for (const auto& k : cells) {
                labels.push_back(cell_label(k));
            }
            md << report::fixed(*v) << " at " << join(labels, ", ") << "\n";
        };
        best_line("AR", result.best_ar, result.best_by_ar);
        md << "\n";
        best_line("ADD", result.best_add, result.best_by_add);
        bool header = false;
        for (const auto& [key, cell] : result.grid) {
            if (cell.failure.empty()) {
                continue;
            }
            if (!header) {
                md << "\nFailed cells:\n\n";
                header = true;
            }
            md << "- " << cell_label(key) << ": " << cell.failure << "\n";
        }
    }
    body["sweeps"] = sweeps;
    return with_manifest(c.format, manifest, std::move(body), md.str(), csv.str());
}

// ---------------------------------------------------------------------------
// softmax

const std::vector<Field> kSoftmaxDefaultFeatures = {Field::Publications, Field::Citations, Field::HIndex,
                                                    Field::AmsFellow, Field::PhdYear};

struct SoftmaxOptions {
    CommonOptions common;
    std::size_t train = 45;
    std::size_t epochs = 200;
    double lr = 0.01;
    double reg = 1e-3;
    std::vector<std::string> features;
    std::string model_out;
    std::string loss_out;
};

void register_softmax(CLI::App& app, SoftmaxOptions& o)
{
    auto* sub = app.add_subcommand("softmax", "Softmax linear classifier for rank");
    add_common(sub, o.common, true, "json");
    sub->add_option("--train", o.train, "Leading records used for training; the rest are tested")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--epochs", o.epochs, "Full-batch gradient steps")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--lr", o.lr, "Learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--reg", o.reg, "L2 regularization strength")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    sub->add_option("--features", o.features,
                    "Predictors (default publications,citations,h_index,ams_fellow,phd_year)")
        ->delimiter(',');
    sub->add_option("--model-out", o.model_out, "Also write the model JSON here");
    sub->add_option("--loss-out", o.loss_out, "Also write the loss curve CSV here");
}

std::string cmd_softmax(const SoftmaxOptions& o)
{
    const auto& c = o.common;
    const std::string cfg_path = resolved_config_path(c);
    const Config cfg = load_effective_config(cfg_path);
    const auto features = parse_fields(o.features, kSoftmaxDefaultFeatures);
    if (std::find(features.begin(), features.end(), Field::Rank) != features.end()) {
        throw UsageError("rank is the response and cannot be a feature");
    }

    Json params = {{"train", o.train},
                   {"epochs", o.epochs},
                   {"lr", o.lr},
                   {"reg", o.reg},
                   {"features", field_keys(features)}};
    const Json manifest = make_manifest("softmax", c, cfg_path, params);

    const Dataset d = load_filtered(c, cfg);
    if (o.train >= d.size()) {
        throw DataError("--train " + std::to_string(o.train) + " leaves no test records out of " +
                        std::to_string(d.size()));
    }
    std::vector<FacultyRecord> head(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(o.train));
    std::vector<FacultyRecord> tail(d.begin() + static_cast<std::ptrdiff_t>(o.train), d.end());
    const Dataset train_set(std::move(head), d.source());
    const Dataset test_set(std::move(tail), d.source());

    const auto [train_m, stats] = standardize(select_columns(train_set, features, Field::Rank));
    const auto [test_m, unused] = standardize(select_columns(test_set, features, Field::Rank), stats);
    (void)unused;

    softmax::TrainConfig tc;
    tc.epochs = o.epochs;
    tc.learning_rate = o.lr;
    tc.reg_strength = o.reg;
    tc.seed = c.seed;
    tc.class_count = 4;
    auto [model, curve] = softmax::train(train_m, tc);
    model.feature_stats = stats;

    const auto train_pred = softmax::predict(model, train_m);
    const auto test_pred = softmax::predict(model, test_m);
    std::size_t train_correct = 0;
    for (std::size_t i = 0; i < train_pred.size(); ++i) {
        train_correct += train_pred[i] == train_set[i].rank ? 1 : 0;
    }
    std::size_t correct = 0;
    Json predictions = Json::array();
    report::CsvRows csv;
    report::MarkdownTable table({"Last name", "First name", "University", "Rank", "Predicted"});
    for (std::size_t i = 0; i < test_pred.size(); ++i) {
        const auto& r = test_set[i];
        correct += test_pred[i] == r.rank ? 1 : 0;
        predictions.push_back({{"last_name", r.last_name},
                               {"first_name", r.first_name},
                               {"university", r.university},
                               {"rank", r.rank},
                               {"predicted", test_pred[i]}});
        const std::string key = r.last_name + " " + r.first_name;
        csv.add("predictions", key, "rank", static_cast<double>(r.rank));
        csv.add("predictions", key, "predicted", static_cast<double>(test_pred[i]));
        table.add_row({r.last_name, r.first_name, r.university, std::to_string(r.rank), std::to_string(test_pred[i])});
    }
    const std::string accuracy_line = std::to_string(correct) + "/" + std::to_string(test_pred.size()) + " correct";

    const Json model_json = report::to_json(model);
    Json body = {{"train_size", train_set.size()},
                 {"test_size", test_set.size()},
                 {"model", model_json},
                 {"loss", curve},
                 {"predictions", predictions},
                 {"training_accuracy", static_cast<double>(train_correct) / static_cast<double>(train_pred.size())},
                 {"accuracy",
                  {{"correct", correct},
                   {"total", test_pred.size()},
                   {"fraction", static_cast<double>(correct) / static_cast<double>(test_pred.size())},
                   {"line", accuracy_line}}}};

    csv.add("accuracy", "test", "correct", static_cast<double>(correct));
    csv.add("accuracy", "test", "total", static_cast<double>(test_pred.size()));
    csv.add("loss", "final", "value", curve.back());
    for (Eigen::Index r = 0; r < model.weights.rows(); ++r) {
        const std::string cls = "class " + std::to_string(r + 1);
        for (Eigen::Index k = 0; k < model.weights.cols(); ++k) {
            csv.add("weights", cls, field_key(features[static_cast<std::size_t>(k)]), model.weights(r, k));
        }
        csv.add("weights", cls, "bias", model.biases(r));
    }

    std::ostringstream md;
    md << "# Softmax classifier\n\n";
    md << "Features: " << join(field_names(features), ", ") << ". Train " << train_set.size() << ", test "
       << test_set.size() << ". Epochs " << o.epochs << ", learning rate " << report::number(o.lr)
       << ", regularization " << report::number(o.reg) << ".\n\n";
    md << "Loss: " << report::fixed(curve.front(), 6) << " after epoch 1, " << report::fixed(curve.back(), 6)
       << " after epoch " << curve.size() << ".\n\n";
    md << "Training accuracy: " << train_correct << "/" << train_pred.size() << "\n\n";
    md << accuracy_line << "\n\n";
    md << table.str();

    if (!o.model_out.empty()) {
        write_text_file(o.model_out, model_json.dump(2) + "\n");
    }
    if (!o.loss_out.empty()) {
        write_text_file(o.loss_out, report::loss_curve_csv(curve));
    }
    return with_manifest(c.format, manifest, std::move(body), md.str(), csv.str());
}

// ---------------------------------------------------------------------------
// cluster

const std::vector<Field> kClusterDefaultFeatures = {Field::Publications, Field::Citations, Field::HIndex,
                                                    Field::AmsFellow, Field::PhdYear};

struct ClusterOptions {
    CommonOptions common;
    int clusters = 3;
    std::string params = "cosine";
    std::vector<std::string> features;
    std::size_t inner_max = 5000;
    std::size_t outer_max = 100;
    double inner_tol = 1e-6;
    std::string assignments_out;
};

void register_cluster(CLI::App& app, ClusterOptions& o)
{
    auto* sub = app.add_subcommand("cluster", "Nonlocal total-variation clustering");
    add_common(sub, o.common, true, "json");
    sub->add_option("--clusters", o.clusters, "Number of clusters")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--params", o.params,
                    "cosine, mixed, or custom(alpha_euclid,alpha_cosine,lambda)")
        ->capture_default_str();
    sub->add_option("--features", o.features,
                    "Clustering features (default publications,citations,h_index,ams_fellow,phd_year)")
        ->delimiter(',');
    sub->add_option("--inner-max", o.inner_max, "Primal-dual iteration cap")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--outer-max", o.outer_max, "Threshold/centroid pass cap")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--inner-tol", o.inner_tol, "Relative change that stops the inner loop")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--assignments-out", o.assignments_out, "Also write the assignments CSV here");
}

// Returns the parameters and the canonical spelling of the flag.
std::pair<nltv::NltvParams, std::string> parse_params_flag(const std::string& text)
{
    if (text == "cosine" || text == "mixed") {
        return {nltv::NltvParams::preset(text), text};
    }
    const std::string prefix = "custom(";
    if (text.rfind(prefix, 0) != 0 || text.back() != ')') {
        throw UsageError("--params must be cosine, mixed, or custom(alpha_euclid,alpha_cosine,lambda)");
    }
    std::vector<double> values;
    std::stringstream inner(text.substr(prefix.size(), text.size() - prefix.size() - 1));
    std::string part;
    while (std::getline(inner, part, ',')) {
        try {
            std::size_t used = 0;
            values.push_back(std::stod(part, &used));
            if (part.find_first_not_of(" \t", used) != std::string::npos) {
                throw std::invalid_argument("trailing text");
            }
        } catch (const std::exception&) {
            throw UsageError("custom parameter '" + part + "' is not a number");
        }
    }
    if (values.size() != 3 || values[0] < 0.0 || values[1] < 0.0 || values[0] + values[1] <= 0.0 ||
        values[2] <= 0.0) {
        throw UsageError("custom(...) needs three numbers: nonnegative weights, not both zero, and positive lambda");
    }
    nltv::NltvParams p;
    p.alpha_euclid = values[0];
    p.alpha_cosine = values[1];
    p.lambda = values[2];
    return {p, "custom(" + report::number(values[0]) + "," + report::number(values[1]) + "," +
                   report::number(values[2]) + ")"};
}

std::string cmd_cluster(const ClusterOptions& o)
{
    const auto& c = o.common;
    const std::string cfg_path = resolved_config_path(c);
    const Config cfg = load_effective_config(cfg_path);
    auto [params, params_name] = parse_params_flag(o.params);
    params.n_clusters = o.clusters;
    params.inner_max = o.inner_max;
    params.outer_max = o.outer_max;
    params.inner_tol = o.inner_tol;
    params.seed = c.seed;
    const auto requested = parse_fields(o.features, kClusterDefaultFeatures);

    Json manifest_params = {{"clusters", o.clusters},   {"params", params_name},     {"features", field_keys(requested)},
                            {"inner-max", o.inner_max}, {"outer-max", o.outer_max}, {"inner-tol", o.inner_tol}};
    const Json manifest = make_manifest("cluster", c, cfg_path, manifest_params);

    const Dataset d = load_filtered(c, cfg);
    const auto constant = eda::constant_fields(d, requested);
    std::vector<Field> features;
    for (Field f : requested) {
        if (std::find(constant.begin(), constant.end(), f) == constant.end()) {
            features.push_back(f);
        }
    }
    if (features.empty()) {
        throw DataError("every clustering feature is constant over the selected records");
    }
    const auto [x, stats] = standardize(select_columns(d, features, Field::Rank));
    (void)stats;
    const auto result = nltv::cluster(x.features, params);
    const auto rep = nltv::make_report(d, result.assignments, params.n_clusters);

    Json assignments = Json::array();
    std::string assignments_csv = "last_name,first_name,university,cluster\n";
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& r = d[i];
        const int label = result.assignments[i] + 1;
        assignments.push_back(
            {{"last_name", r.last_name}, {"first_name", r.first_name}, {"university", r.university}, {"cluster", label}});
        assignments_csv += report::csv_escape(r.last_name) + ',' + report::csv_escape(r.first_name) + ',' +
                           report::csv_escape(r.university) + ',' + std::to_string(label) + '\n';
    }
    std::vector<int> initial;
    for (int p : result.initial_points) {
        initial.push_back(p + 1);
    }

    Json body = {{"records", d.size()},
                 {"features", field_keys(features)},
                 {"dropped_constant", field_keys(constant)},
                 {"params",
                  {{"name", params_name},
                   {"alpha_euclid", params.alpha_euclid},
                   {"alpha_cosine", params.alpha_cosine},
                   {"lambda", params.lambda},
                   {"clusters", params.n_clusters}}},
                 {"report", report::to_json(rep)},
                 {"assignments", assignments},
                 {"diagnostics",
                  {{"initial_points", initial},
                   {"initial_energy", result.initial_energy},
                   {"energies", result.energies},
                   {"outer_iterations", result.outer_iterations},
                   {"inner_iterations", result.inner_iterations},
                   {"converged", result.converged}}}};

    report::CsvRows csv;
    report::csv_cluster(csv, "clusters", rep);
    for (std::size_t i = 0; i < d.size(); ++i) {
        csv.add("assignments", std::to_string(i + 1), "cluster", static_cast<double>(result.assignments[i] + 1));
    }

    std::string scope = c.universities.empty() ? std::string("All records") : join(c.universities, ", ");
    if (!c.cohort.empty()) {
        scope += " (cohort " + c.cohort + ")";
    }
    std::string preset_label = params_name;
    if (params_name == "cosine" || params_name == "mixed") {
        preset_label[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(preset_label[0])));
    }
    std::ostringstream md;
    md << "# NLTV clustering\n\n";
    md << "**" << scope << "**, *Parameters:* " << preset_label << ".\n\n";
    md << "Features: " << join(field_names(features), ", ") << " (z-scored).";
    if (!constant.empty()) {
        md << " Dropped as constant: " << join(field_names(constant), ", ") << ".";
    }
    md << "\n\n" << report::markdown_cluster(rep);
    md << "\n## Clusters against rank\n\n" << report::markdown_crosstab(rep);
    md << "\nOuter passes: " << result.outer_iterations << ", inner iterations: " << result.inner_iterations
       << ", assignments stable: " << (result.converged ? "yes" : "no") << ".\n";

    if (!o.assignments_out.empty()) {
        write_text_file(o.assignments_out, assignments_csv);
    }
    return with_manifest(c.format, manifest, std::move(body), md.str(), csv.str());
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
    CommonOptions common;
    std::size_t records = 444;
};

void register_synth(CLI::App& app, SynthOptions& o)
{
    auto* sub = app.add_subcommand("synth", "Generate a synthetic faculty CSV from per-university moments");
    add_common(sub, o.common, false, "csv");
    sub->add_option("--records,-m", o.records, "Number of records")->check(CLI::PositiveNumber)->capture_default_str();
}

std::string cmd_synth(const SynthOptions& o)
{
    const auto& c = o.common;
    const std::string cfg_path = resolved_config_path(c);
    const Config cfg = load_effective_config(cfg_path);
    const Json manifest = make_manifest("synth", c, cfg_path, {{"records", o.records}});
    const Dataset d = synth_generate(cfg.profile, o.records, c.seed);

    std::ostringstream csv;
    write_csv(d, csv);

    Json records = Json::array();
    report::MarkdownTable table({"Last name", "First name", "Rank", "Publications", "Citations", "h-index",
                                 "AMS Fellowship", "Year of PhD", "University"});
    for (const auto& r : d) {
        records.push_back({{"last_name", r.last_name},
                           {"first_name", r.first_name},
                           {"rank", r.rank},
                           {"publications", r.publications},
                           {"citations", r.citations},
                           {"h_index", r.h_index},
                           {"ams_fellow", r.ams_fellow},
                           {"phd_year", r.phd_year},
                           {"university", r.university}});
        table.add_row({r.last_name, r.first_name, std::to_string(r.rank), std::to_string(r.publications),
                       std::to_string(r.citations), std::to_string(r.h_index), std::to_string(r.ams_fellow),
                       std::to_string(r.phd_year), r.university});
    }
    Json body = {{"source", d.source()}, {"records", records}};
    const std::string md = "# Synthetic faculty records\n\n" + table.str();
    return with_manifest(c.format, manifest, std::move(body), md, csv.str());
}

// ---------------------------------------------------------------------------
// replay

struct ReplayOptions {
    std::string report;
    std::string output;
    bool check = false;
};

void register_replay(CLI::App& app, ReplayOptions& o)
{
    auto* sub = app.add_subcommand("replay", "Rerun the command recorded in a report's manifest");
    sub->add_option("report", o.report, "Report file written by facstat")->required();
    sub->add_option("--output,-o", o.output, "Write the regenerated report here instead of stdout");
    sub->add_flag("--check", o.check, "Compare the regenerated report with the original byte for byte");
}

std::string read_file(const std::string& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw Error("cannot open '" + path + "'");
    }
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth);

int cmd_replay(const ReplayOptions& o, std::ostream& out, std::ostream& err, int depth)
{
    if (depth > 0) {
        throw UsageError("a replay manifest cannot itself be a replay");
    }
    const std::string original = read_file(o.report);
    const Json manifest = extract_manifest(original);
    if (manifest.value("tool", std::string()) != kToolName) {
        throw DataError("manifest was not written by " + std::string(kToolName));
    }
    if (manifest.value("version", std::string()) != kToolVersion) {
        throw DataError("manifest version " + manifest.value("version", std::string()) + " differs from " +
                        std::string(kToolVersion));
    }
    for (const auto& [path_key, digest_key] : {std::pair{"input", "input_digest"}, std::pair{"config", "config_digest"}}) {
        const std::string path = manifest.value(path_key, std::string());
        if (!path.empty() && file_digest(path) != manifest.value(digest_key, std::string())) {
            throw DataError(std::string(path_key) + " file '" + path + "' changed since the report was written");
        }
    }

    std::ostringstream regenerated;
    std::ostringstream inner_err;
    const int code = dispatch(manifest_arguments(manifest), regenerated, inner_err, depth + 1);
    err << inner_err.str();
    if (code != kExitOk) {
        return code;
    }
    if (o.check) {
        if (regenerated.str() == original) {
            out << "reproduced " << o.report << " byte-for-byte\n";
            return kExitOk;
        }
        err << "error: regenerated report differs from " << o.report << "\n";
        return kExitRuntime;
    }
    if (o.output.empty()) {
        out << regenerated.str();
    } else {
        write_text_file(o.output, regenerated.str());
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth)
{
    CLI::App app{"Faculty record statistics, regression sweeps, softmax and NLTV clustering",
                 std::string(kToolName)};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    EdaOptions eda_o;
    RegressOptions regress_o;
    SoftmaxOptions softmax_o;
    ClusterOptions cluster_o;
    SynthOptions synth_o;
    ReplayOptions replay_o;
    register_eda(app, eda_o);
    register_regress(app, regress_o);
    register_softmax(app, softmax_o);
    register_cluster(app, cluster_o);
    register_synth(app, synth_o);
    register_replay(app, replay_o);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        err << "run '" << kToolName << " --help' for usage\n";
        return kExitUsage;
    }

    try {
        const auto* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        std::string text;
        const CommonOptions* common = nullptr;
        if (name == "eda") {
            text = cmd_eda(eda_o);
            common = &eda_o.common;
        } else if (name == "regress") {
            text = cmd_regress(regress_o);
            common = &regress_o.common;
        } else if (name == "softmax") {
            text = cmd_softmax(softmax_o);
            common = &softmax_o.common;
        } else if (name == "cluster") {
            text = cmd_cluster(cluster_o);
            common = &cluster_o.common;
        } else if (name == "synth") {
            text = cmd_synth(synth_o);
            common = &synth_o.common;
        } else {
            return cmd_replay(replay_o, out, err, depth);
        }
        emit(*common, text, out);
        return kExitOk;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    return dispatch(args, out, err, 0);
}

nlohmann::json extract_manifest(const std::string& report)
{
    const auto first = report.find_first_not_of(" \t\r\n");
    try {
        if (first != std::string::npos && report[first] == '{') {
            const Json j = Json::parse(report);
            if (!j.contains("manifest")) {
                throw DataError("json report has no manifest");
            }
            return j.at("manifest");
        }
        std::istringstream in(report);
        std::string line;
        const std::string md_prefix = "<!-- manifest: ";
        const std::string md_suffix = " -->";
        const std::string csv_prefix = "# manifest: ";
        while (std::getline(in, line)) {
            if (line.rfind(md_prefix, 0) == 0 && line.size() >= md_prefix.size() + md_suffix.size() &&
                line.compare(line.size() - md_suffix.size(), md_suffix.size(), md_suffix) == 0) {
                return Json::parse(line.substr(md_prefix.size(), line.size() - md_prefix.size() - md_suffix.size()));
            }
            if (line.rfind(csv_prefix, 0) == 0) {
                return Json::parse(line.substr(csv_prefix.size()));
            }
        }
    } catch (const Json::exception& e) {
        throw DataError(std::string("malformed manifest: ") + e.what());
    }
    throw DataError("report has no embedded manifest");
}

std::vector<std::string> manifest_arguments(const nlohmann::json& manifest)
{
    auto scalar = [](const Json& v) -> std::string {
        if (v.is_string()) {
            return v.get<std::string>();
        }
        if (v.is_number_float()) {
            return report::number(v.get<double>());
        }
        return v.dump();
    };
    try {
        std::vector<std::string> args{manifest.at("subcommand").get<std::string>()};
        auto push = [&](const std::string& flag, const Json& v) {
            if (v.is_null()) {
                return;
            }
            if (v.is_boolean()) {
                if (v.get<bool>()) {
                    args.push_back("--" + flag);
                }
                return;
            }
            if (v.is_array()) {
                for (const auto& e : v) {
                    args.push_back("--" + flag);
                    args.push_back(scalar(e));
                }
                return;
            }
            if (v.is_string() && v.get<std::string>().empty()) {
                return;
            }
            args.push_back("--" + flag);
            args.push_back(scalar(v));
        };
        push("input", manifest.at("input"));
        push("university", manifest.at("filters").at("university"));
        push("cohort", manifest.at("filters").at("cohort"));
        push("seed", manifest.at("seed"));
        push("format", manifest.at("format"));
        push("config", manifest.at("config"));
        for (const auto& [k, v] : manifest.at("parameters").items()) {
            push(k, v);
        }
        return args;
    } catch (const Json::exception& e) {
        throw DataError(std::string("incomplete manifest: ") + e.what());
    }
}

std::string file_digest(const std::string& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw Error("cannot open '" + path + "'");
    }
    std::uint64_t h = 14695981039346656037ULL;
    char buf[4096];
    while (f.read(buf, sizeof buf) || f.gcount() > 0) {
        for (std::streamsize i = 0; i < f.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    std::ostringstream os;
    os << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

} // namespace facstat::cli
