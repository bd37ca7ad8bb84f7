#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "facstat/cli.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace facstat;
using nlohmann::json;

namespace {

const std::string kFixture = std::string(FACSTAT_FIXTURES) + "/faculty.csv";

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

Outcome invoke(const std::vector<std::string>& args)
{
    std::ostringstream out, err;
    Outcome o;
    o.code = cli::run(args, out, err);
    o.out = out.str();
    o.err = err.str();
    return o;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / "facstat_cli_tests";
    fs::create_directories(dir);
    return dir / name;
}

std::string drop_manifest(const std::string& md)
{
    std::istringstream in(md);
    std::string line, out;
    while (std::getline(in, line)) {
        if (line.rfind("<!-- manifest:", 0) != 0) {
            out += line + "\n";
        }
    }
    return out;
}

} // namespace

TEST_CASE("exit codes")
{
    CHECK(invoke({"--version"}).code == cli::kExitOk);
    CHECK(invoke({"--help"}).code == cli::kExitOk);
    CHECK(invoke({"eda", "--help"}).code == cli::kExitOk);
    CHECK(invoke({}).code == cli::kExitUsage);
    CHECK(invoke({"eda", "-i", kFixture, "--bogus"}).code == cli::kExitUsage);
    CHECK(invoke({"eda"}).code == cli::kExitUsage);
    CHECK(invoke({"eda", "-i", kFixture, "--format", "xml"}).code == cli::kExitUsage);
    CHECK(invoke({"softmax", "-i", kFixture, "--epochs", "0"}).code == cli::kExitUsage);
    CHECK(invoke({"cluster", "-i", kFixture, "--clusters", "0"}).code == cli::kExitUsage);
    CHECK(invoke({"regress", "-i", kFixture, "--target", "salary"}).code == cli::kExitUsage);

    const auto missing = invoke({"eda", "-i", "/nonexistent/records.csv"});
    CHECK(missing.code == cli::kExitRuntime);
    CHECK(missing.err.rfind("error:", 0) == 0);
    CHECK(invoke({"eda", "-i", kFixture, "--university", "Atlantis"}).code == cli::kExitRuntime);
}

TEST_CASE("eda markdown matches the golden snapshot")
{
    const auto r = invoke({"eda", "-i", kFixture, "--by", "university", "--format", "md"});
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("<!-- manifest: ", 0) == 0);
    CHECK(drop_manifest(r.out) == slurp(std::string(FACSTAT_FIXTURES) + "/eda_by_university.md"));
    CHECK(support::check_table_shapes(r.out) == "");
}

TEST_CASE("eda formats")
{
    const auto j = invoke({"eda", "-i", kFixture, "--format", "json"});
    REQUIRE(j.code == 0);
    const auto doc = json::parse(j.out);
    CHECK(doc.at("manifest").at("subcommand") == "eda");
    CHECK(doc.at("manifest").at("input_digest") == cli::file_digest(kFixture));

    const auto c = invoke({"eda", "-i", kFixture, "--format", "csv"});
    REQUIRE(c.code == 0);
    CHECK(c.out.rfind("# manifest: ", 0) == 0);
    CHECK(c.out.find("\ntable,row,column,value\n") != std::string::npos);

    const auto coh = invoke({"eda", "-i", kFixture, "--cohorts", "private,public", "--format", "md"});
    REQUIRE(coh.code == 0);
    CHECK(coh.out.find("Cohort") != std::string::npos);
    CHECK(invoke({"eda", "-i", kFixture, "--cohorts", "private"}).code == cli::kExitUsage);
}

TEST_CASE("softmax subcommand")
{
    const auto r = invoke({"softmax", "--input", kFixture, "--university", "Rutgers", "--train", "45", "--epochs",
                           "200", "--seed", "3", "--format", "md"});
    REQUIRE(r.code == 0);
    CHECK(std::regex_search(r.out, std::regex(R"(\n\d+/\d+ correct\n)")));

    const auto model = scratch("model.json");
    const auto loss = scratch("loss.csv");
    const auto j = invoke({"softmax", "-i", kFixture, "--university", "Rutgers", "--features", "pubs,cites,h",
                           "--format", "json", "--model-out", model.string(), "--loss-out", loss.string()});
    REQUIRE(j.code == 0);
    const auto doc = json::parse(j.out);
    CHECK(doc.at("model").at("weights").at(0).size() == 3);
    CHECK(json::parse(slurp(model)).at("columns").size() == 3);
    CHECK(slurp(loss).rfind("epoch,loss\n", 0) == 0);
    CHECK(doc.at("accuracy").at("line").get<std::string>().find("correct") != std::string::npos);
}

TEST_CASE("cluster subcommand")
{
    const auto assign = scratch("assign.csv");
    const auto r = invoke({"cluster", "-i", kFixture, "--university", "Harvard", "--params", "mixed", "--format", "md",
                           "--assignments-out", assign.string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("*Parameters:* Mixed.") != std::string::npos);
    const auto table = support::markdown_table(r.out, "**Harvard**, *Parameters:* Mixed.");
    REQUIRE(table.size() == 4);
    CHECK(table[0] == std::vector<std::string>{"", "Quantity", "Rank", "Publications", "Citations", "H-Index", "AMS",
                                               "Year of PhD"});
    CHECK(table[1][0] == "Centroid 1");
    const auto csv = slurp(assign);
    CHECK(csv.rfind("last_name,first_name,university,cluster\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 21);
    CHECK(invoke({"cluster", "-i", kFixture, "--params", "custom(1,2,3)", "--university", "Penn"}).code == 0);
    CHECK(invoke({"cluster", "-i", kFixture, "--params", "sparse"}).code == cli::kExitUsage);
}

TEST_CASE("synth")
{
    const auto a = invoke({"synth", "--seed", "9", "--records", "60"});
    const auto b = invoke({"synth", "--seed", "9", "--records", "60"});
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(a.out != invoke({"synth", "--seed", "10", "--records", "60"}).out);
    std::istringstream in(a.out);
    CHECK(parse_csv(in, "synth").size() == 60);
}

TEST_CASE("config file through the environment")
{
    const auto cfg = scratch("profile.cfg");
    {
        std::ofstream out(cfg);
        out << "# one institution\n"
               "profile.Solo.weight = 1\n"
               "profile.Solo.rank = 2, 0\n"
               "profile.Solo.publications = 10, 0\n"
               "profile.Solo.citations = 100, 0\n"
               "profile.Solo.h_index = 5, 0\n"
               "profile.Solo.ams_fellow = 0, 0\n"
               "profile.Solo.phd_year = 2001, 0\n";
    }
    ::setenv("FACSTAT_CONFIG", cfg.string().c_str(), 1);
    const auto r = invoke({"synth", "--records", "3"});
    ::unsetenv("FACSTAT_CONFIG");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("Solo") != std::string::npos);
    CHECK(json::parse(r.out.substr(12, r.out.find('\n') - 12)).at("config_digest") == cli::file_digest(cfg.string()));
}

TEST_CASE("every subcommand replays byte-for-byte from its manifest")
{
    const std::vector<std::vector<std::string>> runs = {
        {"eda", "-i", kFixture, "--by", "university", "--format", "md"},
        {"eda", "-i", kFixture, "--cohorts", "private,public", "--format", "json"},
        {"eda", "-i", kFixture, "--university", "MIT", "--university", "Penn", "--format", "csv"},
        {"regress", "-i", kFixture, "--university", "Dartmouth", "--target", "ams", "--seed", "4", "--format", "md"},
        {"regress", "-i", kFixture, "--pooled", "--combo", "1,5,14", "--method", "LnR,LgR", "--set", "LR.alpha=0.5",
         "--format", "json"},
        {"softmax", "-i", kFixture, "--university", "Rutgers", "--seed", "3", "--format", "csv"},
        {"softmax", "-i", kFixture, "--cohort", "public", "--train", "100", "--lr", "0.005", "--format", "json"},
        {"cluster", "-i", kFixture, "--university", "Penn", "--params", "cosine", "--seed", "2", "--format", "md"},
        {"cluster", "-i", kFixture, "--university", "Dartmouth", "--params", "mixed", "--clusters", "2",
         "--format", "json"},
        {"synth", "--seed", "12", "--records", "30"},
        {"synth", "--seed", "12", "--records", "30", "--format", "json"},
    };
    int index = 0;
    for (const auto& args : runs) {
        CAPTURE(args[0]);
        CAPTURE(index);
        const auto report = scratch("report" + std::to_string(index++));
        std::vector<std::string> with_output = args;
        with_output.push_back("--output");
        with_output.push_back(report.string());
        const auto first = invoke(with_output);
        REQUIRE(first.code == 0);

        const auto manifest = cli::extract_manifest(slurp(report));
        CHECK(manifest.at("subcommand") == args[0]);
        CHECK(manifest.at("version") == std::string(cli::kToolVersion));

        const auto again = invoke(cli::manifest_arguments(manifest));
        REQUIRE(again.code == 0);
        CHECK(again.out == slurp(report));

        const auto replay = invoke({"replay", report.string(), "--check"});
        CHECK(replay.code == 0);
        CHECK(replay.out.find("byte-for-byte") != std::string::npos);
    }
}

TEST_CASE("replay detects a changed input")
{
    const auto data = scratch("mutable.csv");
    fs::copy_file(kFixture, data, fs::copy_options::overwrite_existing);
    const auto report = scratch("mutable_report.md");
    REQUIRE(invoke({"eda", "-i", data.string(), "--format", "md", "-o", report.string()}).code == 0);
    CHECK(invoke({"replay", report.string(), "--check"}).code == 0);
    {
        std::ofstream out(data, std::ios::app);
        out << "Extra,Row,1,1,1,1,0,2000,MIT\n";
    }
    const auto r = invoke({"replay", report.string(), "--check"});
    CHECK(r.code == cli::kExitRuntime);
    CHECK(r.err.find("changed since the report was written") != std::string::npos);
}

TEST_CASE("manifest extraction")
{
    CHECK(cli::extract_manifest("<!-- manifest: {\"a\":1} -->\n# x\n").at("a") == 1);
    CHECK(cli::extract_manifest("# manifest: {\"b\":2}\nx,y\n").at("b") == 2);
    CHECK(cli::extract_manifest(R"({"manifest": {"c": 3}, "rows": []})").at("c") == 3);
    CHECK_THROWS(cli::extract_manifest("no manifest here"));

    const json m = {{"subcommand", "eda"},
                    {"input", "f.csv"},
                    {"filters", {{"university", {"MIT", "Penn"}}, {"cohort", ""}}},
                    {"seed", 4},
                    {"format", "md"},
                    {"config", ""},
                    {"parameters", {{"by", "university"}, {"probes", {5.0, 50.0}}, {"pooled", true}, {"x", false}}}};
    const std::vector<std::string> expect = {"eda",      "--input",  "f.csv", "--university", "MIT",   "--university",
                                             "Penn",     "--seed",   "4",     "--format",     "md",    "--by",
                                             "university", "--pooled", "--probes", "5",         "--probes", "50"};
    CHECK(cli::manifest_arguments(m) == expect);
}
