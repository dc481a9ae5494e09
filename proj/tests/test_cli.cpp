#include <cstdio>
#include <doctest.h>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace {

struct CliResult {
    int code;
    std::string out;
};

CliResult run_cli(const std::string& args) {
    const std::string cmd = std::string(TFLPI_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[4096];
    while (fgets(buf, sizeof buf, pipe)) out += buf;
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string sys_file(const std::string& name) {
    return std::string(TFLPI_SYSTEMS_DIR) + "/" + name;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("check ltflpi: solvable example exits 0 with a positive verdict") {
    const auto res = run_cli("check ltflpi " + sys_file("motivating.sys") + " --no-meta");
    CHECK(res.code == 0);
    const auto report = nlohmann::json::parse(res.out);
    CHECK(report["verdict"] == true);
    CHECK(report["schema"] == 1);
    CHECK(report["report"]["condition_a"]["dim_sum"] == 5);
    CHECK_FALSE(report.contains("meta"));
}

TEST_CASE("check ltflpi: missing input exits 2") {
    CHECK(run_cli("check ltflpi /nonexistent/missing.sys").code == 2);
}

TEST_CASE("usage errors exit 2") {
    CHECK(run_cli("").code == 2);
    CHECK(run_cli("frobnicate foo").code == 2);
}

TEST_CASE("reldeg: x4 is well-defined but fails the coincidence test") {
    const auto res =
        run_cli("reldeg " + sys_file("motivating.sys") + " --lambda \"x4\" --no-meta");
    CHECK(res.code == 1);
    const auto report = nlohmann::json::parse(res.out);
    CHECK(report["relative_degree"]["well_defined"] == true);
    CHECK(report["relative_degree"]["r"] == 1);
    CHECK(report["zero_dynamics"]["coincide"] == false);
}

TEST_CASE("reldeg: the observable output passes the whole battery") {
    const auto res = run_cli("reldeg " + sys_file("motivating.sys") +
                             " --lambda \"y2 * exp(-y1)\" --no-meta");
    CHECK(res.code == 0);
    const auto report = nlohmann::json::parse(res.out);
    CHECK(report["relative_degree"]["r"] == 3);
    CHECK(report["observability"]["observable"] == true);
}

TEST_CASE("validate passes the bundled systems") {
    CHECK(run_cli("validate " + sys_file("motivating.sys")).code == 0);
    CHECK(run_cli("validate " + sys_file("unicycle.sys")).code == 0);
}

TEST_CASE("normalform emits the symbolic chain") {
    const auto res = run_cli("normalform " + sys_file("motivating.sys") + " --no-meta");
    CHECK(res.code == 0);
    const auto report = nlohmann::json::parse(res.out);
    CHECK(report["report"]["r"] == 3);
    CHECK(report["report"]["xi_chain"].size() == 3);
    CHECK(report["report"]["a2"].is_string());
}

TEST_CASE("gtflpi over a unicycle grid") {
    const auto res = run_cli("check gtflpi " + sys_file("unicycle.sys") +
                             " --grid 12 --radius 0.3 --assume-cylinder --no-meta");
    CHECK(res.code == 0);
    const auto report = nlohmann::json::parse(res.out);
    CHECK(report["report"]["verdict"] == "sufficient-hold");
    CHECK(report["report"]["cylinder_attested"] == true);
}

TEST_CASE("simulate writes a CSV trajectory") {
    const std::string csv = "/tmp/tflpi_cli_traj.csv";
    std::remove(csv.c_str());
    const auto res = run_cli("simulate " + sys_file("motivating.sys") +
                             " --eps 0.01 --T 1.0 --xinit 0.1,0.2,0,0.05,-0.05 --out " + csv +
                             " --no-meta");
    CHECK(res.code == 0);
    std::ifstream in(csv);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    CHECK(header.rfind("t,x_1", 0) == 0);
}

TEST_CASE("construct verifies the chart and reports the extracted output") {
    const auto res = run_cli("construct " + sys_file("motivating.sys") + " --no-meta");
    CHECK(res.code == 0);
    const auto report = nlohmann::json::parse(res.out);
    CHECK(report["report"]["verification"]["pass"] == true);
    CHECK(report["report"]["chart"]["mu"] == 2);
}

TEST_CASE("construct on an unsolvable system reports a negative verdict") {
    const std::string path = "/tmp/tflpi_cli_unsolvable.sys";
    {
        std::ofstream out(path);
        out << "[vars] x1 x2 x3\n[f]\n0\nx1\n1\n[g]\n1\n0\n0\n[h] x3\n"
               "[gamma]\nx1\nx2\n[nstar] 1\n[x0] 0 0 0\n";
    }
    const auto res = run_cli("construct " + path + " --no-meta");
    CHECK(res.code == 1);
    const auto report = nlohmann::json::parse(res.out);
    CHECK(report["verdict"] == false);
    CHECK(report["ltflpi"]["solvable"] == false);
}

TEST_CASE("simulate maps a blowup to exit code 3") {
    const std::string path = "/tmp/tflpi_cli_runaway.sys";
    {
        std::ofstream out(path);
        out << "[vars] x1 x2\n[f]\nx1^3\n0\n[g]\n1\n0\n[h] x1\n[gamma] x1\n"
               "[nstar] 1\n[x0] 0 0\n[lambda] x1\n"
               "[observer]\neps 0.1\nalpha 2\nphi0 -1\n[controller]\nk 6\nsat 1e5\n";
    }
    const auto res = run_cli("simulate " + path + " --T 5 --xinit 2,0 --no-meta");
    CHECK(res.code == 3);
}

TEST_CASE("sampling flags flow into the report") {
    const auto res = run_cli("check ltflpi " + sys_file("motivating.sys") +
                             " --samples 16 --radius 0.02 --no-meta");
    CHECK(res.code == 0);
    const auto report = nlohmann::json::parse(res.out);
    CHECK(report["report"]["sample_count"] == 16);
    CHECK(report["report"]["radius"] == 0.02);
}

TEST_CASE("JSON reports are byte-identical across runs with --no-meta") {
    const std::string p1 = "/tmp/tflpi_cli_rep1.json";
    const std::string p2 = "/tmp/tflpi_cli_rep2.json";
    const std::string args = "check ltflpi " + sys_file("motivating.sys") + " --no-meta --json ";
    CHECK(run_cli(args + p1).code == 0);
    CHECK(run_cli(args + p2).code == 0);
    const std::string a = slurp(p1), b = slurp(p2);
    CHECK_FALSE(a.empty());
    CHECK(a == b);
}

TEST_CASE("verdicts carry raw numbers and tolerances") {
    const auto res = run_cli("check ltflpi " + sys_file("motivating.sys") + " --no-meta");
    const auto report = nlohmann::json::parse(res.out);
    CHECK(report["report"].contains("closure"));
    CHECK(report["report"]["tol_rank"].is_number());
    CHECK(report["tolerances"].contains("tol_zero"));
}
