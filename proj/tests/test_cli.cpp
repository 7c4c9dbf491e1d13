#include <catch_amalgamated.hpp>

#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "app.hpp"
#include "table.hpp"

using Catch::Approx;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<std::string> split(const std::string& s, const std::string& sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto k = s.find(sep, pos);
    if (k == std::string::npos) {
      if (pos < s.size()) out.push_back(s.substr(pos));
      return out;
    }
    out.push_back(s.substr(pos, k - pos));
    pos = k + sep.size();
  }
}

// Rows of a CSV without quoted fields, header first.
std::vector<std::vector<std::string>> csv(const std::string& s) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& line : split(s, "\r\n")) rows.push_back(split(line + ",", ","));
  return rows;
}

}  // namespace

TEST_CASE("predict reproduces the closed forms", "[cli]") {
  // (4 ln 500 / 20) / (1 - 2 ln 500 / 20)
  const double l = std::log(500.0);
  const double expected = (4 * l / 20) / (1 - 2 * l / 20);
  const auto r = run({"predict", "--n", "500", "--m", "20", "--quiet"});
  REQUIRE(r.code == 0);
  const auto rows = csv(r.out);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0][0] == "formula");
  CHECK(rows[0].back() == "threshold");
  CHECK(std::stod(rows[1].back()) == Approx(expected).epsilon(1e-12));

  const auto g = run({"predict", "--n", "500", "--m", "100", "--mode", "oracle-gaussian"});
  REQUIRE(g.code == 0);
  CHECK(std::stod(csv(g.out)[1].back()) == Approx((4 * l / 100) / (1 - 6 * l / 100)));

  const auto s = run({"predict", "--n", "1000", "--tau-p", "0.1", "--mode", "nonoracle-singularity"});
  REQUIRE(s.code == 0);
  const auto srows = csv(s.out);
  std::size_t col = 0;
  for (std::size_t k = 0; k < srows[0].size(); ++k)
    if (srows[0][k] == "tau_h") col = k;
  const double tau = std::stod(srows[1][col]);
  CHECK(tau > 0.89);
  CHECK(tau < 0.91);
}

TEST_CASE("predict reports no finite threshold with exit code 2", "[cli]") {
  const auto r = run({"predict", "--n", "3", "--m", "1"});
  CHECK(r.code == 2);
  CHECK(r.err.find("no finite threshold") != std::string::npos);
}

TEST_CASE("Invalid input exits with code 2", "[cli]") {
  CHECK(run({"predict", "--n", "0"}).code == 2);
  CHECK(run({"predict", "--n", "10", "--h", "1"}).code == 2);
  CHECK(run({"predict", "--bogus"}).code == 2);
  CHECK(run({}).code == 2);
  CHECK(run({"predict", "--format", "xml"}).code == 2);
  CHECK(run({"sweep", "--variable", "snr", "--grid", "1,abc"}).code == 2);
  CHECK(run({"find-threshold", "--epsilon", "0"}).code == 2);
}

TEST_CASE("JSON output carries config, results and seed", "[cli]") {
  const auto r = run({"predict", "--n", "500", "--m", "30", "--format", "json", "--seed", "7"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.contains("config"));
  CHECK(j["seed"] == 7);
  CHECK(j["timing_ms"].is_null());
  REQUIRE(j["results"].size() == 1);
  CHECK(j["results"][0]["threshold"].get<double>() == Approx(1.415).margin(5e-4));
}

TEST_CASE("find-threshold on a synthetic step", "[cli]") {
  const auto r = run({"find-threshold", "--synthetic-step", "0.5", "--lower", "0", "--upper", "1",
                      "--epsilon", "1e-3", "--repeats", "3", "--quiet"});
  REQUIRE(r.code == 0);
  const auto rows = csv(r.out);
  REQUIRE(rows.size() == 2);
  std::size_t mean_col = 0;
  for (std::size_t k = 0; k < rows[0].size(); ++k)
    if (rows[0][k] == "mean") mean_col = k;
  CHECK(std::abs(std::stod(rows[1][mean_col]) - 0.5) <= 3e-3);
  CHECK(rows[1][0] == "ok");
}

TEST_CASE("find-threshold bracket failure exits 1", "[cli]") {
  const auto r = run({"find-threshold", "--synthetic-step", "0.5", "--lower", "0.6", "--upper", "1",
                      "--quiet"});
  CHECK(r.code == 1);
  CHECK(r.out.find("bracket_failure") != std::string::npos);
}

TEST_CASE("find-threshold on a real experiment is deterministic", "[cli]") {
  const std::vector<std::string> args = {"find-threshold", "--n", "40", "--m", "15", "--trials", "10",
                                         "--repeats", "2", "--epsilon", "0.05", "--lower", "0.05",
                                         "--upper", "5", "--seed", "3", "--quiet", "--format", "json"};
  const auto a = run(args);
  REQUIRE(a.code == 0);
  auto threaded = args;
  threaded.insert(threaded.end(), {"--threads", "3"});
  const auto b = run(threaded);
  const auto ja = nlohmann::json::parse(a.out), jb = nlohmann::json::parse(b.out);
  CHECK(ja["results"] == jb["results"]);
  CHECK(a.out == run(args).out);
  const double mean = ja["results"][0]["mean"].get<double>();
  CHECK(mean > 0.05);
  CHECK(mean < 5.0);
}

TEST_CASE("sweep emits one row per grid point", "[cli]") {
  const auto r = run({"sweep", "--n", "30", "--m", "10", "--variable", "snr", "--grid", "0.01,50",
                      "--trials", "20", "--seed", "2"});
  REQUIRE(r.code == 0);
  const auto rows = csv(r.out);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0][0] == "variable");
  std::size_t col = 0;
  for (std::size_t k = 0; k < rows[0].size(); ++k)
    if (rows[0][k] == "error_rate") col = k;
  CHECK(std::stod(rows[1][col]) == 1.0);
  CHECK(std::stod(rows[2][col]) == 0.0);

  const auto one = run({"sweep", "--n", "30", "--m", "10", "--variable", "tau_h", "--grid", "0.5",
                        "--snr", "5", "--trials", "5", "--format", "json"});
  REQUIRE(one.code == 0);
  const auto j = nlohmann::json::parse(one.out);
  REQUIRE(j["results"].size() == 1);
  CHECK(j["results"][0]["h"] == 15);
}

TEST_CASE("verify exits 1 when a closed form is corrupted", "[cli]") {
  const auto ok = run({"verify", "--suite", "identities", "--p", "2", "--trials", "100000"});
  CHECK(ok.code == 0);
  CHECK(csv(ok.out).size() == 9);
  const auto bad = run({"verify", "--suite", "identities", "--p", "2", "--trials", "100000",
                        "--trace-scale", "1.5"});
  CHECK(bad.code == 1);
  CHECK(bad.out.find("false") != std::string::npos);
  CHECK(run({"verify", "--suite", "identities", "--trials", "10"}).code == 2);
}

TEST_CASE("verify tables", "[cli]") {
  const auto r = run({"verify", "--suite", "tables", "--format", "json"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["results"].size() == 24);
  for (const auto& row : j["results"]) CHECK(row["pass"] == true);
}

TEST_CASE("de runs with a tiny population and zero iterations", "[cli]") {
  const auto r = run({"de", "--n", "20", "--m", "5", "--snr", "2", "--population", "10", "--iters",
                      "0", "--probes", "10"});
  REQUIRE(r.code == 0);
  const auto rows = csv(r.out);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0][0] == "iter");
  CHECK(rows[1][0] == "0");
  const auto b = run({"de", "--n", "20", "--m", "5", "--snr", "2", "--population", "50", "--iters",
                      "3", "--probes", "20", "--recursion", "brw", "--format", "json"});
  REQUIRE(b.code == 0);
  CHECK(nlohmann::json::parse(b.out)["results"].size() == 4);
}

TEST_CASE("Output is byte-identical across runs and thread counts", "[cli]") {
  const std::vector<std::string> args = {"de", "--n", "30", "--m", "5", "--snr", "1", "--population",
                                         "500", "--iters", "3", "--probes", "200", "--seed", "11"};
  const auto a = run(args);
  auto t = args;
  t.insert(t.end(), {"--threads", "4"});
  CHECK(a.out == run(args).out);
  CHECK(a.out == run(t).out);
}

TEST_CASE("CSV helpers", "[cli]") {
  CHECK(cli::csv_escape("a,b") == "\"a,b\"");
  CHECK(cli::csv_escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(cli::csv_escape("plain") == "plain");
  cli::Table t({"x", "y"});
  t.add({1.5, std::string("a")});
  std::ostringstream os;
  t.write_csv(os);
  CHECK(os.str() == "x,y\r\n1.5,a\r\n");
}
