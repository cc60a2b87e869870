#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <string>

#include <json.hpp>

using json = nlohmann::json;

namespace {

struct CliResult {
    int exitCode = -1;
    std::string out;
};

CliResult runCli(const std::string& args) {
    std::string cmd = std::string(FDCTMC_CLI_PATH) + " " + args + " 2>/dev/null";
    std::array<char, 4096> buf{};
    CliResult res;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) res.out.append(buf.data(), n);
    int status = pclose(pipe);
    res.exitCode = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

std::string model(const std::string& name) {
    return std::string(FDCTMC_MODELS_DIR) + "/" + name;
}

std::string fixture(const std::string& name) {
    return std::string(FDCTMC_FIXTURES_DIR) + "/" + name;
}

} // namespace

TEST_CASE("validate: clean model exits 0 with machine-readable report") {
    auto res = runCli("validate " + model("dpm2.fdctmc"));
    CHECK(res.exitCode == 0);
    auto j = json::parse(res.out);
    CHECK(j["ok"] == true);
    CHECK(j["synthesisRestrictions"] == true);
    CHECK(j["states"] == 7);
    CHECK(j["schema"] == "fdctmc/validate/1");
}

TEST_CASE("validate: bad probabilities exit 1 and name the sum") {
    auto res = runCli("validate " + fixture("bad_sum.fdctmc"));
    CHECK(res.exitCode == 1);
    auto j = json::parse(res.out);
    CHECK(j["ok"] == false);
    bool mentioned = false;
    for (const auto& d : j["diagnostics"])
        mentioned |= d["message"].get<std::string>().find("0.9") != std::string::npos;
    CHECK(mentioned);
}

TEST_CASE("validate: missing fdctmc header exits 1 with location") {
    auto res = runCli("validate " + fixture("not_fdctmc.fdctmc"));
    CHECK(res.exitCode == 1);
    auto j = json::parse(res.out);
    REQUIRE(!j["diagnostics"].empty());
    CHECK(j["diagnostics"][0]["line"] == 1);
    CHECK(j["diagnostics"][0]["message"].get<std::string>().find("fdctmc") != std::string::npos);
}

TEST_CASE("exp-reward: reports the value as JSON") {
    auto res = runCli("exp-reward " + model("mm1n.fdctmc") + " --epsilon 0.005");
    CHECK(res.exitCode == 0);
    auto j = json::parse(res.out);
    CHECK(j["schema"] == "fdctmc/exp-reward/1");
    CHECK(j["value"].get<double>() == doctest::Approx(0.1688960).epsilon(1e-3));
    CHECK(j["infinite"] == false);
}

TEST_CASE("exp-reward: refuses models without a target label") {
    auto res = runCli("exp-reward " + model("dpm2.fdctmc") + " --epsilon 2.0");
    CHECK(res.exitCode != 0); // flag out of range
    auto res2 = runCli("exp-reward " + fixture("bad_sum.fdctmc"));
    CHECK(res2.exitCode == 1);
}

TEST_CASE("simulate: byte-identical output for the same seed") {
    auto a = runCli("simulate " + model("toy_race.fdctmc") + " --runs 5000 --seed 9");
    auto b = runCli("simulate " + model("toy_race.fdctmc") + " --runs 5000 --seed 9");
    CHECK(a.exitCode == 0);
    CHECK(a.out == b.out);
    auto j = json::parse(a.out);
    CHECK(j["runs"] == 5000);
    CHECK(j["truncatedRuns"] == 0);
}

TEST_CASE("text and json formats report identical numbers") {
    auto j = runCli("exp-reward " + model("toy_tradeoff.fdctmc") + " --epsilon 0.001");
    auto t = runCli("exp-reward " + model("toy_tradeoff.fdctmc") + " --epsilon 0.001 --format text");
    CHECK(j.exitCode == 0);
    CHECK(t.exitCode == 0);
    auto parsed = json::parse(j.out);
    // the shortest round-trip representation of the value appears verbatim
    // in the text rendering
    double v = parsed["value"].get<double>();
    char buf[64];
    snprintf(buf, sizeof buf, "%s", json(v).dump().c_str());
    CHECK(t.out.find(std::string("value = ")) != std::string::npos);
    CHECK(t.out.find(buf) != std::string::npos);
}

TEST_CASE("synthesize: toy model through the CLI") {
    auto res = runCli("synthesize " + model("toy_single.fdctmc") + " --epsilon 0.02");
    CHECK(res.exitCode == 0);
    auto j = json::parse(res.out);
    CHECK(j["schema"] == "fdctmc/synthesize/1");
    CHECK(j["delays"].contains("f"));
    CHECK(j["value"].get<double>() <= j["valUpper"].get<double>() + 1e-9);
}

TEST_CASE("synthesize: budget violations exit 2") {
    auto res = runCli("synthesize " + model("dpm2.fdctmc") + " --epsilon 0.005 --budget 1000");
    CHECK(res.exitCode == 2);
}

TEST_CASE("bench-transient reproduces the step-count comparison") {
    auto res = runCli("bench-transient " + model("ab.fdctmc") +
                      " --delta 0.1 --steps 1000 --kappa 0.01");
    CHECK(res.exitCode == 0);
    auto j = json::parse(res.out);
    CHECK(j["iterative"]["products"] == 3000);
    CHECK(j["naive"]["products"].get<std::uint64_t>() >= 30000);
    CHECK(j["agreement"]["maxPiDiffIterNaive"].get<double>() <= 0.02);
    CHECK(j["agreement"]["maxPiDiffIterPrecomputed"].get<double>() <= 1e-10);
}

TEST_CASE("unknown fd event for bench-transient exits 1") {
    auto res = runCli("bench-transient " + model("ab.fdctmc") + " --event nope");
    CHECK(res.exitCode == 1);
}
