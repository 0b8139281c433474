#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "nvspec/io.hpp"

// End-to-end tests of the nvsd binary; its path arrives via NVSD_BIN.

namespace fs = std::filesystem;
using nvspec::io::json;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& tag) {
    static int counter = 0;
    const auto dir = fs::temp_directory_path() /
                     ("nvsd_cli_" + tag + "_" + std::to_string(::getpid()) + "_" +
                      std::to_string(counter++));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

RunResult run(const std::string& args, const fs::path& scratch) {
    const char* bin = std::getenv("NVSD_BIN");
    REQUIRE(bin != nullptr);
    const auto out_file = scratch / "cmd_stdout.txt";
    const auto err_file = scratch / "cmd_stderr.txt";
    const std::string cmd = std::string(bin) + " " + args + " > " + out_file.string() + " 2> " +
                            err_file.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

// Small, fast scenario shared by the CLI tests.
json small_config(std::uint64_t seed, int targets, int bath_sites, double tau_stop = 20e-6) {
    json j;
    j["sequence"] = {{"tau_stop_s", tau_stop}};
    j["scenario"] = {{"n_target_spins", targets},
                     {"bath_site_count", bath_sites},
                     {"rng_seed", seed}};
    return j;
}

fs::path write_config(const fs::path& dir, const json& j) {
    const auto path = dir / "config.json";
    std::ofstream out(path);
    out << j.dump(2) << "\n";
    return path;
}

} // namespace

TEST_CASE("help and usage errors") {
    const auto dir = fresh_dir("usage");
    CHECK(run("--help", dir).code == 0);
    CHECK(run("simulate --help", dir).code == 0);
    // Missing required subcommand.
    CHECK(run("", dir).code == 2);
    // Unknown flag.
    CHECK(run("simulate --no-such-flag", dir).code == 2);
    // analyze without input.
    CHECK(run("analyze", dir).code == 2);
    fs::remove_all(dir);
}

TEST_CASE("simulate is deterministic for a fixed seed") {
    const auto dir = fresh_dir("determinism");
    const auto cfg = write_config(dir, small_config(12345, 2, 200));

    const auto r1 = run("simulate --config " + cfg.string() + " --out " + (dir / "a").string(), dir);
    const auto r2 = run("simulate --config " + cfg.string() + " --out " + (dir / "b").string(), dir);
    REQUIRE(r1.code == 0);
    REQUIRE(r2.code == 0);
    CHECK(slurp(dir / "a" / "signal.csv") == slurp(dir / "b" / "signal.csv"));
    CHECK(slurp(dir / "a" / "scenario.json") == slurp(dir / "b" / "scenario.json"));

    // A different seed changes the trace.
    const auto r3 = run("simulate --config " + cfg.string() + " --seed 999 --out " +
                            (dir / "c").string(),
                        dir);
    REQUIRE(r3.code == 0);
    CHECK(slurp(dir / "a" / "signal.csv") != slurp(dir / "c" / "signal.csv"));
    fs::remove_all(dir);
}

TEST_CASE("simulate with an empty scenario produces a unit trace") {
    const auto dir = fresh_dir("empty");
    const auto cfg = write_config(dir, small_config(1, 0, 0));
    REQUIRE(run("simulate --config " + cfg.string() + " --out " + dir.string(), dir).code == 0);

    const auto file = nvspec::io::read_signal_csv(dir / "signal.csv");
    REQUIRE(!file.signal.p_x.empty());
    for (double p : file.signal.p_x) CHECK(p == doctest::Approx(1.0).epsilon(1e-12));
    // Provenance header carries the command and config.
    CHECK(file.provenance.at("command") == "simulate");
    CHECK(file.provenance.at("config").at("scenario").at("rng_seed").get<std::uint64_t>() == 1);
    fs::remove_all(dir);
}

TEST_CASE("analyze of a flat trace finds no spins and exits 0") {
    const auto dir = fresh_dir("flat");
    nvspec::Signal flat;
    for (int i = 1; i <= 2000; ++i) {
        flat.tau.push_back(5e-9 * i);
        flat.p_x.push_back(1.0);
    }
    nvspec::io::write_signal_csv(dir / "flat.csv", flat, json{{"command", "test"}});

    const auto r = run("analyze " + (dir / "flat.csv").string() + " --out " + dir.string(), dir);
    CHECK(r.code == 0);
    const auto spins = json::parse(slurp(dir / "spins.json"));
    CHECK(spins.at("spins").empty());
    fs::remove_all(dir);
}

TEST_CASE("analyze rejects malformed input with exit code 2") {
    const auto dir = fresh_dir("malformed");
    {
        std::ofstream out(dir / "bad.csv");
        out << "tau_s,p_x\n5e-9,1.0\n1e-8,not_a_number\n";
    }
    const auto r = run("analyze " + (dir / "bad.csv").string() + " --out " + dir.string(), dir);
    CHECK(r.code == 2);
    CHECK(r.err.find("line") != std::string::npos);

    // Missing file is also an input error.
    CHECK(run("analyze " + (dir / "nope.csv").string(), dir).code == 2);
    fs::remove_all(dir);
}

TEST_CASE("invalid configuration exits 2") {
    const auto dir = fresh_dir("badcfg");
    auto j = small_config(1, 1, 0);
    j["threshold"] = -0.5;
    const auto cfg = write_config(dir, j);
    const auto r = run("simulate --config " + cfg.string() + " --out " + dir.string(), dir);
    CHECK(r.code == 2);
    CHECK(r.err.find("threshold") != std::string::npos);

    // Unparseable JSON.
    {
        std::ofstream out(dir / "broken.json");
        out << "{ not json";
    }
    CHECK(run("simulate --config " + (dir / "broken.json").string(), dir).code == 2);
    fs::remove_all(dir);
}

TEST_CASE("unknown benchmark mode exits 2") {
    const auto dir = fresh_dir("badmode");
    const auto cfg = write_config(dir, small_config(1, 1, 0));
    const auto r = run("benchmark --config " + cfg.string() + " --mode bogus --out " + dir.string(),
                       dir);
    CHECK(r.code == 2);
    fs::remove_all(dir);
}

TEST_CASE("simulate then analyze round trip recovers the target spin") {
    const auto dir = fresh_dir("roundtrip");
    // One target spin over the full 50 us grid, no bath.
    const auto cfg = write_config(dir, small_config(77, 1, 0, 50e-6));
    REQUIRE(run("simulate --config " + cfg.string() + " --out " + dir.string(), dir).code == 0);

    const auto scenario = json::parse(slurp(dir / "scenario.json"));
    REQUIRE(scenario.at("targets").size() == 1);
    const double a_true = scenario.at("targets")[0].at("a_hz").get<double>();
    const double b_true = scenario.at("targets")[0].at("b_hz").get<double>();

    // The config travels inside the CSV provenance; analyze needs no --config.
    const auto r = run("analyze " + (dir / "signal.csv").string() + " --out " + dir.string(), dir);
    REQUIRE(r.code == 0);
    const auto spins = json::parse(slurp(dir / "spins.json"));
    REQUIRE(!spins.at("spins").empty());

    double best = 1e9;
    for (const auto& s : spins.at("spins")) {
        const double da = s.at("A_kHz").get<double>() * 1e3 - a_true;
        const double db = s.at("B_kHz").get<double>() * 1e3 - b_true;
        best = std::min(best, std::sqrt(da * da + db * db) / std::hypot(a_true, b_true));
    }
    CHECK(best < 0.05);

    // The reconstruction overlay exists and reports a small residual.
    const auto rep = run("report " + (dir / "reconstruction.csv").string(), dir);
    CHECK(rep.code == 0);
    CHECK(rep.out.find("overlay RMSE") != std::string::npos);

    // Analysis summary report.
    const auto rep2 = run("report " + (dir / "spins.json").string(), dir);
    CHECK(rep2.code == 0);
    CHECK(rep2.out.find("spins") != std::string::npos);

    // Reports on a missing file fail with exit 2.
    CHECK(run("report " + (dir / "missing.json").string(), dir).code == 2);
    fs::remove_all(dir);
}

TEST_CASE("NVSD_THREADS environment variable is accepted") {
    const auto dir = fresh_dir("threads");
    const auto cfg = write_config(dir, small_config(5, 1, 50));
    const char* bin = std::getenv("NVSD_BIN");
    REQUIRE(bin != nullptr);
    const std::string cmd = "NVSD_THREADS=2 " + std::string(bin) + " simulate --config " +
                            cfg.string() + " --out " + dir.string() + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    CHECK((WIFEXITED(status) && WEXITSTATUS(status) == 0));
    fs::remove_all(dir);
}
