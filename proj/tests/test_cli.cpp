#include <doctest.h>

#include "sublab/cli.hpp"
#include "sublab/io.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace sublab;
namespace fs = std::filesystem;

namespace {

const fs::path kDir = fs::temp_directory_path() / "sublab_test_cli";

std::string configs() {
    const char* env = std::getenv("SUBLAB_CONFIG_DIR");
    return env ? env : "configs";
}

fs::path write_file(const std::string& name, const std::string& text) {
    fs::create_directories(kDir);
    const fs::path p = kDir / name;
    std::ofstream(p) << text;
    return p;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Outcome {
    int code;
    std::string out, err;
};

Outcome run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::vector<std::map<std::string, std::string>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    auto split = [](const std::string& s) {
        std::vector<std::string> v;
        std::stringstream ss(s);
        std::string c;
        while (std::getline(ss, c, ',')) v.push_back(c);
        return v;
    };
    const auto header = split(line);
    std::vector<std::map<std::string, std::string>> rows;
    while (std::getline(in, line)) {
        const auto cells = split(line);
        std::map<std::string, std::string> r;
        for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) r[header[i]] = cells[i];
        rows.push_back(r);
    }
    return rows;
}

const std::string kSmallSweep = R"({
  "spec_version": 1,
  "experiment": {"N": 400, "p": 10, "seed": 3, "replicates": 2, "holdout": 200},
  "kernel": {"kind": "glm-logistic", "theta0_norm": 1.5},
  "loss": {"train": "logistic", "test": "misclassification"},
  "selection": {"kind": "alpha-family", "gamma": [0.5, 1.0], "alpha": [0.0, 1.0]},
  "surrogate": {"mode": "perfect"},
  "ridge": {"lambda": [0.1]},
  "quadrature": {"gaussian": 20, "noise": 20, "panel": 8}
})";

}  // namespace

TEST_CASE("usage errors exit with 2") {
    CHECK(run({}).code == cli::kUsage);
    CHECK(run({"frobnicate"}).code == cli::kUsage);
    CHECK(run({"lowdim-rho"}).code == cli::kUsage);
    CHECK(run({"lowdim-rho", "--config", (kDir / "does-not-exist.json").string()}).code == cli::kUsage);
    CHECK(run({"lowdim-rho", "--config", configs() + "/uniform_1d.json", "--jobs", "0"}).code == cli::kUsage);
    CHECK(run({"lowdim-rho", "--config", configs() + "/uniform_1d.json", "--bogus"}).code == cli::kUsage);
    const Outcome h = run({"--help"});
    CHECK(h.code == cli::kOk);
    CHECK(h.out.find("sweep") != std::string::npos);
}

TEST_CASE("config errors exit with 3 and name the bad value") {
    const fs::path bad = write_file("bad.json", R"({"spec_version": 1, "selection": {"gamma": [0.2, 0.5, 1.5]}})");
    const Outcome o = run({"sweep", "--config", bad.string()});
    CHECK(o.code == cli::kConfig);
    CHECK(o.err.find("/selection/gamma/2") != std::string::npos);
    const fs::path unknown = write_file("unknown.json", R"({"spec_version": 1, "experimnet": {}})");
    CHECK(run({"sweep", "--config", unknown.string()}).code == cli::kConfig);
    // minimax-discrete needs its section
    CHECK(run({"minimax-discrete", "--config", configs() + "/uniform_1d.json", "--out",
               (kDir / "mm.csv").string()})
              .code == cli::kConfig);
}

TEST_CASE("numerical failures exit with 4") {
    // two grid points cannot span five dimensions: singular Hessian
    const fs::path cfg = write_file("singular.json", R"({"spec_version": 1,
      "lowdim": {"population": "gaussian", "dim": 5, "grid_points": 2, "model": "linear"},
      "selection": {"gamma": [0.5]}})");
    const Outcome o = run({"lowdim-rho", "--config", cfg.string(), "--out", (kDir / "singular.csv").string()});
    CHECK(o.code == cli::kNumerical);
}

TEST_CASE("lowdim-rho on the uniform law") {
    const fs::path out = kDir / "uniform.csv";
    fs::create_directories(kDir);
    const Outcome o = run({"lowdim-rho", "--config", configs() + "/uniform_1d.json", "--out", out.string()});
    REQUIRE(o.code == cli::kOk);
    CHECK(o.out.find("# effective config:") != std::string::npos);
    std::map<std::string, double> rho;
    for (const auto& r : read_csv(out))
        if (std::stod(r.at("gamma")) == 0.5) rho[r.at("scheme")] = std::stod(r.at("rho"));
    REQUIRE(rho.count("unbiased-influence"));
    REQUIRE(rho.count("nonreweight-optimal"));
    CHECK(rho["random"] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(rho["nonreweight-optimal"] / rho["unbiased-influence"] == doctest::Approx(16.0 / 21.0).epsilon(1e-6));
}

TEST_CASE("select") {
    std::string csv = "f1,f2,y\n";
    Rng rng(4);
    for (int i = 0; i < 300; ++i)
        csv += io::format_double(rng.normal()) + "," + io::format_double(rng.normal()) + "," +
               (rng.uniform() < 0.5 ? "0" : "1") + "\n";
    const fs::path data = write_file("sel_data.csv", csv);
    const fs::path su = write_file("sel_su.json", R"({"theta_su": [1.2, -0.4]})");
    auto select = [&](const std::string& alpha, const std::string& seed, const std::string& name,
                      bool reweight = true) {
        std::vector<std::string> a{"select", "--data", data.string(), "--surrogate", su.string(), "--label", "y",
                                   "--gamma", "0.3", "--alpha", alpha, "--seed", seed, "--out",
                                   (kDir / name).string()};
        if (!reweight) a.push_back("--no-reweight");
        return run(a).code;
    };
    REQUIRE(select("0", "5", "a0.csv") == cli::kOk);
    for (const auto& r : read_csv(kDir / "a0.csv")) {
        CHECK(std::stod(r.at("pi")) == 0.3);
        CHECK(std::stod(r.at("weight")) == doctest::Approx(1.0 / 0.3));
    }
    REQUIRE(select("1", "5", "a1.csv") == cli::kOk);
    REQUIRE(select("1", "5", "a1b.csv") == cli::kOk);
    REQUIRE(select("1", "6", "a1c.csv") == cli::kOk);
    CHECK(read_file(kDir / "a1.csv") == read_file(kDir / "a1b.csv"));
    CHECK(read_file(kDir / "a1.csv") != read_file(kDir / "a1c.csv"));
    REQUIRE(select("inf", "5", "hard.csv", false) == cli::kOk);
    int kept = 0;
    for (const auto& r : read_csv(kDir / "hard.csv")) {
        kept += std::stoi(r.at("included"));
        CHECK(std::stod(r.at("weight")) == (std::stod(r.at("pi")) > 0 ? 1.0 : 0.0));
    }
    CHECK(kept == 90);
    // dimension mismatch is a config error, gamma out of range a usage error
    const fs::path su3 = write_file("sel_su3.json", R"({"theta_su": [1, 2, 3]})");
    CHECK(run({"select", "--data", data.string(), "--surrogate", su3.string(), "--label", "y", "--gamma", "0.3",
               "--alpha", "1", "--out", (kDir / "x.csv").string()})
              .code == cli::kConfig);
    CHECK(select("1", "5", "x.csv") == cli::kOk);
    CHECK(run({"select", "--data", data.string(), "--surrogate", su.string(), "--gamma", "1.5", "--alpha", "1",
               "--out", (kDir / "x.csv").string()})
              .code == cli::kUsage);
}

TEST_CASE("sweep output is reproducible, thread invariant and joins with highdim-solve") {
    const fs::path cfg = write_file("small.json", kSmallSweep);
    const fs::path a = kDir / "sweep_a.csv", b = kDir / "sweep_b.csv", hd = kDir / "hd.csv";
    REQUIRE(run({"sweep", "--config", cfg.string(), "--out", a.string(), "--jobs", "1"}).code == cli::kOk);
    REQUIRE(run({"sweep", "--config", cfg.string(), "--out", b.string(), "--jobs", "3"}).code == cli::kOk);
    CHECK(read_file(a) == read_file(b));
    CHECK(read_file(kDir / "sweep_a.cells.csv") == read_file(kDir / "sweep_b.cells.csv"));
    const fs::path c = kDir / "sweep_c.csv";
    REQUIRE(run({"sweep", "--config", cfg.string(), "--out", c.string(), "--seed", "4"}).code == cli::kOk);
    CHECK(read_file(a) != read_file(c));

    REQUIRE(run({"highdim-solve", "--config", cfg.string(), "--out", hd.string()}).code == cli::kOk);
    std::map<std::string, double> theory;
    for (const auto& r : read_csv(hd)) {
        CHECK(r.at("status") == "ok");
        theory[r.at("gamma") + "|" + r.at("alpha") + "|" + r.at("lambda")] = std::stod(r.at("test_error"));
    }
    const auto rows = read_csv(a);
    CHECK(rows.size() == 2 * 2 * 2);
    for (const auto& r : rows) {
        const std::string key = r.at("gamma") + "|" + r.at("alpha") + "|" + r.at("lambda");
        REQUIRE(theory.count(key));
        CHECK(std::stod(r.at("theory_test_error")) == doctest::Approx(theory[key]).epsilon(1e-12));
    }

    // simulate leaves the theory column empty
    const fs::path s = kDir / "sim.csv";
    REQUIRE(run({"simulate", "--config", cfg.string(), "--out", s.string()}).code == cli::kOk);
    for (const auto& r : read_csv(s)) CHECK(r.at("theory_test_error") == "nan");
}

TEST_CASE("remaining subcommands run on the shipped configs") {
    CHECK(run({"minimax-discrete", "--config", configs() + "/minimax_discrete.json", "--out",
               (kDir / "mm.csv").string()})
              .code == cli::kOk);
    CHECK(run({"ridgeless", "--config", configs() + "/ridgeless_signflip.json", "--out", (kDir / "rl.csv").string()})
              .code == cli::kOk);
    const fs::path nm = kDir / "nm.csv";
    REQUIRE(run({"nonmono-check", "--config", configs() + "/nonmono_cubic.json", "--out", nm.string()}).code ==
            cli::kOk);
    CHECK(read_file(nm).find("certified,1") != std::string::npos);
}

TEST_CASE("the installed binary reports the same exit codes") {
    auto status = [](const std::string& args) {
        const int rc = std::system((std::string(SUBLAB_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    };
    CHECK(status("") == 2);
    CHECK(status("--help") == 0);
    const fs::path bad = write_file("bad2.json", R"({"spec_version": 3})");
    CHECK(status("sweep --config " + bad.string()) == 3);
    CHECK(status("lowdim-rho --config " + configs() + "/uniform_1d.json --out " + (kDir / "u.csv").string()) == 0);
}
