#include <doctest.h>

#include "sublab/io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sublab;
using namespace sublab::io;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "sublab_test_io";
    fs::create_directories(dir);
    return dir / name;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream(p) << s;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::string kMinimal = R"({"spec_version": 1})";

std::string pointer_of(const std::string& json) {
    try {
        parse_config(json);
    } catch (const ConfigError& e) {
        return e.pointer();
    }
    return "";
}

}  // namespace

TEST_CASE("format_double round trips") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) CHECK(std::stod(format_double(v)) == v);
    CHECK(format_double(NAN) == "nan");
    CHECK(format_double(INFINITY) == "inf");
    CHECK(format_double(-INFINITY) == "-inf");
}

TEST_CASE("dataset csv ingestion") {
    const fs::path p = scratch("data.csv");
    write_text(p, "\xEF\xBB\xBF" "a,\"b, quoted\",label\n1,10,0\n2,10.5,1\n3,11,1\n");
    const IngestedCsv d = read_dataset_csv(p.string(), "label");
    CHECK(d.data.n() == 3);
    CHECK(d.data.p() == 2);
    CHECK(d.feature_names[0] == "a");
    CHECK(d.feature_names[1] == "b, quoted");
    CHECK(*d.label_name == "label");
    CHECK((*d.data.labels)(0) == -1.0);
    CHECK((*d.data.labels)(1) == 1.0);
    // standardized with the N denominator
    for (int j = 0; j < 2; ++j) {
        CHECK(d.data.features.col(j).mean() == doctest::Approx(0.0).scale(1.0));
        CHECK(d.data.features.col(j).squaredNorm() / 3.0 == doctest::Approx(1.0));
    }
    CHECK(d.mean(0) == doctest::Approx(2.0));
    CHECK(d.scale(0) == doctest::Approx(std::sqrt(2.0 / 3.0)));

    const IngestedCsv u = read_dataset_csv(p.string(), std::nullopt);
    CHECK(u.data.p() == 3);
    CHECK_FALSE(u.data.labelled());

    write_text(p, "a,b\n1,2\n3,x\n");
    try {
        read_dataset_csv(p.string(), std::nullopt);
        FAIL("expected an error");
    } catch (const InvalidArgument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 3") != std::string::npos);
        CHECK(msg.find("'b'") != std::string::npos);
    }
    write_text(p, "a,b\n1,2\n1,3\n");
    CHECK_THROWS_AS(read_dataset_csv(p.string(), std::nullopt), InvalidArgument);
    write_text(p, "a,b\n1,2\n2\n");
    CHECK_THROWS_AS(read_dataset_csv(p.string(), std::nullopt), InvalidArgument);
    CHECK_THROWS_AS(read_dataset_csv(p.string(), "nope"), InvalidArgument);
    CHECK_THROWS(read_dataset_csv(scratch("missing.csv").string(), std::nullopt));
}

TEST_CASE("dataset csv write then read") {
    Rng rng(2);
    Matrix x(50, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    Vector y(50);
    for (int i = 0; i < 50; ++i) y(i) = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const Dataset d(x, y);
    const fs::path p = scratch("roundtrip.csv");
    write_dataset_csv(d, {"x1", "x2", "x3"}, "y", p.string());
    const IngestedCsv r = read_dataset_csv(p.string(), "y");
    CHECK((*r.data.labels - y).norm() == 0.0);
    for (int j = 0; j < 3; ++j) {
        const Vector back = r.data.features.col(j) * r.scale(j) + Vector::Constant(50, r.mean(j));
        CHECK((back - x.col(j)).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("config defaults and canonical dump") {
    const LabConfig c = parse_config(kMinimal);
    CHECK(c.spec_version == 1);
    CHECK(c.experiment.N == 4000);
    CHECK(c.output.format == OutputFormat::Csv);
    const std::string d = dump_config(c);
    CHECK(dump_config(parse_config(d)) == d);
}

TEST_CASE("shipped configs parse and round trip") {
    for (const auto& entry : fs::directory_iterator(SUBLAB_CONFIG_DIR)) {
        if (entry.path().extension() != ".json") continue;
        CAPTURE(entry.path().string());
        const LabConfig c = read_config(entry.path().string());
        const std::string d = dump_config(c);
        CHECK(dump_config(parse_config(d)) == d);
    }
    const LabConfig f = read_config(std::string(SUBLAB_CONFIG_DIR) + "/logistic_panel.json");
    CHECK(f.experiment.N == 34345);
    CHECK(f.experiment.p == 932);
    CHECK(f.experiment.kernel.theta0_norm() == 2.0);
    CHECK(f.experiment.alphas == std::vector<double>{-1.0, 0.0, 0.5, 2.0});
    CHECK(f.experiment.gammas.size() == 5);
    CHECK(f.experiment.lambdas == std::vector<double>{0.01});
}

TEST_CASE("config errors carry json pointers") {
    CHECK(pointer_of(R"({"spec_version": 1, "selection": {"gamma": [0.2, 0.5, 1.5]}})") == "/selection/gamma/2");
    CHECK(pointer_of(R"({"spec_version": 1, "experiment": {"N": 100, "colour": 1}})") == "/experiment/colour");
    CHECK(pointer_of(R"({"spec_version": 1, "bogus": {}})") == "/bogus");
    CHECK(pointer_of(R"({"experiment": {}})") == "/spec_version");
    CHECK(pointer_of(R"({"spec_version": 2})") == "/spec_version");
    CHECK(pointer_of(R"({"spec_version": 1, "experiment": {"N": "many"}})") == "/experiment/N");
    CHECK(pointer_of(R"({"spec_version": 1, "kernel": {"kind": "nope"}})") == "/kernel/kind");
    CHECK(pointer_of(R"({"spec_version": 1, "ridge": {"lambda": 0.1, "grid": "standard"}})") == "/ridge");
    CHECK(pointer_of(R"({"spec_version": 1, "ridge": {"lambda": [0.1, -1]}})") == "/ridge/lambda/1");
    CHECK(pointer_of("{not json") == "/");
}

TEST_CASE("config values") {
    const LabConfig c = parse_config(R"({
      "spec_version": 1,
      "experiment": {"N": 500, "p": 10, "seed": 3, "replicates": 2, "holdout": 0},
      "kernel": {"kind": "staircase", "params": {"eta": 0.95, "zeta": 0.7}, "theta0_norm": 5},
      "loss": {"train": "logistic", "test": "misclassification"},
      "selection": {"kind": "alpha-family", "gamma": 0.5, "alpha": ["inf", "-inf", 1], "reweight": true},
      "surrogate": {"mode": "fitted", "N_su": 300, "lambda": 0.1},
      "ridge": {"grid": "standard"},
      "output": {"path": "x.json", "format": "json"}
    })");
    const auto& e = c.experiment;
    CHECK(e.kernel.kind() == KernelKind::Staircase);
    CHECK(e.kernel.zeta() == 0.7);
    CHECK(e.gammas == std::vector<double>{0.5});
    CHECK(std::isinf(e.alphas[0]));
    CHECK(e.alphas[0] > 0);
    CHECK(e.alphas[1] < 0);
    CHECK(e.reweight);
    CHECK(e.surrogate == sim::SurrogateMode::Fitted);
    CHECK(e.n_su == 300);
    CHECK(e.lambda_grid);
    CHECK(e.lambdas == std::vector<double>{0.001, 0.01, 0.03, 0.06, 0.1, 1.0, 10.0});
    CHECK(c.output.format == OutputFormat::Json);
    CHECK(dump_config(parse_config(dump_config(c))) == dump_config(c));
}

TEST_CASE("results round trip and medians") {
    std::vector<sim::ResultRow> rows;
    Rng rng(6);
    for (int r = 0; r < 7; ++r) {
        sim::ResultRow row;
        row.scheme = "alpha-family";
        row.gamma = 0.4;
        row.alpha = 0.5;
        row.replicate = r;
        row.realized_n = 1000 + r;
        row.test_error = rng.uniform() / 3.0;
        row.misclassification = rng.uniform() * 1e-7;
        row.excess = -rng.normal();
        row.theory_test_error = NAN;
        row.alpha0_fit = rng.normal();
        row.alphas_fit = 1e300 * rng.uniform();
        row.alphaperp_fit = rng.uniform();
        row.status = r == 3 ? "erm-failed" : "ok";
        row.lambda = 0.01;
        row.holdout_test_error = rng.uniform();
        rows.push_back(row);
    }
    const fs::path p = scratch("rows.csv");
    write_results(rows, p.string(), OutputFormat::Csv);
    CHECK(read_text(p).rfind("scheme,gamma,alpha,replicate,realized_n,test_error,misclassification,excess,"
                             "theory_test_error,alpha0_fit,alphas_fit,alphaperp_fit,status",
                             0) == 0);
    const auto back = read_results_csv(p.string());
    REQUIRE(back.size() == rows.size());
    std::vector<double> a, b;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].test_error == doctest::Approx(rows[i].test_error).epsilon(1e-12));
        CHECK(back[i].alphas_fit == doctest::Approx(rows[i].alphas_fit).epsilon(1e-12));
        CHECK(back[i].misclassification == rows[i].misclassification);
        CHECK(back[i].realized_n == rows[i].realized_n);
        CHECK(back[i].status == rows[i].status);
        CHECK(std::isnan(back[i].theory_test_error));
        if (rows[i].status == "ok") {
            a.push_back(rows[i].test_error);
            b.push_back(back[i].test_error);
        }
    }
    CHECK(sim::median(a) == sim::median(b));
    CHECK(sim::quantile(a, 0.25) == sim::quantile(b, 0.25));

    const fs::path j = scratch("rows.json");
    write_results(rows, j.string(), OutputFormat::Json);
    const auto doc = read_text(j);
    CHECK(doc.find("\"status\"") != std::string::npos);
    CHECK(doc.front() == '[');
}

TEST_CASE("tables, selections and surrogates") {
    Table t;
    t.columns = {"k", "v"};
    t.add({"a,b", "1"});
    CHECK_THROWS(t.add({"only one"}));
    const fs::path p = scratch("table.csv");
    write_table(t, p.string(), OutputFormat::Csv);
    CHECK(read_text(p) == "k,v\n\"a,b\",1\n");

    sim::SelectionOutcome s;
    s.pi = Vector::Constant(3, 0.5);
    s.weight = Vector::Constant(3, 2.0);
    s.included = {1, 0, 1};
    const fs::path sp = scratch("sel.csv");
    write_selection(s, sp.string());
    CHECK(read_text(sp).rfind("index,pi,weight,included\n0,0.5,2,1\n", 0) == 0);

    const fs::path su = scratch("su.json");
    write_text(su, R"({"theta_su": [1, -2.5], "beta0": 0.3})");
    const SurrogateModel m = read_surrogate(su.string());
    CHECK(m.theta_su.size() == 2);
    CHECK(m.theta_su(1) == -2.5);
    CHECK(*m.beta0 == 0.3);
    CHECK_FALSE(m.beta_s.has_value());
    write_text(su, R"({"theta": [1]})");
    CHECK_THROWS(read_surrogate(su.string()));
}
