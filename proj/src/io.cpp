#include "sublab/io.hpp"
#include "sublab/minimax.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace sublab::io {

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    cells.push_back(cur);
    return cells;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& text, double& out) {
    const std::string t = trim(text);
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtod(t.c_str(), &end);
    return end == t.c_str() + t.size();
}

std::vector<std::vector<std::string>> read_csv_rows(const std::string& path) {
    std::string text = read_file(path);
    if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        rows.push_back(split_csv_line(line));
    }
    return rows;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

// JSON reader that remembers which keys were consumed.
class Obj {
public:
    Obj(const json& j, std::string ptr) : j_(j), ptr_(std::move(ptr)) {
        if (!j_.is_object()) throw ConfigError(ptr_.empty() ? "/" : ptr_, "expected an object");
    }
    bool has(const std::string& key) const { return j_.contains(key); }
    std::string at_ptr(const std::string& key) const { return ptr_ + "/" + key; }
    const json& raw(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }
    Obj child(const std::string& key) { return Obj(raw(key), at_ptr(key)); }

    double number(const std::string& key, double dflt) {
        if (!has(key)) return dflt;
        return as_number(raw(key), at_ptr(key));
    }
    long integer(const std::string& key, long dflt) {
        if (!has(key)) return dflt;
        const json& v = raw(key);
        if (!v.is_number_integer()) throw ConfigError(at_ptr(key), "expected an integer");
        return v.get<long>();
    }
    std::uint64_t seed(const std::string& key, std::uint64_t dflt) {
        if (!has(key)) return dflt;
        const json& v = raw(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
            throw ConfigError(at_ptr(key), "expected a nonnegative integer");
        return v.get<std::uint64_t>();
    }
    bool boolean(const std::string& key, bool dflt) {
        if (!has(key)) return dflt;
        const json& v = raw(key);
        if (!v.is_boolean()) throw ConfigError(at_ptr(key), "expected true or false");
        return v.get<bool>();
    }
    std::string string(const std::string& key, const std::string& dflt) {
        if (!has(key)) return dflt;
        const json& v = raw(key);
        if (!v.is_string()) throw ConfigError(at_ptr(key), "expected a string");
        return v.get<std::string>();
    }
    std::vector<double> numbers(const std::string& key, const std::vector<double>& dflt) {
        if (!has(key)) return dflt;
        const json& v = raw(key);
        if (v.is_number() || v.is_string()) return {as_number(v, at_ptr(key))};
        if (!v.is_array()) throw ConfigError(at_ptr(key), "expected a number or an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], at_ptr(key) + "/" + std::to_string(i)));
        return out;
    }
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) throw ConfigError(at_ptr(it.key()), "unknown key");
    }

    static double as_number(const json& v, const std::string& ptr) {
        if (v.is_number()) return v.get<double>();
        if (v.is_string()) {
            const std::string s = v.get<std::string>();
            if (s == "inf" || s == "+inf" || s == "Infinity") return std::numeric_limits<double>::infinity();
            if (s == "-inf" || s == "-Infinity") return -std::numeric_limits<double>::infinity();
        }
        throw ConfigError(ptr, "expected a number");
    }

private:
    const json& j_;
    std::string ptr_;
    std::set<std::string> used_;
};

json number_json(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return nullptr;
    return v;
}

json numbers_json(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(number_json(x));
    return a;
}

json vector_json(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

LabelKernel parse_kernel(Obj& k) {
    const std::string kind = k.string("kind", "glm-logistic");
    const double norm = k.number("theta0_norm", 1.0);
    double eta = 1.0, zeta = 1.0, tau = 1.0, c = 0.0;
    if (k.has("params")) {
        Obj p = k.child("params");
        auto allow = [&](std::initializer_list<const char*> keys) {
            for (const char* key : keys) {
                if (!p.has(key)) continue;
                const std::string s(key);
                const double v = p.number(s, 0.0);
                if (s == "eta") eta = v;
                if (s == "zeta") zeta = v;
                if (s == "tau") tau = v;
                if (s == "c") c = v;
            }
            p.finish();
        };
        if (kind == "sign-flip") allow({"eta"});
        else if (kind == "staircase") allow({"eta", "zeta"});
        else if (kind == "gaussian-noise") allow({"tau"});
        else if (kind == "cubic") allow({"c"});
        else allow({});
    }
    try {
        if (kind == "glm-logistic") return LabelKernel::glm_logistic(norm);
        if (kind == "sign-flip") return LabelKernel::sign_flip(eta, norm);
        if (kind == "staircase") return LabelKernel::staircase(eta, zeta, norm);
        if (kind == "gaussian-noise") return LabelKernel::gaussian_noise(tau, norm);
        if (kind == "cubic") return LabelKernel::cubic(c, norm);
    } catch (const InvalidArgument& e) {
        throw ConfigError(k.at_ptr("params"), e.what());
    }
    throw ConfigError(k.at_ptr("kind"), "unknown kernel kind '" + kind + "'");
}

json kernel_json(const LabelKernel& k) {
    json j;
    json params = json::object();
    switch (k.kind()) {
        case KernelKind::GlmLogistic: j["kind"] = "glm-logistic"; break;
        case KernelKind::SignFlip:
            j["kind"] = "sign-flip";
            params["eta"] = k.eta();
            break;
        case KernelKind::Staircase:
            j["kind"] = "staircase";
            params["eta"] = k.eta();
            params["zeta"] = k.zeta();
            break;
        case KernelKind::GaussianNoise:
            j["kind"] = "gaussian-noise";
            params["tau"] = k.tau();
            break;
        case KernelKind::Deterministic:
            if (k.name() != "cubic") throw InvalidArgument("only the cubic deterministic kernel is serializable");
            j["kind"] = "cubic";
            params["c"] = k.cubic_c();
            break;
    }
    j["params"] = params;
    j["theta0_norm"] = k.theta0_norm();
    return j;
}

const char* population_name(PopulationKind k) {
    switch (k) {
        case PopulationKind::Uniform: return "uniform";
        case PopulationKind::Powerlaw: return "powerlaw";
        case PopulationKind::Gaussian: return "gaussian";
    }
    return "";
}

const char* model_name(ModelKind k) {
    switch (k) {
        case ModelKind::Linear: return "linear";
        case ModelKind::Logistic: return "logistic";
        case ModelKind::Misspecified: return "misspecified";
    }
    return "";
}

const char* metric_name(MetricKind k) {
    switch (k) {
        case MetricKind::Identity: return "identity";
        case MetricKind::Sigma: return "sigma";
        case MetricKind::Hessian: return "hessian";
        case MetricKind::Custom: return "custom";
    }
    return "";
}

template <class E, class F>
E pick(const std::string& s, std::initializer_list<E> all, F name, const std::string& ptr) {
    for (E e : all)
        if (s == name(e)) return e;
    throw ConfigError(ptr, "unknown value '" + s + "'");
}

}  // namespace

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

IngestedCsv read_dataset_csv(const std::string& path, const std::optional<std::string>& label_column) {
    const auto rows = read_csv_rows(path);
    if (rows.empty()) throw InvalidArgument(path + ": empty file");
    std::vector<std::string> header;
    for (const auto& h : rows[0]) header.push_back(trim(h));
    const std::size_t ncol = header.size();
    std::optional<std::size_t> label_idx;
    if (label_column) {
        for (std::size_t j = 0; j < ncol; ++j)
            if (header[j] == *label_column) label_idx = j;
        if (!label_idx) throw InvalidArgument(path + ": no column named '" + *label_column + "'");
    }
    const std::size_t nrow = rows.size() - 1;
    if (nrow == 0) throw InvalidArgument(path + ": no data rows");
    const std::size_t p = ncol - (label_idx ? 1 : 0);
    if (p == 0) throw InvalidArgument(path + ": no feature columns");
    Matrix X(static_cast<Eigen::Index>(nrow), static_cast<Eigen::Index>(p));
    Vector y(label_idx ? static_cast<Eigen::Index>(nrow) : 0);
    IngestedCsv out{Dataset(Matrix::Zero(1, 1)), {}, label_column, {}, {}};
    for (std::size_t j = 0; j < ncol; ++j)
        if (!label_idx || j != *label_idx) out.feature_names.push_back(header[j]);
    for (std::size_t i = 0; i < nrow; ++i) {
        const auto& r = rows[i + 1];
        // line numbers are 1-based and count the header
        const std::string where = path + ": row " + std::to_string(i + 2);
        if (r.size() != ncol)
            throw InvalidArgument(where + ": expected " + std::to_string(ncol) + " cells, got " + std::to_string(r.size()));
        std::size_t f = 0;
        for (std::size_t j = 0; j < ncol; ++j) {
            double v;
            if (!parse_number(r[j], v) || !std::isfinite(v))
                throw InvalidArgument(where + ", column '" + header[j] + "': " +
                                      (trim(r[j]).empty() ? "missing value" : "non-numeric value '" + r[j] + "'"));
            if (label_idx && j == *label_idx) y(static_cast<Eigen::Index>(i)) = v;
            else X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f++)) = v;
        }
    }
    const double n = static_cast<double>(nrow);
    out.mean = X.colwise().sum().transpose() / n;
    out.scale.resize(static_cast<Eigen::Index>(p));
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        X.col(j).array() -= out.mean(j);
        const double var = X.col(j).squaredNorm() / n;
        if (!(var > 0.0)) throw InvalidArgument(path + ": column '" + out.feature_names[static_cast<std::size_t>(j)] + "' is constant");
        out.scale(j) = std::sqrt(var);
        X.col(j) /= out.scale(j);
    }
    std::optional<Vector> labels;
    if (label_idx) {
        const bool zero_one = ((y.array() == 0.0) || (y.array() == 1.0)).all();
        if (zero_one) y = 2.0 * y.array() - 1.0;
        labels = y;
    }
    out.data = Dataset(std::move(X), std::move(labels));
    return out;
}

void write_dataset_csv(const Dataset& data, const std::vector<std::string>& feature_names,
                       const std::optional<std::string>& label_name, const std::string& path) {
    if (static_cast<Eigen::Index>(feature_names.size()) != data.p()) throw InvalidArgument("feature name count mismatch");
    if (data.labelled() != label_name.has_value()) throw InvalidArgument("label name must be given iff labels exist");
    Table t;
    t.columns = feature_names;
    if (label_name) t.columns.push_back(*label_name);
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        std::vector<std::string> r;
        for (Eigen::Index j = 0; j < data.p(); ++j) r.push_back(format_double(data.features(i, j)));
        if (label_name) r.push_back(format_double((*data.labels)(i)));
        t.add(std::move(r));
    }
    write_table(t, path, OutputFormat::Csv);
}

LabConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("/", std::string("invalid JSON: ") + e.what());
    }
    Obj top(root, "");
    LabConfig c;
    if (!top.has("spec_version")) throw ConfigError("/spec_version", "missing (must be 1)");
    c.spec_version = static_cast<int>(top.integer("spec_version", 0));
    if (c.spec_version != 1) throw ConfigError("/spec_version", "unsupported version " + std::to_string(c.spec_version));
    sim::ExperimentConfig& e = c.experiment;

    if (top.has("experiment")) {
        Obj o = top.child("experiment");
        e.N = static_cast<int>(o.integer("N", e.N));
        e.p = static_cast<int>(o.integer("p", e.p));
        e.seed = o.seed("seed", e.seed);
        e.replicates = static_cast<int>(o.integer("replicates", e.replicates));
        e.theta0_seed = o.seed("theta0_seed", e.theta0_seed);
        e.holdout = o.integer("holdout", e.holdout);
        e.theory = o.boolean("theory", e.theory);
        if (o.has("delta0")) {
            c.delta0 = o.number("delta0", 0.0);
            if (!(*c.delta0 > 0.0)) throw ConfigError("/experiment/delta0", "must be positive");
        }
        if (e.N < 2) throw ConfigError("/experiment/N", "must be >= 2");
        if (e.p < 1) throw ConfigError("/experiment/p", "must be >= 1");
        if (e.replicates < 1) throw ConfigError("/experiment/replicates", "must be >= 1");
        if (e.holdout < 0) throw ConfigError("/experiment/holdout", "must be >= 0");
        o.finish();
    }
    if (top.has("kernel")) {
        Obj o = top.child("kernel");
        e.kernel = parse_kernel(o);
        o.finish();
    }
    if (top.has("loss")) {
        Obj o = top.child("loss");
        const std::string train = o.string("train", "logistic");
        if (train == "logistic") e.loss.kind = LossKind::Logistic;
        else if (train == "square") e.loss.kind = LossKind::Square;
        else throw ConfigError("/loss/train", "expected 'logistic' or 'square'");
        const std::string test = o.string("test", e.loss.kind == LossKind::Logistic ? "misclassification" : "same");
        if (test == "same") e.loss.test = TestKind::SameAsTrain;
        else if (test == "misclassification") e.loss.test = TestKind::Misclassification;
        else throw ConfigError("/loss/test", "expected 'same' or 'misclassification'");
        o.finish();
    }
    if (top.has("selection")) {
        Obj o = top.child("selection");
        try {
            e.scheme = scheme_kind_from_string(o.string("kind", "alpha-family"));
        } catch (const InvalidArgument& ex) {
            throw ConfigError("/selection/kind", ex.what());
        }
        e.gammas = o.numbers("gamma", e.gammas);
        for (std::size_t i = 0; i < e.gammas.size(); ++i)
            if (!(e.gammas[i] > 0.0 && e.gammas[i] <= 1.0))
                throw ConfigError("/selection/gamma/" + std::to_string(i), "gamma must lie in (0, 1]");
        e.alphas = o.numbers("alpha", e.alphas);
        for (std::size_t i = 0; i < e.alphas.size(); ++i)
            if (std::isnan(e.alphas[i])) throw ConfigError("/selection/alpha/" + std::to_string(i), "NaN");
        e.reweight = o.boolean("reweight", e.reweight);
        if (e.gammas.empty()) throw ConfigError("/selection/gamma", "must be nonempty");
        if (e.alphas.empty()) throw ConfigError("/selection/alpha", "must be nonempty");
        o.finish();
    }
    if (top.has("surrogate")) {
        Obj o = top.child("surrogate");
        const std::string mode = o.string("mode", "perfect");
        if (mode == "perfect") e.surrogate = sim::SurrogateMode::Perfect;
        else if (mode == "fitted") e.surrogate = sim::SurrogateMode::Fitted;
        else throw ConfigError("/surrogate/mode", "expected 'perfect' or 'fitted'");
        e.n_su = static_cast<int>(o.integer("N_su", e.n_su));
        e.lambda_su = o.number("lambda", e.lambda_su);
        if (e.surrogate == sim::SurrogateMode::Fitted && e.n_su < 1) throw ConfigError("/surrogate/N_su", "must be >= 1");
        if (!(e.lambda_su > 0.0)) throw ConfigError("/surrogate/lambda", "must be positive");
        o.finish();
    }
    if (top.has("ridge")) {
        Obj o = top.child("ridge");
        if (o.has("lambda") && o.has("grid")) throw ConfigError("/ridge", "give either lambda or grid");
        if (o.has("grid")) {
            e.lambda_grid = true;
            const json& g = root["ridge"]["grid"];
            if (g.is_string() && g.get<std::string>() == "standard") {
                o.raw("grid");
                e.lambdas = {0.001, 0.01, 0.03, 0.06, 0.1, 1.0, 10.0};
            } else {
                e.lambdas = o.numbers("grid", {});
            }
        } else {
            e.lambdas = o.numbers("lambda", e.lambdas);
        }
        const std::string key = e.lambda_grid ? "grid" : "lambda";
        if (e.lambdas.empty()) throw ConfigError("/ridge/" + key, "must be nonempty");
        for (std::size_t i = 0; i < e.lambdas.size(); ++i)
            if (!(e.lambdas[i] > 0.0 && std::isfinite(e.lambdas[i])))
                throw ConfigError("/ridge/" + key + (o.has(key) && root["ridge"][key].is_array() ? "/" + std::to_string(i) : ""),
                                  "lambda must be positive");
        o.finish();
    }
    if (top.has("quadrature")) {
        Obj o = top.child("quadrature");
        e.orders.gaussian = static_cast<int>(o.integer("gaussian", e.orders.gaussian));
        e.orders.noise = static_cast<int>(o.integer("noise", e.orders.noise));
        e.orders.panel = static_cast<int>(o.integer("panel", e.orders.panel));
        if (e.orders.gaussian < 2 || e.orders.gaussian > 200) throw ConfigError("/quadrature/gaussian", "must lie in [2, 200]");
        if (e.orders.noise < 2 || e.orders.noise > 200) throw ConfigError("/quadrature/noise", "must lie in [2, 200]");
        if (e.orders.panel < 1 || e.orders.panel > 200) throw ConfigError("/quadrature/panel", "must lie in [1, 200]");
        o.finish();
    }
    if (top.has("lowdim")) {
        Obj o = top.child("lowdim");
        LowdimConfig& l = c.lowdim;
        l.population = pick(o.string("population", population_name(l.population)),
                            {PopulationKind::Uniform, PopulationKind::Powerlaw, PopulationKind::Gaussian},
                            population_name, "/lowdim/population");
        l.x_max = o.number("x_max", l.x_max);
        l.exponent = o.number("exponent", l.exponent);
        l.atoms = static_cast<int>(o.integer("atoms", l.atoms));
        l.dim = static_cast<int>(o.integer("dim", l.dim));
        l.grid_points = static_cast<int>(o.integer("grid_points", l.grid_points));
        l.grid_seed = o.seed("grid_seed", l.grid_seed);
        l.model = pick(o.string("model", model_name(l.model)),
                       {ModelKind::Linear, ModelKind::Logistic, ModelKind::Misspecified}, model_name, "/lowdim/model");
        l.tau = o.number("tau", l.tau);
        l.theta_norm = o.number("theta_norm", l.theta_norm);
        l.metric = pick(o.string("metric", metric_name(l.metric)),
                        {MetricKind::Identity, MetricKind::Sigma, MetricKind::Hessian}, metric_name, "/lowdim/metric");
        if (o.has("schemes")) {
            const json& s = o.raw("schemes");
            if (!s.is_array() || s.empty()) throw ConfigError("/lowdim/schemes", "expected a nonempty array");
            l.schemes.clear();
            for (std::size_t i = 0; i < s.size(); ++i) {
                const std::string ptr = "/lowdim/schemes/" + std::to_string(i);
                if (!s[i].is_string()) throw ConfigError(ptr, "expected a string");
                const SchemeKind k = pick(s[i].get<std::string>(),
                                          {SchemeKind::Random, SchemeKind::UnbiasedInfluence, SchemeKind::NonreweightOptimal},
                                          [](SchemeKind x) { return to_string(x); }, ptr);
                l.schemes.push_back(k);
            }
        }
        l.draws = o.integer("draws", l.draws);
        l.draw_seed = o.seed("draw_seed", l.draw_seed);
        l.greedy_gamma = o.number("greedy_gamma", l.greedy_gamma);
        if (!(l.x_max > 0.0)) throw ConfigError("/lowdim/x_max", "must be positive");
        if (l.atoms < 1) throw ConfigError("/lowdim/atoms", "must be >= 1");
        if (l.dim < 1) throw ConfigError("/lowdim/dim", "must be >= 1");
        if (l.grid_points < 1) throw ConfigError("/lowdim/grid_points", "must be >= 1");
        if (!(l.tau > 0.0)) throw ConfigError("/lowdim/tau", "must be positive");
        if (l.draws < 1) throw ConfigError("/lowdim/draws", "must be >= 1");
        if (!(l.greedy_gamma > 0.0 && l.greedy_gamma < 1.0)) throw ConfigError("/lowdim/greedy_gamma", "must lie in (0, 1)");
        o.finish();
    }
    if (top.has("minimax")) {
        Obj o = top.child("minimax");
        MinimaxConfig m;
        for (const char* key : {"p", "q", "theta_su"})
            if (!o.has(key)) throw ConfigError(std::string("/minimax/") + key, "missing");
        m.p = to_vector(o.numbers("p", {}));
        m.q = to_vector(o.numbers("q", {}));
        m.theta_su = to_vector(o.numbers("theta_su", {}));
        m.eps = o.number("eps", 0.0);
        minimax::DiscreteMinimaxSpec spec{m.p, m.q, m.theta_su, m.eps, 0.5};
        try {
            spec.validate();
        } catch (const InvalidArgument& ex) {
            throw ConfigError("/minimax", ex.what());
        }
        c.minimax = m;
        o.finish();
    }
    if (top.has("ridgeless")) {
        Obj o = top.child("ridgeless");
        c.ridgeless_delta = o.numbers("delta", c.ridgeless_delta);
        for (std::size_t i = 0; i < c.ridgeless_delta.size(); ++i)
            if (!(c.ridgeless_delta[i] > 0.0)) throw ConfigError("/ridgeless/delta/" + std::to_string(i), "must be positive");
        o.finish();
    }
    if (top.has("output")) {
        Obj o = top.child("output");
        c.output.path = o.string("path", c.output.path);
        const std::string f = o.string("format", "csv");
        if (f == "csv") c.output.format = OutputFormat::Csv;
        else if (f == "json") c.output.format = OutputFormat::Json;
        else throw ConfigError("/output/format", "expected 'csv' or 'json'");
        o.finish();
    }
    top.finish();
    try {
        e.validate();
    } catch (const InvalidArgument& ex) {
        throw ConfigError("/", ex.what());
    }
    return c;
}

LabConfig read_config(const std::string& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::exception& ex) {
        throw ConfigError("/", ex.what());
    }
    return parse_config(text);
}

std::string dump_config(const LabConfig& c) {
    const sim::ExperimentConfig& e = c.experiment;
    json j;
    j["spec_version"] = c.spec_version;
    j["experiment"] = {{"N", e.N},       {"p", e.p},           {"seed", e.seed},    {"replicates", e.replicates},
                       {"theta0_seed", e.theta0_seed}, {"holdout", e.holdout}, {"theory", e.theory}};
    if (c.delta0) j["experiment"]["delta0"] = *c.delta0;
    j["kernel"] = kernel_json(e.kernel);
    j["loss"] = {{"train", e.loss.kind == LossKind::Logistic ? "logistic" : "square"},
                 {"test", e.loss.test == TestKind::Misclassification ? "misclassification" : "same"}};
    j["selection"] = {{"kind", to_string(e.scheme)},
                      {"gamma", numbers_json(e.gammas)},
                      {"alpha", numbers_json(e.alphas)},
                      {"reweight", e.reweight}};
    j["surrogate"] = {{"mode", e.surrogate == sim::SurrogateMode::Perfect ? "perfect" : "fitted"},
                      {"N_su", e.n_su},
                      {"lambda", e.lambda_su}};
    j["ridge"] = json::object();
    j["ridge"][e.lambda_grid ? "grid" : "lambda"] = numbers_json(e.lambdas);
    j["quadrature"] = {{"gaussian", e.orders.gaussian}, {"noise", e.orders.noise}, {"panel", e.orders.panel}};
    const LowdimConfig& l = c.lowdim;
    json schemes = json::array();
    for (auto s : l.schemes) schemes.push_back(to_string(s));
    j["lowdim"] = {{"population", population_name(l.population)},
                   {"x_max", l.x_max},
                   {"exponent", l.exponent},
                   {"atoms", l.atoms},
                   {"dim", l.dim},
                   {"grid_points", l.grid_points},
                   {"grid_seed", l.grid_seed},
                   {"model", model_name(l.model)},
                   {"tau", l.tau},
                   {"theta_norm", l.theta_norm},
                   {"metric", metric_name(l.metric)},
                   {"schemes", schemes},
                   {"draws", l.draws},
                   {"draw_seed", l.draw_seed},
                   {"greedy_gamma", l.greedy_gamma}};
    if (c.minimax)
        j["minimax"] = {{"p", vector_json(c.minimax->p)},
                        {"q", vector_json(c.minimax->q)},
                        {"theta_su", vector_json(c.minimax->theta_su)},
                        {"eps", c.minimax->eps}};
    j["ridgeless"] = {{"delta", numbers_json(c.ridgeless_delta)}};
    j["output"] = {{"path", c.output.path}, {"format", c.output.format == OutputFormat::Csv ? "csv" : "json"}};
    return j.dump(2);
}

const std::vector<std::string> kResultColumns = {
    "scheme",        "gamma",      "alpha",      "replicate",    "realized_n", "test_error",
    "misclassification", "excess", "theory_test_error", "alpha0_fit", "alphas_fit", "alphaperp_fit",
    "status",        "lambda",     "holdout_test_error"};

namespace {

std::vector<std::string> row_cells(const sim::ResultRow& r) {
    return {r.scheme,
            format_double(r.gamma),
            format_double(r.alpha),
            std::to_string(r.replicate),
            std::to_string(r.realized_n),
            format_double(r.test_error),
            format_double(r.misclassification),
            format_double(r.excess),
            format_double(r.theory_test_error),
            format_double(r.alpha0_fit),
            format_double(r.alphas_fit),
            format_double(r.alphaperp_fit),
            r.status,
            format_double(r.lambda),
            format_double(r.holdout_test_error)};
}

Table results_table(const std::vector<sim::ResultRow>& rows) {
    Table t;
    t.columns = kResultColumns;
    for (const auto& r : rows) t.add(row_cells(r));
    return t;
}

// Numeric-looking cells become JSON numbers; inf/nan become strings/null.
json cell_json(const std::string& s) {
    if (s == "nan") return nullptr;
    if (s == "inf" || s == "-inf") return s;
    double v;
    if (parse_number(s, v)) {
        if (s.find_first_of(".eE") == std::string::npos) {
            try {
                return std::stoll(s);
            } catch (...) {
            }
        }
        return v;
    }
    return s;
}

}  // namespace

void Table::add(std::vector<std::string> row) {
    if (row.size() != columns.size()) throw InvalidArgument("table row width does not match header");
    rows.push_back(std::move(row));
}

void write_table(const Table& t, const std::string& path, OutputFormat format) {
    std::ofstream out = open_out(path);
    if (format == OutputFormat::Csv) {
        for (std::size_t j = 0; j < t.columns.size(); ++j) out << (j ? "," : "") << csv_escape(t.columns[j]);
        out << "\n";
        for (const auto& r : t.rows) {
            for (std::size_t j = 0; j < r.size(); ++j) out << (j ? "," : "") << csv_escape(r[j]);
            out << "\n";
        }
    } else {
        // hand-rolled so numbers keep their 17-digit text
        out << "[";
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            out << (i ? ",\n  {" : "\n  {");
            for (std::size_t j = 0; j < t.columns.size(); ++j) {
                const json v = cell_json(t.rows[i][j]);
                out << (j ? ", " : "") << json(t.columns[j]).dump() << ": ";
                if (v.is_number_float()) out << t.rows[i][j];
                else out << v.dump();
            }
            out << "}";
        }
        out << (t.rows.empty() ? "]\n" : "\n]\n");
    }
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

void write_results(const std::vector<sim::ResultRow>& rows, const std::string& path, OutputFormat format) {
    if (rows.empty()) throw InvalidArgument("write_results needs at least one row");
    write_table(results_table(rows), path, format);
}

std::vector<sim::ResultRow> read_results_csv(const std::string& path) {
    const auto rows = read_csv_rows(path);
    if (rows.empty() || rows[0] != kResultColumns) throw InvalidArgument(path + ": not a results table");
    std::vector<sim::ResultRow> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != kResultColumns.size()) throw InvalidArgument(path + ": row " + std::to_string(i + 1) + " has wrong width");
        auto num = [&](std::size_t j) {
            double v;
            if (!parse_number(r[j], v)) throw InvalidArgument(path + ": row " + std::to_string(i + 1) + ", column '" + kResultColumns[j] + "'");
            return v;
        };
        sim::ResultRow x;
        x.scheme = r[0];
        x.gamma = num(1);
        x.alpha = num(2);
        x.replicate = static_cast<int>(num(3));
        x.realized_n = static_cast<long>(num(4));
        x.test_error = num(5);
        x.misclassification = num(6);
        x.excess = num(7);
        x.theory_test_error = num(8);
        x.alpha0_fit = num(9);
        x.alphas_fit = num(10);
        x.alphaperp_fit = num(11);
        x.status = r[12];
        x.lambda = num(13);
        x.holdout_test_error = num(14);
        out.push_back(std::move(x));
    }
    return out;
}

void write_cells(const std::vector<sim::CellSummary>& cells, const std::string& path, OutputFormat format) {
    Table t;
    t.columns = {"scheme",          "gamma",         "alpha",         "lambda",          "n_ok",
                 "median_test",     "q25_test",      "q75_test",      "median_misclass", "q25_misclass",
                 "q75_misclass",    "theory_test_error", "theory_misclass", "theory_alpha0", "theory_alphas",
                 "theory_alphaperp", "theory_status"};
    for (const auto& c : cells)
        t.add({c.scheme, format_double(c.gamma), format_double(c.alpha), format_double(c.lambda),
               std::to_string(c.n_ok), format_double(c.median_test), format_double(c.q25_test),
               format_double(c.q75_test), format_double(c.median_misclass), format_double(c.q25_misclass),
               format_double(c.q75_misclass), format_double(c.theory_test_error), format_double(c.theory_misclass),
               format_double(c.theory_alpha[0]), format_double(c.theory_alpha[1]), format_double(c.theory_alpha[2]),
               c.theory_status});
    write_table(t, path, format);
}

void write_selection(const sim::SelectionOutcome& sel, const std::string& path) {
    Table t;
    t.columns = {"index", "pi", "weight", "included"};
    for (Eigen::Index i = 0; i < sel.pi.size(); ++i)
        t.add({std::to_string(i), format_double(sel.pi(i)), format_double(sel.weight(i)),
               sel.included[static_cast<std::size_t>(i)] ? "1" : "0"});
    write_table(t, path, OutputFormat::Csv);
}

SurrogateModel read_surrogate(const std::string& path) {
    json root;
    try {
        root = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("/", std::string("invalid JSON: ") + e.what());
    }
    Obj o(root, "");
    if (!o.has("theta_su")) throw ConfigError("/theta_su", "missing");
    const std::vector<double> th = o.numbers("theta_su", {});
    if (th.empty()) throw ConfigError("/theta_su", "must be nonempty");
    SurrogateModel s;
    s.theta_su = to_vector(th);
    if (o.has("beta0")) s.beta0 = o.number("beta0", 0.0);
    if (o.has("beta_s")) s.beta_s = o.number("beta_s", 0.0);
    o.finish();
    return s;
}

}  // namespace sublab::io
