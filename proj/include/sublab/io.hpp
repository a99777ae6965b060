#pragma once

#include "sublab/core.hpp"
#include "sublab/sim.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sublab::io {

// Raised for malformed config files; `pointer` is a JSON pointer to the bad value.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& pointer, const std::string& what)
        : std::runtime_error(pointer + ": " + what), pointer_(pointer) {}
    const std::string& pointer() const { return pointer_; }

private:
    std::string pointer_;
};

struct IngestedCsv {
    Dataset data;
    std::vector<std::string> feature_names;
    std::optional<std::string> label_name;
    Vector mean;    // x_std = (x - mean) / scale
    Vector scale;
};

// Header row required.  Features are standardized with the N denominator;
// labels in {0,1} become {-1,+1}.
IngestedCsv read_dataset_csv(const std::string& path, const std::optional<std::string>& label_column);
// Features as given (no inverse transform); the label column goes last.
void write_dataset_csv(const Dataset& data, const std::vector<std::string>& feature_names,
                       const std::optional<std::string>& label_name, const std::string& path);

enum class OutputFormat { Csv, Json };

struct OutputConfig {
    std::string path = "results.csv";
    OutputFormat format = OutputFormat::Csv;
};

enum class PopulationKind { Uniform, Powerlaw, Gaussian };
enum class ModelKind { Linear, Logistic, Misspecified };

struct LowdimConfig {
    PopulationKind population = PopulationKind::Uniform;
    double x_max = 1.0;
    double exponent = 4.0;
    int atoms = 20000;          // per side, 1-d laws
    int dim = 5;                // gaussian population
    int grid_points = 100000;   // gaussian population
    std::uint64_t grid_seed = 17;
    ModelKind model = ModelKind::Linear;
    double tau = 1.0;
    double theta_norm = 1.0;    // logistic theta* / misspecified theta0 norm, along e1
    MetricKind metric = MetricKind::Sigma;
    std::vector<SchemeKind> schemes{SchemeKind::Random, SchemeKind::UnbiasedInfluence,
                                    SchemeKind::NonreweightOptimal};
    long draws = 100000;
    std::uint64_t draw_seed = 23;
    double greedy_gamma = 0.98;
};

struct MinimaxConfig {
    Vector p, q, theta_su;
    double eps = 0.0;
};

struct LabConfig {
    int spec_version = 1;
    sim::ExperimentConfig experiment;
    std::optional<double> delta0;   // high-dim solves; defaults to N/p
    LowdimConfig lowdim;
    std::optional<MinimaxConfig> minimax;
    std::vector<double> ridgeless_delta{0.5, 2.0, 4.0};
    OutputConfig output;
};

LabConfig parse_config(const std::string& json_text);
LabConfig read_config(const std::string& path);
// Canonical JSON with every field spelled out; parse_config(dump_config(c)) == c.
std::string dump_config(const LabConfig& config);

// 17 significant digits, round-trippable.
std::string format_double(double v);

extern const std::vector<std::string> kResultColumns;

void write_results(const std::vector<sim::ResultRow>& rows, const std::string& path, OutputFormat format);
std::vector<sim::ResultRow> read_results_csv(const std::string& path);
void write_cells(const std::vector<sim::CellSummary>& cells, const std::string& path, OutputFormat format);

// Generic long-format table: header plus rows of preformatted cells.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    void add(std::vector<std::string> row);
};
void write_table(const Table& table, const std::string& path, OutputFormat format);

void write_selection(const sim::SelectionOutcome& sel, const std::string& path);

// {"theta_su": [...]} with optional "beta0", "beta_s".
SurrogateModel read_surrogate(const std::string& path);

}  // namespace sublab::io
