#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bosonlab/fock.hpp"
#include "bosonlab/meanfield.hpp"

namespace bl {

enum class RunKind { Hartree, Pair, Forcing, Cascade, Fock, Full };

std::string kind_name(RunKind k);

// One experiment, read from a schema-versioned JSON document. Field names in the
// document match the member names below; see tools/config.schema.json.
struct ExperimentConfig {
    static constexpr int kSchema = 1;
    int schema_version = kSchema;
    RunKind kind = RunKind::Hartree;

    int d = 1;
    int n = 64;
    double L = 20.0;
    double dt = 0.01;
    double T = 5.0;
    std::vector<double> N{8, 16, 32, 64};
    std::vector<double> beta{0.4};
    int J = 2;
    std::vector<int> sectors{2, 3};
    unsigned seed = 1;
    int record_every = 10;

    Profile potential{};
    double phi_width = 1.0;
    double kick = 0.0;
    double fit_from = -1.0;  // decay fit window [fit_from, T]; default T / 4

    struct {
        bool limit = false;   // also run the limit equation and record the distance
    } hartree;
    struct {
        bool regular_budget = false;
        int max_n_l4 = 24;
    } cascade;
    struct {
        int max_n_l4 = 64;
    } forcing;
    struct {
        int M = 5;
        double L = 6.0;
        Laplacian laplacian = Laplacian::Spectral;
        ModeQuadrature quadrature = ModeQuadrature::CellAverage;
        std::vector<double> times{0.0, 1.0};
        double dt = 1e-3;
        double width = 1.0;
        std::vector<int> refine_M;  // extra sweeps at these mode counts
    } fock;
    struct {
        double residual_abort = 1e-4;
        double gate = 1e-8;
        double fock_tail = 1e-8;
        double fock_max_dim = 4e6;
    } tol;

    std::string output;  // run directory; --out overrides
};

// Parse a JSON document. Unknown keys, wrong types and bad enum names throw
// ValidationError naming the field.
ExperimentConfig parse_config(const std::string& json_text);
std::string config_json(const ExperimentConfig& cfg);  // canonical snapshot, all fields

// Every guard of the modules the run will call, checked before any compute.
// Throws ValidationError naming the field and the minimal fix.
void validate(const ExperimentConfig& cfg);

struct GateResult {
    std::string name;
    bool passed = false;
    double value = 0.0;
    double tol = 0.0;
};

struct RunOptions {
    int threads = 1;
    bool seed_override = false;
    unsigned seed = 1;
};

struct RunResult {
    std::filesystem::path dir;
    std::vector<GateResult> gates;
    bool gates_passed = true;
    std::vector<std::string> artifacts;  // relative paths listed in the manifest
};

// Validates, creates the run directory, runs, and writes CSVs, fields/*.bin,
// summary.json, report.md and manifest.json (with SHA-256 of every other file).
// An exception mid-run leaves a manifest with status "aborted" and is rethrown.
RunResult run_experiment(ExperimentConfig cfg, const std::filesystem::path& out, const RunOptions& opt = {});

// Markdown report from a finished run directory. Throws ValidationError listing
// missing or altered artifacts by name.
std::string render_report(const std::filesystem::path& dir);

}  // namespace bl
