#pragma once

#include "dscn/fcls.hpp"
#include "dscn/gradcheck.hpp"
#include "dscn/model.hpp"
#include "dscn/objective.hpp"
#include "dscn/optimizer.hpp"
#include "dscn/scene.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

// Implementation of the command-line subcommands. The CLI parses flags into
// these option structs; tests and the Python module call them directly.
namespace dscn::harness {

namespace fs = std::filesystem;

/// Exit codes shared by every subcommand.
enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsageError = 2, kNumericalFailure = 3 };

/// Maps an exception thrown by the library to its exit code.
int exit_code_for(const std::exception& e) noexcept;

/// Run bookkeeping written next to every output set.
struct RunManifest {
    std::string subcommand;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json inputs = nlohmann::json::object();
    nlohmann::json outputs = nlohmann::json::object();
    std::vector<std::string> command_line;

    nlohmann::json to_json() const;  // adds a UTC timestamp
    void write(const fs::path& path) const;
};

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const SceneSpec& s);

// --- synth -----------------------------------------------------------------

struct SynthOptions {
    SceneSpec scene;
    fs::path out_dir = ".";
    std::optional<fs::path> manifest;
    std::vector<std::string> command_line;
};

struct SynthOutputs {
    fs::path cube, endmembers, abundance, manifest;
};

SynthOutputs run_synth(const SynthOptions& opts);

// --- train -----------------------------------------------------------------

struct TrainOptions {
    fs::path cube;
    fs::path endmembers;  // .csv or EMM1
    ModelConfig model;    // bands/K are taken from the input files
    TrainConfig train;
    fs::path out_dir = ".";
    std::optional<fs::path> manifest;
    std::vector<std::string> command_line;
    bool verbose = false;
};

struct TrainOutputs {
    fs::path model, loss_csv, manifest;
    TrainResult result;
};

TrainOutputs run_train(const TrainOptions& opts);

void write_loss_csv(const fs::path& path, const std::vector<LossBreakdown>& trace);

// --- unmix -----------------------------------------------------------------

enum class Backend { Dscn, Fcls };

struct UnmixOptions {
    fs::path cube;
    Backend backend = Backend::Dscn;
    std::optional<fs::path> model;       // required for Backend::Dscn
    std::optional<fs::path> endmembers;  // required for Backend::Fcls
    std::optional<fs::path> truth;
    std::optional<fs::path> png_dir;
    FclsConfig fcls;
    fs::path out_dir = ".";
    std::optional<fs::path> manifest;
    std::vector<std::string> command_line;
};

struct UnmixOutputs {
    fs::path abundance, manifest;
    std::vector<fs::path> images;
    std::optional<RmseReport> rmse;
};

UnmixOutputs run_unmix(const UnmixOptions& opts);

/// One PGM per material for the estimate, plus |estimate - truth| when given.
std::vector<fs::path> write_abundance_images(const fs::path& dir, const AbundanceMap& estimate,
                                             const AbundanceMap* truth);

// --- eval ------------------------------------------------------------------

/// Per-material mean and sample standard deviation over trials (x10^-2 scale).
struct TrialSummary {
    std::vector<double> mean, stddev;
    double average_mean = 0.0, average_stddev = 0.0;
    std::size_t trials = 0;
};

TrialSummary summarize_trials(const std::vector<RmseReport>& scaled_reports);

/// "7.06±0.9"
std::string format_mean_std(double mean, double stddev);

/// Table in the x10^-2 convention, one row per material plus "Avg.".
std::string format_rmse_table(const RmseReport& scaled, const std::string& column);
std::string format_trial_table(const TrialSummary& s, const std::string& column);

inline constexpr std::size_t kDefaultTrials = 20;

struct EvalOptions {
    // Single evaluation.
    std::optional<fs::path> estimate;
    fs::path truth;
    // Multi-trial train+unmix; active when trials > 0.
    std::size_t trials = 0;
    std::optional<TrainOptions> pipeline;
    std::uint64_t seed = 0;
    fs::path out_dir = ".";
    std::optional<fs::path> manifest;
    std::vector<std::string> command_line;
};

struct EvalOutputs {
    std::string table;
    fs::path csv, manifest;
    std::vector<RmseReport> reports;  // x10^-2 scale, one per trial (one for single eval)
    std::optional<TrialSummary> summary;
};

EvalOutputs run_eval(const EvalOptions& opts);

// --- gradcheck -------------------------------------------------------------

struct GradcheckSuiteOptions {
    double h = 1e-3;
    double tol = 1e-4;
    std::uint64_t seed = 0;
    /// Test fixture: a layer name ("conv", "maxpool", ...) whose analytic
    /// gradient is deliberately corrupted.
    std::optional<std::string> inject_fault;
};

struct GradcheckEntry {
    std::string layer;   // e.g. "conv", "spectral_norm[per-sample]", "model[DSCN-S]"
    std::string target;  // which tensor was perturbed
    GradCheckReport report;
};

struct GradcheckSuiteResult {
    std::vector<GradcheckEntry> entries;
    bool passed = true;
    double seconds = 0.0;
};

GradcheckSuiteResult run_gradcheck_suite(const GradcheckSuiteOptions& opts);
std::string format_gradcheck_report(const GradcheckSuiteResult& r, const GradcheckSuiteOptions& opts);

}  // namespace dscn::harness
