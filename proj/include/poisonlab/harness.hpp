#pragma once

#include "poisonlab/io.hpp"

#include <optional>

namespace poisonlab {

// Experiment orchestration: seeded end-to-end runs over a
// (budget cell × strategy × seed) grid, aggregation, and report emission.
//
// Budgets are written in desk units so one grid transfers across
// environments: one desk unit u is the RMS over the perturbed columns of the
// per-column robust standard deviation (1.4826 MAD, falling back to the
// plain standard deviation for a zero-MAD column, then to 1.0). A cell
// (rho, epsilon_desk) gives every local strategy epsilon_raw =
// epsilon_desk * u on floor(rho N) records, and the global strategy one pool
// c_total = rho * N * epsilon_raw^2 — equal total energy across strategies.

Scalar desk_unit(const TransitionDataset& data, Surface surface,
                 bool include_next_state);

struct BudgetCell {
    Scalar rho = 0.01;
    Scalar epsilon_desk = 0.5;
};

/// The seven (rho, epsilon) configs of the reference sweep.
std::vector<BudgetCell> default_budget_grid();

struct ExperimentConfig {
    std::string name = "experiment";
    MdpSpec env;
    Index dataset_size = 20000;
    Quality quality = Quality::Medium;
    AlgoTag algo = AlgoTag::LinFQI;
    TrainConfig train;
    Surface surface = Surface::Reward;
    bool include_next_state = false;
    SupportMode support = SupportMode::All;  // global_allocation only
    std::vector<BudgetCell> grid = default_budget_grid();
    std::vector<Strategy> strategies = {
        Strategy::RandomNoise, Strategy::RandomSubset, Strategy::LocalGreedy,
        Strategy::GlobalAllocation};
    int rescore_rounds = 1;
    Index n_eval_episodes = 200;
    Index n_seeds = 5;
    DetectorConfig detectors;
    bool run_detectors = false;
    std::uint64_t base_seed = 0;
    std::string output_dir;
};

/// Throws ConfigError naming the violated field.
void validate(const ExperimentConfig& cfg);

/// Canonical JSON (fixed key order, full field set); from_json accepts a
/// partial object and fills defaults.
std::string experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const std::string& text);

/// FNV-1a over the canonical JSON, as "0x"-prefixed hex.
std::string config_hash(const ExperimentConfig& cfg);

// Reference benchmarks. GridWorld victims perturb the reward surface;
// LineWorld victims the state surface.
ExperimentConfig lineworld_benchmark();
ExperimentConfig gridworld_benchmark();
ExperimentConfig conservative_benchmark();
/// Single-cell config used by the stealth experiment.
ExperimentConfig stealth_benchmark();

// ─── Results ────────────────────────────────────────────────────────────────

struct CellResult {
    std::string victim;
    Index cell_index = 0;
    Scalar rho = 0.0;
    Scalar epsilon_desk = 0.0;
    Scalar epsilon_raw = 0.0;
    Scalar c_total = 0.0;
    std::string strategy;
    Index seed_index = 0;
    // everything needed to re-run this cell stand-alone
    std::uint64_t dataset_seed = 0;
    std::uint64_t eval_seed = 0;
    std::uint64_t attack_seed = 0;
    Scalar desk_unit_value = 0.0;
    bool ok = false;
    std::string error;
    Scalar clean_score = 0.0;
    Scalar post_attack_score = 0.0;
    Scalar reduction = 0.0;  // percent
    Scalar budgeted_energy = 0.0;
    Scalar delivered_energy = 0.0;
    Index n_poisoned = 0;
    std::vector<StealthRow> stealth;
};

struct AggregateRow {
    std::string victim;
    Scalar rho = 0.0;
    Scalar epsilon_desk = 0.0;
    std::string strategy;
    Index n_ok = 0;
    Scalar mean_post = 0.0;
    std::optional<Scalar> se_post;
    Scalar mean_reduction = 0.0;
    std::optional<Scalar> se_reduction;
    Scalar mean_energy = 0.0;
};

/// Per budget cell: is the mean ordering
/// global <= local_greedy <= random_subset <= random_noise <= clean, and are
/// the global-vs-local and local-vs-noise gaps resolved at two combined
/// standard errors? Strategies absent from the run leave the flags false.
struct HierarchyVerdict {
    Scalar rho = 0.0;
    Scalar epsilon_desk = 0.0;
    bool ordered = false;
    bool global_below_local = false;
    bool local_below_noise = false;
};

struct ExperimentReport {
    ExperimentConfig config;
    std::string config_digest;
    std::vector<Scalar> clean_scores;  // one per seed
    Scalar clean_mean = 0.0;
    std::optional<Scalar> clean_se;
    std::vector<CellResult> cells;
    std::vector<AggregateRow> aggregates;
    std::vector<HierarchyVerdict> verdicts;
};

/// The full pipeline per seed: generate, train clean, evaluate, score, then
/// per cell and strategy: attack, retrain from scratch, re-evaluate with the
/// same evaluation seed, optionally run detectors. A failing cell records
/// its error and the run continues. Pure function of the config.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

// ─── Stealth experiment ─────────────────────────────────────────────────────

struct SeedStealth {
    Index seed_index = 0;
    std::vector<StealthRow> rows;
};

struct StealthAggregate {
    std::string detector;
    std::string attack;
    Index n_seeds = 0;
    Scalar mean_auc = 0.0;
    std::optional<Scalar> se_auc;
};

struct StealthReport {
    ExperimentConfig config;
    std::string config_digest;
    std::vector<SeedStealth> seeds;
    std::vector<StealthAggregate> aggregates;
};

/// Budget-matched detectability: GlobalAllocation with the first grid
/// cell's pool against RandomNoise spreading the same energy over the whole
/// dataset (rho = 1, epsilon = sqrt(c_total / N)), all detectors, per seed.
StealthReport run_stealth_experiment(const ExperimentConfig& cfg);

// ─── Report emission ────────────────────────────────────────────────────────

enum class ReportFormat { Csv, Json, Markdown };

std::string to_string(ReportFormat f);
ReportFormat report_format_from_string(const std::string& s);

std::string report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const std::string& text);
std::string report_to_csv(const ExperimentReport& report);
std::string report_to_markdown(const ExperimentReport& report);

std::string stealth_report_to_json(const StealthReport& report);

/// Writes report.<ext> into out_dir and returns the file path.
std::string emit_report(const ExperimentReport& report, ReportFormat format,
                        const std::string& out_dir);

}  // namespace poisonlab
