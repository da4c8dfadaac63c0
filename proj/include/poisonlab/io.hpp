#pragma once

#include "poisonlab/allocator.hpp"
#include "poisonlab/defense.hpp"

#include <string>
#include <vector>

namespace poisonlab {

// Serialization. All on-disk formats are line-oriented: newline-delimited
// JSON for datasets, models, and perturbations; plain CSV for score and
// detection tables. Every floating-point value is written with 17
// significant digits so a write/read cycle reproduces the exact double,
// and writers emit keys in a fixed order so equal inputs produce equal
// bytes.

/// Shortest exact decimal form at 17 significant digits ("%.17g").
std::string format_number(Scalar x);

/// One-line JSON object with every MdpSpec field, fixed key order.
std::string mdp_spec_to_json(const MdpSpec& spec);
MdpSpec mdp_spec_from_json(const std::string& text);

// ─── Datasets ───────────────────────────────────────────────────────────────
// Line 1 is a header object carrying the MdpSpec, generation seed, and
// behavior tag; each following line is one transition with keys
// idx, s, a, r, s_next, terminal, poisoned.

std::string dataset_to_ndjson(const TransitionDataset& data);
TransitionDataset dataset_from_ndjson(const std::string& text);
void save_dataset(const TransitionDataset& data, const std::string& path);
TransitionDataset load_dataset(const std::string& path);

// ─── Model checkpoints ──────────────────────────────────────────────────────
// Line 1: algo tag, gamma, and the full feature-map description.
// Line 2: the flat theta array. The training log is not stored; a loaded
// model has an empty log.

std::string model_to_ndjson(const VictimModel& model);
VictimModel model_from_ndjson(const std::string& text);
void save_model(const VictimModel& model, const std::string& path);
VictimModel load_model(const std::string& path);

// ─── Attack artifacts ───────────────────────────────────────────────────────
// Line 1: manifest with the base-dataset fingerprint, the full attack
// config, and the energy accounting. Each following line is one nonzero
// perturbation {idx, d_r, d_s, d_s_next}.

std::string poison_to_ndjson(const PoisonedDataset& poison);
PoisonedDataset poison_from_ndjson(const std::string& text);
void save_poison(const PoisonedDataset& poison, const std::string& path);
PoisonedDataset load_poison(const std::string& path);

// ─── CSV tables ─────────────────────────────────────────────────────────────

/// Columns idx, delta, abs_delta, grad_norm, influence_proxy. When a plan
/// is given (one epsilon per record, same order), an epsilon column is
/// appended.
std::string sensitivity_csv(const std::vector<SensitivityRecord>& records);
std::string sensitivity_csv(const std::vector<SensitivityRecord>& records,
                            const AllocationPlan& plan);

/// Columns detector, attack, recall, precision, auc, max_score,
/// flagged_count. A missing AUC is an empty field.
std::string detection_csv(const std::vector<StealthRow>& rows);

// ─── Files ──────────────────────────────────────────────────────────────────

/// Creates parent directories as needed; throws DataError on failure.
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace poisonlab
