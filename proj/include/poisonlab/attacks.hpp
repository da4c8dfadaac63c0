#pragma once

#include "poisonlab/allocator.hpp"
#include "poisonlab/sensitivity.hpp"

#include <functional>
#include <map>

namespace poisonlab {

// Poisoning strategies. Every attack produces a sparse perturbation set over
// a base dataset plus exact energy accounting; applying it is pure addition.
// Budgets are expressed either per record (epsilon_local, used by the three
// reference strategies) or as one global energy pool (c_total).

enum class Strategy { RandomNoise, RandomSubset, LocalGreedy, GlobalAllocation };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

enum class SupportMode { All, TopRho };

std::string to_string(SupportMode m);
SupportMode support_mode_from_string(const std::string& s);

struct AttackConfig {
    Strategy strategy = Strategy::GlobalAllocation;
    Surface surface = Surface::Reward;
    bool include_next_state = false;
    // fraction of the dataset in the support of the three local strategies
    // (and of GlobalAllocation under SupportMode::TopRho)
    Scalar rho = 0.01;
    Scalar epsilon_local = 0.0;   // per-record magnitude, local strategies
    Scalar c_total = 0.0;         // global energy budget, GlobalAllocation
    SupportMode support = SupportMode::All;
    std::uint64_t seed = 0;
    int rescore_rounds = 1;       // > 1 re-scores against a retrained victim
};

struct PerturbationRecord {
    Scalar d_r = 0.0;
    Vector d_s;       // empty or state_dim
    Vector d_s_next;  // empty or state_dim
    Scalar energy() const {
        return d_r * d_r + d_s.squaredNorm() + d_s_next.squaredNorm();
    }
};

/// Identity of the dataset an attack was computed against; apply() refuses
/// a mismatch so perturbations cannot silently land on the wrong data.
struct DatasetFingerprint {
    EnvKind kind = EnvKind::GridWorld;
    std::uint64_t generation_seed = 0;
    Index n = 0;
    std::string behavior_tag;

    bool operator==(const DatasetFingerprint&) const = default;
};

DatasetFingerprint fingerprint(const TransitionDataset& data);

struct PoisonedDataset {
    DatasetFingerprint base;
    AttackConfig config;
    // only records whose applied perturbation is nonzero appear here; a
    // record clipped back to zero change is indistinguishable from clean
    // and is not flagged
    std::map<Index, PerturbationRecord> perturbations;

    Scalar budgeted_energy = 0.0;   // what the strategy intended to spend
    Scalar delivered_energy = 0.0;  // post-clip energy actually applied
    // budget lost to the state box and to zero-gradient records
    Scalar energy_shortfall = 0.0;
    Index n_selected = 0;           // support size
    Index n_poisoned = 0;           // records actually perturbed
    Index n_zero_grad = 0;          // selected but unperturbable
    bool degenerate = false;        // every delta on the support was zero
};

/// Dispatch on cfg.strategy. `records` must be score_dataset output for
/// `data` on a compatible surface (RandomNoise ignores them).
PoisonedDataset run_attack(const TransitionDataset& data,
                           const std::vector<SensitivityRecord>& records,
                           const AttackConfig& cfg);

/// Adds the perturbations onto a copy of the base dataset and sets the
/// poisoned flags. Throws DataError when the fingerprint does not match.
TransitionDataset apply(const TransitionDataset& data, const PoisonedDataset& poison);

/// Multi-round variant: each round spends 1/rescore_rounds of the energy,
/// applies it, retrains via the callback, and re-scores before the next
/// round. The returned record is the diff of the final dataset against the
/// base. With rescore_rounds == 1 this is exactly run_attack.
using RetrainFn = std::function<VictimModel(const TransitionDataset&)>;
PoisonedDataset run_attack_with_rescoring(const TransitionDataset& data,
                                          const VictimModel& victim,
                                          const AttackConfig& cfg,
                                          const RetrainFn& retrain);

}  // namespace poisonlab
