#pragma once

#include "poisonlab/victims.hpp"

#include <optional>

namespace poisonlab {

// Per-transition sensitivity analysis. For a Bellman loss 0.5 delta^2 with
// delta = r + gamma (1 - T) max_a Q(s', a) - Q(s, a), the parameter gradient
// is -delta phi(s, a), so |delta| |phi| proxies each record's pull on
// training, and the data-space gradient of |delta| says in which direction a
// small perturbation of the record moves the loss fastest.

enum class Surface { Reward, State, Both };

std::string to_string(Surface s);
Surface surface_from_string(const std::string& s);

struct ScoreOptions {
    Surface surface = Surface::Reward;
    // extend the state surface to s' coordinates as well
    bool include_next_state = false;
};

struct SensitivityRecord {
    Index idx = 0;
    Scalar delta = 0.0;
    Scalar abs_delta = 0.0;
    // d|delta|/dr: sign(delta); zero when delta == 0
    Scalar grad_reward = 0.0;
    // d|delta|/ds (and, when requested, d|delta|/ds' appended); empty for a
    // reward-only surface
    Vector grad_state;
    // norm of the gradient over the configured perturbation surface
    Scalar grad_norm = 0.0;
    Scalar influence_proxy = 0.0;  // |delta| * |phi(s, a)|
};

Scalar td_error(const VictimModel& m, const Transition& t);

/// Scores every transition against the model. State surfaces require a
/// differentiable feature map (ArgumentError otherwise).
std::vector<SensitivityRecord> score_dataset(const VictimModel& m,
                                             const TransitionDataset& data,
                                             const ScoreOptions& opts = {});

/// Indices (dataset idx values, ascending) of the k records with the largest
/// key; ties resolve toward lower idx.
enum class RankKey { AbsDelta, InfluenceProxy };
std::vector<Index> top_k_by_sensitivity(const std::vector<SensitivityRecord>& records,
                                        Index k, RankKey key = RankKey::AbsDelta);

// ─── Exact influence (verification oracle for the proxy) ────────────────────

struct InfluenceResult {
    // |H^{-1} delta_i phi_i| per record, H = sum phi phi^T + damping I
    Vector influence;
    Scalar hessian_condition = 0.0;
    // Spearman correlation of the exact norms against the proxy ranking;
    // absent when either ranking is constant
    std::optional<Scalar> proxy_rank_correlation;
};

inline constexpr Index kInfluenceMaxRecords = 20000;
inline constexpr Scalar kInfluenceConditionLimit = 1e12;

InfluenceResult exact_influence(const VictimModel& m, const TransitionDataset& data,
                                Scalar damping);

}  // namespace poisonlab
