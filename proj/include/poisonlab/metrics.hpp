#pragma once

#include "poisonlab/types.hpp"

#include <optional>
#include <vector>

namespace poisonlab {

Scalar mean(const std::vector<Scalar>& xs);

/// Standard error of the mean (n-1 divisor); nullopt for n < 2.
std::optional<Scalar> standard_error(const std::vector<Scalar>& xs);

MeanReturn summarize(const std::vector<Scalar>& xs);

/// Ranks with ties assigned the average of their positions (1-based).
Vector average_ranks(const Vector& xs);

/// Spearman rank correlation with average-tie ranks. Nullopt when either
/// input is constant (correlation undefined).
std::optional<Scalar> spearman(const Vector& xs, const Vector& ys);

/// Mann-Whitney AUC of positives vs negatives with tie correction (average
/// ranks). Nullopt when either class is empty.
std::optional<Scalar> mann_whitney_auc(const std::vector<Scalar>& positives,
                                       const std::vector<Scalar>& negatives);

/// 100 * (clean - attacked) / clean. Throws ArgumentError when clean == 0.
Scalar reduction_pct(Scalar clean, Scalar attacked);

}  // namespace poisonlab
