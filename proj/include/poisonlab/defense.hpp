#pragma once

#include "poisonlab/attacks.hpp"

#include <optional>

namespace poisonlab {

// Poison detectors. Each detector fits statistics on the dataset a defender
// can see (which may itself be poisoned) and scores every record; detection
// metrics are computed against the ground-truth poisoned flags afterwards.
// Scores never read the flags: detectors stay ignorant of the truth.
//
// RobustZ looks at each state coordinate and the reward independently;
// Mahalanobis and the spectral detector work on the concatenated
// (s, r, s_next) row vector.

enum class Detector { RobustZ, Mahalanobis, Spectral };

std::string to_string(Detector d);

struct DetectorConfig {
    Scalar robustz_threshold = 3.5;
    Scalar mahalanobis_quantile = 0.999;
    // spectral flags exactly k records; 0 means "use the attack's poison
    // count" inside stealth_comparison
    Index spectral_k_remove = 0;
};

// ─── Fitted scorers (reusable across datasets) ──────────────────────────────

struct RobustZModel {
    Vector median;
    Vector scale;               // MAD per column
    std::vector<bool> usable;   // columns with nonzero MAD
    std::vector<std::string> warnings;
};

RobustZModel fit_robust_z(const TransitionDataset& data);
/// max over usable columns of 0.6745 |x - median| / MAD
Vector score_robust_z(const RobustZModel& m, const TransitionDataset& data);

struct MahalanobisModel {
    Vector mean;
    Matrix covariance;  // diagonally loaded
};

MahalanobisModel fit_mahalanobis(const TransitionDataset& data);
Vector score_mahalanobis(const MahalanobisModel& m, const TransitionDataset& data);

struct SpectralModel {
    Vector mean;
    Vector direction;  // top right singular vector of the centered matrix
};

SpectralModel fit_spectral(const TransitionDataset& data);
/// squared projection of the centered row onto the top singular direction
Vector score_spectral(const SpectralModel& m, const TransitionDataset& data);

// ─── One-dataset detection reports ──────────────────────────────────────────

struct DetectionReport {
    Detector detector = Detector::RobustZ;
    Vector scores;
    std::vector<Index> flagged;  // ascending idx
    Scalar threshold = 0.0;
    Scalar recall = 0.0;
    Scalar precision = 0.0;
    std::optional<Scalar> auc;  // absent when either class is empty
    Scalar max_score = 0.0;
    std::vector<std::string> warnings;
};

DetectionReport detect_robust_z(const TransitionDataset& data,
                                Scalar threshold = 3.5);
/// threshold = the given empirical quantile of the fitted scores
DetectionReport detect_mahalanobis(const TransitionDataset& data,
                                   Scalar quantile = 0.999);
/// flags exactly the k_remove largest scores (ties toward lower idx)
DetectionReport detect_spectral(const TransitionDataset& data, Index k_remove);

// ─── Stealth comparison across attacks ──────────────────────────────────────

struct StealthRow {
    std::string detector;
    std::string attack;
    Scalar recall = 0.0;
    Scalar precision = 0.0;
    // AUC of perturbed rows (scored under statistics fitted on the attacked
    // dataset) against all rows of the clean dataset scored the same way;
    // well-defined even when the attack touches every record
    std::optional<Scalar> auc_vs_clean;
    std::optional<Scalar> within_auc;
    Scalar max_score = 0.0;
    Index flagged_count = 0;
};

/// Applies each attack to the clean base, runs all three detectors on the
/// attacked dataset, and reports per-(detector, attack) detectability.
std::vector<StealthRow> stealth_comparison(const TransitionDataset& clean,
                                           const std::vector<PoisonedDataset>& attacks,
                                           const DetectorConfig& cfg = {});

}  // namespace poisonlab
