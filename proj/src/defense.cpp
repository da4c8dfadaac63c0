#include "poisonlab/defense.hpp"

#include "poisonlab/metrics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace poisonlab {

namespace {

constexpr Scalar kRobustZConsistency = 0.6745;  // Phi^-1(3/4): MAD -> sigma
constexpr Scalar kCovarianceLoading = 1e-6;
constexpr Scalar kSpectralRankTol = 1e-12;
constexpr Index kRobustZMinRecords = 10;

void require_nonempty(const TransitionDataset& data) {
    if (data.transitions.empty()) throw DataError("detector: dataset is empty");
}

Index state_dim(const TransitionDataset& data) {
    return data.transitions.front().s.size();
}

// columns inspected by robust-z: each state coordinate, then the reward
Matrix marginal_matrix(const TransitionDataset& data) {
    const Index n = data.size();
    const Index sd = state_dim(data);
    Matrix x(n, sd + 1);
    for (Index i = 0; i < n; ++i) {
        const Transition& t = data.transitions[static_cast<std::size_t>(i)];
        x.row(i).head(sd) = t.s.transpose();
        x(i, sd) = t.r;
    }
    return x;
}

// full row for Mahalanobis / spectral: (s, r, s_next)
Matrix row_matrix(const TransitionDataset& data) {
    const Index n = data.size();
    const Index sd = state_dim(data);
    Matrix x(n, 2 * sd + 1);
    for (Index i = 0; i < n; ++i) {
        const Transition& t = data.transitions[static_cast<std::size_t>(i)];
        x.row(i).head(sd) = t.s.transpose();
        x(i, sd) = t.r;
        x.row(i).tail(sd) = t.s_next.transpose();
    }
    return x;
}

std::string column_label(Index col, Index sd) {
    if (col < sd) return "state[" + std::to_string(col) + "]";
    return "reward";
}

Scalar median_of(Vector v) {
    const Index n = v.size();
    std::sort(v.data(), v.data() + n);
    if (n % 2 == 1) return v(n / 2);
    return 0.5 * (v(n / 2 - 1) + v(n / 2));
}

Scalar empirical_quantile(const Vector& scores, Scalar q) {
    Vector sorted = scores;
    std::sort(sorted.data(), sorted.data() + sorted.size());
    const Scalar pos = q * static_cast<Scalar>(sorted.size());
    Index idx = static_cast<Index>(std::ceil(pos)) - 1;
    idx = std::clamp<Index>(idx, 0, sorted.size() - 1);
    return sorted(idx);
}

void fill_metrics(DetectionReport& report, const TransitionDataset& data) {
    std::vector<Scalar> pos, neg;
    for (Index i = 0; i < data.size(); ++i) {
        const Scalar s = report.scores(i);
        if (data.transitions[static_cast<std::size_t>(i)].poisoned) {
            pos.push_back(s);
        } else {
            neg.push_back(s);
        }
    }
    Index true_pos = 0;
    for (Index idx : report.flagged) {
        if (data.transitions[static_cast<std::size_t>(idx)].poisoned) ++true_pos;
    }
    const auto n_pos = static_cast<Scalar>(pos.size());
    const auto n_flagged = static_cast<Scalar>(report.flagged.size());
    report.recall = pos.empty() ? 0.0 : static_cast<Scalar>(true_pos) / n_pos;
    report.precision =
        report.flagged.empty() ? 0.0 : static_cast<Scalar>(true_pos) / n_flagged;
    report.auc = mann_whitney_auc(pos, neg);
    report.max_score = report.scores.maxCoeff();
}

std::vector<Index> flag_above(const Vector& scores, Scalar threshold) {
    std::vector<Index> flagged;
    for (Index i = 0; i < scores.size(); ++i) {
        if (scores(i) > threshold) flagged.push_back(i);
    }
    return flagged;
}

std::vector<Scalar> to_std(const Vector& v) {
    return std::vector<Scalar>(v.data(), v.data() + v.size());
}

}  // namespace

std::string to_string(Detector d) {
    switch (d) {
        case Detector::RobustZ: return "robust_z";
        case Detector::Mahalanobis: return "mahalanobis";
        case Detector::Spectral: return "spectral";
    }
    throw ArgumentError("unknown detector");
}

// ─── RobustZ ────────────────────────────────────────────────────────────────

RobustZModel fit_robust_z(const TransitionDataset& data) {
    require_nonempty(data);
    const Matrix x = marginal_matrix(data);
    const Index n_cols = x.cols();
    RobustZModel m;
    m.median.resize(n_cols);
    m.scale.resize(n_cols);
    m.usable.assign(static_cast<std::size_t>(n_cols), false);
    Index n_usable = 0;
    for (Index c = 0; c < n_cols; ++c) {
        const Vector col = x.col(c);
        m.median(c) = median_of(col);
        m.scale(c) = median_of((col.array() - m.median(c)).abs().matrix());
        if (m.scale(c) > 0.0) {
            m.usable[static_cast<std::size_t>(c)] = true;
            ++n_usable;
        } else {
            m.warnings.push_back("robust-z: " + column_label(c, n_cols - 1) +
                                 " has zero MAD; column skipped");
        }
    }
    if (n_usable == 0) {
        m.warnings.push_back("robust-z: every column is degenerate; all scores are zero");
    }
    return m;
}

Vector score_robust_z(const RobustZModel& m, const TransitionDataset& data) {
    require_nonempty(data);
    const Matrix x = marginal_matrix(data);
    if (x.cols() != m.median.size()) {
        throw DataError("robust-z: dataset dimensions do not match the fitted model");
    }
    Vector scores = Vector::Zero(x.rows());
    for (Index c = 0; c < x.cols(); ++c) {
        if (!m.usable[static_cast<std::size_t>(c)]) continue;
        const Vector z =
            kRobustZConsistency * (x.col(c).array() - m.median(c)).abs() / m.scale(c);
        scores = scores.cwiseMax(z);
    }
    return scores;
}

DetectionReport detect_robust_z(const TransitionDataset& data, Scalar threshold) {
    if (!(threshold > 0.0)) throw ArgumentError("robust-z threshold must be positive");
    if (data.size() < kRobustZMinRecords) {
        throw DataError("robust-z needs at least " +
                        std::to_string(kRobustZMinRecords) +
                        " transitions for stable median statistics");
    }
    const RobustZModel m = fit_robust_z(data);
    DetectionReport report;
    report.detector = Detector::RobustZ;
    report.scores = score_robust_z(m, data);
    report.threshold = threshold;
    report.flagged = flag_above(report.scores, threshold);
    report.warnings = m.warnings;
    fill_metrics(report, data);
    return report;
}

// ─── Mahalanobis ────────────────────────────────────────────────────────────

MahalanobisModel fit_mahalanobis(const TransitionDataset& data) {
    require_nonempty(data);
    const Matrix x = row_matrix(data);
    MahalanobisModel m;
    m.mean = x.colwise().mean().transpose();
    const Matrix centered = x.rowwise() - m.mean.transpose();
    m.covariance = centered.transpose() * centered / static_cast<Scalar>(x.rows());
    m.covariance.diagonal().array() += kCovarianceLoading;
    return m;
}

Vector score_mahalanobis(const MahalanobisModel& m, const TransitionDataset& data) {
    require_nonempty(data);
    const Matrix x = row_matrix(data);
    if (x.cols() != m.mean.size()) {
        throw DataError("mahalanobis: dataset dimensions do not match the fitted model");
    }
    const auto ldlt = m.covariance.ldlt();
    if (ldlt.info() != Eigen::Success) {
        throw NumericalError("mahalanobis: covariance factorization failed");
    }
    const Matrix centered = x.rowwise() - m.mean.transpose();
    const Matrix solved = ldlt.solve(centered.transpose());
    Vector scores(x.rows());
    for (Index i = 0; i < x.rows(); ++i) {
        scores(i) = std::sqrt(std::max<Scalar>(0.0, centered.row(i).dot(solved.col(i))));
    }
    return scores;
}

DetectionReport detect_mahalanobis(const TransitionDataset& data, Scalar quantile) {
    if (!(quantile > 0.0) || !(quantile < 1.0)) {
        throw ArgumentError("mahalanobis quantile must lie in (0, 1)");
    }
    const MahalanobisModel m = fit_mahalanobis(data);
    DetectionReport report;
    report.detector = Detector::Mahalanobis;
    report.scores = score_mahalanobis(m, data);
    report.threshold = empirical_quantile(report.scores, quantile);
    report.flagged = flag_above(report.scores, report.threshold);
    fill_metrics(report, data);
    return report;
}

// ─── Spectral ───────────────────────────────────────────────────────────────

SpectralModel fit_spectral(const TransitionDataset& data) {
    require_nonempty(data);
    const Matrix x = row_matrix(data);
    if (x.rows() <= x.cols()) {
        throw ArgumentError(
            "spectral detector needs more records than row dimensions");
    }
    SpectralModel m;
    m.mean = x.colwise().mean().transpose();
    const Matrix centered = x.rowwise() - m.mean.transpose();
    const Matrix cov =
        centered.transpose() * centered / static_cast<Scalar>(x.rows());
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    if (es.info() != Eigen::Success) {
        throw NumericalError("spectral: eigendecomposition failed");
    }
    const Index top = cov.cols() - 1;  // eigenvalues come back ascending
    const Scalar scale = std::max<Scalar>(1.0, cov.trace());
    if (es.eigenvalues()(top) <= kSpectralRankTol * scale) {
        throw NumericalError("spectral: data has no dominant direction");
    }
    m.direction = es.eigenvectors().col(top);
    for (Index i = 0; i < m.direction.size(); ++i) {  // deterministic sign
        if (m.direction(i) != 0.0) {
            if (m.direction(i) < 0.0) m.direction = -m.direction;
            break;
        }
    }
    return m;
}

Vector score_spectral(const SpectralModel& m, const TransitionDataset& data) {
    require_nonempty(data);
    const Matrix x = row_matrix(data);
    if (x.cols() != m.mean.size()) {
        throw DataError("spectral: dataset dimensions do not match the fitted model");
    }
    const Vector projection = (x.rowwise() - m.mean.transpose()) * m.direction;
    return projection.array().square();
}

DetectionReport detect_spectral(const TransitionDataset& data, Index k_remove) {
    require_nonempty(data);
    if (k_remove < 0 || k_remove > data.size()) {
        throw ArgumentError("spectral k_remove must lie in [0, n_records]");
    }
    const SpectralModel m = fit_spectral(data);
    DetectionReport report;
    report.detector = Detector::Spectral;
    report.scores = score_spectral(m, data);
    if (k_remove == 0) {
        // remove-nothing mode: an empty flag set and an unreachable threshold
        report.threshold = std::numeric_limits<Scalar>::infinity();
    } else {
        std::vector<Index> order(static_cast<std::size_t>(data.size()));
        std::iota(order.begin(), order.end(), Index{0});
        std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
            return report.scores(a) > report.scores(b);
        });
        report.flagged.assign(order.begin(), order.begin() + k_remove);
        std::sort(report.flagged.begin(), report.flagged.end());
        report.threshold = report.scores(order[static_cast<std::size_t>(k_remove - 1)]);
    }
    fill_metrics(report, data);
    return report;
}

// ─── Stealth comparison ─────────────────────────────────────────────────────

std::vector<StealthRow> stealth_comparison(const TransitionDataset& clean,
                                           const std::vector<PoisonedDataset>& attacks,
                                           const DetectorConfig& cfg) {
    require_nonempty(clean);
    const DatasetFingerprint base = fingerprint(clean);
    std::vector<StealthRow> rows;
    for (const PoisonedDataset& poison : attacks) {
        if (!(poison.base == base)) {
            throw ArgumentError(
                "stealth comparison: attack was computed for a different base dataset");
        }
        const TransitionDataset attacked = apply(clean, poison);
        const std::string attack_name = to_string(poison.config.strategy);

        const auto add_row = [&](const DetectionReport& report,
                                 const Vector& clean_scores) {
            std::vector<Scalar> positives;
            for (Index i = 0; i < attacked.size(); ++i) {
                if (attacked.transitions[static_cast<std::size_t>(i)].poisoned) {
                    positives.push_back(report.scores(i));
                }
            }
            StealthRow row;
            row.detector = to_string(report.detector);
            row.attack = attack_name;
            row.recall = report.recall;
            row.precision = report.precision;
            row.auc_vs_clean = mann_whitney_auc(positives, to_std(clean_scores));
            row.within_auc = report.auc;
            row.max_score = report.max_score;
            row.flagged_count = static_cast<Index>(report.flagged.size());
            rows.push_back(row);
        };

        {
            const DetectionReport report =
                detect_robust_z(attacked, cfg.robustz_threshold);
            add_row(report, score_robust_z(fit_robust_z(attacked), clean));
        }
        {
            const DetectionReport report =
                detect_mahalanobis(attacked, cfg.mahalanobis_quantile);
            add_row(report, score_mahalanobis(fit_mahalanobis(attacked), clean));
        }
        {
            // default: remove as many records as the attack poisoned
            const Index k = cfg.spectral_k_remove > 0 ? cfg.spectral_k_remove
                                                      : poison.n_poisoned;
            const DetectionReport report = detect_spectral(attacked, k);
            add_row(report, score_spectral(fit_spectral(attacked), clean));
        }
    }
    return rows;
}

}  // namespace poisonlab
