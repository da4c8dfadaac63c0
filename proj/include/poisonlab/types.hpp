#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace poisonlab {

using Scalar = double;
using Index = std::int64_t;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using VectorRef = Eigen::Ref<const Vector>;

// ─── Error taxonomy ─────────────────────────────────────────────────────────
//
// ConfigError / ArgumentError: caller passed something invalid (CLI exit 1).
// DataError / NumericalError:  failure while processing valid inputs (exit 2).

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct ArgumentError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct NumericalError : Error {
    using Error::Error;
};

// ─── Shared small types ─────────────────────────────────────────────────────

/// Mean undiscounted return over a batch of evaluation episodes.
/// `se` is absent when a standard error is undefined (fewer than 2 episodes).
struct MeanReturn {
    Scalar mean = 0.0;
    std::optional<Scalar> se;
    Index n_episodes = 0;
};

inline bool almost_equal(Scalar a, Scalar b, Scalar tol) {
    return std::abs(a - b) <= tol;
}

/// |a - b| measured against max(|a|, |b|, 1) — relative with an absolute floor.
inline Scalar rel_error(Scalar a, Scalar b) {
    const Scalar scale = std::max({std::abs(a), std::abs(b), Scalar(1)});
    return std::abs(a - b) / scale;
}

}  // namespace poisonlab
