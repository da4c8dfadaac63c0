#pragma once

#include "poisonlab/envlab.hpp"
#include "poisonlab/types.hpp"

namespace poisonlab {

// State-action feature maps for linear Q-functions. Features are built per
// state then placed into the action's block of a dim-wide vector, so
// Q(s, a) = theta . phi(s, a) with one independent weight block per action.

enum class FeatureKind { Tabular, RbfGrid, Polynomial };

std::string to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(const std::string& s);

struct FeatureMap {
    FeatureKind kind = FeatureKind::Tabular;
    int state_dim = 0;
    int n_actions = 0;
    int state_features = 0;  // per-action block width
    int dim = 0;             // state_features * n_actions

    // Tabular: one indicator per cell of a regular binning of the state box.
    int bins_per_dim = 0;
    Vector bin_lo, bin_hi;

    // RbfGrid: Gaussian bumps exp(-|s - c|^2 / (2 bw^2)) plus a bias feature.
    Matrix centers;  // n_centers × state_dim
    Scalar bandwidth = 0.0;

    // Polynomial: all monomials of total degree <= degree.
    int degree = 0;
    std::vector<std::vector<int>> exponents;  // one vector of powers per term
};

/// Indicator features over a bins_per_dim^state_dim partition of [lo, hi].
FeatureMap make_tabular(int bins_per_dim, int n_actions, const Vector& lo,
                        const Vector& hi);

/// RBF bumps on a regular centers_per_dim^state_dim lattice over [lo, hi],
/// plus a constant bias term per action block.
FeatureMap make_rbf_grid(int centers_per_dim, int n_actions, const Vector& lo,
                         const Vector& hi, Scalar bandwidth);

/// Monomial features of total degree <= degree (includes the constant term).
FeatureMap make_polynomial(int degree, int state_dim, int n_actions);

/// Indicator map over the environment's natural discrete states: GridWorld
/// cells, or `line_bins` equal bins of [0, 1] for LineWorld.
FeatureMap default_tabular_map(const MdpSpec& spec, int line_bins = 50);

/// Smooth map for gradient-based victims: an RBF lattice over the state box.
FeatureMap default_rbf_map(const MdpSpec& spec);

/// Flat cell index of a state under a tabular map. Throws DataError when the
/// state falls outside [bin_lo, bin_hi].
Index tabular_cell(const FeatureMap& fm, const Vector& s);

/// phi(s, a): zero everywhere except action a's block.
Vector phi(const FeatureMap& fm, const Vector& s, int a);

/// d phi(s, a) / d s as a dim × state_dim matrix. Throws ArgumentError for
/// tabular maps (piecewise-constant features have no usable gradient).
Matrix phi_state_jacobian(const FeatureMap& fm, const Vector& s, int a);

bool differentiable(const FeatureMap& fm);

}  // namespace poisonlab
