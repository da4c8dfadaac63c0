#include "poisonlab/features.hpp"

#include <cmath>
#include <functional>
#include <string>

namespace poisonlab {

std::string to_string(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::Tabular: return "tabular";
        case FeatureKind::RbfGrid: return "rbf_grid";
        case FeatureKind::Polynomial: return "polynomial";
    }
    throw ArgumentError("unreachable feature kind");
}

FeatureKind feature_kind_from_string(const std::string& s) {
    if (s == "tabular") return FeatureKind::Tabular;
    if (s == "rbf_grid") return FeatureKind::RbfGrid;
    if (s == "polynomial") return FeatureKind::Polynomial;
    throw ConfigError("unknown feature kind: '" + s + "'");
}

namespace {

void check_box(const Vector& lo, const Vector& hi) {
    if (lo.size() != hi.size() || lo.size() < 1)
        throw ArgumentError("feature map: lo/hi must be nonempty and match");
    for (Index d = 0; d < lo.size(); ++d)
        if (!(lo[d] < hi[d]))
            throw ArgumentError("feature map: need lo < hi per dimension");
}

int checked_pow(int base, int exp) {
    int out = 1;
    for (int i = 0; i < exp; ++i) {
        if (out > 1'000'000 / base)
            throw ArgumentError("feature map: lattice too large");
        out *= base;
    }
    return out;
}

}  // namespace

FeatureMap make_tabular(int bins_per_dim, int n_actions, const Vector& lo,
                        const Vector& hi) {
    if (bins_per_dim < 1) throw ArgumentError("make_tabular: bins_per_dim >= 1");
    if (n_actions < 1) throw ArgumentError("make_tabular: n_actions >= 1");
    check_box(lo, hi);
    FeatureMap fm;
    fm.kind = FeatureKind::Tabular;
    fm.state_dim = static_cast<int>(lo.size());
    fm.n_actions = n_actions;
    fm.bins_per_dim = bins_per_dim;
    fm.bin_lo = lo;
    fm.bin_hi = hi;
    fm.state_features = checked_pow(bins_per_dim, fm.state_dim);
    fm.dim = fm.state_features * n_actions;
    return fm;
}

FeatureMap make_rbf_grid(int centers_per_dim, int n_actions, const Vector& lo,
                         const Vector& hi, Scalar bandwidth) {
    if (centers_per_dim < 1) throw ArgumentError("make_rbf_grid: centers_per_dim >= 1");
    if (n_actions < 1) throw ArgumentError("make_rbf_grid: n_actions >= 1");
    if (!(bandwidth > 0.0)) throw ArgumentError("make_rbf_grid: bandwidth > 0");
    check_box(lo, hi);
    FeatureMap fm;
    fm.kind = FeatureKind::RbfGrid;
    fm.state_dim = static_cast<int>(lo.size());
    fm.n_actions = n_actions;
    fm.bandwidth = bandwidth;
    const int n_centers = checked_pow(centers_per_dim, fm.state_dim);
    fm.centers.resize(n_centers, fm.state_dim);
    // centers at the midpoints of a regular centers_per_dim grid per axis
    for (int c = 0; c < n_centers; ++c) {
        int rem = c;
        for (int d = 0; d < fm.state_dim; ++d) {
            const int j = rem % centers_per_dim;
            rem /= centers_per_dim;
            const Scalar t = (centers_per_dim == 1)
                ? 0.5
                : static_cast<Scalar>(j) / (centers_per_dim - 1);
            fm.centers(c, d) = lo[d] + t * (hi[d] - lo[d]);
        }
    }
    fm.state_features = n_centers + 1;  // plus bias
    fm.dim = fm.state_features * n_actions;
    return fm;
}

FeatureMap make_polynomial(int degree, int state_dim, int n_actions) {
    if (degree < 0) throw ArgumentError("make_polynomial: degree >= 0");
    if (state_dim < 1) throw ArgumentError("make_polynomial: state_dim >= 1");
    if (n_actions < 1) throw ArgumentError("make_polynomial: n_actions >= 1");
    FeatureMap fm;
    fm.kind = FeatureKind::Polynomial;
    fm.state_dim = state_dim;
    fm.n_actions = n_actions;
    fm.degree = degree;
    // enumerate exponent tuples with total degree <= degree, lexicographically
    std::vector<int> current(static_cast<std::size_t>(state_dim), 0);
    std::function<void(int, int)> recurse = [&](int d, int remaining) {
        if (d == state_dim) {
            fm.exponents.push_back(current);
            return;
        }
        for (int e = 0; e <= remaining; ++e) {
            current[static_cast<std::size_t>(d)] = e;
            recurse(d + 1, remaining - e);
        }
        current[static_cast<std::size_t>(d)] = 0;
    };
    recurse(0, degree);
    fm.state_features = static_cast<int>(fm.exponents.size());
    fm.dim = fm.state_features * n_actions;
    return fm;
}

FeatureMap default_tabular_map(const MdpSpec& spec, int line_bins) {
    Vector lo, hi;
    Environment(spec).state_bounds(lo, hi);
    if (spec.kind == EnvKind::GridWorld) {
        // widen by half a cell so integer coordinates sit at bin centers
        return make_tabular(spec.grid_size, spec.n_actions,
                            lo.array() - 0.5, hi.array() + 0.5);
    }
    return make_tabular(line_bins, spec.n_actions, lo, hi);
}

FeatureMap default_rbf_map(const MdpSpec& spec) {
    Vector lo, hi;
    Environment(spec).state_bounds(lo, hi);
    if (spec.kind == EnvKind::GridWorld)
        return make_rbf_grid(spec.grid_size, spec.n_actions, lo, hi,
                             /*bandwidth=*/0.75);
    return make_rbf_grid(25, spec.n_actions, lo, hi, /*bandwidth=*/0.08);
}

Index tabular_cell(const FeatureMap& fm, const Vector& s) {
    if (fm.kind != FeatureKind::Tabular)
        throw ArgumentError("tabular_cell: map is not tabular");
    if (s.size() != fm.state_dim)
        throw DataError("tabular_cell: state dimension mismatch");
    Index cell = 0;
    for (int d = 0; d < fm.state_dim; ++d) {
        const Scalar lo = fm.bin_lo[d];
        const Scalar hi = fm.bin_hi[d];
        const Scalar x = s[d];
        if (x < lo || x > hi)
            throw DataError("tabular_cell: state coordinate " + std::to_string(d) +
                            " = " + std::to_string(x) + " outside [" +
                            std::to_string(lo) + ", " + std::to_string(hi) + "]");
        const Scalar t = (x - lo) / (hi - lo) * fm.bins_per_dim;
        int bin = static_cast<int>(std::floor(t));
        if (bin == fm.bins_per_dim) --bin;  // x exactly at the top edge
        cell = cell * fm.bins_per_dim + bin;
    }
    return cell;
}

namespace {

Vector state_features_of(const FeatureMap& fm, const Vector& s) {
    Vector f = Vector::Zero(fm.state_features);
    switch (fm.kind) {
        case FeatureKind::Tabular:
            f[tabular_cell(fm, s)] = 1.0;
            break;
        case FeatureKind::RbfGrid: {
            const Scalar inv = 1.0 / (2.0 * fm.bandwidth * fm.bandwidth);
            for (Index c = 0; c < fm.centers.rows(); ++c) {
                const Scalar d2 = (s.transpose() - fm.centers.row(c)).squaredNorm();
                f[c] = std::exp(-d2 * inv);
            }
            f[fm.state_features - 1] = 1.0;  // bias
            break;
        }
        case FeatureKind::Polynomial:
            for (int i = 0; i < fm.state_features; ++i) {
                Scalar term = 1.0;
                for (int d = 0; d < fm.state_dim; ++d) {
                    const int e = fm.exponents[static_cast<std::size_t>(i)]
                                              [static_cast<std::size_t>(d)];
                    for (int p = 0; p < e; ++p) term *= s[d];
                }
                f[i] = term;
            }
            break;
    }
    return f;
}

}  // namespace

Vector phi(const FeatureMap& fm, const Vector& s, int a) {
    if (a < 0 || a >= fm.n_actions)
        throw ArgumentError("phi: action outside [0, n_actions)");
    if (s.size() != fm.state_dim)
        throw DataError("phi: state dimension mismatch");
    Vector out = Vector::Zero(fm.dim);
    out.segment(static_cast<Index>(a) * fm.state_features, fm.state_features) =
        state_features_of(fm, s);
    return out;
}

bool differentiable(const FeatureMap& fm) {
    return fm.kind != FeatureKind::Tabular;
}

Matrix phi_state_jacobian(const FeatureMap& fm, const Vector& s, int a) {
    if (!differentiable(fm))
        throw ArgumentError("phi_state_jacobian: tabular maps are not differentiable");
    if (a < 0 || a >= fm.n_actions)
        throw ArgumentError("phi_state_jacobian: action outside [0, n_actions)");
    if (s.size() != fm.state_dim)
        throw DataError("phi_state_jacobian: state dimension mismatch");
    Matrix jac = Matrix::Zero(fm.dim, fm.state_dim);
    const Index base = static_cast<Index>(a) * fm.state_features;
    if (fm.kind == FeatureKind::RbfGrid) {
        const Scalar inv = 1.0 / (2.0 * fm.bandwidth * fm.bandwidth);
        for (Index c = 0; c < fm.centers.rows(); ++c) {
            const Vector diff = s - fm.centers.row(c).transpose();
            const Scalar val = std::exp(-diff.squaredNorm() * inv);
            // d/ds exp(-|s-c|^2 / 2bw^2) = -val (s - c) / bw^2
            jac.row(base + c) = (-val / (fm.bandwidth * fm.bandwidth)) * diff.transpose();
        }
        // bias row stays zero
    } else {
        for (int i = 0; i < fm.state_features; ++i) {
            const auto& exps = fm.exponents[static_cast<std::size_t>(i)];
            for (int d = 0; d < fm.state_dim; ++d) {
                const int e = exps[static_cast<std::size_t>(d)];
                if (e == 0) continue;
                Scalar term = static_cast<Scalar>(e);
                for (int dd = 0; dd < fm.state_dim; ++dd) {
                    const int ee = exps[static_cast<std::size_t>(dd)] - (dd == d ? 1 : 0);
                    for (int p = 0; p < ee; ++p) term *= s[dd];
                }
                jac(base + i, d) = term;
            }
        }
    }
    return jac;
}

}  // namespace poisonlab
