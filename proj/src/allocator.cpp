#include "poisonlab/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace poisonlab {

namespace {

void check_inputs(const Vector& abs_deltas, Scalar c_total) {
    if (abs_deltas.size() < 1)
        throw ArgumentError("allocation: empty delta vector");
    if (!(c_total > 0.0))
        throw ArgumentError("allocation: c_total must be > 0");
    if (!abs_deltas.allFinite())
        throw DataError("allocation: deltas must be finite");
    if ((abs_deltas.array() < 0.0).any())
        throw ArgumentError("allocation: deltas must be nonnegative");
}

AllocationPlan zero_plan(Index n, Scalar c_total) {
    AllocationPlan plan;
    plan.epsilons = Vector::Zero(n);
    plan.c_total = c_total;
    plan.degenerate = true;
    return plan;
}

}  // namespace

AllocationPlan global_allocate(const Vector& abs_deltas, Scalar c_total) {
    check_inputs(abs_deltas, c_total);
    const Scalar norm = abs_deltas.norm();
    if (norm == 0.0) return zero_plan(abs_deltas.size(), c_total);

    const Scalar root_c = std::sqrt(c_total);
    AllocationPlan plan;
    plan.c_total = c_total;
    plan.epsilons = (root_c / norm) * abs_deltas;
    plan.lambda = norm / (2.0 * root_c);
    plan.objective = root_c * norm;
    return plan;
}

AllocationPlan numerical_allocate_oracle(const Vector& abs_deltas, Scalar c_total,
                                         Scalar tol) {
    check_inputs(abs_deltas, c_total);
    if (!(tol > 0.0)) throw ArgumentError("allocation oracle: tol must be > 0");
    const Index n = abs_deltas.size();
    if (abs_deltas.maxCoeff() == 0.0) return zero_plan(n, c_total);

    const Scalar radius = std::sqrt(c_total);
    // ascend sum a_i eps_i, projecting onto {eps >= 0, |eps|_2 <= radius};
    // the projection clips negatives first, then rescales onto the ball
    auto project = [&](Vector eps) {
        eps = eps.cwiseMax(0.0);
        const Scalar norm = eps.norm();
        if (norm > radius && norm > 0.0) eps *= radius / norm;
        return eps;
    };
    const Scalar step = radius / abs_deltas.norm();
    Vector eps = project(Vector::Constant(n, radius / std::sqrt(static_cast<Scalar>(n))));
    Scalar objective = abs_deltas.dot(eps);
    constexpr int kMaxIters = 100000;
    int iter = 0;
    for (; iter < kMaxIters; ++iter) {
        eps = project(eps + step * abs_deltas);
        const Scalar next = abs_deltas.dot(eps);
        if (std::abs(next - objective) <= tol * std::max(Scalar{1.0}, std::abs(next))) {
            objective = next;
            break;
        }
        objective = next;
    }
    if (iter == kMaxIters)
        throw NumericalError("allocation oracle failed to converge");

    AllocationPlan plan;
    plan.c_total = c_total;
    plan.epsilons = eps;
    plan.objective = objective;
    // recover the multiplier from stationarity summed over the support:
    // sum a_i eps_i = 2 lambda sum eps_i^2
    const Scalar energy = eps.squaredNorm();
    plan.lambda = energy > 0.0 ? objective / (2.0 * energy) : 0.0;
    return plan;
}

AllocationPlan allocate_with_caps(const Vector& abs_deltas, Scalar c_total,
                                  Scalar cap) {
    check_inputs(abs_deltas, c_total);
    if (!(cap > 0.0)) throw ArgumentError("allocation: cap must be > 0");
    const Index n = abs_deltas.size();

    Index m = 0;  // records that can receive budget
    Scalar min_nonzero = std::numeric_limits<Scalar>::infinity();
    for (Index i = 0; i < n; ++i) {
        if (abs_deltas[i] > 0.0) {
            ++m;
            min_nonzero = std::min(min_nonzero, abs_deltas[i]);
        }
    }
    if (m == 0) return zero_plan(n, c_total);

    AllocationPlan plan;
    plan.c_total = c_total;
    const Scalar target_energy =
        std::min(c_total, static_cast<Scalar>(m) * cap * cap);

    auto eps_at = [&](Scalar lambda) {
        Vector eps(n);
        for (Index i = 0; i < n; ++i)
            eps[i] = abs_deltas[i] > 0.0
                ? std::min(cap, abs_deltas[i] / (2.0 * lambda))
                : 0.0;
        return eps;
    };

    // energy(lambda) falls monotonically from M cap^2 toward 0
    const Scalar lambda_all_capped = min_nonzero / (2.0 * cap);
    if (target_energy >= static_cast<Scalar>(m) * cap * cap) {
        // budget dominates: every nonzero record saturates its cap
        plan.epsilons = eps_at(lambda_all_capped);
        plan.lambda = lambda_all_capped;
        plan.objective = abs_deltas.dot(plan.epsilons);
        return plan;
    }

    Scalar lo = lambda_all_capped;  // energy here is M cap^2 > target
    Scalar hi = lo;
    while (eps_at(hi).squaredNorm() > target_energy) {
        hi *= 2.0;
        if (!std::isfinite(hi))
            throw NumericalError("allocation: cap bisection failed to bracket");
    }
    for (int it = 0; it < 200; ++it) {
        const Scalar mid = 0.5 * (lo + hi);
        if (eps_at(mid).squaredNorm() > target_energy)
            lo = mid;
        else
            hi = mid;
    }
    plan.lambda = 0.5 * (lo + hi);
    plan.epsilons = eps_at(plan.lambda);
    plan.objective = abs_deltas.dot(plan.epsilons);
    return plan;
}

}  // namespace poisonlab
