#pragma once

#include "poisonlab/types.hpp"

namespace poisonlab {

// Budget allocation across records. Maximizing sum_i |delta_i| eps_i under
// sum_i eps_i^2 <= C with eps_i >= 0 has the closed-form solution
//   eps_i* = sqrt(C) |delta_i| / |delta|_2,
// with active-constraint multiplier lambda* = |delta|_2 / (2 sqrt(C)) and
// objective sqrt(C) |delta|_2. The numerical routine solves the same program
// by projected gradient ascent and exists purely to cross-check the formula.

struct AllocationPlan {
    Vector epsilons;            // per-record budget share, >= 0
    Scalar lambda = 0.0;        // multiplier of the energy constraint
    Scalar c_total = 0.0;       // requested budget
    Scalar objective = 0.0;     // sum |delta_i| eps_i achieved
    bool degenerate = false;    // all deltas zero: nothing to allocate
};

/// Closed-form optimum. abs_deltas must be componentwise >= 0.
AllocationPlan global_allocate(const Vector& abs_deltas, Scalar c_total);

/// Projected gradient ascent on the same program, run to `tol` change in the
/// objective. Independent of the closed form; used to validate it.
AllocationPlan numerical_allocate_oracle(const Vector& abs_deltas, Scalar c_total,
                                         Scalar tol = 1e-12);

/// Water-filling variant with a per-record cap eps_i <= cap: spends
/// min(C, M cap^2) of energy (M = count of nonzero deltas) by bisecting on
/// lambda, capping each record at eps_i = min(cap, |delta_i| / (2 lambda)).
AllocationPlan allocate_with_caps(const Vector& abs_deltas, Scalar c_total,
                                  Scalar cap);

}  // namespace poisonlab
