#include "poisonlab/features.hpp"

#include "doctest.h"

#include <cmath>

using namespace poisonlab;

namespace {

Vector vec2(Scalar a, Scalar b) {
    Vector v(2);
    v << a, b;
    return v;
}

Vector vec1(Scalar x) {
    Vector v(1);
    v << x;
    return v;
}

}  // namespace

TEST_CASE("tabular map indexes gridworld cells row-major") {
    FeatureMap fm = default_tabular_map(make_gridworld_spec(5));
    CHECK(fm.state_features == 25);
    CHECK(fm.dim == 100);
    CHECK(tabular_cell(fm, vec2(0, 0)) == 0);
    CHECK(tabular_cell(fm, vec2(0, 4)) == 4);
    CHECK(tabular_cell(fm, vec2(2, 3)) == 13);
    CHECK(tabular_cell(fm, vec2(4, 4)) == 24);

    Vector f = phi(fm, vec2(2, 3), 1);
    CHECK(f.sum() == 1.0);
    CHECK(f[1 * 25 + 13] == 1.0);
    CHECK(!differentiable(fm));
    CHECK_THROWS_AS(phi_state_jacobian(fm, vec2(2, 3), 1), ArgumentError);
}

TEST_CASE("tabular map covers lineworld including the top edge") {
    FeatureMap fm = default_tabular_map(make_lineworld_spec(), 50);
    CHECK(fm.state_features == 50);
    CHECK(tabular_cell(fm, vec1(0.0)) == 0);
    CHECK(tabular_cell(fm, vec1(1.0)) == 49);  // inclusive upper edge
    CHECK(tabular_cell(fm, vec1(0.5)) == 25);
    CHECK_THROWS_AS(tabular_cell(fm, vec1(1.5)), DataError);
    CHECK_THROWS_AS(tabular_cell(fm, vec1(-0.1)), DataError);
}

TEST_CASE("rbf features peak at their centers and live in one action block") {
    FeatureMap fm = make_rbf_grid(3, 2, vec1(0.0), vec1(1.0), 0.1);
    CHECK(fm.state_features == 4);  // 3 centers + bias
    CHECK(fm.dim == 8);
    // centers at 0, 0.5, 1
    CHECK(fm.centers(0, 0) == 0.0);
    CHECK(fm.centers(1, 0) == 0.5);
    CHECK(fm.centers(2, 0) == 1.0);

    Vector f = phi(fm, vec1(0.5), 1);
    CHECK(f.head(4).isZero());  // action 0 block empty
    CHECK(f[4 + 1] == 1.0);     // at the middle center
    CHECK(f[4 + 3] == 1.0);     // bias
    CHECK(f[4 + 0] == doctest::Approx(std::exp(-0.25 / 0.02)));
    CHECK(differentiable(fm));
}

TEST_CASE("polynomial features enumerate all monomials up to the degree") {
    FeatureMap fm = make_polynomial(2, 2, 1);
    CHECK(fm.state_features == 6);
    Vector f = phi(fm, vec2(2.0, 3.0), 0);
    // exponent order: (0,0),(0,1),(0,2),(1,0),(1,1),(2,0)
    CHECK(f[0] == 1.0);
    CHECK(f[1] == 3.0);
    CHECK(f[2] == 9.0);
    CHECK(f[3] == 2.0);
    CHECK(f[4] == 6.0);
    CHECK(f[5] == 4.0);
}

TEST_CASE("state jacobians match central finite differences") {
    const Scalar h = 1e-6;
    auto check_jacobian = [&](const FeatureMap& fm, const Vector& s, int a) {
        const Matrix jac = phi_state_jacobian(fm, s, a);
        for (int d = 0; d < fm.state_dim; ++d) {
            Vector hi = s, lo = s;
            hi[d] += h;
            lo[d] -= h;
            const Vector numeric = (phi(fm, hi, a) - phi(fm, lo, a)) / (2.0 * h);
            for (Index j = 0; j < fm.dim; ++j)
                CHECK(jac(j, d) == doctest::Approx(numeric[j]).epsilon(1e-5));
        }
    };
    check_jacobian(make_rbf_grid(4, 2, vec1(0.0), vec1(1.0), 0.15), vec1(0.37), 1);
    check_jacobian(make_rbf_grid(3, 4, vec2(0.0, 0.0), vec2(4.0, 4.0), 0.9),
                   vec2(1.3, 2.6), 2);
    check_jacobian(make_polynomial(3, 2, 2), vec2(0.4, -1.2), 0);
}

TEST_CASE("feature map constructors validate their arguments") {
    CHECK_THROWS_AS(make_tabular(0, 2, vec1(0.0), vec1(1.0)), ArgumentError);
    CHECK_THROWS_AS(make_tabular(5, 0, vec1(0.0), vec1(1.0)), ArgumentError);
    CHECK_THROWS_AS(make_tabular(5, 2, vec1(1.0), vec1(0.0)), ArgumentError);
    CHECK_THROWS_AS(make_rbf_grid(5, 2, vec1(0.0), vec1(1.0), 0.0), ArgumentError);
    CHECK_THROWS_AS(make_polynomial(-1, 1, 1), ArgumentError);
    FeatureMap fm = make_polynomial(1, 1, 2);
    CHECK_THROWS_AS(phi(fm, vec1(0.5), 2), ArgumentError);
    CHECK_THROWS_AS(phi(fm, vec2(0.5, 0.5), 0), DataError);
}
