#include "poisonlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace poisonlab {

Scalar mean(const std::vector<Scalar>& xs) {
    if (xs.empty()) throw ArgumentError("mean: empty sample");
    return std::accumulate(xs.begin(), xs.end(), Scalar{0}) /
           static_cast<Scalar>(xs.size());
}

std::optional<Scalar> standard_error(const std::vector<Scalar>& xs) {
    const auto n = static_cast<Scalar>(xs.size());
    if (xs.size() < 2) return std::nullopt;
    const Scalar m = mean(xs);
    Scalar ss = 0;
    for (Scalar x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / (n - 1)) / std::sqrt(n);
}

MeanReturn summarize(const std::vector<Scalar>& xs) {
    return MeanReturn{mean(xs), standard_error(xs),
                      static_cast<Index>(xs.size())};
}

Vector average_ranks(const Vector& xs) {
    const Index n = xs.size();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return xs[a] < xs[b]; });
    Vector ranks(n);
    Index i = 0;
    while (i < n) {
        Index j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        // positions i..j (0-based) share the average 1-based rank
        const Scalar r = static_cast<Scalar>(i + j) / 2.0 + 1.0;
        for (Index k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

namespace {

Scalar pearson(const Vector& xs, const Vector& ys) {
    const Scalar n = static_cast<Scalar>(xs.size());
    const Scalar mx = xs.mean();
    const Scalar my = ys.mean();
    const Vector cx = xs.array() - mx;
    const Vector cy = ys.array() - my;
    const Scalar sx = std::sqrt(cx.squaredNorm() / n);
    const Scalar sy = std::sqrt(cy.squaredNorm() / n);
    if (sx == 0.0 || sy == 0.0) return std::numeric_limits<Scalar>::quiet_NaN();
    return cx.dot(cy) / (n * sx * sy);
}

}  // namespace

std::optional<Scalar> spearman(const Vector& xs, const Vector& ys) {
    if (xs.size() != ys.size())
        throw ArgumentError("spearman: size mismatch");
    if (xs.size() < 2) return std::nullopt;
    const Scalar rho = pearson(average_ranks(xs), average_ranks(ys));
    if (std::isnan(rho)) return std::nullopt;  // a constant input
    return rho;
}

std::optional<Scalar> mann_whitney_auc(const std::vector<Scalar>& positives,
                                       const std::vector<Scalar>& negatives) {
    if (positives.empty() || negatives.empty()) return std::nullopt;
    const Index np = static_cast<Index>(positives.size());
    const Index nn = static_cast<Index>(negatives.size());
    Vector all(np + nn);
    for (Index i = 0; i < np; ++i) all[i] = positives[static_cast<std::size_t>(i)];
    for (Index i = 0; i < nn; ++i) all[np + i] = negatives[static_cast<std::size_t>(i)];
    const Vector ranks = average_ranks(all);
    Scalar rank_sum = 0;
    for (Index i = 0; i < np; ++i) rank_sum += ranks[i];
    const Scalar u = rank_sum - static_cast<Scalar>(np) * (static_cast<Scalar>(np) + 1) / 2.0;
    return u / (static_cast<Scalar>(np) * static_cast<Scalar>(nn));
}

Scalar reduction_pct(Scalar clean, Scalar attacked) {
    if (clean == 0.0)
        throw ArgumentError("reduction_pct: undefined for clean == 0");
    return 100.0 * (clean - attacked) / clean;
}

}  // namespace poisonlab
