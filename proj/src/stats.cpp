#include "eg/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eg/error.hpp"

namespace eg::stats {

std::string_view method_name(Method m) { return m == Method::Spearman ? "spearman" : "pearson"; }

double mean(std::span<const double> x) {
    if (x.empty()) return 0.0;
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance(std::span<const double> x, int ddof) {
    if (x.size() <= static_cast<std::size_t>(ddof)) return 0.0;
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return ss / static_cast<double>(x.size() - static_cast<std::size_t>(ddof));
}

double stddev(std::span<const double> x, int ddof) { return std::sqrt(variance(x, ddof)); }

namespace {

void require_same_size(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ValidationError("correlation series differ in length");
}

}  // namespace

std::optional<double> pearson_r(std::span<const double> x, std::span<const double> y) {
    require_same_size(x, y);
    if (x.size() < 2) return std::nullopt;
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // Relative guard: a series whose spread is pure rounding noise is constant.
    const auto scale = [](std::span<const double> s, double m) {
        double a = 0.0;
        for (double v : s) a = std::max(a, std::abs(v));
        return std::max(a, std::abs(m));
    };
    const double tiny_x = 1e-24 * scale(x, mx) * scale(x, mx) * static_cast<double>(x.size());
    const double tiny_y = 1e-24 * scale(y, my) * scale(y, my) * static_cast<double>(y.size());
    if (sxx <= tiny_x || syy <= tiny_y) return std::nullopt;
    const double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

std::vector<double> midranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

namespace {

CorrelationResult finish(Method m, std::optional<double> r, std::size_t n) {
    CorrelationResult res;
    res.method = m;
    res.n = n;
    res.coefficient = r;
    if (!r) {
        res.note = "undefined: constant series";
    } else if (n < 3) {
        res.note = "insufficient: n < 3";
    } else {
        res.p_value = p_value_t(*r, n);
    }
    return res;
}

}  // namespace

CorrelationResult pearson(std::span<const double> x, std::span<const double> y) {
    return finish(Method::Pearson, pearson_r(x, y), x.size());
}

CorrelationResult spearman(std::span<const double> x, std::span<const double> y) {
    require_same_size(x, y);
    const auto rx = midranks(x);
    const auto ry = midranks(y);
    return finish(Method::Spearman, pearson_r(rx, ry), x.size());
}

CorrelationResult correlate(Method m, std::span<const double> x, std::span<const double> y) {
    return m == Method::Spearman ? spearman(x, y) : pearson(x, y);
}

namespace {

// Modified Lentz evaluation of the continued fraction for I_x(a,b).
double beta_continued_fraction(double a, double b, double x) {
    constexpr double kTiny = 1e-300;
    constexpr double kEps = 1e-16;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 10000; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) throw ValidationError("incomplete beta needs a, b > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double p_value_t(double r, std::size_t n) {
    if (n < 3) throw ValidationError("p-value needs n >= 3");
    if (!std::isfinite(r)) throw ValidationError("p-value needs a finite coefficient");
    const double ar = std::abs(r);
    if (ar >= 1.0) return 0.0;
    const double df = static_cast<double>(n - 2);
    // With t^2 = r^2 df / (1 - r^2), df / (df + t^2) reduces to 1 - r^2.
    const double x = (1.0 - ar) * (1.0 + ar);
    return std::clamp(incomplete_beta(df / 2.0, 0.5, x), 0.0, 1.0);
}

double exact_permutation_p(std::span<const double> x, std::span<const double> y, Method m) {
    require_same_size(x, y);
    const auto n = x.size();
    if (n < 3 || n > 10) throw ValidationError("exact permutation p-value supports 3 <= n <= 10");
    std::vector<double> xs(x.begin(), x.end());
    std::vector<double> ys(y.begin(), y.end());
    if (m == Method::Spearman) {
        xs = midranks(xs);
        ys = midranks(ys);
    }
    const auto observed = pearson_r(xs, ys);
    if (!observed) throw ValidationError("exact permutation p-value undefined for a constant series");
    const double threshold = std::abs(*observed) - 1e-12;

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<double> permuted(n);
    std::size_t hits = 0, total = 0;
    do {
        for (std::size_t i = 0; i < n; ++i) permuted[i] = ys[perm[i]];
        const auto r = pearson_r(xs, permuted);
        if (r && std::abs(*r) >= threshold) ++hits;
        ++total;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(hits) / static_cast<double>(total);
}

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw ValidationError("quantile of empty series");
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace eg::stats
