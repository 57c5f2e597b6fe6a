#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace eg::stats {

enum class Method { Spearman, Pearson };
std::string_view method_name(Method m);

struct CorrelationResult {
    Method method = Method::Spearman;
    std::optional<double> coefficient;  // nullopt when a series is constant
    std::optional<double> p_value;      // two-sided; nullopt when coefficient is or n < 3
    std::size_t n = 0;
    std::string note;                   // why a field is undefined, empty otherwise

    bool defined() const { return coefficient.has_value() && p_value.has_value(); }
};

double mean(std::span<const double> x);
// ddof = 1 gives the unbiased estimator; returns 0 when x.size() <= ddof.
double variance(std::span<const double> x, int ddof = 1);
double stddev(std::span<const double> x, int ddof = 1);

// Pearson r, or nullopt when either series has zero variance. Sizes must match.
std::optional<double> pearson_r(std::span<const double> x, std::span<const double> y);

// 1-based average ranks; tied values share the mean of the ranks they span.
std::vector<double> midranks(std::span<const double> x);

CorrelationResult pearson(std::span<const double> x, std::span<const double> y);
CorrelationResult spearman(std::span<const double> x, std::span<const double> y);
CorrelationResult correlate(Method m, std::span<const double> x, std::span<const double> y);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

// Two-sided p-value for a correlation coefficient under the Student-t
// approximation with n-2 degrees of freedom. |r| = 1 gives exactly 0. Requires n >= 3.
double p_value_t(double r, std::size_t n);

// Exact two-sided permutation p-value: the share of all n! orderings of y whose
// |coefficient| reaches the observed one. Limited to n <= 10.
double exact_permutation_p(std::span<const double> x, std::span<const double> y, Method m);

// Linear-interpolation quantile of sorted data (q in [0,1]).
double quantile_sorted(std::span<const double> sorted, double q);

}  // namespace eg::stats
