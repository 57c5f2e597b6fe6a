#include <doctest.h>

#include <cmath>

#include "eg/error.hpp"
#include "eg/rng.hpp"
#include "eg/stats.hpp"
#include "oracles/oracles.hpp"

using namespace eg;
using doctest::Approx;

namespace {

std::vector<double> gaussian(Rng& r, std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = r.normal();
    return v;
}

}  // namespace

TEST_CASE("spearman: worked examples") {
    CHECK(*stats::spearman(std::vector<double>{1, 2, 3}, std::vector<double>{10, 20, 30}).coefficient ==
          Approx(1.0).epsilon(1e-15));
    const auto r = stats::spearman(std::vector<double>{1, 2, 3, 4, 5}, std::vector<double>{2, 1, 4, 3, 5});
    CHECK(*r.coefficient == Approx(0.8).epsilon(1e-14));
    CHECK(r.n == 5);
    CHECK(r.method == stats::Method::Spearman);
}

TEST_CASE("spearman: ties use mid-ranks") {
    const std::vector<double> x{1, 1, 2}, y{1, 2, 3};
    CHECK(stats::midranks(x) == std::vector<double>{1.5, 1.5, 3});
    const auto r = stats::spearman(x, y);
    CHECK(std::abs(*r.coefficient - static_cast<double>(oracle::spearman_with_ties(x, y))) < 1e-12);
}

TEST_CASE("pearson: worked examples") {
    const std::vector<double> x{1, 2, 3, 4}, y{1, 3, 2, 4};
    const auto r = stats::pearson(x, y);
    CHECK(*r.coefficient == Approx(0.8).epsilon(1e-14));
    CHECK(std::abs(*r.coefficient - static_cast<double>(oracle::pearson(x, y))) < 1e-12);
    std::vector<double> lin;
    for (double v : x) lin.push_back(2 * v + 3);
    CHECK(*stats::pearson(x, lin).coefficient == Approx(1.0).epsilon(1e-14));
    const auto zero = stats::pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 0, 1});
    CHECK(*zero.coefficient == Approx(0.0).epsilon(1e-15));
    CHECK(*zero.p_value == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constant series are flagged undefined") {
    const auto r = stats::spearman(std::vector<double>{1, 1, 1, 1}, std::vector<double>{1, 2, 3, 4});
    CHECK_FALSE(r.coefficient);
    CHECK_FALSE(r.p_value);
    CHECK_FALSE(r.note.empty());
    CHECK_FALSE(r.defined());
}

TEST_CASE("p_value_t: edges and magnitude") {
    CHECK(stats::p_value_t(0.0, 10) == 1.0);
    CHECK(stats::p_value_t(1.0, 10) == 0.0);
    CHECK(stats::p_value_t(-1.0, 10) == 0.0);
    CHECK(stats::p_value_t(0.593, 245) < 1e-20);
    CHECK_THROWS_AS(stats::p_value_t(0.5, 2), ValidationError);
}

TEST_CASE("p_value_t matches the Student-t oracle") {
    Rng rng(11);
    for (int i = 0; i < 200; ++i) {
        const std::size_t n = 3 + rng.below(300);
        const double r = 2.0 * rng.uniform() - 1.0;
        const double ours = stats::p_value_t(r, n);
        const double ref = oracle::t_test_p(r, n);
        CHECK(std::abs(ours - ref) <= 1e-12 + 1e-10 * ref);
    }
}

TEST_CASE("p_value_t strictly decreases in |r|") {
    for (std::size_t n : {4u, 10u, 50u}) {
        double prev = 2.0;
        for (double r = 0.0; r < 0.99; r += 0.03) {
            const double p = stats::p_value_t(r, n);
            CHECK(p < prev);
            prev = p;
        }
    }
}

TEST_CASE("incomplete beta identities") {
    CHECK(stats::incomplete_beta(1, 1, 0.3) == Approx(0.3).epsilon(1e-14));
    CHECK(stats::incomplete_beta(2, 3, 0.0) == 0.0);
    CHECK(stats::incomplete_beta(2, 3, 1.0) == 1.0);
    // I_x(a,b) = 1 - I_{1-x}(b,a)
    for (double x : {0.1, 0.37, 0.8}) {
        CHECK(stats::incomplete_beta(2.5, 0.5, x) == Approx(1.0 - stats::incomplete_beta(0.5, 2.5, 1.0 - x)).epsilon(1e-13));
    }
}

TEST_CASE("coefficient properties on random data") {
    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 3 + rng.below(40);
        auto x = gaussian(rng, n), y = gaussian(rng, n);
        const double rs = *stats::spearman(x, y).coefficient;
        const double rp = *stats::pearson(x, y).coefficient;
        CHECK(std::abs(rs - static_cast<double>(oracle::spearman_rank_formula(x, y))) < 1e-12);
        CHECK(std::abs(rp - static_cast<double>(oracle::pearson(x, y))) < 1e-12);
        // Monotone transform leaves Spearman unchanged; positive affine leaves Pearson unchanged.
        std::vector<double> ex, ax;
        for (double v : x) {
            ex.push_back(std::exp(v));
            ax.push_back(3.0 * v - 7.0);
        }
        CHECK(std::abs(*stats::spearman(ex, y).coefficient - rs) < 1e-12);
        CHECK(std::abs(*stats::pearson(ax, y).coefficient - rp) < 1e-12);
        CHECK(std::abs(rs) <= 1.0);
    }
}

TEST_CASE("exact permutation p against Monte-Carlo permutations") {
    Rng rng(21);
    for (int rep = 0; rep < 6; ++rep) {
        const std::size_t n = 5 + rng.below(4);
        auto x = gaussian(rng, n), y = gaussian(rng, n);
        for (std::size_t i = 0; i < n; ++i) y[i] += 0.8 * x[i];
        const double exact = stats::exact_permutation_p(x, y, stats::Method::Pearson);
        const auto coef = [](const std::vector<double>& a, const std::vector<double>& b) { return oracle::pearson(a, b); };
        const std::size_t draws = 200000;
        const double mc = oracle::mc_permutation_p(x, y, coef, draws, 100 + static_cast<std::uint64_t>(rep));
        CHECK(std::abs(exact - mc) <= oracle::mc_tolerance(exact, draws));
    }
    CHECK_THROWS(stats::exact_permutation_p(std::vector<double>(11, 1.0), std::vector<double>(11, 1.0),
                                            stats::Method::Spearman));
}

TEST_CASE("moments and quantiles") {
    const std::vector<double> v{1, 2, 3, 4};
    CHECK(stats::mean(v) == 2.5);
    CHECK(stats::variance(v, 0) == Approx(1.25));
    CHECK(stats::variance(v, 1) == Approx(5.0 / 3.0));
    CHECK(stats::quantile_sorted(v, 0.5) == Approx(2.5));
    CHECK(stats::quantile_sorted(v, 0.0) == 1.0);
    CHECK(stats::quantile_sorted(v, 1.0) == 4.0);
}
