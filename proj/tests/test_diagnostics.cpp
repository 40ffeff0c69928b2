#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "drml/diagnostics.hpp"

using namespace drml;

namespace {

Mat random_mat(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
    std::uniform_real_distribution<double> dist(-3.0, 3.0);
    Mat m;
    m.rows.assign(rows, Vec(cols));
    for (Vec& r : m.rows)
        for (double& v : r) v = dist(rng);
    return m;
}

// Two supports (one per class) and one class-0 query that moves from
// x = 1 to x = q_new_x along the first axis.
CheckpointRecord toy_record(double q_new_x) {
    CheckpointRecord rec;
    rec.n_support = 2;
    rec.row_class = {0, 1, 0};
    rec.classes = {0, 1};
    rec.x_origin.rows = {{0, 0}, {3, 0}, {1, 0}};
    rec.x_new.rows = {{0, 0}, {3, 0}, {q_new_x, 0}};
    rec.prototypes_origin = {{0, 0}, {3, 0}};
    rec.prototypes_new = {{0, 0}, {3, 0}};
    rec.mean_shift = {0, 0};
    return rec;
}

// Independent brute-force two-sided Mann-Whitney p via bitmask enumeration.
double brute_force_mw_p(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::size_t n = pooled.size();
    const std::size_t n1 = a.size();
    // Midranks by direct counting: rank = #smaller + (#equal + 1) / 2.
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t smaller = 0, equal = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (pooled[j] < pooled[i]) ++smaller;
            if (pooled[j] == pooled[i]) ++equal;
        }
        ranks[i] = static_cast<double>(smaller) + 0.5 * static_cast<double>(equal + 1);
    }
    const double u_max = static_cast<double>(n1 * (n - n1));
    const auto u_of = [&](unsigned mask) {
        double rs = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask & (1u << i)) rs += ranks[i];
        return rs - 0.5 * static_cast<double>(n1) * static_cast<double>(n1 + 1);
    };
    unsigned obs_mask = 0;
    for (std::size_t i = 0; i < n1; ++i) obs_mask |= 1u << i;
    const double u_obs = u_of(obs_mask);
    const double extreme_obs = std::min(u_obs, u_max - u_obs);
    unsigned long long count = 0, total = 0;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        if (static_cast<std::size_t>(__builtin_popcount(mask)) != n1) continue;
        const double u = u_of(mask);
        if (std::min(u, u_max - u) <= extreme_obs + 1e-9) ++count;
        ++total;
    }
    return static_cast<double>(count) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("estimate_alpha closed form") {
    Mat eye;
    eye.rows = {{1, 0}, {0, 1}};
    Mat doubled;
    doubled.rows = {{2, 0}, {0, 2}};
    CHECK(estimate_alpha(eye, doubled) == doctest::Approx(2.0));
    Mat half_gone;
    half_gone.rows = {{2, 0}, {0, 0}};
    CHECK(estimate_alpha(eye, half_gone) == doctest::Approx(1.0));
    Mat zero;
    zero.rows = {{0, 0}, {0, 0}};
    CHECK_THROWS_AS(estimate_alpha(zero, eye), std::invalid_argument);
}

TEST_CASE("estimate_alpha minimizes the Frobenius residual") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const Mat xo = random_mat(rng, 5, 3);
        const Mat xn = random_mat(rng, 5, 3);
        const double alpha = estimate_alpha(xo, xn);
        const auto residual = [&](double a) {
            double s = 0.0;
            for (std::size_t i = 0; i < xo.n_rows(); ++i)
                for (std::size_t j = 0; j < xo.n_cols(); ++j) {
                    const double r = xn.rows[i][j] - a * xo.rows[i][j];
                    s += r * r;
                }
            return s;
        };
        const double at = residual(alpha);
        CHECK(at <= residual(alpha + 1e-3) + 1e-12);
        CHECK(at <= residual(alpha - 1e-3) + 1e-12);
    }
}

TEST_CASE("norm_ratio examples and range") {
    // Pure scaling: residual vanishes, ratio 0.
    Mat xo;
    xo.rows = {{1, 0}, {0, 1}};
    Mat scaled;
    scaled.rows = {{1.7, 0}, {0, 1.7}};
    CHECK(*norm_ratio(xo, scaled) == doctest::Approx(0.0));

    // No change at all: undefined (sentinel).
    CHECK(!norm_ratio(xo, xo).has_value());

    // Orthogonal update: alpha = 0, ratio = 1/sqrt(2).
    Mat a, b;
    a.rows = {{1, 0}};
    b.rows = {{0, 1}};
    CHECK(*norm_ratio(a, b) == doctest::Approx(std::sqrt(2.0) / 2.0));

    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 100; ++trial) {
        const Mat m1 = random_mat(rng, 4, 4);
        const Mat m2 = random_mat(rng, 4, 4);
        const auto phi = norm_ratio(m1, m2);
        REQUIRE(phi.has_value());
        CHECK(*phi >= 0.0);
        CHECK(*phi <= 1.0);
    }
}

TEST_CASE("psi_ratios on a hand-built record") {
    // Class-0 query moves from distance 1 to 0.5 of its own prototype
    // and from 2 to 2.5 of the other one.
    const CheckpointRecord rec = toy_record(0.5);
    const PsiRatios psi = psi_ratios(rec);
    CHECK(psi.psi_con == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(psi.psi_div == doctest::Approx(1.25).epsilon(1e-6));

    CheckpointRecord bad = rec;
    bad.n_support = 3;  // no query rows left
    CHECK_THROWS_AS(psi_ratios(bad), std::invalid_argument);
}

TEST_CASE("psi_ratios with fixed pre-update prototypes") {
    CheckpointRecord rec = toy_record(0.5);
    // Differently-centered frames: the new frame is shifted by (1, 0), and
    // the post-update prototypes moved somewhere else entirely.
    rec.mean_shift = {1.0, 0.0};
    rec.prototypes_new = {{-10, 0}, {10, 0}};
    // Fixed-pre: query raw position 0.5 + 1 = 1.5 against the old
    // prototypes at 0 and 3.
    const PsiRatios fixed = psi_ratios(rec, true);
    CHECK(fixed.psi_con == doctest::Approx(1.5).epsilon(1e-6));
    CHECK(fixed.psi_div == doctest::Approx(0.75).epsilon(1e-6));
    // Default: recomputed prototypes in the new frame.
    const PsiRatios recomputed = psi_ratios(rec, false);
    CHECK(recomputed.psi_con == doctest::Approx(10.5).epsilon(1e-6));
    CHECK(recomputed.psi_div == doctest::Approx(9.5 / 2.0).epsilon(1e-6));
}

TEST_CASE("ratio_report identities and flags") {
    const CheckpointRecord rec = toy_record(0.5);
    const RatioReport rep = ratio_report(rec);
    CHECK(rep.alpha_hat == doctest::Approx(9.5 / 10.0));
    CHECK(rep.con_div ==
          doctest::Approx(rep.con_alpha / rep.div_alpha).epsilon(1e-12));
    CHECK(rep.properly_converged);   // 0.5 / 0.95 < 1
    CHECK(rep.properly_diverged);    // 1.25 / 0.95 > 1
    CHECK(rep.properly_ratioed);     // 0.4 < 1
    REQUIRE(rep.phi.has_value());
    CHECK(*rep.phi >= 0.0);
    CHECK(*rep.phi <= 1.0);
}

TEST_CASE("mann_whitney_u exact small-sample cases") {
    const MannWhitneyResult sep = mann_whitney_u({1, 2}, {3, 4});
    CHECK(sep.u == doctest::Approx(0.0));
    CHECK(sep.p_value == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    const MannWhitneyResult same = mann_whitney_u({5, 5, 5}, {5, 5, 5});
    CHECK(same.p_value == doctest::Approx(1.0));

    // Swapping the samples keeps the two-sided p.
    const MannWhitneyResult swapped = mann_whitney_u({3, 4}, {1, 2});
    CHECK(swapped.p_value == doctest::Approx(sep.p_value));
    CHECK(swapped.u == doctest::Approx(4.0));

    CHECK_THROWS_AS(mann_whitney_u({}, {1.0}), std::invalid_argument);
}

TEST_CASE("mann_whitney_u matches a brute-force enumerator") {
    std::mt19937_64 rng(41);
    std::uniform_int_distribution<int> val(0, 4);  // ties are likely
    std::uniform_int_distribution<int> size(2, 5);
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<double> a(size(rng)), b(size(rng));
        for (double& x : a) x = val(rng);
        for (double& x : b) x = val(rng);
        const MannWhitneyResult res = mann_whitney_u(a, b);
        CHECK(res.p_value ==
              doctest::Approx(brute_force_mw_p(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("mann_whitney_u large-sample normal approximation") {
    std::vector<double> low(20), high(20);
    std::iota(low.begin(), low.end(), 1.0);
    std::iota(high.begin(), high.end(), 21.0);
    CHECK(mann_whitney_u(low, high).p_value < 1e-6);
    CHECK(mann_whitney_u(low, low).p_value > 0.9);
    // Shifting both samples together changes nothing.
    std::vector<double> low2 = low, high2 = high;
    for (double& x : low2) x += 100.0;
    for (double& x : high2) x += 100.0;
    CHECK(mann_whitney_u(low2, high2).p_value ==
          doctest::Approx(mann_whitney_u(low, high).p_value));
}

TEST_CASE("fisher_exact") {
    CHECK(fisher_exact(2, 0, 0, 2) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(fisher_exact(5, 0, 0, 5) == doctest::Approx(2.0 / 252.0).epsilon(1e-12));
    CHECK(fisher_exact(1, 1, 1, 1) == doctest::Approx(1.0));
    // Transposing the table keeps the p-value.
    CHECK(fisher_exact(3, 1, 2, 4) == doctest::Approx(fisher_exact(3, 2, 1, 4)));
    // Strong association in a big table (log-space branch).
    CHECK(fisher_exact(50, 0, 0, 50) < 1e-20);
    // A balanced big table is not significant.
    CHECK(fisher_exact(25, 25, 25, 25) > 0.9);
    CHECK_THROWS_AS(fisher_exact(0, 0, 0, 0), std::invalid_argument);
    CHECK_THROWS_AS(fisher_exact(-1, 1, 1, 1), std::invalid_argument);
}

TEST_CASE("compare_runs self-comparison and symmetry") {
    TrainLog log_a, log_b;
    for (double x : {0.4, 0.55, 0.7}) {
        CheckpointRow row;
        row.record = toy_record(x);
        log_a.checkpoints.push_back(row);
    }
    for (double x : {1.3, 1.6, 1.9}) {
        CheckpointRow row;
        row.record = toy_record(x);
        log_b.checkpoints.push_back(row);
    }

    const ComparisonReport self = compare_runs(log_a, log_a);
    REQUIRE(self.rows.size() == 4);
    for (const ComparisonRow& row : self.rows) {
        CHECK(row.geomean_a == doctest::Approx(row.geomean_b));
        CHECK(row.mw_p == doctest::Approx(1.0));
        if (row.fisher_p) CHECK(*row.fisher_p == doctest::Approx(1.0));
    }
    CHECK(self.rows[0].measure == "norm_ratio");
    CHECK(!self.rows[0].proportion_a.has_value());
    CHECK(!self.rows[0].fisher_p.has_value());
    for (std::size_t i = 1; i < 4; ++i) {
        REQUIRE(self.rows[i].proportion_a.has_value());
        REQUIRE(self.rows[i].fisher_p.has_value());
    }

    const ComparisonReport ab = compare_runs(log_a, log_b);
    const ComparisonReport ba = compare_runs(log_b, log_a);
    for (std::size_t i = 0; i < ab.rows.size(); ++i) {
        CHECK(ab.rows[i].geomean_a == doctest::Approx(ba.rows[i].geomean_b));
        CHECK(ab.rows[i].geomean_b == doctest::Approx(ba.rows[i].geomean_a));
        CHECK(ab.rows[i].mw_p == doctest::Approx(ba.rows[i].mw_p));
        if (ab.rows[i].fisher_p)
            CHECK(*ab.rows[i].fisher_p == doctest::Approx(*ba.rows[i].fisher_p));
    }

    // con_alpha oracle for run A: geometric mean of psi_con / alpha_hat.
    std::vector<double> cons;
    for (const CheckpointRow& row : log_a.checkpoints)
        cons.push_back(psi_ratios(row.record).psi_con /
                       estimate_alpha(row.record.x_origin, row.record.x_new));
    CHECK(ab.rows[1].geomean_a == doctest::Approx(geometric_mean(cons)));

    // Run A converges queries (all con_alpha < 1), run B pushes them away.
    CHECK(*ab.rows[1].proportion_a == doctest::Approx(1.0));
    CHECK(*ab.rows[1].proportion_b == doctest::Approx(0.0));

    TrainLog too_short;
    too_short.checkpoints.push_back(log_a.checkpoints[0]);
    CHECK_THROWS_AS(compare_runs(too_short, log_b), std::invalid_argument);
}

TEST_CASE("comparison_csv layout") {
    TrainLog log_a, log_b;
    for (double x : {0.4, 0.7}) {
        CheckpointRow row;
        row.record = toy_record(x);
        log_a.checkpoints.push_back(row);
        row.record = toy_record(x + 1.0);
        log_b.checkpoints.push_back(row);
    }
    const std::string csv = comparison_csv(compare_runs(log_a, log_b));
    CHECK(csv.rfind(
              "measure,geomean_A,proportion_A,geomean_B,proportion_B,mw_p,fisher_p\n",
              0) == 0);
    // The norm_ratio row has empty proportion and fisher cells.
    const std::size_t line_start = csv.find('\n') + 1;
    const std::string first_row = csv.substr(line_start, csv.find('\n', line_start) - line_start);
    CHECK(first_row.rfind("norm_ratio,", 0) == 0);
    CHECK(first_row.find(",,") != std::string::npos);
    CHECK(first_row.back() == ',');  // trailing empty fisher cell
    // Four measure rows plus the header.
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}
