#pragma once

#include <optional>
#include <string>
#include <vector>

#include "drml/core_math.hpp"
#include "drml/episodic.hpp"

namespace drml {

// Least-squares scale aligning X_new to X_origin:
// argmin_a ||X_new - a X_origin||_F = <X_origin, X_new>_F / ||X_origin||_F^2.
double estimate_alpha(const Mat& x_origin, const Mat& x_new);

// ||X_new - a^ X_origin||_F / ||X_new - X_origin||_F, in [0,1].
// Empty when the denominator is below 1e-12 (no change at all).
std::optional<double> norm_ratio(const Mat& x_origin, const Mat& x_new);

struct PsiRatios {
    double psi_con = 0.0;  // geometric mean over same-class (prototype, query) pairs
    double psi_div = 0.0;  // geometric mean over different-class pairs
};

// When prototypes_fixed_pre is true, both numerator and denominator use
// the pre-update prototypes; otherwise the numerator uses the prototypes
// recomputed under the updated parameters.
PsiRatios psi_ratios(const CheckpointRecord& record,
                     bool prototypes_fixed_pre = false);

struct RatioReport {
    double alpha_hat = 0.0;
    std::optional<double> phi;
    double con_alpha = 0.0;
    double div_alpha = 0.0;
    double con_div = 0.0;
    bool properly_converged = false;  // con_alpha < 1
    bool properly_diverged = false;   // div_alpha > 1
    bool properly_ratioed = false;    // con_div < 1
};

RatioReport ratio_report(const CheckpointRecord& record,
                         bool prototypes_fixed_pre = false);

struct MannWhitneyResult {
    double u = 0.0;       // U statistic of sample a
    double p_value = 1.0; // two-sided
};

// Exact p by enumeration of all labelings when |a|+|b| <= 12, otherwise
// normal approximation with tie and continuity corrections.
MannWhitneyResult mann_whitney_u(const std::vector<double>& a,
                                 const std::vector<double>& b);

// Two-sided p over all tables with fixed margins whose probability does
// not exceed the observed one. table = {{a, b}, {c, d}}.
double fisher_exact(long long a, long long b, long long c, long long d);

// One row of the run-comparison report, mirroring the appendix tables.
struct ComparisonRow {
    std::string measure;
    double geomean_a = 0.0;
    std::optional<double> proportion_a;  // properly-learned proportion
    double geomean_b = 0.0;
    std::optional<double> proportion_b;
    double mw_p = 1.0;
    std::optional<double> fisher_p;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;
};

// Per-measure geometric means, properly-learned proportions, and the
// Mann-Whitney / Fisher test protocol over the checkpoints of two runs.
ComparisonReport compare_runs(const TrainLog& log_a, const TrainLog& log_b,
                              bool prototypes_fixed_pre = false);

std::string comparison_csv(const ComparisonReport& report);

}  // namespace drml
