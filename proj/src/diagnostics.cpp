#include "drml/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace drml {

double estimate_alpha(const Mat& x_origin, const Mat& x_new) {
    const double denom = frobenius_inner(x_origin, x_origin);
    if (denom <= 0.0)
        throw std::invalid_argument("estimate_alpha: zero-norm X_origin");
    return frobenius_inner(x_origin, x_new) / denom;
}

std::optional<double> norm_ratio(const Mat& x_origin, const Mat& x_new) {
    const double alpha = estimate_alpha(x_origin, x_new);
    Mat residual = x_new;
    Mat change = x_new;
    for (std::size_t i = 0; i < x_new.n_rows(); ++i)
        for (std::size_t j = 0; j < x_new.n_cols(); ++j) {
            residual.rows[i][j] -= alpha * x_origin.rows[i][j];
            change.rows[i][j] -= x_origin.rows[i][j];
        }
    const double denom = frobenius_norm(change);
    if (denom < 1e-12) return std::nullopt;
    const double phi = frobenius_norm(residual) / denom;
    return std::min(phi, 1.0);
}

PsiRatios psi_ratios(const CheckpointRecord& record, bool prototypes_fixed_pre) {
    const std::size_t n_rows = record.x_origin.n_rows();
    if (record.n_support >= n_rows || record.classes.size() < 2)
        throw std::invalid_argument("psi_ratios: need queries and >= 2 classes");
    std::vector<double> same, diff;
    for (std::size_t j = record.n_support; j < n_rows; ++j) {
        const Vec& q_old = record.x_origin.rows[j];
        const Vec& q_new = record.x_new.rows[j];
        for (std::size_t y = 0; y < record.classes.size(); ++y) {
            const double d_old =
                euclidean_distance(q_old, record.prototypes_origin[y]);
            double d_new;
            if (prototypes_fixed_pre) {
                // Pre-update prototype against the post-update query, in
                // the pre-update frame.
                Vec q_raw = q_new;
                for (std::size_t k = 0; k < q_raw.size(); ++k)
                    q_raw[k] += record.mean_shift[k];
                d_new = euclidean_distance(q_raw, record.prototypes_origin[y]);
            } else {
                d_new = euclidean_distance(q_new, record.prototypes_new[y]);
            }
            const double psi = d_new / d_old;
            if (record.row_class[j] == record.classes[y])
                same.push_back(psi);
            else
                diff.push_back(psi);
        }
    }
    return {geometric_mean(same), geometric_mean(diff)};
}

RatioReport ratio_report(const CheckpointRecord& record,
                         bool prototypes_fixed_pre) {
    RatioReport rep;
    rep.alpha_hat = estimate_alpha(record.x_origin, record.x_new);
    rep.phi = norm_ratio(record.x_origin, record.x_new);
    const PsiRatios psi = psi_ratios(record, prototypes_fixed_pre);
    rep.con_alpha = psi.psi_con / rep.alpha_hat;
    rep.div_alpha = psi.psi_div / rep.alpha_hat;
    rep.con_div = psi.psi_con / psi.psi_div;
    rep.properly_converged = rep.con_alpha < 1.0;
    rep.properly_diverged = rep.div_alpha > 1.0;
    rep.properly_ratioed = rep.con_div < 1.0;
    return rep;
}

namespace {

// Midranks of the pooled sample.
std::vector<double> midranks(const std::vector<double>& pooled) {
    const std::size_t n = pooled.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return pooled[i] < pooled[j]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double u_from_ranksum(double ranksum, std::size_t n1) {
    return ranksum - 0.5 * static_cast<double>(n1) * static_cast<double>(n1 + 1);
}

double normal_sf_two_sided(double z) {
    // 2 * P(Z >= z) for z >= 0.
    return std::erfc(z / std::sqrt(2.0));
}

unsigned long long binomial_ull(unsigned long long n, unsigned long long k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    unsigned long long r = 1;
    for (unsigned long long i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

double log_binomial(double n, double k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace

MannWhitneyResult mann_whitney_u(const std::vector<double>& a,
                                 const std::vector<double>& b) {
    if (a.empty() || b.empty())
        throw std::invalid_argument("mann_whitney_u: empty sample");
    const std::size_t n1 = a.size();
    const std::size_t n2 = b.size();
    const std::size_t n = n1 + n2;
    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::vector<double> ranks = midranks(pooled);
    double ranksum_a = 0.0;
    for (std::size_t i = 0; i < n1; ++i) ranksum_a += ranks[i];
    const double u_obs = u_from_ranksum(ranksum_a, n1);
    const double u_max = static_cast<double>(n1) * static_cast<double>(n2);

    MannWhitneyResult res;
    res.u = u_obs;
    if (n <= 12) {
        // Full enumeration over all assignments of n1 pooled positions to
        // sample a.
        const double extreme_obs = std::min(u_obs, u_max - u_obs);
        std::vector<char> mask(n, 0);
        std::fill(mask.begin(), mask.begin() + n1, 1);
        std::sort(mask.begin(), mask.end(), std::greater<char>());
        unsigned long long count = 0, total = 0;
        do {
            double rs = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (mask[i]) rs += ranks[i];
            const double u = u_from_ranksum(rs, n1);
            if (std::min(u, u_max - u) <= extreme_obs + 1e-9) ++count;
            ++total;
        } while (std::prev_permutation(mask.begin(), mask.end()));
        res.p_value = static_cast<double>(count) / static_cast<double>(total);
        return res;
    }

    // Normal approximation with tie correction and continuity correction.
    const double nn = static_cast<double>(n);
    double tie_sum = 0.0;
    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i;
        while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i + 1);
        tie_sum += t * t * t - t;
        i = j + 1;
    }
    const double mean_u = u_max / 2.0;
    const double var_u = u_max / 12.0 * ((nn + 1.0) - tie_sum / (nn * (nn - 1.0)));
    if (var_u <= 0.0) {
        res.p_value = 1.0;
        return res;
    }
    const double z = std::max(std::abs(u_obs - mean_u) - 0.5, 0.0) / std::sqrt(var_u);
    res.p_value = std::min(normal_sf_two_sided(z), 1.0);
    return res;
}

double fisher_exact(long long a, long long b, long long c, long long d) {
    if (a < 0 || b < 0 || c < 0 || d < 0)
        throw std::invalid_argument("fisher_exact: negative count");
    const long long row1 = a + b, row2 = c + d, col1 = a + c, total = a + b + c + d;
    if (total == 0)
        throw std::invalid_argument("fisher_exact: empty table");
    const long long lo = std::max(0LL, col1 - row2);
    const long long hi = std::min(row1, col1);

    if (total <= 60) {
        // Exact integer numerators; the denominator C(total, col1) cancels.
        const auto num = [&](long long x) {
            return binomial_ull(static_cast<unsigned long long>(row1),
                                static_cast<unsigned long long>(x)) *
                   binomial_ull(static_cast<unsigned long long>(row2),
                                static_cast<unsigned long long>(col1 - x));
        };
        const unsigned long long num_obs = num(a);
        unsigned long long sum = 0;
        for (long long x = lo; x <= hi; ++x) {
            const unsigned long long nx = num(x);
            if (nx <= num_obs) sum += nx;
        }
        return static_cast<double>(sum) /
               static_cast<double>(binomial_ull(
                   static_cast<unsigned long long>(total),
                   static_cast<unsigned long long>(col1)));
    }

    const auto log_num = [&](long long x) {
        return log_binomial(static_cast<double>(row1), static_cast<double>(x)) +
               log_binomial(static_cast<double>(row2), static_cast<double>(col1 - x));
    };
    const double log_den = log_binomial(static_cast<double>(total),
                                        static_cast<double>(col1));
    const double log_obs = log_num(a);
    double p = 0.0;
    for (long long x = lo; x <= hi; ++x) {
        const double lx = log_num(x);
        if (lx <= log_obs + 1e-12) p += std::exp(lx - log_den);
    }
    return std::min(p, 1.0);
}

namespace {

struct MeasureColumn {
    std::vector<double> values;        // defined values only
    std::size_t properly = 0;          // properly-learned count
    std::size_t counted = 0;           // checkpoints entering the proportion
};

MeasureColumn collect(const TrainLog& log, const std::string& measure,
                      bool prototypes_fixed_pre) {
    MeasureColumn col;
    for (const CheckpointRow& row : log.checkpoints) {
        const RatioReport rep = ratio_report(row.record, prototypes_fixed_pre);
        if (measure == "norm_ratio") {
            if (!rep.phi) continue;  // undefined-sentinel checkpoint
            col.values.push_back(*rep.phi);
        } else if (measure == "con_alpha") {
            col.values.push_back(rep.con_alpha);
            col.properly += rep.properly_converged ? 1 : 0;
            ++col.counted;
        } else if (measure == "div_alpha") {
            col.values.push_back(rep.div_alpha);
            col.properly += rep.properly_diverged ? 1 : 0;
            ++col.counted;
        } else if (measure == "con_div") {
            col.values.push_back(rep.con_div);
            col.properly += rep.properly_ratioed ? 1 : 0;
            ++col.counted;
        }
    }
    return col;
}

double geomean_or_nan(const std::vector<double>& xs) {
    // Norm ratio can be exactly 0 under a pure-scaling update; clamp for
    // the log.
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::vector<double> clamped = xs;
    for (double& x : clamped) x = std::max(x, 1e-300);
    return geometric_mean(clamped);
}

}  // namespace

ComparisonReport compare_runs(const TrainLog& log_a, const TrainLog& log_b,
                              bool prototypes_fixed_pre) {
    if (log_a.checkpoints.size() < 2 || log_b.checkpoints.size() < 2)
        throw std::invalid_argument("compare_runs: need >= 2 checkpoints per run");
    ComparisonReport report;
    for (const std::string measure :
         {"norm_ratio", "con_alpha", "div_alpha", "con_div"}) {
        const MeasureColumn col_a = collect(log_a, measure, prototypes_fixed_pre);
        const MeasureColumn col_b = collect(log_b, measure, prototypes_fixed_pre);
        if (col_a.values.empty() || col_b.values.empty())
            throw std::invalid_argument("compare_runs: measure undefined for a run");
        ComparisonRow row;
        row.measure = measure;
        row.geomean_a = geomean_or_nan(col_a.values);
        row.geomean_b = geomean_or_nan(col_b.values);
        row.mw_p = mann_whitney_u(col_a.values, col_b.values).p_value;
        if (measure != "norm_ratio") {
            row.proportion_a = static_cast<double>(col_a.properly) /
                               static_cast<double>(col_a.counted);
            row.proportion_b = static_cast<double>(col_b.properly) /
                               static_cast<double>(col_b.counted);
            row.fisher_p = fisher_exact(
                static_cast<long long>(col_a.properly),
                static_cast<long long>(col_a.counted - col_a.properly),
                static_cast<long long>(col_b.properly),
                static_cast<long long>(col_b.counted - col_b.properly));
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string comparison_csv(const ComparisonReport& report) {
    std::ostringstream out;
    out.precision(17);
    out << "measure,geomean_A,proportion_A,geomean_B,proportion_B,mw_p,fisher_p\n";
    for (const ComparisonRow& row : report.rows) {
        out << row.measure << ',' << row.geomean_a << ',';
        if (row.proportion_a) out << *row.proportion_a;
        out << ',' << row.geomean_b << ',';
        if (row.proportion_b) out << *row.proportion_b;
        out << ',' << row.mw_p << ',';
        if (row.fisher_p) out << *row.fisher_p;
        out << '\n';
    }
    return out.str();
}

}  // namespace drml
