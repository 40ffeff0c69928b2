#include "drml/core_math.hpp"

#include <cmath>

namespace drml {

double squared_distance(const Vec& u, const Vec& v) {
    if (u.size() != v.size())
        throw std::invalid_argument("squared_distance: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = u[i] - v[i];
        s += d * d;
    }
    return s;
}

double euclidean_distance(const Vec& u, const Vec& v) {
    return std::sqrt(squared_distance(u, v) + kDistanceStabilizer);
}

double dot(const Vec& u, const Vec& v) {
    if (u.size() != v.size())
        throw std::invalid_argument("dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
}

double norm(const Vec& v) { return std::sqrt(dot(v, v)); }

double angular_distance(const Vec& u, const Vec& v) {
    if (std::abs(norm(u) - 1.0) > 1e-6 || std::abs(norm(v) - 1.0) > 1e-6)
        throw std::invalid_argument("angular_distance: inputs must be unit vectors");
    double c = dot(u, v);
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    return std::acos(c);
}

Mat mean_center(const Mat& X) {
    if (X.n_rows() == 0)
        throw std::invalid_argument("mean_center: empty matrix");
    const std::size_t n = X.n_rows();
    const std::size_t d = X.n_cols();
    Vec mean(d, 0.0);
    for (const Vec& row : X.rows) {
        if (row.size() != d)
            throw std::invalid_argument("mean_center: ragged matrix");
        for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
    }
    for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);
    Mat out = X;
    for (Vec& row : out.rows)
        for (std::size_t j = 0; j < d; ++j) row[j] -= mean[j];
    return out;
}

double geometric_mean(const std::vector<double>& xs) {
    if (xs.empty())
        throw std::invalid_argument("geometric_mean: empty input");
    double s = 0.0;
    for (double x : xs) {
        if (!(x > 0.0))
            throw std::invalid_argument("geometric_mean: non-positive entry");
        s += std::log(x);
    }
    return std::exp(s / static_cast<double>(xs.size()));
}

double frobenius_norm(const Mat& X) {
    double s = 0.0;
    for (const Vec& row : X.rows)
        for (double x : row) s += x * x;
    return std::sqrt(s);
}

double frobenius_inner(const Mat& A, const Mat& B) {
    if (A.n_rows() != B.n_rows() || A.n_cols() != B.n_cols())
        throw std::invalid_argument("frobenius_inner: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < A.n_rows(); ++i)
        for (std::size_t j = 0; j < A.n_cols(); ++j) s += A.rows[i][j] * B.rows[i][j];
    return s;
}

}  // namespace drml
