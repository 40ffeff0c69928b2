#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace drml {

using Vec = std::vector<double>;

// Rectangular matrix stored as rows of equal dimension.
struct Mat {
    std::vector<Vec> rows;

    Mat() = default;
    explicit Mat(std::vector<Vec> r) : rows(std::move(r)) {}

    std::size_t n_rows() const { return rows.size(); }
    std::size_t n_cols() const { return rows.empty() ? 0 : rows[0].size(); }
};

// Stabilizer added to the squared distance before the square root.
inline constexpr double kDistanceStabilizer = 1e-10;

// Euclidean distance with the 1e-10 stabilizer inside the root.
// Never returns less than sqrt(1e-10).
double euclidean_distance(const Vec& u, const Vec& v);

// Squared Euclidean distance without the stabilizer.
double squared_distance(const Vec& u, const Vec& v);

double norm(const Vec& v);
double dot(const Vec& u, const Vec& v);

// Angle in [0, pi] between two unit vectors. Inputs must have norm
// within 1e-6 of 1; the inner product is clamped to [-1, 1] before acos.
double angular_distance(const Vec& u, const Vec& v);

// Subtracts the column means so the average row is at the origin.
Mat mean_center(const Mat& X);

// exp(mean of logs). All entries must be strictly positive.
double geometric_mean(const std::vector<double>& xs);

double frobenius_norm(const Mat& X);
double frobenius_inner(const Mat& A, const Mat& B);

}  // namespace drml
