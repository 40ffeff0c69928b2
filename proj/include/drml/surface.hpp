#pragma once

#include <functional>
#include <string>
#include <vector>

#include "drml/formulations.hpp"

namespace drml {

enum class DomainKind { Plane, Sphere };

struct PlaneBounds {
    double x0 = -1.0, x1 = 1.0;
    double y0 = -1.0, y1 = 1.0;
};

// Prototype bounding box expanded by 50% on each axis.
PlaneBounds default_plane_bounds(const std::vector<Vec>& prototypes);

// Scalar confidence field sampled on a plane or on the unit sphere
// (latitude-longitude grid). Row-major values; positions per node.
struct ConfidenceGrid {
    DomainKind domain = DomainKind::Plane;
    std::size_t res_x = 0;  // columns (plane x / sphere longitude)
    std::size_t res_y = 0;  // rows (plane y / sphere latitude)
    PlaneBounds bounds;     // plane domain only
    std::vector<double> values;
    std::vector<Vec> positions;

    std::function<double(const Vec&)> evaluate;  // underlying field

    double value_at(std::size_t row, std::size_t col) const {
        return values[row * res_x + col];
    }
    const Vec& position_at(std::size_t row, std::size_t col) const {
        return positions[row * res_x + col];
    }
};

// Confidence for the target class over a 2-D plane, with Euclidean
// distances to three prototypes. Head must be SoftmaxSq or DR.
ConfidenceGrid plane_grid(const std::vector<Vec>& prototypes, const Head& head,
                          int target, const PlaneBounds& bounds,
                          std::size_t resolution);

// Confidence for the target class over the unit sphere under a cosine
// or angular head.
ConfidenceGrid sphere_grid(const std::vector<Vec>& class_vectors,
                           const Head& head, int target,
                           std::size_t resolution);

struct ExtremaReport {
    Vec argmax;
    double max_value = 0.0;
    std::vector<Vec> argmin;  // all minima within 1e-9 of the global minimum
    double min_value = 0.0;
    bool flat = false;
};

// Best grid node followed by refine_steps iterations of pattern search
// with shrinking step, projected back to the sphere in spherical domains.
ExtremaReport find_extrema(const ConfidenceGrid& grid, std::size_t refine_steps);

// CSV of x,y[,z],value rows.
void write_grid_csv(const ConfidenceGrid& grid, const std::string& path);

// 8-bit binary PGM (P5), value 0 -> black, 1 -> white, row-major.
void write_grid_pgm(const ConfidenceGrid& grid, const std::string& path);

}  // namespace drml
