#include "drml/surface.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "drml/core_math.hpp"

namespace drml {

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec sphere_point(double lat, double lon) {
    return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon),
            std::sin(lat)};
}

void check_distinct(const std::vector<Vec>& points) {
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = i + 1; j < points.size(); ++j)
            if (squared_distance(points[i], points[j]) == 0.0)
                throw std::invalid_argument("surface: coincident class points");
}

}  // namespace

PlaneBounds default_plane_bounds(const std::vector<Vec>& prototypes) {
    if (prototypes.empty())
        throw std::invalid_argument("default_plane_bounds: no prototypes");
    PlaneBounds b;
    b.x0 = b.x1 = prototypes[0][0];
    b.y0 = b.y1 = prototypes[0][1];
    for (const Vec& p : prototypes) {
        b.x0 = std::min(b.x0, p[0]);
        b.x1 = std::max(b.x1, p[0]);
        b.y0 = std::min(b.y0, p[1]);
        b.y1 = std::max(b.y1, p[1]);
    }
    const double mx = 0.5 * (b.x1 - b.x0);
    const double my = 0.5 * (b.y1 - b.y0);
    b.x0 -= mx * 0.5;
    b.x1 += mx * 0.5;
    b.y0 -= my * 0.5;
    b.y1 += my * 0.5;
    return b;
}

ConfidenceGrid plane_grid(const std::vector<Vec>& prototypes, const Head& head,
                          int target, const PlaneBounds& bounds,
                          std::size_t resolution) {
    if (resolution < 8)
        throw std::invalid_argument("plane_grid: resolution must be >= 8");
    if (prototypes.size() < 2)
        throw std::invalid_argument("plane_grid: need at least two prototypes");
    if (head.kind != HeadKind::SoftmaxSq && head.kind != HeadKind::DR)
        throw std::invalid_argument("plane_grid: head must be softmax or dr");
    check_distinct(prototypes);
    if (target < 0 || static_cast<std::size_t>(target) >= prototypes.size())
        throw std::invalid_argument("plane_grid: bad target class");

    ConfidenceGrid grid;
    grid.domain = DomainKind::Plane;
    grid.res_x = grid.res_y = resolution;
    grid.bounds = bounds;
    const std::vector<Vec> protos = prototypes;
    const Head h = head;
    grid.evaluate = [protos, h, target](const Vec& x) {
        std::vector<double> dist(protos.size());
        for (std::size_t c = 0; c < protos.size(); ++c)
            dist[c] = euclidean_distance(x, protos[c]);
        const ConfidenceVector conf = h.kind == HeadKind::SoftmaxSq
                                          ? softmax_confidences(dist)
                                          : dr_confidences(dist, h.rho());
        return conf.probs[static_cast<std::size_t>(target)];
    };

    grid.values.reserve(resolution * resolution);
    grid.positions.reserve(resolution * resolution);
    for (std::size_t r = 0; r < resolution; ++r) {
        const double y = bounds.y0 + (bounds.y1 - bounds.y0) * static_cast<double>(r) /
                                         static_cast<double>(resolution - 1);
        for (std::size_t c = 0; c < resolution; ++c) {
            const double x = bounds.x0 +
                             (bounds.x1 - bounds.x0) * static_cast<double>(c) /
                                 static_cast<double>(resolution - 1);
            Vec node{x, y};
            grid.values.push_back(grid.evaluate(node));
            grid.positions.push_back(std::move(node));
        }
    }
    return grid;
}

ConfidenceGrid sphere_grid(const std::vector<Vec>& class_vectors,
                           const Head& head, int target,
                           std::size_t resolution) {
    if (resolution < 8)
        throw std::invalid_argument("sphere_grid: resolution must be >= 8");
    if (head.kind == HeadKind::SoftmaxSq || head.kind == HeadKind::DR)
        throw std::invalid_argument("sphere_grid: head must be cosine or angular");
    for (const Vec& v : class_vectors)
        if (std::abs(norm(v) - 1.0) > 1e-6)
            throw std::invalid_argument("sphere_grid: class vectors must be unit");
    check_distinct(class_vectors);

    ConfidenceGrid grid;
    grid.domain = DomainKind::Sphere;
    grid.res_y = resolution;            // latitude rows
    grid.res_x = 2 * resolution;        // longitude columns
    const std::vector<Vec> vectors = class_vectors;
    const Head h = head;
    grid.evaluate = [vectors, h, target](const Vec& x) {
        return normalized_confidence(x, vectors, h, target);
    };

    grid.values.reserve(grid.res_x * grid.res_y);
    grid.positions.reserve(grid.res_x * grid.res_y);
    for (std::size_t r = 0; r < grid.res_y; ++r) {
        const double lat = -kPi / 2.0 + kPi * static_cast<double>(r) /
                                            static_cast<double>(grid.res_y - 1);
        for (std::size_t c = 0; c < grid.res_x; ++c) {
            const double lon = -kPi + 2.0 * kPi * static_cast<double>(c) /
                                          static_cast<double>(grid.res_x - 1);
            Vec node = sphere_point(lat, lon);
            grid.values.push_back(grid.evaluate(node));
            grid.positions.push_back(std::move(node));
        }
    }
    return grid;
}

namespace {

// Shrinking-step pattern search from a grid node. sign=+1 maximizes,
// sign=-1 minimizes.
Vec refine(const ConfidenceGrid& grid, Vec start, double initial_step,
           std::size_t steps, double sign, double* best_value) {
    Vec pos = std::move(start);
    double best = sign * grid.evaluate(pos);
    double step = initial_step;
    for (std::size_t it = 0; it < steps; ++it) {
        bool improved = false;
        for (std::size_t k = 0; k < pos.size(); ++k) {
            for (double dir : {1.0, -1.0}) {
                Vec cand = pos;
                cand[k] += dir * step;
                if (grid.domain == DomainKind::Sphere) {
                    const double n = norm(cand);
                    if (n <= 0.0) continue;
                    for (double& v : cand) v /= n;
                }
                const double val = sign * grid.evaluate(cand);
                if (val > best) {
                    best = val;
                    pos = cand;
                    improved = true;
                }
            }
        }
        if (!improved) step *= 0.5;
    }
    if (best_value) *best_value = sign * best;
    return pos;
}

}  // namespace

ExtremaReport find_extrema(const ConfidenceGrid& grid, std::size_t refine_steps) {
    if (grid.values.empty())
        throw std::invalid_argument("find_extrema: empty grid");
    ExtremaReport report;
    std::size_t imax = 0, imin = 0;
    for (std::size_t i = 1; i < grid.values.size(); ++i) {
        if (grid.values[i] > grid.values[imax]) imax = i;
        if (grid.values[i] < grid.values[imin]) imin = i;
    }
    const double vmax = grid.values[imax];
    const double vmin = grid.values[imin];
    if (vmax - vmin < 1e-12) {
        report.flat = true;
        report.argmax = grid.positions[imax];
        report.max_value = vmax;
        report.argmin = {grid.positions[imin]};
        report.min_value = vmin;
        return report;
    }

    const double step =
        grid.domain == DomainKind::Sphere
            ? kPi / static_cast<double>(grid.res_y - 1)
            : std::max(grid.bounds.x1 - grid.bounds.x0,
                       grid.bounds.y1 - grid.bounds.y0) /
                  static_cast<double>(grid.res_x - 1);

    report.argmax =
        refine(grid, grid.positions[imax], step, refine_steps, +1.0,
               &report.max_value);

    // Seed a refinement from every local minimum node, then keep the
    // refined positions within 1e-9 of the refined global minimum.
    const auto is_local_min = [&](std::size_t r, std::size_t c) {
        const double v = grid.value_at(r, c);
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                const long rr = static_cast<long>(r) + dr;
                long cc = static_cast<long>(c) + dc;
                if (rr < 0 || rr >= static_cast<long>(grid.res_y)) continue;
                if (grid.domain == DomainKind::Sphere) {
                    cc = (cc + static_cast<long>(grid.res_x)) %
                         static_cast<long>(grid.res_x);
                } else if (cc < 0 || cc >= static_cast<long>(grid.res_x)) {
                    continue;
                }
                if (grid.value_at(static_cast<std::size_t>(rr),
                                  static_cast<std::size_t>(cc)) < v)
                    return false;
            }
        }
        return true;
    };

    double refined_min = vmin;
    std::vector<Vec> candidates;
    std::vector<double> candidate_values;
    for (std::size_t r = 0; r < grid.res_y; ++r) {
        for (std::size_t c = 0; c < grid.res_x; ++c) {
            if (!is_local_min(r, c)) continue;
            double val = 0.0;
            Vec pos = refine(grid, grid.position_at(r, c), step, refine_steps,
                             -1.0, &val);
            refined_min = std::min(refined_min, val);
            candidates.push_back(std::move(pos));
            candidate_values.push_back(val);
        }
    }
    const double merge_radius = 2.0 * step;
    std::vector<Vec> minima;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (candidate_values[i] > refined_min + 1e-9) continue;
        bool merged = false;
        for (const Vec& m : minima) {
            if (std::sqrt(squared_distance(m, candidates[i])) < merge_radius) {
                merged = true;
                break;
            }
        }
        if (!merged) minima.push_back(candidates[i]);
    }
    report.argmin = std::move(minima);
    report.min_value = refined_min;
    return report;
}

void write_grid_csv(const ConfidenceGrid& grid, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_grid_csv: cannot open " + path);
    out.precision(17);
    out << (grid.domain == DomainKind::Plane ? "x,y,value" : "x,y,z,value") << '\n';
    for (std::size_t i = 0; i < grid.values.size(); ++i) {
        for (double c : grid.positions[i]) out << c << ',';
        out << grid.values[i] << '\n';
    }
}

void write_grid_pgm(const ConfidenceGrid& grid, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_grid_pgm: cannot open " + path);
    out << "P5\n" << grid.res_x << ' ' << grid.res_y << "\n255\n";
    for (std::size_t r = 0; r < grid.res_y; ++r) {
        for (std::size_t c = 0; c < grid.res_x; ++c) {
            const double v = std::clamp(grid.value_at(r, c), 0.0, 1.0);
            const unsigned char byte =
                static_cast<unsigned char>(std::lround(v * 255.0));
            out.write(reinterpret_cast<const char*>(&byte), 1);
        }
    }
}

}  // namespace drml
