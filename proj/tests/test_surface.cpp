#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "drml/core_math.hpp"
#include "drml/surface.hpp"

using namespace drml;

namespace {

const double kSqrt3 = std::sqrt(3.0);

std::vector<Vec> equilateral() {
    return {{0.0, 1.0}, {-kSqrt3 / 2.0, -0.5}, {kSqrt3 / 2.0, -0.5}};
}

std::vector<Vec> rgb() {
    return {{0, 0, 1}, {0, 1, 0}, {1, 0, 0}};
}

double point_dist(const Vec& a, const Vec& b) {
    return std::sqrt(squared_distance(a, b));
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("default_plane_bounds expands the bounding box by half") {
    const PlaneBounds b = default_plane_bounds({{0, 0}, {2, 4}});
    CHECK(b.x0 == doctest::Approx(-0.5));
    CHECK(b.x1 == doctest::Approx(2.5));
    CHECK(b.y0 == doctest::Approx(-1.0));
    CHECK(b.y1 == doctest::Approx(5.0));
    CHECK_THROWS_AS(default_plane_bounds({}), std::invalid_argument);
}

TEST_CASE("plane_grid shape, range and node consistency") {
    Head dr;
    dr.kind = HeadKind::DR;
    dr.log_rho = std::log(2.0);
    const std::vector<Vec> protos = equilateral();
    const ConfidenceGrid grid =
        plane_grid(protos, dr, 0, default_plane_bounds(protos), 21);
    CHECK(grid.res_x == 21);
    CHECK(grid.res_y == 21);
    CHECK(grid.values.size() == 21 * 21);
    for (double v : grid.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    // Corners of the grid sit on the bounds.
    const PlaneBounds b = grid.bounds;
    CHECK(grid.position_at(0, 0) == Vec{b.x0, b.y0});
    CHECK(grid.position_at(20, 20)[0] == doctest::Approx(b.x1).epsilon(1e-14));
    CHECK(grid.position_at(20, 20)[1] == doctest::Approx(b.y1).epsilon(1e-14));
    // Stored values match the underlying field.
    for (std::size_t r : {0ul, 7ul, 20ul})
        for (std::size_t c : {3ul, 11ul})
            CHECK(grid.value_at(r, c) ==
                  doctest::Approx(grid.evaluate(grid.position_at(r, c))));

    CHECK_THROWS_AS(plane_grid(protos, dr, 0, b, 7), std::invalid_argument);
    CHECK_THROWS_AS(plane_grid({{0, 0}}, dr, 0, b, 21), std::invalid_argument);
    CHECK_THROWS_AS(plane_grid({{0, 0}, {0, 0}}, dr, 0, b, 21),
                    std::invalid_argument);
    CHECK_THROWS_AS(plane_grid(protos, dr, 3, b, 21), std::invalid_argument);
    Head cos;
    cos.kind = HeadKind::CosNormFace;
    CHECK_THROWS_AS(plane_grid(protos, cos, 0, b, 21), std::invalid_argument);
}

TEST_CASE("plane softmax field is mirror-symmetric for two prototypes") {
    Head sm;
    sm.kind = HeadKind::SoftmaxSq;
    const PlaneBounds b{-2, 2, -1, 1};
    const ConfidenceGrid grid = plane_grid({{-1, 0}, {1, 0}}, sm, 0, b, 9);
    for (std::size_t r = 0; r < grid.res_y; ++r)
        for (std::size_t c = 0; c < grid.res_x; ++c)
            CHECK(grid.value_at(r, c) + grid.value_at(r, grid.res_x - 1 - c) ==
                  doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("per-class plane fields sum to one at every node") {
    const std::vector<Vec> protos = equilateral();
    const PlaneBounds b = default_plane_bounds(protos);
    for (HeadKind kind : {HeadKind::SoftmaxSq, HeadKind::DR}) {
        Head head;
        head.kind = kind;
        std::vector<ConfidenceGrid> grids;
        for (int t = 0; t < 3; ++t)
            grids.push_back(plane_grid(protos, head, t, b, 15));
        for (std::size_t i = 0; i < grids[0].values.size(); ++i)
            CHECK(grids[0].values[i] + grids[1].values[i] + grids[2].values[i] ==
                  doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("plane extrema of the dr field sit on the prototypes") {
    Head dr;
    dr.kind = HeadKind::DR;
    dr.log_rho = std::log(2.0);
    const std::vector<Vec> protos = equilateral();
    const ConfidenceGrid grid =
        plane_grid(protos, dr, 0, default_plane_bounds(protos), 41);
    const ExtremaReport rep = find_extrema(grid, 40);
    CHECK(!rep.flat);
    CHECK(rep.max_value >= 1.0 - 1e-8);
    CHECK(point_dist(rep.argmax, protos[0]) < 0.1);
    CHECK(rep.min_value <= 1e-8);
    // The field vanishes at both non-target prototypes.
    REQUIRE(rep.argmin.size() == 2);
    for (const Vec& m : rep.argmin) {
        const double d = std::min(point_dist(m, protos[1]), point_dist(m, protos[2]));
        CHECK(d < 0.1);
    }
    CHECK(point_dist(rep.argmin[0], rep.argmin[1]) > 1.0);
}

TEST_CASE("sphere_grid shape and validation") {
    Head ang;
    ang.kind = HeadKind::AngSoftmax;
    const ConfidenceGrid grid = sphere_grid(rgb(), ang, 0, 10);
    CHECK(grid.res_y == 10);
    CHECK(grid.res_x == 20);
    CHECK(grid.values.size() == 200);
    for (const Vec& p : grid.positions)
        CHECK(norm(p) == doctest::Approx(1.0).epsilon(1e-9));
    for (double v : grid.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK_THROWS_AS(sphere_grid(rgb(), ang, 0, 7), std::invalid_argument);
    CHECK_THROWS_AS(sphere_grid({{0, 0, 2}, {0, 1, 0}}, ang, 0, 10),
                    std::invalid_argument);
    Head sm;
    sm.kind = HeadKind::SoftmaxSq;
    CHECK_THROWS_AS(sphere_grid(rgb(), sm, 0, 10), std::invalid_argument);
}

TEST_CASE("sphere normface value at its own class vector") {
    Head nf;
    nf.kind = HeadKind::CosNormFace;
    nf.scale_s = 2.0;
    const ConfidenceGrid grid = sphere_grid(rgb(), nf, 0, 9);
    // North pole row is the red vector itself: logits (2, 0, 0).
    const double e2 = std::exp(2.0);
    CHECK(grid.value_at(8, 0) == doctest::Approx(e2 / (e2 + 2.0)).epsilon(1e-9));
}

TEST_CASE("sphere angular-dr extrema: peak at red, zeros at green and blue") {
    Head ang_dr;
    ang_dr.kind = HeadKind::AngDR;
    ang_dr.log_rho = std::log(2.0);
    const ConfidenceGrid grid = sphere_grid(rgb(), ang_dr, 0, 16);
    const ExtremaReport rep = find_extrema(grid, 40);
    CHECK(!rep.flat);
    CHECK(rep.max_value >= 1.0 - 1e-8);
    CHECK(point_dist(rep.argmax, {0, 0, 1}) < 0.1);
    CHECK(rep.min_value <= 1e-8);
    // Two distinct zero-confidence points: the green and blue vectors.
    REQUIRE(rep.argmin.size() == 2);
    for (const Vec& m : rep.argmin) {
        const double d =
            std::min(point_dist(m, {0, 1, 0}), point_dist(m, {1, 0, 0}));
        CHECK(d < 0.1);
    }
    CHECK(point_dist(rep.argmin[0], rep.argmin[1]) > 1.0);
}

TEST_CASE("find_extrema flags a flat field") {
    ConfidenceGrid grid;
    grid.domain = DomainKind::Plane;
    grid.res_x = grid.res_y = 8;
    grid.values.assign(64, 0.25);
    for (std::size_t i = 0; i < 64; ++i)
        grid.positions.push_back({static_cast<double>(i % 8),
                                  static_cast<double>(i / 8)});
    grid.evaluate = [](const Vec&) { return 0.25; };
    const ExtremaReport rep = find_extrema(grid, 10);
    CHECK(rep.flat);
    CHECK(rep.max_value == doctest::Approx(0.25));
    CHECK(rep.min_value == doctest::Approx(0.25));
    REQUIRE(rep.argmin.size() == 1);

    ConfidenceGrid empty;
    CHECK_THROWS_AS(find_extrema(empty, 10), std::invalid_argument);
}

TEST_CASE("grid csv output") {
    Head sm;
    sm.kind = HeadKind::SoftmaxSq;
    const PlaneBounds b{-1, 1, -1, 1};
    const ConfidenceGrid grid = plane_grid({{-1, 0}, {1, 0}}, sm, 0, b, 8);
    const std::string path = "grid_test.csv";
    write_grid_csv(grid, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "x,y,value");
    std::size_t rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 64);
    in.close();
    std::remove(path.c_str());

    Head ang;
    ang.kind = HeadKind::AngSoftmax;
    const ConfidenceGrid sph = sphere_grid(rgb(), ang, 0, 8);
    write_grid_csv(sph, path);
    std::ifstream in2(path);
    std::getline(in2, line);
    CHECK(line == "x,y,z,value");
    in2.close();
    std::remove(path.c_str());
}

TEST_CASE("grid pgm output") {
    ConfidenceGrid grid;
    grid.domain = DomainKind::Plane;
    grid.res_x = grid.res_y = 8;
    for (std::size_t i = 0; i < 64; ++i) {
        grid.values.push_back(i == 0 ? 0.0 : (i == 1 ? 1.0 : 0.5));
        grid.positions.push_back({0.0, 0.0});
    }
    const std::string path = "grid_test.pgm";
    write_grid_pgm(grid, path);
    const std::string bytes = read_file(path);
    const std::string header = "P5\n8 8\n255\n";
    REQUIRE(bytes.size() == header.size() + 64);
    CHECK(bytes.rfind(header, 0) == 0);
    CHECK(static_cast<unsigned char>(bytes[header.size()]) == 0);
    CHECK(static_cast<unsigned char>(bytes[header.size() + 1]) == 255);
    CHECK(static_cast<unsigned char>(bytes[header.size() + 2]) == 128);
    std::remove(path.c_str());
}
