#include <catch2/catch.hpp>

#include <cmath>
#include <set>

#include "ksdg/mesh.hpp"

using namespace ksdg;

TEST_CASE("level 1 unit square has the forced structure") {
    const Mesh mesh = build_uniform_triangulation(1);
    REQUIRE(mesh.n_cells() == 8);
    REQUIRE(mesh.interior_faces.size() == 8);
    REQUIRE(mesh.boundary_faces.size() == 8);
    for (double h : mesh.cell_diameters) CHECK(h == Approx(std::sqrt(2.0) / 2.0).epsilon(1e-14));
}

TEST_CASE("level 4 matches h = 2^(1/2 - i)") {
    const Mesh mesh = build_uniform_triangulation(4);
    REQUIRE(mesh.n_cells() == 512);
    for (double h : mesh.cell_diameters)
        CHECK(h == Approx(std::exp2(-3.5)).epsilon(1e-14));
}

TEST_CASE("cell count quadruples per refinement") {
    int prev = build_uniform_triangulation(1).n_cells();
    for (int i = 2; i <= 4; ++i) {
        const int cells = build_uniform_triangulation(i).n_cells();
        CHECK(cells == 4 * prev);
        prev = cells;
    }
}

TEST_CASE("area identity on unit square and general rectangle") {
    for (int i = 1; i <= 4; ++i) {
        const Mesh mesh = build_uniform_triangulation(i);
        CHECK(mesh.total_area() == Approx(1.0).epsilon(1e-13));
    }
    const Rectangle rect{-1.0, 2.0, 3.5, 4.25};
    const Mesh mesh = build_uniform_triangulation(3, rect);
    CHECK(mesh.total_area() == Approx(rect.area()).epsilon(1e-13));
}

TEST_CASE("face bijection: every edge is exactly one face") {
    const Mesh mesh = build_uniform_triangulation(3);
    std::set<std::pair<int, int>> seen;
    auto key = [&](int cell, int edge) {
        const int a = mesh.cells[cell][edge];
        const int b = mesh.cells[cell][(edge + 1) % 3];
        return std::make_pair(std::min(a, b), std::max(a, b));
    };
    for (const auto& f : mesh.interior_faces) {
        CHECK(f.left != f.right);
        auto kl = key(f.left, f.left_edge);
        auto kr = key(f.right, f.right_edge);
        CHECK(kl == kr);
        CHECK(seen.insert(kl).second);
    }
    for (const auto& f : mesh.boundary_faces) CHECK(seen.insert(key(f.cell, f.edge)).second);
    CHECK(seen.size() == 2 * mesh.interior_faces.size() + mesh.boundary_faces.size() -
                             mesh.interior_faces.size());
    CHECK(3 * static_cast<std::size_t>(mesh.n_cells()) ==
          2 * mesh.interior_faces.size() + mesh.boundary_faces.size());
}

TEST_CASE("normals are unit and point from left into right") {
    const Mesh mesh = build_uniform_triangulation(2);
    auto centroid = [&](int cell) {
        const auto& cv = mesh.cells[cell];
        return (1.0 / 3.0) *
               (mesh.vertices[cv[0]] + mesh.vertices[cv[1]] + mesh.vertices[cv[2]]);
    };
    for (const auto& f : mesh.interior_faces) {
        CHECK(norm(f.normal) == Approx(1.0).epsilon(1e-14));
        CHECK(dot(f.normal, centroid(f.right) - centroid(f.left)) > 0.0);
        const Vec2 mid = 0.5 * (f.a + f.b);
        CHECK(dot(f.normal, centroid(f.left) - mid) < 0.0);
        CHECK(dot(f.normal, centroid(f.right) - mid) > 0.0);
    }
    for (const auto& f : mesh.boundary_faces) {
        CHECK(norm(f.normal) == Approx(1.0).epsilon(1e-14));
        const Vec2 mid = 0.5 * (f.a + f.b);
        CHECK(dot(f.normal, centroid(f.cell) - mid) < 0.0);
        // boundary faces lie on the rectangle boundary
        auto on_boundary = [&](Vec2 p) {
            return p.x == Approx(mesh.rect.x0).margin(1e-14) ||
                   p.x == Approx(mesh.rect.x1).margin(1e-14) ||
                   p.y == Approx(mesh.rect.y0).margin(1e-14) ||
                   p.y == Approx(mesh.rect.y1).margin(1e-14);
        };
        CHECK(on_boundary(f.a));
        CHECK(on_boundary(f.b));
    }
}

TEST_CASE("statistics: N_del, delta, uniformity") {
    const Mesh mesh = build_uniform_triangulation(1);
    const MeshStats s = mesh_statistics(mesh);
    CHECK(s.n_boundary_max == 3);
    CHECK(s.cells == 8);
    // enumerated over the 8-cell mesh: legs h_F = 1/2 against diameter
    // sqrt(2)/2 give the minimum ratio 1/sqrt(2)
    CHECK(s.delta == Approx(0.70710678118654746).epsilon(1e-13));
    CHECK(s.h_min == s.h_max);
    CHECK(s.hf_min == Approx(0.5).epsilon(1e-14));
    CHECK(s.hf_max == Approx(std::sqrt(2.0) / 2.0).epsilon(1e-14));
    // regularity delta * h_T <= h_F for all incidences
    for (const auto& f : mesh.interior_faces) {
        CHECK(s.delta * mesh.cell_diameters[f.left] <= f.length * (1 + 1e-14));
        CHECK(s.delta * mesh.cell_diameters[f.right] <= f.length * (1 + 1e-14));
    }
}

TEST_CASE("build rejects bad arguments") {
    CHECK_THROWS_AS(build_uniform_triangulation(0), std::invalid_argument);
    CHECK_THROWS_AS(build_uniform_triangulation(-2), std::invalid_argument);
    CHECK_THROWS_AS(build_uniform_triangulation(13), std::invalid_argument);
    CHECK_THROWS_AS(build_uniform_triangulation(2, Rectangle{0, 0, 0, 1}),
                    std::invalid_argument);
}

TEST_CASE("locate_point finds the owning cell") {
    const Mesh mesh = build_uniform_triangulation(3);
    for (int cell = 0; cell < mesh.n_cells(); ++cell) {
        const auto& g = mesh.geometry[cell];
        // centroid in reference coordinates is (1/3, 1/3)
        const double cx = g.v0.x + g.jac[0][0] / 3.0 + g.jac[0][1] / 3.0;
        const double cy = g.v0.y + g.jac[1][0] / 3.0 + g.jac[1][1] / 3.0;
        double xi, eta;
        const int found = mesh.locate_point(cx, cy, xi, eta);
        CHECK(found == cell);
        CHECK(xi == Approx(1.0 / 3.0).epsilon(1e-12));
        CHECK(eta == Approx(1.0 / 3.0).epsilon(1e-12));
    }
    double xi, eta;
    CHECK_NOTHROW(mesh.locate_point(0.0, 0.0, xi, eta));
    CHECK_NOTHROW(mesh.locate_point(1.0, 1.0, xi, eta));
}
