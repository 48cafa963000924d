#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace ksdg {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

struct Rectangle {
    double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
    double area() const { return (x1 - x0) * (y1 - y0); }
};

/// Affine map data of one triangle: x = v0 + J * (xi, eta).
struct CellGeometry {
    Vec2 v0;
    double jac[2][2];  // columns are v1-v0 and v2-v0
    double inv[2][2];  // inverse of jac
    double det = 0.0;  // |det J| = 2 |T|
    double area = 0.0;
    double diameter = 0.0;
};

// Reference vertices; local edge e joins vertices e and (e+1) % 3.
inline constexpr double kRefVertex[3][2] = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};

/// Interior face between two cells. Endpoints (a, b) are ordered globally so
/// both sides traverse the face identically; the normal points from the left
/// cell into the right cell and is fixed at build time.
struct InteriorFace {
    int left = -1, right = -1;          // cell indices, left < right
    int left_edge = -1, right_edge = -1;
    int left_a = -1, left_b = -1;       // local vertex indices of endpoints a, b
    int right_a = -1, right_b = -1;
    Vec2 a, b;                          // physical endpoints
    Vec2 normal;                        // unit, from left into right
    double length = 0.0;                // h_F
};

struct BoundaryFace {
    int cell = -1;
    int edge = -1;
    int local_a = -1, local_b = -1;
    Vec2 a, b;
    Vec2 normal; // outward
    double length = 0.0;
};

class Mesh {
public:
    int level = 0;
    Rectangle rect;
    std::vector<Vec2> vertices;
    std::vector<std::array<int, 3>> cells;
    std::vector<CellGeometry> geometry;
    std::vector<double> cell_diameters;
    std::vector<InteriorFace> interior_faces;
    std::vector<BoundaryFace> boundary_faces;

    int n_cells() const { return static_cast<int>(cells.size()); }

    double total_area() const {
        double s = 0.0;
        for (const auto& g : geometry) s += g.area;
        return s;
    }

    /// Reference coordinates of face endpoint-interpolated point t in `cell`,
    /// where t runs from endpoint a to endpoint b.
    static void face_point_on_reference(int local_a, int local_b, double t, double& xi,
                                        double& eta) {
        xi = (1.0 - t) * kRefVertex[local_a][0] + t * kRefVertex[local_b][0];
        eta = (1.0 - t) * kRefVertex[local_a][1] + t * kRefVertex[local_b][1];
    }

    /// Locate a point of the rectangle in the structured triangulation.
    /// Returns the cell index and reference coordinates.
    int locate_point(double x, double y, double& xi, double& eta) const {
        const int n = 1 << level;
        const double sx = (rect.x1 - rect.x0) / n;
        const double sy = (rect.y1 - rect.y0) / n;
        int ix = static_cast<int>(std::floor((x - rect.x0) / sx));
        int iy = static_cast<int>(std::floor((y - rect.y0) / sy));
        ix = std::min(std::max(ix, 0), n - 1);
        iy = std::min(std::max(iy, 0), n - 1);
        const double fx = (x - (rect.x0 + ix * sx)) / sx;
        const double fy = (y - (rect.y0 + iy * sy)) / sy;
        const int square = iy * n + ix;
        if (fx >= fy) { // lower triangle (a, b, c)
            xi = fx - fy;
            eta = fy;
            return 2 * square;
        }
        xi = fx; // upper triangle (a, c, d)
        eta = fy - fx;
        return 2 * square + 1;
    }
};

/// Uniform triangulation of a rectangle: 2^i x 2^i squares, each split along
/// the lower-left to upper-right diagonal. On the unit square every cell has
/// diameter sqrt(2) * 2^-i.
inline Mesh build_uniform_triangulation(int level, Rectangle rect = {}) {
    if (level < 1) throw std::invalid_argument("build_uniform_triangulation: level must be >= 1");
    if (level > 12)
        throw std::invalid_argument("build_uniform_triangulation: level > 12 would overflow "
                                    "32-bit dof indexing");
    if (!(rect.x1 > rect.x0) || !(rect.y1 > rect.y0))
        throw std::invalid_argument("build_uniform_triangulation: degenerate rectangle");

    const int n = 1 << level;
    const int nv = n + 1;
    Mesh mesh;
    mesh.level = level;
    mesh.rect = rect;

    mesh.vertices.resize(static_cast<std::size_t>(nv) * nv);
    for (int iy = 0; iy <= n; ++iy)
        for (int ix = 0; ix <= n; ++ix)
            mesh.vertices[static_cast<std::size_t>(iy) * nv + ix] = {
                rect.x0 + (rect.x1 - rect.x0) * ix / n, rect.y0 + (rect.y1 - rect.y0) * iy / n};

    mesh.cells.reserve(static_cast<std::size_t>(2) * n * n);
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            const int a = iy * nv + ix;
            const int b = iy * nv + ix + 1;
            const int c = (iy + 1) * nv + ix + 1;
            const int d = (iy + 1) * nv + ix;
            mesh.cells.push_back({a, b, c});
            mesh.cells.push_back({a, c, d});
        }

    const int nc = mesh.n_cells();
    mesh.geometry.resize(nc);
    mesh.cell_diameters.resize(nc);
    for (int t = 0; t < nc; ++t) {
        const auto& cv = mesh.cells[t];
        const Vec2 p0 = mesh.vertices[cv[0]];
        const Vec2 p1 = mesh.vertices[cv[1]];
        const Vec2 p2 = mesh.vertices[cv[2]];
        CellGeometry g;
        g.v0 = p0;
        g.jac[0][0] = p1.x - p0.x;
        g.jac[1][0] = p1.y - p0.y;
        g.jac[0][1] = p2.x - p0.x;
        g.jac[1][1] = p2.y - p0.y;
        const double det = g.jac[0][0] * g.jac[1][1] - g.jac[0][1] * g.jac[1][0];
        g.det = std::abs(det);
        g.area = 0.5 * g.det;
        g.inv[0][0] = g.jac[1][1] / det;
        g.inv[0][1] = -g.jac[0][1] / det;
        g.inv[1][0] = -g.jac[1][0] / det;
        g.inv[1][1] = g.jac[0][0] / det;
        g.diameter = std::max({norm(p1 - p0), norm(p2 - p1), norm(p0 - p2)});
        mesh.geometry[t] = g;
        mesh.cell_diameters[t] = g.diameter;
    }

    // pair up edges; first-encountered cell becomes the left side
    struct EdgeRef {
        int cell, edge;
    };
    std::unordered_map<std::int64_t, EdgeRef> open_edges;
    open_edges.reserve(static_cast<std::size_t>(3) * nc);
    auto edge_key = [nv](int va, int vb) {
        const int lo = std::min(va, vb), hi = std::max(va, vb);
        return static_cast<std::int64_t>(lo) * (static_cast<std::int64_t>(nv) * nv) + hi;
    };
    auto local_index_of = [&](int cell, int global_vertex) {
        for (int v = 0; v < 3; ++v)
            if (mesh.cells[cell][v] == global_vertex) return v;
        throw std::logic_error("mesh build: vertex not in cell");
    };
    auto outward_normal = [&](int cell, Vec2 a, Vec2 b) {
        const Vec2 tangent = b - a;
        Vec2 nrm{tangent.y, -tangent.x};
        const double len = norm(nrm);
        nrm = {nrm.x / len, nrm.y / len};
        const auto& cv = mesh.cells[cell];
        const Vec2 centroid = (1.0 / 3.0) * (mesh.vertices[cv[0]] + mesh.vertices[cv[1]] +
                                             mesh.vertices[cv[2]]);
        const Vec2 mid = 0.5 * (a + b);
        if (dot(nrm, centroid - mid) > 0.0) nrm = {-nrm.x, -nrm.y};
        return nrm;
    };

    for (int t = 0; t < nc; ++t)
        for (int e = 0; e < 3; ++e) {
            const int va = mesh.cells[t][e];
            const int vb = mesh.cells[t][(e + 1) % 3];
            const auto key = edge_key(va, vb);
            auto it = open_edges.find(key);
            if (it == open_edges.end()) {
                open_edges.emplace(key, EdgeRef{t, e});
                continue;
            }
            InteriorFace f;
            f.left = it->second.cell;
            f.left_edge = it->second.edge;
            f.right = t;
            f.right_edge = e;
            const int ga = std::min(va, vb), gb = std::max(va, vb);
            f.a = mesh.vertices[ga];
            f.b = mesh.vertices[gb];
            f.left_a = local_index_of(f.left, ga);
            f.left_b = local_index_of(f.left, gb);
            f.right_a = local_index_of(f.right, ga);
            f.right_b = local_index_of(f.right, gb);
            f.length = norm(f.b - f.a);
            f.normal = outward_normal(f.left, f.a, f.b);
            mesh.interior_faces.push_back(f);
            open_edges.erase(it);
        }

    for (int t = 0; t < nc; ++t)
        for (int e = 0; e < 3; ++e) {
            const int va = mesh.cells[t][e];
            const int vb = mesh.cells[t][(e + 1) % 3];
            auto it = open_edges.find(edge_key(va, vb));
            if (it == open_edges.end() || it->second.cell != t || it->second.edge != e) continue;
            BoundaryFace f;
            f.cell = t;
            f.edge = e;
            const int ga = std::min(va, vb), gb = std::max(va, vb);
            f.a = mesh.vertices[ga];
            f.b = mesh.vertices[gb];
            f.local_a = local_index_of(t, ga);
            f.local_b = local_index_of(t, gb);
            f.length = norm(f.b - f.a);
            f.normal = outward_normal(t, f.a, f.b);
            mesh.boundary_faces.push_back(f);
        }

    return mesh;
}

struct MeshStats {
    int cells = 0;
    int interior_faces = 0;
    int boundary_faces = 0;
    double h_min = 0.0, h_max = 0.0;   // cell diameters
    double hf_min = 0.0, hf_max = 0.0; // face lengths
    double delta = 0.0;                // min h_F / h_T over cell-face incidences
    int n_boundary_max = 0;            // max faces per cell (N_del)
};

inline MeshStats mesh_statistics(const Mesh& mesh) {
    MeshStats s;
    s.cells = mesh.n_cells();
    s.interior_faces = static_cast<int>(mesh.interior_faces.size());
    s.boundary_faces = static_cast<int>(mesh.boundary_faces.size());
    s.h_min = s.h_max = mesh.cell_diameters.at(0);
    for (double h : mesh.cell_diameters) {
        s.h_min = std::min(s.h_min, h);
        s.h_max = std::max(s.h_max, h);
    }
    s.delta = std::numeric_limits<double>::infinity();
    s.hf_min = std::numeric_limits<double>::infinity();
    s.hf_max = 0.0;
    std::vector<int> face_count(mesh.cells.size(), 0);
    auto visit = [&](double hf, int cell) {
        s.hf_min = std::min(s.hf_min, hf);
        s.hf_max = std::max(s.hf_max, hf);
        s.delta = std::min(s.delta, hf / mesh.cell_diameters[cell]);
        ++face_count[cell];
    };
    for (const auto& f : mesh.interior_faces) {
        visit(f.length, f.left);
        visit(f.length, f.right);
    }
    for (const auto& f : mesh.boundary_faces) visit(f.length, f.cell);
    for (int c : face_count) s.n_boundary_max = std::max(s.n_boundary_max, c);
    return s;
}

} // namespace ksdg
