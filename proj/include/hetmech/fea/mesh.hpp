#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hetmech/common/error.hpp"
#include "hetmech/common/hash.hpp"
#include "hetmech/fea/material.hpp"
#include "hetmech/pattern/pattern.hpp"

namespace hetmech::fea {

/// Mesh resolution, element order and loading program of one fidelity tier.
struct FidelityProfile {
    std::string name = "low";
    int elements_per_side = 64;
    int element_order = 1;
    std::vector<double> displacement_program{0.0, 0.001};  // leading 0 is the reference state
    double newton_tol = 1e-9;
    int max_newton_iters = 25;
    int n_load_substeps_per_d = 1;
    int max_bisections = 4;

    void validate() const {
        if (elements_per_side <= 0 || elements_per_side % kPatternSide != 0)
            throw ConfigError("elements_per_side", "must be a positive multiple of 64");
        validate_common();
    }

    /// Checks everything except the multiple-of-64 rule (used by small test meshes).
    void validate_common() const {
        if (element_order != 1 && element_order != 2)
            throw ConfigError("element_order", "must be 1 or 2");
        if (displacement_program.empty() || displacement_program.front() != 0.0)
            throw ConfigError("displacement_program", "must start with 0");
        for (std::size_t i = 1; i < displacement_program.size(); ++i)
            if (!(displacement_program[i] > displacement_program[i - 1]))
                throw ConfigError("displacement_program", "must be strictly increasing");
        if (!(newton_tol > 0.0)) throw ConfigError("newton_tol", "must be > 0");
        if (max_newton_iters <= 0) throw ConfigError("max_newton_iters", "must be > 0");
        if (n_load_substeps_per_d <= 0) throw ConfigError("n_load_substeps_per_d", "must be > 0");
        if (max_bisections < 0) throw ConfigError("max_bisections", "must be >= 0");
    }

    nlohmann::json to_json() const {
        return {{"name", name},
                {"elements_per_side", elements_per_side},
                {"element_order", element_order},
                {"displacement_program", displacement_program},
                {"newton_tol", newton_tol},
                {"max_newton_iters", max_newton_iters},
                {"n_load_substeps_per_d", n_load_substeps_per_d},
                {"max_bisections", max_bisections}};
    }

    static FidelityProfile from_json(const nlohmann::json& j) {
        FidelityProfile p;
        p.name = j.value("name", p.name);
        p.elements_per_side = j.value("elements_per_side", p.elements_per_side);
        p.element_order = j.value("element_order", p.element_order);
        p.displacement_program = j.value("displacement_program", p.displacement_program);
        p.newton_tol = j.value("newton_tol", p.newton_tol);
        p.max_newton_iters = j.value("max_newton_iters", p.max_newton_iters);
        p.n_load_substeps_per_d = j.value("n_load_substeps_per_d", p.n_load_substeps_per_d);
        p.max_bisections = j.value("max_bisections", p.max_bisections);
        p.validate();
        return p;
    }

    std::string hash() const { return hash_hex(to_json().dump()); }
};

/// Coarse mesh, linear elements, perturbation displacement only.
inline FidelityProfile low_fidelity() { return FidelityProfile{}; }

/// Refined mesh and the full displacement program up to 50% extension.
inline FidelityProfile high_fidelity() {
    FidelityProfile p;
    p.name = "high";
    p.elements_per_side = 128;
    p.element_order = 1;
    p.displacement_program = {0.0, 0.001, 0.1, 0.2, 0.3, 0.4, 0.5};
    return p;
}

inline FidelityProfile fidelity_by_name(const std::string& name) {
    if (name == "low") return low_fidelity();
    if (name == "high") return high_fidelity();
    throw ConfigError("fidelity", "unknown fidelity '" + name + "' (expected low or high)");
}

enum class Face { left = 0, right = 1, bottom = 2, top = 3 };

/// Pixel-aligned triangulation of the unit square. Each square cell is split
/// into two triangles; the diagonal alternates in a checkerboard so the mesh
/// maps onto itself under 90 degree rotations about the center.
struct HeteroMesh {
    int cells_per_side = 0;      // n
    int order = 1;               // 1: 3-node, 2: 6-node triangles
    int lattice = 0;             // nodes per side = order * n + 1
    std::vector<std::array<int, 6>> elements;  // first 3 (order 1) or 6 (order 2) entries used
    std::vector<std::uint8_t> element_material;  // 0 soft, 1 stiff
    std::vector<int> element_cell;               // owning pattern cell (row * 64 + col), or -1
    std::vector<int> free_dof;                   // per dof (2 per node): free index or -1
    int n_free = 0;
    std::array<std::vector<int>, 4> boundary;    // node ids per Face
    MaterialParams soft, stiff;

    int nodes_per_element() const { return order == 1 ? 3 : 6; }
    int n_nodes() const { return lattice * lattice; }
    int n_elements() const { return static_cast<int>(elements.size()); }
    int node_id(int a, int b) const { return b * lattice + a; }
    Eigen::Vector2d node_xy(int id) const {
        const double s = 1.0 / (lattice - 1);
        return {(id % lattice) * s, (id / lattice) * s};
    }
    const MaterialParams& material_of(int e) const { return element_material[e] ? stiff : soft; }
};

/// Builds a structured mesh with n cells per side; `stiff_cell(ci, cj)` says
/// whether mesh cell (ci = x index, cj = y index) is stiff.
inline HeteroMesh structured_mesh(int n, int order, const MaterialParams& soft, const MaterialParams& stiff,
                                  const std::function<bool(int, int)>& stiff_cell,
                                  const std::function<int(int, int)>& owner_cell = {}) {
    if (n <= 0 || n % 2 != 0) throw ConfigError("elements_per_side", "must be a positive even number");
    if (order != 1 && order != 2) throw ConfigError("element_order", "must be 1 or 2");
    HeteroMesh m;
    m.cells_per_side = n;
    m.order = order;
    m.lattice = order * n + 1;
    m.soft = soft;
    m.stiff = stiff;
    m.elements.reserve(static_cast<std::size_t>(2) * n * n);
    const int o = order;
    auto add = [&](int bx, int by, std::array<std::array<int, 2>, 3> v, bool is_stiff, int owner) {
        std::array<int, 6> conn{};
        for (int i = 0; i < 3; ++i) conn[i] = m.node_id(bx + v[i][0], by + v[i][1]);
        if (order == 2) {
            for (int i = 0; i < 3; ++i) {
                const auto& p = v[i];
                const auto& q = v[(i + 1) % 3];
                conn[3 + i] = m.node_id(bx + (p[0] + q[0]) / 2, by + (p[1] + q[1]) / 2);
            }
        }
        m.elements.push_back(conn);
        m.element_material.push_back(is_stiff ? 1 : 0);
        m.element_cell.push_back(owner);
    };
    for (int cj = 0; cj < n; ++cj) {
        for (int ci = 0; ci < n; ++ci) {
            const int bx = o * ci, by = o * cj;
            const bool s = stiff_cell(ci, cj);
            const int owner = owner_cell ? owner_cell(ci, cj) : -1;
            const std::array<int, 2> c00{0, 0}, c10{o, 0}, c11{o, o}, c01{0, o};
            if ((ci + cj) % 2 == 0) {
                add(bx, by, {c00, c10, c11}, s, owner);
                add(bx, by, {c00, c11, c01}, s, owner);
            } else {
                add(bx, by, {c00, c10, c01}, s, owner);
                add(bx, by, {c10, c11, c01}, s, owner);
            }
        }
    }
    const int L = m.lattice;
    for (int k = 0; k < L; ++k) {
        m.boundary[static_cast<int>(Face::left)].push_back(m.node_id(0, k));
        m.boundary[static_cast<int>(Face::right)].push_back(m.node_id(L - 1, k));
        m.boundary[static_cast<int>(Face::bottom)].push_back(m.node_id(k, 0));
        m.boundary[static_cast<int>(Face::top)].push_back(m.node_id(k, L - 1));
    }
    // Every boundary node is fully prescribed; interior dofs are numbered
    // node-major so each node's (x, y) pair is adjacent.
    m.free_dof.assign(static_cast<std::size_t>(2) * m.n_nodes(), -1);
    for (int b = 1; b < L - 1; ++b)
        for (int a = 1; a < L - 1; ++a) {
            const int id = m.node_id(a, b);
            m.free_dof[2 * id] = m.n_free++;
            m.free_dof[2 * id + 1] = m.n_free++;
        }
    return m;
}

/// Pixel-aligned mesh for a pattern: each pattern cell owns an r x r block of
/// mesh cells (r = elements_per_side / 64), two triangles each.
inline HeteroMesh build_mesh(const Pattern& pattern, const FidelityProfile& profile, double E_soft = 1.0,
                             double E_stiff = 10.0, double nu = 0.3) {
    profile.validate();
    validate_pattern(pattern);
    const auto soft = make_material(E_soft, nu);
    const auto stiff = make_material(E_stiff, nu);
    const int r = profile.elements_per_side / kPatternSide;
    // Pattern row 0 is the top edge (y = 1).
    auto owner = [&](int ci, int cj) { return (kPatternSide - 1 - cj / r) * kPatternSide + ci / r; };
    return structured_mesh(
        profile.elements_per_side, profile.element_order, soft, stiff,
        [&](int ci, int cj) { return pattern.cells[owner(ci, cj)] != 0; }, owner);
}

}  // namespace hetmech::fea
