//---------------------------------------------------------------------------//
// Copyright wgstab contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file geometry.hpp
//! Cross-section lattices for the truncated cylinder, the nested boundary
//! collars used by every weighted estimate, boundary observation strips, and
//! the combined space-time grid.
//!
//! Conventions:
//!  - The cross-section is meshed on a uniform tensor lattice. Interior nodes
//!    are strictly inside the shape; boundary nodes lie within half a spacing
//!    of the wall and carry an outward unit normal (curved walls use the
//!    radial projection, so the discrete wall is a staircase and near-wall
//!    accuracy is first order by construction).
//!  - Collar subsets are defined by the analytic distance to the wall, never
//!    by mesh connectivity, so membership is mesh-independent.
//!  - The cylinder axis spans [-R, R] with Dirichlet caps at both ends.
//---------------------------------------------------------------------------//
#pragma once

#include <array>
#include <optional>
#include <vector>

#include "common.hpp"

namespace wgstab
{

enum class ShapeKind
{
    interval,  //!< 1-D cross-section (diagnostic mode)
    rectangle, //!< axis-aligned [0,Lx] x [0,Ly]
    disk       //!< radius a, centered at the origin
};

//! Uniform lattice discretisation of the cross-section.
class CrossSection
{
  public:
    //! params: interval {L}; rectangle {Lx, Ly}; disk {a}.
    //! The spacing is snapped per axis so lattice lines hit the bounding box
    //! exactly; a degenerate shape or a spacing too coarse to yield interior
    //! nodes is rejected.
    static CrossSection build(ShapeKind kind,
                              const std::vector<double>& params,
                              double spacing);

    ShapeKind kind() const { return kind_; }
    int dim() const { return dim_; }
    double spacing() const { return h_; }
    const std::vector<double>& params() const { return params_; }

    int node_count() const { return static_cast<int>(coords_.size()); }
    std::array<double, 2> coord(int node) const { return coords_[node]; }
    bool is_interior(int node) const { return interior_[node] != 0; }
    bool is_boundary(int node) const { return !is_interior(node); }
    const std::vector<int>& interior_nodes() const { return interior_list_; }
    const std::vector<int>& boundary_nodes() const { return boundary_list_; }

    //! Outward unit normal; only valid at boundary nodes.
    std::array<double, 2> normal(int node) const;

    //! Analytic distance from a point to the wall (nonnegative inside).
    double wall_distance(const std::array<double, 2>& x) const;
    double wall_distance(int node) const { return wall_distance(coords_[node]); }

    //! Lattice neighbour along axis (0 or 1) in direction dir (+1/-1);
    //! -1 when the neighbour lattice site is outside the shape entirely.
    int neighbor(int node, int axis, int dir) const;

    //! Node at lattice position, or -1; lattice index per axis.
    int node_at(int ix, int iy) const;
    std::array<int, 2> lattice_index(int node) const { return lat_[node]; }
    std::array<int, 2> lattice_extent() const { return {nx_, ny_}; }
    //! Lattice origin coordinate per axis.
    std::array<double, 2> origin() const { return origin_; }

    //! Largest inscribed distance from wall (inradius).
    double inradius() const;

  private:
    ShapeKind kind_{};
    int dim_ = 0;
    double h_ = 0;
    std::vector<double> params_;
    int nx_ = 0, ny_ = 0;
    std::array<double, 2> origin_{};
    std::vector<std::array<double, 2>> coords_;
    std::vector<std::array<int, 2>> lat_;
    std::vector<char> interior_;
    std::vector<int> interior_list_;
    std::vector<int> boundary_list_;
    std::vector<int> lattice_to_node_; // nx*ny, -1 outside
};

//! Boundary collars omega_0 .. omega_3 (width w0 > w1 > w2 > w3 > 0) plus the
//! marked inner boundary of the widest collar and the complementary core
//! cross-sections. All sets are node lists over the cross-section.
struct NestedSubdomains
{
    std::array<double, 4> widths{};
    //! collar_member[j][node]: interior node within distance widths[j] of the wall.
    std::array<std::vector<char>, 4> collar_member;
    //! Interior nodes within half a spacing of the inner edge of collar 0.
    std::vector<char> inner_boundary; // S#
    //! core_member[j][node]: interior node at distance > widths[j] (cross-section
    //! of the cylinder set whose collar part is removed). Note core sets grow as
    //! the collar shrinks: core_member[2] is a subset of core_member[3].
    std::array<std::vector<char>, 4> core_member;

    std::array<int, 4> collar_counts{};
    std::array<int, 4> core_counts{};
    int inner_boundary_count = 0;
};

//! Validates strict width ordering against the inradius and strict nesting of
//! the realised node sets (a mesh too coarse to separate two collars is
//! rejected rather than silently accepted).
NestedSubdomains build_nested_subdomains(const CrossSection& cs,
                                         const std::array<double, 4>& widths);

//! Observed part of the wall: a contiguous arc/edge segment of boundary nodes.
struct StripSpec
{
    // disk: angular interval [angle_lo, angle_hi] (radians, lo<hi, hi-lo<=2*pi
    //       selects nodes by polar angle; full circle when hi-lo >= 2*pi).
    // rectangle: edge 0..3 (bottom,right,top,left) and [lo,hi] along it.
    // interval: ends bitmask (1 = left, 2 = right, 3 = both).
    double angle_lo = 0, angle_hi = 2 * pi;
    int edge = 0;
    double edge_lo = 0, edge_hi = 1;
    int ends = 3;
};

struct ObservationStrip
{
    std::vector<int> nodes;           //!< boundary node indices, deterministic order
    std::vector<double> measure;      //!< boundary measure weight per node
    std::vector<std::array<double, 2>> normals;
};

//! 2-D shapes require at least 3 contiguous boundary nodes (relative openness
//! at mesh scale); the 2-point boundary of the interval requires >= 1 end.
ObservationStrip build_observation_strip(const CrossSection& cs,
                                         const StripSpec& spec);

struct GridOptions
{
    //! When set, R must satisfy exp(-b*<R>^d) < truncation_tol.
    std::optional<double> decay_b;
    std::optional<double> decay_d;
    double truncation_tol = 1e-3;
    double memory_cap_mb = 4096.0;
};

//! Space-time grid on the truncated cylinder: cross-section x [-R,R] x [0,T].
//! Spatial flat index = cs_node * n_axial + axial_index; axial caps are
//! Dirichlet boundary.
class Grid
{
  public:
    static Grid build(CrossSection cs,
                      double R,
                      double axial_spacing,
                      double T,
                      double dt,
                      const GridOptions& opts = {});

    const CrossSection& cross_section() const { return cs_; }
    double axial_half_length() const { return R_; }
    double axial_spacing() const { return ha_; }
    int n_axial() const { return na_; }
    double axial_coord(int ia) const { return -R_ + ha_ * ia; }

    double horizon() const { return T_; }
    double dt() const { return dt_; }
    int n_time() const { return nt_; }
    double time_coord(int m) const { return dt_ * m; }

    int n_spatial() const { return cs_.node_count() * na_; }
    int flat(int cs_node, int ia) const { return cs_node * na_ + ia; }
    int cs_node_of(int flat) const { return flat / na_; }
    int axial_of(int flat) const { return flat % na_; }

    //! Spatial nodes where the evolution carries unknowns (cs-interior and
    //! strictly between the caps).
    const std::vector<int>& interior() const { return interior_; }
    bool is_interior(int flat) const { return interior_mask_[flat] != 0; }

    //! Cell volume h^dim * h_axial of the uniform quadrature.
    double cell_volume() const;
    //! Estimated bytes to hold one complex trajectory at full resolution.
    double trajectory_bytes() const;

  private:
    CrossSection cs_;
    double R_ = 0, ha_ = 0, T_ = 0, dt_ = 0;
    int na_ = 0, nt_ = 0;
    std::vector<int> interior_;
    std::vector<char> interior_mask_;
};

} // namespace wgstab
