//---------------------------------------------------------------------------//
// Copyright wgstab contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
#include "wgstab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wgstab
{
namespace
{

int snap_steps(double length, double spacing, const char* what)
{
    require(length > 0, std::string(what) + " must be positive");
    require(spacing > 0, "spacing must be positive");
    const int steps = static_cast<int>(std::lround(length / spacing));
    require(steps >= 2,
            std::string("spacing too coarse for ") + what
                + " (no interior nodes)");
    const double snapped = length / steps;
    require(std::abs(snapped - spacing) <= 1e-6 * spacing,
            std::string("spacing must divide ") + what
                + " (snapped mismatch)");
    return steps;
}

} // namespace

CrossSection CrossSection::build(ShapeKind kind,
                                 const std::vector<double>& params,
                                 double spacing)
{
    CrossSection cs;
    cs.kind_ = kind;
    cs.params_ = params;

    if (kind == ShapeKind::interval)
    {
        require(params.size() == 1, "interval takes one parameter {length}");
        const double L = params[0];
        const int steps = snap_steps(L, spacing, "interval length");
        cs.dim_ = 1;
        cs.h_ = L / steps;
        cs.nx_ = steps + 1;
        cs.ny_ = 1;
        cs.origin_ = {0.0, 0.0};
    }
    else if (kind == ShapeKind::rectangle)
    {
        require(params.size() == 2, "rectangle takes {Lx, Ly}");
        const int sx = snap_steps(params[0], spacing, "rectangle Lx");
        const int sy = snap_steps(params[1], spacing, "rectangle Ly");
        const double hx = params[0] / sx;
        const double hy = params[1] / sy;
        require(std::abs(hx - hy) <= 1e-9 * hx,
                "spacing must divide both side lengths");
        cs.dim_ = 2;
        cs.h_ = hx;
        cs.nx_ = sx + 1;
        cs.ny_ = sy + 1;
        cs.origin_ = {0.0, 0.0};
    }
    else
    {
        require(params.size() == 1, "disk takes one parameter {radius}");
        const double a = params[0];
        const int steps = snap_steps(2 * a, spacing, "disk diameter");
        cs.dim_ = 2;
        cs.h_ = 2 * a / steps;
        // Extend the box one spacing beyond the circle so the half-spacing
        // staircase band is fully represented.
        cs.nx_ = steps + 3;
        cs.ny_ = steps + 3;
        cs.origin_ = {-a - cs.h_, -a - cs.h_};
    }

    cs.lattice_to_node_.assign(static_cast<std::size_t>(cs.nx_) * cs.ny_, -1);
    for (int iy = 0; iy < cs.ny_; ++iy)
    {
        for (int ix = 0; ix < cs.nx_; ++ix)
        {
            const std::array<double, 2> x = {cs.origin_[0] + cs.h_ * ix,
                                            cs.dim_ == 1
                                                ? 0.0
                                                : cs.origin_[1] + cs.h_ * iy};
            bool interior = false;
            bool boundary = false;
            if (kind == ShapeKind::interval)
            {
                interior = ix > 0 && ix < cs.nx_ - 1;
                boundary = !interior;
            }
            else if (kind == ShapeKind::rectangle)
            {
                const bool on_x = ix == 0 || ix == cs.nx_ - 1;
                const bool on_y = iy == 0 || iy == cs.ny_ - 1;
                interior = !on_x && !on_y;
                boundary = !interior;
            }
            else
            {
                const double a = params[0];
                const double s = std::hypot(x[0], x[1]) - a;
                interior = s < -0.5 * cs.h_;
                boundary = !interior && std::abs(s) <= 0.5 * cs.h_;
                if (!interior && !boundary)
                    continue; // outside the staircase band
            }
            const int node = static_cast<int>(cs.coords_.size());
            cs.coords_.push_back(x);
            cs.lat_.push_back({ix, iy});
            cs.interior_.push_back(interior ? 1 : 0);
            cs.lattice_to_node_[static_cast<std::size_t>(iy) * cs.nx_ + ix]
                = node;
            if (interior)
                cs.interior_list_.push_back(node);
            else if (boundary)
                cs.boundary_list_.push_back(node);
        }
    }
    require(!cs.interior_list_.empty(),
            "spacing too coarse: cross-section has no interior nodes");
    return cs;
}

std::array<double, 2> CrossSection::normal(int node) const
{
    require(is_boundary(node), "normal requested at a non-boundary node");
    const auto x = coords_[node];
    if (kind_ == ShapeKind::interval)
        return {lat_[node][0] == 0 ? -1.0 : 1.0, 0.0};
    if (kind_ == ShapeKind::rectangle)
    {
        double nx = 0, ny = 0;
        if (lat_[node][0] == 0)
            nx = -1;
        else if (lat_[node][0] == nx_ - 1)
            nx = 1;
        if (lat_[node][1] == 0)
            ny = -1;
        else if (lat_[node][1] == ny_ - 1)
            ny = 1;
        const double len = std::hypot(nx, ny);
        return {nx / len, ny / len};
    }
    const double len = std::hypot(x[0], x[1]);
    require(len > 0, "disk boundary node at the center is impossible");
    return {x[0] / len, x[1] / len};
}

double CrossSection::wall_distance(const std::array<double, 2>& x) const
{
    if (kind_ == ShapeKind::interval)
        return std::min(x[0], params_[0] - x[0]);
    if (kind_ == ShapeKind::rectangle)
        return std::min(std::min(x[0], params_[0] - x[0]),
                        std::min(x[1], params_[1] - x[1]));
    return params_[0] - std::hypot(x[0], x[1]);
}

int CrossSection::neighbor(int node, int axis, int dir) const
{
    auto l = lat_[node];
    l[axis] += dir;
    return node_at(l[0], l[1]);
}

int CrossSection::node_at(int ix, int iy) const
{
    if (ix < 0 || ix >= nx_ || iy < 0 || iy >= ny_)
        return -1;
    return lattice_to_node_[static_cast<std::size_t>(iy) * nx_ + ix];
}

double CrossSection::inradius() const
{
    if (kind_ == ShapeKind::interval)
        return 0.5 * params_[0];
    if (kind_ == ShapeKind::rectangle)
        return 0.5 * std::min(params_[0], params_[1]);
    return params_[0];
}

NestedSubdomains build_nested_subdomains(const CrossSection& cs,
                                         const std::array<double, 4>& widths)
{
    std::ostringstream bad;
    if (!(widths[0] > widths[1] && widths[1] > widths[2]
          && widths[2] > widths[3] && widths[3] > 0))
        bad << "collar widths require w0 > w1 > w2 > w3 > 0; ";
    if (!(widths[0] < cs.inradius()))
        bad << "collar widths require w0 < inradius " << cs.inradius() << "; ";
    if (!bad.str().empty())
        throw std::invalid_argument("nested subdomains rejected: " + bad.str());

    NestedSubdomains ns;
    ns.widths = widths;
    const int n = cs.node_count();
    for (int j = 0; j < 4; ++j)
    {
        ns.collar_member[j].assign(n, 0);
        ns.core_member[j].assign(n, 0);
    }
    ns.inner_boundary.assign(n, 0);
    // Open sets exclude a rounding-scale band at each threshold so membership
    // does not depend on which side a threshold-node rounds to.
    const double eps = 1e-9 * cs.spacing();
    for (int node : cs.interior_nodes())
    {
        const double d = cs.wall_distance(node);
        for (int j = 0; j < 4; ++j)
        {
            if (d < widths[j] - eps)
            {
                ns.collar_member[j][node] = 1;
                ++ns.collar_counts[j];
            }
            if (d > widths[j] + eps)
            {
                ns.core_member[j][node] = 1;
                ++ns.core_counts[j];
            }
        }
        if (std::abs(d - widths[0]) <= 0.5 * cs.spacing())
        {
            ns.inner_boundary[node] = 1;
            ++ns.inner_boundary_count;
        }
    }
    // Strict nesting must be realised by the mesh, not just by the widths.
    for (int j = 1; j < 4; ++j)
    {
        if (!(ns.collar_counts[j] < ns.collar_counts[j - 1]))
            throw std::invalid_argument(
                "nested subdomains rejected: mesh too coarse to separate "
                "collars (equal node sets)");
    }
    if (ns.collar_counts[3] == 0)
        throw std::invalid_argument(
            "nested subdomains rejected: innermost collar has no nodes");
    if (ns.inner_boundary_count == 0)
        throw std::invalid_argument(
            "nested subdomains rejected: inner boundary of the widest collar "
            "has no nodes");
    return ns;
}

ObservationStrip build_observation_strip(const CrossSection& cs,
                                         const StripSpec& spec)
{
    ObservationStrip strip;
    struct Entry
    {
        double key;
        int node;
    };
    std::vector<Entry> sel;

    if (cs.kind() == ShapeKind::disk)
    {
        require(spec.angle_hi > spec.angle_lo,
                "strip requires angle_hi > angle_lo");
        const bool full = spec.angle_hi - spec.angle_lo >= 2 * pi - 1e-12;
        for (int node : cs.boundary_nodes())
        {
            const auto x = cs.coord(node);
            double th = std::atan2(x[1], x[0]);
            double rel = th - spec.angle_lo;
            rel -= 2 * pi * std::floor(rel / (2 * pi));
            if (full || rel <= spec.angle_hi - spec.angle_lo)
                sel.push_back({rel, node});
        }
    }
    else if (cs.kind() == ShapeKind::rectangle)
    {
        require(spec.edge >= 0 && spec.edge <= 3, "rectangle edge is 0..3");
        require(spec.edge_hi > spec.edge_lo,
                "strip requires edge_hi > edge_lo");
        for (int node : cs.boundary_nodes())
        {
            const auto x = cs.coord(node);
            const auto l = cs.lattice_index(node);
            const auto ext = cs.lattice_extent();
            bool on = false;
            double key = 0;
            switch (spec.edge)
            {
                case 0: on = l[1] == 0; key = x[0]; break;
                case 1: on = l[0] == ext[0] - 1; key = x[1]; break;
                case 2: on = l[1] == ext[1] - 1; key = x[0]; break;
                default: on = l[0] == 0; key = x[1]; break;
            }
            if (on && key >= spec.edge_lo - 1e-12
                && key <= spec.edge_hi + 1e-12)
                sel.push_back({key, node});
        }
    }
    else
    {
        require(spec.ends >= 1 && spec.ends <= 3,
                "interval strip ends bitmask is 1, 2, or 3");
        for (int node : cs.boundary_nodes())
        {
            const bool left = cs.lattice_index(node)[0] == 0;
            if ((left && (spec.ends & 1)) || (!left && (spec.ends & 2)))
                sel.push_back({left ? 0.0 : 1.0, node});
        }
    }

    std::sort(sel.begin(), sel.end(), [](const Entry& a, const Entry& b) {
        return a.key < b.key || (a.key == b.key && a.node < b.node);
    });
    const int min_nodes = cs.dim() == 1 ? 1 : 3;
    if (static_cast<int>(sel.size()) < min_nodes)
        throw std::invalid_argument(
            "observation strip rejected: fewer than the minimum contiguous "
            "boundary nodes (needs "
            + std::to_string(min_nodes) + ")");
    for (const auto& e : sel)
    {
        strip.nodes.push_back(e.node);
        strip.measure.push_back(cs.dim() == 1 ? 1.0 : cs.spacing());
        strip.normals.push_back(cs.normal(e.node));
    }
    return strip;
}

Grid Grid::build(CrossSection cs,
                 double R,
                 double axial_spacing,
                 double T,
                 double dt,
                 const GridOptions& opts)
{
    Grid g;
    require(R > 0, "axial half-length R must be positive");
    require(T > 0 && dt > 0 && dt < T, "time grid requires 0 < dt < T");
    const int steps = snap_steps(2 * R, axial_spacing, "axial extent");
    g.cs_ = std::move(cs);
    g.R_ = R;
    g.ha_ = 2 * R / steps;
    g.na_ = steps + 1;
    const int tsteps = static_cast<int>(std::lround(T / dt));
    require(tsteps >= 2, "time grid requires at least two steps");
    require(std::abs(T / tsteps - dt) <= 1e-6 * dt,
            "dt must divide the horizon T");
    g.T_ = T;
    g.dt_ = T / tsteps;
    g.nt_ = tsteps + 1;

    if (opts.decay_b && opts.decay_d)
    {
        const double tail
            = std::exp(-(*opts.decay_b)
                       * std::pow(bracket(R), *opts.decay_d));
        if (!(tail < opts.truncation_tol))
        {
            std::ostringstream os;
            os << "axial truncation too short: exp(-b<R>^d) = " << tail
               << " is not below tolerance " << opts.truncation_tol;
            throw std::invalid_argument(os.str());
        }
    }

    const double mb = g.trajectory_bytes() / (1024.0 * 1024.0);
    if (mb > opts.memory_cap_mb)
    {
        std::ostringstream os;
        os << "trajectory memory estimate " << mb
           << " MiB exceeds the configured cap " << opts.memory_cap_mb
           << " MiB";
        throw std::invalid_argument(os.str());
    }

    g.interior_mask_.assign(g.n_spatial(), 0);
    for (int node : g.cs_.interior_nodes())
    {
        for (int ia = 1; ia + 1 < g.na_; ++ia)
        {
            const int f = g.flat(node, ia);
            g.interior_mask_[f] = 1;
            g.interior_.push_back(f);
        }
    }
    return g;
}

double Grid::cell_volume() const
{
    double v = ha_;
    for (int d = 0; d < cs_.dim(); ++d)
        v *= cs_.spacing();
    return v;
}

double Grid::trajectory_bytes() const
{
    return static_cast<double>(n_spatial()) * nt_ * sizeof(cplx);
}

} // namespace wgstab
