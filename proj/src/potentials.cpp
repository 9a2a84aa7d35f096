//---------------------------------------------------------------------------//
// Copyright wgstab contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
#include "wgstab/potentials.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace wgstab
{

double weighted_sup_norm(const Grid& grid,
                         const ScalarField& q,
                         double b,
                         double d)
{
    require(q.size() == static_cast<std::size_t>(grid.n_spatial()),
            "field size does not match the grid");
    require(b > 0 && d > 0, "decay parameters require b > 0 and d > 0");
    const double peak_exponent
        = b * std::pow(bracket(grid.axial_half_length()), d);
    if (peak_exponent > 700.0)
    {
        std::ostringstream os;
        os << "weighted sup norm rejected: exponent b<R>^d = " << peak_exponent
           << " overflows double range; rescale b, d, or R";
        throw std::invalid_argument(os.str());
    }
    double best = 0;
    const int na = grid.n_axial();
    for (int f = 0; f < grid.n_spatial(); ++f)
    {
        const double xn = grid.axial_coord(f % na);
        const double w = std::exp(b * std::pow(bracket(xn), d));
        best = std::max(best, w * std::abs(q[f]));
    }
    return best;
}

double l2_norm(const Grid& grid, const ScalarField& q)
{
    require(q.size() == static_cast<std::size_t>(grid.n_spatial()),
            "field size does not match the grid");
    double s = 0;
    for (double v : q)
        s += v * v;
    return std::sqrt(s * grid.cell_volume());
}

namespace
{

//! One centered difference; axis 0/1 are cross-section axes, axis 2 is the
//! cylinder axis. valid[] tracks stencil coverage.
void centered_difference(const Grid& grid,
                         int axis,
                         std::vector<double>& v,
                         std::vector<char>& valid)
{
    const auto& cs = grid.cross_section();
    const int na = grid.n_axial();
    const double h = axis < 2 ? cs.spacing() : grid.axial_spacing();
    std::vector<double> out(v.size(), 0.0);
    std::vector<char> ok(v.size(), 0);
    for (int f = 0; f < grid.n_spatial(); ++f)
    {
        const int node = f / na;
        const int ia = f % na;
        int fp = -1, fm = -1;
        if (axis < 2)
        {
            const int np = cs.neighbor(node, axis, +1);
            const int nm = cs.neighbor(node, axis, -1);
            if (np >= 0 && nm >= 0)
            {
                fp = grid.flat(np, ia);
                fm = grid.flat(nm, ia);
            }
        }
        else if (ia > 0 && ia + 1 < na)
        {
            fp = grid.flat(node, ia + 1);
            fm = grid.flat(node, ia - 1);
        }
        if (fp >= 0 && valid[fp] && valid[fm])
        {
            out[f] = (v[fp] - v[fm]) / (2 * h);
            ok[f] = 1;
        }
    }
    v.swap(out);
    valid.swap(ok);
}

} // namespace

double sup_derivative(const Grid& grid,
                      const ScalarField& q,
                      const std::array<int, 3>& alpha)
{
    require(q.size() == static_cast<std::size_t>(grid.n_spatial()),
            "field size does not match the grid");
    const int dim = grid.cross_section().dim();
    require(dim == 2 || alpha[1] == 0,
            "derivative order set on an absent cross-section axis");
    std::vector<double> v = q;
    std::vector<char> valid(v.size(), 1);
    for (int axis = 0; axis < 3; ++axis)
        for (int k = 0; k < alpha[axis]; ++k)
            centered_difference(grid, axis, v, valid);
    double best = 0;
    bool any = false;
    for (std::size_t f = 0; f < v.size(); ++f)
        if (valid[f])
        {
            any = true;
            best = std::max(best, std::abs(v[f]));
        }
    require(any, "derivative stencil leaves the grid everywhere");
    return best;
}

AdmissibilityReport check_admissible(const Grid& grid,
                                     const NestedSubdomains& ns,
                                     const ScalarField& p,
                                     const ScalarField& p0,
                                     double b,
                                     double d,
                                     double M)
{
    require(p.size() == p0.size()
                && p.size() == static_cast<std::size_t>(grid.n_spatial()),
            "field sizes do not match the grid");
    AdmissibilityReport rep;
    const int na = grid.n_axial();

    // Background pinned on the collar cylinder (exact equality).
    rep.background_pinned = true;
    for (int f = 0; f < grid.n_spatial(); ++f)
    {
        const int node = f / na;
        if (ns.collar_member[0][node] && p[f] != p0[f])
        {
            rep.background_pinned = false;
            rep.first_support_violation = f;
            break;
        }
    }

    // Finite-difference Sobolev surrogate over all |alpha| <= 2N.
    const int n = grid.cross_section().dim() + 1;
    const int kmax = 2 * sobolev_order(n);
    double sup = 0;
    const int a2_max = grid.cross_section().dim() == 2 ? kmax : 0;
    for (int a1 = 0; a1 <= kmax; ++a1)
        for (int a2 = 0; a2 <= a2_max; ++a2)
            for (int a3 = 0; a1 + a2 + a3 <= kmax; ++a3)
                sup = std::max(sup,
                               sup_derivative(grid, p, {a1, a2, a3}));
    rep.sobolev_sup = sup;
    rep.sobolev_ok = sup <= M;

    ScalarField diff(p.size());
    for (std::size_t f = 0; f < p.size(); ++f)
        diff[f] = p[f] - p0[f];
    rep.tail_norm = weighted_sup_norm(grid, diff, b, d);
    rep.tail_ok = rep.tail_norm <= M;

    rep.admissible = rep.background_pinned && rep.sobolev_ok && rep.tail_ok;
    return rep;
}

double mollifier_bump(double r)
{
    const double r2 = r * r;
    if (r2 >= 1.0)
        return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - r2));
}

std::pair<ScalarField, ScalarField> make_test_pair(const Grid& grid,
                                                   const NestedSubdomains& ns,
                                                   const ScalarField& p0,
                                                   const TestPairSpec& spec)
{
    const auto& cs = grid.cross_section();
    require(spec.width > 0 && spec.amplitude >= 0,
            "test pair requires width > 0 and amplitude >= 0");
    const double clearance
        = cs.wall_distance(spec.center) - spec.width;
    if (!(clearance > ns.widths[0]))
    {
        std::ostringstream os;
        os << "test pair rejected: bump support reaches the boundary collar "
              "(needs center distance - width > w0 = "
           << ns.widths[0] << ", got " << clearance << ")";
        throw std::invalid_argument(os.str());
    }

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> uni(0.05, 0.95);
    const double t = uni(rng);

    const int na = grid.n_axial();
    ScalarField bump(grid.n_spatial(), 0.0);
    for (int f = 0; f < grid.n_spatial(); ++f)
    {
        const auto x = cs.coord(f / na);
        const double xn = grid.axial_coord(f % na);
        const double r = std::hypot(x[0] - spec.center[0],
                                    x[1] - spec.center[1])
                         / spec.width;
        if (r < 1.0)
            bump[f] = mollifier_bump(r)
                      * std::exp(-2 * spec.b * std::pow(bracket(xn), spec.d));
    }
    ScalarField p1 = p0, p2 = p0;
    for (int f = 0; f < grid.n_spatial(); ++f)
    {
        p1[f] += t * spec.amplitude * bump[f];
        p2[f] -= (1.0 - t) * spec.amplitude * bump[f];
    }
    return {std::move(p1), std::move(p2)};
}

} // namespace wgstab
