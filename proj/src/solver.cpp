//---------------------------------------------------------------------------//
// Copyright wgstab contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
#include "wgstab/solver.hpp"

#include "wgstab/detail/stencils.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

namespace wgstab
{

namespace
{

//! Sparse Dirichlet Laplacian over the interior nodes of the cross-section.
Eigen::SparseMatrix<double> cs_laplacian(const CrossSection& cs)
{
    const auto& interior = cs.interior_nodes();
    const int nu = static_cast<int>(interior.size());
    std::vector<int> unk(cs.node_count(), -1);
    for (int i = 0; i < nu; ++i)
        unk[interior[i]] = i;
    const double ih2 = 1.0 / (cs.spacing() * cs.spacing());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(nu) * 5);
    for (int i = 0; i < nu; ++i)
    {
        const int node = interior[i];
        trip.emplace_back(i, i, 2.0 * cs.dim() * ih2);
        for (int axis = 0; axis < cs.dim(); ++axis)
            for (int dir : {-1, +1})
            {
                const int nb = cs.neighbor(node, axis, dir);
                if (nb >= 0 && cs.is_interior(nb))
                    trip.emplace_back(i, unk[nb], -ih2);
                // boundary or missing neighbour carries the Dirichlet zero
            }
    }
    Eigen::SparseMatrix<double> A(nu, nu);
    A.setFromTriplets(trip.begin(), trip.end());
    return A;
}

} // namespace

TransverseMode transverse_ground_mode(const CrossSection& cs)
{
    TransverseMode tm;
    tm.values.assign(cs.node_count(), 0.0);
    if (cs.kind() == ShapeKind::interval)
    {
        // Sampled sine is the exact lattice eigenvector on a uniform interval.
        const double L = cs.params()[0];
        double peak = 0;
        for (int node : cs.interior_nodes())
        {
            tm.values[node] = std::sin(pi * cs.coord(node)[0] / L);
            peak = std::max(peak, tm.values[node]);
        }
        for (int node : cs.interior_nodes())
            tm.values[node] /= peak;
        const double h = cs.spacing();
        tm.eigenvalue = 2.0 * (1.0 - std::cos(pi * h / L)) / (h * h);
        return tm;
    }

    const auto A = cs_laplacian(cs);
    const auto& interior = cs.interior_nodes();
    const int nu = static_cast<int>(interior.size());
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(A);
    require(llt.info() == Eigen::Success,
            "cross-section Laplacian factorization failed");
    Eigen::VectorXd v = Eigen::VectorXd::Ones(nu);
    for (int it = 0; it < 500; ++it)
    {
        Eigen::VectorXd w = llt.solve(v);
        int imax = 0;
        double best = 0;
        for (int i = 0; i < nu; ++i)
            if (std::abs(w[i]) > best)
            {
                best = std::abs(w[i]);
                imax = i;
            }
        w /= w[imax]; // peak pinned to +1: deterministic sign and scale
        const double delta = (w - v).lpNorm<Eigen::Infinity>();
        v = w;
        tm.iterations = it + 1;
        if (delta < 1e-14)
            break;
    }
    tm.eigenvalue = v.dot(A * v) / v.dot(v);
    const double resid = (A * v - tm.eigenvalue * v).lpNorm<Eigen::Infinity>();
    require(resid <= 1e-9 * tm.eigenvalue,
            "transverse mode iteration did not converge");
    for (int i = 0; i < nu; ++i)
        tm.values[interior[i]] = v[i];
    return tm;
}

double axial_mode_eigenvalue(const Grid& grid)
{
    const double ha = grid.axial_spacing();
    const double k = pi / (2.0 * grid.axial_half_length());
    return 2.0 * (1.0 - std::cos(k * ha)) / (ha * ha);
}

InitialData build_initial_mode(const Grid& grid,
                               const NestedSubdomains& ns,
                               double d0)
{
    require(d0 > 0, "degeneracy exponent must be positive");
    const auto& cs = grid.cross_section();
    const auto tm = transverse_ground_mode(cs);
    const int na = grid.n_axial();
    const double R = grid.axial_half_length();

    InitialData data;
    data.d0 = d0;
    data.u0.assign(grid.n_spatial(), cplx(0, 0));
    for (int node = 0; node < cs.node_count(); ++node)
    {
        if (!cs.is_interior(node))
            continue;
        for (int ia = 1; ia + 1 < na; ++ia)
        {
            const double xn = grid.axial_coord(ia);
            data.u0[grid.flat(node, ia)]
                = tm.values[node] * std::sin(pi * (xn + R) / (2.0 * R));
        }
    }
    data.discrete_energy = tm.eigenvalue + axial_mode_eigenvalue(grid);
    data.kappa = check_nondegeneracy(grid, ns, data.u0, d0).kappa;
    const int n = cs.dim() + 1;
    data.sobolev_surrogate
        = sobolev_surrogate(grid, data.u0, 2 * (sobolev_order(n) + 1));
    return data;
}

NondegeneracyReport check_nondegeneracy(const Grid& grid,
                                        const NestedSubdomains& ns,
                                        const ComplexField& u0,
                                        double d0)
{
    require(u0.size() == static_cast<std::size_t>(grid.n_spatial()),
            "field size does not match the grid");
    require(d0 > 0, "degeneracy exponent must be positive");
    NondegeneracyReport rep;
    rep.kappa = std::numeric_limits<double>::infinity();
    const int na = grid.n_axial();
    for (int f : grid.interior())
    {
        const int node = grid.cs_node_of(f);
        if (ns.collar_member[0][node])
            continue; // the collar cylinder is excluded from the bound
        const double xn = grid.axial_coord(f % na);
        const double val
            = std::abs(u0[f]) * std::pow(bracket(xn), 0.5 * d0);
        if (val < rep.kappa)
        {
            rep.kappa = val;
            rep.argmin_flat = f;
        }
    }
    require(std::isfinite(rep.kappa),
            "no node outside the collar cylinder to certify");
    rep.positive = rep.kappa > 0;
    return rep;
}

namespace
{

//! Complex centered difference along one axis; shares the stencil convention
//! with the real-field derivative surrogates.
void centered_difference_c(const Grid& grid,
                           int axis,
                           std::vector<cplx>& v,
                           std::vector<char>& valid)
{
    const auto& cs = grid.cross_section();
    const int na = grid.n_axial();
    const double h = axis < 2 ? cs.spacing() : grid.axial_spacing();
    std::vector<cplx> out(v.size(), cplx(0, 0));
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

double l2_of_valid(const Grid& grid,
                   const std::vector<cplx>& v,
                   const std::vector<char>& valid)
{
    double s = 0;
    for (std::size_t f = 0; f < v.size(); ++f)
        if (valid[f])
            s += std::norm(v[f]);
    return s * grid.cell_volume();
}

} // namespace

double sobolev_surrogate(const Grid& grid, const ComplexField& u, int order)
{
    require(u.size() == static_cast<std::size_t>(grid.n_spatial()),
            "field size does not match the grid");
    require(order >= 0, "derivative order must be nonnegative");
    const int a2_max = grid.cross_section().dim() == 2 ? order : 0;
    double total = 0;
    for (int a1 = 0; a1 <= order; ++a1)
        for (int a2 = 0; a2 <= a2_max; ++a2)
            for (int a3 = 0; a1 + a2 + a3 <= order; ++a3)
            {
                std::vector<cplx> v = u;
                std::vector<char> valid(v.size(), 1);
                const std::array<int, 3> alpha{a1, a2, a3};
                for (int axis = 0; axis < 3; ++axis)
                    for (int k = 0; k < alpha[axis]; ++k)
                        centered_difference_c(grid, axis, v, valid);
                total += l2_of_valid(grid, v, valid);
            }
    return std::sqrt(total);
}

namespace
{

//! One application of (-Laplace + p0) under a shrinking validity mask: the
//! result is valid only where every stencil input was valid, so iterated
//! chains never consume values the stencil cannot certify.
void apply_masked(const Grid& grid,
                  const ScalarField& p0,
                  std::vector<cplx>& v,
                  std::vector<char>& valid)
{
    const auto& cs = grid.cross_section();
    const int na = grid.n_axial();
    const double ih2 = 1.0 / (cs.spacing() * cs.spacing());
    const double iha2 = 1.0 / (grid.axial_spacing() * grid.axial_spacing());
    std::vector<cplx> w(v.size(), cplx(0, 0));
    std::vector<char> ok(v.size(), 0);
    for (int f : grid.interior())
    {
        const int node = f / na;
        const int ia = f % na;
        cplx acc = (2.0 * cs.dim() * ih2 + 2.0 * iha2 + p0[f]) * v[f];
        bool covered = valid[f] != 0;
        for (int axis = 0; axis < cs.dim() && covered; ++axis)
            for (int dir : {-1, +1})
            {
                const int nb = cs.neighbor(node, axis, dir);
                if (nb < 0 || !valid[grid.flat(nb, ia)])
                {
                    covered = false;
                    break;
                }
                acc -= ih2 * v[grid.flat(nb, ia)];
            }
        if (covered
            && valid[grid.flat(node, ia - 1)]
            && valid[grid.flat(node, ia + 1)])
        {
            acc -= iha2
                   * (v[grid.flat(node, ia - 1)] + v[grid.flat(node, ia + 1)]);
            w[f] = acc;
            ok[f] = 1;
        }
    }
    v.swap(w);
    valid.swap(ok);
}

//! Quadratic extrapolation weights to distance 0 from samples at depths
//! a, a+1, a+2 (lattice steps).
std::array<double, 3> extrapolation_weights(int a)
{
    const double ad = a;
    return {(ad + 1) * (ad + 2) / 2.0, -ad * (ad + 2), ad * (ad + 1) / 2.0};
}

//! Max |trace| of a masked field on walls and caps, recovered by one-sided
//! quadratic extrapolation from the nearest three valid nodes on the inward
//! lattice ray. Throws when no boundary point can be reached at all.
double extrapolated_boundary_max(const Grid& grid,
                                 const std::vector<cplx>& v,
                                 const std::vector<char>& valid)
{
    const auto& cs = grid.cross_section();
    const int na = grid.n_axial();
    const int max_depth = 6; // deeper starts are no longer extrapolation
    double best = 0;
    long computed = 0;

    for (int bnode : cs.boundary_nodes())
    {
        const auto nu = cs.normal(bnode);
        const int axis = std::abs(nu[0]) >= std::abs(nu[1]) ? 0 : 1;
        const int dir = nu[axis] > 0 ? -1 : +1;
        std::array<int, 9> ray{};
        ray.fill(-1);
        int node = bnode;
        for (int i = 0; i < static_cast<int>(ray.size()); ++i)
        {
            node = cs.neighbor(node, axis, dir);
            if (node < 0)
                break;
            ray[i] = node;
        }
        for (int ia = 1; ia + 1 < na; ++ia)
            for (int a = 1; a <= max_depth; ++a)
            {
                if (ray[a - 1] < 0 || ray[a] < 0 || ray[a + 1] < 0)
                    break;
                if (!valid[grid.flat(ray[a - 1], ia)]
                    || !valid[grid.flat(ray[a], ia)]
                    || !valid[grid.flat(ray[a + 1], ia)])
                    continue;
                const auto w = extrapolation_weights(a);
                const cplx t = w[0] * v[grid.flat(ray[a - 1], ia)]
                               + w[1] * v[grid.flat(ray[a], ia)]
                               + w[2] * v[grid.flat(ray[a + 1], ia)];
                best = std::max(best, std::abs(t));
                ++computed;
                break;
            }
    }
    for (int node = 0; node < cs.node_count(); ++node)
        for (int cap : {0, na - 1})
        {
            const int dir = cap == 0 ? +1 : -1;
            for (int a = 1; a <= max_depth; ++a)
            {
                const int i0 = cap + dir * a;
                const int i2 = cap + dir * (a + 2);
                if (i2 < 0 || i2 >= na)
                    break;
                if (!valid[grid.flat(node, i0)]
                    || !valid[grid.flat(node, i0 + dir)]
                    || !valid[grid.flat(node, i2)])
                    continue;
                const auto w = extrapolation_weights(a);
                const cplx t = w[0] * v[grid.flat(node, i0)]
                               + w[1] * v[grid.flat(node, i0 + dir)]
                               + w[2] * v[grid.flat(node, i2)];
                best = std::max(best, std::abs(t));
                ++computed;
                break;
            }
        }
    require(computed > 0,
            "no boundary trace reachable: chain order exceeds the"
            " differentiable depth of the grid");
    return best;
}

double max_boundary_abs(const Grid& grid, const std::vector<cplx>& v)
{
    const auto& cs = grid.cross_section();
    const int na = grid.n_axial();
    double best = 0;
    for (int bnode : cs.boundary_nodes())
        for (int ia = 0; ia < na; ++ia)
            best = std::max(best, std::abs(v[grid.flat(bnode, ia)]));
    for (int node = 0; node < cs.node_count(); ++node)
    {
        best = std::max(best, std::abs(v[grid.flat(node, 0)]));
        best = std::max(best, std::abs(v[grid.flat(node, na - 1)]));
    }
    return best;
}

} // namespace

CompatibilityReport compatibility_chain(const Grid& grid,
                                        const ComplexField& u0,
                                        const ScalarField& p0,
                                        int k,
                                        double tol)
{
    require(u0.size() == static_cast<std::size_t>(grid.n_spatial())
                && p0.size() == u0.size(),
            "field sizes do not match the grid");
    require(k >= 1, "chain order must be at least 1");
    // Each application consumes one trustworthy ring of nodes.
    if (2 * k + 1 > grid.n_axial() - 2)
    {
        std::ostringstream os;
        os << "chain order " << k << " exceeds the differentiable depth of "
           << grid.n_axial() << " axial levels";
        throw std::invalid_argument(os.str());
    }
    CompatibilityReport rep;
    rep.tolerance = tol;
    std::vector<cplx> v = u0;
    std::vector<char> valid(v.size(), 1);
    rep.residuals.push_back(max_boundary_abs(grid, v));
    for (int j = 1; j < k; ++j)
    {
        apply_masked(grid, p0, v, valid);
        rep.residuals.push_back(extrapolated_boundary_max(grid, v, valid));
    }
    rep.compatible = true;
    for (double r : rep.residuals)
        rep.compatible = rep.compatible && r <= tol;
    return rep;
}

Hamiltonian::Hamiltonian(const Grid& grid, const ScalarField& p) : grid_(&grid)
{
    require(p.size() == static_cast<std::size_t>(grid.n_spatial()),
            "potential size does not match the grid");
    const auto& cs = grid.cross_section();
    const int na = grid.n_axial();
    flat_of_unk_ = grid.interior();
    unk_of_flat_.assign(grid.n_spatial(), -1);
    for (int i = 0; i < static_cast<int>(flat_of_unk_.size()); ++i)
        unk_of_flat_[flat_of_unk_[i]] = i;

    const double ih2 = 1.0 / (cs.spacing() * cs.spacing());
    const double iha2 = 1.0 / (grid.axial_spacing() * grid.axial_spacing());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(flat_of_unk_.size() * 7);
    for (int i = 0; i < static_cast<int>(flat_of_unk_.size()); ++i)
    {
        const int f = flat_of_unk_[i];
        const int node = f / na;
        const int ia = f % na;
        trip.emplace_back(i, i, 2.0 * cs.dim() * ih2 + 2.0 * iha2 + p[f]);
        for (int axis = 0; axis < cs.dim(); ++axis)
            for (int dir : {-1, +1})
            {
                const int nb = cs.neighbor(node, axis, dir);
                if (nb >= 0)
                {
                    const int j = unk_of_flat_[grid.flat(nb, ia)];
                    if (j >= 0)
                        trip.emplace_back(i, j, -ih2);
                }
            }
        for (int dir : {-1, +1})
        {
            const int j = unk_of_flat_[grid.flat(node, ia + dir)];
            if (j >= 0)
                trip.emplace_back(i, j, -iha2);
        }
    }
    H_.resize(unknowns(), unknowns());
    H_.setFromTriplets(trip.begin(), trip.end());
}

Eigen::VectorXcd Hamiltonian::restrict_field(const ComplexField& f) const
{
    require(f.size() == static_cast<std::size_t>(grid_->n_spatial()),
            "field size does not match the grid");
    Eigen::VectorXcd x(unknowns());
    for (int i = 0; i < unknowns(); ++i)
        x[i] = f[flat_of_unk_[i]];
    return x;
}

ComplexField Hamiltonian::extend_field(const Eigen::VectorXcd& x) const
{
    ComplexField f(grid_->n_spatial(), cplx(0, 0));
    for (int i = 0; i < unknowns(); ++i)
        f[flat_of_unk_[i]] = x[i];
    return f;
}

const ComplexField& WaveTrajectory::at_level(int m) const
{
    require(m >= 0 && m % stride == 0
                && m / stride < static_cast<int>(levels.size()),
            "time level not stored at this stride");
    return levels[m / stride];
}

namespace
{

double h1_surrogate(const Grid& grid, const ComplexField& u)
{
    const auto& cs = grid.cross_section();
    const int na = grid.n_axial();
    const double h = cs.spacing();
    const double ha = grid.axial_spacing();
    double s = 0;
    for (int f = 0; f < grid.n_spatial(); ++f)
    {
        s += std::norm(u[f]);
        const int node = f / na;
        const int ia = f % na;
        for (int axis = 0; axis < cs.dim(); ++axis)
        {
            const int nb = cs.neighbor(node, axis, +1);
            if (nb >= 0)
                s += std::norm((u[grid.flat(nb, ia)] - u[f]) / h);
        }
        if (ia + 1 < na)
            s += std::norm((u[grid.flat(node, ia + 1)] - u[f]) / ha);
    }
    return std::sqrt(s * grid.cell_volume());
}

} // namespace

WaveTrajectory solve_forward(const Grid& grid,
                             const ScalarField& p,
                             const ComplexField& u0,
                             const EvolveOptions& opts)
{
    require(opts.stride >= 1, "stride must be positive");
    require(u0.size() == static_cast<std::size_t>(grid.n_spatial()),
            "initial state size does not match the grid");
    for (int f = 0; f < grid.n_spatial(); ++f)
        if (!grid.is_interior(f))
            require(u0[f] == cplx(0, 0),
                    "initial state must vanish on Dirichlet nodes");

    Hamiltonian ham(grid, p);
    const int nu = ham.unknowns();
    const double mu = 0.5 * grid.dt();
    Eigen::SparseMatrix<cplx> Hc = ham.matrix().cast<cplx>();
    Eigen::SparseMatrix<cplx> Id(nu, nu);
    Id.setIdentity();
    Eigen::SparseMatrix<cplx> A = Id + cplx(0, mu) * Hc;
    A.makeCompressed();

    Eigen::BiCGSTAB<Eigen::SparseMatrix<cplx>> krylov;
    krylov.setTolerance(opts.solver_tol);
    krylov.setMaxIterations(400);
    krylov.compute(A);
    Eigen::SparseLU<Eigen::SparseMatrix<cplx>> lu;
    bool lu_ready = false;

    WaveTrajectory traj;
    traj.grid = &grid;
    traj.stride = opts.stride;
    const double vol_sqrt = std::sqrt(grid.cell_volume());

    Eigen::VectorXcd u = ham.restrict_field(u0);
    traj.levels.push_back(u0); // level 0 kept bitwise
    traj.l2_history.push_back(u.norm() * vol_sqrt);
    // Monitors are relative to t=0; a zero initial state degrades them to
    // absolute values so u0 = 0 still evolves (to the zero trajectory).
    const double l2_0 = traj.l2_history[0];
    const double l2_den = l2_0 > 0 ? l2_0 : 1.0;
    const double h1_0 = std::max(h1_surrogate(grid, u0), 1e-300);
    traj.energy_ratio = 1.0;
    double linf_max = 0, dlinf_max = 0;
    for (int f = 0; f < grid.n_spatial(); ++f)
        linf_max = std::max(linf_max, std::abs(u0[f]));

    Eigen::VectorXcd prev = u; // for the centered time derivative
    for (int m = 1; m < grid.n_time(); ++m)
    {
        const Eigen::VectorXcd b = u - cplx(0, mu) * (Hc * u);
        Eigen::VectorXcd x = krylov.solveWithGuess(b, u);
        double resid = (A * x - b).norm();
        if (!(resid <= opts.accept_residual * b.norm()))
        {
            if (!lu_ready)
            {
                lu.compute(A);
                require(lu.info() == Eigen::Success,
                        "direct factorization of the step matrix failed");
                lu_ready = true;
            }
            x = lu.solve(b);
            x += lu.solve(b - A * x); // one refinement pass
            ++traj.direct_solve_steps;
            resid = (A * x - b).norm();
            if (!(resid <= opts.accept_residual * b.norm()))
            {
                std::ostringstream os;
                os << "time step " << m << " linear solve stalled: residual "
                   << resid << " exceeds " << opts.accept_residual * b.norm();
                throw std::runtime_error(os.str());
            }
        }
        if (m >= 2)
        {
            const double dn
                = ((x - prev) / (2.0 * grid.dt())).lpNorm<Eigen::Infinity>();
            dlinf_max = std::max(dlinf_max, dn);
        }
        prev = u;
        u = x;

        traj.l2_history.push_back(u.norm() * vol_sqrt);
        ComplexField full = ham.extend_field(u);
        const double h1 = h1_surrogate(grid, full);
        traj.energy_ratio = std::max(traj.energy_ratio, h1 / h1_0);
        linf_max = std::max(linf_max, u.lpNorm<Eigen::Infinity>());
        if (m % opts.stride == 0)
            traj.levels.push_back(std::move(full));
    }
    for (double l2 : traj.l2_history)
        traj.unitarity_drift
            = std::max(traj.unitarity_drift, std::abs(l2 - l2_0) / l2_den);
    traj.c1_linf = linf_max + dlinf_max;
    return traj;
}

namespace
{

cplx sample(const Grid& grid,
            const ComplexField& u,
            const detail::CsSample& s,
            int ia)
{
    cplx acc(0, 0);
    for (int k = 0; k < 4; ++k)
        if (s.node[k] >= 0 && s.w[k] != 0.0)
            acc += s.w[k] * u[grid.flat(s.node[k], ia)];
    return acc;
}

} // namespace

NeumannTrace neumann_trace(const WaveTrajectory& traj,
                           const ObservationStrip& strip)
{
    require(traj.grid != nullptr, "trajectory is empty");
    require(traj.stride == 1,
            "Neumann traces need the trajectory at full time resolution");
    const Grid& grid = *traj.grid;
    const auto& cs = grid.cross_section();
    const int na = grid.n_axial();
    const int ns = static_cast<int>(strip.nodes.size());
    const double h = cs.spacing();

    // Per strip node: the two inward-ray sampling stencils, fixed in time.
    std::vector<detail::CsSample> ray1(ns), ray2(ns);
    for (int s = 0; s < ns; ++s)
    {
        const auto x = cs.coord(strip.nodes[s]);
        const auto& nu = strip.normals[s];
        ray1[s] = detail::make_cs_sample(
            cs, {x[0] - h * nu[0], x[1] - h * nu[1]});
        ray2[s] = detail::make_cs_sample(
            cs, {x[0] - 2 * h * nu[0], x[1] - 2 * h * nu[1]});
    }

    NeumannTrace tr;
    tr.n_strip = ns;
    tr.n_axial = na;
    tr.values.resize(traj.levels.size());
    for (std::size_t m = 0; m < traj.levels.size(); ++m)
    {
        const auto& u = traj.levels[m];
        auto& g = tr.values[m];
        g.assign(static_cast<std::size_t>(ns) * na, cplx(0, 0));
        for (int s = 0; s < ns; ++s)
        {
            const int bflat0 = grid.flat(strip.nodes[s], 0);
            for (int ia = 0; ia < na; ++ia)
            {
                const cplx ub = u[bflat0 + ia];
                const cplx u1 = sample(grid, u, ray1[s], ia);
                const cplx u2 = sample(grid, u, ray2[s], ia);
                g[static_cast<std::size_t>(s) * na + ia]
                    = (3.0 * ub - 4.0 * u1 + u2) / (2.0 * h);
            }
        }
    }
    // Norms.
    const Grid& g2 = grid;
    tr.star_norm = star_norm(g2, strip, tr.values);
    // L2-in-time part alone.
    {
        const double ha = grid.axial_spacing();
        const int nt = static_cast<int>(tr.values.size());
        double acc = 0;
        for (int m = 0; m < nt; ++m)
        {
            double lvl = 0;
            for (int s = 0; s < ns; ++s)
                for (int ia = 0; ia < na; ++ia)
                    lvl += strip.measure[s] * ha
                           * std::norm(
                               tr.values[m][static_cast<std::size_t>(s) * na
                                            + ia]);
            acc += trapezoid_weight(m, nt) * grid.dt() * lvl;
        }
        tr.l2_part = std::sqrt(acc);
    }
    return tr;
}

double star_norm(const Grid& grid,
                 const ObservationStrip& strip,
                 const std::vector<std::vector<cplx>>& g)
{
    const int nt = static_cast<int>(g.size());
    require(nt >= 3, "observation norm needs at least three time levels");
    const int ns = static_cast<int>(strip.nodes.size());
    const int na = grid.n_axial();
    for (const auto& lvl : g)
        require(lvl.size() == static_cast<std::size_t>(ns) * na,
                "trace layout does not match the strip");
    const double ha = grid.axial_spacing();
    const double dt = grid.dt();

    auto level_l2sq = [&](const std::vector<cplx>& v) {
        double s = 0;
        for (int i = 0; i < ns; ++i)
            for (int ia = 0; ia < na; ++ia)
                s += strip.measure[i] * ha
                     * std::norm(v[static_cast<std::size_t>(i) * na + ia]);
        return s;
    };

    double acc = 0;
    std::vector<cplx> der(static_cast<std::size_t>(ns) * na);
    for (int m = 0; m < nt; ++m)
    {
        for (std::size_t i = 0; i < der.size(); ++i)
        {
            if (m == 0)
                der[i] = (-3.0 * g[0][i] + 4.0 * g[1][i] - g[2][i]) / (2 * dt);
            else if (m == nt - 1)
                der[i] = (3.0 * g[nt - 1][i] - 4.0 * g[nt - 2][i]
                          + g[nt - 3][i])
                         / (2 * dt);
            else
                der[i] = (g[m + 1][i] - g[m - 1][i]) / (2 * dt);
        }
        acc += trapezoid_weight(m, nt) * dt
               * (level_l2sq(g[m]) + level_l2sq(der));
    }
    return std::sqrt(acc);
}

double observation_gap(const Grid& grid,
                       const ScalarField& p1,
                       const ScalarField& p2,
                       const ComplexField& u0,
                       const ObservationStrip& strip,
                       const EvolveOptions& opts)
{
    require(opts.stride == 1, "observation gap needs full time resolution");
    const auto t1 = solve_forward(grid, p1, u0, opts);
    const auto t2 = solve_forward(grid, p2, u0, opts);
    const auto g1 = neumann_trace(t1, strip);
    const auto g2 = neumann_trace(t2, strip);
    std::vector<std::vector<cplx>> diff(g1.values.size());
    for (std::size_t m = 0; m < g1.values.size(); ++m)
    {
        diff[m].resize(g1.values[m].size());
        for (std::size_t i = 0; i < diff[m].size(); ++i)
            diff[m][i] = g1.values[m][i] - g2.values[m][i];
    }
    return star_norm(grid, strip, diff);
}

} // namespace wgstab
