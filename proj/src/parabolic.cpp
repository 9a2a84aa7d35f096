//---------------------------------------------------------------------------//
// Copyright wgstab contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file parabolic.cpp
//! Collar profile construction (explicit quadratic or discrete harmonic),
//! singular-in-time weight tables, region selection for the localisation
//! margins, weight derivative bound scans, the conjugated operator split
//! with its energy identity, and the weighted inequality ratio probe.

#include "wgstab/parabolic.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace wgstab
{

namespace
{

constexpr double kInf = std::numeric_limits<double>::infinity();

bool full_wall_coverage(const CrossSection& cs, const StripSpec& spec)
{
    switch (cs.kind())
    {
    case ShapeKind::interval:
        return spec.ends == 3;
    case ShapeKind::disk:
        return spec.angle_hi - spec.angle_lo >= 2.0 * pi - 1e-12;
    case ShapeKind::rectangle:
        return false; // an edge segment never covers all four sides
    }
    return false;
}

//! Radial profile |x'|^2 - r0^2 vanishing on the circle of radius
//! r0 = a - w0 and reaching a^2 - r0^2 on the wall.
Psi0Field explicit_disk_profile(const CrossSection& cs,
                                const NestedSubdomains& ns)
{
    const double a = cs.params()[0];
    const double r0 = a - ns.widths[0];
    Psi0Field f;
    f.member = collar_closure_mask(cs, ns);
    f.value.assign(cs.node_count(), 0.0);
    f.grad.assign(cs.node_count(), {0.0, 0.0});
    f.quadratic = true;
    f.hess = {2.0, 0.0, 2.0};
    f.sup = a * a - r0 * r0;
    double ming = kInf;
    for (int v = 0; v < cs.node_count(); ++v)
    {
        if (!f.member[v])
            continue;
        const auto x = cs.coord(v);
        f.value[v] = x[0] * x[0] + x[1] * x[1] - r0 * r0;
        f.grad[v] = {2.0 * x[0], 2.0 * x[1]};
        ming = std::min(ming, 2.0 * std::hypot(x[0], x[1]));
        ++f.n_member;
    }
    f.min_grad_norm = ming;
    return f;
}

//! Two-sided profile (w0 - s)(2 w0 + s) in the wall distance s, one branch
//! per end; the carrier never reaches the midpoint, so the branch Hessian
//! -2 is constant across it.
Psi0Field explicit_interval_profile(const CrossSection& cs,
                                    const NestedSubdomains& ns)
{
    const double L = cs.params()[0];
    const double w0 = ns.widths[0];
    Psi0Field f;
    f.member = collar_closure_mask(cs, ns);
    f.value.assign(cs.node_count(), 0.0);
    f.grad.assign(cs.node_count(), {0.0, 0.0});
    f.quadratic = true;
    f.hess = {-2.0, 0.0, 0.0};
    f.sup = 2.0 * w0 * w0;
    double ming = kInf;
    for (int v = 0; v < cs.node_count(); ++v)
    {
        if (!f.member[v])
            continue;
        const double x = cs.coord(v)[0];
        const bool left = x <= 0.5 * L;
        const double s = left ? x : L - x;
        f.value[v] = (w0 - s) * (2.0 * w0 + s);
        const double slope = w0 + 2.0 * s;
        f.grad[v] = {left ? -slope : slope, 0.0};
        ming = std::min(ming, slope);
        ++f.n_member;
    }
    f.min_grad_norm = ming;
    return f;
}

//! Discrete harmonic extension of a mollified hump on the observed wall
//! arc, with zero data on the rest of the carrier boundary.
Psi0Field numeric_profile(const CrossSection& cs,
                          const NestedSubdomains& ns,
                          const StripSpec& spec)
{
    require(cs.dim() == 2, "harmonic profile construction needs a 2-D section");
    const ObservationStrip strip = build_observation_strip(cs, spec);

    Psi0Field f;
    f.member = collar_closure_mask(cs, ns);
    f.value.assign(cs.node_count(), 0.0);
    f.grad.assign(cs.node_count(), {0.0, 0.0});
    f.quadratic = false;

    std::vector<double> bdata(cs.node_count(), 0.0);
    const int nsn = static_cast<int>(strip.nodes.size());
    for (int i = 0; i < nsn; ++i)
        bdata[strip.nodes[i]]
            = mollifier_bump(std::abs(2.0 * (i + 0.5) - nsn) / nsn);

    const std::vector<char> unknown = collar_unknown_mask(cs, ns);
    std::vector<int> row(cs.node_count(), -1);
    std::vector<int> unknown_list;
    for (int v = 0; v < cs.node_count(); ++v)
        if (unknown[v])
        {
            row[v] = static_cast<int>(unknown_list.size());
            unknown_list.push_back(v);
        }
    require(!unknown_list.empty(), "collar carries no unknown profile nodes");

    const int n = static_cast<int>(unknown_list.size());
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (int r = 0; r < n; ++r)
    {
        const int v = unknown_list[r];
        trips.emplace_back(r, r, 4.0);
        for (int axis = 0; axis < 2; ++axis)
            for (int dir : {-1, +1})
            {
                const int nb = cs.neighbor(v, axis, dir);
                if (nb < 0)
                    continue;
                if (row[nb] >= 0)
                    trips.emplace_back(r, row[nb], -1.0);
                else
                    rhs[r] += bdata[nb];
            }
    }
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
    require(ldlt.info() == Eigen::Success,
            "harmonic profile factorisation failed");
    const Eigen::VectorXd sol = ldlt.solve(rhs);
    require(ldlt.info() == Eigen::Success, "harmonic profile solve failed");

    for (int r = 0; r < n; ++r)
        f.value[unknown_list[r]] = sol[r];
    for (int b : cs.boundary_nodes())
        if (f.member[b])
            f.value[b] = bdata[b];
    // inner band nodes keep the Dirichlet zero

    // Gradients: centered where both lattice neighbours carry profile
    // values, one-sided toward the carrier otherwise.
    const double h = cs.spacing();
    double ming = kInf;
    double maxv = -kInf;
    for (int v = 0; v < cs.node_count(); ++v)
    {
        if (!f.member[v])
            continue;
        for (int axis = 0; axis < cs.dim(); ++axis)
        {
            const int e = cs.neighbor(v, axis, +1);
            const int wv = cs.neighbor(v, axis, -1);
            const bool he = e >= 0 && f.member[e];
            const bool hw = wv >= 0 && f.member[wv];
            double g = 0.0;
            if (he && hw)
                g = (f.value[e] - f.value[wv]) / (2.0 * h);
            else if (he)
                g = (f.value[e] - f.value[v]) / h;
            else if (hw)
                g = (f.value[v] - f.value[wv]) / h;
            f.grad[v][axis] = g;
        }
        if (f.grad[v][0] == 0.0 && f.grad[v][1] == 0.0)
        {
            // Corner band nodes can have every in-carrier axis neighbour
            // pinned at the same Dirichlet zero; the profile then rises
            // along a diagonal only. Recover the slope from diagonal
            // differences so the nondegeneracy check measures the field,
            // not the stencil.
            for (int sx : {-1, +1})
                for (int sy : {-1, +1})
                {
                    int nb = cs.neighbor(v, 0, sx);
                    nb = nb >= 0 ? cs.neighbor(nb, 1, sy) : -1;
                    if (nb < 0)
                    {
                        nb = cs.neighbor(v, 1, sy);
                        nb = nb >= 0 ? cs.neighbor(nb, 0, sx) : -1;
                    }
                    if (nb < 0 || !f.member[nb])
                        continue;
                    const double d = f.value[nb] - f.value[v];
                    f.grad[v][0] += d * sx / (2.0 * h);
                    f.grad[v][1] += d * sy / (2.0 * h);
                }
        }
        ming = std::min(ming,
                        std::hypot(f.grad[v][0], f.grad[v][1]));
        maxv = std::max(maxv, f.value[v]);
        ++f.n_member;
    }
    f.min_grad_norm = ming;
    f.sup = maxv;
    return f;
}

double sample_values(const CrossSection& cs,
                     const Psi0Field& f,
                     const std::array<double, 2>& q)
{
    const detail::CsSample s = detail::make_cs_sample(cs, q);
    double acc = 0.0;
    for (int i = 0; i < 4; ++i)
        if (s.node[i] >= 0 && f.member[s.node[i]])
            acc += s.w[i] * f.value[s.node[i]];
    return acc;
}

void append_violation(std::ostringstream& os,
                      const char* what,
                      const std::vector<int>& nodes)
{
    if (nodes.empty())
        return;
    os << " " << what << " at " << nodes.size() << " nodes (e.g.";
    const int shown = std::min<int>(6, static_cast<int>(nodes.size()));
    for (int i = 0; i < shown; ++i)
        os << " " << nodes[i];
    os << ");";
}

//! Fills the E-derivative tables of `wt` from its profile at the given
//! sharpness. Closed forms on a quadratic profile; finite differences with
//! per-node available depth otherwise.
void tabulate_tables(const CrossSection& cs,
                     const Psi0Field& f,
                     double lambda,
                     double a_w,
                     ParabolicWeights& wt)
{
    const int n = cs.node_count();
    wt.E.assign(n, 0.0);
    wt.gradE.assign(n, {0.0, 0.0});
    wt.hessE.assign(n, {0.0, 0.0, 0.0});
    wt.lapE.assign(n, 0.0);
    wt.bilapE.assign(n, 0.0);
    wt.deriv_depth.assign(n, 0);

    for (int v = 0; v < n; ++v)
        if (f.member[v])
            wt.E[v] = std::exp(lambda * (f.value[v] + a_w));

    if (f.quadratic)
    {
        const auto& H = f.hess;
        const double hf2 = H[0] * H[0] + 2.0 * H[1] * H[1] + H[2] * H[2];
        const double trH = H[0] + H[2];
        const double l2 = lambda * lambda;
        const double l3 = l2 * lambda;
        for (int v = 0; v < n; ++v)
        {
            if (!f.member[v])
                continue;
            const double E = wt.E[v];
            const auto& g = f.grad[v];
            const double g2 = g[0] * g[0] + g[1] * g[1];
            const double G = lambda * trH + l2 * g2;
            wt.gradE[v] = {lambda * g[0] * E, lambda * g[1] * E};
            wt.hessE[v] = {(lambda * H[0] + l2 * g[0] * g[0]) * E,
                           (lambda * H[1] + l2 * g[0] * g[1]) * E,
                           (lambda * H[2] + l2 * g[1] * g[1]) * E};
            wt.lapE[v] = G * E;
            const double hgg = H[0] * g[0] * g[0] + 2.0 * H[1] * g[0] * g[1]
                               + H[2] * g[1] * g[1];
            wt.bilapE[v] = (2.0 * l2 * hf2 + 4.0 * l3 * hgg + G * G) * E;
            wt.deriv_depth[v] = 2;
        }
        return;
    }

    const double h = cs.spacing();
    const double ih2 = 1.0 / (h * h);
    const double i2h = 0.5 / h;
    for (int v = 0; v < n; ++v)
    {
        if (!f.member[v])
            continue;
        std::array<int, 4> nb{-1, -1, -1, -1}; // +x, -x, +y, -y
        bool ok = true;
        for (int axis = 0; axis < cs.dim() && ok; ++axis)
            for (int dir : {+1, -1})
            {
                const int q = cs.neighbor(v, axis, dir);
                if (q < 0 || !f.member[q])
                {
                    ok = false;
                    break;
                }
                nb[2 * axis + (dir > 0 ? 0 : 1)] = q;
            }
        int dpp = -1, dpm = -1, dmp = -1, dmm = -1;
        if (ok && cs.dim() == 2)
        {
            const auto li = cs.lattice_index(v);
            dpp = cs.node_at(li[0] + 1, li[1] + 1);
            dpm = cs.node_at(li[0] + 1, li[1] - 1);
            dmp = cs.node_at(li[0] - 1, li[1] + 1);
            dmm = cs.node_at(li[0] - 1, li[1] - 1);
            ok = dpp >= 0 && f.member[dpp] && dpm >= 0 && f.member[dpm]
                 && dmp >= 0 && f.member[dmp] && dmm >= 0 && f.member[dmm];
        }
        if (!ok)
            continue;
        const double E = wt.E[v];
        wt.gradE[v][0] = (wt.E[nb[0]] - wt.E[nb[1]]) * i2h;
        wt.hessE[v][0] = (wt.E[nb[0]] - 2.0 * E + wt.E[nb[1]]) * ih2;
        if (cs.dim() == 2)
        {
            wt.gradE[v][1] = (wt.E[nb[2]] - wt.E[nb[3]]) * i2h;
            wt.hessE[v][2] = (wt.E[nb[2]] - 2.0 * E + wt.E[nb[3]]) * ih2;
            wt.hessE[v][1] = (wt.E[dpp] - wt.E[dpm] - wt.E[dmp] + wt.E[dmm])
                             * (0.25 * ih2);
        }
        wt.lapE[v] = wt.hessE[v][0] + wt.hessE[v][2];
        wt.deriv_depth[v] = 1;
    }
    std::vector<char> fourth(n, 0);
    for (int v = 0; v < n; ++v)
    {
        if (wt.deriv_depth[v] < 1)
            continue;
        bool ok = true;
        double acc = -2.0 * cs.dim() * wt.lapE[v];
        for (int axis = 0; axis < cs.dim() && ok; ++axis)
            for (int dir : {+1, -1})
            {
                const int q = cs.neighbor(v, axis, dir);
                if (q < 0 || wt.deriv_depth[q] < 1)
                {
                    ok = false;
                    break;
                }
                acc += wt.lapE[q];
            }
        if (!ok)
            continue;
        wt.bilapE[v] = acc * ih2;
        fourth[v] = 1;
    }
    for (int v = 0; v < n; ++v)
        if (fourth[v])
            wt.deriv_depth[v] = 2;
}

cplx sample_state(const Grid& grid,
                  const SpaceTimeField& v,
                  const detail::CsSample& s,
                  int ia,
                  int k,
                  int nl)
{
    cplx acc(0.0, 0.0);
    for (int i = 0; i < 4; ++i)
        if (s.node[i] >= 0)
            acc += s.w[i] * v[st_index(grid.flat(s.node[i], ia), k, nl)];
    return acc;
}

} // namespace

TauGrid build_tau_grid(double dtau)
{
    require(dtau > 0, "level spacing must be positive");
    const double inv = 1.0 / dtau;
    const int m = static_cast<int>(std::llround(inv));
    require(m >= 3 && std::abs(inv - m) <= 1e-9 * m,
            "1/dtau must be an integer >= 3 so the symmetric window divides "
            "evenly and tau = 0 lands on the lattice");
    TauGrid g;
    g.dtau = 1.0 / m;
    g.n_levels = 2 * m - 1;
    return g;
}

std::vector<char> collar_unknown_mask(const CrossSection& cs,
                                      const NestedSubdomains& ns)
{
    std::vector<char> m(cs.node_count(), 0);
    for (int v = 0; v < cs.node_count(); ++v)
        if (ns.collar_member[0][v] && !ns.inner_boundary[v])
            m[v] = 1;
    return m;
}

std::vector<char> collar_closure_mask(const CrossSection& cs,
                                      const NestedSubdomains& ns)
{
    std::vector<char> m(cs.node_count(), 0);
    for (int v = 0; v < cs.node_count(); ++v)
        if (ns.collar_member[0][v] || ns.inner_boundary[v])
            m[v] = 1;
    for (int b : cs.boundary_nodes())
        m[b] = 1;
    return m;
}

Psi0Field construct_psi0(const CrossSection& cs,
                         const NestedSubdomains& ns,
                         const StripSpec& strip)
{
    Psi0Field f;
    if (cs.kind() == ShapeKind::interval)
    {
        require(strip.ends == 3,
                "a 1-D section with an unobserved wall end admits no profile: "
                "rising from the inner zero level into that end while keeping "
                "a nowhere-vanishing slope is impossible");
        f = explicit_interval_profile(cs, ns);
    }
    else if (cs.kind() == ShapeKind::disk && full_wall_coverage(cs, strip))
    {
        f = explicit_disk_profile(cs, ns);
    }
    else
    {
        f = numeric_profile(cs, ns, strip);
    }
    verify_psi0(cs, ns, strip, f);
    return f;
}

void verify_psi0(const CrossSection& cs,
                 const NestedSubdomains& ns,
                 const StripSpec& spec,
                 const Psi0Field& f)
{
    require(static_cast<int>(f.member.size()) == cs.node_count()
                && f.value.size() == f.member.size()
                && f.grad.size() == f.member.size(),
            "profile field does not match the section");
    const double h = cs.spacing();
    const std::vector<char> unknown = collar_unknown_mask(cs, ns);

    double maxg = 0.0;
    for (int v = 0; v < cs.node_count(); ++v)
        if (f.member[v])
            maxg = std::max(maxg, std::hypot(f.grad[v][0], f.grad[v][1]));
    const double gtol = 1e-12 * (1.0 + maxg);

    std::vector<int> bad_pos, bad_grad, bad_band, bad_wall;
    for (int v = 0; v < cs.node_count(); ++v)
    {
        if (!f.member[v])
            continue;
        const double gn = std::hypot(f.grad[v][0], f.grad[v][1]);
        if (!(gn > gtol))
            bad_grad.push_back(v);
        if (unknown[v] && !(f.value[v] > 0.0))
            bad_pos.push_back(v);
        if (cs.is_interior(v) && ns.inner_boundary[v]
            && !(std::abs(f.value[v]) <= 0.5 * h * (gn + h)))
            bad_band.push_back(v);
    }

    const ObservationStrip strip = build_observation_strip(cs, spec);
    std::vector<char> observed(cs.node_count(), 0);
    for (int b : strip.nodes)
        observed[b] = 1;
    const double dtol = 1e-9 * (1.0 + maxg);
    for (int b : cs.boundary_nodes())
    {
        if (!f.member[b] || observed[b])
            continue;
        const auto x = cs.coord(b);
        const auto nu = cs.normal(b);
        const double v1 = sample_values(
            cs, f, {x[0] - h * nu[0], x[1] - h * nu[1]});
        const double v2 = sample_values(
            cs, f, {x[0] - 2.0 * h * nu[0], x[1] - 2.0 * h * nu[1]});
        const double dn = (3.0 * f.value[b] - 4.0 * v1 + v2) / (2.0 * h);
        if (!(dn <= dtol))
            bad_wall.push_back(b);
    }

    if (bad_pos.empty() && bad_grad.empty() && bad_band.empty()
        && bad_wall.empty())
        return;
    std::ostringstream os;
    os << "profile verification failed:";
    append_violation(os, "positivity", bad_pos);
    append_violation(os, "gradient floor", bad_grad);
    append_violation(os, "inner band level", bad_band);
    append_violation(os, "outward wall slope", bad_wall);
    require(false, os.str());
}

std::pair<double, double> default_weight_offsets(double psi_sup)
{
    require(psi_sup > 0, "profile sup must be positive");
    return {1.2 * psi_sup, 1.3 * psi_sup};
}

ParabolicWeights eval_parabolic_weights(const CrossSection& cs,
                                        const Psi0Field& psi0,
                                        double lambda,
                                        double a_w,
                                        double b_w,
                                        const TauGrid& tau)
{
    require(lambda > 0, "weight sharpness must be positive");
    require(psi0.sup < a_w, "lower weight offset must exceed the profile sup");
    require(a_w < b_w, "weight offsets must be strictly increasing");
    require(b_w < 2.0 * a_w - psi0.sup,
            "upper weight offset must stay below twice the lower one minus "
            "the profile sup");
    require(tau.n_levels >= 5 && tau.dtau > 0,
            "transformed-time lattice is not built");
    require(lambda * (psi0.sup + b_w) <= 700.0,
            "weight exponent exceeds double range; lower the sharpness or "
            "the offsets");

    ParabolicWeights wt;
    wt.lambda = lambda;
    wt.a_w = a_w;
    wt.b_w = b_w;
    wt.psi_sup = psi0.sup;
    wt.k_top = std::exp(lambda * (psi0.sup + b_w));
    wt.tau = tau;
    wt.psi0 = psi0;
    tabulate_tables(cs, wt.psi0, lambda, a_w, wt);
    return wt;
}

RegionSelection select_regions(const ParabolicWeights& wt,
                               const NestedSubdomains& ns)
{
    const auto& f = wt.psi0;
    const int n = static_cast<int>(f.member.size());
    require(static_cast<int>(ns.collar_member[0].size()) == n,
            "subdomains built on another section");
    RegionSelection sel;

    double ring_min = kInf, e_ring_min = kInf;
    int ring_count = 0;
    for (int v = 0; v < n; ++v)
    {
        if (!ns.collar_member[2][v] || ns.collar_member[3][v])
            continue;
        require(f.member[v] != 0, "mid-collar ring leaves the profile carrier");
        ring_min = std::min(ring_min, f.value[v]);
        e_ring_min = std::min(e_ring_min, wt.E[v]);
        ++ring_count;
    }
    require(ring_count > 0, "mid-collar ring is empty on this lattice");
    sel.beta0 = 0.5 * ring_min;
    require(sel.beta0 > 0,
            "profile floor over the mid-collar ring must be positive");

    sel.sleeve.assign(n, 0);
    double amax = -kInf;
    for (int v = 0; v < n; ++v)
    {
        const bool in0 = ns.collar_member[0][v] || ns.inner_boundary[v];
        if (!in0 || ns.collar_member[1][v])
            continue;
        if (!(f.value[v] <= sel.beta0))
            continue;
        sel.sleeve[v] = 1;
        ++sel.sleeve_count;
        amax = std::max(amax, wt.E[v] - wt.k_top); // alpha at tau = 0
    }
    require(sel.sleeve_count > 0, "commutator sleeve is empty");
    for (int v = 0; v < n; ++v)
        if (ns.inner_boundary[v])
            require(sel.sleeve[v] != 0,
                    "inner collar edge must lie inside the commutator sleeve");
    sel.alpha_max_on_sleeve = amax;

    sel.mu1 = wt.k_top - std::exp(wt.lambda * (sel.beta0 + wt.a_w));
    require(sel.mu1 > 0, "sleeve weight margin must be positive");
    require(sel.alpha_max_on_sleeve <= -sel.mu1 * (1.0 - 1e-12),
            "sleeve weight fails to clear its margin");

    sel.epsilon = 0.0;
    for (int i = 1; i <= 9; ++i)
    {
        const double eps = 0.1 * i;
        const double mu2
            = (wt.k_top - e_ring_min) / ParabolicWeights::ell(eps);
        if (mu2 < sel.mu1)
        {
            sel.epsilon = eps;
            sel.mu2 = mu2;
            break;
        }
    }
    require(sel.epsilon > 0,
            "no window half-width on the ladder keeps the ring weight "
            "below the sleeve margin");
    return sel;
}

LemmaA1Report lemma_A1_scan(const CrossSection& cs,
                            const ParabolicWeights& wt,
                            const NestedSubdomains& ns,
                            std::span<const double> lambdas,
                            double tau_window,
                            int n_tau_samples,
                            int n_xi,
                            std::uint64_t seed)
{
    require(!lambdas.empty(), "sharpness grid is empty");
    require(tau_window > 0 && tau_window < 1, "tau window must lie in (0,1)");
    require(n_tau_samples >= 2, "need at least two tau samples");
    require(n_xi >= 0, "direction count must be nonnegative");

    const std::vector<char> unknown = collar_unknown_mask(cs, ns);
    std::vector<int> scan;
    for (int v = 0; v < cs.node_count(); ++v)
        if (unknown[v])
            scan.push_back(v);
    require(!scan.empty(), "collar carries no scan nodes");

    std::vector<std::array<double, 2>> xis;
    xis.push_back({1.0, 0.0});
    if (cs.dim() == 2)
    {
        xis.push_back({0.0, 1.0});
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> angle(0.0, 2.0 * pi);
        for (int i = 0; i < n_xi; ++i)
        {
            const double th = angle(rng);
            xis.push_back({std::cos(th), std::sin(th)});
        }
    }

    LemmaA1Report rep;
    rep.tau_window = tau_window;
    rep.n_tau_samples = n_tau_samples;

    ParabolicWeights work = wt;
    for (const double lam : lambdas)
    {
        require(lam > 0, "sharpness grid entries must be positive");
        require(lam * (wt.psi_sup + wt.b_w) <= 700.0,
                "weight exponent exceeds double range on the sharpness grid");
        work.lambda = lam;
        work.k_top = std::exp(lam * (wt.psi_sup + wt.b_w));
        tabulate_tables(cs, work.psi0, lam, wt.a_w, work);

        LemmaA1Row row;
        row.lambda = lam;
        double c1 = kInf, c6 = kInf;
        double m2 = 0, m2b = 0, m3 = 0, m4 = 0, m5 = 0;
        const double l2 = lam * lam;
        const double l4 = l2 * l2;
        for (const int v : scan)
        {
            if (work.deriv_depth[v] < 1)
            {
                ++row.excluded_second;
                ++row.excluded_fourth;
                continue;
            }
            const bool depth2 = work.deriv_depth[v] >= 2;
            if (!depth2)
                ++row.excluded_fourth;
            const double E = work.E[v];
            const double kt = work.k_top;
            const auto& gE = work.gradE[v];
            const auto& hE = work.hessE[v];
            const double ghg = hE[0] * gE[0] * gE[0]
                               + 2.0 * hE[1] * gE[0] * gE[1]
                               + hE[2] * gE[1] * gE[1];
            const double ge2 = gE[0] * gE[0] + gE[1] * gE[1];
            for (int it = 0; it < n_tau_samples; ++it)
            {
                const double t = -tau_window
                                 + 2.0 * tau_window * it / (n_tau_samples - 1);
                const double g = 1.0 / ParabolicWeights::ell(t);
                const double phi = E * g;
                const double p2 = phi * phi;
                const double p3 = p2 * phi;
                const double g2 = g * g;
                const double g3 = g2 * g;
                c1 = std::min(c1, ghg * g3 / (l4 * p3));
                m2 = std::max(m2, std::abs(work.lapE[v]) * g / (l2 * p2));
                if (depth2)
                    m2b = std::max(m2b,
                                   std::abs(work.bilapE[v]) * g / (l4 * p3));
                const double dta = (E - kt) * 2.0 * t * g2;
                const double d2ta = (E - kt) * (2.0 * g2 + 8.0 * t * t * g3);
                m3 = std::max(
                    m3, std::abs(dta * work.lapE[v] * g) / (l2 * p3));
                m4 = std::max(m4, std::abs(d2ta) / p3);
                m5 = std::max(m5,
                              std::abs(ge2 * 2.0 * t * g3) / (l2 * p3));
            }
            // The coercivity ratio carries the same time factor above and
            // below, so one evaluation per direction covers the window.
            for (const auto& xi : xis)
            {
                const double q = hE[0] * xi[0] * xi[0]
                                 + 2.0 * hE[1] * xi[0] * xi[1]
                                 + hE[2] * xi[1] * xi[1];
                c6 = std::min(c6, q / (lam * E));
            }
        }
        row.c_a1 = c1;
        row.cp_a2 = m2;
        row.cp_a2b = m2b;
        row.cp_a3 = m3;
        row.cp_a4 = m4;
        row.cp_a5 = m5;
        row.c_a6 = c6;
        rep.rows.push_back(row);
    }

    rep.lambda0 = std::numeric_limits<double>::quiet_NaN();
    for (int i = static_cast<int>(rep.rows.size()) - 1; i >= 0; --i)
    {
        if (!(rep.rows[i].c_a1 > 0))
            break;
        rep.lambda0 = rep.rows[i].lambda;
    }
    return rep;
}

ParabolicIdentityReport energy_identity_check(const Grid& grid,
                                              const SpaceTimeField& w,
                                              const ParabolicWeights& wt,
                                              const NestedSubdomains& ns,
                                              double sigma,
                                              double h)
{
    const auto& cs = grid.cross_section();
    const int nl = wt.tau.n_levels;
    require(nl >= 5, "transformed-time lattice is not built");
    require(static_cast<int>(w.size()) == grid.n_spatial() * nl,
            "state does not match the lattice");
    require(sigma >= 0, "weight strength must be nonnegative");
    require(h > 0, "time scaling must be positive");
    require(static_cast<int>(wt.psi0.member.size()) == cs.node_count(),
            "weights built on another section");

    const int na = grid.n_axial();
    const std::vector<char> unknown = collar_unknown_mask(cs, ns);
    for (int f = 0; f < grid.n_spatial(); ++f)
    {
        const int v = grid.cs_node_of(f);
        const int ia = grid.axial_of(f);
        if (unknown[v] && ia >= 1 && ia <= na - 2)
            continue;
        for (int k = 0; k < nl; ++k)
            require(detail::is_zero(w[st_index(f, k, nl)]),
                    "conjugated split needs a state vanishing on the wall, "
                    "the inner band, and the caps");
    }

    SpaceTimeField z(w.size(), cplx(0.0, 0.0));
    for (int f = 0; f < grid.n_spatial(); ++f)
    {
        const int v = grid.cs_node_of(f);
        for (int k = 0; k < nl; ++k)
        {
            const cplx wv = w[st_index(f, k, nl)];
            if (detail::is_zero(wv))
                continue;
            z[st_index(f, k, nl)] = std::exp(sigma * wt.alpha(v, k)) * wv;
        }
    }

    const detail::StencilCtx ctx(grid, nl, wt.tau.dtau);
    const double ihh = 1.0 / h;
    double accD = 0, n1 = 0, n2 = 0, cr = 0, gg = 0;
    int count = 0;
    for (int v = 0; v < cs.node_count(); ++v)
    {
        if (!wt.psi0.member[v] || !cs.is_interior(v))
            continue;
        if (wt.deriv_depth[v] < 1)
            continue;
        for (int k = 1; k <= nl - 2; ++k)
        {
            const double t = wt.tau.tau_of(k);
            const double ea = std::exp(sigma * wt.alpha_at(v, t));
            const auto ga = wt.grad_alpha_at(v, t);
            const double gan2 = wt.grad_alpha_norm2_at(v, t);
            const double dta = wt.dtau_alpha_at(v, t);
            const double lap_a = wt.lap_alpha_at(v, t);
            for (int ia = 1; ia <= na - 2; ++ia)
            {
                const int f = grid.flat(v, ia);
                const int st = st_index(f, k, nl);
                const cplx tdz = detail::time_derivative(ctx, z, f, k);
                const auto gz = detail::cs_gradient(ctx, z, f, k);
                const cplx lz = detail::laplacian(ctx, z, f, k);
                const cplx L1
                    = ihh * tdz
                      + 2.0 * sigma * (ga[0] * gz[0] + ga[1] * gz[1]);
                const cplx L2
                    = -lz - sigma * (ihh * dta + sigma * gan2) * z[st];
                const cplx gcons = L1 + L2;
                const cplx fs
                    = ea
                      * (ihh * detail::time_derivative(ctx, w, f, k)
                         - detail::laplacian(ctx, w, f, k));
                const cplx target = fs - sigma * lap_a * z[st];
                const cplx d = gcons - target;
                accD += std::norm(d);
                n1 += std::norm(L1);
                n2 += std::norm(L2);
                cr += 2.0 * std::real(L1 * std::conj(L2));
                gg += std::norm(gcons);
                ++count;
            }
        }
    }

    const double meas = grid.cell_volume() * wt.tau.dtau;
    const double tiny = 1e-300;
    ParabolicIdentityReport rep;
    rep.tau_window = wt.tau.tau_of(nl - 2);
    rep.n_nodes = count;
    rep.g_norm = std::sqrt(gg * meas);
    rep.residual_identity
        = std::sqrt(accD * meas) / std::max(rep.g_norm, tiny);
    rep.residual_parallelogram
        = std::abs(n1 + n2 + cr - gg) / std::max(n1 + n2 + gg, tiny);
    return rep;
}

ParabolicRatioTable carleman_ratio_parabolic(const Grid& grid,
                                             const SpaceTimeField& w,
                                             const ParabolicWeights& wt,
                                             const NestedSubdomains& ns,
                                             std::span<const double> sigmas,
                                             double h,
                                             const ObservationStrip& strip,
                                             const ScalarField* p1)
{
    const auto& cs = grid.cross_section();
    const int nl = wt.tau.n_levels;
    require(nl >= 5, "transformed-time lattice is not built");
    require(static_cast<int>(w.size()) == grid.n_spatial() * nl,
            "state does not match the lattice");
    require(h > 0, "time scaling must be positive");
    require(!sigmas.empty(), "weight strength sweep is empty");
    require(!strip.nodes.empty(), "observation strip is empty");
    if (p1)
        require(static_cast<int>(p1->size()) == grid.n_spatial(),
                "potential sampled on another grid");

    const std::vector<char> unknown = collar_unknown_mask(cs, ns);
    std::vector<char> opmask(cs.node_count(), 0);
    int n_op = 0;
    for (int v = 0; v < cs.node_count(); ++v)
    {
        if (!wt.psi0.member[v] || !cs.is_interior(v))
            continue;
        bool ok = true;
        for (int axis = 0; axis < cs.dim() && ok; ++axis)
            for (int dir : {-1, +1})
            {
                const int nb = cs.neighbor(v, axis, dir);
                if (nb < 0 || !wt.psi0.member[nb])
                {
                    ok = false;
                    break;
                }
            }
        if (ok)
        {
            opmask[v] = 1;
            ++n_op;
        }
    }

    // Wall nodes overhanging a curved section carry slightly positive alpha;
    // cap the exponent before sweeping.
    double amax0 = -kInf;
    for (int v = 0; v < cs.node_count(); ++v)
        if (wt.psi0.member[v])
            amax0 = std::max(amax0, wt.E[v] - wt.k_top);
    const double smax = *std::max_element(sigmas.begin(), sigmas.end());
    if (amax0 > 0)
    {
        const double worst
            = amax0 / ParabolicWeights::ell(wt.tau.tau_of(0));
        require(2.0 * smax * worst <= 700.0,
                "boundary weight exceeds double range at overhanging wall "
                "nodes; lower the strength or the sharpness");
    }

    struct Ray
    {
        int b = -1;
        double meas = 0;
        detail::CsSample s1, s2;
    };
    std::vector<Ray> rays;
    const double hh = cs.spacing();
    for (std::size_t i = 0; i < strip.nodes.size(); ++i)
    {
        Ray r;
        r.b = strip.nodes[i];
        r.meas = strip.measure[i];
        const auto x = cs.coord(r.b);
        const auto nu = strip.normals[i];
        r.s1 = detail::make_cs_sample(cs,
                                      {x[0] - hh * nu[0], x[1] - hh * nu[1]});
        r.s2 = detail::make_cs_sample(
            cs, {x[0] - 2.0 * hh * nu[0], x[1] - 2.0 * hh * nu[1]});
        rays.push_back(r);
    }

    const detail::StencilCtx ctx(grid, nl, wt.tau.dtau);
    const double ihh = 1.0 / h;
    const int na = grid.n_axial();
    const double voxel = grid.cell_volume() * wt.tau.dtau;
    const double harea = grid.axial_spacing() * wt.tau.dtau;

    ParabolicRatioTable table;
    table.tau_window = wt.tau.tau_of(nl - 2);
    table.n_op_nodes = n_op;
    table.n_boundary_nodes = static_cast<int>(rays.size());

    for (const double s : sigmas)
    {
        require(s >= 0, "weight strengths must be nonnegative");
        ParabolicRatioRow row;
        row.sigma = s;
        double grad2 = 0, val2 = 0, op2 = 0, btr = 0;
        for (int v = 0; v < cs.node_count(); ++v)
        {
            const bool lhs_here = unknown[v] != 0;
            const bool op_here = opmask[v] != 0;
            if (!lhs_here && !op_here)
                continue;
            for (int k = 1; k <= nl - 2; ++k)
            {
                const double t = wt.tau.tau_of(k);
                const double ew = std::exp(2.0 * s * wt.alpha_at(v, t));
                for (int ia = 1; ia <= na - 2; ++ia)
                {
                    const int f = grid.flat(v, ia);
                    const int st = st_index(f, k, nl);
                    if (lhs_here)
                    {
                        const auto gw = detail::cs_gradient(ctx, w, f, k);
                        grad2 += ew * (std::norm(gw[0]) + std::norm(gw[1]));
                        val2 += ew * std::norm(w[st]);
                    }
                    if (op_here)
                    {
                        cplx Lw = ihh * detail::time_derivative(ctx, w, f, k)
                                  - detail::laplacian(ctx, w, f, k);
                        if (p1)
                            Lw += (*p1)[f] * w[st];
                        op2 += ew * std::norm(Lw);
                    }
                }
            }
        }
        for (const auto& r : rays)
        {
            for (int k = 1; k <= nl - 2; ++k)
            {
                const double t = wt.tau.tau_of(k);
                const double wgt = wt.phi0_at(r.b, t)
                                   * std::exp(2.0 * s * wt.alpha_at(r.b, t))
                                   * r.meas;
                for (int ia = 1; ia <= na - 2; ++ia)
                {
                    const cplx ub
                        = w[st_index(grid.flat(r.b, ia), k, nl)];
                    const cplx u1 = sample_state(grid, w, r.s1, ia, k, nl);
                    const cplx u2 = sample_state(grid, w, r.s2, ia, k, nl);
                    const cplx dn
                        = (3.0 * ub - 4.0 * u1 + u2) / (2.0 * hh);
                    btr += wgt * std::norm(dn);
                }
            }
        }
        row.lhs_grad = s * grad2 * voxel;
        row.lhs_val = s * s * s * val2 * voxel;
        row.lhs = row.lhs_grad + row.lhs_val;
        row.rhs_op = op2 * voxel;
        row.rhs_boundary = s * btr * harea;
        row.rhs = row.rhs_op + row.rhs_boundary;
        if (row.rhs > 0)
            row.ratio = row.lhs / row.rhs;
        else if (row.lhs > 0)
            row.violation_candidate = true;
        else
            row.degenerate = true;
        table.rows.push_back(row);
    }

    std::vector<double> ss, rr;
    for (const auto& row : table.rows)
    {
        ss.push_back(row.sigma);
        rr.push_back(row.degenerate || row.violation_candidate ? -1.0
                                                               : row.ratio);
    }
    table.flattest = find_flattest_decade(ss, rr);
    return table;
}

} // namespace wgstab
