//---------------------------------------------------------------------------//
// Copyright wgstab contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//

#include "wgstab/fbi.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

namespace wgstab
{

namespace
{

//! x^(2m) through the square, exact sign handling for even powers.
double pow_even(double x, int m)
{
    double b = x * x;
    double r = 1.0;
    for (int i = 0; i < m; ++i)
        r *= b;
    return r;
}

//! Relative endpoint tolerance of the spectral quadrature.
constexpr double trunc_tol = 1e-12;

//! Smallest half-range X >= base with integrand magnitude at the endpoints
//! below trunc_tol relative to the interior peak. The magnitude exponent is
//! a xi - xi^{2m} with a = -Im z * gamma^rho; only the endpoint on the
//! growing side matters.
double required_half_width(double abs_a, int m, double base)
{
    double peak = 0.0;
    if (abs_a > 0.0)
    {
        const double xs
            = std::pow(abs_a / (2.0 * m), 1.0 / (2.0 * m - 1.0));
        peak = abs_a * xs - pow_even(xs, m);
    }
    const double drop = peak - std::log(trunc_tol);
    double x = base;
    while (pow_even(x, m) - abs_a * x < drop)
    {
        x += 0.25;
        require(x <= 64.0,
                "spectral quadrature range exceeded its cap; |Im z| is too "
                "large for this kernel order");
    }
    return x;
}

} // namespace

int default_fbi_m(double mu, int n_derivs)
{
    require(mu > 0.0 && mu < 1.0, "rate exponent mu must lie in (0, 1)");
    require(n_derivs >= 1, "at least one derivative order is required");
    int m = (n_derivs + 1) / 2;
    if (m < 1)
        m = 1;
    while (1.0 - 1.0 / (2.0 * m) <= mu)
        ++m;
    return m;
}

double FbiKernel::scale() const
{
    return std::pow(gamma, rho);
}

cplx FbiKernel::eval(cplx z) const
{
    const double g = scale();
    const double t = z.real();
    const double y = z.imag();
    const double a = -y * g;
    const double half = required_half_width(std::abs(a), m, xi_half);
    const int n_half = static_cast<int>(std::lround(half / dxi));

    // Symmetric pairing keeps the real axis exactly real: the odd imaginary
    // parts multiply e^{-a xi} - e^{a xi}, which is an exact zero at a = 0.
    double sr = 1.0;
    double si = 0.0;
    for (int i = 1; i <= n_half; ++i)
    {
        const double xi = i * dxi;
        const double d = std::exp(-pow_even(xi, m));
        if (d == 0.0)
            break;
        const double c = std::cos(t * g * xi);
        const double s = std::sin(t * g * xi);
        const double ep = std::exp(a * xi);
        const double em = std::exp(-a * xi);
        const double w = i == n_half ? 0.5 : 1.0;
        sr += w * d * c * (ep + em);
        si += w * d * s * (ep - em);
    }
    const double pref = g * dxi / (2.0 * pi);
    return {pref * sr, pref * si};
}

double FbiKernel::fhat(double zeta) const
{
    return std::exp(-pow_even(std::abs(zeta) / scale(), m));
}

FbiKernel eval_kernel(double gamma,
                      int m,
                      std::span<const double> re_grid,
                      std::span<const double> im_grid,
                      double mu)
{
    require(gamma > 1.0, "spectral parameter gamma must exceed 1");
    require(m >= 1, "kernel order m must be a positive integer");
    FbiKernel k;
    k.gamma = gamma;
    k.m = m;
    k.rho = 1.0 - 1.0 / (2.0 * m);
    k.mu = mu;
    require(k.rho > mu,
            "kernel order too small: 1 - 1/(2m) must exceed the rate "
            "exponent mu");

    k.re.assign(re_grid.begin(), re_grid.end());
    k.im.assign(im_grid.begin(), im_grid.end());
    k.xi_half_used = k.xi_half;
    const double g = k.scale();
    for (double y : k.im)
        k.xi_half_used = std::max(
            k.xi_half_used, required_half_width(std::abs(y) * g, m, k.xi_half));
    k.widened = k.xi_half_used > k.xi_half;

    k.table.resize(k.re.size() * k.im.size());
    for (std::size_t i = 0; i < k.re.size(); ++i)
        for (std::size_t j = 0; j < k.im.size(); ++j)
            k.table[i * k.im.size() + j] = k.eval({k.re[i], k.im[j]});
    return k;
}

double kernel_real_mass(const FbiKernel& k, double half_width, int n_points)
{
    require(half_width > 0.0 && n_points >= 3,
            "real-axis mass needs a positive width and at least 3 points");
    const double dt = 2.0 * half_width / (n_points - 1);
    double acc = 0.0;
    for (int i = 0; i < n_points; ++i)
    {
        const double t = -half_width + dt * i;
        acc += trapezoid_weight(i, n_points) * k.eval({t, 0.0}).real();
    }
    return acc * dt;
}

KernelBoundReport verify_kernel_bounds(const FbiKernel& k,
                                       double C4,
                                       double x_min)
{
    require(!k.table.empty(), "kernel bounds need a tabulated kernel");
    require(C4 > 0.0, "cone half-slope must be positive");
    require(x_min > 0.0, "comparison-scale threshold must be positive");
    int axis_row = -1;
    for (std::size_t j = 0; j < k.im.size(); ++j)
        if (k.im[j] == 0.0)
            axis_row = static_cast<int>(j);
    require(axis_row >= 0, "kernel tabulation must include the real axis");

    KernelBoundReport r;
    r.C4 = C4;
    const double g = k.scale();
    const double inv_rho = 1.0 / k.rho;

    double peak = 0.0;
    for (std::size_t i = 0; i < k.re.size(); ++i)
        peak = std::max(peak, std::abs(k.at(static_cast<int>(i), axis_row)));
    require(peak > 0.0, "kernel vanishes on the tabulated real axis");
    r.C1 = peak / g;
    const double log_peak = std::log(peak);

    // Growth envelope: tightest node-wise constant over off-axis nodes with
    // comparison scale gamma |Im z|^{1/rho} at least x_min.
    double c2 = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k.re.size(); ++i)
        for (std::size_t j = 0; j < k.im.size(); ++j)
        {
            const double y = k.im[j];
            if (y == 0.0)
                continue;
            const double x = k.gamma * std::pow(std::abs(y), inv_rho);
            const double mag
                = std::abs(k.at(static_cast<int>(i), static_cast<int>(j)));
            if (x < x_min || mag <= 0.0)
                continue;
            c2 = std::max(c2, (std::log(mag) - log_peak) / x);
            ++r.n_growth_nodes;
        }
    r.growth_fit_ok = r.n_growth_nodes > 0 && c2 > 0.0;
    r.C2 = r.growth_fit_ok ? c2 : 0.0;

    // Decay inside the cone |Im z| <= C4 |Re z|: tightest node-wise
    // constant, again over nodes with scale at least x_min.
    double c3 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k.re.size(); ++i)
        for (std::size_t j = 0; j < k.im.size(); ++j)
        {
            const double t = k.re[i];
            const double y = k.im[j];
            if (std::abs(y) > C4 * std::abs(t))
                continue;
            const double x = k.gamma * std::pow(std::abs(t), inv_rho);
            const double mag
                = std::abs(k.at(static_cast<int>(i), static_cast<int>(j)));
            if (x < x_min || mag <= 0.0)
                continue;
            c3 = std::min(c3, (log_peak - std::log(mag)) / x);
            ++r.n_cone_nodes;
        }
    r.decay_fit_ok = r.n_cone_nodes > 0 && c3 > 0.0
                     && c3 < std::numeric_limits<double>::infinity();
    r.C3_cone = r.decay_fit_ok ? c3 : 0.0;

    // Margins of the asserted node-wise bounds with the fitted constants.
    double gm = std::numeric_limits<double>::infinity();
    double dm = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k.re.size(); ++i)
        for (std::size_t j = 0; j < k.im.size(); ++j)
        {
            const double t = k.re[i];
            const double y = k.im[j];
            const double mag
                = std::abs(k.at(static_cast<int>(i), static_cast<int>(j)));
            if (mag <= 0.0)
                continue;
            const double lm = std::log(mag);
            if (y != 0.0 && r.growth_fit_ok)
            {
                const double x = k.gamma * std::pow(std::abs(y), inv_rho);
                if (x >= x_min)
                    gm = std::min(gm, log_peak + r.C2 * x - lm);
            }
            if (std::abs(y) <= C4 * std::abs(t) && r.decay_fit_ok)
            {
                const double x = k.gamma * std::pow(std::abs(t), inv_rho);
                if (x >= x_min)
                    dm = std::min(dm, (log_peak - r.C3_cone * x) - lm);
            }
        }
    r.growth_margin = std::isfinite(gm) ? gm : 0.0;
    r.decay_margin = std::isfinite(dm) ? dm : 0.0;

    // Real-axis decay fit through the envelope crests; a monotone profile
    // has no interior crest and falls back to every admissible node.
    std::vector<double> xs, ys, ts;
    const auto axis_mag = [&](std::size_t i) {
        return std::abs(k.at(static_cast<int>(i), axis_row));
    };
    for (std::size_t i = 1; i + 1 < k.re.size(); ++i)
    {
        if (k.re[i] <= 0.0)
            continue;
        const double mag = axis_mag(i);
        if (mag <= 0.0 || mag < axis_mag(i - 1) || mag < axis_mag(i + 1))
            continue;
        const double x = k.gamma * std::pow(k.re[i], inv_rho);
        if (x < x_min || mag >= peak)
            continue;
        xs.push_back(x);
        ys.push_back(log_peak - std::log(mag));
        ts.push_back(k.re[i]);
    }
    if (xs.size() < 3)
    {
        xs.clear();
        ys.clear();
        ts.clear();
        for (std::size_t i = 0; i < k.re.size(); ++i)
        {
            const double t = k.re[i];
            const double mag = axis_mag(i);
            if (t <= 0.0 || mag <= 0.0 || mag >= peak)
                continue;
            const double x = k.gamma * std::pow(t, inv_rho);
            if (x < x_min)
                continue;
            xs.push_back(x);
            ys.push_back(log_peak - std::log(mag));
            ts.push_back(t);
        }
    }
    if (xs.size() >= 3)
    {
        const LinearFit lin = fit_line(xs, ys);
        r.C3_axis = lin.slope;
        const LinearFit pw = fit_loglog(ts, ys);
        r.decay_power = pw.slope;
        r.decay_r2 = pw.r2;
        if (lin.slope <= 0.0)
            r.decay_fit_ok = false;
    }
    else
        r.decay_fit_ok = false;
    return r;
}

double TimeCutoff::theta(double eta) const
{
    const double a = std::abs(eta);
    if (a <= 2.0 * T0)
        return 1.0;
    if (a >= 3.0 * T0)
        return 0.0;
    const double s = (3.0 * T0 - a) / T0;
    const double gl = std::exp(-1.0 / s);
    const double gr = std::exp(-1.0 / (1.0 - s));
    return gl / (gl + gr);
}

double TimeCutoff::dtheta(double eta) const
{
    const double a = std::abs(eta);
    if (a <= 2.0 * T0 || a >= 3.0 * T0)
        return 0.0;
    const double s = (3.0 * T0 - a) / T0;
    const double gl = std::exp(-1.0 / s);
    const double gr = std::exp(-1.0 / (1.0 - s));
    const double den = gl + gr;
    const double ds = gl * gr * (1.0 / (s * s) + 1.0 / ((1.0 - s) * (1.0 - s)))
                      / (den * den);
    return ds * (eta > 0.0 ? -1.0 : 1.0) / T0;
}

TimeCutoff build_time_cutoff(double T, double T0)
{
    require(T > 0.0, "time horizon must be positive");
    require(T0 > T / 3.0,
            "cutoff scale must exceed a third of the horizon so the "
            "compression factor stays below 1");
    TimeCutoff c;
    c.T = T;
    c.T0 = T0;
    c.h = T / (3.0 * T0);
    return c;
}

double default_eta_spacing(const FbiKernel& k, const TimeCutoff& cut)
{
    return std::min(cut.T0 / 8.0, pi / (4.0 * k.scale() + 32.0));
}

namespace
{

struct EtaLattice
{
    double spacing = 0;
    int n_half = 0; //!< nodes are half * (j - n_half) / n_half, j in [0, 2n_half]
    double half = 0;

    int count() const { return 2 * n_half + 1; }
    double node(int j) const { return half * (j - n_half) / n_half; }
    double weight(int j) const { return trapezoid_weight(j, count()); }
};

EtaLattice make_eta_lattice(const FbiKernel& k,
                            const TimeCutoff& cut,
                            double deta)
{
    if (deta <= 0.0)
        deta = default_eta_spacing(k, cut);
    EtaLattice l;
    l.half = 3.0 * cut.T0;
    l.n_half = std::max(2, static_cast<int>(std::ceil(l.half / deta - 1e-12)));
    l.spacing = l.half / l.n_half;
    return l;
}

} // namespace

SpaceTimeField partial_fbi(const TrajectorySource& w,
                           int n_space,
                           const FbiKernel& k,
                           const TimeCutoff& cut,
                           double t,
                           const TauGrid& tau,
                           double deta)
{
    require(n_space > 0, "transform needs at least one spatial node");
    require(std::abs(t) < cut.T0,
            "evaluation time outside the transform strip (-T0, T0)");
    const EtaLattice lat = make_eta_lattice(k, cut, deta);
    const int nl = tau.n_levels;
    SpaceTimeField field(static_cast<std::size_t>(n_space) * nl, cplx(0, 0));

    std::vector<cplx> coeff(static_cast<std::size_t>(nl) * lat.count());
    for (int kk = 0; kk < nl; ++kk)
    {
        const cplx z(t, -tau.tau_of(kk));
        for (int j = 0; j < lat.count(); ++j)
        {
            const double eta = lat.node(j);
            const double th = cut.theta(eta);
            coeff[static_cast<std::size_t>(kk) * lat.count() + j]
                = th == 0.0 ? cplx(0, 0)
                            : k.eval(z - eta) * (th * lat.weight(j)
                                                 * lat.spacing);
        }
    }
    std::vector<cplx> sample(n_space);
    for (int j = 0; j < lat.count(); ++j)
    {
        const double eta = lat.node(j);
        if (cut.theta(eta) == 0.0)
            continue;
        for (int f = 0; f < n_space; ++f)
            sample[f] = w(f, cut.h * eta);
        for (int kk = 0; kk < nl; ++kk)
        {
            const cplx c = coeff[static_cast<std::size_t>(kk) * lat.count() + j];
            for (int f = 0; f < n_space; ++f)
                field[st_index(f, kk, nl)] += c * sample[f];
        }
    }
    return field;
}

FbiField build_fbi_field(const TrajectorySource& w,
                         int n_space,
                         const FbiKernel& k,
                         const TimeCutoff& cut,
                         std::span<const double> t_grid,
                         const TauGrid& tau,
                         double deta)
{
    require(!t_grid.empty(), "transform needs at least one evaluation time");
    for (std::size_t j = 1; j < t_grid.size(); ++j)
        require(t_grid[j] > t_grid[j - 1],
                "evaluation times must be strictly increasing");
    FbiField out;
    out.t.assign(t_grid.begin(), t_grid.end());
    out.tau = tau;
    out.h = cut.h;
    out.T0 = cut.T0;
    out.n_space = n_space;
    out.slice.reserve(t_grid.size());
    for (double t : t_grid)
        out.slice.push_back(partial_fbi(w, n_space, k, cut, t, tau, deta));
    return out;
}

FbiResidualReport parabolic_residual(const Grid& grid,
                                     const NestedSubdomains& ns,
                                     const ScalarField& chi,
                                     const TrajectorySource& v,
                                     const ScalarField* p1,
                                     const FbiKernel& k,
                                     const TimeCutoff& cut,
                                     double t,
                                     const TauGrid& tau,
                                     double deta,
                                     double tau_max)
{
    const CrossSection& cs = grid.cross_section();
    require(tau_max > 0.0, "tau band must be positive");
    require(static_cast<int>(chi.size()) == cs.node_count(),
            "cross-section cutoff has the wrong node count");
    for (int node = 0; node < cs.node_count(); ++node)
    {
        require(chi[node] >= 0.0 && chi[node] <= 1.0,
                "cutoff values must lie in [0, 1]");
        if (chi[node] != 1.0)
            require(cs.is_interior(node) && !ns.collar_member[1][node],
                    "cutoff support inconsistent with the nested regions: it "
                    "must be exactly 1 on the wall and on the second collar "
                    "region, varying only between that region and the inner "
                    "band");
    }
    require(std::abs(t) < cut.T0,
            "evaluation time outside the transform strip (-T0, T0)");
    if (p1)
        require(static_cast<int>(p1->size()) == grid.n_spatial(),
                "potential field has the wrong node count");

    const EtaLattice lat = make_eta_lattice(k, cut, deta);
    const int nl = tau.n_levels;
    const int nsp = grid.n_spatial();
    const int na = grid.n_axial();

    // One trajectory slice per quadrature node; theta' only reads the
    // annulus but the plain transform reads everything, so sample once.
    std::vector<std::vector<cplx>> traj(lat.count());
    for (int j = 0; j < lat.count(); ++j)
    {
        traj[j].resize(nsp);
        const double tp = cut.h * lat.node(j);
        for (int f = 0; f < nsp; ++f)
            traj[j][f] = v(f, tp);
    }

    SpaceTimeField vfield(static_cast<std::size_t>(nsp) * nl, cplx(0, 0));
    SpaceTimeField wfield(vfield.size(), cplx(0, 0));
    SpaceTimeField bfield(vfield.size(), cplx(0, 0));
    const cplx bpref = cplx(0, -1.0) / cut.h;
    for (int kk = 0; kk < nl; ++kk)
    {
        const cplx z(t, -tau.tau_of(kk));
        for (int j = 0; j < lat.count(); ++j)
        {
            const double eta = lat.node(j);
            const double th = cut.theta(eta);
            const double dth = cut.dtheta(eta);
            if (th == 0.0 && dth == 0.0)
                continue;
            const cplx base = k.eval(z - eta) * (lat.weight(j) * lat.spacing);
            const cplx cv = base * th;
            const cplx cb = bpref * base * dth;
            for (int f = 0; f < nsp; ++f)
            {
                vfield[st_index(f, kk, nl)] += cv * traj[j][f];
                if (dth != 0.0)
                    bfield[st_index(f, kk, nl)] += cb * traj[j][f];
            }
        }
    }
    // The cutoff is time-independent, so the transform of chi v is chi times
    // the transform of v; chi == 1 keeps the fields bitwise identical and
    // the commutator exactly zero.
    for (int f = 0; f < nsp; ++f)
    {
        const double c = chi[grid.cs_node_of(f)];
        for (int kk = 0; kk < nl; ++kk)
        {
            wfield[st_index(f, kk, nl)] = c * vfield[st_index(f, kk, nl)];
            bfield[st_index(f, kk, nl)] *= c;
        }
    }

    FbiResidualReport rep;
    const detail::StencilCtx ctx(grid, nl, tau.dtau);
    const double vol = grid.cell_volume() * tau.dtau;
    double sr = 0, sl = 0, sa = 0, sb = 0;
    for (int f = 0; f < nsp; ++f)
    {
        const int node = grid.cs_node_of(f);
        const int ia = grid.axial_of(f);
        if (!cs.is_interior(node) || ia < 1 || ia > na - 2)
            continue;
        const double c = chi[node];
        for (int kk = 1; kk <= nl - 2; ++kk)
        {
            if (std::abs(tau.tau_of(kk)) > tau_max + 1e-12)
                continue;
            const int st = st_index(f, kk, nl);
            const cplx lapw = detail::laplacian(ctx, wfield, f, kk);
            const cplx lapv = detail::laplacian(ctx, vfield, f, kk);
            cplx lhs = detail::time_derivative(ctx, wfield, f, kk) / cut.h
                       - lapw;
            if (p1)
                lhs += (*p1)[f] * wfield[st];
            const cplx a = -(lapw - c * lapv);
            const cplx res = lhs - a - bfield[st];
            sr += std::norm(res) * vol;
            sl += std::norm(lhs) * vol;
            sa += std::norm(a) * vol;
            sb += std::norm(bfield[st]) * vol;
            rep.a_max = std::max(rep.a_max, std::abs(a));
            ++rep.n_nodes;
        }
    }
    rep.res_norm = std::sqrt(sr);
    rep.lhs_norm = std::sqrt(sl);
    rep.a_norm = std::sqrt(sa);
    rep.b_norm = std::sqrt(sb);
    return rep;
}

namespace
{

//! Kernel sampled at wrapped lattice displacements, scaled by the spacing.
std::vector<cplx> kernel_row(const FbiKernel& k, double L, int n)
{
    const double d = 2.0 * L / n;
    std::vector<cplx> row(n);
    for (int o = 0; o < n; ++o)
    {
        const double delta = (o <= n / 2 ? o : o - n) * d;
        row[o] = k.eval({delta, 0.0}) * d;
    }
    return row;
}

constexpr int min_signal_samples = 64;

} // namespace

double mode_attenuation(
    double gamma, int m, double mu, double zeta0, double L, int n)
{
    require(n >= min_signal_samples,
            "spectral estimate needs at least 64 samples");
    require(L > 0.0, "signal half-length must be positive");
    const double d = 2.0 * L / n;
    require(std::abs(zeta0) < pi / d,
            "mode frequency beyond the lattice Nyquist limit");
    const FbiKernel k = eval_kernel(gamma, m, {}, {}, mu);
    const double zeta = pi * std::round(zeta0 * L / pi) / L;
    const std::vector<cplx> row = kernel_row(k, L, n);
    cplx sym(0, 0);
    for (int o = 0; o < n; ++o)
    {
        const double delta = (o <= n / 2 ? o : o - n) * (2.0 * L / n);
        sym += row[o] * std::exp(cplx(0, -zeta * delta));
    }
    return std::abs(cplx(1, 0) - sym);
}

RateReport approximation_rate(const TimeSignal& wtilde,
                              const TimeCutoff& cut,
                              std::span<const double> gammas,
                              int m,
                              double mu,
                              double L,
                              int n)
{
    require(n >= min_signal_samples,
            "spectral estimate needs at least 64 samples");
    require(L > 3.0 * cut.T0,
            "signal lattice must cover the cutoff support: L > 3 T0");
    require(gammas.size() >= 2, "rate fit needs at least two gamma values");

    const double d = 2.0 * L / n;
    std::vector<cplx> s(n);
    for (int j = 0; j < n; ++j)
    {
        const double eta = -L + d * j;
        const double th = cut.theta(eta);
        s[j] = th == 0.0 ? cplx(0, 0) : th * wtilde(eta);
    }
    RateReport rep;
    double nrm = 0;
    for (const cplx& v : s)
        nrm += std::norm(v);
    rep.signal_norm = std::sqrt(d * nrm);
    require(rep.signal_norm > 0.0, "signal vanishes after the cutoff");

    std::vector<cplx> shat(n, cplx(0, 0));
    for (int kk = 0; kk < n; ++kk)
        for (int j = 0; j < n; ++j)
            shat[kk] += s[j] * std::polar(1.0, -2.0 * pi * j * kk / n);

    std::vector<double> gs, es;
    for (double gamma : gammas)
    {
        const FbiKernel k = eval_kernel(gamma, m, {}, {}, mu);
        const std::vector<cplx> row = kernel_row(k, L, n);
        double acc_t = 0;
        for (int i = 0; i < n; ++i)
        {
            cplx conv(0, 0);
            for (int j = 0; j < n; ++j)
                conv += row[(i - j + n) % n] * s[j];
            acc_t += std::norm(s[i] - conv);
        }
        double acc_f = 0;
        for (int kk = 0; kk < n; ++kk)
        {
            const int ks = kk <= n / 2 ? kk : kk - n;
            const double zeta = pi * ks / L;
            acc_f += std::norm((1.0 - k.fhat(zeta)) * shat[kk]);
        }
        RateRow r;
        r.gamma = gamma;
        r.err_time = std::sqrt(d * acc_t);
        r.err_freq = std::sqrt(d * acc_f / n);
        rep.rows.push_back(r);
        rep.plancherel_gap
            = std::max(rep.plancherel_gap, std::abs(r.err_time - r.err_freq));
        if (r.err_time > 0.0)
        {
            gs.push_back(gamma);
            es.push_back(r.err_time);
        }
    }
    if (gs.size() >= 2)
    {
        const LinearFit fit = fit_loglog(gs, es);
        rep.slope = fit.slope;
        rep.r2 = fit.r2;
    }
    return rep;
}

namespace
{

//! Bilinear value of the field table at (t, tau); t brackets located by
//! search, tau brackets on the uniform interior lattice.
cplx field_interp(const FbiField& fd, int f, double t, double tau)
{
    const int nt = static_cast<int>(fd.t.size());
    const int nl = fd.tau.n_levels;
    int j = static_cast<int>(std::upper_bound(fd.t.begin(), fd.t.end(), t)
                             - fd.t.begin())
            - 1;
    j = std::clamp(j, 0, nt - 2);
    const double wt = (t - fd.t[j]) / (fd.t[j + 1] - fd.t[j]);
    int kk = static_cast<int>(std::floor((tau - fd.tau.tau_of(0)) / fd.tau.dtau));
    kk = std::clamp(kk, 0, nl - 2);
    const double wk = (tau - fd.tau.tau_of(kk)) / fd.tau.dtau;
    const cplx lo = (1.0 - wt) * fd.slice[j][st_index(f, kk, nl)]
                    + wt * fd.slice[j + 1][st_index(f, kk, nl)];
    const cplx hi = (1.0 - wt) * fd.slice[j][st_index(f, kk + 1, nl)]
                    + wt * fd.slice[j + 1][st_index(f, kk + 1, nl)];
    return (1.0 - wk) * lo + wk * hi;
}

} // namespace

DiscAverageReport cauchy_disc_average(const FbiField& field,
                                      std::span<const int> flats,
                                      double eps,
                                      std::span<const double> kappas,
                                      int n_rho,
                                      int n_phi)
{
    require(eps > 0.0, "disc radius must be positive");
    require(n_rho >= 1 && n_phi >= 4, "disc quadrature too coarse");
    require(field.t.size() >= 2 && field.tau.n_levels >= 2,
            "field rectangle too small for the disc average");
    require(!flats.empty() && !kappas.empty(),
            "disc average needs nodes and centers");
    const double tau_max = std::abs(field.tau.tau_of(0));
    for (double kap : kappas)
    {
        require(std::abs(kap) < field.T0 / 2.0,
                "disc centers must lie in (-T0/2, T0/2)");
        require(kap - eps >= field.t.front() && kap + eps <= field.t.back()
                    && eps <= tau_max,
                "tabulated rectangle cannot contain the disc; enlarge the "
                "time grid or shrink the radius");
    }

    DiscAverageReport rep;
    rep.saturated = true;
    double worst = 0.0;
    rep.min_margin = std::numeric_limits<double>::infinity();
    for (int f : flats)
        for (double kap : kappas)
        {
            const double center = std::norm(field_interp(field, f, kap, 0.0));
            double acc = 0.0;
            for (int i = 0; i < n_rho; ++i)
            {
                const double r = (i + 0.5) * eps / n_rho;
                for (int l = 0; l < n_phi; ++l)
                {
                    const double phi = 2.0 * pi * l / n_phi;
                    acc += std::norm(field_interp(field,
                                                  f,
                                                  kap + r * std::cos(phi),
                                                  -r * std::sin(phi)));
                }
            }
            const double mean = acc / (n_rho * n_phi);
            const double margin = mean - center;
            rep.min_margin = std::min(rep.min_margin, margin);
            rep.scale = std::max(rep.scale, center);
            worst = std::max(worst, center - mean);
            if (std::abs(margin) > 1e-12 * std::max(1.0, center))
                rep.saturated = false;
            ++rep.n_checked;
        }
    rep.max_rel_violation = worst / std::max(rep.scale, 1e-300);
    return rep;
}

} // namespace wgstab
