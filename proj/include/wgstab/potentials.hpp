//---------------------------------------------------------------------------//
// Copyright wgstab contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file potentials.hpp
//! The admissible potential class: background-pinned on the boundary collar
//! cylinder, bounded in a finite-difference Sobolev surrogate, and decaying
//! along the axis under the weighted sup norm  N_{b,d}(q) = max e^{b<x_n>^d}|q|.
//---------------------------------------------------------------------------//
#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "geometry.hpp"

namespace wgstab
{

//! Real scalar field over all spatial grid nodes (flat index layout).
using ScalarField = std::vector<double>;
//! Complex field over all spatial grid nodes.
using ComplexField = std::vector<cplx>;

//! Differentiability order of the admissible class: floor(n/4) + 1 for the
//! spatial dimension n of the cylinder.
inline int sobolev_order(int n)
{
    return n / 4 + 1;
}

//! max over grid nodes of e^{b<x_n>^d} |q|; rejects parameter ranges whose
//! weight overflows the floating range instead of returning inf.
double weighted_sup_norm(const Grid& grid,
                         const ScalarField& q,
                         double b,
                         double d);

//! Plain discrete L2(Omega) norm with the uniform cell volume.
double l2_norm(const Grid& grid, const ScalarField& q);

//! Sup of the repeated centered difference D^alpha q; alpha per axis
//! (cross-section axes then the cylinder axis). Nodes whose stencil leaves
//! the grid are skipped; throws when no node remains.
double sup_derivative(const Grid& grid,
                      const ScalarField& q,
                      const std::array<int, 3>& alpha);

struct AdmissibilityReport
{
    bool background_pinned = false; //!< q = p - p0 vanishes on the collar cylinder
    int first_support_violation = -1; //!< flat node index, -1 when none
    double sobolev_sup = 0;         //!< max |D^alpha p| over |alpha| <= 2N
    bool sobolev_ok = false;
    double tail_norm = 0;           //!< N_{b,d}(p - p0)
    bool tail_ok = false;
    bool admissible = false;
};

//! Verifies the three membership conditions of the admissible class at bound M.
AdmissibilityReport check_admissible(const Grid& grid,
                                     const NestedSubdomains& ns,
                                     const ScalarField& p,
                                     const ScalarField& p0,
                                     double b,
                                     double d,
                                     double M);

//! Smooth compactly supported cross-section bump (value 1 at the center,
//! zero outside radius `width` around `center`).
double mollifier_bump(double r_over_width);

struct TestPairSpec
{
    std::uint64_t seed = 0;
    double amplitude = 0.1;          //!< |p1 - p2| peak scale
    std::array<double, 2> center{};  //!< cross-section bump center
    double width = 0.3;              //!< cross-section bump radius
    double b = 1.0;                  //!< axial envelope e^{-2b<x_n>^d}
    double d = 2.0;
};

//! Builds (p1, p2) = p0 + t*A*bump, p0 - (1-t)*A*bump with a seeded split
//! t in (0,1); the difference p1 - p2 = A*bump exactly carries the decay
//! envelope and is supported outside the widest collar. The bump support
//! must stay clear of the collar or the pair is rejected.
std::pair<ScalarField, ScalarField> make_test_pair(const Grid& grid,
                                                   const NestedSubdomains& ns,
                                                   const ScalarField& p0,
                                                   const TestPairSpec& spec);

} // namespace wgstab
