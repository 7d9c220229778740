#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "annihil/diffusion.hpp"
#include "annihil/geometry.hpp"
#include "annihil/kernels.hpp"

namespace annihil {

struct SolverParams {
  /// Grid intervals along the normal and along each tangential axis.
  int n_normal = 200;
  int n_tangential = 32;
  /// Time step of the mild solver.
  double dt = 1e-3;
  /// Field snapshots every save_stride mild steps (FD uses the same times).
  int save_stride = 20;
  /// Fixed spectral truncation; 0 selects it from the tail bound.
  int spectral_modes = 0;
  /// FD time step; 0 picks cfl_fraction of the stability limit.
  double fd_dt = 0.0;
  double cfl_fraction = 0.9;
  double picard_tol = 1e-10;
  int picard_max = 50;

  void validate() const;
};

/// Limit densities on both sides at the save times, with interface traces and
/// the solver's own mass accounting.
struct CoupledSolution {
  std::string method;
  Grid grid;
  double lambda = 0.0;
  DriftSpec drift_plus;
  DriftSpec drift_minus;
  bool harvest_plus = true;
  bool harvest_minus = true;

  std::vector<double> times;
  /// Fields at save times, laid out as Grid values.
  std::vector<std::vector<double>> u_plus;
  std::vector<std::vector<double>> u_minus;
  /// Interface traces at every solver step (tangential nodes).
  std::vector<double> trace_times;
  std::vector<std::vector<double>> trace_plus;
  std::vector<std::vector<double>> trace_minus;
  /// Solver accounting at save times: mass of u rho, removed by annihilation
  /// ((lambda/2) int int u+ u-), and harvested.
  std::vector<double> mass_plus;
  std::vector<double> mass_minus;
  std::vector<double> annihilated;
  std::vector<double> harvested_plus;
  std::vector<double> harvested_minus;
  double initial_mass_plus = 1.0;
  double initial_mass_minus = 1.0;

  const std::vector<double>& field(Side s, std::size_t i) const { return s == Side::plus ? u_plus[i] : u_minus[i]; }
  GridFunction grid_function(Side s, std::size_t i) const;
  /// Index of the save time equal to t (within 1e-9); refuses otherwise.
  std::size_t time_index(double t) const;
  /// Interface trace at time t and tangential position z, interpolated
  /// linearly in time and in the tangential coordinate.
  double trace_at(Side s, double t, const Coords& z) const;
  const DriftSpec& drift(Side s) const { return s == Side::plus ? drift_plus : drift_minus; }
};

/// Mild (Duhamel) formulation: spectral semigroup of u0 minus the interface
/// source (lambda/2) int_0^t int_I p(t - r, x, z) u+ u-(r, z) dz dr. The source
/// is linear in time between steps; lag weights are integrated exactly in
/// time by Gauss-Legendre after tau = v^2 on the singular first lag. Each step
/// solves for the interface traces by Picard iteration. Requires zero drift;
/// use solve_fd otherwise.
CoupledSolution solve_mild(const BoxGeometry& geom, const DensityFunction& u0_plus, const DensityFunction& u0_minus,
                           double lambda, double T, const SolverParams& params, double diffusion_plus = 1.0,
                           double diffusion_minus = 1.0);

/// Explicit method of lines for d u = (1/(2 rho)) div(s rho grad u) with
/// s rho du/da = lambda u+ u- at the interface (a the distance to it), u = 0
/// on harvest faces and zero flux elsewhere. Finite volumes on the node grid
/// (half cells at the ends), so the discrete mass sum w rho u changes exactly
/// by the two boundary fluxes.
CoupledSolution solve_fd(const BoxGeometry& geom, const DensityFunction& u0_plus, const DensityFunction& u0_minus,
                         double lambda, const DriftSpec& drift_plus, const DriftSpec& drift_minus, double T,
                         const SolverParams& params);

/// Mass of u rho at save index i by composite Simpson quadrature (trapezoid
/// along an axis with an odd number of intervals).
double grid_mass(const CoupledSolution& sol, Side side, std::size_t i);

/// (lambda/2) int_0^T int_I u+ u- dsigma dt.
double annihilated_mass(const CoupledSolution& sol, double T);

/// initial mass - int u(T) rho dx - annihilated_mass(T), with the field
/// masses from grid_mass.
double harvested_mass(const CoupledSolution& sol, Side side, double T);

/// CSV with header t,x[,x2],u_plus,u_minus; time-major, then tangential,
/// then normal. x is the plus-side coordinate (the minus row is its mirror).
void write_csv(const CoupledSolution& sol, std::ostream& os);

}  // namespace annihil
