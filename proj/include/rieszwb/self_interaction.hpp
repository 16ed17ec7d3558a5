#pragma once

// Self-interaction constants for the Riesz kernel r^p, p = alpha - n < 0.

namespace rieszwb {

// Sum over nonzero k in Z^d of |k|^(-2s), analytically continued (Ewald split);
// valid for 0 < s < d/2, d in {1, 2, 3}.
double epstein_zeta_cubic(int d, double s);

// Diagonal that makes the lattice sum of r^p over a uniform d-dimensional
// lattice with cell measure `measure` reproduce the integral: -Z_d(-p/2) * measure^(p/d).
// Requires -d < p < 0.
double lattice_self_term(int d, double p, double measure);

// Mean of r^p over pairs of independent uniform points in a d-ball of the given
// radius (d = 1: segment of length 2*radius). Requires p > -d.
double ball_mean_self_energy(int d, double radius, double p);

// E[(|X-Y|/a)^k] for independent uniform points of a disk of radius a; k > -2.
double disk_distance_moment(double k);
// E[ln(|X-Y|/a)] for the same distribution.
double disk_distance_log_moment();

// Mean of r^p over pairs of independent uniform points in a solid circular
// cylinder of radius a and length t (p > -3).
double cylinder_mean_self_energy(double a, double t, double p);

// Mean of r^p over pairs of independent uniform points in a 2-D rectangle (p > -2).
double rectangle_mean_self_energy(double length, double width, double p);

}  // namespace rieszwb
