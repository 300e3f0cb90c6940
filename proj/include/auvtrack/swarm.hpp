#pragma once

#include "auvtrack/acoustics.hpp"

#include <Eigen/Dense>

#include <vector>

namespace auvtrack {

struct SwarmGraph {
    int n = 0;
    Eigen::MatrixXd laplacian;
};

/// l_ij = -a_ij when a_ij >= DT, diagonal = sum of the connected weights.
/// Throws DomainError for fewer than two agents or coincident positions.
SwarmGraph build_laplacian(const std::vector<Eigen::Vector2d>& positions, const HydroParams& hp);

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
/// Throws NumericFault if off-diagonal mass does not vanish within `max_sweeps`.
Eigen::VectorXd jacobi_eigenvalues(const Eigen::MatrixXd& a, int max_sweeps = 100, double tol = 1e-12);

/// Second-smallest Laplacian eigenvalue.
double algebraic_connectivity(const SwarmGraph& g);

/// Shortcut: algebraic_connectivity(build_laplacian(positions, hp)).
double swarm_consistency(const std::vector<Eigen::Vector2d>& positions, const HydroParams& hp);

}  // namespace auvtrack

namespace auvtrack {

/// Slot angles (relative to the target heading) for `n` agents spaced by
/// `step` radians on the standoff circle, centred directly behind the target.
std::vector<double> formation_angles(int n, double step);

/// Angular step that makes the arc formation on a circle of radius
/// `standoff` reach algebraic connectivity `lambda_target`. Solved by
/// bisection; clamped to the closest end of the feasible interval when the
/// target is unreachable (minimum chord `min_chord`).
double formation_angle_step(int n, double standoff, double lambda_target, const HydroParams& hp,
                            double min_chord = 4.0);

}  // namespace auvtrack
