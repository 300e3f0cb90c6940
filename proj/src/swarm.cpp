#include "auvtrack/swarm.hpp"

#include "auvtrack/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace auvtrack {

SwarmGraph build_laplacian(const std::vector<Eigen::Vector2d>& positions, const HydroParams& hp) {
    const int n = static_cast<int>(positions.size());
    if (n < 2) {
        throw DomainError("build_laplacian: need at least two agents");
    }
    SwarmGraph g{n, Eigen::MatrixXd::Zero(n, n)};
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double d = (positions[i] - positions[j]).norm();
            if (!(d > 0.0)) {
                throw DomainError("build_laplacian: agents " + std::to_string(i) + " and " + std::to_string(j) +
                                  " coincide");
            }
            const double a = passive_snr(d, hp);
            if (a >= hp.dt_thresh) {
                g.laplacian(i, j) = g.laplacian(j, i) = -a;
                g.laplacian(i, i) += a;
                g.laplacian(j, j) += a;
            }
        }
    }
    return g;
}

Eigen::VectorXd jacobi_eigenvalues(const Eigen::MatrixXd& input, int max_sweeps, double tol) {
    Eigen::MatrixXd a = input;
    const Eigen::Index n = a.rows();
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    auto off_norm = [&] {
        double s = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                if (i != j) {
                    s += a(i, j) * a(i, j);
                }
            }
        }
        return std::sqrt(s);
    };
    int sweep = 0;
    while (off_norm() > tol * scale) {
        if (sweep++ >= max_sweeps) {
            throw NumericFault("Jacobi eigenvalue iteration did not converge in " + std::to_string(max_sweeps) +
                               " sweeps");
        }
        for (Eigen::Index p = 0; p < n - 1; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) {
                    continue;
                }
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    Eigen::VectorXd ev = a.diagonal();
    std::sort(ev.data(), ev.data() + ev.size());
    return ev;
}

double algebraic_connectivity(const SwarmGraph& g) {
    if (g.n < 2) {
        throw DomainError("algebraic_connectivity: need at least two nodes");
    }
    const Eigen::VectorXd ev = jacobi_eigenvalues(g.laplacian);
    const double scale = std::max(1.0, g.laplacian.cwiseAbs().maxCoeff());
    if (std::abs(ev(0)) > 1e-8 * scale) {
        throw NumericFault("Laplacian smallest eigenvalue is not zero: " + std::to_string(ev(0)));
    }
    // Round-off on a disconnected graph can leave a tiny positive value.
    return ev(1) < 1e-9 * scale ? 0.0 : ev(1);
}

double swarm_consistency(const std::vector<Eigen::Vector2d>& positions, const HydroParams& hp) {
    return algebraic_connectivity(build_laplacian(positions, hp));
}

}  // namespace auvtrack

namespace auvtrack {

std::vector<double> formation_angles(int n, double step) {
    std::vector<double> a(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        a[static_cast<std::size_t>(i)] = std::numbers::pi + (i - 0.5 * (n - 1)) * step;
    }
    return a;
}

double formation_angle_step(int n, double standoff, double lambda_target, const HydroParams& hp, double min_chord) {
    if (n < 2) {
        return 0.0;
    }
    auto lambda_at = [&](double step) {
        std::vector<Eigen::Vector2d> pts;
        for (double a : formation_angles(n, step)) {
            pts.emplace_back(standoff * std::cos(a), standoff * std::sin(a));
        }
        return swarm_consistency(pts, hp);
    };
    double lo = 2.0 * std::asin(std::min(1.0, min_chord / (2.0 * standoff)));
    double hi = std::min(std::numbers::pi, 2.0 * std::numbers::pi / n);
    if (lambda_at(lo) <= lambda_target) {
        return lo;
    }
    if (lambda_at(hi) >= lambda_target) {
        return hi;
    }
    for (int it = 0; it < 100 && hi - lo > 1e-12; ++it) {
        const double mid = 0.5 * (lo + hi);
        (lambda_at(mid) > lambda_target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace auvtrack
