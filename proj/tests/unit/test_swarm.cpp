#include "doctest.h"
#include "gen.hpp"

#include "auvtrack/errors.hpp"
#include "auvtrack/swarm.hpp"

#include <cmath>

using namespace auvtrack;

namespace {

// Characteristic polynomial det(L - x I) by cofactor expansion (n <= 4).
double det(const Eigen::MatrixXd& m) {
    const auto n = m.rows();
    if (n == 1) return m(0, 0);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::MatrixXd minor(n - 1, n - 1);
        for (Eigen::Index r = 1; r < n; ++r) {
            Eigen::Index c2 = 0;
            for (Eigen::Index c = 0; c < n; ++c) {
                if (c == j) continue;
                minor(r - 1, c2++) = m(r, c);
            }
        }
        acc += ((j % 2 == 0) ? 1.0 : -1.0) * m(0, j) * det(minor);
    }
    return acc;
}

double char_poly(const Eigen::MatrixXd& l, double x) {
    return det(l - x * Eigen::MatrixXd::Identity(l.rows(), l.cols()));
}

}  // namespace

TEST_SUITE("swarm") {

TEST_CASE("two agents at 12 m") {
    HydroParams hp;
    const SwarmGraph g = build_laplacian({{0, 0}, {12, 0}}, hp);
    const double a = passive_snr(12.0, hp);
    CHECK(std::abs(a - 51.402) < 1e-2);
    CHECK(g.laplacian(0, 0) == doctest::Approx(a));
    CHECK(g.laplacian(0, 1) == doctest::Approx(-a));
    CHECK(std::abs(algebraic_connectivity(g) - 102.80) < 0.02);
    CHECK(std::abs(algebraic_connectivity(g) - 2 * a) < 1e-8);
}

TEST_CASE("disconnected graph") {
    HydroParams hp;
    const SwarmGraph g = build_laplacian({{0, 0}, {1e6, 0}, {0, 1e6}}, hp);
    CHECK(g.laplacian.cwiseAbs().maxCoeff() == 0.0);
    CHECK(algebraic_connectivity(g) == doctest::Approx(0.0));
}

TEST_CASE("coincident or too few agents") {
    HydroParams hp;
    CHECK_THROWS_AS(build_laplacian({{1, 1}, {1, 1}}, hp), DomainError);
    CHECK_THROWS_AS(build_laplacian({{1, 1}}, hp), DomainError);
}

TEST_CASE("complete graph spectrum matches characteristic polynomial") {
    HydroParams hp;
    for (int n = 2; n <= 4; ++n) {
        const double a = passive_snr(14.03, hp);
        Eigen::MatrixXd l = Eigen::MatrixXd::Constant(n, n, -a);
        l.diagonal().setConstant((n - 1) * a);
        const Eigen::VectorXd ev = jacobi_eigenvalues(l);
        CHECK(std::abs(ev(0)) < 1e-6);
        for (int i = 1; i < n; ++i) CHECK(std::abs(ev(i) - n * a) < 1e-6);
        // Every eigenvalue is a root of det(L - x I).
        const double scale = std::pow(n * a, n);
        for (int i = 0; i < n; ++i) CHECK(std::abs(char_poly(l, ev(i))) / scale < 1e-9);
    }
    const double a3 = 50.07;
    Eigen::MatrixXd l3 = Eigen::MatrixXd::Constant(3, 3, -a3);
    l3.diagonal().setConstant(2 * a3);
    SwarmGraph g3{3, l3};
    CHECK(std::abs(algebraic_connectivity(g3) - 150.2) < 0.5);
}

TEST_CASE("laplacian invariants on random layouts") {
    HydroParams hp;
    gen::Gen g(21);
    for (int k = 0; k < 200; ++k) {
        const int n = g.integer(2, 6);
        std::vector<Eigen::Vector2d> pts;
        for (int i = 0; i < n; ++i) pts.push_back(g.point(30));
        const SwarmGraph s = build_laplacian(pts, hp);
        CHECK((s.laplacian - s.laplacian.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(s.laplacian.rowwise().sum().cwiseAbs().maxCoeff() < 1e-9);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j) CHECK(s.laplacian(i, j) <= 0.0);
        const Eigen::VectorXd ev = jacobi_eigenvalues(s.laplacian);
        const Eigen::VectorXd ref = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s.laplacian).eigenvalues();
        CHECK((ev - ref).cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, ref.cwiseAbs().maxCoeff()));
        const double lam = algebraic_connectivity(s);
        CHECK(lam >= -1e-9);
        // Connectivity by graph search must agree with lambda > 0.
        std::vector<int> seen(static_cast<std::size_t>(n), 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        while (!stack.empty()) {
            const int i = stack.back();
            stack.pop_back();
            for (int j = 0; j < n; ++j)
                if (!seen[j] && s.laplacian(i, j) < 0) {
                    seen[j] = 1;
                    stack.push_back(j);
                }
        }
        const bool connected = std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; });
        CHECK(connected == (lam > 1e-9));
    }
}

TEST_CASE("formation step reaches the target connectivity") {
    HydroParams hp;
    for (int n = 2; n <= 4; ++n) {
        const double target = 50.05 * n;
        const double step = formation_angle_step(n, 12.0, target, hp);
        const auto ang = formation_angles(n, step);
        std::vector<Eigen::Vector2d> pts;
        for (double a : ang) pts.emplace_back(12 * std::cos(a), 12 * std::sin(a));
        CHECK(std::abs(swarm_consistency(pts, hp) - target) < 0.05);
    }
}

}
