#pragma once

// Hand-rolled generators for property tests.

#include "auvtrack/dynamics.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace gen {

struct Gen {
    std::mt19937_64 rng;
    explicit Gen(std::uint64_t seed) : rng(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng); }

    Eigen::Vector2d point(double half_width) { return {uniform(-half_width, half_width), uniform(-half_width, half_width)}; }

    auvtrack::AuvState state(const auvtrack::AuvParams& p) {
        auvtrack::AuvState s;
        s.x = uniform(-50, 50);
        s.y = uniform(-50, 50);
        s.theta = uniform(-3.14159, 3.14159);
        s.u = uniform(-p.v_max, p.v_max);
        s.v_sway = uniform(-0.5, 0.5);
        s.w = uniform(-p.w_max, p.w_max);
        return s;
    }

    Eigen::MatrixXd matrix(int rows, int cols) {
        Eigen::MatrixXd m(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) m(i, j) = normal();
        return m;
    }
};

}  // namespace gen
