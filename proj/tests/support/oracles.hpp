#pragma once

// Reference computations written without the library's solvers, shared by
// the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "sgen/image.hpp"
#include "sgen/rng.hpp"
#include "sgen/warp.hpp"

namespace sgen::oracle {

inline double tps_u(double dx, double dy) {
    const double s = dx * dx + dy * dy;
    return s > 0.0 ? s * std::log(s) : 0.0;
}

// Gaussian elimination with partial pivoting on a dense row-major system.
// Solves A X = B for every column of B in place.
inline void gauss_solve(std::vector<std::vector<double>>& a, std::vector<std::vector<double>>& b) {
    const std::size_t n = a.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) {
                piv = r;
            }
        }
        if (a[piv][col] == 0.0) {
            throw std::runtime_error("singular system");
        }
        std::swap(a[col], a[piv]);
        std::swap(b[col], b[piv]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < n; ++c) {
                a[r][c] -= f * a[col][c];
            }
            for (std::size_t c = 0; c < b[r].size(); ++c) {
                b[r][c] -= f * b[col][c];
            }
        }
    }
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t c = 0; c < b[i].size(); ++c) {
            double acc = b[i][c];
            for (std::size_t j = i + 1; j < n; ++j) {
                acc -= a[i][j] * b[j][c];
            }
            b[i][c] = acc / a[i][i];
        }
    }
}

// Solution of [[K + lambda I, P], [P^T, 0]] [w; a] = [t; 0]. Row i < n
// holds w_i, rows n..n+2 hold the affine coefficients for 1, x, y.
inline std::vector<std::vector<double>> tps_dense(const std::vector<warp::Point2>& grid,
                                                  const std::vector<warp::Point2>& targets, double lambda) {
    const std::size_t n = grid.size();
    std::vector<std::vector<double>> a(n + 3, std::vector<double>(n + 3, 0.0));
    std::vector<std::vector<double>> b(n + 3, std::vector<double>(2, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            a[i][j] = tps_u(grid[i].x - grid[j].x, grid[i].y - grid[j].y) + (i == j ? lambda : 0.0);
        }
        const double p[3] = {1.0, grid[i].x, grid[i].y};
        for (std::size_t k = 0; k < 3; ++k) {
            a[i][n + k] = p[k];
            a[n + k][i] = p[k];
        }
        b[i][0] = targets[i].x;
        b[i][1] = targets[i].y;
    }
    gauss_solve(a, b);
    return b;
}

// g x g grid on [0,1]^2 with each point jittered by up to `jitter` of the
// spacing; targets displaced by up to `displacement` of the spacing.
struct RandomTpsProblem {
    std::vector<warp::Point2> grid;
    std::vector<warp::Point2> targets;
};

inline RandomTpsProblem random_tps_problem(Rng& rng, int g = 4, double jitter = 0.2, double displacement = 0.3) {
    RandomTpsProblem p;
    const double h = 1.0 / (g - 1);
    for (int y = 0; y < g; ++y) {
        for (int x = 0; x < g; ++x) {
            const warp::Point2 s{x * h + rng.uniform(-jitter, jitter) * h, y * h + rng.uniform(-jitter, jitter) * h};
            p.grid.push_back(s);
            p.targets.push_back({s.x + rng.uniform(-displacement, displacement) * h,
                                 s.y + rng.uniform(-displacement, displacement) * h});
        }
    }
    return p;
}

// Integral over the whole plane of f_xx^2 + 2 f_xy^2 + f_yy^2 (summed over
// both output coordinates) for the radial part of a fitted warp. The plane
// is mapped onto (-pi/2, pi/2)^2 by x = cx + tan(u) and integrated with the
// midpoint rule.
inline double plane_bending_integral(const warp::TpsWarp& w, int samples = 1600) {
    const double cx = 0.5;
    const double cy = 0.5;
    const double du = M_PI / samples;
    double total = 0.0;
    const std::size_t n = w.source_grid.size();
    for (int iy = 0; iy < samples; ++iy) {
        const double uy = -M_PI / 2 + (iy + 0.5) * du;
        const double y = cy + std::tan(uy);
        const double jy = 1.0 / (std::cos(uy) * std::cos(uy));
        for (int ix = 0; ix < samples; ++ix) {
            const double ux = -M_PI / 2 + (ix + 0.5) * du;
            const double x = cx + std::tan(ux);
            const double jx = 1.0 / (std::cos(ux) * std::cos(ux));
            double fxx[2] = {0, 0};
            double fxy[2] = {0, 0};
            double fyy[2] = {0, 0};
            for (std::size_t i = 0; i < n; ++i) {
                const double dx = x - w.source_grid[i].x;
                const double dy = y - w.source_grid[i].y;
                const double s = dx * dx + dy * dy;
                // U = s log s with s = dx^2 + dy^2.
                const double l = std::log(s) + 1.0;
                const double uxx = 2.0 * l + 4.0 * dx * dx / s;
                const double uxy = 4.0 * dx * dy / s;
                const double uyy = 2.0 * l + 4.0 * dy * dy / s;
                for (int c = 0; c < 2; ++c) {
                    const double wc = w.radial_weights(static_cast<Eigen::Index>(i), c);
                    fxx[c] += wc * uxx;
                    fxy[c] += wc * uxy;
                    fyy[c] += wc * uyy;
                }
            }
            double e = 0.0;
            for (int c = 0; c < 2; ++c) {
                e += fxx[c] * fxx[c] + 2.0 * fxy[c] * fxy[c] + fyy[c] * fyy[c];
            }
            total += e * jx * jy;
        }
    }
    return total * du * du;
}

// Mirror about the outer pixel edges, then clamp to pixel centres.
inline double reflect_pixel(double c, int n) {
    if (n == 1) {
        return 0.0;
    }
    while (c < -0.5 || c > n - 0.5) {
        c = c < -0.5 ? -1.0 - c : 2.0 * n - 1.0 - c;
    }
    return std::clamp(c, 0.0, static_cast<double>(n - 1));
}

// Fréchet distance between Gaussians with diagonal covariances.
inline double diagonal_frechet(const std::vector<double>& m1, const std::vector<double>& v1,
                               const std::vector<double>& m2, const std::vector<double>& v2) {
    double d = 0.0;
    for (std::size_t i = 0; i < m1.size(); ++i) {
        d += (m1[i] - m2[i]) * (m1[i] - m2[i]);
        d += v1[i] + v2[i] - 2.0 * std::sqrt(v1[i] * v2[i]);
    }
    return d;
}

}  // namespace sgen::oracle
