#include "spinloc/localization.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace spinloc {
namespace {

struct WorkingObs {
    double px, py;      // m
    double t_s;         // s
    double range;       // m
    double inv_sigma_r; // 1/m
    double inv_sigma_b; // 1/rad
};

constexpr double kMinHorizontalDistance = 1e-9;

std::vector<WorkingObs> prepare(const std::vector<FacingObservation>& observations,
                                double omega, double sigma_t) {
    std::vector<WorkingObs> out;
    out.reserve(observations.size());
    for (const auto& obs : observations) {
        double var_r = obs.sigma_r * obs.sigma_r;
        if (obs.neighbor_sigma_xy)
            var_r += *obs.neighbor_sigma_xy * *obs.neighbor_sigma_xy;
        out.push_back({obs.neighbor_pos.x, obs.neighbor_pos.y,
                       obs.t_facing * 1e-9, obs.range,
                       1.0 / std::sqrt(var_r), 1.0 / (omega * sigma_t)});
    }
    return out;
}

// Cost, gradient and Gauss-Newton normal matrix of f/2 in (s_x, s_y, u),
// u the facing phase omega*t_x.
struct CostEval {
    double f = 0.0;
    double g[3] = {0.0, 0.0, 0.0};
    double m[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
};

CostEval evaluate(const std::vector<WorkingObs>& obs, double omega,
                  double sx, double sy, double u, bool with_derivatives) {
    CostEval ev;
    for (const auto& o : obs) {
        double dx = o.px - sx;
        double dy = o.py - sy;
        double d = std::sqrt(dx * dx + dy * dy);
        if (d < kMinHorizontalDistance) d = kMinHorizontalDistance;

        double e_r = (d - o.range) * o.inv_sigma_r;
        double bearing = std::atan2(dy, dx);
        double e_b = wrap_pi(bearing - omega * o.t_s + u) * o.inv_sigma_b;
        ev.f += e_r * e_r + e_b * e_b;
        if (!with_derivatives) continue;

        double jr[3] = {-dx / d * o.inv_sigma_r, -dy / d * o.inv_sigma_r, 0.0};
        double d2 = d * d;
        double jb[3] = {dy / d2 * o.inv_sigma_b, -dx / d2 * o.inv_sigma_b,
                        o.inv_sigma_b};
        for (int a = 0; a < 3; ++a) {
            ev.g[a] += e_r * jr[a] + e_b * jb[a];
            for (int b = 0; b < 3; ++b)
                ev.m[a][b] += jr[a] * jr[b] + jb[a] * jb[b];
        }
    }
    return ev;
}

// Inverse of a symmetric positive-definite 3x3 matrix via the adjugate.
bool invert3(const double m[3][3], double inv[3][3]) {
    double c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    double c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    double c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    double det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    if (!std::isfinite(det) || det <= 0.0) return false;
    inv[0][0] = c00 / det;
    inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    inv[1][0] = c01 / det;
    inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    inv[2][0] = c02 / det;
    inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    return true;
}

}  // namespace

double estimate_omega(const std::vector<FacingObservation>& observations) {
    double sum_dt_s = 0.0;
    int n = 0;
    for (const auto& obs : observations) {
        if (!obs.t_facing_prev) continue;
        double dt = (obs.t_facing - *obs.t_facing_prev) * 1e-9;
        if (dt <= 0.0) continue;
        sum_dt_s += dt;
        ++n;
    }
    if (n == 0)
        throw SolveError(SolveErrorKind::NoPairedObservations,
                         "no neighbor was seen on two consecutive passes");
    return kTwoPi * n / sum_dt_s;
}

PositionEstimate solve_xy(const std::vector<FacingObservation>& observations,
                          double omega, const SolverConfig& config,
                          const PositionEstimate* initial) {
    std::set<int> ids;
    for (const auto& obs : observations) ids.insert(obs.neighbor_id);
    if (observations.empty() ||
        static_cast<int>(ids.size()) < config.min_neighbors_xy)
        throw SolveError(SolveErrorKind::Underdetermined,
                         "need at least " + std::to_string(config.min_neighbors_xy) +
                             " distinct neighbors, have " + std::to_string(ids.size()));

    const auto obs = prepare(observations, omega, config.sigma_t);

    double sx, sy, u;
    if (initial) {
        sx = initial->s.x;
        sy = initial->s.y;
        u = wrap_2pi(omega * initial->t_x * 1e-9);
    } else {
        double wsum = 0.0, wx = 0.0, wy = 0.0;
        for (const auto& o : obs) {
            double w = o.inv_sigma_r * o.inv_sigma_r;
            wsum += w;
            wx += w * o.px;
            wy += w * o.py;
        }
        sx = wx / wsum;
        sy = wy / wsum;
        double cs = 0.0, sn = 0.0;
        for (const auto& o : obs) {
            double phase = omega * o.t_s - std::atan2(o.py - sy, o.px - sx);
            cs += std::cos(phase);
            sn += std::sin(phase);
        }
        u = std::atan2(sn, cs);
    }

    // Mean range sets the length scale that converts the phase coordinate u
    // into meters so one step size governs all three variables.
    double r_scale = 0.0;
    for (const auto& o : obs) r_scale += o.range;
    r_scale = std::max(r_scale / obs.size(), 1e-3);

    CostEval ev = evaluate(obs, omega, sx, sy, u, true);
    bool converged = false;
    int iter = 0;
    for (; iter < config.max_iterations; ++iter) {
        // Gauss-Newton step; when the normal matrix is singular, fall back to
        // a Jacobi-preconditioned gradient step of length initial_step
        // (u measured in meters through r_scale throughout).
        double dir[3];
        double minv[3][3];
        if (invert3(ev.m, minv)) {
            for (int a = 0; a < 3; ++a)
                dir[a] = minv[a][0] * ev.g[0] + minv[a][1] * ev.g[1] +
                         minv[a][2] * ev.g[2];
        } else {
            for (int a = 0; a < 3; ++a)
                dir[a] = ev.g[a] / std::max(ev.m[a][a], 1e-30);
            double norm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] +
                                    dir[2] * dir[2] * r_scale * r_scale);
            if (norm > 0.0)
                for (double& c : dir) c *= config.initial_step / norm;
        }
        double step_norm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] +
                                     dir[2] * dir[2] * r_scale * r_scale);
        if (step_norm < config.convergence_tol) {
            converged = true;
            break;
        }

        bool accepted = false;
        for (double lambda = 1.0;
             lambda * step_norm >= config.convergence_tol * 1e-3; lambda *= 0.5) {
            double tsx = sx - lambda * dir[0];
            double tsy = sy - lambda * dir[1];
            double tu = u - lambda * dir[2];
            CostEval trial = evaluate(obs, omega, tsx, tsy, tu, true);
            if (trial.f < ev.f) {
                sx = tsx;
                sy = tsy;
                u = tu;
                ev = trial;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        double gnorm = std::sqrt(ev.g[0] * ev.g[0] + ev.g[1] * ev.g[1] +
                                 ev.g[2] * ev.g[2] / (r_scale * r_scale));
        if (gnorm > 1e-3)
            throw SolveError(SolveErrorKind::NoConvergence,
                             "gradient norm " + std::to_string(gnorm) +
                                 " after " + std::to_string(iter) + " iterations");
    }

    double cov3[3][3];
    if (!invert3(ev.m, cov3))
        throw SolveError(SolveErrorKind::Underdetermined,
                         "singular normal matrix (degenerate neighbor geometry)");

    PositionEstimate est;
    est.s = {sx, sy, 0.0};
    est.omega = omega;
    est.n_neighbors = static_cast<int>(ids.size());
    est.iterations = iter;
    est.cov_xy = {{{cov3[0][0], cov3[0][1]}, {cov3[1][0], cov3[1][1]}}};
    est.sigma_xy = std::sqrt(0.5 * (cov3[0][0] + cov3[1][1]));

    // Report t_x as the last +X-facing time at or before the mean sighting time.
    double t_mean_s = 0.0;
    for (const auto& o : obs) t_mean_s += o.t_s;
    t_mean_s /= obs.size();
    est.t_x = (t_mean_s - wrap_2pi(omega * t_mean_s - u) / omega) * 1e9;
    return est;
}

double solve_z(const Vec3& s_xy, double sigma_xy,
               const std::vector<FacingObservation>& observations) {
    constexpr double kVarFloor = 1e-12;  // m^2, keeps exact inputs finite
    double wsum = 0.0, zsum = 0.0;
    int n = 0;
    for (const auto& obs : observations) {
        if (!obs.alpha) continue;
        ++n;
        double dx = obs.neighbor_pos.x - s_xy.x;
        double dy = obs.neighbor_pos.y - s_xy.y;
        double d = std::sqrt(dx * dx + dy * dy);
        double tan_a = std::tan(*obs.alpha);
        double cos_a = std::cos(*obs.alpha);
        double z_i = obs.neighbor_pos.z - d * tan_a;
        double var = sigma_xy * tan_a * sigma_xy * tan_a +
                     (d * obs.sigma_alpha / (cos_a * cos_a)) *
                         (d * obs.sigma_alpha / (cos_a * cos_a)) +
                     kVarFloor;
        double w = 1.0 / var;
        wsum += w;
        zsum += w * z_i;
    }
    if (n == 0)
        throw SolveError(SolveErrorKind::NoElevationData,
                         "no observation carries an elevation angle");
    if (!std::isfinite(wsum) || wsum <= 0.0)
        throw SolveError(SolveErrorKind::DegenerateWeights,
                         "elevation weights are not positive and finite");
    return zsum / wsum;
}

Vec3 filter_estimate(const std::optional<Vec3>& previous, const Vec3& next,
                     double dt_seconds, double tau_seconds) {
    if (!previous) return next;
    double blend = 1.0 - std::exp(-dt_seconds / tau_seconds);
    return *previous + (next - *previous) * blend;
}

AssumptionFlags check_assumptions(const PositionEstimate& previous,
                                  const PositionEstimate& current,
                                  double omega_rel_tol, double position_tol) {
    AssumptionFlags flags;
    if (previous.omega > 0.0 &&
        std::abs(current.omega - previous.omega) > omega_rel_tol * previous.omega)
        flags.omega_drift = true;
    if ((current.s - previous.s).norm() > position_tol)
        flags.position_jump = true;
    return flags;
}

}  // namespace spinloc
