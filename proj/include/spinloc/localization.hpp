#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinloc/types.hpp"
#include "spinloc/vec3.hpp"

namespace spinloc {

// One neighbor sighting used by the position solver. Times are absolute
// nanoseconds on the local clock; positions are the neighbor's transmitter
// point in world coordinates as reported over the air.
struct FacingObservation {
    int neighbor_id = 0;
    double t_facing = 0.0;                  // ns, mid-crossing time this pass
    std::optional<double> t_facing_prev;    // ns, same neighbor one pass earlier
    double range = 0.0;                     // m
    double sigma_r = 1.0;                   // m
    std::optional<double> alpha;            // rad, elevation of neighbor above receiver plane
    double sigma_alpha = 1.0;               // rad
    Vec3 neighbor_pos;                      // m
    std::optional<double> neighbor_sigma_xy;  // m, reported by drone neighbors
};

struct PositionEstimate {
    Vec3 s;
    double t_x = 0.0;  // ns, a time at which the receiver faced world +X
    std::array<std::array<double, 2>, 2> cov_xy{{{0.0, 0.0}, {0.0, 0.0}}};
    double sigma_xy = 0.0;  // m
    double omega = 0.0;     // rad/s
    int n_neighbors = 0;
    int iterations = 0;
};

struct SolverConfig {
    int max_iterations = 200;
    double convergence_tol = 1e-9;  // m, step-size threshold
    double initial_step = 0.01;     // m
    double sigma_t = 21.7e-6;       // s, facing-time noise used for bearing weights
    int min_neighbors_xy = 2;
    double filter_tau = 0.06;       // s
};

enum class SolveErrorKind {
    NoPairedObservations,
    Underdetermined,
    NoConvergence,
    NoElevationData,
    DegenerateWeights,
};

class SolveError : public std::runtime_error {
  public:
    SolveError(SolveErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    SolveErrorKind kind() const { return kind_; }

  private:
    SolveErrorKind kind_;
};

// Spin rate from successive facing times of the same neighbors: one full
// turn elapses between consecutive passes, so omega = 2*pi*N / sum(dt).
// Throws SolveError{NoPairedObservations} when no observation has a
// previous pass.
double estimate_omega(const std::vector<FacingObservation>& observations);

// Weighted least squares over (s_x, s_y, t_x). Range residuals are weighted
// by 1/sigma_r^2 (inflated by the neighbor's own reported sigma_xy when
// present) and bearing residuals, wrapped to (-pi, pi], by 1/(omega*sigma_t)^2.
// Minimized by damped Gauss-Newton from `initial`, or from a
// weighted-centroid cold start. The 2x2 covariance is the (s_x, s_y) block
// of the inverse Gauss-Newton Hessian of half the cost.
// Throws Underdetermined with fewer than min_neighbors_xy usable neighbors
// and NoConvergence when the gradient stays large after max_iterations.
PositionEstimate solve_xy(const std::vector<FacingObservation>& observations,
                          double omega, const SolverConfig& config,
                          const PositionEstimate* initial = nullptr);

// Height as the weighted mean of per-neighbor s_z = p_z - d_i * tan(alpha_i),
// with d_i the horizontal distance from (s_x, s_y) to the neighbor. Weights
// are the inverse variance of each term from sigma_xy and sigma_alpha.
// Throws NoElevationData when no observation has an elevation angle and
// DegenerateWeights when the weight sum is not positive and finite.
double solve_z(const Vec3& s_xy, double sigma_xy,
               const std::vector<FacingObservation>& observations);

// First-order low-pass toward `next`: prev + (1 - exp(-dt/tau)) * (next - prev).
// Returns `next` unchanged when there is no previous value.
Vec3 filter_estimate(const std::optional<Vec3>& previous, const Vec3& next,
                     double dt_seconds, double tau_seconds);

// The solver treats spin rate and position as constant over one revolution.
// Flags successive solutions that strain those assumptions: relative spin
// change above omega_rel_tol or movement above position_tol meters.
struct AssumptionFlags {
    bool omega_drift = false;
    bool position_jump = false;
};
AssumptionFlags check_assumptions(const PositionEstimate& previous,
                                  const PositionEstimate& current,
                                  double omega_rel_tol = 0.005,
                                  double position_tol = 0.005);

}  // namespace spinloc
