#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "spinloc/localization.hpp"
#include "spinloc/rng.hpp"

using namespace spinloc;

namespace {

constexpr double kOmega = 157.07963267948966;  // 25 Hz
constexpr double kPeriodNs = kTwoPi / kOmega * 1e9;

// Exact observation of a beacon from truth (s, t_x): the facing time is the
// first time at or after t_x at which the receiver's facing equals the
// bearing to the beacon.
FacingObservation exact_obs(int id, const Vec3& beacon, const Vec3& s,
                            double t_x_ns, bool with_prev = false) {
    double dx = beacon.x - s.x;
    double dy = beacon.y - s.y;
    FacingObservation obs;
    obs.neighbor_id = id;
    obs.range = std::sqrt(dx * dx + dy * dy);
    obs.sigma_r = 0.005;
    obs.t_facing = t_x_ns + wrap_2pi(std::atan2(dy, dx)) / kOmega * 1e9;
    if (with_prev) obs.t_facing_prev = obs.t_facing - kPeriodNs;
    obs.neighbor_pos = beacon;
    return obs;
}

std::vector<FacingObservation> triangle_obs(const Vec3& s, double t_x_ns) {
    return {exact_obs(1, {0.50, 0.10, 0.0}, s, t_x_ns),
            exact_obs(2, {-0.30, 0.40, 0.0}, s, t_x_ns),
            exact_obs(3, {0.20, -0.45, 0.0}, s, t_x_ns)};
}

double wrap_to_period_ns(double dt_ns) {
    double t = std::fmod(dt_ns, kPeriodNs);
    if (t < -kPeriodNs / 2) t += kPeriodNs;
    if (t >= kPeriodNs / 2) t -= kPeriodNs;
    return t;
}

}  // namespace

TEST_CASE("spin rate from consecutive facing times") {
    Vec3 s{0.1, -0.05, 0.0};
    double t_x = 100.0123e9;
    auto obs = triangle_obs(s, t_x);
    for (auto& o : obs) o.t_facing_prev = o.t_facing - kPeriodNs;
    CHECK(estimate_omega(obs) == doctest::Approx(kOmega).epsilon(1e-12));

    SUBCASE("unpaired observations are skipped") {
        obs[1].t_facing_prev.reset();
        CHECK(estimate_omega(obs) == doctest::Approx(kOmega).epsilon(1e-12));
    }
    SUBCASE("slower spin") {
        for (auto& o : obs) o.t_facing_prev = o.t_facing - 2.0 * kPeriodNs;
        CHECK(estimate_omega(obs) == doctest::Approx(kOmega / 2).epsilon(1e-12));
    }
    SUBCASE("no pairs throws") {
        for (auto& o : obs) o.t_facing_prev.reset();
        CHECK_THROWS_AS(estimate_omega(obs), SolveError);
        try {
            estimate_omega(obs);
        } catch (const SolveError& e) {
            CHECK(e.kind() == SolveErrorKind::NoPairedObservations);
        }
    }
}

TEST_CASE("noise-free observations recover position exactly") {
    Vec3 s{0.1, -0.05, 0.0};
    double t_x = 100.0123e9;
    auto obs = triangle_obs(s, t_x);
    SolverConfig cfg;

    auto est = solve_xy(obs, kOmega, cfg);
    CHECK((est.s - s).norm() < 1e-7);
    CHECK(std::abs(wrap_to_period_ns(est.t_x - t_x)) < 10.0);  // ns
    CHECK(est.n_neighbors == 3);
    CHECK(est.sigma_xy > 0.0);

    SUBCASE("warm start lands on the same optimum") {
        PositionEstimate prior = est;
        prior.s.x += 0.004;
        prior.s.y -= 0.003;
        auto est2 = solve_xy(obs, kOmega, cfg, &prior);
        CHECK((est2.s - est.s).norm() < 1e-7);
    }
    SUBCASE("two neighbors suffice") {
        obs.pop_back();
        auto est2 = solve_xy(obs, kOmega, cfg);
        CHECK((est2.s - s).norm() < 1e-6);
    }
}

TEST_CASE("translation equivariance") {
    Vec3 s{0.1, -0.05, 0.0};
    Vec3 shift{1.7, -2.3, 0.0};
    double t_x = 50.00077e9;
    auto base = triangle_obs(s, t_x);
    auto moved = base;
    for (auto& o : moved) o.neighbor_pos += shift;

    SolverConfig cfg;
    auto e0 = solve_xy(base, kOmega, cfg);
    auto e1 = solve_xy(moved, kOmega, cfg);
    CHECK((e1.s - e0.s - shift).norm() < 1e-7);
    CHECK(e1.sigma_xy == doctest::Approx(e0.sigma_xy).epsilon(1e-6));
}

TEST_CASE("rotation covariance") {
    Vec3 s{0.1, -0.05, 0.0};
    double t_x = 50.00077e9;
    double gamma = 0.73;
    double cg = std::cos(gamma), sg = std::sin(gamma);
    auto rot = [&](const Vec3& p) {
        return Vec3{cg * p.x - sg * p.y, sg * p.x + cg * p.y, p.z};
    };

    auto base = triangle_obs(s, t_x);
    auto turned = base;
    for (auto& o : turned) {
        o.neighbor_pos = rot(o.neighbor_pos);
        o.t_facing += gamma / kOmega * 1e9;
    }

    SolverConfig cfg;
    auto e0 = solve_xy(base, kOmega, cfg);
    auto e1 = solve_xy(turned, kOmega, cfg);
    CHECK((e1.s - rot(e0.s)).norm() < 1e-7);
    CHECK(e1.sigma_xy == doctest::Approx(e0.sigma_xy).epsilon(1e-6));

    // Full covariance rotates as R C R^T.
    double c00 = cg * (cg * e0.cov_xy[0][0] - sg * e0.cov_xy[1][0]) -
                 sg * (cg * e0.cov_xy[0][1] - sg * e0.cov_xy[1][1]);
    CHECK(e1.cov_xy[0][0] == doctest::Approx(c00).epsilon(1e-6));
}

TEST_CASE("facing times shifted by whole revolutions give the same fix") {
    Vec3 s{0.02, 0.03, 0.0};
    double t_x = 10.005e9;
    auto obs = triangle_obs(s, t_x);
    auto shifted = obs;
    shifted[1].t_facing += kPeriodNs;
    shifted[2].t_facing += 3.0 * kPeriodNs;

    SolverConfig cfg;
    auto e0 = solve_xy(obs, kOmega, cfg);
    auto e1 = solve_xy(shifted, kOmega, cfg);
    CHECK((e1.s - e0.s).norm() < 1e-7);
    CHECK(std::abs(wrap_to_period_ns(e1.t_x - e0.t_x)) < 10.0);
}

TEST_CASE("extra neighbor shrinks the uncertainty") {
    Vec3 s{0.0, 0.0, 0.0};
    double t_x = 1.0e9;
    auto obs = triangle_obs(s, t_x);
    SolverConfig cfg;
    auto e3 = solve_xy(obs, kOmega, cfg);

    obs.push_back(exact_obs(4, {-0.4, -0.35, 0.0}, s, t_x));
    auto e4 = solve_xy(obs, kOmega, cfg);
    CHECK(e4.sigma_xy < e3.sigma_xy);
    CHECK(e4.n_neighbors == 4);
}

TEST_CASE("a neighbor's reported position uncertainty widens the fix") {
    Vec3 s{0.0, 0.0, 0.0};
    double t_x = 1.0e9;
    auto obs = triangle_obs(s, t_x);
    SolverConfig cfg;
    auto tight = solve_xy(obs, kOmega, cfg);

    obs[0].neighbor_sigma_xy = 0.02;
    auto wide = solve_xy(obs, kOmega, cfg);
    CHECK(wide.sigma_xy > tight.sigma_xy);
}

TEST_CASE("solver error paths") {
    Vec3 s{0.0, 0.0, 0.0};
    SolverConfig cfg;
    SUBCASE("single neighbor is underdetermined") {
        std::vector<FacingObservation> one{exact_obs(1, {0.3, 0.0, 0.0}, s, 1e9)};
        CHECK_THROWS_AS(solve_xy(one, kOmega, cfg), SolveError);
        try {
            solve_xy(one, kOmega, cfg);
        } catch (const SolveError& e) {
            CHECK(e.kind() == SolveErrorKind::Underdetermined);
        }
    }
    SUBCASE("empty batch is underdetermined") {
        std::vector<FacingObservation> none;
        CHECK_THROWS_AS(solve_xy(none, kOmega, cfg), SolveError);
    }
    SUBCASE("iteration budget exhausted far from the optimum") {
        auto obs = triangle_obs(s, 1e9);
        SolverConfig tiny = cfg;
        tiny.max_iterations = 0;
        PositionEstimate far;
        far.s = {5.0, 5.0, 0.0};
        far.t_x = 0.0;
        try {
            solve_xy(obs, kOmega, tiny, &far);
            CHECK(false);
        } catch (const SolveError& e) {
            CHECK(e.kind() == SolveErrorKind::NoConvergence);
        }
    }
}

TEST_CASE("reported covariance matches Monte Carlo scatter") {
    // Asymmetric geometry so the covariance has distinct entries and a
    // nonzero off-diagonal term.
    const Vec3 truth{0.02, -0.03, 0.0};
    const double t_x = 10.0e9;
    const double sigma_t_ns = 21.7e3;
    SolverConfig cfg;

    const int trials = 2500;
    Rng rng(0xC0FFEE, 7);
    double mean[2] = {0, 0};
    std::vector<std::array<double, 2>> errs;
    errs.reserve(trials);
    double rep[2][2] = {{0, 0}, {0, 0}};

    for (int k = 0; k < trials; ++k) {
        auto obs = triangle_obs(truth, t_x);
        for (auto& o : obs) {
            o.range += rng.gaussian() * o.sigma_r;
            o.t_facing += rng.gaussian() * sigma_t_ns;
        }
        auto est = solve_xy(obs, kOmega, cfg);
        errs.push_back({est.s.x - truth.x, est.s.y - truth.y});
        mean[0] += errs.back()[0];
        mean[1] += errs.back()[1];
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) rep[a][b] += est.cov_xy[a][b];
    }
    mean[0] /= trials;
    mean[1] /= trials;
    double emp[2][2] = {{0, 0}, {0, 0}};
    for (const auto& e : errs)
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                emp[a][b] += (e[a] - mean[a]) * (e[b] - mean[b]);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            emp[a][b] /= trials - 1;
            rep[a][b] /= trials;
        }

    // Entry-wise 20% with a floor at half the mean variance so the
    // off-diagonal entry is not judged on a relative scale near zero.
    double floor_scale = 0.25 * (emp[0][0] + emp[1][1]);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            double tol = 0.20 * std::max(std::abs(emp[a][b]), floor_scale);
            CHECK(std::abs(rep[a][b] - emp[a][b]) <= tol);
        }
    CHECK(std::abs(emp[0][1]) > 0.0);
}

TEST_CASE("height from elevation angles") {
    Vec3 s{0.05, -0.02, 0.0};
    double s_z = 0.12;
    std::vector<FacingObservation> obs;
    const Vec3 beacons[3] = {{0.4, 0.1, 0.0}, {-0.2, 0.3, 0.02}, {0.1, -0.35, -0.01}};
    for (int i = 0; i < 3; ++i) {
        FacingObservation o;
        o.neighbor_id = i + 1;
        o.neighbor_pos = beacons[i];
        double dx = beacons[i].x - s.x, dy = beacons[i].y - s.y;
        double d = std::sqrt(dx * dx + dy * dy);
        o.range = d;
        o.sigma_r = 0.005;
        o.alpha = std::atan2(beacons[i].z - s_z, d);
        o.sigma_alpha = 0.01;
        obs.push_back(o);
    }

    SUBCASE("exact angles give exact height") {
        CHECK(solve_z(s, 0.0, obs) == doctest::Approx(s_z).epsilon(1e-12));
    }
    SUBCASE("height is a weighted mean between discrepant neighbors") {
        auto skewed = obs;
        skewed[0].alpha = std::atan2(beacons[0].z - (s_z + 0.02),
                                     std::hypot(beacons[0].x - s.x, beacons[0].y - s.y));
        double z = solve_z(s, 0.001, skewed);
        CHECK(z > s_z);
        CHECK(z < s_z + 0.02);
    }
    SUBCASE("no elevation data throws") {
        for (auto& o : obs) o.alpha.reset();
        try {
            solve_z(s, 0.0, obs);
            CHECK(false);
        } catch (const SolveError& e) {
            CHECK(e.kind() == SolveErrorKind::NoElevationData);
        }
    }
    SUBCASE("non-finite weights throw") {
        obs[0].sigma_alpha = std::numeric_limits<double>::quiet_NaN();
        try {
            solve_z(s, 0.0, obs);
            CHECK(false);
        } catch (const SolveError& e) {
            CHECK(e.kind() == SolveErrorKind::DegenerateWeights);
        }
    }
}

TEST_CASE("exponential position filter") {
    Vec3 next{1.0, 2.0, 3.0};
    CHECK((filter_estimate(std::nullopt, next, 0.04, 0.06) - next).norm() == 0.0);

    Vec3 prev{0.0, 0.0, 0.0};
    auto out = filter_estimate(prev, next, 0.04, 0.06);
    double blend = 1.0 - std::exp(-0.04 / 0.06);
    CHECK(blend == doctest::Approx(0.486582880967408).epsilon(1e-12));
    CHECK(out.x == doctest::Approx(blend * 1.0).epsilon(1e-12));
    CHECK(out.z == doctest::Approx(blend * 3.0).epsilon(1e-12));

    SUBCASE("repeated application converges to the target") {
        Vec3 x{0.0, 0.0, 0.0};
        for (int i = 0; i < 400; ++i)
            x = filter_estimate(x, next, 0.04, 0.06);
        CHECK((x - next).norm() < 1e-9);
    }
    SUBCASE("zero dt keeps the previous value") {
        auto same = filter_estimate(prev, next, 0.0, 0.06);
        CHECK((same - prev).norm() == 0.0);
    }
}

TEST_CASE("constant-spin and static-position guards") {
    PositionEstimate a, b;
    a.omega = 157.0;
    a.s = {0.1, 0.1, 0.0};
    b = a;
    auto ok = check_assumptions(a, b);
    CHECK(!ok.omega_drift);
    CHECK(!ok.position_jump);

    b.omega = 157.0 * 1.006;
    b.s = {0.1, 0.107, 0.0};
    auto bad = check_assumptions(a, b);
    CHECK(bad.omega_drift);
    CHECK(bad.position_jump);

    b.omega = 157.0 * 1.004;
    b.s = {0.1, 0.104, 0.0};
    auto near = check_assumptions(a, b);
    CHECK(!near.omega_drift);
    CHECK(!near.position_jump);
}
