#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "spinloc/sensing.hpp"

using namespace spinloc;

namespace {

constexpr double kOmega = 157.07963267948966;  // 25 Hz
constexpr double kPeriodNs = kTwoPi / kOmega * 1e9;
constexpr double kR = 0.04;
const double kPhi = deg_to_rad(25.0);

// Independently computed: dt_LR for a beacon at 0.3 m horizontal range and
// the middle-crossing offset for 12 degrees of elevation, at 25 Hz.
constexpr double kDtLrNs = 1702723.4801702367;
constexpr double kDtMidNs = 632034.6044030017;

ReceptionEvent reception(int source, ReceiverId rx, Origin origin, double t_ns,
                         const Packet& pkt = {}) {
    ReceptionEvent ev;
    ev.receiver_robot_id = 0;
    ev.receiver_id = rx;
    ev.packet = pkt;
    ev.packet.source_id = static_cast<std::uint8_t>(source);
    ev.t_start = static_cast<Ns>(t_ns);
    ev.from_origin = origin;
    return ev;
}

}  // namespace

TEST_CASE("closed-form range and elevation from crossing times") {
    double t_l = 5.0e6;
    double t_r = t_l + kDtLrNs;
    double t_m = (t_l + t_r) / 2.0 + kDtMidNs;

    auto rel = ideal_relative(t_l, t_m, t_r, kOmega, kR, kPhi);
    CHECK(rel.range == doctest::Approx(0.3).epsilon(1e-12));
    REQUIRE(rel.alpha.has_value());
    CHECK(*rel.alpha == doctest::Approx(deg_to_rad(12.0)).epsilon(1e-12));

    SUBCASE("no middle crossing leaves elevation empty") {
        auto r2 = ideal_relative(t_l, std::nullopt, t_r, kOmega, kR, kPhi);
        CHECK(r2.range == doctest::Approx(0.3).epsilon(1e-12));
        CHECK(!r2.alpha.has_value());
    }
    SUBCASE("negative middle offset flips the elevation sign") {
        auto r2 = ideal_relative(t_l, (t_l + t_r) / 2.0 - kDtMidNs, t_r, kOmega, kR, kPhi);
        CHECK(*r2.alpha == doctest::Approx(-deg_to_rad(12.0)).epsilon(1e-12));
    }
    SUBCASE("range shrinks toward the receiver ring radius") {
        // dt of half a revolution puts the transmitter on the ring
        auto r2 = ideal_relative(0.0, std::nullopt, kPeriodNs / 2.0, kOmega, kR, kPhi);
        CHECK(r2.range == doctest::Approx(kR).epsilon(1e-12));
    }
    SUBCASE("degenerate separations throw") {
        CHECK_THROWS_AS(ideal_relative(t_l, std::nullopt, t_l, kOmega, kR, kPhi),
                        DomainError);
        CHECK_THROWS_AS(ideal_relative(t_r, std::nullopt, t_l, kOmega, kR, kPhi),
                        DomainError);
        CHECK_THROWS_AS(
            ideal_relative(t_l, std::nullopt, t_l + kPeriodNs, kOmega, kR, kPhi),
            DomainError);
    }
}

TEST_CASE("first-order uncertainty propagation") {
    const double sigma_t = 21.7e-6;
    auto u = propagate_uncertainty(0.3, deg_to_rad(12.0), kOmega, kR, kPhi, sigma_t);
    CHECK(u.sigma_r == doctest::Approx(0.005423093986389555).epsilon(1e-12));
    CHECK(u.sigma_alpha == doctest::Approx(0.006993842549971004).epsilon(1e-12));
    CHECK(u.sigma_theta == doctest::Approx(0.0024102639939509135).epsilon(1e-12));

    SUBCASE("range noise grows with the square of range") {
        auto near = propagate_uncertainty(0.15, 0.0, kOmega, kR, kPhi, sigma_t);
        auto far = propagate_uncertainty(0.45, 0.0, kOmega, kR, kPhi, sigma_t);
        CHECK(far.sigma_r / near.sigma_r == doctest::Approx(9.0).epsilon(1e-12));
    }
    SUBCASE("elevation noise shrinks off-axis") {
        auto flat = propagate_uncertainty(0.3, 0.0, kOmega, kR, kPhi, sigma_t);
        auto steep = propagate_uncertainty(0.3, deg_to_rad(35.0), kOmega, kR, kPhi, sigma_t);
        CHECK(steep.sigma_alpha < flat.sigma_alpha);
        CHECK(steep.sigma_alpha ==
              doctest::Approx(flat.sigma_alpha * std::pow(std::cos(deg_to_rad(35.0)), 2))
                  .epsilon(1e-12));
    }
}

TEST_CASE("pass accumulation groups by neighbor and gap") {
    TimingAccumulator acc(kPeriodNs / 3.0);
    double base = 10.0e6;
    acc.add(5, ReceiverId::Left, Origin::Bottom, base);
    acc.add(5, ReceiverId::Middle, Origin::Bottom, base + 0.6e6);
    acc.add(5, ReceiverId::Right, Origin::Bottom, base + 1.7e6);

    SUBCASE("open passes are not returned") {
        CHECK(acc.collect(base + 2.0e6).empty());
    }
    SUBCASE("idle passes close") {
        auto recs = acc.collect(base + 1.7e6 + kPeriodNs / 2.0);
        REQUIRE(recs.size() == 1);
        const auto& r = recs[0];
        CHECK(r.neighbor_id == 5);
        CHECK(r.pass_index == 0);
        CHECK(r.origin == Origin::Bottom);
        CHECK(r.complete());
        CHECK(*r.t_left == base);
        CHECK(*r.t_middle == base + 0.6e6);
        CHECK(*r.t_right == base + 1.7e6);
        CHECK(*r.t_right - *r.t_left < kPeriodNs);  // one pass spans < 1 rev
    }
    SUBCASE("earliest packet per receiver wins") {
        acc.add(5, ReceiverId::Left, Origin::Bottom, base + 0.08e6);
        acc.add(5, ReceiverId::Left, Origin::Bottom, base - 0.05e6);
        auto recs = acc.flush();
        REQUIRE(recs.size() == 1);
        CHECK(*recs[0].t_left == base - 0.05e6);
    }
    SUBCASE("a gap larger than the threshold starts a new pass") {
        double next = base + kPeriodNs;
        acc.add(5, ReceiverId::Left, Origin::Bottom, next);
        acc.add(5, ReceiverId::Right, Origin::Bottom, next + 1.7e6);
        auto recs = acc.flush();
        REQUIRE(recs.size() == 2);
        CHECK(recs[0].pass_index == 0);
        CHECK(recs[1].pass_index == 1);
        CHECK(*recs[1].t_left == next);
        CHECK(!recs[1].t_middle);
    }
    SUBCASE("neighbors accumulate independently") {
        acc.add(9, ReceiverId::Left, Origin::Bottom, base + 5.0e6);
        auto recs = acc.flush();
        REQUIRE(recs.size() == 2);
        CHECK(recs[0].neighbor_id == 5);
        CHECK(recs[1].neighbor_id == 9);
    }
}

TEST_CASE("origin selection never mixes transmitters") {
    TimingAccumulator acc(kPeriodNs / 3.0);
    double base = 10.0e6;

    SUBCASE("majority wins") {
        acc.add(5, ReceiverId::Left, Origin::Top, base);
        acc.add(5, ReceiverId::Middle, Origin::Top, base + 0.5e6);
        acc.add(5, ReceiverId::Right, Origin::Top, base + 1.7e6);
        acc.add(5, ReceiverId::Middle, Origin::Bottom, base + 0.6e6);
        auto recs = acc.flush();
        REQUIRE(recs.size() == 1);
        CHECK(recs[0].origin == Origin::Top);
        CHECK(recs[0].complete());
        CHECK(*recs[0].t_middle == base + 0.5e6);
    }
    SUBCASE("ties go to the bottom transmitter") {
        acc.add(5, ReceiverId::Left, Origin::Top, base);
        acc.add(5, ReceiverId::Right, Origin::Top, base + 1.7e6);
        acc.add(5, ReceiverId::Left, Origin::Bottom, base + 0.02e6);
        acc.add(5, ReceiverId::Right, Origin::Bottom, base + 1.72e6);
        auto recs = acc.flush();
        REQUIRE(recs.size() == 1);
        CHECK(recs[0].origin == Origin::Bottom);
        CHECK(*recs[0].t_left == base + 0.02e6);
        CHECK(!recs[0].t_middle);
    }
    SUBCASE("losing origin's times are discarded, not merged") {
        acc.add(5, ReceiverId::Left, Origin::Bottom, base);
        acc.add(5, ReceiverId::Right, Origin::Bottom, base + 1.7e6);
        acc.add(5, ReceiverId::Middle, Origin::Top, base + 0.6e6);
        auto recs = acc.flush();
        REQUIRE(recs.size() == 1);
        CHECK(recs[0].origin == Origin::Bottom);
        CHECK(!recs[0].t_middle);
    }
}

TEST_CASE("message reassembly tracks the latest neighbor state") {
    MessageAssembler asm_;
    const Vec3 pos{0.125, -0.34, 0.056};

    SUBCASE("beacon position round trip") {
        auto pkts = position_packets(7, pos);
        REQUIRE(pkts.size() == 3);
        double t = 1e6;
        for (const auto& p : pkts)
            asm_.add(reception(7, ReceiverId::Left, Origin::Bottom, t += 75e3, p), 3);
        auto st = asm_.latest(7);
        REQUIRE(st.has_value());
        CHECK((st->position - pos).norm() < 1e-9);
        CHECK(!st->sigma_xy);
        CHECK(st->decode_time == doctest::Approx(t));
    }
    SUBCASE("drone position with uncertainty") {
        auto pkts = position_sigma_packets(9, pos, 0.0123);
        REQUIRE(pkts.size() == 4);
        double t = 1e6;
        // out of order and with a duplicate seen on another receiver
        asm_.add(reception(9, ReceiverId::Left, Origin::Bottom, t + 3e5, pkts[3]), 4);
        asm_.add(reception(9, ReceiverId::Right, Origin::Bottom, t + 1e5, pkts[1]), 4);
        asm_.add(reception(9, ReceiverId::Middle, Origin::Bottom, t + 1.2e5, pkts[1]), 4);
        asm_.add(reception(9, ReceiverId::Left, Origin::Bottom, t, pkts[0]), 4);
        CHECK(!asm_.latest(9));
        asm_.add(reception(9, ReceiverId::Left, Origin::Bottom, t + 2e5, pkts[2]), 4);
        auto st = asm_.latest(9);
        REQUIRE(st.has_value());
        CHECK((st->position - pos).norm() < 1e-9);
        REQUIRE(st->sigma_xy.has_value());
        CHECK(*st->sigma_xy == doctest::Approx(0.0123).epsilon(1e-9));
    }
    SUBCASE("a drone with no estimate reports no sigma") {
        auto pkts = position_sigma_packets(9, pos, std::nullopt);
        double t = 1e6;
        for (const auto& p : pkts)
            asm_.add(reception(9, ReceiverId::Left, Origin::Bottom, t += 75e3, p), 4);
        auto st = asm_.latest(9);
        REQUIRE(st.has_value());
        CHECK(!st->sigma_xy);
    }
    SUBCASE("corrupted packet spoils one cycle, the retransmission recovers") {
        auto pkts = position_packets(7, pos);
        auto bad = pkts;
        bad[1].payload[0] ^= 0x10;  // bit flip that keeps the message crc field
        double t = 1e6;
        for (const auto& p : bad)
            asm_.add(reception(7, ReceiverId::Left, Origin::Bottom, t += 75e3, p), 3);
        CHECK(!asm_.latest(7));
        for (const auto& p : pkts)
            asm_.add(reception(7, ReceiverId::Left, Origin::Bottom, t += 75e3, p), 3);
        CHECK(asm_.latest(7).has_value());
    }
    SUBCASE("newer message replaces the state") {
        auto first = position_packets(7, pos);
        Vec3 pos2{0.2, 0.1, -0.05};
        auto second = position_packets(7, pos2);
        double t = 1e6;
        for (const auto& p : first)
            asm_.add(reception(7, ReceiverId::Left, Origin::Bottom, t += 75e3, p), 3);
        for (const auto& p : second)
            asm_.add(reception(7, ReceiverId::Left, Origin::Bottom, t += 75e3, p), 3);
        auto st = asm_.latest(7);
        REQUIRE(st.has_value());
        CHECK((st->position - pos2).norm() < 1e-9);
    }
    SUBCASE("stale partials can be expired") {
        auto pkts = position_packets(7, pos);
        asm_.add(reception(7, ReceiverId::Left, Origin::Bottom, 1e6, pkts[0]), 3);
        asm_.add(reception(7, ReceiverId::Left, Origin::Bottom, 1.1e6, pkts[1]), 3);
        asm_.expire_partials_before(2e6);
        asm_.add(reception(7, ReceiverId::Left, Origin::Bottom, 3e6, pkts[2]), 3);
        CHECK(!asm_.latest(7));
    }
}

TEST_CASE("calibration table serialization") {
    auto t = CalibrationTable::ideal(kR, kPhi, kOmega, 21.7e-6);
    CHECK(t.r_eff == doctest::Approx(kR).epsilon(1e-12));
    CHECK(t.alpha_k == doctest::Approx(2.1445069205095586).epsilon(1e-12));
    CHECK(t.c0 == 0.0);
    CHECK(t.sigma_r_coeff * 0.3 * 0.3 == doctest::Approx(0.005423093986389555).epsilon(1e-12));

    t.residual_r_rms = 1.25e-4;
    auto text = t.to_json();
    auto back = CalibrationTable::from_json(text);
    CHECK(back.r_eff == t.r_eff);
    CHECK(back.alpha_k == t.alpha_k);
    CHECK(back.sigma_facing == t.sigma_facing);
    CHECK(back.residual_r_rms == t.residual_r_rms);

    SUBCASE("unknown schema version is rejected") {
        auto j = text;
        auto pos = j.find("\"schema_version\": 1");
        REQUIRE(pos != std::string::npos);
        j.replace(pos, std::string("\"schema_version\": 1").size(), "\"schema_version\": 2");
        CHECK_THROWS_AS(CalibrationTable::from_json(j), std::runtime_error);
    }
}

TEST_CASE("timing records become calibrated measurements") {
    const auto table = CalibrationTable::ideal(kR, kPhi, kOmega, 21.7e-6);
    GeometryParams geom;

    TimingRecord rec;
    rec.neighbor_id = 7;
    rec.origin = Origin::Bottom;
    rec.t_left = 5.0e6;
    rec.t_right = 5.0e6 + kDtLrNs;
    rec.t_middle = (*rec.t_left + *rec.t_right) / 2.0 + kDtMidNs;
    rec.close_time = *rec.t_right;

    NeighborState neighbor;
    neighbor.position = {0.1, 0.4, 0.12};
    neighbor.sigma_xy = 0.004;
    neighbor.decode_time = 4.0e6;

    auto m = to_measurement(rec, table, kOmega, neighbor, geom);
    CHECK(m.range == doctest::Approx(0.3).epsilon(1e-12));
    REQUIRE(m.alpha.has_value());
    CHECK(*m.alpha == doctest::Approx(deg_to_rad(12.0)).epsilon(1e-12));
    CHECK(m.sigma_r == doctest::Approx(0.005423093986389555).epsilon(1e-9));
    CHECK(m.t_facing == doctest::Approx((*rec.t_left + *rec.t_right) / 2.0));
    CHECK(m.neighbor_pos.z == doctest::Approx(0.12 + geom.z_offset_bottom).epsilon(1e-12));
    CHECK(*m.neighbor_sigma_xy == doctest::Approx(0.004));

    SUBCASE("top origin shifts the transmitter point up") {
        rec.origin = Origin::Top;
        auto m2 = to_measurement(rec, table, kOmega, neighbor, geom);
        CHECK(m2.neighbor_pos.z == doctest::Approx(0.12 + geom.z_offset_top).epsilon(1e-12));
    }
    SUBCASE("missing middle crossing leaves elevation empty") {
        rec.t_middle.reset();
        auto m2 = to_measurement(rec, table, kOmega, neighbor, geom);
        CHECK(!m2.alpha);
        CHECK(m2.range == doctest::Approx(0.3).epsilon(1e-12));
    }
    SUBCASE("missing side timing is rejected") {
        rec.t_left.reset();
        try {
            to_measurement(rec, table, kOmega, neighbor, geom);
            CHECK(false);
        } catch (const MeasurementError& e) {
            CHECK(e.kind() == MeasurementErrorKind::IncompleteTiming);
        }
    }
    SUBCASE("stale neighbor report is rejected") {
        neighbor.decode_time = *rec.t_right - 4.0 * kPeriodNs;
        try {
            to_measurement(rec, table, kOmega, neighbor, geom);
            CHECK(false);
        } catch (const MeasurementError& e) {
            CHECK(e.kind() == MeasurementErrorKind::StaleMessage);
        }
    }
    SUBCASE("timing outside the calibrated span is rejected") {
        rec.t_right = *rec.t_left + kPeriodNs * 0.51;
        try {
            to_measurement(rec, table, kOmega, neighbor, geom);
            CHECK(false);
        } catch (const MeasurementError& e) {
            CHECK(e.kind() == MeasurementErrorKind::OutOfDomain);
        }
    }
    SUBCASE("middle offset outside the calibrated span drops elevation only") {
        auto narrow = table;
        narrow.delta_min = -0.01;
        narrow.delta_max = 0.01;
        auto m2 = to_measurement(rec, narrow, kOmega, neighbor, geom);
        CHECK(!m2.alpha);
        CHECK(m2.range == doctest::Approx(0.3).epsilon(1e-12));
    }
}

TEST_CASE("ideal-channel calibration recovers the analytic maps") {
    CalibrateConfig cfg;
    cfg.r_min = 0.15;
    cfg.r_max = 0.40;
    cfg.r_steps = 5;
    cfg.alpha_min_deg = -35.0;
    cfg.alpha_max_deg = 35.0;
    cfg.alpha_steps = 5;
    cfg.revolutions_per_point = 3;
    cfg.ideal_channel = true;

    auto out = calibrate(cfg);
    CHECK(out.table.r_eff == doctest::Approx(kR).epsilon(1e-6));
    CHECK(std::abs(out.table.c0) < 1e-6);
    CHECK(out.table.alpha_k == doctest::Approx(2.1445069205095586).epsilon(1e-6));
    CHECK(std::abs(out.table.c1) < 1e-6);
    CHECK(out.table.residual_r_rms < 1e-9);
    CHECK(out.table.residual_alpha_rms < 1e-9);
    CHECK(out.points.size() >= 20);  // far corners may be out of link range
    for (const auto& p : out.points) CHECK(p.samples >= 3);
}

TEST_CASE("full-pipeline calibration fits physical noise maps") {
    CalibrateConfig cfg;
    cfg.r_min = 0.15;
    cfg.r_max = 0.40;
    cfg.r_steps = 4;
    cfg.alpha_min_deg = -30.0;
    cfg.alpha_max_deg = 30.0;
    cfg.alpha_steps = 3;
    cfg.revolutions_per_point = 15;
    cfg.seed = 99;

    auto out = calibrate(cfg);
    const auto& t = out.table;
    CHECK(t.r_eff > 0.035);
    CHECK(t.r_eff < 0.045);
    CHECK(std::abs(t.c0) < 0.02);
    CHECK(t.alpha_k == doctest::Approx(2.1445069205095586).epsilon(0.2));
    CHECK(t.sigma_r_exp > 1.4);
    CHECK(t.sigma_r_exp < 2.6);
    CHECK(t.sigma_r_coeff > 0.0);
    CHECK(t.sigma_facing > 5e-6);
    CHECK(t.sigma_facing < 40e-6);
    CHECK(t.residual_r_rms < 0.005);
    CHECK(t.x_min < t.x_max);

    // applying the fit to exact timing lands near the true range
    TimingRecord rec;
    rec.t_left = 1.0e6;
    rec.t_right = 1.0e6 + kDtLrNs;
    rec.close_time = *rec.t_right;
    NeighborState nb;
    nb.decode_time = 1.0e6;
    auto m = to_measurement(rec, t, kOmega, nb, GeometryParams{});
    CHECK(std::abs(m.range - 0.3) < 0.005);

    SUBCASE("an unreachable residual bound raises a fit error") {
        cfg.residual_r_bound = 1e-9;
        CHECK_THROWS_AS(calibrate(cfg), FitDomainError);
    }
}
