#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>
#include <variant>

#include "spinloc/analysis.hpp"
#include "spinloc/config.hpp"
#include "spinloc/geometry.hpp"
#include "spinloc/localization.hpp"
#include "spinloc/protocol.hpp"
#include "spinloc/sensing.hpp"
#include "spinloc/simengine.hpp"

namespace py = pybind11;
using namespace spinloc;

namespace {

Vec3 vec3_from_seq(const py::sequence& s) {
    if (py::len(s) != 3) throw py::value_error("expected a 3-element sequence");
    return Vec3{s[0].cast<double>(), s[1].cast<double>(), s[2].cast<double>()};
}

}  // namespace

PYBIND11_MODULE(spinloc, m) {
    m.doc() = "spinning-receiver optical localization simulator";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<SolveError>(m, "SolveError", PyExc_RuntimeError);
    py::register_exception<MeasurementError>(m, "MeasurementError", PyExc_RuntimeError);
    py::register_exception<FitDomainError>(m, "FitDomainError", PyExc_RuntimeError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);

    py::class_<Vec3>(m, "Vec3")
        .def(py::init<>())
        .def(py::init<double, double, double>())
        .def(py::init(&vec3_from_seq))
        .def_readwrite("x", &Vec3::x)
        .def_readwrite("y", &Vec3::y)
        .def_readwrite("z", &Vec3::z)
        .def("__iter__",
             [](const Vec3& v) { return py::iter(py::make_tuple(v.x, v.y, v.z)); })
        .def("__repr__", [](const Vec3& v) {
            std::ostringstream out;
            out << "Vec3(" << v.x << ", " << v.y << ", " << v.z << ")";
            return out.str();
        });
    py::implicitly_convertible<py::sequence, Vec3>();

    py::enum_<Origin>(m, "Origin")
        .value("Top", Origin::Top)
        .value("Bottom", Origin::Bottom);
    py::enum_<ReceiverId>(m, "ReceiverId")
        .value("Left", ReceiverId::Left)
        .value("Middle", ReceiverId::Middle)
        .value("Right", ReceiverId::Right);
    py::enum_<Role>(m, "Role").value("Beacon", Role::Beacon).value("Drone", Role::Drone);

    // protocol
    m.def(
        "crc4",
        [](const py::bytes& data) {
            const std::string s = data;
            return crc4(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
        },
        py::arg("data"), "4-bit CRC of a byte string");

    py::class_<Packet>(m, "Packet")
        .def(py::init<>())
        .def_readwrite("source_id", &Packet::source_id)
        .def_readwrite("packet_index", &Packet::packet_index)
        .def_readwrite("msg_crc", &Packet::msg_crc)
        .def_readwrite("origin", &Packet::origin)
        .def_property(
            "payload",
            [](const Packet& p) {
                return py::bytes(reinterpret_cast<const char*>(p.payload.data()), 2);
            },
            [](Packet& p, const py::bytes& b) {
                const std::string s = b;
                if (s.size() != 2) throw py::value_error("payload must be 2 bytes");
                p.payload = {static_cast<std::uint8_t>(s[0]),
                             static_cast<std::uint8_t>(s[1])};
            })
        .def("__eq__", [](const Packet& a, const Packet& b) { return a == b; });

    py::class_<Pulse>(m, "Pulse")
        .def_readwrite("on", &Pulse::on)
        .def_readwrite("off", &Pulse::off);
    py::class_<PulseTrain>(m, "PulseTrain")
        .def_readwrite("start_time", &PulseTrain::start_time)
        .def_readwrite("edges", &PulseTrain::edges);

    m.def("encode_packet", &encode_packet, py::arg("packet"), py::arg("start_time") = 0);
    m.def(
        "decode_pulse_train",
        [](const PulseTrain& train, Ns jitter_tol_ns) {
            const auto result = decode_pulse_train(train, jitter_tol_ns);
            if (std::holds_alternative<DecodeError>(result))
                throw py::value_error(name(std::get<DecodeError>(result)));
            return std::get<Packet>(result);
        },
        py::arg("train"), py::arg("jitter_tol_ns") = 50,
        "Decode a pulse train; raises ValueError naming the defect on failure");

    m.def("position_packets", &position_packets, py::arg("source_id"), py::arg("pos"));
    m.def("position_sigma_packets", &position_sigma_packets, py::arg("source_id"),
          py::arg("pos"), py::arg("sigma_xy"));

    // geometry
    py::class_<GeometryParams>(m, "GeometryParams")
        .def(py::init<>())
        .def_readwrite("receiver_offset", &GeometryParams::receiver_offset)
        .def_readwrite("phi", &GeometryParams::phi)
        .def_readwrite("z_offset_top", &GeometryParams::z_offset_top)
        .def_readwrite("z_offset_bottom", &GeometryParams::z_offset_bottom)
        .def_readwrite("body_radius", &GeometryParams::body_radius);

    m.def(
        "crossing_times",
        [](const Vec3& tx_pos, double omega, double phase, ReceiverId receiver,
           const GeometryParams& params, double window0_ns, double window1_ns) {
            const RobotGeometry geom = make_geometry(params);
            const SpinState spin{{0, 0, 0}, omega, 0, phase};
            return mid_plane_crossing_times(spin, geom.rx(receiver), tx_pos, window0_ns,
                                            window1_ns);
        },
        py::arg("tx_pos"), py::arg("omega"), py::arg("phase"), py::arg("receiver"),
        py::arg("params") = GeometryParams{}, py::arg("window0_ns") = 0.0,
        py::arg("window1_ns") = 40.0e6,
        "Times (ns) a receiver's mid-surface sweeps a transmitter at tx_pos, for a "
        "robot spinning at the origin");

    // sensing
    py::class_<IdealRelative>(m, "IdealRelative")
        .def_readonly("range", &IdealRelative::range)
        .def_readonly("alpha", &IdealRelative::alpha);
    m.def("ideal_relative", &ideal_relative, py::arg("t_left_ns"), py::arg("t_middle_ns"),
          py::arg("t_right_ns"), py::arg("omega"), py::arg("receiver_offset"),
          py::arg("phi"));

    py::class_<Uncertainty>(m, "Uncertainty")
        .def_readonly("sigma_r", &Uncertainty::sigma_r)
        .def_readonly("sigma_alpha", &Uncertainty::sigma_alpha)
        .def_readonly("sigma_theta", &Uncertainty::sigma_theta);
    m.def("propagate_uncertainty", &propagate_uncertainty, py::arg("range"),
          py::arg("alpha"), py::arg("omega"), py::arg("receiver_offset"), py::arg("phi"),
          py::arg("sigma_t"));

    py::class_<CalibrationTable>(m, "CalibrationTable")
        .def(py::init<>())
        .def_readwrite("r_eff", &CalibrationTable::r_eff)
        .def_readwrite("c0", &CalibrationTable::c0)
        .def_readwrite("alpha_k", &CalibrationTable::alpha_k)
        .def_readwrite("c1", &CalibrationTable::c1)
        .def_readwrite("sigma_r_coeff", &CalibrationTable::sigma_r_coeff)
        .def_readwrite("sigma_r_exp", &CalibrationTable::sigma_r_exp)
        .def_readwrite("sigma_alpha_coeff", &CalibrationTable::sigma_alpha_coeff)
        .def_readwrite("sigma_facing", &CalibrationTable::sigma_facing)
        .def_readonly("residual_r_rms", &CalibrationTable::residual_r_rms)
        .def_readonly("residual_alpha_rms", &CalibrationTable::residual_alpha_rms)
        .def("to_json", &CalibrationTable::to_json)
        .def_static("from_json", &CalibrationTable::from_json, py::arg("text"))
        .def_static("ideal", &CalibrationTable::ideal, py::arg("receiver_offset"),
                    py::arg("phi"), py::arg("omega"), py::arg("sigma_t"));

    py::class_<CalibrateConfig>(m, "CalibrateConfig")
        .def(py::init<>())
        .def_readwrite("r_min", &CalibrateConfig::r_min)
        .def_readwrite("r_max", &CalibrateConfig::r_max)
        .def_readwrite("r_steps", &CalibrateConfig::r_steps)
        .def_readwrite("alpha_min_deg", &CalibrateConfig::alpha_min_deg)
        .def_readwrite("alpha_max_deg", &CalibrateConfig::alpha_max_deg)
        .def_readwrite("alpha_steps", &CalibrateConfig::alpha_steps)
        .def_readwrite("revolutions_per_point", &CalibrateConfig::revolutions_per_point)
        .def_readwrite("spin_hz", &CalibrateConfig::spin_hz)
        .def_readwrite("seed", &CalibrateConfig::seed)
        .def_readwrite("ideal_channel", &CalibrateConfig::ideal_channel);

    py::class_<CalibrationPointStats>(m, "CalibrationPointStats")
        .def_readonly("r_true", &CalibrationPointStats::r_true)
        .def_readonly("alpha_true_deg", &CalibrationPointStats::alpha_true_deg)
        .def_readonly("samples", &CalibrationPointStats::samples)
        .def_readonly("r_mean", &CalibrationPointStats::r_mean)
        .def_readonly("r_std", &CalibrationPointStats::r_std)
        .def_readonly("alpha_mean", &CalibrationPointStats::alpha_mean)
        .def_readonly("alpha_std", &CalibrationPointStats::alpha_std);

    py::class_<CalibrationOutcome>(m, "CalibrationOutcome")
        .def_readonly("table", &CalibrationOutcome::table)
        .def_readonly("points", &CalibrationOutcome::points);
    m.def("calibrate", &calibrate, py::arg("config") = CalibrateConfig{},
          py::call_guard<py::gil_scoped_release>());

    // localization
    py::class_<FacingObservation>(m, "FacingObservation")
        .def(py::init<>())
        .def_readwrite("neighbor_id", &FacingObservation::neighbor_id)
        .def_readwrite("t_facing", &FacingObservation::t_facing)
        .def_readwrite("t_facing_prev", &FacingObservation::t_facing_prev)
        .def_readwrite("range", &FacingObservation::range)
        .def_readwrite("sigma_r", &FacingObservation::sigma_r)
        .def_readwrite("alpha", &FacingObservation::alpha)
        .def_readwrite("sigma_alpha", &FacingObservation::sigma_alpha)
        .def_readwrite("neighbor_pos", &FacingObservation::neighbor_pos)
        .def_readwrite("neighbor_sigma_xy", &FacingObservation::neighbor_sigma_xy);

    py::class_<SolverConfig>(m, "SolverConfig")
        .def(py::init<>())
        .def_readwrite("max_iterations", &SolverConfig::max_iterations)
        .def_readwrite("convergence_tol", &SolverConfig::convergence_tol)
        .def_readwrite("initial_step", &SolverConfig::initial_step)
        .def_readwrite("sigma_t", &SolverConfig::sigma_t)
        .def_readwrite("min_neighbors_xy", &SolverConfig::min_neighbors_xy)
        .def_readwrite("filter_tau", &SolverConfig::filter_tau);

    py::class_<PositionEstimate>(m, "PositionEstimate")
        .def_readonly("s", &PositionEstimate::s)
        .def_readonly("t_x", &PositionEstimate::t_x)
        .def_readonly("cov_xy", &PositionEstimate::cov_xy)
        .def_readonly("sigma_xy", &PositionEstimate::sigma_xy)
        .def_readonly("omega", &PositionEstimate::omega)
        .def_readonly("n_neighbors", &PositionEstimate::n_neighbors)
        .def_readonly("iterations", &PositionEstimate::iterations);

    m.def("estimate_omega", &estimate_omega, py::arg("observations"));
    m.def(
        "solve_xy",
        [](const std::vector<FacingObservation>& obs, double omega,
           const SolverConfig& config, const std::optional<PositionEstimate>& initial) {
            return solve_xy(obs, omega, config, initial ? &*initial : nullptr);
        },
        py::arg("observations"), py::arg("omega"), py::arg("config") = SolverConfig{},
        py::arg("initial") = std::nullopt);
    m.def("solve_z", &solve_z, py::arg("s_xy"), py::arg("sigma_xy"),
          py::arg("observations"));
    m.def("filter_estimate", &filter_estimate, py::arg("previous"), py::arg("next"),
          py::arg("dt_seconds"), py::arg("tau_seconds"));

    // scenario config and engine
    py::class_<Waypoint>(m, "Waypoint")
        .def(py::init<>())
        .def_readwrite("t_s", &Waypoint::t_s)
        .def_readwrite("pos", &Waypoint::pos);

    py::class_<RobotSpec>(m, "RobotSpec")
        .def(py::init<>())
        .def_readwrite("id", &RobotSpec::id)
        .def_readwrite("role", &RobotSpec::role)
        .def_readwrite("position", &RobotSpec::position)
        .def_readwrite("spin_phase", &RobotSpec::spin_phase)
        .def_readwrite("waypoints", &RobotSpec::waypoints)
        .def_readwrite("allowed_peers", &RobotSpec::allowed_peers);

    py::class_<ScenarioConfig>(m, "ScenarioConfig")
        .def(py::init<>())
        .def_readwrite("duration_s", &ScenarioConfig::duration_s)
        .def_readwrite("warmup_s", &ScenarioConfig::warmup_s)
        .def_readwrite("seed", &ScenarioConfig::seed)
        .def_readwrite("spin_hz", &ScenarioConfig::spin_hz)
        .def_readwrite("ideal_channel", &ScenarioConfig::ideal_channel)
        .def_readwrite("log_channel", &ScenarioConfig::log_channel)
        .def_readwrite("log_no_peer_variant", &ScenarioConfig::log_no_peer_variant)
        .def_readwrite("calibration_file", &ScenarioConfig::calibration_file)
        .def_readwrite("robots", &ScenarioConfig::robots)
        .def("describe", &describe_scenario);

    m.def("load_scenario", &load_scenario, py::arg("path"));
    m.def("parse_scenario", &parse_scenario, py::arg("text"),
          py::arg("origin") = "config");

    py::class_<TruthRow>(m, "TruthRow")
        .def_readonly("time", &TruthRow::time)
        .def_readonly("robot", &TruthRow::robot)
        .def_readonly("pos", &TruthRow::pos);
    py::class_<EstimateRow>(m, "EstimateRow")
        .def_readonly("time", &EstimateRow::time)
        .def_readonly("robot", &EstimateRow::robot)
        .def_readonly("s", &EstimateRow::s)
        .def_readonly("sigma_xy", &EstimateRow::sigma_xy)
        .def_readonly("omega", &EstimateRow::omega)
        .def_readonly("n_neighbors", &EstimateRow::n_neighbors);

    py::class_<RobotCounters>(m, "RobotCounters")
        .def_readonly("tx_packets", &RobotCounters::tx_packets)
        .def_readonly("rx_decoded", &RobotCounters::rx_decoded)
        .def_readonly("rx_lost", &RobotCounters::rx_lost)
        .def_readonly("records", &RobotCounters::records)
        .def_readonly("measurements", &RobotCounters::measurements)
        .def_readonly("solves", &RobotCounters::solves)
        .def_readonly("underdetermined", &RobotCounters::underdetermined)
        .def_readonly("no_convergence", &RobotCounters::no_convergence);

    py::class_<RunResult>(m, "RunResult")
        .def_readonly("truth", &RunResult::truth)
        .def_readonly("estimates", &RunResult::estimates)
        .def_readonly("estimates_no_peer", &RunResult::estimates_no_peer)
        .def_readonly("robots", &RunResult::robots)
        .def_readonly("duration_s", &RunResult::duration_s)
        .def_readonly("warmup_s", &RunResult::warmup_s)
        .def_readonly("spin_hz", &RunResult::spin_hz)
        .def_readonly("duty_cycle", &RunResult::duty_cycle);

    m.def("run_scenario", &run_scenario, py::arg("config"), py::arg("table"),
          py::call_guard<py::gil_scoped_release>());
    m.def("write_run_outputs", &write_run_outputs, py::arg("result"), py::arg("out_dir"));

    // analysis
    py::class_<ErrorSeries>(m, "ErrorSeries")
        .def_readonly("t_s", &ErrorSeries::t_s)
        .def_readonly("e", &ErrorSeries::e);
    py::class_<AxisStats>(m, "AxisStats")
        .def_readonly("rmse", &AxisStats::rmse)
        .def_readonly("mean", &AxisStats::mean)
        .def_readonly("stddev", &AxisStats::stddev)
        .def_readonly("rmse_xy", &AxisStats::rmse_xy)
        .def_readonly("rmse_3d", &AxisStats::rmse_3d)
        .def_readonly("max_xy", &AxisStats::max_xy);
    py::class_<SpectrumReport>(m, "SpectrumReport")
        .def_readonly("freq_hz", &SpectrumReport::freq_hz)
        .def_readonly("rms", &SpectrumReport::rms)
        .def_readonly("chunks", &SpectrumReport::chunks)
        .def_readonly("parseval_ratio", &SpectrumReport::parseval_ratio);

    m.def("error_series", &error_series, py::arg("estimates"), py::arg("truth"),
          py::arg("robot"), py::arg("warmup_s") = 0.0);
    m.def("error_stats", &error_stats, py::arg("series"));
    m.def("error_spectrum", &error_spectrum, py::arg("series"),
          py::arg("resample_hz") = 100.0, py::arg("chunk_s") = 5.0);
    m.def("band_rms", &band_rms, py::arg("report"), py::arg("axis"), py::arg("min_hz"));
}
