#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spinloc/analysis.hpp"
#include "spinloc/config.hpp"
#include "spinloc/sensing.hpp"
#include "spinloc/simengine.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spinloc;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

void atomic_write_text(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        f << text;
    }
    fs::rename(tmp, path);
}

std::string slurp(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(path.string() + ": cannot open");
    std::ostringstream out;
    out << f.rdbuf();
    return out.str();
}

// The calibration file path is resolved against the scenario's directory.
CalibrationTable resolve_table(const ScenarioConfig& cfg,
                               const std::string& config_path) {
    if (cfg.calibration_file.empty())
        return CalibrationTable::ideal(cfg.geometry.receiver_offset, cfg.geometry.phi,
                                       kTwoPi * cfg.spin_hz, cfg.solver.sigma_t);
    fs::path p = cfg.calibration_file;
    if (p.is_relative() && !config_path.empty())
        p = fs::path(config_path).parent_path() / p;
    try {
        return CalibrationTable::from_json(slurp(p));
    } catch (const std::exception& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

json stats_json(const AxisStats& st, std::size_t samples) {
    json j;
    j["rmse_mm"] = {st.rmse.x * 1e3, st.rmse.y * 1e3, st.rmse.z * 1e3};
    j["stddev_mm"] = {st.stddev.x * 1e3, st.stddev.y * 1e3, st.stddev.z * 1e3};
    j["mean_mm"] = {st.mean.x * 1e3, st.mean.y * 1e3, st.mean.z * 1e3};
    j["rmse_xy_mm"] = st.rmse_xy * 1e3;
    j["rmse_3d_mm"] = st.rmse_3d * 1e3;
    j["max_xy_mm"] = st.max_xy * 1e3;
    j["samples"] = samples;
    return j;
}

json mean_std(const std::vector<double>& values) {
    double sum = 0.0, sq = 0.0;
    for (double v : values) { sum += v; sq += v * v; }
    const double n = values.empty() ? 1.0 : static_cast<double>(values.size());
    const double mean = sum / n;
    json j;
    j["mean"] = mean;
    j["std"] = std::sqrt(std::max(sq / n - mean * mean, 0.0));
    j["values"] = values;
    return j;
}

// Copies an optional free-form "reference" block from the scenario file into
// the run summary so measured numbers sit beside their hardware counterparts.
void merge_reference(const std::string& config_path, const fs::path& out_dir) {
    const json raw = json::parse(slurp(config_path));
    if (!raw.contains("reference")) return;
    const fs::path summary_path = out_dir / "summary.json";
    json summary = json::parse(slurp(summary_path));
    summary["reference"] = raw["reference"];
    atomic_write_text(summary_path, summary.dump(2) + "\n");
}

std::set<int> drone_ids(const std::vector<EstimateRow>& rows) {
    std::set<int> ids;
    for (const auto& row : rows) ids.insert(row.robot);
    return ids;
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed, bool quiet) {
    ScenarioConfig cfg = load_scenario(config_path);
    if (seed) cfg.seed = *seed;
    const CalibrationTable table = resolve_table(cfg, config_path);
    const RunResult result = run_scenario(cfg, table);
    write_run_outputs(result, out_dir);
    merge_reference(config_path, out_dir);
    if (!quiet) {
        std::cout << "wrote " << out_dir << " (" << result.estimates.size()
                  << " estimates, duty " << result.duty_cycle * 100 << "%)\n";
        for (int id : drone_ids(result.estimates)) {
            const auto series =
                error_series(result.estimates, result.truth, id, cfg.warmup_s);
            if (series.e.empty()) continue;
            const auto st = error_stats(series);
            std::cout << "robot " << id << ": rmse_xy " << st.rmse_xy * 1e3
                      << " mm, rmse_z " << st.rmse.z * 1e3 << " mm over "
                      << series.e.size() << " estimates\n";
        }
    }
    return 0;
}

struct PeerComparison {
    std::vector<double> with_mm, without_mm, reduction_pct, hf_db, sigma_frac;
};

int cmd_sweep(const std::string& config_path, const std::string& out_dir,
              int replicates, std::optional<std::uint64_t> seed, bool quiet) {
    ScenarioConfig base = load_scenario(config_path);
    if (seed) base.seed = *seed;
    const CalibrationTable table = resolve_table(base, config_path);

    std::map<int, std::map<std::string, std::vector<double>>> agg;
    std::map<int, PeerComparison> peer;
    for (int k = 0; k < replicates; ++k) {
        ScenarioConfig cfg = base;
        cfg.seed = base.seed + static_cast<std::uint64_t>(k);
        const RunResult result = run_scenario(cfg, table);
        const fs::path rep_dir = fs::path(out_dir) / ("rep_" + std::to_string(k));
        write_run_outputs(result, rep_dir.string());
        merge_reference(config_path, rep_dir);

        for (int id : drone_ids(result.estimates)) {
            const auto series =
                error_series(result.estimates, result.truth, id, cfg.warmup_s);
            if (series.e.empty()) continue;
            const auto st = error_stats(series);
            auto& rows = agg[id];
            rows["rmse_x_mm"].push_back(st.rmse.x * 1e3);
            rows["rmse_y_mm"].push_back(st.rmse.y * 1e3);
            rows["rmse_z_mm"].push_back(st.rmse.z * 1e3);
            rows["rmse_xy_mm"].push_back(st.rmse_xy * 1e3);
            rows["rmse_3d_mm"].push_back(st.rmse_3d * 1e3);
            rows["stddev_x_mm"].push_back(st.stddev.x * 1e3);
            rows["stddev_y_mm"].push_back(st.stddev.y * 1e3);
            rows["stddev_z_mm"].push_back(st.stddev.z * 1e3);
            rows["max_xy_mm"].push_back(st.max_xy * 1e3);

            if (result.estimates_no_peer.empty()) continue;
            const auto np_series = error_series(result.estimates_no_peer,
                                                result.truth, id, cfg.warmup_s);
            if (np_series.e.empty()) continue;
            const auto np = error_stats(np_series);
            auto& cmp = peer[id];
            cmp.with_mm.push_back(st.rmse.x * 1e3);
            cmp.without_mm.push_back(np.rmse.x * 1e3);
            cmp.reduction_pct.push_back((1.0 - st.rmse.x / np.rmse.x) * 100.0);
            try {
                const double hf_with = band_rms(error_spectrum(series), 0, 2.0);
                const double hf_np = band_rms(error_spectrum(np_series), 0, 2.0);
                if (hf_with > 0.0 && hf_np > 0.0)
                    cmp.hf_db.push_back(20.0 * std::log10(hf_np / hf_with));
            } catch (const std::invalid_argument&) {
                // runs shorter than one spectrum chunk skip the band metric
            }
            std::map<Ns, double> np_sigma;
            for (const auto& row : result.estimates_no_peer)
                if (row.robot == id) np_sigma[row.time] = row.sigma_xy;
            long paired = 0, smaller = 0;
            for (const auto& row : result.estimates) {
                if (row.robot != id) continue;
                auto it = np_sigma.find(row.time);
                if (it == np_sigma.end()) continue;
                ++paired;
                if (row.sigma_xy < it->second) ++smaller;
            }
            if (paired > 0)
                cmp.sigma_frac.push_back(static_cast<double>(smaller) / paired);
        }
        if (!quiet) std::cout << "replicate " << k << " done\n";
    }

    json summary;
    summary["replicates"] = replicates;
    summary["base_seed"] = base.seed;
    json robots = json::object();
    for (const auto& [id, rows] : agg) {
        json r;
        for (const auto& [key, values] : rows) r[key] = mean_std(values);
        robots[std::to_string(id)] = r;
    }
    summary["robots"] = robots;
    if (!peer.empty()) {
        json cmp_json = json::object();
        for (const auto& [id, cmp] : peer) {
            json c;
            c["x_rms_with_mm"] = mean_std(cmp.with_mm);
            c["x_rms_without_mm"] = mean_std(cmp.without_mm);
            c["x_rms_reduction_pct"] = mean_std(cmp.reduction_pct);
            if (!cmp.hf_db.empty())
                c["hf_above_2hz_reduction_db"] = mean_std(cmp.hf_db);
            c["sigma_smaller_fraction"] = mean_std(cmp.sigma_frac);
            cmp_json[std::to_string(id)] = c;
        }
        summary["peer_comparison"] = cmp_json;
    }
    fs::create_directories(out_dir);
    atomic_write_text(fs::path(out_dir) / "sweep_summary.json", summary.dump(2) + "\n");
    if (!quiet) std::cout << "wrote " << out_dir << "/sweep_summary.json\n";
    return 0;
}

int cmd_analyze(const std::string& dir, bool quiet) {
    const auto estimates = read_estimates_csv((fs::path(dir) / "estimates.csv").string());
    const auto truth = read_truth_csv((fs::path(dir) / "truth.csv").string());
    double warmup_s = 0.0, duration_s = 0.0, spin_hz = 25.0;
    if (fs::exists(fs::path(dir) / "summary.json")) {
        const json summary = json::parse(slurp(fs::path(dir) / "summary.json"));
        warmup_s = summary.value("warmup_s", 0.0);
        duration_s = summary.value("duration_s", 0.0);
        spin_hz = summary.value("spin_hz", 25.0);
    }

    std::map<std::string, std::vector<EstimateRow>> variants;
    variants["with_peer"] = estimates;
    if (fs::exists(fs::path(dir) / "estimates_no_peer.csv"))
        variants["no_peer"] =
            read_estimates_csv((fs::path(dir) / "estimates_no_peer.csv").string());

    json report;
    std::ostringstream hist_csv, spec_csv;
    hist_csv << "robot,variant,bin_center_m,count_x,count_y,count_z\n";
    spec_csv << "robot,variant,freq_hz,rms_x,rms_y,rms_z\n";
    json robots = json::object();
    for (const auto& [variant, rows] : variants) {
        for (int id : drone_ids(rows)) {
            const auto series = error_series(rows, truth, id, warmup_s);
            if (series.e.empty()) continue;
            json entry = stats_json(error_stats(series), series.e.size());

            const auto hist = error_histogram(series);
            for (std::size_t b = 0; b < hist.bin_center.size(); ++b) {
                char line[160];
                std::snprintf(line, sizeof line, "%d,%s,%.9g,%ld,%ld,%ld\n", id,
                              variant.c_str(), hist.bin_center[b],
                              hist.counts[0][b], hist.counts[1][b], hist.counts[2][b]);
                hist_csv << line;
            }
            try {
                const auto spec = error_spectrum(series);
                for (std::size_t b = 0; b < spec.freq_hz.size(); ++b) {
                    char line[200];
                    std::snprintf(line, sizeof line, "%d,%s,%.9g,%.9g,%.9g,%.9g\n",
                                  id, variant.c_str(), spec.freq_hz[b],
                                  spec.rms[0][b], spec.rms[1][b], spec.rms[2][b]);
                    spec_csv << line;
                }
                entry["spectrum_chunks"] = spec.chunks;
                entry["parseval_ratio"] = spec.parseval_ratio;
            } catch (const std::invalid_argument&) {
                entry["spectrum_chunks"] = 0;
            }
            robots[std::to_string(id)][variant] = entry;
        }
    }
    report["robots"] = robots;

    if (fs::exists(fs::path(dir) / "channel.csv")) {
        const auto st = channel_stats(read_channel_csv((fs::path(dir) / "channel.csv").string()));
        json ch;
        ch["decoded"] = st.decoded_total;
        ch["lost"] = st.lost_total;
        ch["collision_rate"] = st.collision_rate;
        json links = json::object();
        const double revolutions = duration_s * spin_hz;
        for (const auto& [key, pair] : st.pairs) {
            json p;
            p["decoded"] = pair.decoded;
            p["unique_transmissions"] = pair.unique_transmissions;
            p["collision"] = pair.collision;
            p["random_loss"] = pair.random_loss;
            p["decode_failure"] = pair.decode_failure;
            if (revolutions > 0.0)
                p["bytes_per_revolution"] = bytes_per_revolution(pair, revolutions);
            links[std::to_string(key.first) + "<-" + std::to_string(key.second)] = p;
        }
        ch["links"] = links;
        report["channel"] = ch;
    }

    atomic_write_text(fs::path(dir) / "histogram.csv", hist_csv.str());
    atomic_write_text(fs::path(dir) / "spectrum.csv", spec_csv.str());
    atomic_write_text(fs::path(dir) / "analysis.json", report.dump(2) + "\n");
    if (!quiet)
        std::cout << "wrote " << dir << "/{analysis.json,histogram.csv,spectrum.csv}\n";
    return 0;
}

int cmd_calibrate(const std::string& out_file, const std::string& config_path,
                  std::optional<std::uint64_t> seed, bool ideal,
                  std::optional<int> revolutions, const std::string& points_file,
                  bool quiet) {
    CalibrateConfig cal;
    if (!config_path.empty()) {
        const ScenarioConfig cfg = load_scenario(config_path);
        cal.geometry = cfg.geometry;
        cal.channel = cfg.channel;
        cal.spin_hz = cfg.spin_hz;
        cal.seed = cfg.seed;
    }
    if (seed) cal.seed = *seed;
    if (revolutions) cal.revolutions_per_point = *revolutions;
    cal.ideal_channel = ideal;

    const CalibrationOutcome outcome = calibrate(cal);
    if (!out_file.empty()) {
        if (fs::path(out_file).has_parent_path())
            fs::create_directories(fs::path(out_file).parent_path());
        atomic_write_text(out_file, outcome.table.to_json());
    }
    if (!points_file.empty()) {
        std::ostringstream csv;
        csv << "r_true,alpha_true_deg,samples,r_mean,r_std,alpha_mean_rad,alpha_std_rad\n";
        for (const auto& p : outcome.points) {
            char line[220];
            std::snprintf(line, sizeof line, "%.9g,%.9g,%d,%.9g,%.9g,%.9g,%.9g\n",
                          p.r_true, p.alpha_true_deg, p.samples, p.r_mean, p.r_std,
                          p.alpha_mean, p.alpha_std);
            csv << line;
        }
        atomic_write_text(points_file, csv.str());
    }
    if (!quiet) {
        const auto& t = outcome.table;
        std::printf("r_eff=%.6f c0=%.6f alpha_k=%.4f c1=%.6f\n", t.r_eff, t.c0,
                    t.alpha_k, t.c1);
        std::printf("sigma_r=%.5f*r^%.3f sigma_alpha=%.6f*cos^2 sigma_facing=%.3gus\n",
                    t.sigma_r_coeff, t.sigma_r_exp, t.sigma_alpha_coeff,
                    t.sigma_facing * 1e6);
        std::printf("residual_r_rms=%.4fmm residual_alpha_rms=%.4fmrad\n",
                    t.residual_r_rms * 1e3, t.residual_alpha_rms * 1e3);
    }
    return 0;
}

int cmd_validate(const std::string& config_path) {
    const ScenarioConfig cfg = load_scenario(config_path);
    resolve_table(cfg, config_path);
    std::cout << describe_scenario(cfg);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spinloc: deterministic optical peer-localization simulator"};
    app.require_subcommand(1);

    std::string config_path, out_path, points_file;
    std::optional<std::uint64_t> seed;
    std::optional<int> revolutions;
    int replicates = 6;
    bool quiet = false, ideal = false;

    auto* run = app.add_subcommand("run", "simulate a scenario and write its logs");
    run->add_option("--config", config_path, "scenario JSON file")->required();
    run->add_option("--out", out_path, "output directory")->required();
    run->add_option("--seed", seed, "override the scenario seed");
    run->add_flag("--quiet", quiet, "suppress progress output");

    auto* sweep = app.add_subcommand("sweep", "run seed replicates and aggregate");
    sweep->add_option("--config", config_path, "scenario JSON file")->required();
    sweep->add_option("--out", out_path, "output directory")->required();
    sweep->add_option("--replicates", replicates, "replicate count")
        ->check(CLI::PositiveNumber);
    sweep->add_option("--seed", seed, "override the base seed");
    sweep->add_flag("--quiet", quiet, "suppress progress output");

    auto* analyze = app.add_subcommand("analyze", "post-process a run directory");
    analyze->add_option("--out", out_path, "directory holding run outputs")->required();
    analyze->add_flag("--quiet", quiet, "suppress progress output");

    auto* cal = app.add_subcommand("calibrate", "fit timing-to-geometry maps");
    cal->add_option("--out", out_path, "calibration table JSON to write")->required();
    cal->add_option("--config", config_path,
                    "scenario JSON supplying geometry/channel/spin defaults");
    cal->add_option("--seed", seed, "sweep seed");
    cal->add_option("--revolutions", revolutions, "revolutions per grid point")
        ->check(CLI::PositiveNumber);
    cal->add_option("--points", points_file, "also write per-point stats CSV");
    cal->add_flag("--ideal-channel", ideal, "exact crossing times, no packets");
    cal->add_flag("--quiet", quiet, "suppress the fit summary");

    auto* validate = app.add_subcommand("validate", "check a scenario and echo it resolved");
    validate->add_option("--config", config_path, "scenario JSON file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, out_path, seed, quiet);
        if (sweep->parsed())
            return cmd_sweep(config_path, out_path, replicates, seed, quiet);
        if (analyze->parsed()) return cmd_analyze(out_path, quiet);
        if (cal->parsed())
            return cmd_calibrate(out_path, config_path, seed, ideal, revolutions,
                                 points_file, quiet);
        if (validate->parsed()) return cmd_validate(config_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
