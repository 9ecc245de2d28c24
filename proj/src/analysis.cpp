#include "spinloc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace spinloc {

ErrorSeries error_series(const std::vector<EstimateRow>& estimates,
                         const std::vector<TruthRow>& truth, int robot,
                         double warmup_s) {
    std::vector<const TruthRow*> track;
    for (const auto& row : truth)
        if (row.robot == robot) track.push_back(&row);

    ErrorSeries out;
    if (track.empty()) return out;
    std::size_t lo = 0;
    for (const auto& row : estimates) {
        if (row.robot != robot) continue;
        if (row.time < static_cast<Ns>(warmup_s * 1e9)) continue;
        if (row.time < track.front()->time || row.time > track.back()->time) continue;
        while (lo + 1 < track.size() && track[lo + 1]->time <= row.time) ++lo;
        const TruthRow* a = track[lo];
        const TruthRow* b = track[std::min(lo + 1, track.size() - 1)];
        const double span = static_cast<double>(b->time - a->time);
        const double f = span > 0.0 ? (row.time - a->time) / span : 0.0;
        const Vec3 ref = a->pos + (b->pos - a->pos) * f;
        out.t_s.push_back(row.time * 1e-9);
        out.e.push_back(row.s - ref);
    }
    return out;
}

AxisStats error_stats(const ErrorSeries& series) {
    if (series.e.empty()) throw std::invalid_argument("empty error series");
    const double n = static_cast<double>(series.e.size());
    AxisStats st;
    Vec3 sq;
    for (const auto& e : series.e) {
        st.mean += e;
        sq += Vec3{e.x * e.x, e.y * e.y, e.z * e.z};
        st.max_xy = std::max(st.max_xy, e.horizontal_norm());
    }
    st.mean = st.mean * (1.0 / n);
    st.rmse = {std::sqrt(sq.x / n), std::sqrt(sq.y / n), std::sqrt(sq.z / n)};
    st.stddev = {std::sqrt(std::max(sq.x / n - st.mean.x * st.mean.x, 0.0)),
                 std::sqrt(std::max(sq.y / n - st.mean.y * st.mean.y, 0.0)),
                 std::sqrt(std::max(sq.z / n - st.mean.z * st.mean.z, 0.0))};
    st.rmse_xy = std::sqrt((sq.x + sq.y) / n);
    st.rmse_3d = std::sqrt((sq.x + sq.y + sq.z) / n);
    return st;
}

SpectrumReport error_spectrum(const ErrorSeries& series, double resample_hz,
                              double chunk_s) {
    const int n_chunk = static_cast<int>(std::lround(resample_hz * chunk_s));
    if (series.t_s.size() < 2 ||
        series.t_s.back() - series.t_s.front() < chunk_s)
        throw std::invalid_argument("series shorter than one chunk");

    // linear-interpolation resample onto a uniform grid from the first sample
    std::vector<Vec3> grid;
    const double t0 = series.t_s.front();
    std::size_t lo = 0;
    for (int k = 0;; ++k) {
        const double t = t0 + k / resample_hz;
        if (t > series.t_s.back()) break;
        while (lo + 1 < series.t_s.size() && series.t_s[lo + 1] <= t) ++lo;
        const std::size_t hi = std::min(lo + 1, series.t_s.size() - 1);
        const double span = series.t_s[hi] - series.t_s[lo];
        const double f = span > 0.0 ? (t - series.t_s[lo]) / span : 0.0;
        grid.push_back(series.e[lo] + (series.e[hi] - series.e[lo]) * f);
    }

    const int chunks = static_cast<int>(grid.size()) / n_chunk;
    if (chunks < 1) throw std::invalid_argument("series shorter than one chunk");

    const int bins = n_chunk / 2 + 1;
    SpectrumReport report;
    report.chunks = chunks;
    report.freq_hz.resize(bins);
    for (int b = 0; b < bins; ++b)
        report.freq_hz[b] = b * resample_hz / n_chunk;
    for (auto& axis : report.rms) axis.assign(bins, 0.0);

    double spectral_power = 0.0, time_power = 0.0;
    for (int c = 0; c < chunks; ++c) {
        for (int axis = 0; axis < 3; ++axis) {
            std::vector<double> x(n_chunk);
            for (int n = 0; n < n_chunk; ++n) {
                const Vec3& v = grid[c * n_chunk + n];
                x[n] = axis == 0 ? v.x : axis == 1 ? v.y : v.z;
                time_power += x[n] * x[n] / n_chunk;
            }
            for (int b = 0; b < bins; ++b) {
                double re = 0.0, im = 0.0;
                const double w = -kTwoPi * b / n_chunk;
                for (int n = 0; n < n_chunk; ++n) {
                    re += x[n] * std::cos(w * n);
                    im += x[n] * std::sin(w * n);
                }
                const double mag2 = (re * re + im * im) / (static_cast<double>(n_chunk) * n_chunk);
                const double one_sided =
                    (b == 0 || 2 * b == n_chunk) ? mag2 : 2.0 * mag2;
                report.rms[axis][b] += one_sided;
                spectral_power += one_sided;
            }
        }
    }
    for (auto& axis : report.rms)
        for (double& v : axis) v = std::sqrt(v / chunks);
    report.parseval_ratio = time_power > 0.0 ? spectral_power / time_power : 1.0;
    return report;
}

double band_rms(const SpectrumReport& report, int axis, double min_hz) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t b = 0; b < report.freq_hz.size(); ++b) {
        if (report.freq_hz[b] <= min_hz) continue;
        sum += report.rms[axis][b] * report.rms[axis][b];
        ++n;
    }
    return n > 0 ? std::sqrt(sum / n) : 0.0;
}

ChannelStats channel_stats(const std::vector<ChannelRow>& rows) {
    ChannelStats st;
    std::map<std::pair<int, int>, std::set<Ns>> seen;
    long collisions = 0;
    for (const auto& row : rows) {
        auto& pair = st.pairs[{row.rx_robot, row.tx_robot}];
        if (row.decoded) {
            ++pair.decoded;
            ++st.decoded_total;
            if (seen[{row.rx_robot, row.tx_robot}].insert(row.time).second)
                ++pair.unique_transmissions;
        } else {
            ++st.lost_total;
            switch (row.cause) {
                case LossCause::Collision: ++pair.collision; ++collisions; break;
                case LossCause::RandomLoss: ++pair.random_loss; break;
                case LossCause::DecodeFailure: ++pair.decode_failure; break;
            }
        }
    }
    const long candidates = st.decoded_total + st.lost_total;
    st.collision_rate = candidates > 0 ? static_cast<double>(collisions) / candidates : 0.0;
    return st;
}

double bytes_per_revolution(const PairStats& pair, double revolutions) {
    if (revolutions <= 0.0) return 0.0;
    return pair.unique_transmissions * 2.0 / revolutions;
}

Histogram error_histogram(const ErrorSeries& series, int bins) {
    if (series.e.empty()) throw std::invalid_argument("empty error series");
    if (bins < 1) throw std::invalid_argument("need at least one bin");
    double m = 0.0;
    for (const auto& e : series.e)
        m = std::max({m, std::abs(e.x), std::abs(e.y), std::abs(e.z)});
    if (m == 0.0) m = 1e-6;
    const double width = 2.0 * m / bins;

    Histogram h;
    h.bin_center.resize(bins);
    for (int b = 0; b < bins; ++b) h.bin_center[b] = -m + (b + 0.5) * width;
    for (auto& c : h.counts) c.assign(bins, 0);
    for (const auto& e : series.e) {
        const double v[3] = {e.x, e.y, e.z};
        for (int axis = 0; axis < 3; ++axis) {
            int b = static_cast<int>((v[axis] + m) / width);
            b = std::clamp(b, 0, bins - 1);
            ++h.counts[axis][b];
        }
    }
    return h;
}

namespace {

class CsvReader {
  public:
    CsvReader(const std::string& path, const char* header) : path_(path), f_(path) {
        if (!f_) throw std::runtime_error(path + ": cannot open");
        std::string first;
        std::getline(f_, first);
        ++line_;
        if (first != header)
            throw std::runtime_error(path + ":1: expected header \"" +
                                     header + "\", got \"" + first + "\"");
    }

    bool next(std::vector<std::string>& fields, std::size_t expected) {
        std::string line;
        if (!std::getline(f_, line)) return false;
        ++line_;
        fields.clear();
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) fields.push_back(cell);
        if (line.size() && line.back() == ',') fields.push_back("");
        if (fields.size() != expected)
            throw std::runtime_error(path_ + ":" + std::to_string(line_) +
                                     ": expected " + std::to_string(expected) +
                                     " fields, got " + std::to_string(fields.size()));
        return true;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw std::runtime_error(path_ + ":" + std::to_string(line_) + ": " + what);
    }

    double num(const std::string& s) const {
        try {
            std::size_t used = 0;
            double v = std::stod(s, &used);
            if (used != s.size()) fail("trailing characters in number \"" + s + "\"");
            return v;
        } catch (const std::invalid_argument&) {
            fail("not a number: \"" + s + "\"");
        } catch (const std::out_of_range&) {
            fail("number out of range: \"" + s + "\"");
        }
    }

    long long integer(const std::string& s) const {
        try {
            std::size_t used = 0;
            long long v = std::stoll(s, &used);
            if (used != s.size()) fail("trailing characters in integer \"" + s + "\"");
            return v;
        } catch (const std::invalid_argument&) {
            fail("not an integer: \"" + s + "\"");
        } catch (const std::out_of_range&) {
            fail("integer out of range: \"" + s + "\"");
        }
    }

  private:
    std::string path_;
    std::ifstream f_;
    std::size_t line_ = 0;
};

}  // namespace

std::vector<TruthRow> read_truth_csv(const std::string& path) {
    CsvReader r(path, "time_ns,robot,x,y,z");
    std::vector<TruthRow> rows;
    std::vector<std::string> f;
    while (r.next(f, 5))
        rows.push_back({static_cast<Ns>(r.integer(f[0])),
                        static_cast<int>(r.integer(f[1])),
                        {r.num(f[2]), r.num(f[3]), r.num(f[4])}});
    return rows;
}

std::vector<EstimateRow> read_estimates_csv(const std::string& path) {
    CsvReader r(path, "time_ns,robot,s_x,s_y,s_z,sigma_xy,omega,n_neighbors");
    std::vector<EstimateRow> rows;
    std::vector<std::string> f;
    while (r.next(f, 8))
        rows.push_back({static_cast<Ns>(r.integer(f[0])),
                        static_cast<int>(r.integer(f[1])),
                        {r.num(f[2]), r.num(f[3]), r.num(f[4])},
                        r.num(f[5]), r.num(f[6]),
                        static_cast<int>(r.integer(f[7]))});
    return rows;
}

std::vector<ChannelRow> read_channel_csv(const std::string& path) {
    CsvReader r(path, "time_ns,rx_robot,rx_id,tx_robot,origin,outcome,cause");
    std::vector<ChannelRow> rows;
    std::vector<std::string> f;
    while (r.next(f, 7)) {
        ChannelRow row;
        row.time = static_cast<Ns>(r.integer(f[0]));
        row.rx_robot = static_cast<int>(r.integer(f[1]));
        if (f[2] == "L") row.rx_id = ReceiverId::Left;
        else if (f[2] == "M") row.rx_id = ReceiverId::Middle;
        else if (f[2] == "R") row.rx_id = ReceiverId::Right;
        else r.fail("unknown receiver \"" + f[2] + "\"");
        row.tx_robot = static_cast<int>(r.integer(f[3]));
        if (f[4] == "top") row.origin = Origin::Top;
        else if (f[4] == "bottom") row.origin = Origin::Bottom;
        else r.fail("unknown origin \"" + f[4] + "\"");
        if (f[5] == "decoded") row.decoded = true;
        else if (f[5] == "lost") row.decoded = false;
        else r.fail("unknown outcome \"" + f[5] + "\"");
        if (row.decoded) row.cause = LossCause::Collision;
        else if (f[6] == "collision") row.cause = LossCause::Collision;
        else if (f[6] == "random_loss") row.cause = LossCause::RandomLoss;
        else if (f[6] == "decode_failure") row.cause = LossCause::DecodeFailure;
        else r.fail("unknown cause \"" + f[6] + "\"");
        rows.push_back(row);
    }
    return rows;
}

}  // namespace spinloc
