#pragma once

#include <array>
#include <map>
#include <utility>
#include <vector>

#include "spinloc/simengine.hpp"
#include "spinloc/vec3.hpp"

namespace spinloc {

// Per-axis estimate-minus-truth error, truth linearly interpolated to each
// estimate timestamp. Timestamps are strictly increasing seconds.
struct ErrorSeries {
    std::vector<double> t_s;
    std::vector<Vec3> e;
};

// Rows before warmup_s or outside the truth span are dropped.
ErrorSeries error_series(const std::vector<EstimateRow>& estimates,
                         const std::vector<TruthRow>& truth, int robot,
                         double warmup_s);

struct AxisStats {
    Vec3 rmse;
    Vec3 mean;
    Vec3 stddev;  // about the mean
    double rmse_xy = 0.0;
    double rmse_3d = 0.0;
    double max_xy = 0.0;  // largest horizontal error norm
};

// Throws std::invalid_argument on an empty series.
AxisStats error_stats(const ErrorSeries& series);

// One-sided RMS amplitude per frequency bin, averaged over non-overlapping
// chunks (rectangular window, no detrending). Bin b of a chunk of N samples
// at fs covers b*fs/N Hz; a sinusoid of amplitude a lands at a/sqrt(2).
// parseval_ratio is spectral power over time-domain power (1 up to rounding).
struct SpectrumReport {
    std::vector<double> freq_hz;
    std::array<std::vector<double>, 3> rms;  // x, y, z
    int chunks = 0;
    double parseval_ratio = 0.0;
};

// Throws std::invalid_argument when the series spans less than one chunk.
SpectrumReport error_spectrum(const ErrorSeries& series, double resample_hz = 100.0,
                              double chunk_s = 5.0);

// Mean RMS amplitude of one axis over bins with freq > min_hz.
double band_rms(const SpectrumReport& report, int axis, double min_hz);

struct PairStats {
    long decoded = 0;
    long collision = 0;
    long random_loss = 0;
    long decode_failure = 0;
    long unique_transmissions = 0;  // decoded, deduplicated across receivers
};

struct ChannelStats {
    std::map<std::pair<int, int>, PairStats> pairs;  // (rx_robot, tx_robot)
    long decoded_total = 0;
    long lost_total = 0;
    double collision_rate = 0.0;  // collision losses / candidate receptions
};

ChannelStats channel_stats(const std::vector<ChannelRow>& rows);

// Unique delivered transmissions x 2 payload bytes, per revolution.
double bytes_per_revolution(const PairStats& pair, double revolutions);

// Per-axis error counts over shared equal-width bins spanning the largest
// absolute error symmetrically.
struct Histogram {
    std::vector<double> bin_center;                // m
    std::array<std::vector<long>, 3> counts;       // x, y, z
};
Histogram error_histogram(const ErrorSeries& series, int bins = 41);

// Readers for the run output files; each validates the header line and
// throws std::runtime_error naming the file and line on mismatch.
std::vector<TruthRow> read_truth_csv(const std::string& path);
std::vector<EstimateRow> read_estimates_csv(const std::string& path);
std::vector<ChannelRow> read_channel_csv(const std::string& path);

}  // namespace spinloc
