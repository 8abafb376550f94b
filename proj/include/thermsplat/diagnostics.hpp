#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "thermsplat/imaging.hpp"

namespace thermsplat::diagnostics {

using imaging::Frame;
using imaging::Sequence;

/// Relative change of each frame's mean against the sequence mean.
struct DriftSeries {
    std::vector<double> means;
    std::vector<double> delta;
    double sequence_mean = 0.0;
    double sigma = 0.0;  ///< population standard deviation of delta
};

DriftSeries mean_intensity_drift(const Sequence& seq);

/// Population standard deviation.
double population_std(const std::vector<double>& values);

struct SpectrumOptions {
    bool subtract_mean = true;
    bool hann_window = false;
};

/// Radially averaged power spectrum. Power is |DFT|^2 / (width*height) so that
/// the total equals the spatial energy sum of the (mean-subtracted) frame.
struct RadialSpectrum {
    std::vector<double> freqs;          ///< cycles/image, integer radii 0..min(w,h)/2
    std::vector<double> power;          ///< mean power per annulus
    std::vector<std::int64_t> counts;   ///< samples per annulus
    double power_beyond_cutoff = 0.0;   ///< summed power of radii above the reported range
    double total_power = 0.0;           ///< summed power over every frequency sample
};

RadialSpectrum radial_power_spectrum(const Frame& frame, const SpectrumOptions& options = {});

struct RangeReport {
    std::vector<std::int64_t> histogram;
    int p01 = 0;
    int p99 = 0;
    double effective_range = 0.0;  ///< (p99 - p01) normalized
    double entropy = 0.0;          ///< bits
};

RangeReport dynamic_range_report(const Frame& frame);

/// Smallest level whose cumulative count reaches `fraction` of all pixels.
int percentile_level(const std::vector<std::int64_t>& histogram, double fraction);

// CSV writers for the diagnose subcommand.
void write_drift_csv(const DriftSeries& drift, const std::filesystem::path& path);
void write_spectrum_csv(const std::vector<RadialSpectrum>& spectra, const SpectrumOptions& options,
                        const std::filesystem::path& path);
void write_range_csv(const std::vector<RangeReport>& reports, int bit_depth,
                     const std::filesystem::path& path);

}  // namespace thermsplat::diagnostics
