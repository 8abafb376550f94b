#include "thermsplat/diagnostics.hpp"

#include <fftw3.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>

namespace thermsplat::diagnostics {

double population_std(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / n);
}

DriftSeries mean_intensity_drift(const Sequence& seq) {
    DriftSeries out;
    out.means.reserve(seq.size());
    for (const Frame& f : seq) out.means.push_back(f.mean());
    out.sequence_mean = std::accumulate(out.means.begin(), out.means.end(), 0.0) /
                        static_cast<double>(out.means.size());
    if (!(out.sequence_mean > 0.0)) {
        throw DataError("undefined relative drift: sequence mean intensity is zero");
    }
    out.delta.reserve(out.means.size());
    for (double mu : out.means) out.delta.push_back((mu - out.sequence_mean) / out.sequence_mean);
    out.sigma = population_std(out.delta);
    return out;
}

namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(fftw_complex* p) const { fftw_free(p); }
};

}  // namespace

RadialSpectrum radial_power_spectrum(const Frame& frame, const SpectrumOptions& options) {
    const int w = frame.width();
    const int h = frame.height();
    if (w < 4 || h < 4) throw UsageError("spectrum requires width and height of at least 4");
    const std::size_t n = frame.size();

    const double mean = options.subtract_mean ? frame.mean() : 0.0;
    std::unique_ptr<fftw_complex[], FftwFree> buf(
        static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n)));
    for (int y = 0; y < h; ++y) {
        const double wy = options.hann_window
                              ? 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * y / (h - 1))
                              : 1.0;
        for (int x = 0; x < w; ++x) {
            const double wx = options.hann_window
                                  ? 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * x / (w - 1))
                                  : 1.0;
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            buf[i][0] = (frame[i] - mean) * wx * wy;
            buf[i][1] = 0.0;
        }
    }
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft_2d(h, w, buf.get(), buf.get(), FFTW_FORWARD, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
    }

    const int cutoff = std::min(w, h) / 2;
    RadialSpectrum out;
    out.freqs.resize(cutoff + 1);
    out.power.assign(cutoff + 1, 0.0);
    out.counts.assign(cutoff + 1, 0);
    const double norm = 1.0 / static_cast<double>(n);
    for (int ky = 0; ky < h; ++ky) {
        const int fy = ky <= h / 2 ? ky : ky - h;
        for (int kx = 0; kx < w; ++kx) {
            const int fx = kx <= w / 2 ? kx : kx - w;
            const std::size_t i = static_cast<std::size_t>(ky) * w + kx;
            const double p = (buf[i][0] * buf[i][0] + buf[i][1] * buf[i][1]) * norm;
            out.total_power += p;
            const int bin = static_cast<int>(std::floor(std::hypot(fx, fy) + 0.5));
            if (bin <= cutoff) {
                out.power[bin] += p;
                ++out.counts[bin];
            } else {
                out.power_beyond_cutoff += p;
            }
        }
    }
    for (int b = 0; b <= cutoff; ++b) {
        out.freqs[b] = b;
        out.power[b] /= static_cast<double>(out.counts[b]);
    }
    return out;
}

int percentile_level(const std::vector<std::int64_t>& histogram, double fraction) {
    const std::int64_t total = std::accumulate(histogram.begin(), histogram.end(), std::int64_t{0});
    const double target = fraction * static_cast<double>(total);
    std::int64_t running = 0;
    for (std::size_t i = 0; i < histogram.size(); ++i) {
        running += histogram[i];
        if (static_cast<double>(running) >= target && running > 0) return static_cast<int>(i);
    }
    return static_cast<int>(histogram.size()) - 1;
}

RangeReport dynamic_range_report(const Frame& frame) {
    if (frame.empty()) throw UsageError("range report requires a non-empty frame");
    RangeReport r;
    r.histogram = imaging::histogram(frame);
    r.p01 = percentile_level(r.histogram, 0.01);
    r.p99 = percentile_level(r.histogram, 0.99);
    r.effective_range = imaging::level_value(r.p99 - r.p01, frame.bit_depth());
    const double n = static_cast<double>(frame.size());
    for (std::int64_t c : r.histogram) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        r.entropy -= p * std::log2(p);
    }
    r.entropy = std::max(0.0, r.entropy);
    return r;
}

void write_drift_csv(const DriftSeries& drift, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << "t,mean,delta\n" << std::setprecision(12);
    for (std::size_t t = 0; t < drift.delta.size(); ++t) {
        out << t << ',' << drift.means[t] << ',' << drift.delta[t] << '\n';
    }
}

void write_spectrum_csv(const std::vector<RadialSpectrum>& spectra, const SpectrumOptions& options,
                        const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << "# mean_subtracted=" << (options.subtract_mean ? 1 : 0)
        << " hann_window=" << (options.hann_window ? 1 : 0) << " power=|DFT|^2/N\n";
    out << "frame,f,power,count\n" << std::setprecision(12);
    for (std::size_t k = 0; k < spectra.size(); ++k) {
        const RadialSpectrum& s = spectra[k];
        for (std::size_t b = 0; b < s.power.size(); ++b) {
            out << k << ',' << s.freqs[b] << ',' << s.power[b] << ',' << s.counts[b] << '\n';
        }
    }
}

void write_range_csv(const std::vector<RangeReport>& reports, int bit_depth,
                     const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << "# bit_depth=" << bit_depth << '\n';
    out << "frame,p01,p99,effective_range,entropy\n" << std::setprecision(12);
    for (std::size_t k = 0; k < reports.size(); ++k) {
        const RangeReport& r = reports[k];
        out << k << ',' << imaging::level_value(r.p01, bit_depth) << ','
            << imaging::level_value(r.p99, bit_depth) << ',' << r.effective_range << ','
            << r.entropy << '\n';
    }
}

}  // namespace thermsplat::diagnostics
