#include "thermsplat/stabilize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace thermsplat::stabilize {

using imaging::level_count;
using imaging::level_value;
using imaging::quantize;

void StabilizeConfig::validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in (0,1]");
    if (!(beta >= 0.0 && beta <= 1.0)) throw UsageError("beta must lie in [0,1]");
    if (warmup < 1) throw UsageError("warmup must be at least 1");
}

ReferenceState update_reference(const ReferenceState& state, const Cdf& f_t) {
    if (state.f_star.bins() != f_t.bins()) {
        throw DataError("reference CDF has " + std::to_string(state.f_star.bins()) +
                        " bins, frame CDF has " + std::to_string(f_t.bins()));
    }
    const double a = state.alpha;
    std::vector<double> blended(f_t.bins());
    for (int i = 0; i < f_t.bins(); ++i) {
        blended[i] = (1.0 - a) * state.f_star[i] + a * f_t[i];
    }
    blended.back() = 1.0;
    return ReferenceState{Cdf(std::move(blended)), a};
}

std::pair<Frame, MonotoneLut> align_frame(const Frame& frame, const ReferenceState& state,
                                          double beta) {
    const int bins = level_count(frame.bit_depth());
    if (state.f_star.bins() != bins) {
        throw DataError("reference CDF bins do not match frame bit depth");
    }
    const Cdf f_t = imaging::compute_cdf(frame);
    std::vector<double> map(bins);
    for (int i = 0; i < bins; ++i) {
        const int matched = imaging::pseudo_inverse_index(state.f_star.values(), f_t[i]);
        const double x = level_value(i, frame.bit_depth());
        const double y = level_value(matched, frame.bit_depth());
        map[i] = quantize((1.0 - beta) * x + beta * y, frame.bit_depth());
    }
    MonotoneLut lut(std::move(map));
    return {imaging::apply_lut(frame, lut), std::move(lut)};
}

BbheResult bbhe(const Frame& frame) {
    if (frame.empty()) throw UsageError("bbhe requires a non-empty frame");
    const int depth = frame.bit_depth();
    const int bins = level_count(depth);
    const int max_level = bins - 1;
    const auto counts = imaging::histogram(frame);

    // Split at the mean of the quantized levels, rounded half up.
    double level_sum = 0.0;
    for (int i = 0; i < bins; ++i) level_sum += static_cast<double>(counts[i]) * i;
    const double mean_level = level_sum / static_cast<double>(frame.size());
    const int split = std::min(max_level, static_cast<int>(std::floor(mean_level + 0.5)));

    std::vector<double> map(bins);
    for (int i = 0; i < bins; ++i) map[i] = level_value(i, depth);

    // Equalizes levels [lo, hi] onto the output interval [out_lo, out_hi].
    auto equalize = [&](int lo, int hi, double out_lo, double out_hi) {
        std::int64_t total = 0;
        int occupied = 0;
        for (int i = lo; i <= hi; ++i) {
            total += counts[i];
            if (counts[i] > 0) ++occupied;
        }
        if (occupied <= 1) return;
        std::int64_t running = 0;
        for (int i = lo; i <= hi; ++i) {
            running += counts[i];
            const double c = static_cast<double>(running) / static_cast<double>(total);
            map[i] = quantize(out_lo + (out_hi - out_lo) * c, depth);
        }
    };
    equalize(0, split, 0.0, level_value(split, depth));
    if (split < max_level) {
        equalize(split + 1, max_level, level_value(split + 1, depth), 1.0);
    }

    MonotoneLut lut(std::move(map));
    Frame out = imaging::apply_lut(frame, lut);
    return BbheResult{std::move(out), std::move(lut), split};
}

StabilizeResult stabilize_sequence(const Sequence& seq, const StabilizeConfig& cfg) {
    cfg.validate();
    if (seq.empty()) throw UsageError("cannot stabilize an empty sequence");
    const int bins = level_count(seq.bit_depth());

    const std::size_t seed_frames = std::min<std::size_t>(cfg.warmup, seq.size());
    std::vector<double> seed(bins, 0.0);
    for (std::size_t t = 0; t < seed_frames; ++t) {
        const Cdf f = imaging::compute_cdf(seq[t]);
        for (int i = 0; i < bins; ++i) seed[i] += f[i];
    }
    for (double& v : seed) v /= static_cast<double>(seed_frames);
    seed.back() = 1.0;

    ReferenceState state{Cdf(std::move(seed)), cfg.alpha};
    std::vector<Frame> out_frames;
    std::vector<FrameTransform> transforms;
    out_frames.reserve(seq.size());
    transforms.reserve(seq.size());
    for (const Frame& frame : seq) {
        state = update_reference(state, imaging::compute_cdf(frame));
        auto [aligned, align_lut] = align_frame(frame, state, cfg.beta);
        BbheResult enhanced = bbhe(aligned);
        MonotoneLut composed = imaging::compose(align_lut, enhanced.lut);
        out_frames.push_back(enhanced.frame);
        transforms.push_back(FrameTransform{std::move(align_lut), std::move(enhanced.lut),
                                            std::move(composed), enhanced.split_level,
                                            seq.bit_depth()});
    }
    return StabilizeResult{Sequence(std::move(out_frames)), std::move(transforms)};
}

Frame invert_frame(const Frame& frame, const FrameTransform& tf) {
    return imaging::apply_lut(frame, imaging::invert_lut(tf.composed));
}

void write_report(const Sequence& input, const StabilizeResult& result,
                  const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << "t,mean_in,mean_out,split_level\n" << std::setprecision(10);
    for (std::size_t t = 0; t < input.size(); ++t) {
        out << t << ',' << input[t].mean() << ',' << result.frames[t].mean() << ','
            << result.transforms[t].split_value() << '\n';
    }
}

}  // namespace thermsplat::stabilize
