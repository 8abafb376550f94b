#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "thermsplat/imaging.hpp"

namespace thermsplat::stabilize {

using imaging::Cdf;
using imaging::Frame;
using imaging::MonotoneLut;
using imaging::Sequence;

struct StabilizeConfig {
    double alpha = 0.02;  ///< EMA coefficient of the reference CDF, in (0,1]
    double beta = 0.95;   ///< blend between identity (0) and full alignment (1)
    int warmup = 5;       ///< frames averaged to seed the reference

    void validate() const;
};

/// Running reference distribution.
struct ReferenceState {
    Cdf f_star;
    double alpha = 0.02;
};

struct FrameTransform {
    MonotoneLut align_lut;
    MonotoneLut bbhe_lut;
    MonotoneLut composed;
    int split_level = 0;  ///< quantized mean of the aligned frame
    int bit_depth = 8;

    double split_value() const { return imaging::level_value(split_level, bit_depth); }
};

/// f_star <- (1 - alpha) f_star + alpha f_t, bin-wise.
ReferenceState update_reference(const ReferenceState& state, const Cdf& f_t);

/// Maps x to (1 - beta) x + beta F*^-1(F_t(x)), quantized once per level.
std::pair<Frame, MonotoneLut> align_frame(const Frame& frame, const ReferenceState& state,
                                          double beta);

struct BbheResult {
    Frame frame;
    MonotoneLut lut;
    int split_level = 0;
};

/// Brightness-preserving bi-histogram equalization split at the quantized mean.
/// A subrange with at most one occupied level is mapped identically.
BbheResult bbhe(const Frame& frame);

struct StabilizeResult {
    Sequence frames;
    std::vector<FrameTransform> transforms;
};

StabilizeResult stabilize_sequence(const Sequence& seq, const StabilizeConfig& cfg);

Frame invert_frame(const Frame& frame, const FrameTransform& tf);

/// Writes stabilize_report.csv (t, mean_in, mean_out, split_level).
void write_report(const Sequence& input, const StabilizeResult& result,
                  const std::filesystem::path& path);

}  // namespace thermsplat::stabilize
