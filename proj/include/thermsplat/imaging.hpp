#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "thermsplat/error.hpp"

namespace thermsplat::imaging {

/// Number of quantization levels for a bit depth (256 or 65536).
inline int level_count(int bit_depth) { return 1 << bit_depth; }

/// Nearest level index of a normalized intensity, clamped to the valid range.
int quantize_level(double value, int bit_depth);

/// Normalized intensity of a level index.
inline double level_value(int level, int bit_depth) {
    return static_cast<double>(level) / static_cast<double>(level_count(bit_depth) - 1);
}

/// Rounds a normalized intensity onto the level grid of the bit depth.
inline double quantize(double value, int bit_depth) {
    return level_value(quantize_level(value, bit_depth), bit_depth);
}

/// Single-channel image with row-major intensities normalized to [0,1].
class Frame {
public:
    Frame() = default;
    Frame(int width, int height, int bit_depth, std::vector<double> pixels, int index = 0);

    /// Uniform frame filled with `value`.
    static Frame filled(int width, int height, int bit_depth, double value, int index = 0);

    int width() const { return width_; }
    int height() const { return height_; }
    int bit_depth() const { return bit_depth_; }
    int index() const { return index_; }
    std::size_t size() const { return pixels_.size(); }
    bool empty() const { return pixels_.empty(); }

    std::span<const double> pixels() const { return pixels_; }
    double at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
    double operator[](std::size_t i) const { return pixels_[i]; }

    /// Quantized level of pixel i.
    int level(std::size_t i) const { return quantize_level(pixels_[i], bit_depth_); }

    double mean() const;

    /// Copy with a different time index.
    Frame with_index(int index) const;

    /// Copy with every pixel rounded onto the level grid.
    Frame quantized() const;

private:
    int width_ = 0;
    int height_ = 0;
    int bit_depth_ = 8;
    int index_ = 0;
    std::vector<double> pixels_;
};

/// Time-ordered frames sharing geometry and bit depth; indices are 0..N-1.
class Sequence {
public:
    Sequence() = default;
    explicit Sequence(std::vector<Frame> frames);

    std::size_t size() const { return frames_.size(); }
    bool empty() const { return frames_.empty(); }
    const Frame& operator[](std::size_t t) const { return frames_[t]; }
    const std::vector<Frame>& frames() const { return frames_; }
    auto begin() const { return frames_.begin(); }
    auto end() const { return frames_.end(); }

    int width() const { return frames_.front().width(); }
    int height() const { return frames_.front().height(); }
    int bit_depth() const { return frames_.front().bit_depth(); }

private:
    std::vector<Frame> frames_;
};

/// Cumulative distribution over the 2^bit_depth levels of a frame.
class Cdf {
public:
    Cdf() = default;
    explicit Cdf(std::vector<double> values);

    int bins() const { return static_cast<int>(values_.size()); }
    std::span<const double> values() const { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }

private:
    std::vector<double> values_;
};

/// Non-decreasing transfer function over 2^bit_depth input levels with outputs in [0,1].
class MonotoneLut {
public:
    MonotoneLut() = default;
    /// Throws UsageError if the map is decreasing anywhere or leaves [0,1].
    explicit MonotoneLut(std::vector<double> map);

    static MonotoneLut identity(int bins);

    int bins() const { return static_cast<int>(map_.size()); }
    std::span<const double> map() const { return map_; }
    double operator[](std::size_t i) const { return map_[i]; }

    /// Output level of input level i after rounding to the LUT's own grid.
    int output_level(int i) const;

    bool operator==(const MonotoneLut&) const = default;

private:
    std::vector<double> map_;
};

Cdf compute_cdf(const Frame& frame);

/// Occupancy count per level.
std::vector<std::int64_t> histogram(const Frame& frame);

Frame apply_lut(const Frame& frame, const MonotoneLut& lut);

/// Smallest-preimage pseudo-inverse. Output level y maps to the smallest input
/// level whose quantized output is >= y, or to the top level if none is.
MonotoneLut invert_lut(const MonotoneLut& lut);

/// LUT equivalent to applying `first` then `second`.
MonotoneLut compose(const MonotoneLut& first, const MonotoneLut& second);

/// Smallest index i with values[i] >= target - tol, or values.size()-1 if none.
int pseudo_inverse_index(std::span<const double> values, double target, double tol = 1e-12);

// File IO. PGM (P2/P5, maxval 255 or 65535) and grayscale PNG (8/16-bit),
// chosen by extension.
Frame load_frame(const std::filesystem::path& path, int index = 0);
void save_frame(const Frame& frame, const std::filesystem::path& path);

/// Loads every .pgm/.png in a directory in lexicographic filename order.
Sequence load_sequence(const std::filesystem::path& dir);
std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& dir);

void save_lut_csv(const MonotoneLut& lut, const std::filesystem::path& path);
MonotoneLut load_lut_csv(const std::filesystem::path& path);

}  // namespace thermsplat::imaging
