#include "thermsplat/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace thermsplat::imaging {

namespace {

bool valid_bit_depth(int bit_depth) { return bit_depth == 8 || bit_depth == 16; }

int bins_to_bit_depth(int bins) {
    if (bins == 256) return 8;
    if (bins == 65536) return 16;
    throw UsageError("LUT bin count must be 256 or 65536, got " + std::to_string(bins));
}

}  // namespace

int quantize_level(double value, int bit_depth) {
    const int max_level = level_count(bit_depth) - 1;
    const double scaled = std::floor(value * max_level + 0.5);
    if (!(scaled > 0.0)) return 0;
    if (scaled >= max_level) return max_level;
    return static_cast<int>(scaled);
}

// ---------------------------------------------------------------------------
// Frame

Frame::Frame(int width, int height, int bit_depth, std::vector<double> pixels, int index)
    : width_(width), height_(height), bit_depth_(bit_depth), index_(index), pixels_(std::move(pixels)) {
    if (width <= 0 || height <= 0) {
        throw UsageError("frame dimensions must be positive");
    }
    if (!valid_bit_depth(bit_depth)) {
        throw UsageError("unsupported bit depth " + std::to_string(bit_depth));
    }
    if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw UsageError("pixel count does not match frame geometry");
    }
    for (double p : pixels_) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw UsageError("pixel value outside [0,1]");
        }
    }
}

Frame Frame::filled(int width, int height, int bit_depth, double value, int index) {
    return Frame(width, height, bit_depth,
                 std::vector<double>(static_cast<std::size_t>(width) * height, value), index);
}

double Frame::mean() const {
    if (pixels_.empty()) return 0.0;
    return std::accumulate(pixels_.begin(), pixels_.end(), 0.0) / static_cast<double>(pixels_.size());
}

Frame Frame::with_index(int index) const {
    Frame copy = *this;
    copy.index_ = index;
    return copy;
}

Frame Frame::quantized() const {
    std::vector<double> out(pixels_.size());
    for (std::size_t i = 0; i < pixels_.size(); ++i) {
        out[i] = quantize(pixels_[i], bit_depth_);
    }
    return Frame(width_, height_, bit_depth_, std::move(out), index_);
}

// ---------------------------------------------------------------------------
// Sequence

Sequence::Sequence(std::vector<Frame> frames) : frames_(std::move(frames)) {
    if (frames_.empty()) {
        throw UsageError("sequence must contain at least one frame");
    }
    const Frame& first = frames_.front();
    for (std::size_t t = 0; t < frames_.size(); ++t) {
        const Frame& f = frames_[t];
        if (f.width() != first.width() || f.height() != first.height() ||
            f.bit_depth() != first.bit_depth()) {
            throw DataError("frame " + std::to_string(t) +
                            " differs in geometry or bit depth from frame 0");
        }
        if (f.index() != static_cast<int>(t)) {
            frames_[t] = f.with_index(static_cast<int>(t));
        }
    }
}

// ---------------------------------------------------------------------------
// Cdf / LUT

Cdf::Cdf(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw UsageError("CDF must have at least one bin");
    double prev = 0.0;
    for (double v : values_) {
        if (!(v >= prev - 1e-12) || v > 1.0 + 1e-12) {
            throw UsageError("CDF values must be non-decreasing within [0,1]");
        }
        prev = v;
    }
    if (std::abs(values_.back() - 1.0) > 1e-9) {
        throw UsageError("CDF must terminate at 1");
    }
    values_.back() = 1.0;
}

MonotoneLut::MonotoneLut(std::vector<double> map) : map_(std::move(map)) {
    bins_to_bit_depth(static_cast<int>(map_.size()));
    for (std::size_t i = 0; i < map_.size(); ++i) {
        if (!(map_[i] >= 0.0 && map_[i] <= 1.0)) {
            throw UsageError("LUT value at index " + std::to_string(i) + " outside [0,1]");
        }
        if (i > 0 && map_[i] < map_[i - 1]) {
            throw UsageError("LUT is not monotone at index " + std::to_string(i));
        }
    }
}

MonotoneLut MonotoneLut::identity(int bins) {
    const int bit_depth = bins_to_bit_depth(bins);
    std::vector<double> map(bins);
    for (int i = 0; i < bins; ++i) map[i] = level_value(i, bit_depth);
    return MonotoneLut(std::move(map));
}

int MonotoneLut::output_level(int i) const {
    return quantize_level(map_[i], bins_to_bit_depth(bins()));
}

std::vector<std::int64_t> histogram(const Frame& frame) {
    std::vector<std::int64_t> counts(level_count(frame.bit_depth()), 0);
    for (std::size_t i = 0; i < frame.size(); ++i) ++counts[frame.level(i)];
    return counts;
}

Cdf compute_cdf(const Frame& frame) {
    if (frame.empty()) throw UsageError("cannot compute the CDF of an empty frame");
    const auto counts = histogram(frame);
    std::vector<double> values(counts.size());
    std::int64_t running = 0;
    const double n = static_cast<double>(frame.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        running += counts[i];
        values[i] = static_cast<double>(running) / n;
    }
    return Cdf(std::move(values));
}

Frame apply_lut(const Frame& frame, const MonotoneLut& lut) {
    if (lut.bins() != level_count(frame.bit_depth())) {
        throw DataError("LUT has " + std::to_string(lut.bins()) + " bins but frame has " +
                        std::to_string(level_count(frame.bit_depth())) + " levels");
    }
    std::vector<double> out(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i) {
        out[i] = quantize(lut[frame.level(i)], frame.bit_depth());
    }
    return Frame(frame.width(), frame.height(), frame.bit_depth(), std::move(out), frame.index());
}

int pseudo_inverse_index(std::span<const double> values, double target, double tol) {
    auto it = std::lower_bound(values.begin(), values.end(), target - tol);
    if (it == values.end()) return static_cast<int>(values.size()) - 1;
    return static_cast<int>(it - values.begin());
}

MonotoneLut invert_lut(const MonotoneLut& lut) {
    const int bins = lut.bins();
    const int bit_depth = bins_to_bit_depth(bins);
    std::vector<double> inverse(bins);
    int i = 0;
    for (int y = 0; y < bins; ++y) {
        while (i < bins && lut.output_level(i) < y) ++i;
        inverse[y] = level_value(std::min(i, bins - 1), bit_depth);
    }
    return MonotoneLut(std::move(inverse));
}

MonotoneLut compose(const MonotoneLut& first, const MonotoneLut& second) {
    if (first.bins() != second.bins()) {
        throw DataError("cannot compose LUTs with different bin counts");
    }
    std::vector<double> map(first.bins());
    for (int i = 0; i < first.bins(); ++i) {
        map[i] = second[first.output_level(i)];
    }
    return MonotoneLut(std::move(map));
}

// ---------------------------------------------------------------------------
// LUT persistence

void save_lut_csv(const MonotoneLut& lut, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << "bins=" << lut.bins() << '\n';
    out << std::setprecision(17);
    for (int i = 0; i < lut.bins(); ++i) {
        out << i << ',' << lut[i] << '\n';
    }
    if (!out) throw DataError(path.string() + ": write failed");
}

MonotoneLut load_lut_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path.string() + ": cannot open LUT file");
    std::string line;
    if (!std::getline(in, line) || line.rfind("bins=", 0) != 0) {
        throw DataError(path.string() + ": missing 'bins=<n>' header");
    }
    int bins = 0;
    try {
        bins = std::stoi(line.substr(5));
    } catch (const std::exception&) {
        throw DataError(path.string() + ": malformed bins header");
    }
    if (bins != 256 && bins != 65536) {
        throw DataError(path.string() + ": unsupported bin count " + std::to_string(bins));
    }
    std::vector<double> map(bins);
    std::vector<bool> seen(bins, false);
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw DataError(path.string() + ": malformed row '" + line + "'");
        }
        int idx = 0;
        double value = 0.0;
        try {
            idx = std::stoi(line.substr(0, comma));
            value = std::stod(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw DataError(path.string() + ": malformed row '" + line + "'");
        }
        if (idx < 0 || idx >= bins || seen[idx]) {
            throw DataError(path.string() + ": bad or duplicate index " + std::to_string(idx));
        }
        seen[idx] = true;
        map[idx] = value;
        ++rows;
    }
    if (rows != bins) {
        throw DataError(path.string() + ": expected " + std::to_string(bins) + " rows, got " +
                        std::to_string(rows));
    }
    try {
        return MonotoneLut(std::move(map));
    } catch (const UsageError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace thermsplat::imaging
