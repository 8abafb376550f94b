// PGM and PNG codecs for single-channel frames.

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <memory>

#include "thermsplat/imaging.hpp"

namespace thermsplat::imaging {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const fs::path& path, const std::string& reason) {
    throw DataError(path.string() + ": " + reason);
}

std::string lower_extension(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

// --- PGM -------------------------------------------------------------------

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string token;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!token.empty()) break;
            continue;
        }
        token.push_back(static_cast<char>(c));
    }
    return token;
}

int parse_int(const std::string& token, const fs::path& path, const char* what) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
        return v;
    } catch (const std::exception&) {
        fail(path, std::string("malformed PGM ") + what + " '" + token + "'");
    }
}

Frame read_pgm(const fs::path& path, int index) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "unreadable file");
    const std::string magic = next_token(in);
    if (magic == "P3" || magic == "P6") fail(path, "multi-channel input");
    if (magic != "P2" && magic != "P5") fail(path, "not a PGM file (magic '" + magic + "')");
    const int width = parse_int(next_token(in), path, "width");
    const int height = parse_int(next_token(in), path, "height");
    const int maxval = parse_int(next_token(in), path, "maxval");
    if (width <= 0 || height <= 0) fail(path, "invalid dimensions");
    int bit_depth = 0;
    if (maxval == 255) {
        bit_depth = 8;
    } else if (maxval == 65535) {
        bit_depth = 16;
    } else {
        fail(path, "unsupported bit depth (maxval " + std::to_string(maxval) + ")");
    }
    const std::size_t n = static_cast<std::size_t>(width) * height;
    std::vector<double> pixels(n);
    const double scale = 1.0 / maxval;
    if (magic == "P2") {
        for (std::size_t i = 0; i < n; ++i) {
            const std::string tok = next_token(in);
            if (tok.empty()) fail(path, "truncated pixel data");
            const int v = parse_int(tok, path, "pixel");
            if (v < 0 || v > maxval) fail(path, "pixel value out of range");
            pixels[i] = v * scale;
        }
    } else {
        const std::size_t bytes_per = bit_depth == 8 ? 1 : 2;
        std::vector<unsigned char> raw(n * bytes_per);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (static_cast<std::size_t>(in.gcount()) != raw.size()) fail(path, "truncated pixel data");
        for (std::size_t i = 0; i < n; ++i) {
            const int v = bytes_per == 1 ? raw[i] : (raw[2 * i] << 8) | raw[2 * i + 1];
            if (v > maxval) fail(path, "pixel value out of range");
            pixels[i] = v * scale;
        }
    }
    return Frame(width, height, bit_depth, std::move(pixels), index);
}

void write_pgm(const Frame& frame, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open for writing");
    const int maxval = level_count(frame.bit_depth()) - 1;
    out << "P5\n" << frame.width() << ' ' << frame.height() << '\n' << maxval << '\n';
    std::vector<unsigned char> raw;
    raw.reserve(frame.size() * (frame.bit_depth() == 8 ? 1 : 2));
    for (std::size_t i = 0; i < frame.size(); ++i) {
        const int v = frame.level(i);
        if (frame.bit_depth() == 8) {
            raw.push_back(static_cast<unsigned char>(v));
        } else {
            raw.push_back(static_cast<unsigned char>(v >> 8));
            raw.push_back(static_cast<unsigned char>(v & 0xff));
        }
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) fail(path, "write failed");
}

// --- PNG -------------------------------------------------------------------

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void png_error_handler(png_structp png, png_const_charp msg) {
    auto* message = static_cast<std::string*>(png_get_error_ptr(png));
    if (message) *message = msg;
    png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

Frame read_png(const fs::path& path, int index) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) fail(path, "unreadable file");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        fail(path, "not a PNG file");
    }
    std::string message;
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_handler, png_warning_handler);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "libpng initialisation failed");
    }
    // Everything allocated below the setjmp is owned by libpng or by RAII
    // objects constructed before it.
    std::vector<unsigned char> raw;
    std::vector<png_bytep> rows;
    int width = 0, height = 0, bit_depth = 0, color_type = 0;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "corrupt PNG (" + message + ")");
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    bit_depth = png_get_bit_depth(png, info);
    color_type = png_get_color_type(png, info);
    if (color_type != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "multi-channel input");
    }
    if (bit_depth != 8 && bit_depth != 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "unsupported bit depth " + std::to_string(bit_depth));
    }
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    raw.resize(row_bytes * height);
    rows.resize(height);
    for (int y = 0; y < height; ++y) rows[y] = raw.data() + row_bytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const double scale = 1.0 / (level_count(bit_depth) - 1);
    std::vector<double> pixels(static_cast<std::size_t>(width) * height);
    for (int y = 0; y < height; ++y) {
        const unsigned char* row = rows[y];
        for (int x = 0; x < width; ++x) {
            const int v = bit_depth == 8 ? row[x] : (row[2 * x] << 8) | row[2 * x + 1];
            pixels[static_cast<std::size_t>(y) * width + x] = v * scale;
        }
    }
    return Frame(width, height, bit_depth, std::move(pixels), index);
}

void write_png(const Frame& frame, const fs::path& path) {
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) fail(path, "cannot open for writing");
    std::string message;
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_handler, png_warning_handler);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        fail(path, "libpng initialisation failed");
    }
    const int bytes_per = frame.bit_depth() == 8 ? 1 : 2;
    std::vector<unsigned char> raw(frame.size() * bytes_per);
    for (std::size_t i = 0; i < frame.size(); ++i) {
        const int v = frame.level(i);
        if (bytes_per == 1) {
            raw[i] = static_cast<unsigned char>(v);
        } else {
            raw[2 * i] = static_cast<unsigned char>(v >> 8);
            raw[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
        }
    }
    std::vector<png_bytep> rows(frame.height());
    for (int y = 0; y < frame.height(); ++y) {
        rows[y] = raw.data() + static_cast<std::size_t>(y) * frame.width() * bytes_per;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "PNG encoding failed (" + message + ")");
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(frame.width()),
                 static_cast<png_uint_32>(frame.height()), frame.bit_depth(), PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

bool is_frame_file(const fs::path& path) {
    const std::string ext = lower_extension(path);
    return ext == ".pgm" || ext == ".png";
}

}  // namespace

Frame load_frame(const fs::path& path, int index) {
    const std::string ext = lower_extension(path);
    if (ext == ".pgm") return read_pgm(path, index);
    if (ext == ".png") return read_png(path, index);
    fail(path, "unsupported file type '" + ext + "'");
}

void save_frame(const Frame& frame, const fs::path& path) {
    const std::string ext = lower_extension(path);
    if (ext == ".pgm") return write_pgm(frame, path);
    if (ext == ".png") return write_png(frame, path);
    fail(path, "unsupported file type '" + ext + "'");
}

std::vector<fs::path> list_frame_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) fail(dir, "not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && is_frame_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

Sequence load_sequence(const fs::path& dir) {
    const auto files = list_frame_files(dir);
    if (files.empty()) fail(dir, "no .pgm or .png frames found");
    std::vector<Frame> frames;
    frames.reserve(files.size());
    for (std::size_t t = 0; t < files.size(); ++t) {
        frames.push_back(load_frame(files[t], static_cast<int>(t)));
    }
    return Sequence(std::move(frames));
}

}  // namespace thermsplat::imaging
