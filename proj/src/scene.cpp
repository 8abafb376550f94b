#include "thermsplat/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace thermsplat::scene {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) { return std::log(p / (1.0 - p)); }

double Gaussian::opacity() const { return logistic(opacity_logit); }

Eigen::Matrix3d quaternion_to_matrix(const Eigen::Vector4d& q_raw) {
    const Eigen::Vector4d q = q_raw.normalized();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

void GaussianScene::renormalize_rotations() {
    for (Gaussian& g : gaussians) {
        const double n = g.rotation.norm();
        if (n > 0.0) {
            g.rotation /= n;
        } else {
            g.rotation = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);
        }
    }
}

// ---------------------------------------------------------------------------
// Camera

void Camera::validate() const {
    if (!(fx > 0.0 && fy > 0.0)) throw DataError("camera " + std::to_string(id) + ": focal length must be positive");
    if (width <= 0 || height <= 0) throw DataError("camera " + std::to_string(id) + ": invalid image size");
    if (!(cx >= 0.0 && cx <= width && cy >= 0.0 && cy <= height)) {
        throw DataError("camera " + std::to_string(id) + ": principal point outside the image");
    }
    if (std::abs(rotation.norm() - 1.0) > 1e-6) {
        throw DataError("camera " + std::to_string(id) + ": rotation is not a unit quaternion");
    }
}

Eigen::Vector3d Camera::pixel_ray_world(int px, int py) const {
    const Eigen::Vector3d cam((px + 0.5 - cx) / fx, (py + 0.5 - cy) / fy, 1.0);
    return (rotation.conjugate() * cam.normalized()).normalized();
}

Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, double focal, int width,
               int height, int id) {
    const Eigen::Vector3d forward = (target - eye).normalized();
    Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitY());
    if (right.norm() < 1e-9) right = forward.cross(Eigen::Vector3d::UnitZ());
    right.normalize();
    const Eigen::Vector3d down = forward.cross(right);
    Eigen::Matrix3d r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    Camera cam;
    cam.id = id;
    cam.fx = cam.fy = focal;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.width = width;
    cam.height = height;
    cam.rotation = Eigen::Quaterniond(r).normalized();
    cam.translation = -(cam.rotation * eye);
    return cam;
}

// ---------------------------------------------------------------------------
// Synthetic scenes

SyntheticScene generate_synthetic_scene(int n_gaussians, int n_cameras, std::uint64_t seed,
                                        const SyntheticSceneOptions& options) {
    if (n_gaussians < 1) throw UsageError("synthetic scene needs at least one Gaussian");
    if (n_cameras < 2) throw UsageError("synthetic scene needs at least two cameras");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    SyntheticScene s;
    s.background = options.background;
    const double log_lo = std::log(options.min_scale);
    const double log_hi = std::log(options.max_scale);
    for (int i = 0; i < n_gaussians; ++i) {
        Gaussian g;
        for (int a = 0; a < 3; ++a) g.mean[a] = unit(rng) - 0.5;
        for (int a = 0; a < 3; ++a) g.log_scale[a] = log_lo + (log_hi - log_lo) * unit(rng);
        Eigen::Vector4d q;
        for (int a = 0; a < 4; ++a) q[a] = normal(rng);
        g.rotation = q.normalized();
        const double opacity =
            options.min_opacity + (options.max_opacity - options.min_opacity) * unit(rng);
        g.opacity_logit = logit(opacity);
        s.gaussians.push_back(std::move(g));
        s.emissions.push_back(0.1 + 0.8 * unit(rng));
    }

    const double focal = options.focal_per_64px * options.width / 64.0;
    for (int k = 0; k < n_cameras; ++k) {
        const double theta = 2.0 * std::numbers::pi * k / n_cameras;
        const double phi = options.elevation_amplitude * std::sin(3.0 * theta);
        const Eigen::Vector3d eye(options.ring_radius * std::cos(theta) * std::cos(phi),
                                  options.ring_radius * std::sin(phi),
                                  options.ring_radius * std::sin(theta) * std::cos(phi));
        s.cameras.push_back(
            look_at(eye, Eigen::Vector3d::Zero(), focal, options.width, options.height, k));
    }
    return s;
}

// ---------------------------------------------------------------------------
// Degradations

void DegradationSpec::validate() const {
    if (gain_amp < 0 || offset_walk_sigma < 0 || vignette_strength < 0 || fpn_sigma < 0 ||
        blur_sigma < 0) {
        throw UsageError("degradation parameters must be non-negative");
    }
    if (vignette_strength > 1.0) throw UsageError("vignette_strength must not exceed 1");
}

std::vector<double> degradation_gains(const DegradationSpec& spec, std::size_t n_frames) {
    std::vector<double> g(n_frames, 1.0);
    if (spec.gain_amp == 0.0) return g;
    for (std::size_t t = 0; t < n_frames; ++t) {
        g[t] = 1.0 + spec.gain_amp * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) /
                                              static_cast<double>(n_frames));
    }
    return g;
}

std::vector<double> degradation_offsets(const DegradationSpec& spec, std::size_t n_frames) {
    std::vector<double> o(n_frames, 0.0);
    if (spec.offset_walk_sigma == 0.0) return o;
    std::mt19937_64 rng(spec.seed * 2654435761ULL + 1);
    std::normal_distribution<double> step(0.0, spec.offset_walk_sigma);
    for (std::size_t t = 1; t < n_frames; ++t) o[t] = o[t - 1] + step(rng);
    return o;
}

std::vector<double> vignette_field(const DegradationSpec& spec, int width, int height) {
    std::vector<double> v(static_cast<std::size_t>(width) * height, 1.0);
    if (spec.vignette_strength == 0.0) return v;
    const double cx = (width - 1) / 2.0;
    const double cy = (height - 1) / 2.0;
    const double r_max = std::hypot(cx, cy);
    if (r_max == 0.0) return v;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double r = std::hypot(x - cx, y - cy) / r_max;
            v[static_cast<std::size_t>(y) * width + x] = 1.0 - spec.vignette_strength * std::pow(r, 4);
        }
    }
    return v;
}

std::vector<double> fixed_pattern_field(const DegradationSpec& spec, int width, int height) {
    std::vector<double> f(static_cast<std::size_t>(width) * height, 0.0);
    if (spec.fpn_sigma == 0.0) return f;
    std::mt19937_64 rng(spec.seed * 2654435761ULL + 2);
    std::normal_distribution<double> noise(0.0, spec.fpn_sigma);
    if (spec.fpn_column) {
        std::vector<double> column(width);
        for (double& c : column) c = noise(rng);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) f[static_cast<std::size_t>(y) * width + x] = column[x];
        }
    } else {
        for (double& v : f) v = noise(rng);
    }
    return f;
}

std::vector<double> gaussian_blur(std::span<const double> pixels, int width, int height, double sigma) {
    std::vector<double> out(pixels.begin(), pixels.end());
    if (sigma <= 0.0) return out;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;
    std::vector<double> tmp(out.size());
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int xx = std::clamp(x + i, 0, width - 1);
                acc += kernel[i + radius] * pixels[static_cast<std::size_t>(y) * width + xx];
            }
            tmp[static_cast<std::size_t>(y) * width + x] = acc;
        }
    }
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int yy = std::clamp(y + i, 0, height - 1);
                acc += kernel[i + radius] * tmp[static_cast<std::size_t>(yy) * width + x];
            }
            out[static_cast<std::size_t>(y) * width + x] = acc;
        }
    }
    return out;
}

imaging::Sequence degrade_sequence(const imaging::Sequence& frames, const DegradationSpec& spec) {
    spec.validate();
    if (frames.empty()) throw UsageError("cannot degrade an empty sequence");
    const int w = frames.width();
    const int h = frames.height();
    const auto gains = degradation_gains(spec, frames.size());
    const auto offsets = degradation_offsets(spec, frames.size());
    const auto vignette = vignette_field(spec, w, h);
    const auto fpn = fixed_pattern_field(spec, w, h);

    std::vector<imaging::Frame> out;
    out.reserve(frames.size());
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const imaging::Frame& f = frames[t];
        std::vector<double> px = gaussian_blur(f.pixels(), w, h, spec.blur_sigma);
        for (std::size_t i = 0; i < px.size(); ++i) {
            const double v = gains[t] * (px[i] * vignette[i] + fpn[i]) + offsets[t];
            px[i] = imaging::quantize(std::clamp(v, 0.0, 1.0), f.bit_depth());
        }
        out.emplace_back(w, h, f.bit_depth(), std::move(px), static_cast<int>(t));
    }
    return imaging::Sequence(std::move(out));
}

// ---------------------------------------------------------------------------
// Point initialisation

std::vector<Gaussian> init_from_points(const std::vector<Eigen::Vector3d>& points, int k,
                                       const InitOptions& options) {
    if (k < 1) throw UsageError("neighbour count k must be at least 1");
    if (points.size() < static_cast<std::size_t>(k) + 1) {
        throw DataError("init_from_points needs at least k+1 = " + std::to_string(k + 1) +
                        " points, got " + std::to_string(points.size()));
    }
    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> normal(0.0, options.embedding_std);
    std::vector<Gaussian> out;
    out.reserve(points.size());
    std::vector<double> dist(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t j = 0; j < points.size(); ++j) {
            dist[j] = (points[i] - points[j]).norm();
        }
        dist[i] = std::numeric_limits<double>::infinity();
        std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
        std::sort(dist.begin(), dist.begin() + k);
        double mean = 0.0;
        for (int a = 0; a < k; ++a) mean += dist[a];
        mean /= k;
        mean = std::max(mean, options.scale_floor);

        Gaussian g;
        g.mean = points[i];
        g.log_scale = Eigen::Vector3d::Constant(std::log(mean));
        g.rotation = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);
        g.opacity_logit = logit(options.initial_opacity);
        g.embedding.resize(options.embedding_dim);
        for (int a = 0; a < options.embedding_dim; ++a) g.embedding[a] = normal(rng);
        out.push_back(std::move(g));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Files

void write_cameras(const std::vector<Camera>& cameras, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << "# id fx fy cx cy width height qw qx qy qz tx ty tz\n" << std::setprecision(17);
    for (const Camera& c : cameras) {
        out << c.id << ' ' << c.fx << ' ' << c.fy << ' ' << c.cx << ' ' << c.cy << ' ' << c.width
            << ' ' << c.height << ' ' << c.rotation.w() << ' ' << c.rotation.x() << ' '
            << c.rotation.y() << ' ' << c.rotation.z() << ' ' << c.translation.x() << ' '
            << c.translation.y() << ' ' << c.translation.z() << '\n';
    }
}

std::vector<Camera> read_cameras(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path.string() + ": cannot open camera file");
    std::vector<Camera> cams;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        Camera c;
        double qw, qx, qy, qz;
        if (!(ss >> c.id >> c.fx >> c.fy >> c.cx >> c.cy >> c.width >> c.height >> qw >> qx >> qy >>
              qz >> c.translation.x() >> c.translation.y() >> c.translation.z())) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed camera line");
        }
        c.rotation = Eigen::Quaterniond(qw, qx, qy, qz);
        if (std::abs(c.rotation.norm() - 1.0) > 1e-6) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": rotation is not a unit quaternion");
        }
        c.rotation.normalize();
        c.validate();
        cams.push_back(c);
    }
    if (cams.empty()) throw DataError(path.string() + ": no cameras");
    return cams;
}

void write_points(const std::vector<Eigen::Vector3d>& points, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << std::setprecision(17);
    for (const auto& p : points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

std::vector<Eigen::Vector3d> read_points(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path.string() + ": cannot open points file");
    std::vector<Eigen::Vector3d> pts;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        Eigen::Vector3d p;
        if (!(ss >> p.x() >> p.y() >> p.z())) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed point");
        }
        pts.push_back(p);
    }
    return pts;
}

}  // namespace thermsplat::scene
