#include "fsuda/synthetic.hpp"

#include "fsuda/random.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <thread>
#include <vector>

namespace fsuda {

namespace {

enum class StrokeKind { kEllipse, kBox, kSegment, kTriangle };

struct Stroke {
    StrokeKind kind;
    double cx, cy;  // center
    double a, b;    // half extents, or half length and half thickness
    double angle;
};

struct Vec2 {
    double x, y;
};

Vec2 rotate(Vec2 p, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * p.x - s * p.y, s * p.x + c * p.y};
}

double length(Vec2 p) { return std::hypot(p.x, p.y); }

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform_real(rng); }

// Signed distance in the stroke's local frame; negative inside.
double stroke_distance(const Stroke& s, Vec2 world) {
    const Vec2 p = rotate({world.x - s.cx, world.y - s.cy}, -s.angle);
    switch (s.kind) {
        case StrokeKind::kEllipse: {
            const double k = length({p.x / s.a, p.y / s.b});
            return (k - 1.0) * std::min(s.a, s.b);
        }
        case StrokeKind::kBox: {
            const double dx = std::abs(p.x) - s.a, dy = std::abs(p.y) - s.b;
            return length({std::max(dx, 0.0), std::max(dy, 0.0)}) + std::min(std::max(dx, dy), 0.0);
        }
        case StrokeKind::kSegment: {
            const double t = std::clamp(p.x, -s.a, s.a);
            return length({p.x - t, p.y}) - s.b;
        }
        case StrokeKind::kTriangle: {
            // Isoceles triangle with apex up, half base a, height 2b.
            const std::array<Vec2, 3> v{{{-s.a, -s.b}, {s.a, -s.b}, {0.0, s.b}}};
            double d = -1e9;
            for (int i = 0; i < 3; ++i) {
                const Vec2 e{v[(i + 1) % 3].x - v[i].x, v[(i + 1) % 3].y - v[i].y};
                const double len = length(e);
                // Outward normal for counter-clockwise winding.
                const Vec2 n{e.y / len, -e.x / len};
                d = std::max(d, (p.x - v[i].x) * n.x + (p.y - v[i].y) * n.y);
            }
            return d;
        }
    }
    return 1e9;
}

std::vector<Stroke> class_glyph(const SyntheticSpec& spec, Index cls) {
    Rng rng(class_seed(spec, cls));
    const auto count = spec.min_strokes +
                       static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(spec.max_strokes - spec.min_strokes + 1)));
    std::vector<Stroke> strokes;
    for (Index i = 0; i < count; ++i) {
        Stroke s{};
        s.kind = static_cast<StrokeKind>(uniform_index(rng, 4));
        s.cx = uniform(rng, -0.45, 0.45);
        s.cy = uniform(rng, -0.45, 0.45);
        s.angle = uniform(rng, 0.0, 3.141592653589793);
        if (s.kind == StrokeKind::kSegment) {
            s.a = uniform(rng, 0.25, 0.55);
            s.b = uniform(rng, 0.05, 0.1);
        } else {
            s.a = uniform(rng, 0.12, 0.35);
            s.b = uniform(rng, 0.12, 0.35);
        }
        strokes.push_back(s);
    }
    return strokes;
}

}  // namespace

void SyntheticSpec::validate() const {
    if (train_classes < 1 || val_classes < 0 || test_classes < 1)
        throw std::invalid_argument("synthetic: need at least one train and one test class");
    if (samples < 1) throw std::invalid_argument("synthetic: samples per class must be positive");
    if (height < 4 || width < 4) throw std::invalid_argument("synthetic: images must be at least 4x4");
    if (min_strokes < 1 || max_strokes < min_strokes) throw std::invalid_argument("synthetic: bad stroke count range");
    if (!std::isfinite(noise) || noise < 0) throw std::invalid_argument("synthetic: noise must be finite and >= 0");
}

std::uint64_t class_seed(const SyntheticSpec& spec, Index cls) {
    return derive_seed({spec.seed, 0x61797068ULL, static_cast<std::uint64_t>(cls)});
}

Tensor<float> render_sample(const SyntheticSpec& spec, Index cls, Index sample, Domain domain) {
    const std::vector<Stroke> glyph = class_glyph(spec, cls);
    Rng rng(derive_seed({class_seed(spec, cls), static_cast<std::uint64_t>(sample),
                         static_cast<std::uint64_t>(domain)}));

    // Per-sample pose jitter shared by every stroke, then a small per-stroke wobble.
    const double rot = uniform(rng, -0.3, 0.3);
    const double scale = uniform(rng, 0.85, 1.15);
    const Vec2 shift{uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1)};
    std::vector<Stroke> strokes = glyph;
    for (auto& s : strokes) {
        s.cx += uniform(rng, -0.04, 0.04);
        s.cy += uniform(rng, -0.04, 0.04);
        s.a *= uniform(rng, 0.9, 1.1);
        s.b *= uniform(rng, 0.9, 1.1);
        s.angle += uniform(rng, -0.1, 0.1);
    }
    const double shade_angle = uniform(rng, 0.0, 6.283185307179586);
    const Vec2 shade_dir{std::cos(shade_angle), std::sin(shade_angle)};
    const double background = uniform(rng, 0.0, 0.15);

    const Index h = spec.height, w = spec.width;
    const double px = 2.0 / static_cast<double>(std::min(h, w));
    Tensor<float> image({h, w, 1});
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            const Vec2 screen{(2.0 * static_cast<double>(x) + 1.0) / static_cast<double>(w) - 1.0,
                              (2.0 * static_cast<double>(y) + 1.0) / static_cast<double>(h) - 1.0};
            const Vec2 local = rotate({(screen.x - shift.x) / scale, (screen.y - shift.y) / scale}, -rot);
            double d = 1e9;
            for (const auto& s : strokes) d = std::min(d, stroke_distance(s, local) * scale);
            const double coverage = std::clamp(0.5 - d / px, 0.0, 1.0);
            const double shade = 0.7 + 0.3 * (local.x * shade_dir.x + local.y * shade_dir.y);
            double value = background + coverage * (shade - background);
            // Target: same glyph with compressed contrast on a raised floor.
            if (domain == Domain::kTarget) value = 0.3 + 0.45 * value;
            image.at({y, x, 0}) = static_cast<float>(value);
        }

    if (domain == Domain::kTarget) {
        for (Index i = 0; i < image.size(); ++i) {
            double v = image[i];
            if (uniform_real(rng) < 0.04) v = uniform_real(rng);
            v += spec.noise * standard_normal(rng);
            image[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return image;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const Index classes = spec.classes();
    DatasetManifest m;
    m.generator_version = kGeneratorVersion;
    m.seed = spec.seed;
    m.classes = classes;
    m.samples_per_class = spec.samples;
    m.height = spec.height;
    m.width = spec.width;
    m.channels = 1;
    m.noise = spec.noise;
    for (Index c = 0; c < classes; ++c) {
        auto& split = c < spec.train_classes ? m.train : c < spec.train_classes + spec.val_classes ? m.val : m.test;
        split.push_back(c);
        for (Domain d : {Domain::kSource, Domain::kTarget}) m.files.push_back({c, d, class_file_name(c, d), 0});
    }

    std::vector<std::array<Tensor<float>, 2>> images(static_cast<std::size_t>(classes));
    const Index stride = spec.height * spec.width;
    std::atomic<Index> next{0};
    auto worker = [&] {
        for (Index c = next++; c < classes; c = next++)
            for (Domain d : {Domain::kSource, Domain::kTarget}) {
                Tensor<float> stack({spec.samples, spec.height, spec.width, 1});
                for (Index s = 0; s < spec.samples; ++s)
                    stack.values().segment(s * stride, stride) = render_sample(spec, c, s, d).values();
                images[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] = std::move(stack);
            }
    };
    const unsigned threads = std::clamp(std::thread::hardware_concurrency(), 1u, 16u);
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    pool.clear();
    return Dataset(std::move(m), std::move(images));
}

void write_synthetic(const std::string& dir, const SyntheticSpec& spec, bool force) {
    if (std::filesystem::exists(dir) && !force)
        throw std::runtime_error(dir + " already exists (use --force to overwrite)");
    save_dataset(dir, generate_synthetic(spec), true);
}

}  // namespace fsuda
