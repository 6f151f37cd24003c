#include "idr/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace idr::scenes {

namespace {

// Standardized mt19937_64 stream with hand-rolled distributions, so samples
// regenerate bit-identically regardless of the stdlib's distribution code.
struct Rng {
    std::mt19937_64 gen;
    explicit Rng(std::uint64_t seed) : gen(seed) {}
    double uniform() { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }
    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(gen() % static_cast<std::uint64_t>(hi - lo + 1));
    }
    double normal() {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }
};

struct Box {
    int y0, y1, x0, x1;  // half-open
    bool overlaps(const Box& o) const {
        return y0 < o.y1 && o.y0 < y1 && x0 < o.x1 && o.x0 < x1;
    }
};

struct Geometry {
    Box band;        // cue region
    Box disk_area;   // reachable extent of the B/B' disk
    Box c_area;      // reachable extent of distractor C
    Box d_area;      // reachable extent of distractor D
    int radius;      // disk radius
    int rect;        // distractor side length
    int cy_lo, cy_hi, cx_lo, cx_hi;  // disk center ranges (inclusive)
    int c_y_lo, c_y_hi, c_x_lo, c_x_hi;
    int d_y_lo, d_y_hi, d_x_lo, d_x_hi;
};

Geometry geometry(int h, int w) {
    Geometry g;
    g.radius = h / 8;
    g.rect = h / 8;
    g.band = {0, h / 8, 0, w};
    g.cy_lo = 3 * h / 8;
    g.cy_hi = 5 * h / 8;
    g.cx_lo = w / 4;
    g.cx_hi = 3 * w / 8;
    g.disk_area = {g.cy_lo - g.radius, g.cy_hi + g.radius + 1, g.cx_lo - g.radius,
                   g.cx_hi + g.radius + 1};
    g.c_y_lo = h / 4;
    g.c_y_hi = h / 2 - g.rect;
    g.c_x_lo = 5 * w / 8;
    g.c_x_hi = 6 * w / 8;
    g.c_area = {g.c_y_lo, g.c_y_hi + g.rect, g.c_x_lo, g.c_x_hi + g.rect};
    g.d_y_lo = 5 * h / 8;
    g.d_y_hi = 6 * h / 8;
    g.d_x_lo = 5 * w / 8;
    g.d_x_hi = 6 * w / 8;
    g.d_area = {g.d_y_lo, g.d_y_hi + g.rect, g.d_x_lo, g.d_x_hi + g.rect};
    return g;
}

int disk_pixel_count(int r) {
    int n = 0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            if (dy * dy + dx * dx <= r * r) ++n;
    return n;
}

constexpr double kColors[6][3] = {
    {0.15, 0.35, 0.15},  // background
    {0.20, 0.50, 0.90},  // cue band A
    {0.85, 0.55, 0.15},  // dependent B
    {0.85, 0.55, 0.15},  // ambiguous B' (identical appearance to B)
    {0.80, 0.15, 0.20},  // distractor C
    {0.45, 0.15, 0.70},  // distractor D
};

}  // namespace

void SceneConfig::validate() const {
    if (num_classes < 4)
        throw RuleError("scene rules need at least 4 classes (background + cue + B + B')");
    if (height % 8 != 0 || width % 8 != 0)
        throw RuleError("scene extents must be divisible by 8");
    if (height < 16 || width < 16) throw RuleError("scene too small for the region layout");
    const int ids[3] = {rule.cue_class, rule.dependent_class, rule.ambiguous_class};
    for (int id : ids)
        if (id <= 0 || id >= num_classes)
            throw RuleError("rule class id " + std::to_string(id) + " out of range");
    if (ids[0] == ids[1] || ids[0] == ids[2] || ids[1] == ids[2])
        throw RuleError("rule class ids must be distinct");
    if (rule.cue_prob < 0.0 || rule.cue_prob > 1.0)
        throw RuleError("cue presence probability must be in [0, 1]");
    const Geometry g = geometry(height, width);
    const Box* boxes[4] = {&g.band, &g.disk_area, &g.c_area, &g.d_area};
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            if (boxes[i]->overlaps(*boxes[j]))
                throw RuleError("mandatory scene regions overlap at this resolution");
}

SceneSample generate(const SceneConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const int h = cfg.height, w = cfg.width;
    const Geometry g = geometry(h, w);
    Rng rng(seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(cfg.rule_id) + 1);

    SceneSample s;
    s.height = h;
    s.width = w;
    s.rule_id = cfg.rule_id;
    s.seed = seed;
    s.gt.assign(static_cast<std::size_t>(h) * w, 0);
    s.image.assign(3 * static_cast<std::size_t>(h) * w, 0.0);

    const bool cue_present = rng.uniform() < cfg.rule.cue_prob;
    const int cy = rng.uniform_int(g.cy_lo, g.cy_hi);
    const int cx = rng.uniform_int(g.cx_lo, g.cx_hi);
    const bool c_present = cfg.num_classes > 4 && rng.uniform() < cfg.distractor_prob;
    const int c_y = rng.uniform_int(g.c_y_lo, g.c_y_hi);
    const int c_x = rng.uniform_int(g.c_x_lo, g.c_x_hi);
    const bool d_present = cfg.num_classes > 5 && rng.uniform() < cfg.distractor_prob;
    const int d_y = rng.uniform_int(g.d_y_lo, g.d_y_hi);
    const int d_x = rng.uniform_int(g.d_x_lo, g.d_x_hi);

    if (cue_present)
        for (int y = g.band.y0; y < g.band.y1; ++y)
            for (int x = 0; x < w; ++x) s.gt[y * w + x] = cfg.rule.cue_class;

    // exactly one of B / B' per scene, decided by the cue
    const int blob = cue_present ? cfg.rule.dependent_class : cfg.rule.ambiguous_class;
    const int r = g.radius;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            if (dy * dy + dx * dx <= r * r) s.gt[(cy + dy) * w + (cx + dx)] = blob;

    if (c_present)
        for (int y = 0; y < g.rect; ++y)
            for (int x = 0; x < g.rect; ++x) s.gt[(c_y + y) * w + (c_x + x)] = 4;
    if (d_present)
        for (int y = 0; y < g.rect; ++y)
            for (int x = 0; x < g.rect; ++x) s.gt[(d_y + y) * w + (d_x + x)] = 5;

    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t p = 0; p < plane; ++p) {
        const double* color = kColors[s.gt[p] % 6];
        for (int ch = 0; ch < 3; ++ch) {
            const double v = color[ch] + cfg.noise_sigma * rng.normal();
            s.image[ch * plane + p] = std::clamp(v, 0.0, 1.0);
        }
    }
    return s;
}

std::vector<double> expected_class_fractions(const SceneConfig& cfg) {
    cfg.validate();
    const double total = static_cast<double>(cfg.height) * cfg.width;
    const Geometry g = geometry(cfg.height, cfg.width);
    std::vector<double> f(static_cast<std::size_t>(cfg.num_classes), 0.0);
    const double band = (g.band.y1 - g.band.y0) * static_cast<double>(cfg.width) / total;
    const double disk = disk_pixel_count(g.radius) / total;
    const double rect = static_cast<double>(g.rect) * g.rect / total;
    f[static_cast<std::size_t>(cfg.rule.cue_class)] = cfg.rule.cue_prob * band;
    f[static_cast<std::size_t>(cfg.rule.dependent_class)] = cfg.rule.cue_prob * disk;
    f[static_cast<std::size_t>(cfg.rule.ambiguous_class)] = (1.0 - cfg.rule.cue_prob) * disk;
    if (cfg.num_classes > 4) f[4] = cfg.distractor_prob * rect;
    if (cfg.num_classes > 5) f[5] = cfg.distractor_prob * rect;
    double covered = 0.0;
    for (std::size_t i = 1; i < f.size(); ++i) covered += f[i];
    f[0] = 1.0 - covered;
    return f;
}

IoUReport mean_iou(std::span<const std::vector<int>> predictions,
                   std::span<const std::vector<int>> ground_truths, int num_classes) {
    if (predictions.size() != ground_truths.size())
        throw ShapeError("mean_iou: prediction/ground-truth count mismatch");
    std::vector<long long> tp(static_cast<std::size_t>(num_classes), 0);
    std::vector<long long> fp(static_cast<std::size_t>(num_classes), 0);
    std::vector<long long> fn(static_cast<std::size_t>(num_classes), 0);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i].size() != ground_truths[i].size())
            throw ShapeError("mean_iou: image " + std::to_string(i) + " shape mismatch");
        for (std::size_t p = 0; p < predictions[i].size(); ++p) {
            const int g = ground_truths[i][p];
            if (g < 0) continue;
            const int pr = predictions[i][p];
            if (g >= num_classes || pr < 0 || pr >= num_classes)
                throw LabelRangeError("mean_iou: class id out of range");
            if (pr == g) {
                ++tp[static_cast<std::size_t>(g)];
            } else {
                ++fp[static_cast<std::size_t>(pr)];
                ++fn[static_cast<std::size_t>(g)];
            }
        }
    }
    IoUReport rep;
    rep.per_class.assign(static_cast<std::size_t>(num_classes), 0.0);
    rep.valid.assign(static_cast<std::size_t>(num_classes), false);
    double acc = 0.0;
    int n = 0;
    for (int c = 0; c < num_classes; ++c) {
        const long long u = tp[c] + fp[c] + fn[c];
        if (u == 0) continue;
        rep.valid[static_cast<std::size_t>(c)] = true;
        rep.per_class[static_cast<std::size_t>(c)] =
            static_cast<double>(tp[c]) / static_cast<double>(u);
        acc += rep.per_class[static_cast<std::size_t>(c)];
        ++n;
    }
    rep.mean = n > 0 ? acc / n : 0.0;
    return rep;
}

}  // namespace idr::scenes
