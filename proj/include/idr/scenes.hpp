#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "idr/errors.hpp"

namespace idr::scenes {

// Planted co-occurrence rule: the dependent class appears only when the cue
// class is present; the ambiguous class looks identical to the dependent one
// and appears only when the cue is absent. Only image-level context can tell
// them apart.
struct SceneRule {
    int cue_class = 1;
    int dependent_class = 2;
    int ambiguous_class = 3;
    double cue_prob = 0.5;
};

struct SceneConfig {
    int num_classes = 6;  // background, cue band, B, B', distractor C, distractor D
    int height = 64;
    int width = 64;
    int rule_id = 0;
    double noise_sigma = 0.05;
    double distractor_prob = 0.7;

    SceneRule rule;

    void validate() const;  // throws RuleError on inconsistent geometry
};

struct SceneSample {
    int height = 0;
    int width = 0;
    std::vector<double> image;  // [3 x H x W], values in [0, 1]
    std::vector<int> gt;        // [H x W] class ids
    int rule_id = 0;
    std::uint64_t seed = 0;
};

// Deterministic per (config, seed); regeneration is bit-identical.
SceneSample generate(const SceneConfig& cfg, std::uint64_t seed);

// Expected per-class pixel fraction implied by the placement geometry and
// presence probabilities (regions never overlap, so these are exact).
std::vector<double> expected_class_fractions(const SceneConfig& cfg);

struct IoUReport {
    std::vector<double> per_class;  // NaN-free; only valid entries meaningful
    std::vector<bool> valid;        // class had nonzero union
    double mean = 0.0;
};

// Dataset-level IoU: confusion counts accumulated over all images; classes
// with zero union are excluded from the mean. Pixels labelled ignore (-1) in
// the ground truth are skipped.
IoUReport mean_iou(std::span<const std::vector<int>> predictions,
                   std::span<const std::vector<int>> ground_truths, int num_classes);

}  // namespace idr::scenes
