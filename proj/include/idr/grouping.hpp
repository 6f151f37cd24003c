#pragma once

#include <cstdint>
#include <vector>

#include "idr/tensor.hpp"

namespace idr::grouping {

// Coarse per-pixel prediction: probability columns plus their argmax.
struct PseudoLabelField {
    Tensor logits;            // [K x h x w]
    Tensor probs;             // [K x h x w], each spatial column sums to 1
    std::vector<int> labels;  // [h*w] argmax ids (lowest id wins ties)
    int h = 0, w = 0;
};

// probs = channel softmax of a learned 1x1 convolution of the context
// features; labels are not differentiated through.
PseudoLabelField predict_coarse(Tape& tape, const Tensor& context_features, const Tensor& fc_w,
                                const Tensor& fc_b);

enum class PrototypeMode { none, orthogonal, dataset_level };

// K x Z class-enhancement rows. Orthogonal mode is a frozen seeded random
// orthonormal matrix; dataset-level mode starts at zero and tracks per-class
// feature means with an EMA. `none` holds zeros and disables enhancement.
struct PrototypeStore {
    PrototypeMode mode = PrototypeMode::none;
    int num_classes = 0;
    int channels = 0;
    double momentum = 0.1;
    std::uint64_t seed = 0;
    std::vector<double> rows;  // [K x Z]

    const double* row(int k) const { return rows.data() + static_cast<std::size_t>(k) * channels; }
};

PrototypeStore make_orthogonal_prototypes(int num_classes, int channels, std::uint64_t seed);
PrototypeStore make_dataset_prototypes(int num_classes, int channels, double momentum);
PrototypeStore make_null_prototypes(int num_classes, int channels);

// EMA update from detached features: for each class present in gt_down,
// row <- row * (1 - m) + mean(features over the class pixels) * m.
void update_prototypes(PrototypeStore& store, const Tensor& features,
                       const std::vector<int>& gt_down);

// Per-image semantic-level rows, ordered by ascending class id.
struct SemanticBank {
    Tensor rows;                   // [N_e x Z] (after the 2Z -> Z projection)
    std::vector<int> present_ids;  // strictly increasing
    std::vector<int> index_of;     // class id -> row index, -1 when absent

    int count() const { return static_cast<int>(present_ids.size()); }
};

// Probability-weighted pooling of pixel features per pseudo-label region,
// concatenated with the class prototype row and projected 2Z -> Z.
// proj_w: [Z x 2Z], proj_b: [Z]. Weights are the class's probabilities
// normalized to sum 1 over its region.
SemanticBank group(Tape& tape, const Tensor& pixel_features, const PseudoLabelField& field,
                   const PrototypeStore& store, const Tensor& proj_w, const Tensor& proj_b);

}  // namespace idr::grouping
