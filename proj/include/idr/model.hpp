#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "idr/grouping.hpp"
#include "idr/ops.hpp"
#include "idr/relation.hpp"
#include "idr/tensor.hpp"

namespace idr::model {

enum class ContextVariant { identity, pooling };
enum class RelationUpdateMode { deletion_diagnostics, backprop, frozen };

struct ModelConfig {
    int num_classes = 6;
    int channels = 32;                   // Z
    std::array<int, 3> widths = {16, 32, 0};  // stage widths; 0 means `channels`
    ContextVariant context = ContextVariant::identity;
    grouping::PrototypeMode enhancement = grouping::PrototypeMode::none;
    RelationUpdateMode relation_update = RelationUpdateMode::deletion_diagnostics;
    bool use_mean_relation = true;
    bool use_var_relation = true;
    double threshold = 0.0;
    double alpha = 0.4;
    double prototype_momentum = 0.1;
    double m_mean = 0.1;
    double m_var = 0.1;
    std::uint64_t seed = 0;

    int stage_width(int i) const { return widths[static_cast<std::size_t>(i)] == 0 ? channels : widths[static_cast<std::size_t>(i)]; }
    // The semantic bank is needed when any relation branch feeds the head or
    // deletion diagnostics consume it.
    bool needs_bank() const {
        return use_mean_relation || use_var_relation ||
               relation_update == RelationUpdateMode::deletion_diagnostics;
    }
};

// Learned weights in a stable, named order (the checkpoint layout).
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;

    Tensor add(const std::string& name, std::vector<int> shape, int fan_in, std::mt19937_64& gen);
    Tensor add_const(const std::string& name, Tensor t);
    Tensor find(const std::string& name) const;
    void zero_grads();
};

struct IdrModel {
    ModelConfig cfg;
    ParamSet params;
    grouping::PrototypeStore prototypes;
    relation::RelationState relations;

    static IdrModel create(const ModelConfig& cfg);

    // Stride-8 encoder: 3 blocks of [3x3 s2 conv, ReLU, 3x3 s1 conv, ReLU].
    Tensor encode(Tape& tape, const Tensor& image) const;
    // Identity pass-through or global-pool concat + 1x1 projection.
    Tensor apply_context(Tape& tape, const Tensor& pixel_features) const;

    // Relation-guided head: interaction, scatter, augmentation,
    // self-attention, 1x1 prediction, 8x bilinear upsample. skip_id marks a
    // deleted class during diagnostics; its positions stay zero in R_a and
    // its bank row is dropped from the interaction.
    Tensor head_logits(Tape& tape, const grouping::SemanticBank& bank,
                       const std::vector<int>& pseudo_labels, const Tensor& context_features,
                       int skip_id = -1) const;

    struct Forward {
        Tensor pixel_features;
        Tensor context_features;
        grouping::PseudoLabelField field;
        grouping::SemanticBank bank;  // rows undefined when the bank is not built
        Tensor logits_up;             // full-resolution prediction logits
        ops::CeMap coarse_loss;       // L_c against nearest-downsampled GT
        ops::CeMap output_loss;       // L_o against full-resolution GT
        Tensor loss;                  // alpha * L_c + L_o
    };

    // gt is the full-resolution label map (kIgnoreLabel allowed). When
    // fixed_labels is given it overrides the argmax pseudo labels (used to
    // hold the discrete structure fixed in gradient checks).
    Forward forward(Tape& tape, const Tensor& image, const std::vector<int>& gt,
                    const std::vector<int>* fixed_labels = nullptr) const;

    Tensor relation_tensor_mean() const;
    Tensor relation_tensor_var() const;
};

}  // namespace idr::model
