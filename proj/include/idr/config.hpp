#pragma once

#include <cstdint>
#include <string>

#include "idr/diagnostics.hpp"
#include "idr/model.hpp"
#include "idr/scenes.hpp"

namespace idr::config {

// Flat key = value run configuration. Unknown keys are hard errors so a
// typo'd ablation toggle cannot silently run the wrong experiment.
struct RunConfig {
    // dataset
    int num_classes = 6;
    int height = 64;
    int width = 64;
    int rule_id = 0;
    double cue_prob = 0.5;
    double noise_sigma = 0.05;
    int val_size = 32;

    // model
    int channels = 32;  // Z
    int width0 = 16;
    int width1 = 32;
    std::string context = "identity";          // identity | pooling
    std::string enhancement = "none";          // none | orthogonal | dataset_level
    std::string relation_update = "deletion_diagnostics";  // | backprop | frozen
    std::string deletion = "balanced";         // balanced | random
    bool use_mean_relation = true;
    bool use_var_relation = true;

    // optimizer / loss
    double base_lr = 0.1;
    double sgd_momentum = 0.9;
    double weight_decay = 5e-4;
    int batch_size = 8;
    int total_iters = 2000;
    double alpha = 0.4;
    double prototype_momentum = 0.1;
    double mean_momentum = 0.1;
    double var_momentum = 0.1;
    double threshold = 0.0;

    // schedule / plumbing
    std::uint64_t seed = 1;
    int val_interval = 500;
    bool augment = true;
    bool diag_before_step = false;
    bool prototype_update_before_step = false;
    std::string diag_normalization = "global";  // global | per_pixel

    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text);
    void set(const std::string& key, const std::string& value);
    std::string to_text() const;

    model::ModelConfig model_config() const;
    scenes::SceneConfig scene_config() const;
    diagnostics::DeletionMode deletion_mode() const;
    diagnostics::DeltaNormalization delta_normalization() const;
    void validate() const;
};

}  // namespace idr::config
