#pragma once

#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "idr/checkpoint.hpp"
#include "idr/config.hpp"
#include "idr/diagnostics.hpp"
#include "idr/model.hpp"
#include "idr/scenes.hpp"

namespace idr::trainer {

// Deterministic seed derivation: every random decision in a run is a pure
// function of (master seed, purpose salt, indices), so resuming from a
// checkpoint needs no RNG state.
std::uint64_t mix64(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0,
                    std::uint64_t d = 0);

double poly_lr(double base_lr, int iter, int total_iters);  // (1 - iter/total)^0.9

struct Augmented {
    Tensor image;         // [3 x H x W]
    std::vector<int> gt;  // padded area carries the ignore label
};
// Random horizontal flip, random scale in [0.5, 2], random crop back to the
// sample's extents (padding with zeros / ignore when the scale shrinks).
Augmented augment_sample(const scenes::SceneSample& sample, bool enabled, std::uint64_t seed);

class Trainer {
  public:
    static Trainer create(const config::RunConfig& cfg);
    static Trainer from_snapshot(const checkpoint::Snapshot& snap);

    struct IterStats {
        double loss = 0.0, loss_c = 0.0, loss_o = 0.0, lr = 0.0;
        bool skipped = false;
        bool non_finite = false;
    };
    IterStats train_iteration();

    double validate(int count);
    scenes::IoUReport evaluate_split(const std::string& split, int count);
    std::vector<int> predict(const Tensor& image);

    // Full loop with metrics/diagnostics logs and checkpoints written under
    // out_dir (unless empty). Returns 0 on success, 3 on a non-finite loss.
    int run(const std::string& out_dir, bool quiet = false);

    void save(const std::string& base) const;

    const config::RunConfig& cfg() const { return cfg_; }
    model::IdrModel& net() { return net_; }
    std::vector<std::vector<double>>& velocity() { return velocity_; }
    int iteration() const { return iteration_; }
    const std::string& metrics_csv() const { return metrics_; }
    const std::string& diagnostics_csv() const { return diag_log_; }

    scenes::SceneSample make_scene(std::uint64_t salt, std::uint64_t index) const;

  private:
    Trainer() = default;
    void sgd_step(double lr);

    config::RunConfig cfg_;
    model::IdrModel net_;
    std::vector<std::vector<double>> velocity_;
    int iteration_ = 0;
    std::string metrics_ = "iteration,loss,loss_c,loss_o,lr,val_miou\n";
    std::string diag_log_ = "iteration,deleted_id,reserved_id,r_mean,r_var\n";
};

struct RelationExport {
    int num_classes = 0;
    std::vector<double> mean, var;
    std::vector<std::tuple<int, int, double>> top_pairs;  // strongest off-diagonal of mean
    std::size_t storage_entries = 0;
};
// Writes m_r_mean.csv / m_r_var.csv (header row of class names) to out_dir
// when non-empty.
RelationExport inspect_relations(const checkpoint::Snapshot& snap, const std::string& out_dir);

struct AblateRow {
    std::string ie, relation, deletion;
    std::uint64_t seed = 0;
    double miou = 0.0;
    std::vector<long long> deletion_counts;
};
// Cross product of the requested Table-3-style toggles; each cell trains
// from scratch with the base config's budget. Toggle tokens:
// IE-Orthogonal, IE-DL, Mr-mean, Mr-var, BD, RD.
std::vector<AblateRow> ablate(const config::RunConfig& base,
                              const std::vector<std::string>& toggles,
                              const std::string& out_dir);

struct GradcheckResult {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};
// Finite-difference battery over every operator plus the end-to-end loss on
// a 2-class 16x16 scene; pass threshold 1e-4.
std::vector<GradcheckResult> gradcheck_suite();

// Flat binary dataset dump (images.bin / labels.bin per split with a magic +
// dims header, and a manifest.csv of seeds).
void generate_dataset(const config::RunConfig& cfg, const std::string& out_dir, int train_count,
                      int val_count);

}  // namespace idr::trainer
