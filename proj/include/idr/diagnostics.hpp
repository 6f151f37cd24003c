#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "idr/model.hpp"

namespace idr::diagnostics {

enum class DeletionMode { balanced, random_uniform };

// Balanced mode deletes class i with probability (1/count_i) / sum(1/count_j)
// over the present classes; random mode draws uniformly. Returns nullopt (a
// skip) when fewer than two classes are present, so a deletion always leaves
// at least one reserved class. The winning class's counter is incremented.
std::optional<int> sample_deletion(const std::vector<int>& present_ids,
                                   std::vector<long long>& counts, DeletionMode mode,
                                   std::uint64_t seed);

// Loss deltas of one intervention: class `deleted` removed, per reserved
// class j the mean/variance change of its pixel losses.
struct RelationDelta {
    int deleted = -1;
    struct Pair {
        int reserved;
        double r_mean;
        double r_var;
    };
    std::vector<Pair> pairs;
};

enum class DeltaNormalization { global_map, per_pixel };

// Eq-style deltas between the baseline loss map l and the counterfactual
// map l_prime, both at full resolution. K*H*W is the printed normalization;
// per_pixel divides by the class's own pixel count instead.
RelationDelta loss_deltas(int deleted, const std::vector<double>& baseline,
                          const std::vector<double>& counterfactual,
                          const std::vector<int>& gt, int num_classes,
                          DeltaNormalization norm = DeltaNormalization::global_map);

// EMA update of both relation matrices; only the listed (deleted, reserved)
// pairs are touched and the diagonal is never modified.
void update_relations(relation::RelationState& state, const RelationDelta& delta);

struct HookOptions {
    DeletionMode mode = DeletionMode::balanced;
    DeltaNormalization norm = DeltaNormalization::global_map;
};

struct HookRecord {
    bool skipped = true;
    RelationDelta delta;
};

// The per-iteration intervention: re-runs the intact forward without
// gradient recording to obtain the baseline loss map, samples a deletion,
// re-runs the head with the class removed, and folds the deltas into the
// relation state. Never touches parameter gradients.
HookRecord run_iteration_hook(model::IdrModel& m, const Tensor& image,
                              const std::vector<int>& gt, const HookOptions& opts,
                              std::uint64_t seed);

}  // namespace idr::diagnostics
