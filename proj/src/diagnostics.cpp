#include "idr/diagnostics.hpp"

#include <cmath>
#include <random>

namespace idr::diagnostics {

std::optional<int> sample_deletion(const std::vector<int>& present_ids,
                                   std::vector<long long>& counts, DeletionMode mode,
                                   std::uint64_t seed) {
    if (present_ids.size() < 2) return std::nullopt;
    std::vector<double> prob(present_ids.size());
    if (mode == DeletionMode::balanced) {
        double total = 0.0;
        for (std::size_t i = 0; i < present_ids.size(); ++i) {
            prob[i] = 1.0 / static_cast<double>(counts[static_cast<std::size_t>(present_ids[i])]);
            total += prob[i];
        }
        for (double& p : prob) p /= total;
    } else {
        const double u = 1.0 / static_cast<double>(present_ids.size());
        for (double& p : prob) p = u;
    }
    std::mt19937_64 gen(seed);
    const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    double acc = 0.0;
    std::size_t pick = present_ids.size() - 1;
    for (std::size_t i = 0; i < present_ids.size(); ++i) {
        acc += prob[i];
        if (u < acc) {
            pick = i;
            break;
        }
    }
    const int deleted = present_ids[pick];
    ++counts[static_cast<std::size_t>(deleted)];
    return deleted;
}

RelationDelta loss_deltas(int deleted, const std::vector<double>& baseline,
                          const std::vector<double>& counterfactual,
                          const std::vector<int>& gt, int num_classes,
                          DeltaNormalization norm) {
    if (baseline.size() != counterfactual.size() || baseline.size() != gt.size())
        throw ShapeError("loss_deltas: map size mismatch");
    RelationDelta delta;
    delta.deleted = deleted;
    const double khw = static_cast<double>(num_classes) * static_cast<double>(baseline.size());
    for (int j = 0; j < num_classes; ++j) {
        if (j == deleted) continue;
        double sum_l = 0.0, sum_lp = 0.0;
        long long n = 0;
        for (std::size_t p = 0; p < gt.size(); ++p) {
            if (gt[p] != j) continue;
            sum_l += baseline[p];
            sum_lp += counterfactual[p];
            ++n;
        }
        if (n == 0) continue;  // class absent from GT: pair skipped
        const double mean_l = sum_l / static_cast<double>(n);
        const double mean_lp = sum_lp / static_cast<double>(n);
        double ssd_l = 0.0, ssd_lp = 0.0;
        for (std::size_t p = 0; p < gt.size(); ++p) {
            if (gt[p] != j) continue;
            ssd_l += (baseline[p] - mean_l) * (baseline[p] - mean_l);
            ssd_lp += (counterfactual[p] - mean_lp) * (counterfactual[p] - mean_lp);
        }
        const double denom = norm == DeltaNormalization::global_map ? khw : static_cast<double>(n);
        delta.pairs.push_back({j, (sum_lp - sum_l) / denom, (ssd_lp - ssd_l) / denom});
    }
    return delta;
}

void update_relations(relation::RelationState& state, const RelationDelta& delta) {
    const int k = state.num_classes;
    for (const auto& pair : delta.pairs) {
        if (pair.reserved == delta.deleted || !std::isfinite(pair.r_mean) ||
            !std::isfinite(pair.r_var))
            throw ContractError("update_relations: invalid delta pair");
        const std::size_t at =
            static_cast<std::size_t>(delta.deleted) * k + static_cast<std::size_t>(pair.reserved);
        state.mean[at] = state.m_mean * pair.r_mean + (1.0 - state.m_mean) * state.mean[at];
        state.var[at] = state.m_var * pair.r_var + (1.0 - state.m_var) * state.var[at];
    }
}

HookRecord run_iteration_hook(model::IdrModel& m, const Tensor& image,
                              const std::vector<int>& gt, const HookOptions& opts,
                              std::uint64_t seed) {
    HookRecord rec;
    Tape tape;
    NoGradGuard guard(tape);

    // intact baseline with the current weights
    model::IdrModel::Forward fw = m.forward(tape, image, gt);
    const std::optional<int> deleted =
        sample_deletion(fw.bank.present_ids, m.relations.counts, opts.mode, seed);
    if (!deleted) return rec;

    Tensor cf_logits = m.head_logits(tape, fw.bank, fw.field.labels, fw.context_features,
                                     *deleted);
    ops::CeMap cf_loss = ops::cross_entropy_map(tape, cf_logits, gt);

    rec.skipped = false;
    rec.delta = loss_deltas(*deleted, fw.output_loss.map.values(), cf_loss.map.values(), gt,
                            m.cfg.num_classes, opts.norm);
    update_relations(m.relations, rec.delta);
    return rec;
}

}  // namespace idr::diagnostics
