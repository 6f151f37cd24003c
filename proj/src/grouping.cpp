#include "idr/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "idr/ops.hpp"

namespace idr::grouping {

namespace {

double rng_uniform(std::mt19937_64& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

double rng_normal(std::mt19937_64& gen) {
    const double u1 = 1.0 - rng_uniform(gen);
    const double u2 = rng_uniform(gen);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace

PseudoLabelField predict_coarse(Tape& tape, const Tensor& context_features, const Tensor& fc_w,
                                const Tensor& fc_b) {
    PseudoLabelField field;
    field.h = context_features.dim(1);
    field.w = context_features.dim(2);
    field.logits = ops::conv1x1(tape, context_features, fc_w, fc_b);
    const int k = field.logits.dim(0);
    Tensor flat = ops::reshape(tape, field.logits, {k, field.h * field.w});
    Tensor probs_flat = ops::masked_softmax(tape, flat, 0);
    field.probs = ops::reshape(tape, probs_flat, {k, field.h, field.w});
    field.labels = ops::argmax_channels(field.logits);
    return field;
}

PrototypeStore make_orthogonal_prototypes(int num_classes, int channels, std::uint64_t seed) {
    if (num_classes > channels)
        throw CapacityError("cannot build " + std::to_string(num_classes) +
                            " orthonormal rows of length " + std::to_string(channels));
    PrototypeStore store;
    store.mode = PrototypeMode::orthogonal;
    store.num_classes = num_classes;
    store.channels = channels;
    store.seed = seed;
    const std::size_t z = static_cast<std::size_t>(channels);
    std::mt19937_64 gen(seed);
    std::vector<double> g(static_cast<std::size_t>(num_classes) * z);
    for (double& v : g) v = rng_normal(gen);

    // modified Gram-Schmidt with a second pass; signs fixed against the
    // original rows so the decomposition is unique per seed
    store.rows = g;
    auto row = [&](std::vector<double>& m, int i) { return m.data() + static_cast<std::size_t>(i) * z; };
    for (int i = 0; i < num_classes; ++i) {
        double* qi = row(store.rows, i);
        for (int pass = 0; pass < 2; ++pass) {
            for (int j = 0; j < i; ++j) {
                const double* qj = row(store.rows, j);
                double d = 0.0;
                for (std::size_t c = 0; c < z; ++c) d += qi[c] * qj[c];
                for (std::size_t c = 0; c < z; ++c) qi[c] -= d * qj[c];
            }
        }
        double norm = 0.0;
        for (std::size_t c = 0; c < z; ++c) norm += qi[c] * qi[c];
        norm = std::sqrt(norm);
        for (std::size_t c = 0; c < z; ++c) qi[c] /= norm;
        double sign = 0.0;
        const double* ai = row(g, i);
        for (std::size_t c = 0; c < z; ++c) sign += qi[c] * ai[c];
        if (sign < 0.0)
            for (std::size_t c = 0; c < z; ++c) qi[c] = -qi[c];
    }
    return store;
}

PrototypeStore make_dataset_prototypes(int num_classes, int channels, double momentum) {
    PrototypeStore store;
    store.mode = PrototypeMode::dataset_level;
    store.num_classes = num_classes;
    store.channels = channels;
    store.momentum = momentum;
    store.rows.assign(static_cast<std::size_t>(num_classes) * channels, 0.0);
    return store;
}

PrototypeStore make_null_prototypes(int num_classes, int channels) {
    PrototypeStore store;
    store.mode = PrototypeMode::none;
    store.num_classes = num_classes;
    store.channels = channels;
    store.rows.assign(static_cast<std::size_t>(num_classes) * channels, 0.0);
    return store;
}

void update_prototypes(PrototypeStore& store, const Tensor& features,
                       const std::vector<int>& gt_down) {
    if (store.mode != PrototypeMode::dataset_level)
        throw ModeError("update_prototypes requires a dataset-level store");
    if (features.rank() != 3 || features.dim(0) != store.channels)
        throw ShapeError("update_prototypes: feature shape " +
                         Tensor::shape_str(features.shape()) + " does not match store");
    const std::size_t s = static_cast<std::size_t>(features.dim(1)) * features.dim(2);
    if (gt_down.size() != s) throw ShapeError("update_prototypes: label map size mismatch");

    const double* f = features.data();  // values only; the EMA never sees gradients
    const int z = store.channels;
    std::vector<double> mean(static_cast<std::size_t>(z));
    for (int k = 0; k < store.num_classes; ++k) {
        std::size_t count = 0;
        std::fill(mean.begin(), mean.end(), 0.0);
        for (std::size_t p = 0; p < s; ++p) {
            if (gt_down[p] != k) continue;
            ++count;
            for (int c = 0; c < z; ++c) mean[static_cast<std::size_t>(c)] += f[c * s + p];
        }
        if (count == 0) continue;
        double* row = store.rows.data() + static_cast<std::size_t>(k) * z;
        const double m = store.momentum;
        for (int c = 0; c < z; ++c)
            row[c] = row[c] * (1.0 - m) + (mean[static_cast<std::size_t>(c)] / count) * m;
    }
}

SemanticBank group(Tape& tape, const Tensor& pixel_features, const PseudoLabelField& field,
                   const PrototypeStore& store, const Tensor& proj_w, const Tensor& proj_b) {
    const int z = pixel_features.dim(0);
    const int k = field.probs.dim(0);
    if (store.num_classes != k || store.channels != z)
        throw ShapeError("group: prototype store built for K=" + std::to_string(store.num_classes) +
                         ", Z=" + std::to_string(store.channels));
    const std::size_t s = static_cast<std::size_t>(field.h) * field.w;
    if (pixel_features.dim(1) != field.h || pixel_features.dim(2) != field.w)
        throw ShapeError("group: feature/field resolution mismatch");

    SemanticBank bank;
    bank.index_of.assign(static_cast<std::size_t>(k), -1);
    for (int id : field.labels) {
        if (bank.index_of[static_cast<std::size_t>(id)] == -1)
            bank.index_of[static_cast<std::size_t>(id)] = 0;  // mark present
    }
    for (int id = 0; id < k; ++id) {
        if (bank.index_of[static_cast<std::size_t>(id)] != -1) {
            bank.index_of[static_cast<std::size_t>(id)] = bank.count();
            bank.present_ids.push_back(id);
        }
    }

    const int ne = bank.count();
    Tensor pre = Tensor::zeros({ne, 2 * z});
    const double* feat = pixel_features.data();
    const double* probs = field.probs.data();
    auto weight_sums = std::make_shared<std::vector<double>>(static_cast<std::size_t>(ne), 0.0);
    for (std::size_t p = 0; p < s; ++p) {
        const int id = field.labels[p];
        (*weight_sums)[static_cast<std::size_t>(bank.index_of[static_cast<std::size_t>(id)])] +=
            probs[static_cast<std::size_t>(id) * s + p];
    }
    double* prev = pre.data();
    for (std::size_t p = 0; p < s; ++p) {
        const int id = field.labels[p];
        const int idx = bank.index_of[static_cast<std::size_t>(id)];
        const double w = probs[static_cast<std::size_t>(id) * s + p] /
                         (*weight_sums)[static_cast<std::size_t>(idx)];
        double* row = prev + static_cast<std::size_t>(idx) * 2 * z;
        for (int c = 0; c < z; ++c) row[c] += w * feat[static_cast<std::size_t>(c) * s + p];
    }
    for (int i = 0; i < ne; ++i) {
        const double* proto = store.row(bank.present_ids[static_cast<std::size_t>(i)]);
        double* row = prev + static_cast<std::size_t>(i) * 2 * z + z;
        std::copy(proto, proto + z, row);
    }

    if (tape.track(pixel_features, field.probs)) {
        pre.mark_tracked();
        Tensor pf = pixel_features;
        Tensor pr = field.probs;
        std::vector<int> labels = field.labels;
        std::vector<int> index_of = bank.index_of;
        tape.record([pf, pr, pre, labels, index_of, weight_sums, s, z]() mutable {
            if (!pre.has_grad()) return;
            const double* dpre = pre.grad();
            const double* feat = pf.data();
            const double* probs = pr.data();
            const double* prev = pre.data();
            double* dfeat = pf.tracked() ? pf.grad() : nullptr;
            double* dprobs = pr.tracked() ? pr.grad() : nullptr;
            for (std::size_t p = 0; p < s; ++p) {
                const int id = labels[p];
                const int idx = index_of[static_cast<std::size_t>(id)];
                const double sk = (*weight_sums)[static_cast<std::size_t>(idx)];
                const double w = probs[static_cast<std::size_t>(id) * s + p] / sk;
                const double* drow = dpre + static_cast<std::size_t>(idx) * 2 * z;
                const double* vrow = prev + static_cast<std::size_t>(idx) * 2 * z;
                double dot_feat = 0.0, dot_row = 0.0;
                for (int c = 0; c < z; ++c) {
                    const double d = drow[c];
                    if (dfeat) dfeat[static_cast<std::size_t>(c) * s + p] += w * d;
                    dot_feat += d * feat[static_cast<std::size_t>(c) * s + p];
                    dot_row += d * vrow[c];
                }
                if (dprobs)
                    dprobs[static_cast<std::size_t>(id) * s + p] += (dot_feat - dot_row) / sk;
            }
        });
    }

    Tensor projected = ops::matmul(tape, pre, ops::transpose(tape, proj_w));
    bank.rows = ops::add_bias_rows(tape, projected, proj_b);
    return bank;
}

}  // namespace idr::grouping
