#include "idr/model.hpp"

#include <cmath>

namespace idr::model {

namespace {
double rng_uniform(std::mt19937_64& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}
}  // namespace

Tensor ParamSet::add(const std::string& name, std::vector<int> shape, int fan_in,
                     std::mt19937_64& gen) {
    Tensor t = Tensor::zeros(std::move(shape));
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = (2.0 * rng_uniform(gen) - 1.0) * s;
    t.set_requires_grad(true);
    names.push_back(name);
    tensors.push_back(t);
    return t;
}

Tensor ParamSet::add_const(const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    names.push_back(name);
    tensors.push_back(t);
    return t;
}

Tensor ParamSet::find(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return tensors[i];
    throw CompatibilityError("parameter '" + name + "' not found");
}

void ParamSet::zero_grads() {
    for (Tensor& t : tensors) t.zero_grad();
}

IdrModel IdrModel::create(const ModelConfig& cfg) {
    IdrModel m;
    m.cfg = cfg;
    std::mt19937_64 gen(cfg.seed ^ 0xA5A5F00DULL);

    const int k = cfg.num_classes, z = cfg.channels;
    const int w0 = cfg.stage_width(0), w1 = cfg.stage_width(1), w2 = cfg.stage_width(2);
    if (w2 != z) throw CompatibilityError("final stage width must equal Z");
    if (z < k) throw CompatibilityError("Z must be at least K for the prototype rows");

    auto conv = [&](const std::string& name, int co, int ci) {
        m.params.add(name + "_w", {co, ci, 3, 3}, ci * 9, gen);
        m.params.add(name + "_b", {co}, ci * 9, gen);  // zeroed below
    };
    conv("enc0", w0, 3);
    conv("enc1", w0, w0);
    conv("enc2", w1, w0);
    conv("enc3", w1, w1);
    conv("enc4", w2, w1);
    conv("enc5", w2, w2);
    m.params.add("ctx_w", {z, 2 * z}, 2 * z, gen);
    m.params.add("ctx_b", {z}, 2 * z, gen);
    m.params.add("fc_w", {k, z}, z, gen);
    m.params.add("fc_b", {k}, z, gen);
    m.params.add("proj_w", {z, 2 * z}, 2 * z, gen);
    m.params.add("proj_b", {z}, 2 * z, gen);
    m.params.add("sa_q_w", {z, 3 * z}, 3 * z, gen);
    m.params.add("sa_q_b", {z}, 3 * z, gen);
    m.params.add("sa_k_w", {z, 3 * z}, 3 * z, gen);
    m.params.add("sa_k_b", {z}, 3 * z, gen);
    m.params.add("sa_v_w", {z, 3 * z}, 3 * z, gen);
    m.params.add("sa_v_b", {z}, 3 * z, gen);
    m.params.add("sa_o_w", {z, z}, z, gen);
    m.params.add("sa_o_b", {z}, z, gen);
    m.params.add("fo_w", {k, z}, z, gen);
    m.params.add("fo_b", {k}, z, gen);
    // biases start at zero
    for (std::size_t i = 0; i < m.params.names.size(); ++i)
        if (m.params.names[i].ends_with("_b"))
            std::fill(m.params.tensors[i].values().begin(), m.params.tensors[i].values().end(),
                      0.0);

    if (cfg.relation_update == RelationUpdateMode::backprop) {
        Tensor mr = Tensor::zeros({k, k});
        for (int i = 0; i < k; ++i) mr.data()[i * k + i] = 1.0;
        Tensor mv = Tensor::zeros({k, k});
        for (int i = 0; i < k; ++i) mv.data()[i * k + i] = 1.0;
        m.params.add_const("mr_mean", mr);
        m.params.add_const("mr_var", mv);
    }

    switch (cfg.enhancement) {
        case grouping::PrototypeMode::orthogonal:
            m.prototypes = grouping::make_orthogonal_prototypes(k, z, cfg.seed ^ 0x0B5E55EDULL);
            break;
        case grouping::PrototypeMode::dataset_level:
            m.prototypes = grouping::make_dataset_prototypes(k, z, cfg.prototype_momentum);
            break;
        case grouping::PrototypeMode::none:
            m.prototypes = grouping::make_null_prototypes(k, z);
            break;
    }
    m.relations = relation::RelationState::identity(k, cfg.m_mean, cfg.m_var);
    return m;
}

Tensor IdrModel::encode(Tape& tape, const Tensor& image) const {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw ShapeError("encode: expected [3 x H x W] image, got " +
                         Tensor::shape_str(image.shape()));
    if (image.dim(1) % 8 != 0 || image.dim(2) % 8 != 0)
        throw ShapeError("encode: spatial extents must be divisible by 8, got " +
                         Tensor::shape_str(image.shape()));
    Tensor x = image;
    for (int b = 0; b < 3; ++b) {
        const std::string s2 = "enc" + std::to_string(2 * b);
        const std::string s1 = "enc" + std::to_string(2 * b + 1);
        x = ops::relu(tape, ops::conv3x3(tape, x, params.find(s2 + "_w"), params.find(s2 + "_b"), 2));
        x = ops::relu(tape, ops::conv3x3(tape, x, params.find(s1 + "_w"), params.find(s1 + "_b"), 1));
    }
    return x;
}

Tensor IdrModel::apply_context(Tape& tape, const Tensor& pixel_features) const {
    if (cfg.context == ContextVariant::identity) return pixel_features;
    Tensor pooled = ops::global_avg_broadcast(tape, pixel_features);
    const Tensor parts[2] = {pixel_features, pooled};
    Tensor cat = ops::concat_axis0(tape, parts);
    return ops::conv1x1(tape, cat, params.find("ctx_w"), params.find("ctx_b"));
}

Tensor IdrModel::relation_tensor_mean() const {
    if (cfg.relation_update == RelationUpdateMode::backprop) return params.find("mr_mean");
    const int k = cfg.num_classes;
    return Tensor::from({k, k}, relations.mean);
}

Tensor IdrModel::relation_tensor_var() const {
    if (cfg.relation_update == RelationUpdateMode::backprop) return params.find("mr_var");
    const int k = cfg.num_classes;
    return Tensor::from({k, k}, relations.var);
}

Tensor IdrModel::head_logits(Tape& tape, const grouping::SemanticBank& bank,
                             const std::vector<int>& pseudo_labels,
                             const Tensor& context_features, int skip_id) const {
    const int z = cfg.channels;
    const int h = context_features.dim(1), w = context_features.dim(2);

    // bank restricted to the surviving classes
    std::vector<int> present;
    std::vector<int> rows;
    std::vector<int> index_of(static_cast<std::size_t>(cfg.num_classes), -1);
    for (int i = 0; i < bank.count(); ++i) {
        const int id = bank.present_ids[static_cast<std::size_t>(i)];
        if (id == skip_id) continue;
        index_of[static_cast<std::size_t>(id)] = static_cast<int>(present.size());
        present.push_back(id);
        rows.push_back(i);
    }

    auto branch = [&](const Tensor& matrix) {
        Tensor sub = relation::transform_relations(tape, matrix, present, cfg.threshold);
        Tensor bank_rows = ops::select_rows(tape, bank.rows, rows);
        Tensor enhanced = relation::interact(tape, sub, bank_rows);
        return relation::scatter_semantic(tape, enhanced, pseudo_labels, index_of, h, w, skip_id);
    };

    Tensor ra_mean = cfg.use_mean_relation && bank.count() > 0 && !present.empty()
                         ? branch(relation_tensor_mean())
                         : Tensor::zeros({z, h, w});
    Tensor ra_var = cfg.use_var_relation && bank.count() > 0 && !present.empty()
                        ? branch(relation_tensor_var())
                        : Tensor::zeros({z, h, w});

    const Tensor parts[3] = {ra_mean, ra_var, context_features};
    Tensor augmented = ops::concat_axis0(tape, parts);  // [3Z x h x w]

    // single-head scaled dot-product self-attention over the h*w positions
    const int s = h * w;
    Tensor q = ops::reshape(tape, ops::conv1x1(tape, augmented, params.find("sa_q_w"), params.find("sa_q_b")), {z, s});
    Tensor kk = ops::reshape(tape, ops::conv1x1(tape, augmented, params.find("sa_k_w"), params.find("sa_k_b")), {z, s});
    Tensor v = ops::reshape(tape, ops::conv1x1(tape, augmented, params.find("sa_v_w"), params.find("sa_v_b")), {z, s});
    Tensor scores = ops::scale(tape, ops::matmul(tape, ops::transpose(tape, q), kk),
                               1.0 / std::sqrt(static_cast<double>(z)));
    Tensor attn = ops::masked_softmax(tape, scores, 1);  // [s x s]
    Tensor mixed = ops::matmul(tape, v, ops::transpose(tape, attn));
    Tensor r = ops::conv1x1(tape, ops::reshape(tape, mixed, {z, h, w}), params.find("sa_o_w"),
                            params.find("sa_o_b"));

    Tensor logits = ops::conv1x1(tape, r, params.find("fo_w"), params.find("fo_b"));
    return ops::bilinear_upsample(tape, logits, 8);
}

IdrModel::Forward IdrModel::forward(Tape& tape, const Tensor& image, const std::vector<int>& gt,
                                    const std::vector<int>* fixed_labels) const {
    Forward out;
    out.pixel_features = encode(tape, image);
    out.context_features = apply_context(tape, out.pixel_features);
    out.field = grouping::predict_coarse(tape, out.context_features, params.find("fc_w"),
                                         params.find("fc_b"));
    if (fixed_labels) out.field.labels = *fixed_labels;

    const int h = image.dim(1), w = image.dim(2);
    if (gt.size() != static_cast<std::size_t>(h) * w)
        throw ShapeError("forward: ground-truth size does not match the image");
    const std::vector<int> gt_down = ops::downsample_labels_nearest(gt, h, w, 8);
    out.coarse_loss = ops::cross_entropy_map(tape, out.field.logits, gt_down);

    if (cfg.needs_bank())
        out.bank = grouping::group(tape, out.pixel_features, out.field, prototypes,
                                   params.find("proj_w"), params.find("proj_b"));

    out.logits_up = head_logits(tape, out.bank, out.field.labels, out.context_features);
    out.output_loss = ops::cross_entropy_map(tape, out.logits_up, gt);
    out.loss = ops::add(tape, ops::scale(tape, out.coarse_loss.mean, cfg.alpha),
                        out.output_loss.mean);
    return out;
}

}  // namespace idr::model
