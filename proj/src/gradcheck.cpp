#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "idr/model.hpp"
#include "idr/relation.hpp"
#include "idr/trainer.hpp"

namespace idr::trainer {

namespace {

constexpr double kPassThreshold = 1e-4;

std::uint64_t step(std::uint64_t& s) {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Tensor uniform(std::vector<int> shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    std::uint64_t s = seed;
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        const double u = static_cast<double>(step(s) >> 11) * 0x1.0p-53;
        t.data()[i] = lo + (hi - lo) * u;
    }
    return t;
}

GradcheckResult check(std::vector<GradcheckResult>& out, const std::string& name,
                      const std::function<Tensor(Tape&)>& program, std::vector<Tensor> inputs,
                      double eps = 1e-5) {
    const ops::FdReport rep = ops::finite_difference_check(program, std::move(inputs), eps);
    GradcheckResult r{name, rep.max_rel_err, rep.max_rel_err < kPassThreshold};
    out.push_back(r);
    return r;
}

// Scalar readout with fixed weights so every output coordinate carries a
// distinct gradient.
Tensor readout(Tape& tape, const Tensor& x, std::uint64_t seed) {
    return ops::sum(tape, ops::mul(tape, x, uniform(x.shape(), seed)));
}

}  // namespace

std::vector<GradcheckResult> gradcheck_suite() {
    std::vector<GradcheckResult> results;

    {
        Tensor a = uniform({3, 4}, 11), b = uniform({3, 4}, 12);
        check(results, "add/mul/scale/sum", [=](Tape& t) {
            return ops::sum(t, ops::scale(t, ops::mul(t, ops::add(t, a, b), b), 0.7));
        }, {a, b});
    }
    {
        Tensor a = uniform({4, 5}, 13);
        check(results, "relu", [=](Tape& t) { return readout(t, ops::relu(t, a), 14); }, {a});
    }
    {
        Tensor a = uniform({3, 4}, 15), b = uniform({4, 2}, 16);
        check(results, "matmul", [=](Tape& t) { return readout(t, ops::matmul(t, a, b), 17); },
              {a, b});
    }
    {
        Tensor a = uniform({3, 4}, 18);
        check(results, "transpose",
              [=](Tape& t) { return readout(t, ops::transpose(t, a), 19); }, {a});
    }
    {
        Tensor x = uniform({3, 4}, 20), bias = uniform({4}, 21);
        check(results, "add_bias_rows",
              [=](Tape& t) { return readout(t, ops::add_bias_rows(t, x, bias), 22); }, {x, bias});
    }
    {
        Tensor a = uniform({2, 6}, 23);
        check(results, "reshape",
              [=](Tape& t) { return readout(t, ops::reshape(t, a, {3, 4}), 24); }, {a});
    }
    {
        Tensor a = uniform({2, 3, 3}, 25), b = uniform({1, 3, 3}, 26);
        check(results, "concat_axis0", [=](Tape& t) {
            const Tensor parts[2] = {a, b};
            return readout(t, ops::concat_axis0(t, parts), 27);
        }, {a, b});
    }
    {
        Tensor a = uniform({4, 3}, 28);
        check(results, "select_rows", [=](Tape& t) {
            return readout(t, ops::select_rows(t, a, {2, 0, 2}), 29);
        }, {a});
    }
    {
        Tensor a = uniform({3, 4}, 30);
        a.data()[5] = ops::kNegInf;  // masked entry: zero gradient on both sides
        check(results, "masked_softmax_rows",
              [=](Tape& t) { return readout(t, ops::masked_softmax(t, a, 1), 31); }, {a});
        check(results, "masked_softmax_cols",
              [=](Tape& t) { return readout(t, ops::masked_softmax(t, a, 0), 32); }, {a});
    }
    {
        Tensor logits = uniform({3, 4, 4}, 33);
        std::vector<int> labels(16);
        std::uint64_t s = 34;
        for (auto& l : labels) l = static_cast<int>(step(s) % 3);
        labels[5] = ops::kIgnoreLabel;
        check(results, "cross_entropy_map",
              [=](Tape& t) { return ops::cross_entropy_map(t, logits, labels).mean; }, {logits});
    }
    {
        Tensor x = uniform({2, 6, 6}, 35), w = uniform({3, 2, 3, 3}, 36), b = uniform({3}, 37);
        check(results, "conv3x3_s1",
              [=](Tape& t) { return readout(t, ops::conv3x3(t, x, w, b, 1), 38); }, {x, w, b});
        check(results, "conv3x3_s2",
              [=](Tape& t) { return readout(t, ops::conv3x3(t, x, w, b, 2), 39); }, {x, w, b});
    }
    {
        Tensor x = uniform({3, 4, 4}, 40), w = uniform({2, 3}, 41), b = uniform({2}, 42);
        check(results, "conv1x1",
              [=](Tape& t) { return readout(t, ops::conv1x1(t, x, w, b), 43); }, {x, w, b});
    }
    {
        Tensor x = uniform({2, 3, 4}, 44);
        check(results, "bilinear_upsample_8x",
              [=](Tape& t) { return readout(t, ops::bilinear_upsample(t, x, 8), 45); }, {x});
    }
    {
        Tensor x = uniform({3, 4, 4}, 46);
        check(results, "global_avg_broadcast",
              [=](Tape& t) { return readout(t, ops::global_avg_broadcast(t, x), 47); }, {x});
    }
    {
        // Relation pipeline: one entry masked (-0.3 < 0), the rest kept and
        // well away from the threshold boundary.
        Tensor m = uniform({3, 3}, 48, 0.4, 1.2);
        m.data()[1] = -0.3;
        Tensor rows = uniform({2, 4}, 49);
        const std::vector<int> present = {0, 2};
        check(results, "transform+interact", [=](Tape& t) {
            Tensor sub = relation::transform_relations(t, m, present, 0.0);
            return readout(t, relation::interact(t, sub, rows), 50);
        }, {m, rows});
    }
    {
        Tensor rows = uniform({2, 3}, 51);
        const std::vector<int> labels = {0, 2, 2, 0, 1, 2};  // class 1 absent from the bank
        const std::vector<int> index_of = {0, -1, 1};
        check(results, "scatter_semantic", [=](Tape& t) {
            return readout(t, relation::scatter_semantic(t, rows, labels, index_of, 2, 3, 1), 52);
        }, {rows});
    }
    {
        // Grouping with the discrete pseudo labels held fixed.
        const int k = 3, z = 4, h = 3, w = 3;
        Tensor feats = uniform({z, h, w}, 53);
        Tensor fc_w = uniform({k, z}, 54), fc_b = uniform({k}, 55);
        Tensor proj_w = uniform({z, 2 * z}, 56), proj_b = uniform({z}, 57);
        const grouping::PrototypeStore store = grouping::make_orthogonal_prototypes(k, z, 58);
        std::vector<int> fixed;
        {
            Tape t0;
            NoGradGuard g(t0);
            fixed = grouping::predict_coarse(t0, feats, fc_w, fc_b).labels;
        }
        check(results, "group", [=](Tape& t) {
            grouping::PseudoLabelField f = grouping::predict_coarse(t, feats, fc_w, fc_b);
            f.labels = fixed;
            const grouping::SemanticBank bank = grouping::group(t, feats, f, store, proj_w, proj_b);
            return readout(t, bank.rows, 59);
        }, {feats, fc_w, fc_b, proj_w, proj_b});
    }
    {
        // End-to-end loss on a 16x16 two-class scene. The checked point must
        // be locally smooth: pseudo labels are held fixed, the relation
        // threshold is moved away from the identity-initialized entries, and
        // the encoder biases are lifted so no pre-activation sits on a ReLU
        // kink within the finite-difference step.
        model::ModelConfig mc;
        mc.num_classes = 2;
        mc.channels = 4;
        mc.widths = {4, 4, 0};
        mc.context = model::ContextVariant::pooling;
        mc.enhancement = grouping::PrototypeMode::orthogonal;
        mc.relation_update = model::RelationUpdateMode::backprop;
        mc.threshold = -1.0;
        mc.seed = 62;
        model::IdrModel net = model::IdrModel::create(mc);
        for (std::size_t i = 0; i < net.params.names.size(); ++i)
            if (net.params.names[i].starts_with("enc") && net.params.names[i].ends_with("_b"))
                for (double& v : net.params.tensors[i].values()) v = 0.05;
        const Tensor image = uniform({3, 16, 16}, 63, 0.2, 1.0);
        std::vector<int> gt(256);
        std::uint64_t s = 64;
        for (auto& g : gt) g = static_cast<int>(step(s) % 2);
        gt[7] = ops::kIgnoreLabel;
        std::vector<int> fixed;
        {
            Tape t0;
            NoGradGuard g(t0);
            fixed = net.forward(t0, image, gt).field.labels;
        }
        check(results, "end_to_end_loss", [&net, image, gt, fixed](Tape& t) {
            return net.forward(t, image, gt, &fixed).loss;
        }, net.params.tensors, 2e-5);
    }

    return results;
}

}  // namespace idr::trainer
