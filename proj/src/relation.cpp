#include "idr/relation.hpp"

#include <string>

#include "idr/ops.hpp"

namespace idr::relation {

RelationState RelationState::identity(int num_classes, double m_mean, double m_var) {
    RelationState st;
    st.num_classes = num_classes;
    st.m_mean = m_mean;
    st.m_var = m_var;
    const std::size_t k = static_cast<std::size_t>(num_classes);
    st.mean.assign(k * k, 0.0);
    st.var.assign(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        st.mean[i * k + i] = 1.0;
        st.var[i * k + i] = 1.0;
    }
    st.counts.assign(k, 1);  // defined deletion probabilities from step one
    return st;
}

Tensor transform_relations(Tape& tape, const Tensor& matrix, const std::vector<int>& present_ids,
                           double threshold) {
    if (matrix.rank() != 2 || matrix.dim(0) != matrix.dim(1))
        throw ShapeError("transform_relations: expected square matrix, got " +
                         Tensor::shape_str(matrix.shape()));
    if (present_ids.empty()) throw ShapeError("transform_relations: no present classes");
    const int k = matrix.dim(0);
    const int ne = static_cast<int>(present_ids.size());
    for (std::size_t i = 0; i < present_ids.size(); ++i) {
        if (present_ids[i] < 0 || present_ids[i] >= k)
            throw ShapeError("transform_relations: present id out of range");
        if (i > 0 && present_ids[i] <= present_ids[i - 1])
            throw ShapeError("transform_relations: present ids must be strictly increasing");
    }

    Tensor out = Tensor::zeros({ne, ne});
    const double* m = matrix.data();
    double* o = out.data();
    for (int i = 0; i < ne; ++i) {
        bool any_kept = false;
        for (int j = 0; j < ne; ++j) {
            const double v = m[present_ids[static_cast<std::size_t>(i)] * k +
                               present_ids[static_cast<std::size_t>(j)]];
            if (v < threshold) {
                o[i * ne + j] = ops::kNegInf;
            } else {
                o[i * ne + j] = v;
                any_kept = true;
            }
        }
        if (!any_kept)
            throw DegenerateRowError("relation row for class " +
                                     std::to_string(present_ids[static_cast<std::size_t>(i)]) +
                                     " is fully masked");
    }
    if (tape.track(matrix)) {
        out.mark_tracked();
        Tensor mt = matrix;
        std::vector<int> ids = present_ids;
        tape.record([mt, out, ids, k, ne]() mutable {
            if (!out.has_grad()) return;
            const double* dy = out.grad();
            const double* ov = out.data();
            double* dm = mt.grad();
            for (int i = 0; i < ne; ++i)
                for (int j = 0; j < ne; ++j)
                    if (ov[i * ne + j] != ops::kNegInf)
                        dm[ids[static_cast<std::size_t>(i)] * k +
                           ids[static_cast<std::size_t>(j)]] += dy[i * ne + j];
        });
    }
    return out;
}

Tensor interact(Tape& tape, const Tensor& masked, const Tensor& semantic_rows) {
    if (masked.dim(0) != masked.dim(1) || masked.dim(1) != semantic_rows.dim(0))
        throw ShapeError("interact: relation submatrix " + Tensor::shape_str(masked.shape()) +
                         " does not match rows " + Tensor::shape_str(semantic_rows.shape()));
    Tensor weights = ops::masked_softmax(tape, masked, 1);
    return ops::matmul(tape, weights, semantic_rows);
}

Tensor scatter_semantic(Tape& tape, const Tensor& enhanced_rows, const std::vector<int>& labels,
                        const std::vector<int>& index_of, int h, int w, int skip_id) {
    const int z = enhanced_rows.dim(1);
    const int ne = enhanced_rows.dim(0);
    const std::size_t s = static_cast<std::size_t>(h) * w;
    if (labels.size() != s) throw ShapeError("scatter_semantic: label map size mismatch");

    Tensor out = Tensor::zeros({z, h, w});
    const double* rows = enhanced_rows.data();
    double* o = out.data();
    for (std::size_t p = 0; p < s; ++p) {
        const int id = labels[p];
        if (id == skip_id) continue;  // deleted class stays a zero vector
        if (id < 0 || id >= static_cast<int>(index_of.size()) || index_of[static_cast<std::size_t>(id)] < 0)
            throw ShapeError("scatter_semantic: pseudo label " + std::to_string(id) +
                             " missing from the semantic bank");
        const int idx = index_of[static_cast<std::size_t>(id)];
        if (idx >= ne) throw ShapeError("scatter_semantic: bank index out of range");
        const double* row = rows + static_cast<std::size_t>(idx) * z;
        for (int c = 0; c < z; ++c) o[static_cast<std::size_t>(c) * s + p] = row[c];
    }
    if (tape.track(enhanced_rows)) {
        out.mark_tracked();
        Tensor er = enhanced_rows;
        std::vector<int> lab = labels;
        std::vector<int> idx_of = index_of;
        tape.record([er, out, lab, idx_of, s, z, skip_id]() mutable {
            if (!out.has_grad()) return;
            const double* dy = out.grad();
            double* dr = er.grad();
            for (std::size_t p = 0; p < s; ++p) {
                const int id = lab[p];
                if (id == skip_id) continue;
                const int idx = idx_of[static_cast<std::size_t>(id)];
                double* drow = dr + static_cast<std::size_t>(idx) * z;
                for (int c = 0; c < z; ++c) drow[c] += dy[static_cast<std::size_t>(c) * s + p];
            }
        });
    }
    return out;
}

}  // namespace idr::relation
