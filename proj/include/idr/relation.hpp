#pragma once

#include <cstdint>
#include <vector>

#include "idr/grouping.hpp"
#include "idr/tensor.hpp"

namespace idr::relation {

// The pair of K x K relation matrices plus the per-class deletion counter.
// Storage is exactly 2*K*K float entries regardless of image resolution.
struct RelationState {
    int num_classes = 0;
    std::vector<double> mean;       // M_r_mean, row i = deleted class, col j = reserved
    std::vector<double> var;        // M_r_var
    std::vector<long long> counts;  // deletion counter, starts at 1
    double m_mean = 0.1;
    double m_var = 0.1;

    static RelationState identity(int num_classes, double m_mean = 0.1, double m_var = 0.1);

    std::size_t storage_entries() const {
        return 2 * static_cast<std::size_t>(num_classes) * num_classes;
    }
};

// Restrict a K x K relation matrix to the present classes and mask entries
// strictly below the threshold with -inf. Throws DegenerateRowError when a
// row ends up fully masked. Gradients (backprop mode) flow only through the
// kept entries.
Tensor transform_relations(Tape& tape, const Tensor& matrix, const std::vector<int>& present_ids,
                           double threshold);

// Row-softmax of the masked submatrix times the semantic rows. Each output
// row is a convex combination of the input rows.
Tensor interact(Tape& tape, const Tensor& masked, const Tensor& semantic_rows);

// Fill a [Z x h x w] map with the enhanced row of each pixel's pseudo label.
// Positions whose class equals skip_id stay exactly zero.
Tensor scatter_semantic(Tape& tape, const Tensor& enhanced_rows, const std::vector<int>& labels,
                        const std::vector<int>& index_of, int h, int w, int skip_id = -1);

}  // namespace idr::relation
