#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "idr/tensor.hpp"

namespace idr::ops {

// Sentinel used by relation masking; maps to an exact 0 after softmax.
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double alpha);
Tensor relu(Tape& tape, const Tensor& a);
Tensor sum(Tape& tape, const Tensor& a);
Tensor reshape(Tape& tape, const Tensor& a, std::vector<int> shape);

// [M x N] * [N x P] -> [M x P]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);

// x: [R x C], bias: [C]; adds bias to every row.
Tensor add_bias_rows(Tape& tape, const Tensor& x, const Tensor& bias);

// Concatenation along axis 0 (the channel axis for [C x h x w] maps).
Tensor concat_axis0(Tape& tape, std::span<const Tensor> parts);

// Gather rows of a rank-2 tensor in the given order.
Tensor select_rows(Tape& tape, const Tensor& x, const std::vector<int>& rows);

// Softmax along `dim` (0 or 1) of a 2-D tensor. Entries equal to kNegInf
// receive exactly 0; a fully-masked line raises DegenerateRowError.
Tensor masked_softmax(Tape& tape, const Tensor& x, int dim);

struct CeMap {
    Tensor map;       // per-pixel -log softmax(logits)[label]; 0 at ignored pixels
    Tensor mean;      // scalar mean over non-ignored pixels (0 when none)
    int valid_count;  // number of non-ignored pixels
};
// logits: [K x H x W]; labels: row-major H*W ints in [0,K) or kIgnoreLabel.
inline constexpr int kIgnoreLabel = -1;
CeMap cross_entropy_map(Tape& tape, const Tensor& logits, const std::vector<int>& labels);

// 3x3 convolution, padding 1, stride 1 or 2. x: [Ci x H x W],
// w: [Co x Ci x 3 x 3], bias: [Co].
Tensor conv3x3(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias, int stride);

// 1x1 convolution. x: [Ci x h x w], w: [Co x Ci], bias: [Co].
Tensor conv1x1(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias);

// Bilinear upsampling by an integer factor, half-pixel centers
// (align-corners false). Exact on constant maps.
Tensor bilinear_upsample(Tape& tape, const Tensor& x, int factor);

// Per-channel global average broadcast back to the input shape.
Tensor global_avg_broadcast(Tape& tape, const Tensor& x);

// Non-differentiable helpers.
std::vector<int> argmax_channels(const Tensor& x);  // lowest class id wins ties
std::vector<int> downsample_labels_nearest(const std::vector<int>& labels, int h, int w,
                                           int factor);

struct FdReport {
    double max_rel_err = 0.0;
    std::string coordinate;  // worst offending input coordinate
};

// Central-difference check of tape gradients for `program`, which must build
// its graph from `inputs` on the tape it is given and return a scalar.
// Non-determinism (two no-grad evaluations disagreeing bitwise) raises
// DeterminismError.
FdReport finite_difference_check(const std::function<Tensor(Tape&)>& program,
                                 std::vector<Tensor> inputs, double eps = 1e-5);

}  // namespace idr::ops
