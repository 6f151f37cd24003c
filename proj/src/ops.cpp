#include "idr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

#include "idr/kernels.hpp"

namespace idr::ops {

namespace {

const kern::Impl& K() { return kern::active(); }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + Tensor::shape_str(a.shape()) +
                         " vs " + Tensor::shape_str(b.shape()));
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape());
    K().add(a.data(), b.data(), out.data(), static_cast<std::size_t>(a.numel()));
    if (tape.track(a, b)) {
        out.mark_tracked();
        tape.record([a, b, out]() mutable {
            if (!out.has_grad()) return;
            const auto n = static_cast<std::size_t>(out.numel());
            if (a.tracked()) K().axpy(1.0, out.grad(), a.grad(), n);
            if (b.tracked()) K().axpy(1.0, out.grad(), b.grad(), n);
        });
    }
    return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape());
    K().mul(a.data(), b.data(), out.data(), static_cast<std::size_t>(a.numel()));
    if (tape.track(a, b)) {
        out.mark_tracked();
        tape.record([a, b, out]() mutable {
            if (!out.has_grad()) return;
            const auto n = static_cast<std::size_t>(out.numel());
            const double* dy = out.grad();
            if (a.tracked()) {
                double* da = a.grad();
                const double* bv = b.data();
                for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] * bv[i];
            }
            if (b.tracked()) {
                double* db = b.grad();
                const double* av = a.data();
                for (std::size_t i = 0; i < n; ++i) db[i] += dy[i] * av[i];
            }
        });
    }
    return out;
}

Tensor scale(Tape& tape, const Tensor& a, double alpha) {
    Tensor out = Tensor::zeros(a.shape());
    K().scale(a.data(), alpha, out.data(), static_cast<std::size_t>(a.numel()));
    if (tape.track(a)) {
        out.mark_tracked();
        tape.record([a, out, alpha]() mutable {
            if (!out.has_grad()) return;
            K().axpy(alpha, out.grad(), a.grad(), static_cast<std::size_t>(a.numel()));
        });
    }
    return out;
}

Tensor relu(Tape& tape, const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    K().relu(a.data(), out.data(), static_cast<std::size_t>(a.numel()));
    if (tape.track(a)) {
        out.mark_tracked();
        tape.record([a, out]() mutable {
            if (!out.has_grad()) return;
            K().relu_backward(a.data(), out.grad(), a.grad(),
                              static_cast<std::size_t>(a.numel()));
        });
    }
    return out;
}

Tensor sum(Tape& tape, const Tensor& a) {
    double acc = 0.0;
    const double* v = a.data();
    const auto n = static_cast<std::size_t>(a.numel());
    for (std::size_t i = 0; i < n; ++i) acc += v[i];
    Tensor out = Tensor::scalar(acc);
    if (tape.track(a)) {
        out.mark_tracked();
        tape.record([a, out]() mutable {
            if (!out.has_grad()) return;
            const double g = out.grad()[0];
            double* da = a.grad();
            for (std::int64_t i = 0; i < a.numel(); ++i) da[i] += g;
        });
    }
    return out;
}

Tensor reshape(Tape& tape, const Tensor& a, std::vector<int> shape) {
    Tensor out = Tensor::from(std::move(shape), a.values());
    if (out.numel() != a.numel())
        throw ShapeError("reshape: numel mismatch " + Tensor::shape_str(a.shape()) + " vs " +
                         Tensor::shape_str(out.shape()));
    if (tape.track(a)) {
        out.mark_tracked();
        tape.record([a, out]() mutable {
            if (!out.has_grad()) return;
            K().axpy(1.0, out.grad(), a.grad(), static_cast<std::size_t>(a.numel()));
        });
    }
    return out;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + Tensor::shape_str(a.shape()) + " and " +
                         Tensor::shape_str(b.shape()));
    const std::size_t m = static_cast<std::size_t>(a.dim(0));
    const std::size_t n = static_cast<std::size_t>(b.dim(1));
    const std::size_t k = static_cast<std::size_t>(a.dim(1));
    Tensor out = Tensor::zeros({a.dim(0), b.dim(1)});
    K().gemm_nn(m, n, k, a.data(), b.data(), out.data(), false);
    if (tape.track(a, b)) {
        out.mark_tracked();
        tape.record([a, b, out, m, n, k]() mutable {
            if (!out.has_grad()) return;
            // dA = dC * B^T, dB = A^T * dC
            if (a.tracked()) K().gemm_nt(m, k, n, out.grad(), b.data(), a.grad(), true);
            if (b.tracked()) K().gemm_tn(k, n, m, a.data(), out.grad(), b.grad(), true);
        });
    }
    return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose: expected rank 2");
    const int r = a.dim(0), c = a.dim(1);
    Tensor out = Tensor::zeros({c, r});
    const double* av = a.data();
    double* ov = out.data();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) ov[j * r + i] = av[i * c + j];
    if (tape.track(a)) {
        out.mark_tracked();
        tape.record([a, out, r, c]() mutable {
            if (!out.has_grad()) return;
            const double* dy = out.grad();
            double* da = a.grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) da[i * c + j] += dy[j * r + i];
        });
    }
    return out;
}

Tensor add_bias_rows(Tape& tape, const Tensor& x, const Tensor& bias) {
    if (x.rank() != 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1))
        throw ShapeError("add_bias_rows: bias " + Tensor::shape_str(bias.shape()) +
                         " does not match " + Tensor::shape_str(x.shape()));
    const int r = x.dim(0), c = x.dim(1);
    Tensor out = Tensor::zeros(x.shape());
    for (int i = 0; i < r; ++i)
        K().add(x.data() + static_cast<std::size_t>(i) * c, bias.data(),
                out.data() + static_cast<std::size_t>(i) * c, static_cast<std::size_t>(c));
    if (tape.track(x, bias)) {
        out.mark_tracked();
        tape.record([x, bias, out, r, c]() mutable {
            if (!out.has_grad()) return;
            const double* dy = out.grad();
            if (x.tracked())
                K().axpy(1.0, dy, x.grad(), static_cast<std::size_t>(r) * c);
            if (bias.tracked()) {
                double* db = bias.grad();
                for (int i = 0; i < r; ++i)
                    K().axpy(1.0, dy + static_cast<std::size_t>(i) * c, db,
                             static_cast<std::size_t>(c));
            }
        });
    }
    return out;
}

Tensor concat_axis0(Tape& tape, std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_axis0: no inputs");
    std::vector<int> shape = parts[0].shape();
    int total = shape[0];
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const auto& s = parts[i].shape();
        if (s.size() != shape.size() ||
            !std::equal(s.begin() + 1, s.end(), shape.begin() + 1))
            throw ShapeError("concat_axis0: trailing shape mismatch " +
                             Tensor::shape_str(shape) + " vs " + Tensor::shape_str(s));
        total += s[0];
    }
    shape[0] = total;
    Tensor out = Tensor::zeros(shape);
    std::size_t offset = 0;
    bool any_tracked = false;
    for (const Tensor& p : parts) {
        std::memcpy(out.data() + offset, p.data(), static_cast<std::size_t>(p.numel()) * sizeof(double));
        offset += static_cast<std::size_t>(p.numel());
        any_tracked = any_tracked || p.tracked();
    }
    if (tape.recording() && any_tracked) {
        out.mark_tracked();
        std::vector<Tensor> held(parts.begin(), parts.end());
        tape.record([held, out]() mutable {
            if (!out.has_grad()) return;
            const double* dy = out.grad();
            std::size_t off = 0;
            for (Tensor& p : held) {
                const auto n = static_cast<std::size_t>(p.numel());
                if (p.tracked()) K().axpy(1.0, dy + off, p.grad(), n);
                off += n;
            }
        });
    }
    return out;
}

Tensor select_rows(Tape& tape, const Tensor& x, const std::vector<int>& rows) {
    if (x.rank() != 2) throw ShapeError("select_rows: expected rank 2");
    const int c = x.dim(1);
    for (int r : rows)
        if (r < 0 || r >= x.dim(0))
            throw ShapeError("select_rows: row " + std::to_string(r) + " out of range");
    Tensor out = Tensor::zeros({static_cast<int>(rows.size()), c});
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::memcpy(out.data() + i * c, x.data() + static_cast<std::size_t>(rows[i]) * c,
                    static_cast<std::size_t>(c) * sizeof(double));
    if (tape.track(x)) {
        out.mark_tracked();
        Tensor xin = x;
        std::vector<int> rs = rows;
        tape.record([xin, out, rs, c]() mutable {
            if (!out.has_grad()) return;
            double* dx = xin.grad();
            const double* dy = out.grad();
            for (std::size_t i = 0; i < rs.size(); ++i)
                K().axpy(1.0, dy + i * c, dx + static_cast<std::size_t>(rs[i]) * c,
                         static_cast<std::size_t>(c));
        });
    }
    return out;
}

Tensor masked_softmax(Tape& tape, const Tensor& x, int dim) {
    if (x.rank() != 2 || (dim != 0 && dim != 1))
        throw ShapeError("masked_softmax: expected rank-2 tensor and dim 0 or 1");
    const int r = x.dim(0), c = x.dim(1);
    // dim == 1 normalizes each row; dim == 0 each column.
    const int lines = dim == 1 ? r : c;
    const int len = dim == 1 ? c : r;
    const auto at = [&](int line, int e) { return dim == 1 ? line * c + e : e * c + line; };

    Tensor out = Tensor::zeros(x.shape());
    const double* xv = x.data();
    double* yv = out.data();
    for (int l = 0; l < lines; ++l) {
        double mx = kNegInf;
        for (int e = 0; e < len; ++e) mx = std::max(mx, xv[at(l, e)]);
        if (mx == kNegInf)
            throw DegenerateRowError("masked_softmax: line " + std::to_string(l) +
                                     " is fully masked");
        double s = 0.0;
        for (int e = 0; e < len; ++e) {
            const double v = xv[at(l, e)];
            const double ev = v == kNegInf ? 0.0 : std::exp(v - mx);
            yv[at(l, e)] = ev;
            s += ev;
        }
        const double inv = 1.0 / s;
        for (int e = 0; e < len; ++e) yv[at(l, e)] *= inv;
    }
    if (tape.track(x)) {
        out.mark_tracked();
        tape.record([x, out, lines, len, dim, c]() mutable {
            if (!out.has_grad()) return;
            const auto at2 = [&](int line, int e) { return dim == 1 ? line * c + e : e * c + line; };
            const double* y = out.data();
            const double* dy = out.grad();
            double* dx = x.grad();
            for (int l = 0; l < lines; ++l) {
                double s = 0.0;
                for (int e = 0; e < len; ++e) s += dy[at2(l, e)] * y[at2(l, e)];
                for (int e = 0; e < len; ++e)
                    dx[at2(l, e)] += y[at2(l, e)] * (dy[at2(l, e)] - s);
            }
        });
    }
    return out;
}

CeMap cross_entropy_map(Tape& tape, const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 3)
        throw ShapeError("cross_entropy_map: expected [K x H x W] logits, got " +
                         Tensor::shape_str(logits.shape()));
    const int k = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
    const std::size_t s = static_cast<std::size_t>(h) * w;
    if (labels.size() != s)
        throw ShapeError("cross_entropy_map: label map size " + std::to_string(labels.size()) +
                         " does not match " + std::to_string(s) + " pixels");

    Tensor map = Tensor::zeros({h, w});
    auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(k) * s);
    const double* xv = logits.data();
    double* mv = map.data();
    int valid = 0;
    for (std::size_t p = 0; p < s; ++p) {
        const int label = labels[p];
        if (label != kIgnoreLabel && (label < 0 || label >= k))
            throw LabelRangeError("cross_entropy_map: label " + std::to_string(label) +
                                  " out of range [0," + std::to_string(k) + ")");
        double mx = xv[p];
        for (int c = 1; c < k; ++c) mx = std::max(mx, xv[c * s + p]);
        double se = 0.0;
        for (int c = 0; c < k; ++c) se += std::exp(xv[c * s + p] - mx);
        const double lse = mx + std::log(se);
        for (int c = 0; c < k; ++c) (*probs)[c * s + p] = std::exp(xv[c * s + p] - lse);
        if (label == kIgnoreLabel) continue;
        mv[p] = lse - xv[label * s + p];
        ++valid;
    }
    if (tape.track(logits)) {
        map.mark_tracked();
        Tensor lg = logits;
        std::vector<int> lab = labels;
        tape.record([lg, map, probs, lab, k, s]() mutable {
            if (!map.has_grad()) return;
            double* dx = lg.grad();
            const double* dm = map.grad();
            for (std::size_t p = 0; p < s; ++p) {
                const int label = lab[p];
                if (label == kIgnoreLabel) continue;
                const double g = dm[p];
                if (g == 0.0) continue;
                for (int c = 0; c < k; ++c) dx[c * s + p] += g * (*probs)[c * s + p];
                dx[label * s + p] -= g;
            }
        });
    }
    Tensor total = sum(tape, map);
    Tensor mean = scale(tape, total, valid > 0 ? 1.0 / valid : 0.0);
    return CeMap{map, mean, valid};
}

Tensor conv3x3(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias, int stride) {
    if (x.rank() != 3) throw ShapeError("conv3x3: expected [C x H x W] input");
    if (w.rank() != 4 || w.dim(2) != 3 || w.dim(3) != 3 || w.dim(1) != x.dim(0))
        throw ShapeError("conv3x3: weight " + Tensor::shape_str(w.shape()) +
                         " does not match input " + Tensor::shape_str(x.shape()));
    if (stride != 1 && stride != 2) throw ShapeError("conv3x3: stride must be 1 or 2");
    const int ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int co = w.dim(0);
    if (bias.numel() != co) throw ShapeError("conv3x3: bias size mismatch");
    const int oh = (h - 1) / stride + 1;
    const int ow = (wd - 1) / stride + 1;
    const std::size_t os = static_cast<std::size_t>(oh) * ow;
    const std::size_t kk = static_cast<std::size_t>(ci) * 9;

    // im2col buffer, kept for the backward rules
    auto cols = std::make_shared<std::vector<double>>(kk * os, 0.0);
    const double* xv = x.data();
    for (int c = 0; c < ci; ++c) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                double* row = cols->data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * os;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - 1;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kx - 1;
                        if (ix < 0 || ix >= wd) continue;
                        row[oy * ow + ox] = xv[(static_cast<std::size_t>(c) * h + iy) * wd + ix];
                    }
                }
            }
        }
    }

    Tensor out = Tensor::zeros({co, oh, ow});
    K().gemm_nn(static_cast<std::size_t>(co), os, kk, w.data(), cols->data(), out.data(), false);
    for (int c = 0; c < co; ++c) {
        double* row = out.data() + static_cast<std::size_t>(c) * os;
        const double b = bias.data()[c];
        for (std::size_t p = 0; p < os; ++p) row[p] += b;
    }

    if (tape.track(x, w, bias)) {
        out.mark_tracked();
        tape.record([x, w, bias, out, cols, ci, h, wd, co, oh, ow, os, kk, stride]() mutable {
            if (!out.has_grad()) return;
            const double* dy = out.grad();
            if (w.tracked())
                K().gemm_nt(static_cast<std::size_t>(co), kk, os, dy, cols->data(), w.grad(), true);
            if (bias.tracked()) {
                double* db = bias.grad();
                for (int c = 0; c < co; ++c) {
                    double acc = 0.0;
                    const double* row = dy + static_cast<std::size_t>(c) * os;
                    for (std::size_t p = 0; p < os; ++p) acc += row[p];
                    db[c] += acc;
                }
            }
            if (x.tracked()) {
                std::vector<double> dcols(kk * os);
                K().gemm_tn(kk, os, static_cast<std::size_t>(co), w.data(), dy, dcols.data(),
                            false);
                double* dx = x.grad();
                for (int c = 0; c < ci; ++c) {
                    for (int ky = 0; ky < 3; ++ky) {
                        for (int kx = 0; kx < 3; ++kx) {
                            const double* row =
                                dcols.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * os;
                            for (int oy = 0; oy < oh; ++oy) {
                                const int iy = oy * stride + ky - 1;
                                if (iy < 0 || iy >= h) continue;
                                for (int ox = 0; ox < ow; ++ox) {
                                    const int ix = ox * stride + kx - 1;
                                    if (ix < 0 || ix >= wd) continue;
                                    dx[(static_cast<std::size_t>(c) * h + iy) * wd + ix] +=
                                        row[oy * ow + ox];
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor conv1x1(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (x.rank() != 3) throw ShapeError("conv1x1: expected [C x h x w] input");
    if (w.rank() != 2 || w.dim(1) != x.dim(0))
        throw ShapeError("conv1x1: weight " + Tensor::shape_str(w.shape()) +
                         " does not match input " + Tensor::shape_str(x.shape()));
    const int h = x.dim(1), wd = x.dim(2);
    Tensor x2 = reshape(tape, x, {x.dim(0), h * wd});
    Tensor y = matmul(tape, w, x2);
    Tensor yb = transpose(tape, add_bias_rows(tape, transpose(tape, y), bias));
    return reshape(tape, yb, {w.dim(0), h, wd});
}

Tensor bilinear_upsample(Tape& tape, const Tensor& x, int factor) {
    if (x.rank() != 3) throw ShapeError("bilinear_upsample: expected [C x h x w] input");
    if (factor < 1) throw ShapeError("bilinear_upsample: factor must be >= 1");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int oh = h * factor, ow = w * factor;

    // half-pixel-center source coordinates, indices clamped at the borders
    auto axis = [&](int n, int on, std::vector<int>& i0, std::vector<int>& i1,
                    std::vector<double>& f) {
        i0.resize(on);
        i1.resize(on);
        f.resize(on);
        for (int o = 0; o < on; ++o) {
            const double src = (o + 0.5) / factor - 0.5;
            const double fl = std::floor(src);
            int a = static_cast<int>(fl);
            double fr = src - fl;
            if (a < 0) { a = 0; fr = 0.0; }
            if (a >= n - 1) { a = n - 1; fr = 0.0; }
            i0[o] = a;
            i1[o] = std::min(a + 1, n - 1);
            f[o] = fr;
        }
    };
    std::vector<int> y0, y1, x0, x1;
    std::vector<double> fy, fx;
    axis(h, oh, y0, y1, fy);
    axis(w, ow, x0, x1, fx);

    Tensor out = Tensor::zeros({c, oh, ow});
    const double* xv = x.data();
    double* ov = out.data();
    for (int ch = 0; ch < c; ++ch) {
        const double* plane = xv + static_cast<std::size_t>(ch) * h * w;
        double* oplane = ov + static_cast<std::size_t>(ch) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            const int a = y0[oy], b = y1[oy];
            const double g = fy[oy];
            for (int ox = 0; ox < ow; ++ox) {
                const double v00 = plane[a * w + x0[ox]];
                const double v01 = plane[a * w + x1[ox]];
                const double v10 = plane[b * w + x0[ox]];
                const double v11 = plane[b * w + x1[ox]];
                // lerp form keeps constant maps bit-exact
                const double top = v00 + fx[ox] * (v01 - v00);
                const double bot = v10 + fx[ox] * (v11 - v10);
                oplane[oy * ow + ox] = top + g * (bot - top);
            }
        }
    }
    if (tape.track(x)) {
        out.mark_tracked();
        tape.record([x, out, y0, y1, x0, x1, fy, fx, c, h, w, oh, ow]() mutable {
            if (!out.has_grad()) return;
            const double* dy = out.grad();
            double* dx = x.grad();
            for (int ch = 0; ch < c; ++ch) {
                double* dplane = dx + static_cast<std::size_t>(ch) * h * w;
                const double* oplane = dy + static_cast<std::size_t>(ch) * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const double wy1 = fy[oy], wy0 = 1.0 - wy1;
                    for (int ox = 0; ox < ow; ++ox) {
                        const double g = oplane[oy * ow + ox];
                        const double wx1 = fx[ox], wx0 = 1.0 - wx1;
                        dplane[y0[oy] * w + x0[ox]] += g * wy0 * wx0;
                        dplane[y0[oy] * w + x1[ox]] += g * wy0 * wx1;
                        dplane[y1[oy] * w + x0[ox]] += g * wy1 * wx0;
                        dplane[y1[oy] * w + x1[ox]] += g * wy1 * wx1;
                    }
                }
            }
        });
    }
    return out;
}

Tensor global_avg_broadcast(Tape& tape, const Tensor& x) {
    if (x.rank() != 3) throw ShapeError("global_avg_broadcast: expected [C x h x w] input");
    const int c = x.dim(0);
    const std::size_t s = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
    Tensor out = Tensor::zeros(x.shape());
    for (int ch = 0; ch < c; ++ch) {
        const double* row = x.data() + ch * s;
        double acc = 0.0;
        for (std::size_t p = 0; p < s; ++p) acc += row[p];
        const double mean = acc / static_cast<double>(s);
        double* orow = out.data() + ch * s;
        for (std::size_t p = 0; p < s; ++p) orow[p] = mean;
    }
    if (tape.track(x)) {
        out.mark_tracked();
        tape.record([x, out, c, s]() mutable {
            if (!out.has_grad()) return;
            double* dx = x.grad();
            const double* dy = out.grad();
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t p = 0; p < s; ++p) acc += dy[ch * s + p];
                const double g = acc / static_cast<double>(s);
                for (std::size_t p = 0; p < s; ++p) dx[ch * s + p] += g;
            }
        });
    }
    return out;
}

std::vector<int> argmax_channels(const Tensor& x) {
    if (x.rank() != 3) throw ShapeError("argmax_channels: expected [K x h x w] input");
    const int k = x.dim(0);
    const std::size_t s = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
    std::vector<int> out(s, 0);
    const double* v = x.data();
    for (std::size_t p = 0; p < s; ++p) {
        int best = 0;
        double bv = v[p];
        for (int c = 1; c < k; ++c) {
            if (v[c * s + p] > bv) {  // strict: lowest class id wins ties
                bv = v[c * s + p];
                best = c;
            }
        }
        out[p] = best;
    }
    return out;
}

std::vector<int> downsample_labels_nearest(const std::vector<int>& labels, int h, int w,
                                           int factor) {
    if (labels.size() != static_cast<std::size_t>(h) * w)
        throw ShapeError("downsample_labels_nearest: label size mismatch");
    if (h % factor != 0 || w % factor != 0)
        throw ShapeError("downsample_labels_nearest: extents not divisible by factor");
    const int oh = h / factor, ow = w / factor;
    std::vector<int> out(static_cast<std::size_t>(oh) * ow);
    for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j)
            out[i * ow + j] = labels[(i * factor + factor / 2) * w + (j * factor + factor / 2)];
    return out;
}

FdReport finite_difference_check(const std::function<Tensor(Tape&)>& program,
                                 std::vector<Tensor> inputs, double eps) {
    if (eps < 1e-7 || eps > 1e-3)
        throw ContractError("finite_difference_check: eps must be in [1e-7, 1e-3]");
    auto eval = [&]() {
        Tape t;
        t.set_recording(false);
        return program(t).item();
    };
    const double f0 = eval();
    const double f1 = eval();
    if (std::memcmp(&f0, &f1, sizeof(double)) != 0)
        throw DeterminismError("finite_difference_check: two evaluations disagree (" +
                               std::to_string(f0) + " vs " + std::to_string(f1) + ")");

    for (Tensor& in : inputs) {
        in.set_requires_grad(true);
        in.zero_grad();
        in.grad();  // ensure allocated even if unused by the program
    }
    Tape tape;
    Tensor root = program(tape);
    tape.backward(root);

    FdReport report;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        Tensor& in = inputs[i];
        const double* g = in.grad();
        for (std::int64_t j = 0; j < in.numel(); ++j) {
            const double saved = in.data()[j];
            in.data()[j] = saved + eps;
            const double fp = eval();
            in.data()[j] = saved - eps;
            const double fm = eval();
            in.data()[j] = saved;
            const double fd = (fp - fm) / (2.0 * eps);
            const double denom = std::max({std::abs(fd), std::abs(g[j]), 1e-6});
            const double rel = std::abs(fd - g[j]) / denom;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.coordinate =
                    "input" + std::to_string(i) + "[" + std::to_string(j) + "]";
            }
        }
    }
    return report;
}

}  // namespace idr::ops
