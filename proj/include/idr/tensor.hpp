#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "idr/errors.hpp"

namespace idr {

// Dense float64 tensor participating in a recorded computation. Value
// semantics on the handle, shared storage underneath; no operation mutates
// its inputs. The gradient buffer is allocated lazily when the tensor is on
// a differentiated path.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape);
    static Tensor from(std::vector<int> shape, std::vector<double> values);
    static Tensor scalar(double v);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(impl_->values.size()); }

    double* data() { return impl_->values.data(); }
    const double* data() const { return impl_->values.data(); }
    std::vector<double>& values() { return impl_->values; }
    const std::vector<double>& values() const { return impl_->values; }
    double item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v);
    // True when gradients must be propagated into this tensor.
    bool tracked() const { return impl_ && impl_->tracked; }
    void mark_tracked();

    bool has_grad() const { return !impl_->grad.empty(); }
    // Allocates (zero-filled) on first use. Usable through const handles:
    // the handle is a view onto shared storage and backward rules hold
    // by-value copies of it.
    double* grad() const;
    const std::vector<double>& grad_values() const { return impl_->grad; }
    void zero_grad();

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    static std::string shape_str(const std::vector<int>& shape);

  private:
    struct Impl {
        std::vector<int> shape;
        std::vector<double> values;
        std::vector<double> grad;
        bool requires_grad = false;
        bool tracked = false;
    };
    std::shared_ptr<Impl> impl_;
};

// Ordered record of executed operations. backward() replays the records in
// reverse exactly once; gradients accumulate additively when a tensor feeds
// multiple consumers. Single-threaded per tape.
class Tape {
  public:
    bool recording() const { return recording_; }
    void set_recording(bool v) { recording_ = v; }

    // Whether an op with the given inputs should record a backward rule and
    // produce a tracked output.
    template <typename... Ts>
    bool track(const Ts&... inputs) const {
        return recording_ && (inputs.tracked() || ...);
    }

    void record(std::function<void()> backward_rule) {
        nodes_.push_back(std::move(backward_rule));
    }

    std::size_t size() const { return nodes_.size(); }

    // Seeds d(root)/d(root) = 1 and replays all records in reverse.
    void backward(Tensor root);

    void clear() { nodes_.clear(); }

  private:
    std::vector<std::function<void()>> nodes_;
    bool recording_ = true;
};

// RAII guard that disables recording on a tape within a scope.
class NoGradGuard {
  public:
    explicit NoGradGuard(Tape& tape) : tape_(tape), prev_(tape.recording()) {
        tape_.set_recording(false);
    }
    ~NoGradGuard() { tape_.set_recording(prev_); }

  private:
    Tape& tape_;
    bool prev_;
};

}  // namespace idr
