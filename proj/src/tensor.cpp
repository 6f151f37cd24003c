#include "idr/tensor.hpp"

#include <numeric>
#include <sstream>

namespace idr {

namespace {
std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int e : shape) {
        if (e <= 0) throw ShapeError("tensor extent must be positive, got " + Tensor::shape_str(shape));
        n *= e;
    }
    return n;
}
}  // namespace

Tensor Tensor::zeros(std::vector<int> shape) {
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->values.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
    t.impl_->shape = std::move(shape);
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
        throw ShapeError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->values = std::move(values);
    return t;
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return impl_->values[0];
}

void Tensor::set_requires_grad(bool v) {
    impl_->requires_grad = v;
    if (v) impl_->tracked = true;
}

void Tensor::mark_tracked() { impl_->tracked = true; }

double* Tensor::grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
    return impl_->grad.data();
}

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

std::string Tensor::shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

void Tape::backward(Tensor root) {
    if (root.numel() != 1)
        throw ContractError("backward requires a scalar root, got " +
                            Tensor::shape_str(root.shape()));
    if (!root.tracked())
        throw ContractError("backward root is not reachable from any recorded operation");
    root.grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

}  // namespace idr
