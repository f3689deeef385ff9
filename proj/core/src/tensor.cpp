#include "uuconv/tensor.hpp"

#include <sstream>
#include <utility>

#include "uuconv/errors.hpp"

namespace uuconv {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

std::vector<std::size_t> row_major_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) {
    strides[i - 1] = strides[i] * shape[i];
  }
  return strides;
}

static void check_shape(const Shape& shape) {
  for (std::size_t e : shape) {
    if (e == 0) {
      throw ValidationError("tensor shape " + shape_str(shape) +
                            " has a zero extent");
    }
  }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_shape(shape);
  Tensor t;
  t.d_ = std::make_shared<Data>();
  t.d_->values.assign(shape_numel(shape), 0.0);
  t.d_->shape = std::move(shape);
  t.d_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.d_->values) v = value;
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  check_shape(shape);
  if (values.size() != shape_numel(shape)) {
    throw ValidationError("tensor data length " +
                          std::to_string(values.size()) +
                          " does not match shape " + shape_str(shape));
  }
  Tensor t;
  t.d_ = std::make_shared<Data>();
  t.d_->shape = std::move(shape);
  t.d_->values = std::move(values);
  t.d_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

static void require_defined(const Tensor& t) {
  if (!t.defined()) throw ValidationError("operation on an undefined tensor");
}

const Shape& Tensor::shape() const {
  require_defined(*this);
  return d_->shape;
}

std::size_t Tensor::size() const {
  require_defined(*this);
  return d_->values.size();
}

std::size_t Tensor::extent(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw ValidationError("axis " + std::to_string(axis) +
                          " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

std::vector<double>& Tensor::values() & {
  require_defined(*this);
  return d_->values;
}

const std::vector<double>& Tensor::values() const& {
  require_defined(*this);
  return d_->values;
}

std::vector<double> Tensor::values() && {
  require_defined(*this);
  return d_->values;
}

double Tensor::item() const {
  if (size() != 1) {
    throw ValidationError("item() requires a scalar, got shape " +
                          shape_str(shape()));
  }
  return d_->values[0];
}

bool Tensor::requires_grad() const {
  require_defined(*this);
  return d_->requires_grad;
}

Tensor& Tensor::set_requires_grad(bool flag) {
  require_defined(*this);
  d_->requires_grad = flag;
  return *this;
}

bool Tensor::grad_allocated() const {
  require_defined(*this);
  return !d_->grad.empty();
}

std::vector<double>& Tensor::grad() {
  require_defined(*this);
  if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
  return d_->grad;
}

const std::vector<double>& Tensor::grad() const {
  require_defined(*this);
  if (d_->grad.empty()) {
    throw ValidationError("gradient read before any backward touched it");
  }
  return d_->grad;
}

void Tensor::zero_grad() const {
  require_defined(*this);
  // Deallocates rather than zero-fills: "no grad buffer" is the signal that
  // a later consumer (optimizer, tape) uses to tell touched from untouched.
  d_->grad.clear();
  d_->grad.shrink_to_fit();
}

void Tensor::accumulate_grad(const std::vector<double>& g) const {
  require_defined(*this);
  if (g.size() != d_->values.size()) {
    throw ValidationError("gradient length " + std::to_string(g.size()) +
                          " does not match tensor of " +
                          std::to_string(d_->values.size()) + " values");
  }
  if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) d_->grad[i] += g[i];
}

void Tape::record(Tensor& output, std::function<void()> backward) {
  if (!output.defined()) {
    throw ValidationError("Tape::record: undefined output tensor");
  }
  if (backward_done_) {
    throw ValidationError("Tape::record: tape already consumed by backward");
  }
  output.d_->requires_grad = true;
  output.d_->producer = this;
  nodes_.push_back(Node{output.d_, std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (backward_done_) {
    throw ValidationError(
        "Tape::backward: called twice; gradients are single-shot per tape");
  }
  if (!loss.defined() || loss.size() != 1) {
    throw ValidationError("Tape::backward: loss must be a defined scalar");
  }
  if (loss.d_->producer != this) {
    throw ValidationError(
        "Tape::backward: loss was not produced by an op on this tape");
  }
  backward_done_ = true;
  loss.d_->grad.assign(1, 1.0);
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    // Untouched grad buffer means the node does not feed the loss.
    if (nodes_[i].out->grad.empty()) continue;
    nodes_[i].fn();
  }
}

}  // namespace uuconv
