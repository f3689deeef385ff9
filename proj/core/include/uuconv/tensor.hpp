#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace uuconv {

class Tape;

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
std::vector<std::size_t> row_major_strides(const Shape& shape);

// Dense row-major 64-bit tensor. Copying a Tensor copies the handle, not
// the buffer; ops always allocate fresh outputs, so shared storage is only
// ever mutated through a deliberately held handle (parameters, gradients).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t extent(std::size_t axis) const;

  std::vector<double>& values() &;
  const std::vector<double>& values() const&;
  // Tensors are shared handles, so a reference into a temporary handle
  // would dangle once the handle dies; hand rvalues a copy instead.
  std::vector<double> values() &&;

  // Scalar access; throws unless size() == 1.
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);

  // Gradient buffer. Allocated zero-filled on first accumulate; empty while
  // untouched, which is how the tape tells live nodes from dead ones.
  // A Tensor is a shared handle, so gradient bookkeeping is const-callable.
  bool grad_allocated() const;
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad() const;
  void accumulate_grad(const std::vector<double>& g) const;

  // Identity of the underlying buffer (used as a graph node key).
  const void* node_id() const { return d_.get(); }

  friend class Tape;

 private:
  struct Data {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    const Tape* producer = nullptr;
  };

  std::shared_ptr<Data> d_;
};

// Records ops in execution order (hence topologically sorted) and replays
// them in reverse on backward(). Single-threaded; one backward per tape.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers the op that produced `output`. `backward` must read
  // output.grad() and accumulate into whichever inputs require grad.
  void record(Tensor& output, std::function<void()> backward);

  // Seeds d(loss)/d(loss)=1 and accumulates gradients into every
  // requires_grad tensor reachable from `loss`. Rejects non-scalar losses,
  // losses produced elsewhere, and repeated invocation.
  void backward(const Tensor& loss);

  bool backward_done() const { return backward_done_; }
  std::size_t num_ops() const { return nodes_.size(); }

 private:
  struct Node {
    std::shared_ptr<Tensor::Data> out;
    std::function<void()> fn;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace uuconv
