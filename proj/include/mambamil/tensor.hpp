#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mambamil {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major float64 array with an optional gradient slot.
//
// A Tensor is a cheap handle: copies share the same storage. Values produced
// by operations are immutable; only leaves (tensors not produced by a recorded
// operation) expose mutable data, which is how optimizers and finite-difference
// checks update parameters.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  // Extent of axis `axis`; negative values count from the back.
  std::size_t dim(int axis) const;
  std::size_t numel() const { return data().size(); }

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on = true);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Same values, no graph history.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Ordered record of differentiable operations. Nodes are appended in
// execution order, so the record is topological by construction.
class Tape {
 public:
  void record(std::shared_ptr<detail::Node> node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }
  const std::vector<std::shared_ptr<detail::Node>>& nodes() const { return nodes_; }

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

// Makes `tape` the recording target for operations on this thread for the
// lifetime of the scope. Without an active tape operations build no graph.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// Reverse-mode sweep over `tape` seeded with d(loss)/d(loss) = 1. Gradients
// accumulate additively into every requires_grad leaf reached from `loss`.
void backward(const Tensor& loss, Tape& tape);

namespace detail {

// Creates the output node of an operation. When a tape is active and any
// input requires grad, the node is wired into the graph with `fn` as its
// backward rule and recorded; otherwise `fn` is dropped.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(Node&)> fn);

inline bool wants_grad(const std::shared_ptr<Node>& n) { return n && n->requires_grad; }

}  // namespace detail

}  // namespace mambamil
