#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "longattn/errors.hpp"

namespace longattn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct Node {
  std::uint64_t id = 0;
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
};

}  // namespace detail

/// Dense row-major float64 tensor. Values are shared and immutable once an
/// operation has produced them; only leaf parameters are updated in place
/// (by optimizers and surgery), and never while a tape references them.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  std::uint64_t id() const { return node_->id; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  /// Extent of `axis`; negative axes count from the back.
  std::size_t dim(int axis) const;
  std::size_t size() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double operator[](std::size_t flat) const { return node_->data[flat]; }

  /// Deep copy with a fresh identity.
  Tensor clone(bool requires_grad = false) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

class BackwardContext;
class Gradients;
using BackwardFn = std::function<void(std::span<const double> grad_out, BackwardContext& ctx)>;
Gradients backward(const Tensor& loss);
Tensor record(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, BackwardFn fn);

/// Ordered record of differentiable operations. Entries are appended in
/// execution order, so inputs always precede the nodes that consume them.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  std::size_t size() const { return entries_.size(); }
  bool contains(std::uint64_t id) const { return produced_.contains(id); }
  bool consumed() const { return consumed_; }

 private:
  friend class BackwardContext;
  friend Tensor record(Shape, std::vector<double>, std::vector<Tensor>, BackwardFn);
  friend Gradients backward(const Tensor& loss);

  struct Entry {
    std::shared_ptr<detail::Node> output;
    std::vector<std::shared_ptr<detail::Node>> inputs;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::uint64_t, std::size_t> produced_;
  bool consumed_ = false;
};

/// Makes `tape` the recording target for this thread until destruction.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording (evaluation, finite differences).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool previous_;
};

Tape* active_tape();

/// Gradients of leaf tensors produced by one backward pass.
class Gradients {
 public:
  bool contains(const Tensor& t) const { return grads_.contains(t.id()); }
  /// Gradient for `t`; zeros when `t` did not influence the loss.
  std::vector<double> of(const Tensor& t) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend Gradients backward(const Tensor& loss);
  std::unordered_map<std::uint64_t, std::vector<double>> grads_;
};

/// Reverse pass over the active tape. Throws TapeError for a non-scalar loss,
/// a loss not recorded on the active tape, or a tape already consumed.
Gradients backward(const Tensor& loss);

/// Access to input-gradient buffers while running one entry's backward rule.
class BackwardContext {
 public:
  /// Accumulation buffer for input `k`, or an empty span when that input
  /// does not require a gradient.
  std::span<double> grad(std::size_t k);

 private:
  friend Gradients backward(const Tensor& loss);
  BackwardContext(const Tape::Entry& entry,
                  std::unordered_map<std::uint64_t, std::vector<double>>& buffers)
      : entry_(entry), buffers_(buffers) {}
  const Tape::Entry& entry_;
  std::unordered_map<std::uint64_t, std::vector<double>>& buffers_;
};

/// Builds an op result, checks it is finite, and records `fn` on the active
/// tape when any input requires a gradient.
Tensor record(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, BackwardFn fn);

}  // namespace longattn
