#include "longattn/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace longattn {
namespace {

std::atomic<std::uint64_t> next_id{1};
thread_local Tape* current_tape = nullptr;
thread_local bool grad_enabled = true;

std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<double> data, bool requires_grad) {
  if (numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + to_string(shape));
  }
  for (std::size_t extent : shape) {
    if (extent == 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->id = next_id.fetch_add(1, std::memory_order_relaxed);
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(make_node(std::move(shape), std::move(data), requires_grad)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> data(numel(shape), value);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

std::size_t Tensor::dim(int axis) const {
  const int r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape()));
  }
  return shape()[static_cast<std::size_t>(a)];
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on non-scalar tensor of shape " + to_string(shape()));
  return node_->data[0];
}

Tensor Tensor::clone(bool requires_grad) const { return Tensor(shape(), node_->data, requires_grad); }

Tape::~Tape() {
  if (current_tape == this) current_tape = nullptr;
}

TapeScope::TapeScope(Tape& tape) : previous_(current_tape) { current_tape = &tape; }
TapeScope::~TapeScope() { current_tape = previous_; }

NoGradScope::NoGradScope() : previous_(grad_enabled) { grad_enabled = false; }
NoGradScope::~NoGradScope() { grad_enabled = previous_; }

Tape* active_tape() { return grad_enabled ? current_tape : nullptr; }

std::vector<double> Gradients::of(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) return std::vector<double>(t.size(), 0.0);
  return it->second;
}

std::span<double> BackwardContext::grad(std::size_t k) {
  const auto& input = entry_.inputs.at(k);
  if (!input->requires_grad) return {};
  auto [it, inserted] = buffers_.try_emplace(input->id);
  if (inserted) it->second.assign(input->data.size(), 0.0);
  return it->second;
}

Tensor record(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, BackwardFn fn) {
  bool inputs_finite = true;
  bool needs_grad = false;
  for (const Tensor& in : inputs) {
    needs_grad = needs_grad || in.requires_grad();
  }
  for (double x : data) {
    if (!std::isfinite(x)) {
      for (const Tensor& in : inputs) {
        for (double y : in.data()) {
          if (!std::isfinite(y)) {
            inputs_finite = false;
            break;
          }
        }
      }
      if (inputs_finite) throw NumericError("non-finite value produced from finite inputs");
      break;
    }
  }
  Tape* tape = active_tape();
  const bool recorded = needs_grad && tape != nullptr;
  Tensor out(std::move(shape), std::move(data), recorded);
  if (recorded) {
    if (tape->consumed_) throw TapeError("recording onto a tape that has already run backward");
    Tape::Entry entry;
    entry.output = out.node();
    entry.inputs.reserve(inputs.size());
    for (const Tensor& in : inputs) entry.inputs.push_back(in.node());
    entry.fn = std::move(fn);
    tape->produced_.emplace(out.id(), tape->entries_.size());
    tape->entries_.push_back(std::move(entry));
  }
  return out;
}

Gradients backward(const Tensor& loss) {
  Tape* tape = active_tape();
  if (tape == nullptr) throw TapeError("backward() called with no active tape");
  if (tape->consumed_) throw TapeError("backward() replayed on a stale tape; run a new forward pass first");
  if (loss.size() != 1) throw TapeError("backward() requires a scalar loss, got shape " + to_string(loss.shape()));
  auto pos = tape->produced_.find(loss.id());
  if (pos == tape->produced_.end()) throw TapeError("loss was not recorded on the active tape");
  tape->consumed_ = true;

  std::unordered_map<std::uint64_t, std::vector<double>> buffers;
  buffers[loss.id()] = {1.0};
  for (std::size_t i = pos->second + 1; i-- > 0;) {
    const Tape::Entry& entry = tape->entries_[i];
    auto it = buffers.find(entry.output->id);
    if (it == buffers.end()) continue;
    std::vector<double> grad_out = std::move(it->second);
    buffers.erase(it);
    BackwardContext ctx(entry, buffers);
    entry.fn(grad_out, ctx);
  }

  Gradients result;
  for (auto& [id, g] : buffers) {
    if (!tape->produced_.contains(id)) result.grads_.emplace(id, std::move(g));
  }
  tape->entries_.clear();
  return result;
}

}  // namespace longattn
