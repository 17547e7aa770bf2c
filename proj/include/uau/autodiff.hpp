#pragma once

// Tape-based reverse-mode automatic differentiation.
//
// A Tape records nodes in creation order, which is a topological order by
// construction. backward() walks the tape once in reverse. Parameters live
// in a ParameterStore; parameter leaves forward their gradient into the
// store when backward finishes.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "uau/tensor.hpp"

namespace uau {

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t index = 0;

  const Tensor& value() const;
  const Shape& shape() const;
  bool requires_grad() const;
};

/// Named trainable tensors and their gradient slots.
class ParameterStore {
 public:
  struct Entry {
    Tensor value;
    Tensor grad;
    bool trainable = true;
  };

  void add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;
  Tensor& value(const std::string& name) { return entry(name).value; }
  const Tensor& value(const std::string& name) const { return entry(name).value; }
  Tensor& grad(const std::string& name) { return entry(name).grad; }

  /// Marks every parameter whose name starts with one of the prefixes as
  /// trainable and every other one as frozen.
  void set_trainable_prefixes(const std::vector<std::string>& prefixes);
  void set_all_trainable(bool trainable);

  void zero_grad();
  std::size_t total_size() const;
  std::vector<std::string> names() const;

  // Sorted by name, so iteration order is deterministic.
  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
};

/// Receives the node itself and its output gradient; accumulates into the
/// gradient slots of the node's inputs.
using BackwardFn = std::function<void(Tape&, Var self, const Tensor& grad_out)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf bound to a store entry. Frozen parameters become constants.
  Var parameter(ParameterStore& store, const std::string& name);

  /// Records an op result. `backward` may be empty for non-differentiable ops.
  Var record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  /// Reverse sweep from a scalar loss; fills parameter gradients in their
  /// stores (accumulating). Throws ShapeError for a non-scalar loss.
  void backward(Var loss);

  const Tensor& value(Var v) const { return nodes_[v.index].value; }
  bool requires_grad(Var v) const { return nodes_[v.index].requires_grad; }
  /// Gradient of a node after backward(); zero tensor if none reached it.
  Tensor grad(Var v) const;
  /// Mutable gradient slot, allocated on first use. For use in BackwardFns.
  Tensor& grad_slot(Var v);
  std::string_view op_name(Var v) const { return nodes_[v.index].op; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::string_view op;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    Tensor* param_grad = nullptr;
  };
  // deque: appending keeps references to earlier nodes valid, so ops may
  // hold value()/shape() references while recording further nodes.
  std::deque<Node> nodes_;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  double tolerance = 0.0;
  bool passed = true;
};

/// Compares analytic gradients of `loss_fn` with central finite differences
/// (step `step`) for every trainable entry in `store`. The relative error of
/// one entry is |a - n| / max(|a|, |n|, magnitude_floor).
GradCheckReport grad_check(ParameterStore& store, const std::function<Var(Tape&)>& loss_fn,
                           double tolerance, double step = 1e-5, double magnitude_floor = 1e-4);

}  // namespace uau
