#pragma once

#include <functional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "atnl/tensor.hpp"

namespace atnl {

/// Per-backward-pass adjoint buffers, keyed by tensor storage identity.
///
/// Intermediate adjoints live here and are discarded when the pass ends;
/// only leaf tensors receive the result in their grad slot. Keeping the
/// pass-local state out of the tensors makes repeated backward calls
/// accumulate leaf gradients additively instead of compounding.
class AdjointStore {
 public:
  /// Adjoint of t, or an empty span if no gradient has reached it.
  std::span<const double> of(const Tensor& t) const;

  /// Get-or-create the zeroed adjoint buffer for t.
  std::vector<double>& accum(const Tensor& t);

  bool contains(const Tensor& t) const;

 private:
  std::unordered_map<const void*, std::vector<double>> buffers_;
};

/// Append-only tape of recorded operations.
///
/// Nodes are recorded in execution order, so inputs always precede the node
/// that consumes them and one reverse sweep visits each node exactly once.
/// A Graph and the activations it holds belong to one logical execution
/// context; parameters may be shared read-only across graphs.
class Graph {
 public:
  using BackwardFn = std::function<void(AdjointStore&)>;

  explicit Graph(bool recording = true) : recording_(recording) {}

  /// When off, operations skip the tape entirely (inference mode).
  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward);

  /// Reverse-mode sweep from a scalar root. Accumulates into the grad slot
  /// of every requires_grad leaf reachable from the root; repeated calls
  /// without zero_grad add up.
  void backward(const Tensor& root);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::unordered_set<const void*> produced_;
  bool recording_;
};

}  // namespace atnl
