#include "atnl/graph.hpp"

#include "atnl/errors.hpp"

namespace atnl {

std::span<const double> AdjointStore::of(const Tensor& t) const {
  auto it = buffers_.find(t.id());
  if (it == buffers_.end()) return {};
  return it->second;
}

std::vector<double>& AdjointStore::accum(const Tensor& t) {
  auto [it, inserted] = buffers_.try_emplace(t.id());
  if (inserted) it->second.assign(t.numel(), 0.0);
  return it->second;
}

bool AdjointStore::contains(const Tensor& t) const {
  return buffers_.count(t.id()) != 0;
}

void Graph::record(std::vector<Tensor> inputs, Tensor output,
                   BackwardFn backward) {
  produced_.insert(output.id());
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward)});
}

void Graph::backward(const Tensor& root) {
  if (root.numel() != 1)
    throw ContractError("Graph::backward: root must be a scalar, got shape " +
                        root.shape_str());
  if (!produced_.count(root.id()))
    throw ContractError(
        "Graph::backward: root was not produced by an operation recorded on "
        "this graph");

  AdjointStore adjoints;
  adjoints.accum(root)[0] += 1.0;

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!adjoints.contains(it->output)) continue;  // off the root's cone
    it->backward(adjoints);
  }

  // Deposit into leaves: graph inputs that no node produced.
  std::unordered_set<const void*> seen;
  for (Node& node : nodes_) {
    for (Tensor& in : node.inputs) {
      if (!in.requires_grad() || produced_.count(in.id())) continue;
      if (!seen.insert(in.id()).second) continue;
      auto adj = adjoints.of(in);
      if (!adj.empty()) in.add_to_grad(adj);
    }
  }
}

}  // namespace atnl
