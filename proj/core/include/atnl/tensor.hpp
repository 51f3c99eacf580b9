#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace atnl {

/// Dense row-major tensor of 64-bit floats with an optional gradient slot.
///
/// Copies are shallow: two Tensor handles may share one storage block, which
/// is how weight tying and the parameter registry work. Values are mutated
/// only by the optimizer and by the finite-difference prober; everything else
/// treats constructed tensors as immutable.
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::vector<std::size_t> shape, std::vector<double> values,
         bool requires_grad = false);

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double value,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Rank-2 convenience constructor.
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }

  const std::vector<std::size_t>& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  /// Rank-2 accessors. Throw on other ranks.
  std::size_t rows() const;
  std::size_t cols() const;
  double operator()(std::size_t i, std::size_t j) const;
  double& operator()(std::size_t i, std::size_t j);

  std::vector<double>& values();
  const std::vector<double>& values() const;
  double item() const;  // single-element tensors only

  bool requires_grad() const;

  /// Gradient buffer, allocated zeroed on first touch.
  std::vector<double>& grad();
  bool has_grad() const;
  void zero_grad();
  void add_to_grad(std::span<const double> delta);

  /// Storage identity (shared across shallow copies).
  const void* id() const { return impl_.get(); }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  std::string shape_str() const;

 private:
  struct Impl {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until first use
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

std::string shape_to_string(std::span<const std::size_t> shape);

}  // namespace atnl
