#include "atnl/tensor.hpp"

#include <sstream>

#include "atnl/errors.hpp"

namespace atnl {

std::string shape_to_string(std::span<const std::size_t> shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values,
               bool requires_grad) {
  for (std::size_t e : shape) {
    if (e == 0)
      throw ShapeError("Tensor: extents must be positive, got " +
                       shape_to_string(shape));
  }
  if (shape_numel(shape) != values.size())
    throw ShapeError("Tensor: shape " + shape_to_string(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), 0.0);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value,
                    bool requires_grad) {
  std::vector<double> v(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values, bool requires_grad) {
  return Tensor({rows, cols}, std::move(values), requires_grad);
}

const std::vector<std::size_t>& Tensor::shape() const {
  if (!impl_) throw ContractError("Tensor: use of an undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::numel() const { return values().size(); }

std::size_t Tensor::rows() const {
  if (rank() != 2)
    throw ShapeError("Tensor::rows: expected rank 2, got " + shape_str());
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2)
    throw ShapeError("Tensor::cols: expected rank 2, got " + shape_str());
  return shape()[1];
}

double Tensor::operator()(std::size_t i, std::size_t j) const {
  return values()[i * cols() + j];
}

double& Tensor::operator()(std::size_t i, std::size_t j) {
  return values()[i * cols() + j];
}

std::vector<double>& Tensor::values() {
  if (!impl_) throw ContractError("Tensor: use of an undefined tensor");
  return impl_->values;
}

const std::vector<double>& Tensor::values() const {
  if (!impl_) throw ContractError("Tensor: use of an undefined tensor");
  return impl_->values;
}

double Tensor::item() const {
  if (numel() != 1)
    throw ContractError("Tensor::item: tensor has " + std::to_string(numel()) +
                        " elements");
  return values()[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

std::vector<double>& Tensor::grad() {
  if (!impl_) throw ContractError("Tensor: use of an undefined tensor");
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

void Tensor::zero_grad() {
  if (impl_ && !impl_->grad.empty())
    impl_->grad.assign(impl_->values.size(), 0.0);
}

void Tensor::add_to_grad(std::span<const double> delta) {
  auto& g = grad();
  if (delta.size() != g.size())
    throw ShapeError("Tensor::add_to_grad: gradient size " +
                     std::to_string(delta.size()) + " vs storage " +
                     std::to_string(g.size()));
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

std::string Tensor::shape_str() const { return shape_to_string(shape()); }

}  // namespace atnl
