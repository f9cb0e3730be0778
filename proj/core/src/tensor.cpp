#include "ltx/tensor.hpp"

#include "ltx/error.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

namespace ltx {

std::size_t shape_size(const Shape& dims)
{
    std::size_t n = 1;
    for (std::size_t d : dims) {
        n *= d;
    }
    return n;
}

std::string shape_string(const Shape& dims)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i > 0) {
            os << 'x';
        }
        os << dims[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape dims, double fill) : dims_(std::move(dims)), data_(shape_size(dims_), fill)
{
    for (std::size_t d : dims_) {
        if (d == 0) {
            throw ShapeError("tensor dims must be positive, got " + shape_string(dims_));
        }
    }
}

Tensor::Tensor(Shape dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data))
{
    for (std::size_t d : dims_) {
        if (d == 0) {
            throw ShapeError("tensor dims must be positive, got " + shape_string(dims_));
        }
    }
    if (shape_size(dims_) != data_.size()) {
        throw ShapeError("tensor dims " + shape_string(dims_) + " do not match " +
                         std::to_string(data_.size()) + " values");
    }
}

Tensor Tensor::scalar(double value)
{
    return Tensor({1}, std::vector<double>{value});
}

Tensor Tensor::vector(std::initializer_list<double> values)
{
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows)
{
    const std::size_t r = rows.size();
    const std::size_t c = r > 0 ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw ShapeError("ragged rows in Tensor::from_rows");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const
{
    if (axis >= dims_.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_string(dims_));
    }
    return dims_[axis];
}

double Tensor::item() const
{
    if (data_.size() != 1) {
        throw ContractError("item() requires a single-element tensor, got " + shape_string(dims_));
    }
    return data_[0];
}

Tensor Tensor::reshaped(Shape dims) const&
{
    Tensor copy = *this;
    return std::move(copy).reshaped(std::move(dims));
}

Tensor Tensor::reshaped(Shape dims) &&
{
    if (shape_size(dims) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_string(dims_) + " to " + shape_string(dims));
    }
    return Tensor(std::move(dims), std::move(data_));
}

void Tensor::fill(double value)
{
    std::fill(data_.begin(), data_.end(), value);
}

bool Tensor::bitwise_equal(const Tensor& other) const noexcept
{
    return dims_ == other.dims_ && data_.size() == other.data_.size() &&
           (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

void quantize_to_float(Tensor& t)
{
    for (double& v : t.values()) {
        v = static_cast<double>(static_cast<float>(v));
    }
}

}  // namespace ltx
