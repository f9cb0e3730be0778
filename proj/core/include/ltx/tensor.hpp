#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ltx {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& dims);
std::string shape_string(const Shape& dims);

/// Dense row-major array of doubles.
///
/// A Tensor is a plain value: copying it copies the buffer. Gradient
/// bookkeeping lives on the Tape, not here.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape dims, double fill = 0.0);
    Tensor(Shape dims, std::vector<double> data);

    static Tensor scalar(double value);
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor vector(std::initializer_list<double> values);

    const Shape& dims() const noexcept { return dims_; }
    std::size_t dim(std::size_t axis) const;
    std::size_t rank() const noexcept { return dims_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool is_scalar() const noexcept { return data_.size() == 1; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    double* ptr() noexcept { return data_.data(); }
    const double* ptr() const noexcept { return data_.data(); }
    std::vector<double>& values() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * dims_.back() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * dims_.back() + c]; }

    double item() const;

    /// Same buffer, new dims. Throws ShapeError when the element count differs.
    Tensor reshaped(Shape dims) const&;
    Tensor reshaped(Shape dims) &&;

    void fill(double value);

    /// Bitwise equality of dims and every element.
    bool bitwise_equal(const Tensor& other) const noexcept;

private:
    Shape dims_;
    std::vector<double> data_;
};

/// Round every element through float32, as stored on disk.
void quantize_to_float(Tensor& t);

}  // namespace ltx
