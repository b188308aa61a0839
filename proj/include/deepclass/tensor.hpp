#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace deepclass {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of 32-bit reals, rank 1..4 (batch x channels x height x width).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor from(Shape shape, std::initializer_list<float> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    float* data() noexcept { return data_.data(); }
    const float* data() const noexcept { return data_.data(); }
    std::span<float> values() noexcept { return data_; }
    std::span<const float> values() const noexcept { return data_; }

    float& operator[](std::size_t i) noexcept { return data_[i]; }
    float operator[](std::size_t i) const noexcept { return data_[i]; }

    /// 4-D element access (b, c, y, x); no bounds checks.
    float& at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) noexcept {
        return data_[((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }
    float at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return data_[((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }

    /// Same data under a new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    void fill(float value);
    bool all_finite() const noexcept;

    /// Bit-exact equality of shape and every element.
    friend bool operator==(const Tensor& a, const Tensor& b);

private:
    Shape shape_;
    std::vector<float> data_;
};

}  // namespace deepclass
