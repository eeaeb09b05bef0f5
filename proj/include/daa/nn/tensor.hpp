#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "daa/nn/errors.hpp"

namespace daa::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

/// Dense row-major array. Owns its storage; copies are deep.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
        check_shape(shape_);
        data_.assign(nn::numel(shape_), fill);
    }
    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape(shape_);
        if (nn::numel(shape_) != data_.size())
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + nn::to_string(shape_));
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s), T{0}); }
    static Tensor ones(Shape s) { return Tensor(std::move(s), T{1}); }
    static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }
    static Tensor vector(std::initializer_list<T> v) {
        return Tensor(Shape{v.size()}, std::vector<T>(v));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T item() const {
        if (data_.size() != 1) throw ContractError("item() on tensor of shape " + nn::to_string(shape_));
        return data_[0];
    }

    Tensor reshaped(Shape s) const {
        if (nn::numel(s) != numel())
            throw DimensionError("cannot reshape " + nn::to_string(shape_) + " to " + nn::to_string(s));
        return Tensor(std::move(s), data_);
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    template <class U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    static void check_shape(const Shape& s) {
        for (auto d : s)
            if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + nn::to_string(s));
    }

    Shape shape_;
    std::vector<T> data_;
};

}  // namespace daa::nn
