#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ltew {

// Dense row-major tensor, up to 4 dims. Float for production inference,
// double for finite-difference gradient checks.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, T fill = T{}) : shape_(std::move(shape)) {
        if (shape_.empty() || shape_.size() > 4)
            throw std::invalid_argument("tensor rank must be 1..4");
        size_t n = 1;
        for (int d : shape_) {
            if (d < 1) throw std::invalid_argument("tensor dims must be positive");
            n *= static_cast<size_t>(d);
        }
        data_.assign(n, fill);
    }

    static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape_); }

    bool empty() const { return data_.empty(); }
    int ndim() const { return static_cast<int>(shape_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    size_t size() const { return data_.size(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    T& operator[](size_t i) { return data_[i]; }
    const T& operator[](size_t i) const { return data_[i]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    // (C,H,W) indexing for rank-3 feature maps.
    T& at3(int c, int y, int x) {
        return data_[(static_cast<size_t>(c) * dim(1) + static_cast<size_t>(y)) * dim(2) +
                     static_cast<size_t>(x)];
    }
    const T& at3(int c, int y, int x) const {
        return data_[(static_cast<size_t>(c) * dim(1) + static_cast<size_t>(y)) * dim(2) +
                     static_cast<size_t>(x)];
    }

    // (rows, cols) indexing for rank-2 matrices.
    T& at2(int r, int c) { return data_[static_cast<size_t>(r) * dim(1) + static_cast<size_t>(c)]; }
    const T& at2(int r, int c) const {
        return data_[static_cast<size_t>(r) * dim(1) + static_cast<size_t>(c)];
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

private:
    std::vector<int> shape_;
    std::vector<T> data_;
};

inline std::string shape_string(const std::vector<int>& s) {
    std::string r = "(";
    for (size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
    return r + ")";
}

}  // namespace ltew
