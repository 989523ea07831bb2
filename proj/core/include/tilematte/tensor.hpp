#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace tilematte {

/// Dense row-major tensor of doubles. Rank is whatever the caller needs;
/// there are no views, copies are cheap at the sizes this project uses.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(count(shape_), 0.0);
    }
    Tensor(std::vector<int> shape, std::vector<double> values)
        : shape_(std::move(shape)), data_(std::move(values)) {
        if ((std::int64_t)data_.size() != count(shape_))
            throw std::invalid_argument("tensor: value count does not match shape");
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double value) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = value;
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return (int)shape_.size(); }
    int dim(int i) const { return shape_.at((size_t)i); }
    std::int64_t size() const { return (std::int64_t)data_.size(); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::int64_t i) { return data_[(size_t)i]; }
    double operator[](std::int64_t i) const { return data_[(size_t)i]; }

    // Rank-specific element access; callers are responsible for rank.
    double& at2(int i, int j) { return data_[(size_t)((std::int64_t)i * shape_[1] + j)]; }
    double at2(int i, int j) const { return data_[(size_t)((std::int64_t)i * shape_[1] + j)]; }
    double& at3(int c, int y, int x) {
        return data_[(size_t)(((std::int64_t)c * shape_[1] + y) * shape_[2] + x)];
    }
    double at3(int c, int y, int x) const {
        return data_[(size_t)(((std::int64_t)c * shape_[1] + y) * shape_[2] + x)];
    }
    double& at4(int o, int i, int y, int x) {
        return data_[(size_t)((((std::int64_t)o * shape_[1] + i) * shape_[2] + y) * shape_[3] + x)];
    }
    double at4(int o, int i, int y, int x) const {
        return data_[(size_t)((((std::int64_t)o * shape_[1] + i) * shape_[2] + y) * shape_[3] + x)];
    }

    void fill(double v) {
        for (auto& x : data_) x = v;
    }

    static std::int64_t count(const std::vector<int>& shape) {
        std::int64_t n = 1;
        for (int d : shape) {
            if (d < 0) throw std::invalid_argument("tensor: negative dimension");
            n *= d;
        }
        return n;
    }

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

} // namespace tilematte
