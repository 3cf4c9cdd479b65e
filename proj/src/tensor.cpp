#include "swiftdiff/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "swiftdiff/errors.hpp"

namespace swiftdiff {

std::string shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<int64_t>(data_.size())) {
        throw ShapeError("tensor: data length " + std::to_string(data_.size()) +
                         " does not match shape " + swiftdiff::shape_str(shape_));
    }
}

Tensor Tensor::scalar(double v) { return Tensor({1, 1}, {v}); }

Tensor Tensor::zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int64_t> shape, double v) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = v;
    return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    int64_t r = static_cast<int64_t>(rows.size());
    int64_t c = r > 0 ? static_cast<int64_t>(rows.begin()->size()) : 0;
    Tensor t({r, c});
    int64_t i = 0;
    for (const auto& row : rows) {
        if (static_cast<int64_t>(row.size()) != c) {
            throw ShapeError("from_rows: ragged rows");
        }
        for (double v : row) t.data_[static_cast<size_t>(i++)] = v;
    }
    return t;
}

Tensor Tensor::row(std::vector<double> v) {
    int64_t n = static_cast<int64_t>(v.size());
    return Tensor({1, n}, std::move(v));
}

Tensor Tensor::col(std::vector<double> v) {
    int64_t n = static_cast<int64_t>(v.size());
    return Tensor({n, 1}, std::move(v));
}

Tensor Tensor::identity(int64_t n) {
    Tensor t({n, n});
    for (int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

int64_t Tensor::rows() const {
    if (!is_2d()) throw ShapeError("rows(): tensor is not 2-D, shape " + shape_str());
    return shape_[0];
}

int64_t Tensor::cols() const {
    if (!is_2d()) throw ShapeError("cols(): tensor is not 2-D, shape " + shape_str());
    return shape_[1];
}

double& Tensor::at(int64_t r, int64_t c) {
    return data_[static_cast<size_t>(r * cols() + c)];
}

double Tensor::at(int64_t r, int64_t c) const {
    return data_[static_cast<size_t>(r * cols() + c)];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

bool Tensor::bit_equal(const Tensor& other) const {
    if (shape_ != other.shape_) return false;
    return std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0;
}

std::string Tensor::shape_str() const { return swiftdiff::shape_str(shape_); }

}  // namespace swiftdiff
