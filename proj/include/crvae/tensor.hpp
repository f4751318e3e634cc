#pragma once

// Dense n-dimensional numeric arrays. Value-semantic: copying a Tensor copies
// its storage, so instances can move freely between threads.

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace crvae {

using Shape = std::vector<int>;

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed file contents (images, checkpoints); messages carry byte offsets.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) {
        if (d < 0) throw ShapeError("negative dimension in shape");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s, T fill = T(0))
        : shape(std::move(s)), data(static_cast<std::size_t>(shape_numel(shape)), fill) {}
    Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
            throw ShapeError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        }
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, T v) { return Tensor(std::move(s), v); }
    static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
    bool is_scalar() const { return shape.empty(); }

    T& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    T scalar_value() const {
        if (numel() != 1) throw ShapeError("scalar_value on tensor of shape " + shape_str(shape));
        return data[0];
    }

    // NCHW element access for 4-d tensors.
    T& at4(int n, int c, int h, int w) {
        return data[static_cast<std::size_t>(((std::int64_t(n) * shape[1] + c) * shape[2] + h) * shape[3] + w)];
    }
    const T& at4(int n, int c, int h, int w) const {
        return data[static_cast<std::size_t>(((std::int64_t(n) * shape[1] + c) * shape[2] + h) * shape[3] + w)];
    }

    bool all_finite() const {
        for (const T& v : data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    void check_finite(const std::string& what) const {
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (!std::isfinite(static_cast<double>(data[i]))) {
                throw NumericError(what + ": non-finite value at flat index " + std::to_string(i));
            }
        }
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

template <typename T>
inline void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!same_shape(a.shape, b.shape)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    }
}

}  // namespace crvae
