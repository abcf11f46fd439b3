#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace imidet {

struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& what) : std::runtime_error(what) {}
};

// Dense row-major n-d array of doubles. The numeric currency of the nn and
// train modules; shapes are carried alongside the flat buffer.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s)
        : shape(std::move(s)), data(count(shape), 0.0) {}

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    double& operator()(std::size_t i, std::size_t j) {
        return data[i * shape[1] + j];
    }
    double operator()(std::size_t i, std::size_t j) const {
        return data[i * shape[1] + j];
    }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

inline void require_shape(const Tensor& t, const std::vector<std::size_t>& s,
                          const char* what) {
    if (t.shape != s) {
        throw ShapeMismatch(std::string("unexpected shape for ") + what);
    }
}

} // namespace imidet
