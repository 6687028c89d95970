#ifndef A2V_CORE_TENSOR_HPP
#define A2V_CORE_TENSOR_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace a2v {

// Dense row-major double tensor. All model math in this project runs in
// double precision; desk-scale shapes make the memory cost irrelevant and
// the finite-difference checks need the headroom.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) { data.assign(numel_of(shape), 0.0); }
    Tensor(std::vector<int64_t> s, double fill) : shape(std::move(s)) { data.assign(numel_of(shape), fill); }
    Tensor(std::vector<int64_t> s, std::vector<double> d);

    static int64_t numel_of(const std::vector<int64_t>& s);
    static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int64_t> s, double v) { return Tensor(std::move(s), v); }
    static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape.at(static_cast<size_t>(i)); }

    double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    // 2-D / 3-D / 4-D accessors; index math is unchecked beyond debug asserts.
    double& at2(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
    double at2(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
    double& at3(int64_t i, int64_t j, int64_t k) {
        return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }
    double at3(int64_t i, int64_t j, int64_t k) const {
        return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }
    double& at4(int64_t i, int64_t j, int64_t k, int64_t l) {
        return data[static_cast<size_t>(((i * shape[1] + j) * shape[2] + k) * shape[3] + l)];
    }
    double at4(int64_t i, int64_t j, int64_t k, int64_t l) const {
        return data[static_cast<size_t>(((i * shape[1] + j) * shape[2] + k) * shape[3] + l)];
    }

    Tensor reshaped(std::vector<int64_t> s) const;
    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
    double max_abs() const;

    std::string shape_str() const;
};

// Shape helpers shared by error messages.
std::string shape_str(const std::vector<int64_t>& s);

// Max-abs difference between equal-shaped tensors.
double max_abs_diff(const Tensor& a, const Tensor& b);

// FNV-1a 64-bit digest of the raw bytes; used for bitwise-identity checks
// and scheduler instrumentation.
uint64_t digest(const Tensor& t);
uint64_t fnv1a(const void* bytes, size_t n, uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace a2v

#endif
