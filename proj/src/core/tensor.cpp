#include "tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace a2v {

int64_t Tensor::numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
        if (d < 0) throw std::invalid_argument("tensor: negative dimension in shape " + a2v::shape_str(s));
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int64_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel_of(shape) != static_cast<int64_t>(data.size()))
        throw std::invalid_argument("tensor: data size " + std::to_string(data.size()) +
                                    " does not match shape " + a2v::shape_str(shape));
}

Tensor Tensor::reshaped(std::vector<int64_t> s) const {
    if (numel_of(s) != numel())
        throw std::invalid_argument("tensor: cannot reshape " + a2v::shape_str(shape) + " to " + a2v::shape_str(s));
    Tensor out;
    out.shape = std::move(s);
    out.data = data;
    return out;
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data) m = std::max(m, std::fabs(v));
    return m;
}

std::string Tensor::shape_str() const { return a2v::shape_str(shape); }

std::string shape_str(const std::vector<int64_t>& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << ")";
    return os.str();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("max_abs_diff: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

uint64_t fnv1a(const void* bytes, size_t n, uint64_t seed) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    uint64_t h = seed;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t digest(const Tensor& t) {
    uint64_t h = fnv1a(t.data.data(), t.data.size() * sizeof(double));
    for (int64_t d : t.shape) h = fnv1a(&d, sizeof(d), h);
    return h;
}

}  // namespace a2v
