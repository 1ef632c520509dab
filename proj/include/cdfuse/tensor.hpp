#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdfuse {

struct dimension_error : std::runtime_error {
    explicit dimension_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct format_error : std::runtime_error {
    explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dense rank-1..4 tensor of doubles, row-major (channel-major for images).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        check_shape();
        data_.assign(element_count(), 0.0);
    }

    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (static_cast<std::size_t>(element_count()) != data_.size())
            throw dimension_error("tensor data length does not match shape");
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }

    std::size_t size() const { return data_.size(); }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // C×H×W access
    double& at(int c, int i, int j) {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + i) * shape_[2] + j];
    }
    double at(int c, int i, int j) const {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + i) * shape_[2] + j];
    }
    // O×C×k×k access
    double& at(int o, int c, int u, int v) {
        return data_[((static_cast<std::size_t>(o) * shape_[1] + c) * shape_[2] + u) * shape_[3] + v];
    }
    double at(int o, int c, int u, int v) const {
        return data_[((static_cast<std::size_t>(o) * shape_[1] + c) * shape_[2] + u) * shape_[3] + v];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    void check_shape() {
        if (shape_.empty() || shape_.size() > 4)
            throw dimension_error("tensor rank must be 1..4");
        for (int e : shape_)
            if (e < 1) throw dimension_error("tensor extents must be >= 1");
    }

    std::size_t element_count() const {
        return std::accumulate(shape_.begin(), shape_.end(), std::size_t{1},
                               [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw dimension_error(std::string(op) + ": shape mismatch");
}

} // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "hadamard");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return out;
}

inline Tensor abs(const Tensor& a) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(out[i]);
    return out;
}

inline Tensor sign(const Tensor& a) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (out[i] > 0.0) ? 1.0 : (out[i] < 0.0 ? -1.0 : 0.0);
    return out;
}

inline Tensor max0(const Tensor& a) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], 0.0);
    return out;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline Tensor sigmoid(const Tensor& a) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(out[i]);
    return out;
}

inline double l1_sum(const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i]);
    return s;
}

inline double l2_norm(const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * a[i];
    return std::sqrt(s);
}

inline double mean(const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
    return s / static_cast<double>(a.size());
}

inline Tensor clamp01(const Tensor& a) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], 0.0, 1.0);
    return out;
}

inline double dot(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

namespace detail {

// Zero-padded copy: C×H×W -> C×(H+2p)×(W+2p).
inline Tensor pad_same(const Tensor& in, int p) {
    const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
    Tensor out({C, H + 2 * p, W + 2 * p});
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < H; ++i) {
            const double* src = in.data() + (static_cast<std::size_t>(c) * H + i) * W;
            double* dst = out.data() +
                          (static_cast<std::size_t>(c) * (H + 2 * p) + i + p) * (W + 2 * p) + p;
            std::copy(src, src + W, dst);
        }
    return out;
}

} // namespace detail

/// Same-padded cross-correlation: input Cin×H×W, kernel Cout×Cin×k×k -> Cout×H×W.
inline Tensor conv2d(const Tensor& input, const Tensor& kernel) {
    if (input.rank() != 3 || kernel.rank() != 4)
        throw dimension_error("conv2d: expects rank-3 input and rank-4 kernel");
    const int Cin = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int Cout = kernel.dim(0), k = kernel.dim(2);
    if (kernel.dim(1) != Cin)
        throw dimension_error("conv2d: kernel Cin (" + std::to_string(kernel.dim(1)) +
                              ") != input channels (" + std::to_string(Cin) + ")");
    if (kernel.dim(3) != k || k % 2 == 0)
        throw dimension_error("conv2d: kernel must be square with odd extent");
    const int p = (k - 1) / 2;
    const Tensor pin = detail::pad_same(input, p);
    const int Wp = W + 2 * p;
    Tensor out({Cout, H, W});
    for (int o = 0; o < Cout; ++o) {
        double* outp = out.data() + static_cast<std::size_t>(o) * H * W;
        for (int c = 0; c < Cin; ++c)
            for (int u = 0; u < k; ++u)
                for (int v = 0; v < k; ++v) {
                    const double w = kernel.at(o, c, u, v);
                    if (w == 0.0) continue;
                    for (int i = 0; i < H; ++i) {
                        const double* row =
                            pin.data() + (static_cast<std::size_t>(c) * (H + 2 * p) + i + u) * Wp + v;
                        double* orow = outp + static_cast<std::size_t>(i) * W;
                        for (int j = 0; j < W; ++j) orow[j] += w * row[j];
                    }
                }
    }
    return out;
}

/// Exact adjoint of conv2d under the same kernel: input Cout×H×W -> Cin×H×W.
inline Tensor conv2d_transposed(const Tensor& input, const Tensor& kernel) {
    if (input.rank() != 3 || kernel.rank() != 4)
        throw dimension_error("conv2d_transposed: expects rank-3 input and rank-4 kernel");
    const int Cout = kernel.dim(0), Cin = kernel.dim(1), k = kernel.dim(2);
    if (input.dim(0) != Cout)
        throw dimension_error("conv2d_transposed: input channels (" + std::to_string(input.dim(0)) +
                              ") != kernel Cout (" + std::to_string(Cout) + ")");
    // Adjoint == convolution with the channel-swapped, spatially flipped kernel.
    Tensor flipped({Cin, Cout, k, k});
    for (int o = 0; o < Cout; ++o)
        for (int c = 0; c < Cin; ++c)
            for (int u = 0; u < k; ++u)
                for (int v = 0; v < k; ++v)
                    flipped.at(c, o, k - 1 - u, k - 1 - v) = kernel.at(o, c, u, v);
    return conv2d(input, flipped);
}

/// Gradient of conv2d(a, K) with respect to K, given upstream out_bar.
/// a: Cin×H×W, out_bar: Cout×H×W -> Cout×Cin×k×k.
inline Tensor conv2d_kernel_grad(const Tensor& a, const Tensor& out_bar, int k) {
    const int Cin = a.dim(0), H = a.dim(1), W = a.dim(2);
    const int Cout = out_bar.dim(0);
    if (out_bar.dim(1) != H || out_bar.dim(2) != W)
        throw dimension_error("conv2d_kernel_grad: spatial mismatch");
    const int p = (k - 1) / 2;
    const Tensor pa = detail::pad_same(a, p);
    const int Wp = W + 2 * p;
    Tensor grad({Cout, Cin, k, k});
    for (int o = 0; o < Cout; ++o)
        for (int c = 0; c < Cin; ++c)
            for (int u = 0; u < k; ++u)
                for (int v = 0; v < k; ++v) {
                    double s = 0.0;
                    for (int i = 0; i < H; ++i) {
                        const double* arow =
                            pa.data() + (static_cast<std::size_t>(c) * (H + 2 * p) + i + u) * Wp + v;
                        const double* brow =
                            out_bar.data() + (static_cast<std::size_t>(o) * H + i) * W;
                        for (int j = 0; j < W; ++j) s += brow[j] * arow[j];
                    }
                    grad.at(o, c, u, v) = s;
                }
    return grad;
}

/// Concatenate along the channel axis (rank-3 tensors of equal spatial size).
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
        throw dimension_error("concat_channels: spatial mismatch");
    Tensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
    std::copy(a.data(), a.data() + a.size(), out.data());
    std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
    return out;
}

/// Channel slice [c0, c0+n) of a rank-3 tensor.
inline Tensor slice_channels(const Tensor& t, int c0, int n) {
    if (c0 < 0 || c0 + n > t.dim(0))
        throw dimension_error("slice_channels: range out of bounds");
    Tensor out({n, t.dim(1), t.dim(2)});
    const std::size_t plane = static_cast<std::size_t>(t.dim(1)) * t.dim(2);
    std::copy(t.data() + c0 * plane, t.data() + (c0 + n) * plane, out.data());
    return out;
}

} // namespace cdfuse
