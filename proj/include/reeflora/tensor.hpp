#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "reeflora/errors.hpp"

namespace reeflora {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense row-major tensor. No views, no broadcasting; every op makes its
// layout explicit. Rank is arbitrary but the graph ops below only accept
// rank 1 and 2; rank 3 is used for raster data (H x W x C).
template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(Shape s) : shape(std::move(s)) {
        validate_shape();
        data.assign(static_cast<std::size_t>(numel(shape)), T(0));
    }

    Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        validate_shape();
        if (static_cast<std::int64_t>(data.size()) != numel(shape)) {
            throw DimensionError("tensor data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
        }
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

    static Tensor full(Shape s, T value) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), value);
        return t;
    }

    static Tensor row(std::initializer_list<T> values) {
        return Tensor({static_cast<std::int64_t>(values.size())}, std::vector<T>(values));
    }

    static Tensor matrix(std::int64_t r, std::int64_t c, std::initializer_list<T> values) {
        return Tensor({r, c}, std::vector<T>(values));
    }

    static Tensor identity(std::int64_t n) {
        Tensor t({n, n});
        for (std::int64_t i = 0; i < n; ++i) t.data[static_cast<std::size_t>(i * n + i)] = T(1);
        return t;
    }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }

    std::int64_t rows() const {
        require_rank2("rows()");
        return shape[0];
    }
    std::int64_t cols() const {
        require_rank2("cols()");
        return shape[1];
    }

    T& at(std::int64_t r, std::int64_t c) {
        require_rank2("at()");
        return data[static_cast<std::size_t>(r * shape[1] + c)];
    }
    T at(std::int64_t r, std::int64_t c) const {
        require_rank2("at()");
        return data[static_cast<std::size_t>(r * shape[1] + c)];
    }

    T& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    T operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }

private:
    void validate_shape() const {
        for (auto d : shape) {
            if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_str(shape));
        }
    }
    void require_rank2(const char* what) const {
        if (shape.size() != 2) {
            throw DimensionError(std::string(what) + " requires a rank-2 tensor, got shape " +
                                 shape_str(shape));
        }
    }
};

// ---------------------------------------------------------------------------
// Kernels. Plain loops with a fixed accumulation order so results are
// bit-identical across runs and thread counts.
// ---------------------------------------------------------------------------

template <typename T>
void check_matmul_shapes(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw DimensionError("matmul requires rank-2 tensors, got " + shape_str(a.shape) + " and " +
                             shape_str(b.shape));
    }
    if (a.shape[1] != b.shape[0]) {
        throw DimensionError("matmul inner dimensions differ: " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    }
}

// c = a . b
template <typename T>
Tensor<T> gemm_nn(const Tensor<T>& a, const Tensor<T>& b) {
    check_matmul_shapes(a, b);
    const std::int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor<T> c({m, n});
    for (std::int64_t i = 0; i < m; ++i) {
        const T* arow = a.data.data() + i * k;
        T* crow = c.data.data() + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            const T* brow = b.data.data() + p * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

// c = a . b^T
template <typename T>
Tensor<T> gemm_nt(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[1]) {
        throw DimensionError("gemm_nt shape mismatch: " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    }
    const std::int64_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
    Tensor<T> c({m, n});
    for (std::int64_t i = 0; i < m; ++i) {
        const T* arow = a.data.data() + i * k;
        for (std::int64_t j = 0; j < n; ++j) {
            const T* brow = b.data.data() + j * k;
            T acc = T(0);
            for (std::int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            c.data[static_cast<std::size_t>(i * n + j)] = acc;
        }
    }
    return c;
}

// c = a^T . b
template <typename T>
Tensor<T> gemm_tn(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[0] != b.shape[0]) {
        throw DimensionError("gemm_tn shape mismatch: " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    }
    const std::int64_t m = a.shape[1], k = a.shape[0], n = b.shape[1];
    Tensor<T> c({m, n});
    for (std::int64_t p = 0; p < k; ++p) {
        const T* arow = a.data.data() + p * m;
        const T* brow = b.data.data() + p * n;
        for (std::int64_t i = 0; i < m; ++i) {
            const T av = arow[i];
            if (av == T(0)) continue;
            T* crow = c.data.data() + i * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
    if (a.rank() != 2) throw DimensionError("transpose requires rank-2, got " + shape_str(a.shape));
    Tensor<T> out({a.shape[1], a.shape[0]});
    for (std::int64_t i = 0; i < a.shape[0]; ++i)
        for (std::int64_t j = 0; j < a.shape[1]; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

// ---------------------------------------------------------------------------
// Serialization: one-line JSON header {"dtype","order","shape"} followed by
// the raw IEEE-754 payload. Little-endian only; asserted at compile time.
// ---------------------------------------------------------------------------

static_assert(std::endian::native == std::endian::little,
              "tensor serialization assumes a little-endian host");

template <typename T>
constexpr const char* dtype_name() {
    if constexpr (std::is_same_v<T, float>) {
        return "f32";
    } else {
        static_assert(std::is_same_v<T, double>, "unsupported scalar type");
        return "f64";
    }
}

template <typename T>
void save_tensor(std::ostream& out, const Tensor<T>& t) {
    std::string header = "{\"dtype\":\"";
    header += dtype_name<T>();
    header += "\",\"order\":\"little\",\"shape\":[";
    for (std::size_t i = 0; i < t.shape.size(); ++i) {
        if (i) header += ",";
        header += std::to_string(t.shape[i]);
    }
    header += "]}\n";
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(T)));
    if (!out) throw IoError("failed to write tensor payload");
}

// Reads the header line and returns (dtype, shape) without consuming payload.
struct TensorBlockHeader {
    std::string dtype;
    Shape shape;
};

TensorBlockHeader read_tensor_header(std::istream& in);

template <typename T>
Tensor<T> load_tensor(std::istream& in) {
    TensorBlockHeader h = read_tensor_header(in);
    if (h.dtype != dtype_name<T>()) {
        throw IoError("tensor dtype mismatch: file has " + h.dtype + ", caller expects " +
                      dtype_name<T>());
    }
    Tensor<T> t(h.shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(T)));
    if (!in) throw IoError("truncated tensor payload");
    return t;
}

}  // namespace reeflora
