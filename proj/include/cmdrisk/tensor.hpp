#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace cmdrisk {

// Dense row-major matrix. Weight matrices are stored (in_dim x out_dim) so
// the forward product Y = X * W keeps unit-stride inner loops.
template <typename T>
struct Mat {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<T> v;

    Mat() = default;
    Mat(size_t r, size_t c) : rows(r), cols(c), v(r * c, T(0)) {}

    T* row(size_t r) { return v.data() + r * cols; }
    const T* row(size_t r) const { return v.data() + r * cols; }
    T& at(size_t r, size_t c) { return v[r * cols + c]; }
    T at(size_t r, size_t c) const { return v[r * cols + c]; }
    size_t size() const { return v.size(); }
    void zero() { std::fill(v.begin(), v.end(), T(0)); }
};

// C = A (m x k) * B (k x n). Accumulates nothing; overwrites C.
template <typename T>
void matmul_nn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
    assert(a.cols == b.rows);
    c.rows = a.rows;
    c.cols = b.cols;
    c.v.assign(a.rows * b.cols, T(0));
    for (size_t i = 0; i < a.rows; ++i) {
        const T* arow = a.row(i);
        T* crow = c.row(i);
        for (size_t k = 0; k < a.cols; ++k) {
            T s = arow[k];
            if (s == T(0)) continue;
            const T* brow = b.row(k);
            for (size_t j = 0; j < b.cols; ++j) crow[j] += s * brow[j];
        }
    }
}

// C = A (m x k) * B^T (n x k -> k x n).
template <typename T>
void matmul_nt(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
    assert(a.cols == b.cols);
    c.rows = a.rows;
    c.cols = b.rows;
    c.v.assign(a.rows * b.rows, T(0));
    for (size_t i = 0; i < a.rows; ++i) {
        const T* arow = a.row(i);
        T* crow = c.row(i);
        for (size_t j = 0; j < b.rows; ++j) {
            const T* brow = b.row(j);
            T s = T(0);
            for (size_t k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
            crow[j] = s;
        }
    }
}

// C += A^T (m x k -> k x m) * B (m x n). Used for weight gradients.
template <typename T>
void matmul_tn_acc(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
    assert(a.rows == b.rows);
    assert(c.rows == a.cols && c.cols == b.cols);
    for (size_t t = 0; t < a.rows; ++t) {
        const T* arow = a.row(t);
        const T* brow = b.row(t);
        for (size_t k = 0; k < a.cols; ++k) {
            T s = arow[k];
            if (s == T(0)) continue;
            T* crow = c.row(k);
            for (size_t j = 0; j < b.cols; ++j) crow[j] += s * brow[j];
        }
    }
}

}  // namespace cmdrisk
